//! Coarse-to-fine Horn–Schunck estimator with image warping.
//!
//! At every pyramid level the target is warped toward the reference by the
//! current flow, the brightness-constancy constraint is linearized around
//! that flow, and a fixed number of Jacobi sweeps solves for the increment
//! under the smoothness penalty on the total flow.

use super::{FlowField, FlowParams};
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Intensity scale applied before estimation; `smoothness_weight` is
/// expressed relative to 8-bit intensities.
const INTENSITY_SCALE: f64 = 255.0;

/// Smallest side allowed at the coarsest pyramid level.
const MIN_LEVEL_SIDE: usize = 4;

pub fn estimate_flow(reference: &GrayImage, target: &GrayImage, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if !reference.same_size(target) {
        return Err(Error::InvalidArgument(format!(
            "flow frames differ in size: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            target.width(),
            target.height()
        )));
    }
    let (w, h) = (reference.width(), reference.height());
    let coarsest = w.min(h) >> (params.pyramid_levels - 1);
    if w < 8 || h < 8 || coarsest < MIN_LEVEL_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            levels: params.pyramid_levels,
        });
    }

    let scale = |img: &GrayImage| {
        GrayImage::from_fn(img.width(), img.height(), |x, y| img.get(x, y) * INTENSITY_SCALE)
    };
    let mut ref_pyr = vec![scale(reference)];
    let mut tgt_pyr = vec![scale(target)];
    for _ in 1..params.pyramid_levels {
        let r = ref_pyr.last().unwrap().downsample();
        let t = tgt_pyr.last().unwrap().downsample();
        ref_pyr.push(r);
        tgt_pyr.push(t);
    }

    let coarse = ref_pyr.last().unwrap();
    let mut u = vec![0.0; coarse.width() * coarse.height()];
    let mut v = u.clone();
    let mut cur_w = coarse.width();
    let mut cur_h = coarse.height();

    for level in (0..params.pyramid_levels).rev() {
        let (r, t) = (&ref_pyr[level], &tgt_pyr[level]);
        if r.width() != cur_w || r.height() != cur_h {
            u = upsample(&u, cur_w, cur_h, r.width(), r.height());
            v = upsample(&v, cur_w, cur_h, r.width(), r.height());
            let (sx, sy) = (r.width() as f64 / cur_w as f64, r.height() as f64 / cur_h as f64);
            u.iter_mut().for_each(|x| *x *= sx);
            v.iter_mut().for_each(|x| *x *= sy);
            cur_w = r.width();
            cur_h = r.height();
        }
        for _ in 0..params.warps {
            refine(r, t, &mut u, &mut v, params);
        }
    }

    FlowField::new(w, h, u, v)
}

fn upsample(f: &[f64], w: usize, h: usize, new_w: usize, new_h: usize) -> Vec<f64> {
    let img = GrayImage::new(w, h, f.to_vec()).expect("flow component is finite");
    img.resize(new_w, new_h).data().to_vec()
}

/// One warp-and-linearize step followed by Jacobi sweeps.
fn refine(reference: &GrayImage, target: &GrayImage, u: &mut [f64], v: &mut [f64], params: &FlowParams) {
    let (w, h) = (reference.width(), reference.height());
    let warped = GrayImage::from_fn(w, h, |x, y| {
        let i = y * w + x;
        target.sample(x as f64 + u[i], y as f64 + v[i])
    });

    let n = w * h;
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut it = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let i = y * w + x;
            let gx = |img: &GrayImage| 0.5 * (img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi));
            let gy = |img: &GrayImage| 0.5 * (img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1));
            ix[i] = 0.5 * (gx(reference) + gx(&warped));
            iy[i] = 0.5 * (gy(reference) + gy(&warped));
            it[i] = warped.get(x, y) - reference.get(x, y);
        }
    }

    let alpha2 = params.smoothness_weight * params.smoothness_weight;
    let u0 = u.to_vec();
    let v0 = v.to_vec();
    let mut next_u = u.to_vec();
    let mut next_v = v.to_vec();
    for _ in 0..params.iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let ubar = neighbor_mean(u, w, h, x, y);
                let vbar = neighbor_mean(v, w, h, x, y);
                let a = ubar - u0[i];
                let b = vbar - v0[i];
                let t = (ix[i] * a + iy[i] * b + it[i]) / (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
                next_u[i] = u0[i] + a - ix[i] * t;
                next_v[i] = v0[i] + b - iy[i] * t;
            }
        }
        u.copy_from_slice(&next_u);
        v.copy_from_slice(&next_v);
    }
}

/// Horn–Schunck weighted neighborhood average: 1/6 for edge neighbors,
/// 1/12 for diagonals, with border replication.
fn neighbor_mean(f: &[f64], w: usize, h: usize, x: usize, y: usize) -> f64 {
    let at = |dx: isize, dy: isize| {
        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
        f[yy * w + xx]
    };
    (at(-1, 0) + at(1, 0) + at(0, -1) + at(0, 1)) / 6.0
        + (at(-1, -1) + at(1, -1) + at(-1, 1) + at(1, 1)) / 12.0
}
