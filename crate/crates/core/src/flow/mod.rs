//! Dense optical flow, onset-anchored long-term flow, and flow rendering.

mod colorize;
mod estimate;
mod io;

pub use colorize::{colorize_flow, hsv_to_rgb, MaxMagnitude};
pub use estimate::estimate_flow;
pub use io::{read_flow, write_flow, FLOW_MAGIC};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::Tensor;

/// Per-pixel displacement from a reference frame to a target frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || u.len() != width * height || v.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "flow field {width}x{height} with {} / {} components",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("flow field".into()));
        }
        Ok(FlowField { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.u.iter().zip(&self.v).map(|(u, v)| u.hypot(*v))
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes().fold(0.0, f64::max)
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.magnitudes().sum::<f64>() / self.u.len() as f64
    }

    /// Mean `(u, v)` over pixels at least `margin` away from every border.
    pub fn interior_mean(&self, margin: usize) -> (f64, f64) {
        let mut su = 0.0;
        let mut sv = 0.0;
        let mut n = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let (u, v) = self.at(x, y);
                su += u;
                sv += v;
                n += 1;
            }
        }
        if n == 0 {
            return (0.0, 0.0);
        }
        (su / n as f64, sv / n as f64)
    }

    /// Scales both components by `s`.
    pub fn scaled(&self, s: f64) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|x| x * s).collect(),
            v: self.v.iter().map(|x| x * s).collect(),
        }
    }

    /// Bilinear resize; displacements are rescaled with the axes.
    pub fn resize(&self, width: usize, height: usize) -> FlowField {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let comp = |c: &[f64], s: f64| {
            GrayImage::new(self.width, self.height, c.to_vec())
                .expect("finite flow")
                .resize(width, height)
                .data()
                .iter()
                .map(|x| x * s)
                .collect()
        };
        FlowField {
            width,
            height,
            u: comp(&self.u, width as f64 / self.width as f64),
            v: comp(&self.v, height as f64 / self.height as f64),
        }
    }

    /// Two-channel `H×W×2` tensor of `(u, v) / scale`.
    pub fn to_tensor(&self, scale: f64) -> Result<Tensor> {
        if scale.is_nan() || scale <= 0.0 {
            return Err(Error::InvalidArgument(format!("flow scale must be positive, got {scale}")));
        }
        let data = self
            .u
            .iter()
            .zip(&self.v)
            .flat_map(|(u, v)| [u / scale, v / scale])
            .collect();
        Tensor::new(vec![self.height, self.width, 2], data)
    }
}

/// Settings for [`estimate_flow`].
#[derive(Clone, Debug, PartialEq)]
pub struct FlowParams {
    /// Horn–Schunck α on 8-bit intensity scale.
    pub smoothness_weight: f64,
    /// Jacobi sweeps per warp.
    pub iterations: usize,
    pub pyramid_levels: usize,
    /// Warp/relinearize rounds per pyramid level.
    pub warps: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            smoothness_weight: 15.0,
            iterations: 100,
            pyramid_levels: 3,
            warps: 2,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness_weight > 0.0 && self.smoothness_weight.is_finite()) {
            return Err(Error::InvalidArgument("smoothness_weight must be positive".into()));
        }
        if self.iterations == 0 || self.pyramid_levels == 0 || self.warps == 0 {
            return Err(Error::InvalidArgument(
                "iterations, pyramid_levels and warps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Flow from `frames[onset_index]` to every frame, in frame order.
///
/// The onset entry is the zero field; the estimator is not run for it.
pub fn long_term_flow(frames: &[GrayImage], onset_index: usize, params: &FlowParams) -> Result<Vec<FlowField>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("long-term flow needs at least one frame".into()));
    }
    let onset = frames.get(onset_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "onset index {onset_index} out of range for {} frames",
            frames.len()
        ))
    })?;
    frames
        .par_iter()
        .enumerate()
        .map(|(t, frame)| {
            if t == onset_index {
                Ok(FlowField::zeros(onset.width(), onset.height()))
            } else {
                estimate_flow(onset, frame, params)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smooth textured pattern evaluated at real coordinates.
    fn pattern(x: f64, y: f64) -> f64 {
        0.5 + 0.2 * (x * 0.39 + 0.3).sin() * (y * 0.31 - 0.2).cos()
            + 0.15 * ((x + y) * 0.23).sin()
            + 0.1 * (x * 0.11 - y * 0.27 + 1.0).cos()
    }

    fn shifted(side: usize, dx: f64, dy: f64) -> GrayImage {
        GrayImage::from_fn(side, side, |x, y| pattern(x as f64 - dx, y as f64 - dy))
    }

    /// Gaussian blob on a flat background, displaced by `dx` px.
    fn blob(side: usize, cx: f64, cy: f64) -> GrayImage {
        GrayImage::from_fn(side, side, |x, y| {
            let (ddx, ddy) = (x as f64 - cx, y as f64 - cy);
            0.2 + 0.6 * (-(ddx * ddx + ddy * ddy) / (2.0 * 3.0 * 3.0)).exp()
        })
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let img = shifted(32, 0.0, 0.0);
        let f = estimate_flow(&img, &img, &FlowParams::default()).unwrap();
        assert!(f.max_magnitude() <= 1e-6);
    }

    #[test]
    fn recovers_translations() {
        let reference = shifted(48, 0.0, 0.0);
        for (dx, dy) in [(2.0, 0.0), (0.0, 1.0), (1.0, 1.0), (-1.5, 0.5), (0.0, -2.0)] {
            let target = shifted(48, dx, dy);
            let f = estimate_flow(&reference, &target, &FlowParams::default()).unwrap();
            let (mu, mv) = f.interior_mean(8);
            assert!(
                (mu - dx).abs() < 0.5 && (mv - dy).abs() < 0.5,
                "shift ({dx},{dy}) estimated ({mu},{mv})"
            );
        }
    }

    #[test]
    fn is_bitwise_deterministic() {
        let a = shifted(32, 0.0, 0.0);
        let b = shifted(32, 1.3, -0.4);
        let p = FlowParams::default();
        assert_eq!(estimate_flow(&a, &b, &p).unwrap(), estimate_flow(&a, &b, &p).unwrap());
    }

    #[test]
    fn input_validation() {
        let a = shifted(32, 0.0, 0.0);
        let b = shifted(16, 0.0, 0.0);
        assert!(matches!(estimate_flow(&a, &b, &FlowParams::default()), Err(Error::InvalidArgument(_))));
        let tiny = shifted(8, 0.0, 0.0);
        assert!(matches!(
            estimate_flow(&tiny, &tiny, &FlowParams::default()),
            Err(Error::ImageTooSmall { .. })
        ));
        let one_level = FlowParams {
            pyramid_levels: 1,
            ..FlowParams::default()
        };
        assert!(estimate_flow(&tiny, &tiny, &one_level).is_ok());
        let bad = FlowParams {
            iterations: 0,
            ..FlowParams::default()
        };
        assert!(estimate_flow(&a, &a, &bad).is_err());
    }

    #[test]
    fn long_term_flow_static_sequence_is_zero() {
        let frames = vec![shifted(32, 0.0, 0.0); 4];
        let fields = long_term_flow(&frames, 1, &FlowParams::default()).unwrap();
        assert_eq!(fields.len(), 4);
        assert!(fields.iter().all(|f| f.max_magnitude() <= 1e-6));
        assert!(long_term_flow(&frames, 4, &FlowParams::default()).is_err());
        assert!(long_term_flow(&[], 0, &FlowParams::default()).is_err());
    }

    #[test]
    fn onset_field_is_exactly_zero() {
        let frames = vec![blob(32, 10.0, 16.0), blob(32, 12.0, 16.0)];
        let fields = long_term_flow(&frames, 1, &FlowParams::default()).unwrap();
        assert_eq!(fields[1], FlowField::zeros(32, 32));
        assert!(fields[0].max_magnitude() > 0.1);
    }

    #[test]
    fn ramp_sequence_peaks_at_apex() {
        let displacements = [0.0, 1.0, 2.0, 3.0, 2.0, 1.0];
        let frames: Vec<_> = displacements.iter().map(|d| blob(32, 14.0 + d, 16.0)).collect();
        let fields = long_term_flow(&frames, 0, &FlowParams::default()).unwrap();
        let mags: Vec<f64> = fields.iter().map(FlowField::mean_magnitude).collect();
        for t in 1..=3 {
            assert!(mags[t] >= mags[t - 1], "{mags:?}");
        }
        for t in 4..mags.len() {
            assert!(mags[t] <= mags[t - 1], "{mags:?}");
        }
        let argmax = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert_eq!(argmax, 3);
    }

    #[test]
    fn two_channel_tensor_layout() {
        let f = FlowField::new(2, 1, vec![1.0, 2.0], vec![-1.0, 0.5]).unwrap();
        let t = f.to_tensor(2.0).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.5, -0.5, 1.0, 0.25]);
    }
}
