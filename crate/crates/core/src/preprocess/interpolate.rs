//! Apex-prioritized temporal interpolation.

use crate::error::{Error, Result};
use crate::flow::{estimate_flow, FlowParams};
use crate::image::GrayImage;

/// Fractional timestamps to synthesize, in generation order.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationPlan {
    pub timestamps: Vec<f64>,
    /// Number of timestamps emitted by each pass, in order.
    pub pass_sizes: Vec<usize>,
    pub target_count: usize,
}

/// Builds the interpolation queue for a clip with the given key frames.
///
/// Each pass walks outward from the apex over the gaps of the current
/// (possibly already densified) timeline, alternating left and right:
/// `a−½, a+½, a−1½, a+1½, …`, one side stopping at the onset and the other
/// at the offset. Passes repeat on the densified timeline until
/// `target_count` timestamps exist; the last pass is truncated.
pub fn build_interpolation_queue(onset: usize, apex: usize, offset: usize, target_count: usize) -> Result<InterpolationPlan> {
    if !(onset <= apex && apex <= offset) {
        return Err(Error::InvalidArgument(format!(
            "expected onset <= apex <= offset, got {onset}, {apex}, {offset}"
        )));
    }
    let mut timeline: Vec<f64> = (onset..=offset).map(|i| i as f64).collect();
    let apex_t = apex as f64;
    let mut timestamps = Vec::new();
    let mut pass_sizes = Vec::new();

    while timestamps.len() < target_count && timeline.len() > 1 {
        let k = timeline.iter().position(|&t| t == apex_t).expect("apex on timeline");
        let mut pass = Vec::new();
        let (mut left, mut right) = (k, k);
        while left > 0 || right + 1 < timeline.len() {
            if left > 0 {
                pass.push(0.5 * (timeline[left - 1] + timeline[left]));
                left -= 1;
            }
            if right + 1 < timeline.len() {
                pass.push(0.5 * (timeline[right] + timeline[right + 1]));
                right += 1;
            }
        }
        pass.truncate(target_count - timestamps.len());
        pass_sizes.push(pass.len());
        timestamps.extend_from_slice(&pass);
        timeline.extend(pass);
        timeline.sort_by(f64::total_cmp);
    }

    Ok(InterpolationPlan {
        timestamps,
        pass_sizes,
        target_count,
    })
}

/// Midpoint synthesis strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MidpointMode {
    /// Pixelwise average.
    Blend,
    /// Warp both frames halfway along the estimated flow, then average.
    FlowWarp,
}

/// Synthesizes the frame halfway between `left` and `right`.
pub fn interpolate_midpoint(left: &GrayImage, right: &GrayImage, mode: MidpointMode, params: &FlowParams) -> Result<GrayImage> {
    if !left.same_size(right) {
        return Err(Error::InvalidArgument(format!(
            "interpolation frames differ in size: {}x{} vs {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    match mode {
        MidpointMode::Blend => Ok(GrayImage::from_fn(left.width(), left.height(), |x, y| {
            0.5 * (left.get(x, y) + right.get(x, y))
        })),
        MidpointMode::FlowWarp => {
            let flow = estimate_flow(left, right, params)?;
            Ok(GrayImage::from_fn(left.width(), left.height(), |x, y| {
                let (u, v) = flow.at(x, y);
                let (fx, fy) = (x as f64, y as f64);
                0.5 * (left.sample(fx - 0.5 * u, fy - 0.5 * v) + right.sample(fx + 0.5 * u, fy + 0.5 * v))
            }))
        }
    }
}

/// A frame on the (possibly fractional) clip timeline.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedFrame {
    pub time: f64,
    pub image: GrayImage,
}

/// Densifies `frames` (consecutive frames starting at time `first_index`)
/// by synthesizing every timestamp of `plan` in queue order. Each new frame
/// is the midpoint of its current neighbors on the timeline.
pub fn apply_plan(
    frames: &[GrayImage],
    first_index: usize,
    plan: &InterpolationPlan,
    mode: MidpointMode,
    params: &FlowParams,
) -> Result<Vec<TimedFrame>> {
    let mut timeline: Vec<TimedFrame> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| TimedFrame {
            time: (first_index + i) as f64,
            image: f.clone(),
        })
        .collect();
    for &t in &plan.timestamps {
        let pos = timeline.partition_point(|f| f.time < t);
        if pos == 0 || pos >= timeline.len() || timeline[pos].time == t {
            return Err(Error::InvalidArgument(format!(
                "timestamp {t} is not strictly inside the clip"
            )));
        }
        let image = interpolate_midpoint(&timeline[pos - 1].image, &timeline[pos].image, mode, params)?;
        timeline.insert(pos, TimedFrame { time: t, image });
    }
    Ok(timeline)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_pass_alternates_around_apex() {
        let plan = build_interpolation_queue(0, 3, 5, 5).unwrap();
        assert_eq!(plan.timestamps, vec![2.5, 3.5, 1.5, 4.5, 0.5]);
        assert_eq!(plan.pass_sizes, vec![5]);
    }

    #[test]
    fn apex_at_onset() {
        let plan = build_interpolation_queue(0, 0, 2, 2).unwrap();
        assert_eq!(plan.timestamps, vec![0.5, 1.5]);
    }

    #[test]
    fn second_pass_on_densified_timeline() {
        let plan = build_interpolation_queue(0, 1, 2, 5).unwrap();
        assert_eq!(plan.timestamps, vec![0.5, 1.5, 0.75, 1.25, 0.25]);
        assert_eq!(plan.pass_sizes, vec![2, 3]);
    }

    #[test]
    fn zero_target_and_single_frame() {
        assert!(build_interpolation_queue(0, 3, 5, 0).unwrap().timestamps.is_empty());
        assert!(build_interpolation_queue(4, 4, 4, 10).unwrap().timestamps.is_empty());
        assert!(build_interpolation_queue(3, 2, 5, 1).is_err());
        assert!(build_interpolation_queue(0, 6, 5, 1).is_err());
    }

    #[test]
    fn passes_are_apex_ordered_and_unique() {
        for (o, a, f, n) in [(0, 3, 9, 40), (2, 2, 7, 25), (0, 5, 5, 30), (1, 4, 6, 13)] {
            let plan = build_interpolation_queue(o, a, f, n).unwrap();
            assert_eq!(plan.timestamps.len(), n);
            let mut start = 0;
            for &size in &plan.pass_sizes {
                let pass = &plan.timestamps[start..start + size];
                for w in pass.windows(2) {
                    assert!((w[1] - a as f64).abs() >= (w[0] - a as f64).abs(), "{pass:?}");
                }
                start += size;
            }
            let mut sorted = plan.timestamps.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            assert_eq!(sorted.len(), n);
            assert!(plan.timestamps.iter().all(|&t| t > o as f64 && t < f as f64));
        }
    }

    fn blob(cx: f64) -> GrayImage {
        GrayImage::from_fn(32, 32, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - 16.0);
            0.1 + 0.8 * (-(dx * dx + dy * dy) / 18.0).exp()
        })
    }

    fn centroid_x(img: &GrayImage) -> f64 {
        let (mut s, mut w) = (0.0, 0.0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let m = (img.get(x, y) - 0.1).max(0.0);
                s += m * x as f64;
                w += m;
            }
        }
        s / w
    }

    #[test]
    fn midpoint_modes() {
        let p = FlowParams::default();
        let a = blob(15.0);
        for mode in [MidpointMode::Blend, MidpointMode::FlowWarp] {
            assert_eq!(interpolate_midpoint(&a, &a, mode, &p).unwrap(), a);
        }
        let black = GrayImage::filled(8, 8, 0.0);
        let white = GrayImage::filled(8, 8, 1.0);
        let mid = interpolate_midpoint(&black, &white, MidpointMode::Blend, &p).unwrap();
        assert!(mid.data().iter().all(|&v| v == 0.5));
        let warped = interpolate_midpoint(&blob(14.0), &blob(16.0), MidpointMode::FlowWarp, &p).unwrap();
        assert!((centroid_x(&warped) - 15.0).abs() < 0.5);
        assert!(interpolate_midpoint(&black, &a, MidpointMode::Blend, &p).is_err());
    }

    #[test]
    fn plan_application_orders_frames() {
        let frames: Vec<_> = (0..3).map(|i| GrayImage::filled(4, 4, i as f64)).collect();
        let plan = build_interpolation_queue(0, 1, 2, 5).unwrap();
        let seq = apply_plan(&frames, 0, &plan, MidpointMode::Blend, &FlowParams::default()).unwrap();
        let times: Vec<f64> = seq.iter().map(|f| f.time).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0]);
        for f in &seq {
            assert!((f.image.get(0, 0) - f.time).abs() < 1e-12);
        }
    }
}
