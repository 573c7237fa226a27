//! Clip preprocessing: frames on disk to model input.
//!
//! Per sample: load frames `onset..=offset`, align every frame to the
//! onset landmarks and crop with the apex landmarks (or just resize when
//! no landmarks are given), densify toward the dataset's mean length,
//! select `F` frames around the apex, then compute long-term flow of each
//! selected frame against the onset frame. Flow fields are rendered into
//! the model's patch matrices by [`flows_to_input`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{Dataset, Manifest, SampleRecord};
use crate::encoder::patchify;
use crate::error::{Error, Result};
use crate::flow::{colorize_flow, estimate_flow, read_flow, write_flow, FlowField, FlowParams, MaxMagnitude};
use crate::image::{GrayImage, RgbImage};
use crate::model::ClipInput;
use crate::numerics::Tensor;
use crate::preprocess::{align_rigid, apply_plan, build_interpolation_queue, crop_square, select_frames, LandmarkSet, MidpointMode};

/// How flow is presented to the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    /// Color-wheel rendering, 3 channels mapped from `[0, 255]` to
    /// `[-1, 1]`.
    Color,
    /// Raw `(u, v)`, 2 channels.
    Raw,
}

impl InputFormat {
    pub fn channels(self) -> usize {
        match self {
            InputFormat::Color => 3,
            InputFormat::Raw => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InputFormat::Color => "color",
            InputFormat::Raw => "raw",
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "color" | "colour" => Ok(InputFormat::Color),
            "raw" => Ok(InputFormat::Raw),
            _ => Err(Error::Config(format!("unknown input format {s:?} (expected color or raw)"))),
        }
    }
}

/// Magnitude that maps to full saturation (or unit raw value).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowScale {
    /// Largest magnitude over the clip's selected frames, so the ramp
    /// toward the apex survives normalization.
    Clip,
    Fixed(f64),
}

impl FromStr for FlowScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("clip") {
            return Ok(FlowScale::Clip);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(FlowScale::Fixed(v)),
            _ => Err(Error::Config(format!("flow scale must be \"clip\" or a positive number, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for FlowScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowScale::Clip => f.write_str("clip"),
            FlowScale::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    /// Frames per clip fed to the model (odd).
    pub frames: usize,
    /// Side of the aligned face crop (or resized frame) used for flow.
    pub work_side: usize,
    /// Side of the encoder input.
    pub image_side: usize,
    pub flow: FlowParams,
    pub midpoint: MidpointMode,
    pub interpolate: bool,
    pub input: InputFormat,
    pub scale: FlowScale,
}

impl PreprocessConfig {
    pub fn desk() -> Self {
        PreprocessConfig {
            frames: 5,
            work_side: 32,
            image_side: 32,
            flow: FlowParams::default(),
            midpoint: MidpointMode::Blend,
            interpolate: true,
            input: InputFormat::Color,
            scale: FlowScale::Clip,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_multiple_of(2) {
            return Err(Error::Config(format!("frames must be odd, got {}", self.frames)));
        }
        if self.work_side < 8 || self.image_side == 0 {
            return Err(Error::Config("work_side must be >= 8 and image_side positive".into()));
        }
        self.flow.validate()
    }
}

/// Rounded mean frame count of each dataset, the interpolation target.
pub fn interpolation_targets(manifest: &Manifest) -> BTreeMap<Dataset, usize> {
    manifest
        .mean_frame_counts()
        .into_iter()
        .map(|(d, m)| (d, m.round() as usize))
        .collect()
}

fn sample_err(r: &SampleRecord, e: Error) -> Error {
    match e {
        e @ Error::Sample { .. } => e,
        e => Error::Sample {
            sample_id: r.sample_id.clone(),
            detail: e.to_string(),
        },
    }
}

/// Loads, aligns and crops the frames `onset..=offset` of a record.
pub fn load_clip_frames(record: &SampleRecord, work_side: usize) -> Result<Vec<GrayImage>> {
    let paths = record.frame_paths()?;
    let frames = paths
        .iter()
        .map(|p| GrayImage::load(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = frames.first() {
        if let Some(bad) = frames.iter().position(|f| !f.same_size(first)) {
            return Err(Error::Sample {
                sample_id: record.sample_id.clone(),
                detail: format!("frame {} differs in size from the onset frame", paths[bad].display()),
            });
        }
    }
    let Some(landmark_paths) = record.landmark_paths()? else {
        return Ok(frames.iter().map(|f| f.resize(work_side, work_side)).collect());
    };
    let marks = landmark_paths
        .iter()
        .map(|p| LandmarkSet::load(p))
        .collect::<Result<Vec<_>>>()?;
    let reference = &marks[0];
    let crop = crop_square(&marks[record.apex - record.onset])?;
    frames
        .iter()
        .zip(&marks)
        .map(|(frame, lm)| {
            let t = align_rigid(lm, reference)?;
            Ok(crop.apply(&t.warp_image(frame), work_side))
        })
        .collect()
}

/// Long-term flow of the `F` selected frames of one clip, at work size.
///
/// `target` is the interpolation target frame count for the clip's
/// dataset; clips already at or above it are not densified.
pub fn clip_flows(frames: &[GrayImage], record: &SampleRecord, target: usize, cfg: &PreprocessConfig) -> Result<Vec<FlowField>> {
    let len = record.frame_count();
    let add = if cfg.interpolate { target.saturating_sub(len) } else { 0 };
    let plan = build_interpolation_queue(record.onset, record.apex, record.offset, add)?;
    let timeline = apply_plan(frames, record.onset, &plan, cfg.midpoint, &cfg.flow)?;
    let apex = timeline
        .iter()
        .position(|f| f.time == record.apex as f64)
        .expect("apex stays on the timeline");
    let picked = select_frames(timeline.len(), apex, cfg.frames);
    let onset = &timeline[0].image;
    let mut unique = picked.clone();
    unique.dedup();
    let fields: BTreeMap<usize, FlowField> = unique
        .par_iter()
        .map(|&i| {
            let f = if i == 0 {
                FlowField::zeros(onset.width(), onset.height())
            } else {
                estimate_flow(onset, &timeline[i].image, &cfg.flow)?
            };
            Ok((i, f))
        })
        .collect::<Result<_>>()?;
    Ok(picked.iter().map(|i| fields[i].clone()).collect())
}

/// Runs [`load_clip_frames`] and [`clip_flows`] for a record.
pub fn preprocess_record(record: &SampleRecord, target: usize, cfg: &PreprocessConfig) -> Result<Vec<FlowField>> {
    cfg.validate()?;
    load_clip_frames(record, cfg.work_side)
        .and_then(|frames| clip_flows(&frames, record, target, cfg))
        .map_err(|e| sample_err(record, e))
}

/// Flows for every record, in manifest order.
pub fn preprocess_manifest(manifest: &Manifest, cfg: &PreprocessConfig) -> Result<Vec<Vec<FlowField>>> {
    let targets = interpolation_targets(manifest);
    manifest
        .records
        .par_iter()
        .map(|r| preprocess_record(r, targets[&r.dataset], cfg))
        .collect()
}

fn flow_scale(flows: &[FlowField], scale: FlowScale) -> f64 {
    match scale {
        FlowScale::Fixed(v) => v,
        FlowScale::Clip => match flows.iter().map(FlowField::max_magnitude).fold(0.0, f64::max) {
            m if m > 0.0 => m,
            _ => 1.0,
        },
    }
}

/// Color renderings of a clip's flows, sharing one saturation scale.
pub fn render_flows(flows: &[FlowField], scale: FlowScale, side: usize) -> Result<Vec<RgbImage>> {
    let s = flow_scale(flows, scale);
    flows
        .iter()
        .map(|f| colorize_flow(&f.resize(side, side), MaxMagnitude::Fixed(s * side as f64 / f.width() as f64)))
        .collect()
}

fn rgb_tensor(img: &RgbImage) -> Result<Tensor> {
    Tensor::new(
        vec![img.height, img.width, 3],
        img.data.iter().map(|&b| b as f64 / 127.5 - 1.0).collect(),
    )
}

/// Encoder input for a clip: one `N × P²C` patch matrix per frame.
pub fn flows_to_input(flows: &[FlowField], cfg: &PreprocessConfig, patch: usize) -> Result<ClipInput> {
    let side = cfg.image_side;
    let frames = match cfg.input {
        InputFormat::Color => render_flows(flows, cfg.scale, side)?
            .iter()
            .map(|img| patchify(&rgb_tensor(img)?, patch))
            .collect::<Result<Vec<_>>>()?,
        InputFormat::Raw => {
            let s = flow_scale(flows, cfg.scale);
            flows
                .iter()
                .map(|f| {
                    let r = f.resize(side, side);
                    patchify(&r.to_tensor(s * side as f64 / f.width() as f64)?, patch)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(ClipInput { frames })
}

/// Directory holding a sample's cached flow files.
pub fn sample_dir(root: &Path, sample_id: &str) -> PathBuf {
    root.join(sample_id)
}

pub fn flow_file(root: &Path, sample_id: &str, k: usize) -> PathBuf {
    sample_dir(root, sample_id).join(format!("flow_{k:02}.slfl"))
}

/// Writes `flow_KK.slfl` files (and `flow_KK.png` renderings when
/// `png_side` is given) under `root/<sample_id>/`.
pub fn write_clip_flows(root: &Path, sample_id: &str, flows: &[FlowField], png: Option<(FlowScale, usize)>) -> Result<()> {
    let dir = sample_dir(root, sample_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (k, f) in flows.iter().enumerate() {
        write_flow(&flow_file(root, sample_id, k), f)?;
    }
    if let Some((scale, side)) = png {
        for (k, img) in render_flows(flows, scale, side)?.iter().enumerate() {
            img.save(&dir.join(format!("flow_{k:02}.png")))?;
        }
    }
    Ok(())
}

/// Reads the `frames` cached flow files of a sample.
pub fn read_clip_flows(root: &Path, sample_id: &str, frames: usize) -> Result<Vec<FlowField>> {
    (0..frames)
        .map(|k| read_flow(&flow_file(root, sample_id, k)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Sample {
            sample_id: sample_id.to_string(),
            detail: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_generate, SynthSpec};

    fn spec(peak: f64) -> SynthSpec {
        SynthSpec {
            seed: 1,
            subjects: 1,
            samples_per_subject: 2,
            directions: vec![0.0, 90.0],
            image_side: 32,
            frames: 5,
            peak_displacement: peak,
            noise_std: 0.0,
        }
    }

    #[test]
    fn static_clip_has_zero_flow_and_white_input() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth_generate(&spec(0.0), dir.path()).unwrap();
        let cfg = PreprocessConfig::desk();
        let flows = preprocess_manifest(&m, &cfg).unwrap();
        assert!(flows.iter().flatten().all(|f| f.max_magnitude() <= 1e-6));
        let input = flows_to_input(&flows[0], &cfg, 8).unwrap();
        assert_eq!(input.frames.len(), 5);
        assert_eq!(input.frames[0].shape(), &[16, 192]);
        assert!(input.frames.iter().all(|t| t.data().iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn apex_frame_moves_most() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth_generate(&spec(3.0), dir.path()).unwrap();
        let flows = preprocess_manifest(&m, &PreprocessConfig::desk()).unwrap();
        let mags: Vec<f64> = flows[0].iter().map(FlowField::mean_magnitude).collect();
        assert_eq!(mags[0], 0.0);
        let best = mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(best, 2, "{mags:?}");
        // Class 1 moves down: positive v at the apex.
        let (_, v) = flows[1][2].interior_mean(0);
        assert!(v > 0.0);
    }

    #[test]
    fn interpolation_fills_short_clips() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth_generate(&spec(2.0), dir.path()).unwrap();
        let r = &m.records[0];
        let frames = load_clip_frames(r, 32).unwrap();
        let cfg = PreprocessConfig { frames: 9, ..PreprocessConfig::desk() };
        let flows = clip_flows(&frames, r, 9, &cfg).unwrap();
        // Nine distinct timestamps: no duplicated boundary frames.
        for w in flows.windows(2) {
            assert_ne!(w[0], w[1]);
        }
        let no_interp = PreprocessConfig { interpolate: false, ..cfg };
        let clamped = clip_flows(&frames, r, 9, &no_interp).unwrap();
        assert_eq!(clamped[0], clamped[1]);
    }

    #[test]
    fn raw_input_is_scaled_flow() {
        let f = FlowField::uniform(32, 32, 2.0, -1.0);
        let cfg = PreprocessConfig {
            input: InputFormat::Raw,
            image_side: 16,
            ..PreprocessConfig::desk()
        };
        let input = flows_to_input(&[FlowField::zeros(32, 32), f], &cfg, 8).unwrap();
        assert_eq!(input.frames[1].shape(), &[4, 128]);
        assert!((input.frames[1].data()[0] - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((input.frames[1].data()[1] + 1.0 / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let flows = vec![FlowField::zeros(8, 8), FlowField::uniform(8, 8, 0.5, 0.25)];
        write_clip_flows(dir.path(), "a", &flows, Some((FlowScale::Clip, 8))).unwrap();
        assert_eq!(read_clip_flows(dir.path(), "a", 2).unwrap(), flows);
        assert!(dir.path().join("a/flow_01.png").exists());
        let err = read_clip_flows(dir.path(), "a", 3).unwrap_err().to_string();
        assert!(err.contains("sample a"), "{err}");
    }

    #[test]
    fn parse_options() {
        assert_eq!("Raw".parse::<InputFormat>().unwrap(), InputFormat::Raw);
        assert_eq!("clip".parse::<FlowScale>().unwrap(), FlowScale::Clip);
        assert_eq!("2.5".parse::<FlowScale>().unwrap(), FlowScale::Fixed(2.5));
        assert!("0".parse::<FlowScale>().is_err());
        assert!(PreprocessConfig { frames: 4, ..PreprocessConfig::desk() }.validate().is_err());
    }
}
