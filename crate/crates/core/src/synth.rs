//! Synthetic micro-motion clips.
//!
//! Each clip is a smooth textured background (phase fixed per subject)
//! with a Gaussian blob translated along its class direction. The
//! displacement ramps linearly from 0 at the onset to the peak at the
//! apex (the middle frame) and back to 0 at the offset. Directions are in
//! degrees with 0° along +x and 90° along +y (image rows grow downward).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Manifest, SampleRecord};
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub subjects: usize,
    pub samples_per_subject: usize,
    /// Motion direction of each class, in degrees.
    pub directions: Vec<f64>,
    pub image_side: usize,
    pub frames: usize,
    pub peak_displacement: f64,
    pub noise_std: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.directions.len() < 2 {
            return Err(Error::Config("synthetic data needs at least 2 classes".into()));
        }
        if self.subjects == 0 || self.samples_per_subject == 0 {
            return Err(Error::Config("subjects and samples_per_subject must be positive".into()));
        }
        if self.image_side < 8 || self.frames < 2 {
            return Err(Error::Config("image_side must be >= 8 and frames >= 2".into()));
        }
        // Zero is allowed for static control clips; otherwise the motion
        // must be at least a pixel to be resolvable.
        let peak = self.peak_displacement;
        if !(peak == 0.0 || (peak >= 1.0 && peak.is_finite())) {
            return Err(Error::Config(format!("peak_displacement must be 0 or a finite value >= 1 px, got {peak}")));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise_std must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn apex(&self) -> usize {
        (self.frames - 1) / 2
    }

    pub fn class_name(k: usize) -> String {
        format!("class{k}")
    }
}

/// Displacement of each frame for a clip peaking at `apex`.
pub fn triangular_ramp(frames: usize, apex: usize, peak: f64) -> Vec<f64> {
    let last = frames.saturating_sub(1);
    (0..frames)
        .map(|t| {
            if t <= apex {
                if apex == 0 {
                    peak
                } else {
                    peak * t as f64 / apex as f64
                }
            } else {
                peak * (last - t) as f64 / (last - apex) as f64
            }
        })
        .collect()
}

/// Per-subject background texture phases.
fn subject_phases(seed: u64, subject: usize) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5u64.rotate_left(40));
    rng.set_stream(subject as u64);
    let tau = std::f64::consts::TAU;
    [rng.random_range(0.0..tau), rng.random_range(0.0..tau), rng.random_range(0.0..tau)]
}

/// Renders one clip. `sample_key` seeds the blob's start jitter and the
/// per-frame noise. Pixel values are quantized to 8 bits so that frames
/// written to PNG read back identically.
pub fn render_clip(
    spec: &SynthSpec,
    subject: usize,
    sample_key: u64,
    direction_deg: f64,
    displacements: &[f64],
) -> Vec<GrayImage> {
    let side = spec.image_side as f64;
    let [p1, p2, p3] = subject_phases(spec.seed, subject);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ sample_key);
    let jitter = side / 16.0;
    let cx = side / 2.0 + rng.random_range(-jitter..=jitter);
    let cy = side / 2.0 + rng.random_range(-jitter..=jitter);
    let sigma = side / 10.0;
    let (dy, dx) = direction_deg.to_radians().sin_cos();
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let scale = 32.0 / side;

    displacements
        .iter()
        .map(|&d| {
            let (bx, by) = (cx + d * dx, cy + d * dy);
            let clean = GrayImage::from_fn(spec.image_side, spec.image_side, |x, y| {
                let (xf, yf) = (x as f64 * scale, y as f64 * scale);
                let bg = 0.45
                    + 0.12 * (xf * 0.45 + p1).sin() * (yf * 0.37 + p2).cos()
                    + 0.08 * ((xf + yf) * 0.21 + p3).sin();
                let r2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                bg + 0.35 * (-r2 / (2.0 * sigma * sigma)).exp()
            });
            let data = clean
                .data()
                .iter()
                .map(|&v| {
                    let n = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    ((v + n).clamp(0.0, 1.0) * 255.0).round() / 255.0
                })
                .collect();
            GrayImage::new(spec.image_side, spec.image_side, data).expect("finite pixels")
        })
        .collect()
}

/// A generated clip held in memory.
#[derive(Clone, Debug)]
pub struct SynthClip {
    pub sample_id: String,
    pub subject: usize,
    pub class: usize,
    pub frames: Vec<GrayImage>,
}

impl SynthClip {
    pub fn subject_id(&self) -> String {
        format!("sub{:02}", self.subject)
    }
}

/// Generates every clip of `spec` in memory. Classes cycle over the
/// global sample index, so every class appears even when subjects hold
/// fewer samples than there are classes.
pub fn synth_clips(spec: &SynthSpec) -> Result<Vec<SynthClip>> {
    spec.validate()?;
    let ramp = triangular_ramp(spec.frames, spec.apex(), spec.peak_displacement);
    let mut out = Vec::with_capacity(spec.subjects * spec.samples_per_subject);
    for s in 0..spec.subjects {
        for j in 0..spec.samples_per_subject {
            let key = s * spec.samples_per_subject + j;
            let class = key % spec.directions.len();
            out.push(SynthClip {
                sample_id: format!("s{s:02}_{j:03}"),
                subject: s,
                class,
                frames: render_clip(spec, s, key as u64, spec.directions[class], &ramp),
            });
        }
    }
    Ok(out)
}

/// Writes PNG frames under `out_dir/<sample_id>/` and a `manifest.csv`.
pub fn synth_generate(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    let clips = synth_clips(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = Vec::with_capacity(clips.len());
    for clip in &clips {
        let dir = out_dir.join(&clip.sample_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (t, frame) in clip.frames.iter().enumerate() {
            frame.save_png(&dir.join(format!("{t:05}.png")))?;
        }
        records.push(SampleRecord {
            sample_id: clip.sample_id.clone(),
            dataset: Dataset::Synth,
            subject_id: clip.subject_id(),
            frames_dir: dir,
            onset: 0,
            apex: spec.apex(),
            offset: spec.frames - 1,
            label: SynthSpec::class_name(clip.class),
            landmarks_dir: None,
        });
    }
    let manifest = Manifest::new(records)?;
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
