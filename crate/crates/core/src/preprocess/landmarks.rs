use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const LANDMARK_COUNT: usize = 68;

/// Chin tip.
pub const CHIN: usize = 8;
/// Center of the left eyebrow.
pub const BROW_CENTER: usize = 19;
/// Nose tip, used as the crop center.
pub const NOSE_TIP: usize = 30;
/// Lower-lip bottom.
pub const LOWER_LIP: usize = 57;

/// The 68-point facial annotation, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    points: Vec<(f64, f64)>,
}

impl LandmarkSet {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::DegenerateLandmarks(format!(
                "expected {LANDMARK_COUNT} points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite("landmark coordinates".into()));
        }
        Ok(LandmarkSet { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn point(&self, i: usize) -> (f64, f64) {
        self.points[i]
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> LandmarkSet {
        LandmarkSet {
            points: self.points.iter().map(|&(x, y)| f(x, y)).collect(),
        }
    }

    /// Parses 68 lines of whitespace-separated `x y`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::with_capacity(LANDMARK_COUNT);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => points.push((x, y)),
                _ => {
                    return Err(Error::DegenerateLandmarks(format!(
                        "line {}: expected \"x y\", got {line:?}",
                        n + 1
                    )))
                }
            }
        }
        LandmarkSet::new(points)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LandmarkSet::parse(&text).map_err(|e| Error::DegenerateLandmarks(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        self.points.iter().map(|(x, y)| format!("{x} {y}\n")).collect()
    }
}

/// Square face crop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropSpec {
    pub center: (f64, f64),
    pub side: f64,
}

impl CropSpec {
    pub fn apply(&self, image: &GrayImage, out_side: usize) -> GrayImage {
        image.crop_square(self.center.0, self.center.1, self.side, out_side)
    }
}

/// Crop square from apex landmarks: side = (y₈ − y₁₉) + (y₈ − y₅₇),
/// centered on the nose tip.
pub fn crop_square(apex: &LandmarkSet) -> Result<CropSpec> {
    let y = |i: usize| apex.point(i).1;
    let side = (y(CHIN) - y(BROW_CENTER)) + (y(CHIN) - y(LOWER_LIP));
    if side <= 0.0 {
        return Err(Error::DegenerateLandmarks(format!(
            "crop side {side} is not positive"
        )));
    }
    Ok(CropSpec {
        center: apex.point(NOSE_TIP),
        side,
    })
}

/// Rotation by `theta` followed by translation; no scale, no reflection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        theta: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn rotation(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s], [s, c]]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * x - s * y + self.tx, s * x + c * y + self.ty)
    }

    pub fn inverse(&self) -> RigidTransform {
        let (s, c) = self.theta.sin_cos();
        RigidTransform {
            theta: -self.theta,
            tx: -(c * self.tx + s * self.ty),
            ty: -(-s * self.tx + c * self.ty),
        }
    }

    /// Resamples `image` so that content at `p` moves to `apply(p)`.
    pub fn warp_image(&self, image: &GrayImage) -> GrayImage {
        let inv = self.inverse();
        image.warp(|x, y| inv.apply(x, y))
    }

    /// Root-mean-square distance between transformed `from` and `to`.
    pub fn residual(&self, from: &LandmarkSet, to: &LandmarkSet) -> f64 {
        let sum: f64 = from
            .points()
            .iter()
            .zip(to.points())
            .map(|(&(px, py), &(qx, qy))| {
                let (x, y) = self.apply(px, py);
                (x - qx).powi(2) + (y - qy).powi(2)
            })
            .sum();
        (sum / from.points().len() as f64).sqrt()
    }
}

/// Least-squares rigid fit taking `frame` landmarks onto `reference`.
///
/// Closed-form 2D orthogonal Procrustes restricted to proper rotations:
/// the rotation is parameterized by its angle, so a reflection can never be
/// returned even when it would fit better.
pub fn align_rigid(frame: &LandmarkSet, reference: &LandmarkSet) -> Result<RigidTransform> {
    let centroid = |s: &LandmarkSet| {
        let n = s.points().len() as f64;
        let (sx, sy) = s.points().iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        (sx / n, sy / n)
    };
    let (pcx, pcy) = centroid(frame);
    let (qcx, qcy) = centroid(reference);

    let mut dot = 0.0;
    let mut cross = 0.0;
    let mut spread = 0.0;
    for (&(px, py), &(qx, qy)) in frame.points().iter().zip(reference.points()) {
        let (ax, ay) = (px - pcx, py - pcy);
        let (bx, by) = (qx - qcx, qy - qcy);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
        spread += ax * ax + ay * ay;
    }
    if spread <= f64::EPSILON || (dot == 0.0 && cross == 0.0) {
        return Err(Error::DegenerateLandmarks(
            "landmarks are coincident; rotation is undetermined".into(),
        ));
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    Ok(RigidTransform {
        theta,
        tx: qcx - (c * pcx - s * pcy),
        ty: qcy - (s * pcx + c * pcy),
    })
}
