//! Face alignment and cropping, temporal interpolation, and frame selection.

mod interpolate;
mod landmarks;
mod select;

pub use interpolate::{apply_plan, build_interpolation_queue, interpolate_midpoint, InterpolationPlan, MidpointMode, TimedFrame};
pub use landmarks::{
    align_rigid, crop_square, CropSpec, LandmarkSet, RigidTransform, BROW_CENTER, CHIN, LANDMARK_COUNT, LOWER_LIP,
    NOSE_TIP,
};
pub use select::select_frames;
