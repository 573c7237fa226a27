use super::FlowField;
use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Saturation reference for [`colorize_flow`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaxMagnitude {
    /// The field's own maximum magnitude.
    Auto,
    Fixed(f64),
}

/// Renders a flow field as an RGB image.
///
/// Direction `atan2(v, u)` selects the hue in degrees (0° = +x = red,
/// 120° = green, 240° = blue, with image y pointing down), magnitude over
/// `max_magnitude` gives the saturation clamped to 1, and value is always
/// full. Zero flow is white.
pub fn colorize_flow(field: &FlowField, max_magnitude: MaxMagnitude) -> Result<RgbImage> {
    let max = match max_magnitude {
        MaxMagnitude::Fixed(m) if m > 0.0 && m.is_finite() => m,
        MaxMagnitude::Fixed(m) => {
            return Err(Error::InvalidArgument(format!(
                "max_magnitude must be positive, got {m}"
            )))
        }
        MaxMagnitude::Auto => match field.max_magnitude() {
            m if m > 0.0 => m,
            _ => 1.0,
        },
    };
    let mut data = Vec::with_capacity(field.width() * field.height() * 3);
    for (&u, &v) in field.u().iter().zip(field.v()) {
        let sat = (u.hypot(v) / max).min(1.0);
        let hue = v.atan2(u).to_degrees().rem_euclid(360.0);
        data.extend(hsv_to_rgb(hue, sat, 1.0));
    }
    Ok(RgbImage {
        width: field.width(),
        height: field.height(),
        data,
    })
}

/// HSV (hue in degrees, saturation and value in `[0, 1]`) to 8-bit RGB.
pub fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [u8; 3] {
    let c = val * sat;
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    let q = |ch: f64| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}
