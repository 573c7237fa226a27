use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `params`:
/// `(f(p + h·eᵢ) − f(p − h·eᵢ)) / 2h` for every coordinate `i`.
pub fn finite_difference_gradient<F>(mut f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    let mut point = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = point[i];
        point[i] = orig + h;
        let plus = eval_finite(&mut f, &point)?;
        point[i] = orig - h;
        let minus = eval_finite(&mut f, &point)?;
        point[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

fn eval_finite<F>(f: &mut F, point: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let v = f(point)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("finite-difference objective".into()))
    }
}

/// Relative error used by gradient checks: `|a − b| / max(|a|, |b|, floor)`.
///
/// The floor keeps coordinates whose true gradient is ~0 from dividing
/// rounding noise by zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}
