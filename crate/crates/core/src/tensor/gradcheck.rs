use crate::error::{Error, Result};

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares an analytic gradient against central finite differences of `loss`
/// at `point`, coordinate by coordinate, and returns the largest relative
/// error. `step` must lie in `[1e-6, 1e-4]`.
pub fn gradcheck<F>(mut loss: F, point: &[f64], analytic: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(1e-6..=1e-4).contains(&step) {
        return Err(Error::InvalidArgument(format!(
            "gradcheck step {step} outside [1e-6, 1e-4]"
        )));
    }
    if point.len() != analytic.len() {
        return Err(Error::shape("gradcheck", &[point.len()], &[analytic.len()]));
    }
    let base = loss(point);
    if !base.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gradcheck: non-finite loss {base} at probe point"
        )));
    }
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        probe[i] = point[i] + step;
        let up = loss(&probe);
        probe[i] = point[i] - step;
        let down = loss(&probe);
        probe[i] = point[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gradcheck: non-finite loss while probing coordinate {i}"
            )));
        }
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let c = [0.3, -1.7, 2.5, 11.0];
        let f = |t: &[f64]| t.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let err = gradcheck(f, &[1.0, 2.0, -3.0, 0.5], &c, 1e-5).unwrap();
        // only round-off remains: ~ulp(f)/step
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn doubled_gradient_is_caught() {
        let f = |t: &[f64]| t[0] * t[0] + 3.0 * t[1];
        let point = [1.5, -0.5];
        let doubled = [2.0 * 3.0, 2.0 * 3.0];
        let err = gradcheck(f, &point, &doubled, 1e-5).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn rejects_bad_step_and_non_finite_loss() {
        assert!(gradcheck(|_| 0.0, &[0.0], &[0.0], 1e-2).is_err());
        assert!(gradcheck(|_| f64::NAN, &[0.0], &[0.0], 1e-5).is_err());
    }
}
