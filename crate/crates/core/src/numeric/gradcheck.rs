use crate::error::{check_len, Error, Result};

/// Central-difference gradient of `f` at `point`.
pub fn numeric_gradient<F>(f: F, point: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference eps must be > 0, got {eps}")));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x)?;
        x[i] = orig - eps;
        let minus = f(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: format!("grad_check function value near coordinate {i}"),
            });
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Compares an analytic gradient against central differences.
///
/// `f` returns the scalar value and its analytic gradient at a point. The
/// result is `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn grad_check<F>(f: F, point: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (value, analytic) = f(point)?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "grad_check function value".into(),
        });
    }
    check_len("grad_check analytic gradient", point.len(), analytic.len())?;
    let numeric = numeric_gradient(|p| f(p).map(|(v, _)| v), point, eps)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let err = grad_check(|p| Ok((p[0] * p[0], vec![2.0 * p[0]])), &[3.0], 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = grad_check(|_| Ok((4.2, vec![0.0, 0.0])), &[1.0, -1.0], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn wrong_analytic_gradient_is_detected() {
        let err = grad_check(|p| Ok((p[0] * p[0], vec![p[0]])), &[3.0], 1e-5).unwrap();
        assert!(err > 0.4);
    }

    #[test]
    fn non_finite_function_is_an_error() {
        let r = grad_check(|p| Ok((1.0 / (p[0] - p[0]), vec![0.0])), &[1.0], 1e-5);
        assert!(r.is_err());
    }

    #[test]
    fn non_positive_eps_is_rejected() {
        assert!(grad_check(|_| Ok((0.0, vec![0.0])), &[0.0], 0.0).is_err());
    }
}
