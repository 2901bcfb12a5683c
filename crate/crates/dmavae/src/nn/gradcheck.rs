//! Central finite-difference validation of analytic gradients.

/// Compare an analytic gradient against central finite differences of
/// `loss_fn`, parameter by parameter. Returns the maximum relative error,
/// where the error at each coordinate is normalized by
/// max(|analytic|, |numeric|, floor) with floor = 1e-3 so that coordinates
/// with vanishing gradients are judged on absolute error.
pub fn grad_check<F>(loss_fn: F, params: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "grad_check: h must be positive");
    assert_eq!(params.len(), analytic.len());
    let mut work = params.to_vec();
    let mut max_err = 0.0_f64;
    for k in 0..params.len() {
        let orig = work[k];
        work[k] = orig + h;
        let up = loss_fn(&work);
        work[k] = orig - h;
        let dn = loss_fn(&work);
        work[k] = orig;
        let numeric = (up - dn) / (2.0 * h);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-3);
        max_err = max_err.max((analytic[k] - numeric).abs() / denom);
    }
    max_err
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::stats::kl_std_normal;

    #[test]
    fn quadratic_loss_is_exact() {
        // loss = 1/2 theta^2 at theta=3: analytic and central differences both 3
        let err = grad_check(|p| 0.5 * p[0] * p[0], &[3.0], &[3.0], 1e-5);
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn kl_gradient_wrt_mu() {
        // d/dmu KL(N(mu,1)||N(0,1)) = mu; at mu=1 the analytic gradient is 1
        let loss = |p: &[f64]| kl_std_normal(&[p[0]], &[1.0]).unwrap();
        let err = grad_check(loss, &[1.0], &[1.0], 1e-5);
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let err = grad_check(|p| 0.5 * p[0] * p[0], &[3.0], &[2.0], 1e-5);
        assert!(err > 0.1);
    }
}
