//! Likelihood and divergence terms used by the variational objective.

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// z = mu + sigma .* eps
pub fn gaussian_reparam(mu: &[f64], sigma: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != sigma.len() || mu.len() != eps.len() {
        return Err(Error::Shape(format!(
            "gaussian_reparam: lengths {} / {} / {}",
            mu.len(),
            sigma.len(),
            eps.len()
        )));
    }
    if sigma.iter().any(|&s| s <= 0.0) {
        return Err(Error::Domain("gaussian_reparam: sigma must be > 0".into()));
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// KL( N(mu, diag(sigma^2)) || N(0, I) ) = sum_j 1/2 (mu_j^2 + sigma_j^2 - 1 - ln sigma_j^2)
pub fn kl_std_normal(mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if mu.len() != sigma.len() {
        return Err(Error::Shape(format!(
            "kl_std_normal: lengths {} / {}",
            mu.len(),
            sigma.len()
        )));
    }
    if sigma.iter().any(|&s| s <= 0.0) {
        return Err(Error::Domain("kl_std_normal: sigma must be > 0".into()));
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| {
            let s2 = s * s;
            0.5 * (m * m + s2 - 1.0 - s2.ln())
        })
        .sum())
}

/// Negative Bernoulli log-likelihood from a logit, in stable form:
/// softplus(logit) - target * logit.
pub fn bernoulli_nll(logit: f64, target: f64) -> f64 {
    debug_assert!(target == 0.0 || target == 1.0);
    softplus(logit) - target * logit
}

/// Negative Gaussian log-likelihood: 1/2 ln(2 pi sigma^2) + (target - mu)^2 / (2 sigma^2).
pub fn gaussian_nll(mu: f64, sigma: f64, target: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::Domain("gaussian_nll: sigma must be > 0".into()));
    }
    let r = target - mu;
    Ok(0.5 * (LN_2PI + 2.0 * sigma.ln()) + r * r / (2.0 * sigma * sigma))
}

/// Negative categorical log-likelihood from unnormalized logits.
pub fn categorical_nll(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::Domain(format!(
            "categorical_nll: target {} out of range {}",
            target,
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[target])
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reparam_cases() {
        // zero noise returns the mean
        assert_eq!(
            gaussian_reparam(&[1.0, 2.0], &[0.5, 2.0], &[0.0, 0.0]).unwrap(),
            vec![1.0, 2.0]
        );
        // standard-normal identity
        assert_eq!(
            gaussian_reparam(&[0.0, 0.0], &[1.0, 1.0], &[0.3, -0.7]).unwrap(),
            vec![0.3, -0.7]
        );
        assert_eq!(
            gaussian_reparam(&[1.0, 2.0], &[0.5, 2.0], &[1.0, -1.0]).unwrap(),
            vec![1.5, 0.0]
        );
        assert!(gaussian_reparam(&[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn kl_cases() {
        assert_eq!(kl_std_normal(&[0.0], &[1.0]).unwrap(), 0.0);
        assert!((kl_std_normal(&[1.0], &[1.0]).unwrap() - 0.5).abs() < 1e-12);
        let expect = 0.5 * (4.0 - 1.0 - 4.0_f64.ln());
        assert!((kl_std_normal(&[0.0], &[2.0]).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.806853).abs() < 1e-6);
        assert!(kl_std_normal(&[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn bernoulli_cases() {
        assert!((bernoulli_nll(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bernoulli_nll(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        let expect = (1.0 + (-2.0_f64).exp()).ln();
        assert!((bernoulli_nll(2.0, 1.0) - expect).abs() < 1e-12);
        assert!((expect - 0.126928).abs() < 1e-6);
        // finite for extreme logits
        assert!(bernoulli_nll(500.0, 0.0).is_finite());
        assert!(bernoulli_nll(-500.0, 1.0).is_finite());
    }

    #[test]
    fn gaussian_cases() {
        let half_ln_2pi = 0.5 * LN_2PI;
        assert!((gaussian_nll(0.0, 1.0, 0.0).unwrap() - half_ln_2pi).abs() < 1e-12);
        assert!((gaussian_nll(3.7, 1.0, 3.7).unwrap() - half_ln_2pi).abs() < 1e-12);
        assert!((gaussian_nll(0.0, 1.0, 2.0).unwrap() - (half_ln_2pi + 2.0)).abs() < 1e-12);
        assert!(gaussian_nll(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn categorical_matches_binary() {
        // two-class categorical with logits (0, l) equals bernoulli_nll(l, target)
        for &l in &[-3.0, 0.0, 1.7] {
            for t in 0..2usize {
                let c = categorical_nll(&[0.0, l], t).unwrap();
                let b = bernoulli_nll(l, t as f64);
                assert!((c - b).abs() < 1e-12);
            }
        }
    }
}
