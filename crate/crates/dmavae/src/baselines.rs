//! Linear structural-equation baseline: product-of-coefficients mediation
//! estimates from two ordinary least-squares fits (M ~ 1 + T and
//! Y ~ 1 + T + M). Binary outcomes get a linear-probability fit, which is an
//! acknowledged approximation.

use crate::error::{Error, Result};
use crate::estimate::EffectEstimate;
use crate::nn::Matrix;
use crate::scm::Dataset;

const RANK_TOL: f64 = 1e-10;

/// Least-squares coefficients via Householder QR. Numerically stable; never
/// forms the normal equations.
pub fn ols(design: &Matrix, response: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = (design.rows(), design.cols());
    if response.len() != n {
        return Err(Error::Shape(format!(
            "ols: design has {n} rows, response has {}",
            response.len()
        )));
    }
    if n < p {
        return Err(Error::SingularDesign(format!(
            "ols: fewer rows ({n}) than columns ({p})"
        )));
    }
    let (r, qty) = qr_reduce(design, response);
    back_substitute(&r, &qty[..p])
}

/// Householder reduction: returns the p x p upper-triangular factor R and
/// Qᵀy (length n, first p entries used for the solve).
fn qr_reduce(design: &Matrix, response: &[f64]) -> (Matrix, Vec<f64>) {
    let (n, p) = (design.rows(), design.cols());
    let mut a = design.clone();
    let mut y = response.to_vec();
    for k in 0..p {
        // Householder vector for column k below the diagonal
        let mut norm = 0.0;
        for i in k..n {
            norm += a.get(i, k) * a.get(i, k);
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a.get(k, k) > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| a.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..p {
            let mut d = 0.0;
            for (off, vi) in v.iter().enumerate() {
                d += vi * a.get(k + off, j);
            }
            let f = 2.0 * d / vnorm2;
            for (off, vi) in v.iter().enumerate() {
                let cur = a.get(k + off, j);
                a.set(k + off, j, cur - f * vi);
            }
        }
        let mut d = 0.0;
        for (off, vi) in v.iter().enumerate() {
            d += vi * y[k + off];
        }
        let f = 2.0 * d / vnorm2;
        for (off, vi) in v.iter().enumerate() {
            y[k + off] -= f * vi;
        }
    }
    let mut r = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            r.set(i, j, a.get(i, j));
        }
    }
    (r, y)
}

fn back_substitute(r: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let p = r.rows();
    let scale = (0..p)
        .map(|i| r.get(i, i).abs())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let diag = r.get(i, i);
        if diag.abs() < RANK_TOL * scale {
            return Err(Error::SingularDesign(format!(
                "design matrix is rank deficient (pivot {i})"
            )));
        }
        let mut acc = rhs[i];
        for j in i + 1..p {
            acc -= r.get(i, j) * beta[j];
        }
        beta[i] = acc / diag;
    }
    Ok(beta)
}

/// OLS with coefficient standard errors from the QR factor:
/// Var(beta) = sigma^2 (R⁻¹)(R⁻¹)ᵀ with sigma^2 = RSS / (n - p).
fn ols_with_se(design: &Matrix, response: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let (n, p) = (design.rows(), design.cols());
    if n <= p {
        return Err(Error::SingularDesign(format!(
            "need more rows ({n}) than columns ({p}) for standard errors"
        )));
    }
    let (r, qty) = qr_reduce(design, response);
    let beta = back_substitute(&r, &qty[..p])?;
    let mut rss = 0.0;
    for i in 0..n {
        let mut fit = 0.0;
        for j in 0..p {
            fit += design.get(i, j) * beta[j];
        }
        let e = response[i] - fit;
        rss += e * e;
    }
    let sigma2 = rss / (n - p) as f64;
    // columns of R⁻¹ by triangular solves
    let mut se = vec![0.0; p];
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        let col = back_substitute(&r, &e)?;
        se[j] = (sigma2 * col.iter().map(|x| x * x).sum::<f64>()).sqrt();
    }
    Ok((beta, se, sigma2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsemFit {
    /// M ~ 1 + T
    pub m_intercept: f64,
    pub a: f64,
    pub se_a: f64,
    pub sigma2_m: f64,
    /// Y ~ 1 + T + M
    pub y_intercept: f64,
    pub c_prime: f64,
    pub se_c_prime: f64,
    pub b: f64,
    pub se_b: f64,
    pub sigma2_y: f64,
    pub n: usize,
}

pub fn lsem_fit(data: &Dataset) -> Result<LsemFit> {
    let n = data.len();
    if n < 4 {
        return Err(Error::SingularDesign(format!(
            "lsem needs at least 4 records, got {n}"
        )));
    }
    let mut dm = Matrix::zeros(n, 2);
    let mut dy = Matrix::zeros(n, 3);
    for i in 0..n {
        dm.set(i, 0, 1.0);
        dm.set(i, 1, data.t[i]);
        dy.set(i, 0, 1.0);
        dy.set(i, 1, data.t[i]);
        dy.set(i, 2, data.m[i]);
    }
    let (bm, sem, s2m) = ols_with_se(&dm, &data.m)?;
    let (by, sey, s2y) = ols_with_se(&dy, &data.y)?;
    Ok(LsemFit {
        m_intercept: bm[0],
        a: bm[1],
        se_a: sem[1],
        sigma2_m: s2m,
        y_intercept: by[0],
        c_prime: by[1],
        se_c_prime: sey[1],
        b: by[2],
        se_b: sey[2],
        sigma2_y: s2y,
        n,
    })
}

/// Product-of-coefficients effects; indirect-effect standard errors by the
/// delta method.
pub fn lsem_effects(fit: &LsemFit) -> EffectEstimate {
    let nie = fit.a * fit.b;
    let se_nie = ((fit.b * fit.se_a).powi(2) + (fit.a * fit.se_b).powi(2)).sqrt();
    EffectEstimate {
        nde: fit.c_prime,
        nie,
        nie_r: -nie,
        te: fit.c_prime + nie,
        se_nde: fit.se_c_prime,
        se_nie,
        se_nie_r: se_nie,
        n_samples: 0,
        seed: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{default_spec, sample_dataset, ScmSpec, VarKind};

    fn ones_column(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, 1);
        for i in 0..n {
            m.set(i, 0, 1.0);
        }
        m
    }

    #[test]
    fn intercept_recovers_mean() {
        let design = ones_column(5);
        let beta = ols(&design, &[3.0, 3.0, 3.0, 3.0, 3.0]).unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn exact_line_interpolated() {
        let mut design = Matrix::zeros(4, 2);
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        for (i, x) in xs.iter().enumerate() {
            design.set(i, 0, 1.0);
            design.set(i, 1, *x);
        }
        let beta = ols(&design, &ys).unwrap();
        assert!((beta[0] - 1.0).abs() < 1e-12);
        assert!((beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        // independent solve of the 3x3 normal equations by Cramer's rule
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let n = 200;
        let mut design = Matrix::zeros(n, 3);
        let mut y = vec![0.0; n];
        for i in 0..n {
            design.set(i, 0, 1.0);
            design.set(i, 1, rng.gen_range(-1.0..1.0));
            design.set(i, 2, rng.gen_range(-1.0..1.0));
            y[i] = 0.3 + 1.2 * design.get(i, 1) - 0.7 * design.get(i, 2) + rng.gen_range(-0.1..0.1);
        }
        let mut xtx = [[0.0f64; 3]; 3];
        let mut xty = [0.0f64; 3];
        for i in 0..n {
            for r in 0..3 {
                for c in 0..3 {
                    xtx[r][c] += design.get(i, r) * design.get(i, c);
                }
                xty[r] += design.get(i, r) * y[i];
            }
        }
        let det3 = |m: &[[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det3(&xtx);
        let mut oracle = [0.0f64; 3];
        for k in 0..3 {
            let mut mk = xtx;
            for r in 0..3 {
                mk[r][k] = xty[r];
            }
            oracle[k] = det3(&mk) / d;
        }
        let beta = ols(&design, &y).unwrap();
        for k in 0..3 {
            assert!(
                (beta[k] - oracle[k]).abs() < 1e-8,
                "coef {k}: {} vs {}",
                beta[k],
                oracle[k]
            );
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        // duplicated column
        let mut design = Matrix::zeros(6, 2);
        for i in 0..6 {
            design.set(i, 0, 1.0);
            design.set(i, 1, 1.0);
        }
        assert!(matches!(
            ols(&design, &[1.0; 6]),
            Err(Error::SingularDesign(_))
        ));
    }

    #[test]
    fn noiseless_mediation_recovered_exactly() {
        let mut spec = default_spec();
        spec.g_m = vec![0.0; spec.d_tm];
        spec.h_m = vec![0.0; spec.d_my];
        spec.g_y = vec![0.0; spec.d_ty];
        spec.h_y = vec![0.0; spec.d_my];
        // mediator keeps its own noise so the Y design stays full rank;
        // the outcome equation is exact
        spec.sigma_y = 1e-12;
        let data = sample_dataset(&spec, 200, 0).unwrap();
        let fit = lsem_fit(&data).unwrap();
        assert!((fit.b - 1.0).abs() < 1e-6);
        assert!((fit.c_prime - 0.8).abs() < 1e-6);
        // the mediator equation keeps noise, so a is only consistent
        assert!((fit.a - 0.5).abs() < 0.25);
    }

    #[test]
    fn constant_treatment_is_singular() {
        let mut data = sample_dataset(&default_spec(), 50, 0).unwrap();
        for t in &mut data.t {
            *t = 1.0;
        }
        assert!(matches!(lsem_fit(&data), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn unconfounded_recovery_and_confounded_bias() {
        let mut clean = default_spec();
        clean.g_m = vec![0.0; clean.d_tm];
        clean.h_m = vec![0.0; clean.d_my];
        clean.g_y = vec![0.0; clean.d_ty];
        clean.h_y = vec![0.0; clean.d_my];
        let data = sample_dataset(&clean, 10_000, 1).unwrap();
        let fit = lsem_fit(&data).unwrap();
        assert!((fit.a - 0.5).abs() < 0.05, "a = {}", fit.a);
        assert!((fit.b - 1.0).abs() < 0.05, "b = {}", fit.b);
        assert!((fit.c_prime - 0.8).abs() < 0.05, "c' = {}", fit.c_prime);

        let confounded = sample_dataset(&default_spec(), 10_000, 1).unwrap();
        let fit = lsem_fit(&confounded).unwrap();
        assert!(
            (fit.c_prime - 0.8).abs() > 3.0 * fit.se_c_prime,
            "c' = {} (se {})",
            fit.c_prime,
            fit.se_c_prime
        );
    }

    #[test]
    fn effects_from_fit() {
        let fit = LsemFit {
            m_intercept: 0.0,
            a: 0.5,
            se_a: 0.01,
            sigma2_m: 1.0,
            y_intercept: 0.0,
            c_prime: 0.8,
            se_c_prime: 0.02,
            b: 1.0,
            se_b: 0.01,
            sigma2_y: 1.0,
            n: 100,
        };
        let est = lsem_effects(&fit);
        assert_eq!(est.nde, 0.8);
        assert_eq!(est.nie, 0.5);
        assert_eq!(est.nie_r, -0.5);
        assert!((est.te - 1.3).abs() < 1e-15);
        assert_eq!(est.te, est.nde - est.nie_r);

        let no_path = LsemFit { a: 0.0, ..fit };
        let est = lsem_effects(&no_path);
        assert_eq!(est.nie, 0.0);
        assert_eq!(est.te, est.nde);
    }

    #[test]
    fn binary_mediator_linear_probability_fit_runs() {
        let spec = ScmSpec {
            m_form: VarKind::Binary,
            ..default_spec()
        };
        let data = sample_dataset(&spec, 500, 3).unwrap();
        let fit = lsem_fit(&data).unwrap();
        assert!(fit.a.is_finite() && fit.b.is_finite());
    }
}
