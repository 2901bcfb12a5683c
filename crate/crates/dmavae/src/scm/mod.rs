//! Structural causal model family for the synthetic benchmark: dataset
//! sampling, ground-truth effects by closed form / Monte Carlo / enumeration,
//! and the registered graph templates.

pub mod graph;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{logistic, Matrix};
use crate::util::{derive_seed, mean_se};

pub use graph::{fig1b_graph, figure2_graph, graph_with_blocks, CausalGraph};

/// Kind of an observed variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
    /// Multi-class mediator with the given number of levels (used by the
    /// real-data audit path; the synthetic SCM never generates this).
    Categorical(usize),
}

impl VarKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, VarKind::Categorical(_))
    }
}

/// Marginal distribution of each latent coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentDist {
    /// Standard normal.
    Gaussian,
    /// Rademacher (+1 or -1 with equal probability); enables exact
    /// enumeration for all-binary models.
    Binary,
}

/// Parametrized SCM over the three pairwise confounder blocks plus an
/// optional shared block that feeds T, M and Y simultaneously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub d_tm: usize,
    pub d_ty: usize,
    pub d_my: usize,
    /// Single confounder block affecting T, M and Y at once; nonzero only in
    /// the shared-confounder template.
    pub d_shared: usize,
    pub d_x: usize,
    /// d_x rows by (d_tm + d_ty + d_my + d_shared) columns.
    pub mixing: Matrix,
    pub sigma_x: f64,
    pub w_tm: Vec<f64>,
    pub w_ty: Vec<f64>,
    pub w_shared: Vec<f64>,
    pub t_intercept: f64,
    pub m_form: VarKind,
    /// Effect of T on M.
    pub a: f64,
    pub g_m: Vec<f64>,
    pub h_m: Vec<f64>,
    pub m_shared: Vec<f64>,
    pub sigma_m: f64,
    pub y_form: VarKind,
    /// Direct effect of T on Y.
    pub c: f64,
    /// Effect of M on Y.
    pub b: f64,
    /// T x M interaction.
    pub k: f64,
    pub g_y: Vec<f64>,
    pub h_y: Vec<f64>,
    pub y_shared: Vec<f64>,
    pub sigma_y: f64,
    pub latent_dist: LatentDist,
    pub seed: u64,
}

impl ScmSpec {
    pub fn latent_dim(&self) -> usize {
        self.d_tm + self.d_ty + self.d_my + self.d_shared
    }

    fn block_ranges(&self) -> [std::ops::Range<usize>; 4] {
        let a = self.d_tm;
        let b = a + self.d_ty;
        let c = b + self.d_my;
        let d = c + self.d_shared;
        [0..a, a..b, b..c, c..d]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.latent_dim();
        if self.mixing.rows() != self.d_x || self.mixing.cols() != d {
            return Err(Error::Spec(format!(
                "mixing map is {}x{}, expected {}x{}",
                self.mixing.rows(),
                self.mixing.cols(),
                self.d_x,
                d
            )));
        }
        if d > 0 && self.d_x < d {
            return Err(Error::Spec(format!(
                "proxies must carry all latent information: D_X = {} < {} latent dims",
                self.d_x, d
            )));
        }
        if d > 0 && self.mixing.column_rank() < d {
            return Err(Error::Spec("mixing map is column-rank deficient".into()));
        }
        let len_checks = [
            (self.w_tm.len(), self.d_tm, "w_tm"),
            (self.w_ty.len(), self.d_ty, "w_ty"),
            (self.w_shared.len(), self.d_shared, "w_shared"),
            (self.g_m.len(), self.d_tm, "g_m"),
            (self.h_m.len(), self.d_my, "h_m"),
            (self.m_shared.len(), self.d_shared, "m_shared"),
            (self.g_y.len(), self.d_ty, "g_y"),
            (self.h_y.len(), self.d_my, "h_y"),
            (self.y_shared.len(), self.d_shared, "y_shared"),
        ];
        for (got, want, name) in len_checks {
            if got != want {
                return Err(Error::Spec(format!(
                    "{name} has length {got}, expected {want}"
                )));
            }
        }
        if self.sigma_x <= 0.0 {
            return Err(Error::Spec("sigma_x must be > 0".into()));
        }
        if self.m_form == VarKind::Continuous && self.sigma_m <= 0.0 {
            return Err(Error::Spec("sigma_m must be > 0".into()));
        }
        if self.y_form == VarKind::Continuous && self.sigma_y <= 0.0 {
            return Err(Error::Spec("sigma_y must be > 0".into()));
        }
        if self.m_form.is_categorical() || self.y_form.is_categorical() {
            return Err(Error::Spec(
                "the synthetic SCM supports continuous or binary M and Y only".into(),
            ));
        }
        Ok(())
    }

    fn lin_t(&self, z: &[f64]) -> f64 {
        let [r_tm, r_ty, _, r_sh] = self.block_ranges();
        dot(&self.w_tm, &z[r_tm])
            + dot(&self.w_ty, &z[r_ty])
            + dot(&self.w_shared, &z[r_sh])
            + self.t_intercept
    }

    fn lin_m(&self, t: f64, z: &[f64]) -> f64 {
        let [r_tm, _, r_my, r_sh] = self.block_ranges();
        self.a * t
            + dot(&self.g_m, &z[r_tm])
            + dot(&self.h_m, &z[r_my])
            + dot(&self.m_shared, &z[r_sh])
    }

    fn lin_y(&self, t: f64, m: f64, z: &[f64]) -> f64 {
        let [_, r_ty, r_my, r_sh] = self.block_ranges();
        self.c * t
            + self.b * m
            + self.k * t * m
            + dot(&self.g_y, &z[r_ty])
            + dot(&self.h_y, &z[r_my])
            + dot(&self.y_shared, &z[r_sh])
    }

    fn sample_latents<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.latent_dim())
            .map(|_| match self.latent_dist {
                LatentDist::Gaussian => rng.sample(StandardNormal),
                LatentDist::Binary => {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            })
            .collect()
    }

    /// The causal graph this spec realizes.
    pub fn graph(&self) -> CausalGraph {
        graph_with_blocks(
            self.d_tm > 0,
            self.d_ty > 0,
            self.d_my > 0,
            self.d_shared > 0,
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Default linear continuous spec: all three confounder types enabled, all
/// effects nonzero, closed-form ground truth (nde, nie, te) = (0.8, 0.5, 1.3).
pub fn default_spec() -> ScmSpec {
    let d_x = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xD14A, &[]));
    let mut mixing = Matrix::zeros(d_x, 3);
    for v in mixing.data_mut() {
        *v = rng.gen_range(0.5..1.5);
    }
    ScmSpec {
        d_tm: 1,
        d_ty: 1,
        d_my: 1,
        d_shared: 0,
        d_x,
        mixing,
        sigma_x: 0.1,
        w_tm: vec![0.6],
        w_ty: vec![0.6],
        w_shared: vec![],
        t_intercept: 0.0,
        m_form: VarKind::Continuous,
        a: 0.5,
        g_m: vec![0.8],
        h_m: vec![0.8],
        m_shared: vec![],
        sigma_m: 0.5,
        y_form: VarKind::Continuous,
        c: 0.8,
        b: 1.0,
        k: 0.0,
        g_y: vec![0.8],
        h_y: vec![0.8],
        y_shared: vec![],
        sigma_y: 0.5,
        latent_dist: LatentDist::Gaussian,
        seed: 0,
    }
}

/// How a set of ground-truth effects was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ClosedForm,
    MonteCarlo,
    Enumeration,
}

impl std::fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OracleMethod::ClosedForm => "closed_form",
            OracleMethod::MonteCarlo => "monte_carlo",
            OracleMethod::Enumeration => "enumeration",
        })
    }
}

impl std::str::FromStr for OracleMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" => Ok(OracleMethod::ClosedForm),
            "monte_carlo" => Ok(OracleMethod::MonteCarlo),
            "enumeration" => Ok(OracleMethod::Enumeration),
            other => Err(Error::Argument(format!("unknown oracle method {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEffects {
    pub nde: f64,
    pub nie: f64,
    pub nie_r: f64,
    pub te: f64,
    pub method: OracleMethod,
    /// Monte-Carlo standard errors (nde, nie, nie_r); zero for exact methods.
    pub se_nde: f64,
    pub se_nie: f64,
    pub se_nie_r: f64,
    pub seed: u64,
}

/// N records of (t, m, y, x) plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub t: Vec<f64>,
    pub m: Vec<f64>,
    pub y: Vec<f64>,
    /// n rows by d_x columns.
    pub x: Matrix,
    pub m_kind: VarKind,
    pub y_kind: VarKind,
    pub truth: Option<GroundTruthEffects>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.x.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.m.len() != n || self.y.len() != n || self.x.rows() != n {
            return Err(Error::Shape("dataset column lengths disagree".into()));
        }
        if !self.x.all_finite() {
            return Err(Error::Domain(
                "dataset proxies contain non-finite values".into(),
            ));
        }
        if self.t.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::Domain("t must be 0 or 1".into()));
        }
        for (vals, kind, name) in [(&self.m, self.m_kind, "m"), (&self.y, self.y_kind, "y")] {
            match kind {
                VarKind::Binary => {
                    if vals.iter().any(|&v| v != 0.0 && v != 1.0) {
                        return Err(Error::Domain(format!("binary {name} must be 0 or 1")));
                    }
                }
                VarKind::Categorical(levels) => {
                    if vals
                        .iter()
                        .any(|&v| v.fract() != 0.0 || v < 0.0 || v as usize >= levels)
                    {
                        return Err(Error::Domain(format!(
                            "categorical {name} must be an integer in [0, {levels})"
                        )));
                    }
                }
                VarKind::Continuous => {
                    if vals.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Domain(format!("{name} contains non-finite values")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Draw a synthetic dataset. Deterministic given (spec, n, seed); ground
/// truth computed by the cheapest exact oracle available, falling back to
/// Monte Carlo.
pub fn sample_dataset(spec: &ScmSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[n as u64, seed]));
    let mut t = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut x = Matrix::zeros(n, spec.d_x);
    for i in 0..n {
        let z = spec.sample_latents(&mut rng);
        let xi = spec.mixing.matvec(&z)?;
        for (j, v) in xi.iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            x.set(i, j, v + spec.sigma_x * noise);
        }
        let ti = if rng.gen_bool(logistic(spec.lin_t(&z))) {
            1.0
        } else {
            0.0
        };
        let mi = match spec.m_form {
            VarKind::Continuous => {
                let eps: f64 = rng.sample(StandardNormal);
                spec.lin_m(ti, &z) + spec.sigma_m * eps
            }
            _ => {
                if rng.gen_bool(logistic(spec.lin_m(ti, &z))) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let yi = match spec.y_form {
            VarKind::Continuous => {
                let eps: f64 = rng.sample(StandardNormal);
                spec.lin_y(ti, mi, &z) + spec.sigma_y * eps
            }
            _ => {
                if rng.gen_bool(logistic(spec.lin_y(ti, mi, &z))) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        t.push(ti);
        m.push(mi);
        y.push(yi);
    }
    let truth = attach_truth(spec)?;
    Ok(Dataset {
        t,
        m,
        y,
        x,
        m_kind: spec.m_form,
        y_kind: spec.y_form,
        truth: Some(truth),
        seed,
    })
}

fn attach_truth(spec: &ScmSpec) -> Result<GroundTruthEffects> {
    if closed_form_applies(spec) {
        oracle_effects(spec, OracleMethod::ClosedForm, 0)
    } else if enumeration_applies(spec) {
        oracle_effects(spec, OracleMethod::Enumeration, 0)
    } else {
        oracle_effects(spec, OracleMethod::MonteCarlo, 1_000_000)
    }
}

fn closed_form_applies(spec: &ScmSpec) -> bool {
    spec.m_form == VarKind::Continuous && spec.y_form == VarKind::Continuous && spec.k == 0.0
}

fn enumeration_applies(spec: &ScmSpec) -> bool {
    spec.latent_dist == LatentDist::Binary
        && spec.m_form == VarKind::Binary
        && spec.y_form == VarKind::Binary
        && spec.latent_dim() <= 16
}

/// Ground-truth natural effects for a spec.
///
/// Closed form (linear continuous, no interaction): nde = c, nie = a*b,
/// nie_r = -a*b, te = c + a*b. Monte Carlo evaluates unit-level
/// counterfactual pairs with exogenous noise shared across treatment arms.
/// Enumeration sums exactly over all Rademacher latent configurations of an
/// all-binary model.
pub fn oracle_effects(
    spec: &ScmSpec,
    method: OracleMethod,
    n_mc: usize,
) -> Result<GroundTruthEffects> {
    spec.validate()?;
    match method {
        OracleMethod::ClosedForm => {
            if !closed_form_applies(spec) {
                return Err(Error::UnsupportedMethod(
                    "closed form needs continuous M and Y with no T x M interaction".into(),
                ));
            }
            let nie = spec.a * spec.b;
            Ok(GroundTruthEffects {
                nde: spec.c,
                nie,
                nie_r: -nie,
                te: spec.c + nie,
                method: OracleMethod::ClosedForm,
                se_nde: 0.0,
                se_nie: 0.0,
                se_nie_r: 0.0,
                seed: spec.seed,
            })
        }
        OracleMethod::Enumeration => {
            if !enumeration_applies(spec) {
                return Err(Error::UnsupportedMethod(
                    "enumeration needs Rademacher latents and binary M and Y".into(),
                ));
            }
            let d = spec.latent_dim();
            let (mut nde, mut nie, mut nie_r) = (0.0, 0.0, 0.0);
            let weight = 1.0 / (1u64 << d) as f64;
            let mut z = vec![0.0; d];
            for config in 0u64..(1 << d) {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = if config >> j & 1 == 1 { 1.0 } else { -1.0 };
                }
                let p0 = logistic(spec.lin_m(0.0, &z));
                let p1 = logistic(spec.lin_m(1.0, &z));
                let ey = |t: f64, m: f64| logistic(spec.lin_y(t, m, &z));
                nde += weight
                    * ((1.0 - p0) * (ey(1.0, 0.0) - ey(0.0, 0.0))
                        + p0 * (ey(1.0, 1.0) - ey(0.0, 1.0)));
                nie += weight * (p1 - p0) * (ey(0.0, 1.0) - ey(0.0, 0.0));
                nie_r += weight * (p0 - p1) * (ey(1.0, 1.0) - ey(1.0, 0.0));
            }
            Ok(GroundTruthEffects {
                nde,
                nie,
                nie_r,
                te: nde - nie_r,
                method: OracleMethod::Enumeration,
                se_nde: 0.0,
                se_nie: 0.0,
                se_nie_r: 0.0,
                seed: spec.seed,
            })
        }
        OracleMethod::MonteCarlo => {
            if n_mc < 1 {
                return Err(Error::Argument("n_mc must be >= 1".into()));
            }
            let seed = derive_seed(spec.seed, &[0x6f7261636c65]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut nde_c = Vec::with_capacity(n_mc);
            let mut nie_c = Vec::with_capacity(n_mc);
            let mut nie_r_c = Vec::with_capacity(n_mc);
            for _ in 0..n_mc {
                let z = spec.sample_latents(&mut rng);
                // shared exogenous noise across treatment arms (unit-level
                // counterfactuals)
                let (m0, m1) = match spec.m_form {
                    VarKind::Continuous => {
                        let eps: f64 = rng.sample(StandardNormal);
                        (
                            spec.lin_m(0.0, &z) + spec.sigma_m * eps,
                            spec.lin_m(1.0, &z) + spec.sigma_m * eps,
                        )
                    }
                    _ => {
                        let u: f64 = rng.gen();
                        (
                            (u < logistic(spec.lin_m(0.0, &z))) as u8 as f64,
                            (u < logistic(spec.lin_m(1.0, &z))) as u8 as f64,
                        )
                    }
                };
                let yv: Box<dyn Fn(f64, f64) -> f64> = match spec.y_form {
                    VarKind::Continuous => {
                        let eps: f64 = rng.sample(StandardNormal);
                        let s = spec.sigma_y;
                        Box::new(move |t, m| spec.lin_y(t, m, &z) + s * eps)
                    }
                    _ => {
                        let u: f64 = rng.gen();
                        Box::new(move |t, m| (u < logistic(spec.lin_y(t, m, &z))) as u8 as f64)
                    }
                };
                nde_c.push(yv(1.0, m0) - yv(0.0, m0));
                nie_c.push(yv(0.0, m1) - yv(0.0, m0));
                nie_r_c.push(yv(1.0, m0) - yv(1.0, m1));
            }
            let (nde, se_nde) = mean_se(&nde_c);
            let (nie, se_nie) = mean_se(&nie_c);
            let (nie_r, se_nie_r) = mean_se(&nie_r_c);
            Ok(GroundTruthEffects {
                nde,
                nie,
                nie_r,
                te: nde - nie_r,
                method: OracleMethod::MonteCarlo,
                se_nde,
                se_nie,
                se_nie_r,
                seed,
            })
        }
    }
}

/// Registered graph/spec templates: the full three-confounder graph, the
/// single shared-confounder graph, and the six partial cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Full,
    Fig1b,
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    Case6,
}

impl CaseId {
    pub const ALL_CASES: [CaseId; 6] = [
        CaseId::Case1,
        CaseId::Case2,
        CaseId::Case3,
        CaseId::Case4,
        CaseId::Case5,
        CaseId::Case6,
    ];

    /// (tm, ty, my, shared) block presence.
    pub fn blocks(self) -> (bool, bool, bool, bool) {
        match self {
            CaseId::Full => (true, true, true, false),
            CaseId::Fig1b => (false, false, false, true),
            CaseId::Case1 => (true, false, false, false),
            CaseId::Case2 => (false, true, false, false),
            CaseId::Case3 => (false, false, true, false),
            CaseId::Case4 => (true, true, false, false),
            CaseId::Case5 => (true, false, true, false),
            CaseId::Case6 => (false, true, true, false),
        }
    }

    pub fn graph(self) -> CausalGraph {
        let (tm, ty, my, shared) = self.blocks();
        graph_with_blocks(tm, ty, my, shared)
    }
}

impl std::str::FromStr for CaseId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CaseId::Full),
            "fig1b" => Ok(CaseId::Fig1b),
            "case1" => Ok(CaseId::Case1),
            "case2" => Ok(CaseId::Case2),
            "case3" => Ok(CaseId::Case3),
            "case4" => Ok(CaseId::Case4),
            "case5" => Ok(CaseId::Case5),
            "case6" => Ok(CaseId::Case6),
            other => Err(Error::Argument(format!("unknown case id {other}"))),
        }
    }
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CaseId::Full => "full",
            CaseId::Fig1b => "fig1b",
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
            CaseId::Case4 => "case4",
            CaseId::Case5 => "case5",
            CaseId::Case6 => "case6",
        };
        f.write_str(s)
    }
}

/// Derive the spec for a confounder-structure case from a base spec:
/// disabled blocks get dimension zero and lose their coefficients and mixing
/// columns; the shared-confounder case reuses the base Z_TM block geometry.
pub fn case_spec(case: CaseId, base: &ScmSpec) -> Result<ScmSpec> {
    base.validate()?;
    if base.d_shared != 0 {
        return Err(Error::Spec(
            "case_spec expects a base without a shared block".into(),
        ));
    }
    let (tm, ty, my, shared) = case.blocks();
    let mut spec = base.clone();
    let ranges = base.block_ranges();

    let mut keep_cols: Vec<usize> = Vec::new();
    if tm {
        keep_cols.extend(ranges[0].clone());
    } else {
        spec.d_tm = 0;
        spec.w_tm.clear();
        spec.g_m.clear();
    }
    if ty {
        keep_cols.extend(ranges[1].clone());
    } else {
        spec.d_ty = 0;
        spec.w_ty.clear();
        spec.g_y.clear();
    }
    if my {
        keep_cols.extend(ranges[2].clone());
    } else {
        spec.d_my = 0;
        spec.h_m.clear();
        spec.h_y.clear();
    }
    if shared {
        // single block feeding T, M and Y; reuses the Z_TM geometry of the base
        spec.d_shared = base.d_tm.max(1);
        let d = spec.d_shared;
        spec.w_shared = resized(&base.w_tm, d);
        spec.m_shared = resized(&base.g_m, d);
        spec.y_shared = resized(&base.g_y, d);
        keep_cols.extend(ranges[0].clone().take(d));
        while keep_cols.len() < d {
            keep_cols.push(ranges[0].start); // degenerate base; validated below
        }
    }

    let mut mixing = Matrix::zeros(base.d_x, keep_cols.len());
    for i in 0..base.d_x {
        for (jn, &jo) in keep_cols.iter().enumerate() {
            mixing.set(i, jn, base.mixing.get(i, jo));
        }
    }
    spec.mixing = mixing;
    spec.validate()?;
    Ok(spec)
}

fn resized(v: &[f64], d: usize) -> Vec<f64> {
    let fill = v.first().copied().unwrap_or(0.8);
    let mut out = v.to_vec();
    out.resize(d, fill);
    out
}
