//! File formats: dataset CSV, ground-truth and spec key-value files, JSON
//! model checkpoints, and the structured estimate/audit records.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EffectEstimate;
use crate::model::DmavaeModel;
use crate::nn::Matrix;
use crate::scm::{Dataset, GroundTruthEffects, LatentDist, OracleMethod, ScmSpec, VarKind};
use crate::train::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---- dataset CSV -----------------------------------------------------------

pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut out = String::from("t,m,y");
    for j in 1..=data.d_x() {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for i in 0..data.len() {
        let _ = write!(out, "{},{},{}", data.t[i], data.m[i], data.y[i]);
        for &v in data.x.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    write_string(path, &dataset_to_csv(data))
}

/// Variable kinds are inferred from the column values: {0,1} reads as binary,
/// small nonnegative integers as categorical, anything else as continuous.
fn infer_kind(values: &[f64]) -> VarKind {
    let integral = values.iter().all(|v| v.fract() == 0.0 && *v >= 0.0);
    if !integral {
        return VarKind::Continuous;
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max <= 1.0 {
        VarKind::Binary
    } else if max < 64.0 {
        VarKind::Categorical(max as usize + 1)
    } else {
        VarKind::Continuous
    }
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "t" || cols[1] != "m" || cols[2] != "y" {
        return Err(parse_err(path, 1, "expected header t,m,y,x1,..."));
    }
    for (j, c) in cols[3..].iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(parse_err(path, 1, format!("unexpected column {c}")));
        }
    }
    let d_x = cols.len() - 3;
    let mut t = Vec::new();
    let mut m = Vec::new();
    let mut y = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let mut parsed = Vec::with_capacity(fields.len());
        for f in &fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("invalid number {f:?}")))?;
            parsed.push(v);
        }
        t.push(parsed[0]);
        m.push(parsed[1]);
        y.push(parsed[2]);
        xs.extend_from_slice(&parsed[3..]);
    }
    if t.is_empty() {
        return Err(parse_err(path, 2, "no records"));
    }
    let n = t.len();
    let mut x = Matrix::zeros(n, d_x);
    x.data_mut().copy_from_slice(&xs);
    let m_kind = infer_kind(&m);
    let y_kind = infer_kind(&y);
    let data = Dataset {
        t,
        m,
        y,
        x,
        m_kind,
        y_kind,
        truth: None,
        seed: 0,
    };
    data.validate()?;
    Ok(data)
}

// ---- key-value files -------------------------------------------------------

fn parse_kv(path: &Path, text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, lineno + 1, "expected key = value"))?;
        out.push((lineno + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_f64(path: &Path, line: usize, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| parse_err(path, line, format!("invalid number {v:?}")))
}

fn parse_vec(path: &Path, line: usize, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|f| parse_f64(path, line, f.trim()))
        .collect()
}

fn fmt_kind(k: VarKind) -> String {
    match k {
        VarKind::Continuous => "continuous".into(),
        VarKind::Binary => "binary".into(),
        VarKind::Categorical(levels) => format!("categorical:{levels}"),
    }
}

fn parse_kind(path: &Path, line: usize, v: &str) -> Result<VarKind> {
    match v {
        "continuous" => Ok(VarKind::Continuous),
        "binary" => Ok(VarKind::Binary),
        other => {
            if let Some(k) = other.strip_prefix("categorical:") {
                let levels = k
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("invalid level count {k:?}")))?;
                Ok(VarKind::Categorical(levels))
            } else {
                Err(parse_err(path, line, format!("unknown kind {other:?}")))
            }
        }
    }
}

pub fn spec_to_kv(spec: &ScmSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "d_tm = {}", spec.d_tm);
    let _ = writeln!(s, "d_ty = {}", spec.d_ty);
    let _ = writeln!(s, "d_my = {}", spec.d_my);
    let _ = writeln!(s, "d_shared = {}", spec.d_shared);
    let _ = writeln!(s, "d_x = {}", spec.d_x);
    let _ = writeln!(s, "mixing = {}", fmt_vec(spec.mixing.data()));
    let _ = writeln!(s, "sigma_x = {}", spec.sigma_x);
    let _ = writeln!(s, "w_tm = {}", fmt_vec(&spec.w_tm));
    let _ = writeln!(s, "w_ty = {}", fmt_vec(&spec.w_ty));
    let _ = writeln!(s, "w_shared = {}", fmt_vec(&spec.w_shared));
    let _ = writeln!(s, "t_intercept = {}", spec.t_intercept);
    let _ = writeln!(s, "m_form = {}", fmt_kind(spec.m_form));
    let _ = writeln!(s, "a = {}", spec.a);
    let _ = writeln!(s, "g_m = {}", fmt_vec(&spec.g_m));
    let _ = writeln!(s, "h_m = {}", fmt_vec(&spec.h_m));
    let _ = writeln!(s, "m_shared = {}", fmt_vec(&spec.m_shared));
    let _ = writeln!(s, "sigma_m = {}", spec.sigma_m);
    let _ = writeln!(s, "y_form = {}", fmt_kind(spec.y_form));
    let _ = writeln!(s, "c = {}", spec.c);
    let _ = writeln!(s, "b = {}", spec.b);
    let _ = writeln!(s, "k = {}", spec.k);
    let _ = writeln!(s, "g_y = {}", fmt_vec(&spec.g_y));
    let _ = writeln!(s, "h_y = {}", fmt_vec(&spec.h_y));
    let _ = writeln!(s, "y_shared = {}", fmt_vec(&spec.y_shared));
    let _ = writeln!(s, "sigma_y = {}", spec.sigma_y);
    let _ = writeln!(
        s,
        "latent_dist = {}",
        match spec.latent_dist {
            LatentDist::Gaussian => "gaussian",
            LatentDist::Binary => "binary",
        }
    );
    let _ = writeln!(s, "seed = {}", spec.seed);
    s
}

pub fn write_spec_kv(path: &Path, spec: &ScmSpec) -> Result<()> {
    write_string(path, &spec_to_kv(spec))
}

pub fn read_spec_kv(path: &Path) -> Result<ScmSpec> {
    let text = read_to_string(path)?;
    let mut spec = crate::scm::default_spec();
    let mut mixing_flat: Option<(usize, Vec<f64>)> = None;
    for (line, key, value) in parse_kv(path, &text)? {
        match key.as_str() {
            "d_tm" => spec.d_tm = parse_f64(path, line, &value)? as usize,
            "d_ty" => spec.d_ty = parse_f64(path, line, &value)? as usize,
            "d_my" => spec.d_my = parse_f64(path, line, &value)? as usize,
            "d_shared" => spec.d_shared = parse_f64(path, line, &value)? as usize,
            "d_x" => spec.d_x = parse_f64(path, line, &value)? as usize,
            "mixing" => mixing_flat = Some((line, parse_vec(path, line, &value)?)),
            "sigma_x" => spec.sigma_x = parse_f64(path, line, &value)?,
            "w_tm" => spec.w_tm = parse_vec(path, line, &value)?,
            "w_ty" => spec.w_ty = parse_vec(path, line, &value)?,
            "w_shared" => spec.w_shared = parse_vec(path, line, &value)?,
            "t_intercept" => spec.t_intercept = parse_f64(path, line, &value)?,
            "m_form" => spec.m_form = parse_kind(path, line, &value)?,
            "a" => spec.a = parse_f64(path, line, &value)?,
            "g_m" => spec.g_m = parse_vec(path, line, &value)?,
            "h_m" => spec.h_m = parse_vec(path, line, &value)?,
            "m_shared" => spec.m_shared = parse_vec(path, line, &value)?,
            "sigma_m" => spec.sigma_m = parse_f64(path, line, &value)?,
            "y_form" => spec.y_form = parse_kind(path, line, &value)?,
            "c" => spec.c = parse_f64(path, line, &value)?,
            "b" => spec.b = parse_f64(path, line, &value)?,
            "k" => spec.k = parse_f64(path, line, &value)?,
            "g_y" => spec.g_y = parse_vec(path, line, &value)?,
            "h_y" => spec.h_y = parse_vec(path, line, &value)?,
            "y_shared" => spec.y_shared = parse_vec(path, line, &value)?,
            "sigma_y" => spec.sigma_y = parse_f64(path, line, &value)?,
            "latent_dist" => {
                spec.latent_dist = match value.as_str() {
                    "gaussian" => LatentDist::Gaussian,
                    "binary" => LatentDist::Binary,
                    other => {
                        return Err(parse_err(
                            path,
                            line,
                            format!("unknown latent_dist {other:?}"),
                        ))
                    }
                }
            }
            "seed" => spec.seed = parse_f64(path, line, &value)? as u64,
            other => return Err(parse_err(path, line, format!("unknown key {other:?}"))),
        }
    }
    if let Some((line, flat)) = mixing_flat {
        let cols = spec.latent_dim();
        if cols == 0 || flat.len() != spec.d_x * cols {
            return Err(parse_err(
                path,
                line,
                format!(
                    "mixing has {} entries, expected {} x {}",
                    flat.len(),
                    spec.d_x,
                    cols
                ),
            ));
        }
        let mut m = Matrix::zeros(spec.d_x, cols);
        m.data_mut().copy_from_slice(&flat);
        spec.mixing = m;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn truth_to_kv(truth: &GroundTruthEffects) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nde = {}", truth.nde);
    let _ = writeln!(s, "nie = {}", truth.nie);
    let _ = writeln!(s, "nie_r = {}", truth.nie_r);
    let _ = writeln!(s, "te = {}", truth.te);
    let _ = writeln!(s, "method = {}", truth.method);
    let _ = writeln!(s, "se_nde = {}", truth.se_nde);
    let _ = writeln!(s, "se_nie = {}", truth.se_nie);
    let _ = writeln!(s, "se_nie_r = {}", truth.se_nie_r);
    let _ = writeln!(s, "seed = {}", truth.seed);
    s
}

pub fn write_truth_kv(path: &Path, truth: &GroundTruthEffects) -> Result<()> {
    write_string(path, &truth_to_kv(truth))
}

pub fn read_truth_kv(path: &Path) -> Result<GroundTruthEffects> {
    let text = read_to_string(path)?;
    let mut truth = GroundTruthEffects {
        nde: 0.0,
        nie: 0.0,
        nie_r: 0.0,
        te: 0.0,
        method: OracleMethod::ClosedForm,
        se_nde: 0.0,
        se_nie: 0.0,
        se_nie_r: 0.0,
        seed: 0,
    };
    for (line, key, value) in parse_kv(path, &text)? {
        match key.as_str() {
            "nde" => truth.nde = parse_f64(path, line, &value)?,
            "nie" => truth.nie = parse_f64(path, line, &value)?,
            "nie_r" => truth.nie_r = parse_f64(path, line, &value)?,
            "te" => truth.te = parse_f64(path, line, &value)?,
            "method" => {
                truth.method = value
                    .parse()
                    .map_err(|e: Error| parse_err(path, line, e.to_string()))?
            }
            "se_nde" => truth.se_nde = parse_f64(path, line, &value)?,
            "se_nie" => truth.se_nie = parse_f64(path, line, &value)?,
            "se_nie_r" => truth.se_nie_r = parse_f64(path, line, &value)?,
            "seed" => truth.seed = parse_f64(path, line, &value)? as u64,
            other => return Err(parse_err(path, line, format!("unknown key {other:?}"))),
        }
    }
    Ok(truth)
}

// ---- model checkpoint ------------------------------------------------------

/// Versioned checkpoint: all parameters plus the manifest needed to
/// reconstruct and audit the training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: DmavaeModel,
    pub train_config: Option<CheckpointTrainConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl From<&TrainConfig> for CheckpointTrainConfig {
    fn from(c: &TrainConfig) -> Self {
        CheckpointTrainConfig {
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            seed: c.seed,
        }
    }
}

pub fn write_checkpoint(
    path: &Path,
    model: &DmavaeModel,
    train_config: Option<&TrainConfig>,
) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
        train_config: train_config.map(CheckpointTrainConfig::from),
    };
    let json = serde_json::to_string(&ckpt)
        .map_err(|e| Error::Model(format!("checkpoint serialization failed: {e}")))?;
    write_string(path, &json)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Model(format!(
            "unsupported checkpoint version {} (expected {})",
            ckpt.version, CHECKPOINT_VERSION
        )));
    }
    if !ckpt.model.all_finite() {
        return Err(Error::Model(
            "checkpoint contains non-finite parameters".into(),
        ));
    }
    Ok(ckpt)
}

// ---- structured records ----------------------------------------------------

pub fn write_estimate(path: &Path, est: &EffectEstimate) -> Result<()> {
    let json = serde_json::to_string_pretty(est)
        .map_err(|e| Error::Model(format!("estimate serialization failed: {e}")))?;
    write_string(path, &json)
}

pub fn read_estimate(path: &Path) -> Result<EffectEstimate> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub nde: f64,
    pub nie: f64,
    pub tau: f64,
    pub direct_flag: bool,
    pub indirect_flag: bool,
    pub n: usize,
    pub seed: u64,
}

impl AuditReport {
    /// Flags are a pure function of (nde, nie, tau).
    pub fn new(est: &EffectEstimate, tau: f64, n: usize) -> Self {
        AuditReport {
            nde: est.nde,
            nie: est.nie,
            tau,
            direct_flag: est.nde > tau,
            indirect_flag: est.nie > tau,
            n,
            seed: est.seed,
        }
    }
}

pub fn write_audit(path: &Path, report: &AuditReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Model(format!("audit serialization failed: {e}")))?;
    write_string(path, &json)
}
