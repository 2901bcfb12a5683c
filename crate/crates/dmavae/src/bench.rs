//! Benchmark harness: grids over confounder cases, sample sizes, repetitions,
//! and methods, computes the estimation-bias metric against the generator's
//! ground truth, and emits CSV/JSON/SVG reports. Cells are independent jobs
//! keyed by derived seeds, so reports are bit-identical regardless of the
//! worker-pool size.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{average_estimates, estimate_effects, EffectEstimate};
use crate::model::{make_cmavae, make_dmavae, ModelConfig};
use crate::scm::{case_spec, sample_dataset, CaseId, Dataset, ScmSpec};
use crate::train::{train, TrainConfig};
use crate::util::derive_seed;
use crate::{baselines, scm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dmavae,
    Cmavae,
    Lsem,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dmavae => "dmavae",
            Method::Cmavae => "cmavae",
            Method::Lsem => "lsem",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dmavae" => Ok(Method::Dmavae),
            "cmavae" => Ok(Method::Cmavae),
            "lsem" => Ok(Method::Lsem),
            other => Err(Error::Argument(format!("unknown method {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Nde,
    NieR,
    Te,
}

impl Target {
    fn pick(self, est: &EffectEstimate) -> f64 {
        match self {
            Target::Nde => est.nde,
            Target::NieR => est.nie_r,
            Target::Te => est.te,
        }
    }

    fn pick_truth(self, truth: &scm::GroundTruthEffects) -> f64 {
        match self {
            Target::Nde => truth.nde,
            Target::NieR => truth.nie_r,
            Target::Te => truth.te,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Nde => "nde",
            Target::NieR => "nie_r",
            Target::Te => "te",
        })
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nde" => Ok(Target::Nde),
            "nie_r" => Ok(Target::NieR),
            "te" => Ok(Target::Te),
            other => Err(Error::Argument(format!("unknown target {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub base: ScmSpec,
    pub cases: Vec<CaseId>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub targets: Vec<Target>,
    pub seed: u64,
    pub train: TrainConfig,
    /// hidden widths for the variational models
    pub hidden: Vec<usize>,
    /// Monte-Carlo draws per record at estimation time
    pub n_samples: usize,
    /// independently trained models averaged per variational cell; the
    /// ensemble mean cancels most of the training-seed variance
    pub ensemble: usize,
    pub out_dir: Option<String>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            base: scm::default_spec(),
            cases: vec![CaseId::Full],
            sizes: vec![2000, 5000, 10000],
            reps: 10,
            methods: vec![Method::Dmavae, Method::Cmavae, Method::Lsem],
            targets: vec![Target::Nde, Target::NieR, Target::Te],
            seed: 0,
            train: TrainConfig::default(),
            hidden: vec![16, 16],
            n_samples: 100,
            ensemble: 5,
            out_dir: None,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.reps < 1 {
            return Err(Error::Spec("reps must be >= 1".into()));
        }
        if self.cases.is_empty()
            || self.sizes.is_empty()
            || self.methods.is_empty()
            || self.targets.is_empty()
        {
            return Err(Error::Spec(
                "cases, sizes, methods, and targets must be nonempty".into(),
            ));
        }
        if self.ensemble < 1 {
            return Err(Error::Spec("ensemble must be >= 1".into()));
        }
        if self.n_samples < 1 {
            return Err(Error::Spec("n_samples must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    /// bias_pct holds the relative-bias metric
    Ok,
    /// truth is zero; bias_pct holds the absolute error instead
    AbsError,
    /// the method failed on this cell; estimate and bias are absent
    Failed,
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellStatus::Ok => "ok",
            CellStatus::AbsError => "abs_error",
            CellStatus::Failed => "failed",
        })
    }
}

impl FromStr for CellStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(CellStatus::Ok),
            "abs_error" => Ok(CellStatus::AbsError),
            "failed" => Ok(CellStatus::Failed),
            other => Err(Error::Argument(format!("unknown cell status {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: Method,
    pub case: CaseId,
    pub n: usize,
    pub rep: usize,
    pub target: Target,
    pub estimate: Option<f64>,
    pub truth: f64,
    pub bias_pct: Option<f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub method: Method,
    pub case: CaseId,
    pub n: usize,
    pub target: Target,
    /// mean over the `count` ok cells; absent when none succeeded
    pub mean_bias_pct: Option<f64>,
    pub std_bias_pct: Option<f64>,
    /// effective count of ok cells; flagged when below `reps`
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub spec: BenchSpec,
    pub cells: Vec<CellRecord>,
    pub aggregates: Vec<AggregateRecord>,
}

/// |(estimate - truth) / truth| * 100. A zero truth leaves the relative
/// metric undefined.
pub fn estimation_bias(estimate: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::UndefinedMetric(
            "relative bias is undefined at truth = 0".into(),
        ));
    }
    Ok(((estimate - truth) / truth).abs() * 100.0)
}

/// Arithmetic mean and population standard deviation.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Aggregation("empty cell".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

fn case_code(case: CaseId) -> u64 {
    match case {
        CaseId::Full => 0,
        CaseId::Fig1b => 1,
        CaseId::Case1 => 2,
        CaseId::Case2 => 3,
        CaseId::Case3 => 4,
        CaseId::Case4 => 5,
        CaseId::Case5 => 6,
        CaseId::Case6 => 7,
    }
}

fn method_code(method: Method) -> u64 {
    match method {
        Method::Dmavae => 0,
        Method::Cmavae => 1,
        Method::Lsem => 2,
    }
}

/// Fits one method on one dataset and returns its effect estimate. Exposed
/// for the CLI, which runs single cells outside the grid.
pub fn fit_and_estimate(
    spec: &BenchSpec,
    method: Method,
    data: &Dataset,
    cell_seed: u64,
) -> Result<EffectEstimate> {
    match method {
        Method::Lsem => Ok(baselines::lsem_effects(&baselines::lsem_fit(data)?)),
        Method::Dmavae | Method::Cmavae => {
            let mc = method_code(method);
            let mut members = Vec::with_capacity(spec.ensemble);
            for s in 0..spec.ensemble as u64 {
                let cfg = ModelConfig {
                    d_x: data.d_x(),
                    m_kind: data.m_kind,
                    y_kind: data.y_kind,
                    hidden: spec.hidden.clone(),
                    seed: derive_seed(cell_seed, &[0x6D6F_6465, mc, s]),
                    ..ModelConfig::default()
                };
                let mut model = match method {
                    Method::Dmavae => make_dmavae(&cfg)?,
                    _ => make_cmavae(&cfg)?,
                };
                let tc = TrainConfig {
                    seed: derive_seed(cell_seed, &[0x7472_6169, mc, s]),
                    ..spec.train.clone()
                };
                train(&mut model, data, &tc)?;
                members.push(estimate_effects(
                    &model,
                    data,
                    spec.n_samples,
                    derive_seed(cell_seed, &[0xE57, mc, s]),
                )?);
            }
            average_estimates(&members)
        }
    }
}

fn run_cell(spec: &BenchSpec, case: CaseId, n: usize, rep: usize) -> Vec<CellRecord> {
    let cell_seed = derive_seed(spec.seed, &[case_code(case), n as u64, rep as u64]);
    let mut records = Vec::new();
    let prepared = case_spec(case, &spec.base).and_then(|cs| {
        let data = sample_dataset(&cs, n, derive_seed(cell_seed, &[0xDA7A]))?;
        let truth = data
            .truth
            .clone()
            .ok_or_else(|| Error::Spec("sampled dataset carries no truth".into()))?;
        Ok((data, truth))
    });
    let (data, truth) = match prepared {
        Ok(dt) => dt,
        Err(_) => {
            // the whole cell is unusable; mark every record failed
            for &method in &spec.methods {
                for &target in &spec.targets {
                    records.push(CellRecord {
                        method,
                        case,
                        n,
                        rep,
                        target,
                        estimate: None,
                        truth: f64::NAN,
                        bias_pct: None,
                        status: CellStatus::Failed,
                    });
                }
            }
            return records;
        }
    };
    for &method in &spec.methods {
        let est = fit_and_estimate(spec, method, &data, cell_seed);
        for &target in &spec.targets {
            let truth_v = target.pick_truth(&truth);
            let record = match &est {
                Ok(e) => {
                    let value = target.pick(e);
                    match estimation_bias(value, truth_v) {
                        Ok(b) => CellRecord {
                            method,
                            case,
                            n,
                            rep,
                            target,
                            estimate: Some(value),
                            truth: truth_v,
                            bias_pct: Some(b),
                            status: CellStatus::Ok,
                        },
                        Err(_) => CellRecord {
                            method,
                            case,
                            n,
                            rep,
                            target,
                            estimate: Some(value),
                            truth: truth_v,
                            bias_pct: Some((value - truth_v).abs()),
                            status: CellStatus::AbsError,
                        },
                    }
                }
                Err(_) => CellRecord {
                    method,
                    case,
                    n,
                    rep,
                    target,
                    estimate: None,
                    truth: truth_v,
                    bias_pct: None,
                    status: CellStatus::Failed,
                },
            };
            records.push(record);
        }
    }
    records
}

pub fn run_benchmark(spec: &BenchSpec) -> Result<BenchReport> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &case in &spec.cases {
        for &n in &spec.sizes {
            for rep in 0..spec.reps {
                jobs.push((case, n, rep));
            }
        }
    }
    // parallel map preserves job order, so assembly order is schedule-free
    let cells: Vec<CellRecord> = jobs
        .par_iter()
        .map(|&(case, n, rep)| run_cell(spec, case, n, rep))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let aggregates = aggregate_cells(spec, &cells);
    Ok(BenchReport {
        spec: spec.clone(),
        cells,
        aggregates,
    })
}

fn aggregate_cells(spec: &BenchSpec, cells: &[CellRecord]) -> Vec<AggregateRecord> {
    let mut out = Vec::new();
    for &method in &spec.methods {
        for &case in &spec.cases {
            for &n in &spec.sizes {
                for &target in &spec.targets {
                    let values: Vec<f64> = cells
                        .iter()
                        .filter(|c| {
                            c.method == method
                                && c.case == case
                                && c.n == n
                                && c.target == target
                                && c.status == CellStatus::Ok
                        })
                        .filter_map(|c| c.bias_pct)
                        .collect();
                    let (mean, std) = match aggregate(&values) {
                        Ok((m, s)) => (Some(m), Some(s)),
                        Err(_) => (None, None),
                    };
                    out.push(AggregateRecord {
                        method,
                        case,
                        n,
                        target,
                        mean_bias_pct: mean,
                        std_bias_pct: std,
                        count: values.len(),
                    });
                }
            }
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn parse_opt(s: &str, path: &Path, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("invalid float {s:?}"),
    })
}

pub fn emit_report(report: &BenchReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let cells_path = dir.join("cells.csv");
    let mut cells = String::from("method,case,n,rep,target,estimate,truth,bias_pct,status\n");
    for c in &report.cells {
        cells.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.method,
            c.case,
            c.n,
            c.rep,
            c.target,
            fmt_opt(c.estimate),
            c.truth,
            fmt_opt(c.bias_pct),
            c.status
        ));
    }
    fs::write(&cells_path, cells).map_err(|e| Error::io(cells_path.display().to_string(), e))?;

    let agg_path = dir.join("aggregates.csv");
    let mut aggs = String::from("method,case,n,target,mean_bias_pct,std_bias_pct,count\n");
    for a in &report.aggregates {
        aggs.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.method,
            a.case,
            a.n,
            a.target,
            fmt_opt(a.mean_bias_pct),
            fmt_opt(a.std_bias_pct),
            a.count
        ));
    }
    fs::write(&agg_path, aggs).map_err(|e| Error::io(agg_path.display().to_string(), e))?;

    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Aggregation(format!("report serialization failed: {e}")))?;
    fs::write(&json_path, json).map_err(|e| Error::io(json_path.display().to_string(), e))?;

    for &target in &report.spec.targets {
        if let Some(svg) = render_bias_chart(report, target) {
            let path = dir.join(format!("bias_{target}.svg"));
            fs::write(&path, svg).map_err(|e| Error::io(path.display().to_string(), e))?;
        }
    }
    Ok(())
}

pub fn parse_cells_csv(path: &Path) -> Result<Vec<CellRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "empty file".into(),
        })?
        .1;
    if header != "method,case,n,rep,target,estimate,truth,bias_pct,status" {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                msg: format!("expected 9 fields, found {}", f.len()),
            });
        }
        let parse_num = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                msg: format!("invalid {what} {s:?}"),
            })
        };
        out.push(CellRecord {
            method: f[0].parse()?,
            case: f[1].parse()?,
            n: parse_num(f[2], "n")?,
            rep: parse_num(f[3], "rep")?,
            target: f[4].parse()?,
            estimate: parse_opt(f[5], path, lineno)?,
            truth: f[6].parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                msg: format!("invalid truth {:?}", f[6]),
            })?,
            bias_pct: parse_opt(f[7], path, lineno)?,
            status: f[8].parse()?,
        });
    }
    Ok(out)
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One line chart per target: x = sample size, y = mean bias, one series per
/// (method, case), error bars at one population standard deviation. Returns
/// None when the report has nothing to plot.
fn render_bias_chart(report: &BenchReport, target: Target) -> Option<String> {
    let spec = &report.spec;
    let mut series: Vec<(String, Vec<(usize, f64, f64)>)> = Vec::new();
    for &method in &spec.methods {
        for &case in &spec.cases {
            let points: Vec<(usize, f64, f64)> = report
                .aggregates
                .iter()
                .filter(|a| a.method == method && a.case == case && a.target == target)
                .filter_map(|a| Some((a.n, a.mean_bias_pct?, a.std_bias_pct?)))
                .collect();
            if !points.is_empty() {
                let label = if spec.cases.len() > 1 {
                    format!("{method} {case}")
                } else {
                    method.to_string()
                };
                series.push((label, points));
            }
        }
    }
    if series.is_empty() {
        return None;
    }

    let xs: Vec<usize> = {
        let mut v: Vec<usize> = series
            .iter()
            .flat_map(|(_, p)| p.iter().map(|&(n, _, _)| n))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (x_min, x_max) = (*xs.first().unwrap() as f64, *xs.last().unwrap() as f64);
    let y_max = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|&(_, m, s)| m + s))
        .fold(1e-9_f64, f64::max);

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let plot_h = CHART_H - MARGIN_T - MARGIN_B;
    let sx = |n: f64| {
        if x_max > x_min {
            MARGIN_L + (n - x_min) / (x_max - x_min) * plot_w
        } else {
            MARGIN_L + plot_w / 2.0
        }
    };
    let sy = |b: f64| MARGIN_T + plot_h - (b / y_max) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_W}\" height=\"{CHART_H}\" \
         viewBox=\"0 0 {CHART_W} {CHART_H}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{CHART_W}\" height=\"{CHART_H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">mean estimation bias: {target}</text>\n",
        MARGIN_L + plot_w / 2.0
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h
    ));
    for &n in &xs {
        let x = sx(n as f64);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{n}</text>\n",
            MARGIN_T + plot_h + 20.0
        ));
    }
    for i in 0..=4 {
        let b = y_max * i as f64 / 4.0;
        let y = sy(b);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{b:.1}</text>\n",
            MARGIN_L - 10.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">sample size</text>\n",
        MARGIN_L + plot_w / 2.0,
        CHART_H - 15.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">bias (%)</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));
    for (si, (label, points)) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        let mut sorted = points.clone();
        sorted.sort_by_key(|&(n, _, _)| n);
        let path: Vec<String> = sorted
            .iter()
            .map(|&(n, m, _)| format!("{},{}", sx(n as f64), sy(m)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            path.join(" ")
        ));
        for &(n, m, s) in &sorted {
            let x = sx(n as f64);
            svg.push_str(&format!(
                "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"{color}\"/>\n",
                sy((m - s).max(0.0)),
                sy(m + s)
            ));
            svg.push_str(&format!(
                "<circle cx=\"{x}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                sy(m)
            ));
        }
        let ly = MARGIN_T + 15.0 + si as f64 * 18.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            MARGIN_L + plot_w + 10.0,
            MARGIN_L + plot_w + 30.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{label}</text>\n",
            MARGIN_L + plot_w + 35.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lsem_spec() -> BenchSpec {
        BenchSpec {
            cases: vec![CaseId::Full],
            sizes: vec![2000],
            reps: 2,
            methods: vec![Method::Lsem],
            ..BenchSpec::default()
        }
    }

    #[test]
    fn bias_arithmetic() {
        assert!((estimation_bias(1.1, 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(estimation_bias(0.73, 0.73).unwrap(), 0.0);
        assert!((estimation_bias(0.72, 0.8).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(
            estimation_bias(0.5, 0.0),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn aggregate_matches_hand_values() {
        let (m, s) = aggregate(&[10.0, 10.0, 10.0]).unwrap();
        assert_eq!((m, s), (10.0, 0.0));
        let (m, s) = aggregate(&[0.0, 20.0]).unwrap();
        assert_eq!((m, s), (10.0, 10.0));
        assert!(matches!(aggregate(&[]), Err(Error::Aggregation(_))));
    }

    #[test]
    fn aggregate_matches_streaming_oracle() {
        // compare against a two-pass Kahan-style reference on 30 draws
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
        let mean_ref = xs.iter().sum::<f64>() / 30.0;
        let var_ref = xs.iter().map(|x| (x - mean_ref).powi(2)).sum::<f64>() / 30.0;
        let (m, s) = aggregate(&xs).unwrap();
        assert!((m - mean_ref).abs() < 1e-12);
        assert!((s - var_ref.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lsem_grid_bookkeeping() {
        let report = run_benchmark(&lsem_spec()).unwrap();
        // 1 case x 1 size x 2 reps x 3 targets
        assert_eq!(report.cells.len(), 6);
        assert!(report.cells.iter().all(|c| c.status == CellStatus::Ok));
        assert!(report.cells.iter().all(|c| c.bias_pct.unwrap().is_finite()));
        assert_eq!(report.aggregates.len(), 3);
        assert!(report.aggregates.iter().all(|a| a.count == 2));
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let a = run_benchmark(&lsem_spec()).unwrap();
        let b = run_benchmark(&lsem_spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_stable_across_pool_sizes() {
        let spec = lsem_spec();
        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_benchmark(&spec).unwrap())
        };
        let one = run_with(1);
        let four = run_with(4);
        assert_eq!(one, four);
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&four).unwrap()
        );
    }

    #[test]
    fn cells_csv_roundtrip() {
        let report = run_benchmark(&lsem_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        let parsed = parse_cells_csv(&dir.path().join("cells.csv")).unwrap();
        assert_eq!(parsed, report.cells);
    }

    #[test]
    fn emit_writes_expected_files() {
        let report = run_benchmark(&lsem_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        for name in ["cells.csv", "aggregates.csv", "report.json"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        for t in ["nde", "nie_r", "te"] {
            let svg = fs::read_to_string(dir.path().join(format!("bias_{t}.svg"))).unwrap();
            assert!(svg.starts_with("<svg"));
            // one legend entry and one polyline per series
            assert_eq!(svg.matches("<polyline").count(), 1);
        }
    }

    #[test]
    fn empty_report_emits_headers_only() {
        let report = BenchReport {
            spec: lsem_spec(),
            cells: Vec::new(),
            aggregates: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        let cells = fs::read_to_string(dir.path().join("cells.csv")).unwrap();
        assert_eq!(cells.lines().count(), 1);
        assert!(!dir.path().join("bias_nde.svg").exists());
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = lsem_spec();
        spec.reps = 0;
        assert!(run_benchmark(&spec).is_err());
        let mut spec = lsem_spec();
        spec.methods.clear();
        assert!(run_benchmark(&spec).is_err());
    }

    #[test]
    fn json_report_roundtrips() {
        let report = run_benchmark(&lsem_spec()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
