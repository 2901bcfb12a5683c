//! UCI Adult ingestion for the discrimination audit: sex becomes the
//! treatment (Female = 1), occupation the categorical mediator, income the
//! binary outcome (1 = ">50K"), and every other attribute a proxy. Numeric
//! proxies are standardized, categorical proxies one-hot encoded, and rows
//! with a "?" marker are dropped.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scm::{Dataset, VarKind};

const COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

const NUMERIC: [&str; 6] = [
    "age",
    "fnlwgt",
    "education-num",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
];

fn is_numeric(col: &str) -> bool {
    NUMERIC.contains(&col)
}

/// Persisted encoding tables; every mapping is bijective so audit outputs can
/// be traced back to source categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdultMapping {
    /// occupation level -> mediator code (index in this list)
    pub occupation_levels: Vec<String>,
    /// per-proxy-column encodings, in proxy order
    pub proxies: Vec<ProxyEncoding>,
    pub n_kept: usize,
    pub n_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProxyEncoding {
    /// standardized numeric column
    Numeric { column: String, mean: f64, std: f64 },
    /// one-hot block, one indicator per level
    OneHot { column: String, levels: Vec<String> },
}

impl ProxyEncoding {
    pub fn width(&self) -> usize {
        match self {
            ProxyEncoding::Numeric { .. } => 1,
            ProxyEncoding::OneHot { levels, .. } => levels.len(),
        }
    }
}

impl AdultMapping {
    pub fn proxy_width(&self) -> usize {
        self.proxies.iter().map(|p| p.width()).sum()
    }

    pub fn occupation_code(&self, level: &str) -> Option<usize> {
        self.occupation_levels.iter().position(|l| l == level)
    }

    pub fn occupation_level(&self, code: usize) -> Option<&str> {
        self.occupation_levels.get(code).map(String::as_str)
    }
}

pub fn write_mapping(path: &Path, mapping: &AdultMapping) -> Result<()> {
    let json = serde_json::to_string_pretty(mapping)
        .map_err(|e| Error::Ingestion(format!("mapping serialization failed: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

struct RawTable {
    /// column-major string values
    columns: Vec<Vec<String>>,
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().peekable();
    // adult.data ships without a header; a header line is accepted too
    let first = *lines
        .peek()
        .ok_or_else(|| Error::Ingestion("empty file".into()))?;
    let has_header = first
        .split(',')
        .next()
        .map(|f| f.trim() == "age")
        .unwrap_or(false);
    if has_header {
        let names: Vec<String> = first.split(',').map(|f| f.trim().to_string()).collect();
        if names.len() != COLUMNS.len() {
            return Err(Error::Ingestion(format!(
                "expected {} columns, header has {}",
                COLUMNS.len(),
                names.len()
            )));
        }
        for (got, want) in names.iter().zip(COLUMNS) {
            if got != want {
                return Err(Error::Ingestion(format!(
                    "unknown column {got:?} (expected {want:?})"
                )));
            }
        }
        lines.next();
    }
    let mut columns = vec![Vec::new(); COLUMNS.len()];
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != COLUMNS.len() {
            return Err(Error::Ingestion(format!(
                "expected {} fields, found {} in row {line:?}",
                COLUMNS.len(),
                fields.len()
            )));
        }
        // income values end with an optional '.' in adult.test
        for (col, f) in columns.iter_mut().zip(fields) {
            col.push(f.trim_end_matches('.').to_string());
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Ingestion("no data rows".into()));
    }
    Ok(RawTable { columns })
}

fn sorted_levels(values: &[String], keep: &[bool]) -> Vec<String> {
    let mut levels: Vec<String> = Vec::new();
    for (v, &k) in values.iter().zip(keep) {
        if k && !levels.contains(v) {
            levels.push(v.clone());
        }
    }
    levels.sort();
    levels
}

pub fn ingest_adult(path: &Path) -> Result<(Dataset, AdultMapping)> {
    let raw = read_raw(path)?;
    let col = |name: &str| -> &Vec<String> {
        &raw.columns[COLUMNS.iter().position(|c| *c == name).unwrap()]
    };

    let n_raw = raw.columns[0].len();
    let keep: Vec<bool> = (0..n_raw)
        .map(|i| raw.columns.iter().all(|c| c[i] != "?"))
        .collect();
    let n = keep.iter().filter(|&&k| k).count();
    if n == 0 {
        return Err(Error::Ingestion(
            "every row carries a missing marker".into(),
        ));
    }

    for (name, values) in COLUMNS.iter().zip(&raw.columns) {
        if values.iter().all(|v| v == "?") {
            return Err(Error::Ingestion(format!(
                "column {name} is entirely missing"
            )));
        }
    }

    // treatment, mediator, outcome
    let mut t = Vec::with_capacity(n);
    for (v, &k) in col("sex").iter().zip(&keep) {
        if !k {
            continue;
        }
        t.push(match v.as_str() {
            "Female" => 1.0,
            "Male" => 0.0,
            other => return Err(Error::Ingestion(format!("unexpected sex value {other:?}"))),
        });
    }
    let occupation_levels = sorted_levels(col("occupation"), &keep);
    if occupation_levels.len() < 2 {
        return Err(Error::Ingestion(
            "occupation needs at least two levels".into(),
        ));
    }
    let mut m = Vec::with_capacity(n);
    for (v, &k) in col("occupation").iter().zip(&keep) {
        if !k {
            continue;
        }
        let code = occupation_levels.iter().position(|l| l == v).unwrap();
        m.push(code as f64);
    }
    let mut y = Vec::with_capacity(n);
    for (v, &k) in col("income").iter().zip(&keep) {
        if !k {
            continue;
        }
        y.push(match v.as_str() {
            ">50K" => 1.0,
            "<=50K" => 0.0,
            other => {
                return Err(Error::Ingestion(format!(
                    "unexpected income value {other:?}"
                )))
            }
        });
    }

    // proxies: every remaining column, in source order
    let mut proxies = Vec::new();
    for name in COLUMNS {
        if matches!(name, "sex" | "occupation" | "income") {
            continue;
        }
        let values = col(name);
        if is_numeric(name) {
            let mut parsed = Vec::with_capacity(n);
            for (v, &k) in values.iter().zip(&keep) {
                if !k {
                    continue;
                }
                let x: f64 = v.parse().map_err(|_| {
                    Error::Ingestion(format!("column {name}: invalid number {v:?}"))
                })?;
                parsed.push(x);
            }
            let mean = parsed.iter().sum::<f64>() / n as f64;
            let var = parsed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt().max(1e-12);
            proxies.push(ProxyEncoding::Numeric {
                column: name.to_string(),
                mean,
                std,
            });
        } else {
            proxies.push(ProxyEncoding::OneHot {
                column: name.to_string(),
                levels: sorted_levels(values, &keep),
            });
        }
    }

    let mapping = AdultMapping {
        occupation_levels,
        proxies,
        n_kept: n,
        n_dropped: n_raw - n,
    };

    let d_x = mapping.proxy_width();
    let mut x = Matrix::zeros(n, d_x);
    let mut row = 0usize;
    for i in 0..n_raw {
        if !keep[i] {
            continue;
        }
        let mut off = 0usize;
        for enc in &mapping.proxies {
            match enc {
                ProxyEncoding::Numeric { column, mean, std } => {
                    let v: f64 = col(column)[i].parse().unwrap();
                    x.set(row, off, (v - mean) / std);
                    off += 1;
                }
                ProxyEncoding::OneHot { column, levels } => {
                    let v = &col(column)[i];
                    let k = levels.iter().position(|l| l == v).ok_or_else(|| {
                        Error::Ingestion(format!("column {column}: unseen level {v:?}"))
                    })?;
                    x.set(row, off + k, 1.0);
                    off += levels.len();
                }
            }
        }
        row += 1;
    }

    let data = Dataset {
        t,
        m,
        y,
        x,
        m_kind: VarKind::Categorical(mapping.occupation_levels.len()),
        y_kind: VarKind::Binary,
        truth: None,
        seed: 0,
    };
    data.validate()?;
    Ok((data, mapping))
}
