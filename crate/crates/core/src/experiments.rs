//! Monte-Carlo sweeps over transmit power, user-cluster location and RIS
//! size, with CSV output.
//!
//! Every `(value, seed)` cell draws one channel realization that all methods
//! share. The channel seed depends only on the run seed, so neighbouring
//! sweep values reuse the same fading draws.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, MethodId};
use crate::error::{Error, Result};
use crate::orchestrator::SolveOptions;
use crate::scenario::{generate_channels, Position, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// `p_max` in dBm.
    Power,
    /// x-coordinate `D_u` of the user-cluster center, metres.
    UserLocation,
    /// Number of RIS elements `M`.
    RisElements,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub methods: Vec<MethodId>,
    pub num_seeds: usize,
    #[serde(default)]
    pub first_seed: u64,
    #[serde(default)]
    pub options: SolveOptions,
    pub base_config: ScenarioConfig,
}

impl SweepSpec {
    /// Default grid for `kind`: 0–30 dBm in 5 dB steps, `D_u` 0–120 m in
    /// 20 m steps, or `M` 20–100 in steps of 20; 50 seeds.
    pub fn default_for(kind: SweepKind) -> Self {
        let (values, methods): (Vec<f64>, Vec<MethodId>) = match kind {
            SweepKind::Power => ((0..=6).map(|i| 5.0 * i as f64).collect(), MethodId::ALL.to_vec()),
            SweepKind::UserLocation => ((0..=6).map(|i| 20.0 * i as f64).collect(), MethodId::ALL.to_vec()),
            SweepKind::RisElements => (
                (1..=5).map(|i| 20.0 * i as f64).collect(),
                vec![MethodId::PdWithRis, MethodId::CentralizedWithRis, MethodId::PdRandomRis, MethodId::PdNoRis],
            ),
        };
        Self {
            kind,
            values,
            methods,
            num_seeds: 50,
            first_seed: 0,
            options: SolveOptions::default(),
            base_config: ScenarioConfig::default(),
        }
    }

    /// Parses a TOML spec; `base_config` accepts the same keys as a scenario file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let base = match table.remove("base_config") {
            Some(toml::Value::Table(t)) => ScenarioConfig::from_toml_table(t)?,
            Some(_) => return Err(Error::Parse("base_config must be a table".into())),
            None => ScenarioConfig::default(),
        };
        table.insert("base_config".into(), toml::Value::try_from(&base).map_err(|e| Error::Parse(format!("{e}")))?);
        let spec: SweepSpec = table.try_into().map_err(|e: toml::de::Error| Error::Parse(format!("{e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("sweep spec is always representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.methods.is_empty() || self.num_seeds == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one value, method and seed".into()));
        }
        for &v in &self.values {
            self.cell_config(v)?;
        }
        Ok(())
    }

    /// Scenario used for one sweep value.
    pub fn cell_config(&self, value: f64) -> Result<ScenarioConfig> {
        let mut config = self.base_config.clone();
        match self.kind {
            SweepKind::Power => config.p_max_dbm = value,
            SweepKind::UserLocation => config.user_circle_center = Position::new(value, 0.0),
            SweepKind::RisElements => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidConfig(format!("RIS size must be a positive integer, got {value}")));
                }
                config.ris_elements = value as usize;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

/// One `(value, method, seed)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub method: MethodId,
    pub seed: u64,
    /// NaN when the cell failed.
    pub sum_rate_bps_hz: f64,
    pub iterations: usize,
    pub signaling_symbols_paper: u64,
    pub signaling_symbols_actual: u64,
    pub error: Option<String>,
}

/// Mean and standard error of the successful rows of one `(value, method)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sweep_value: f64,
    pub method: MethodId,
    pub count: usize,
    pub mean: Summary,
    pub stderr: Summary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sum_rate_bps_hz: f64,
    pub iterations: f64,
    pub signaling_symbols_paper: f64,
    pub signaling_symbols_actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    /// Ordered by value, then method (spec order), then seed.
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Sample mean and standard error of the mean (0 for fewer than two samples).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    pub fn rows_for(&self, value: f64, method: MethodId) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.sweep_value == value && r.method == method)
    }

    pub fn aggregate(&self, value: f64, method: MethodId) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.sweep_value == value && a.method == method)
    }

    /// Mean and standard error of `rate(a) - rate(b)` over seeds where both succeeded.
    pub fn paired_difference(&self, value: f64, a: MethodId, b: MethodId) -> (f64, f64) {
        let diffs: Vec<f64> = self
            .rows_for(value, a)
            .filter(|r| r.error.is_none())
            .filter_map(|ra| {
                self.rows_for(value, b)
                    .find(|rb| rb.seed == ra.seed && rb.error.is_none())
                    .map(|rb| ra.sum_rate_bps_hz - rb.sum_rate_bps_hz)
            })
            .collect();
        mean_stderr(&diffs)
    }

    fn compute_aggregates(kind: SweepKind, rows: Vec<SweepRow>, values: &[f64], methods: &[MethodId]) -> Self {
        let mut aggregates = Vec::new();
        for &v in values {
            for &m in methods {
                let ok: Vec<&SweepRow> =
                    rows.iter().filter(|r| r.sweep_value == v && r.method == m && r.error.is_none()).collect();
                let stat = |f: &dyn Fn(&SweepRow) -> f64| mean_stderr(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
                let (r_m, r_s) = stat(&|r| r.sum_rate_bps_hz);
                let (i_m, i_s) = stat(&|r| r.iterations as f64);
                let (p_m, p_s) = stat(&|r| r.signaling_symbols_paper as f64);
                let (a_m, a_s) = stat(&|r| r.signaling_symbols_actual as f64);
                aggregates.push(Aggregate {
                    sweep_value: v,
                    method: m,
                    count: ok.len(),
                    mean: Summary {
                        sum_rate_bps_hz: r_m,
                        iterations: i_m,
                        signaling_symbols_paper: p_m,
                        signaling_symbols_actual: a_m,
                    },
                    stderr: Summary {
                        sum_rate_bps_hz: r_s,
                        iterations: i_s,
                        signaling_symbols_paper: p_s,
                        signaling_symbols_actual: a_s,
                    },
                });
            }
        }
        Self { kind, rows, aggregates }
    }
}

fn run_cell(spec: &SweepSpec, value: f64, seed: u64) -> Vec<SweepRow> {
    let failed = |method, msg: String| SweepRow {
        sweep_value: value,
        method,
        seed,
        sum_rate_bps_hz: f64::NAN,
        iterations: 0,
        signaling_symbols_paper: 0,
        signaling_symbols_actual: 0,
        error: Some(msg),
    };
    let setup = spec.cell_config(value).and_then(|c| generate_channels(&c, seed).map(|ch| (c, ch)));
    let (config, ch) = match setup {
        Ok(x) => x,
        Err(e) => return spec.methods.iter().map(|&m| failed(m, e.to_string())).collect(),
    };
    spec.methods
        .iter()
        .map(|&method| match run_baseline(method, &config, &ch, &spec.options) {
            Ok((_, report)) => SweepRow {
                sweep_value: value,
                method,
                seed,
                sum_rate_bps_hz: report.final_sum_rate(),
                iterations: report.iterations,
                signaling_symbols_paper: report.ledger.paper_total(),
                signaling_symbols_actual: report.ledger.actual_total(),
                error: None,
            },
            Err(e) => failed(method, e.to_string()),
        })
        .collect()
}

/// Runs the sweep on the global worker pool.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    sweep_with_workers(spec, None)
}

/// Runs the sweep with `workers` threads (`None`: global pool, `Some(1)`:
/// sequential). Output is identical for every pool size.
pub fn sweep_with_workers(spec: &SweepSpec, workers: Option<usize>) -> Result<SweepResult> {
    spec.validate()?;
    let jobs: Vec<(f64, u64)> =
        spec.values.iter().flat_map(|&v| (0..spec.num_seeds as u64).map(move |s| (v, spec.first_seed + s))).collect();
    let cells = run_jobs(spec, &jobs, workers)?;

    // reorder to (value, method, seed)
    let mut rows = Vec::with_capacity(jobs.len() * spec.methods.len());
    for vi in 0..spec.values.len() {
        let block = &cells[vi * spec.num_seeds..(vi + 1) * spec.num_seeds];
        for mi in 0..spec.methods.len() {
            rows.extend(block.iter().map(|cell| cell[mi].clone()));
        }
    }
    Ok(SweepResult::compute_aggregates(spec.kind, rows, &spec.values, &spec.methods))
}

#[cfg(feature = "parallel")]
fn run_jobs(spec: &SweepSpec, jobs: &[(f64, u64)], workers: Option<usize>) -> Result<Vec<Vec<SweepRow>>> {
    use rayon::prelude::*;
    let work = || jobs.par_iter().map(|&(v, s)| run_cell(spec, v, s)).collect();
    match workers {
        Some(1) => Ok(jobs.iter().map(|&(v, s)| run_cell(spec, v, s)).collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_jobs(spec: &SweepSpec, jobs: &[(f64, u64)], _workers: Option<usize>) -> Result<Vec<Vec<SweepRow>>> {
    Ok(jobs.iter().map(|&(v, s)| run_cell(spec, v, s)).collect())
}

pub const CSV_HEADER: [&str; 7] = [
    "sweep_value",
    "method",
    "seed",
    "sum_rate_bps_hz",
    "iterations",
    "signaling_symbols_paper",
    "signaling_symbols_actual",
];

/// One parsed CSV line. Aggregate lines carry `mean` / `stderr` in the seed column.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub sweep_value: f64,
    pub method: MethodId,
    pub seed: String,
    pub sum_rate_bps_hz: f64,
    pub iterations: f64,
    pub signaling_symbols_paper: f64,
    pub signaling_symbols_actual: f64,
}

/// Writes raw rows, then one `mean` and one `stderr` line per `(value, method)`.
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_csv<W: Write>(result: &SweepResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.sweep_value.to_string(),
            r.method.to_string(),
            r.seed.to_string(),
            r.sum_rate_bps_hz.to_string(),
            r.iterations.to_string(),
            r.signaling_symbols_paper.to_string(),
            r.signaling_symbols_actual.to_string(),
        ])?;
    }
    for a in &result.aggregates {
        for (label, s) in [("mean", &a.mean), ("stderr", &a.stderr)] {
            w.write_record([
                a.sweep_value.to_string(),
                a.method.to_string(),
                label.to_string(),
                s.sum_rate_bps_hz.to_string(),
                s.iterations.to_string(),
                s.signaling_symbols_paper.to_string(),
                s.signaling_symbols_actual.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    write_csv(result, std::fs::File::create(path)?)
}

pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<CsvRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    if rd.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Parse("unexpected CSV header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
    rd.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != CSV_HEADER.len() {
                return Err(Error::Parse(format!("expected 7 fields, got {}", rec.len())));
            }
            Ok(CsvRecord {
                sweep_value: num(&rec[0])?,
                method: rec[1].parse()?,
                seed: rec[2].to_string(),
                sum_rate_bps_hz: num(&rec[3])?,
                iterations: num(&rec[4])?,
                signaling_symbols_paper: num(&rec[5])?,
                signaling_symbols_actual: num(&rec[6])?,
            })
        })
        .collect()
}
