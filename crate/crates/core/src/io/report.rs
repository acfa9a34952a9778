use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::load::DroppedRow;
use crate::gp::Hyperparams;
use crate::late::{LateResult, Scheme};
use crate::scalar::Z_975;
use crate::sims::{ConfoundingResult, PowerResult, WigglyTable};
use crate::testing::{PlaceboReport, TestMethod, TestResult};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_treated: usize,
    pub n_control: usize,
    pub rows_read: usize,
    pub dropped: Vec<DroppedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub log_likelihood: f64,
    pub initial_log_likelihood: f64,
    pub evaluations: usize,
    pub failed_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentinelRow {
    pub index: usize,
    pub arc_length: f64,
    pub x: f64,
    pub y: f64,
    pub mean: f64,
    pub sd: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl SentinelRow {
    pub fn new(index: usize, arc_length: f64, x: f64, y: f64, mean: f64, sd: f64) -> Self {
        Self { index, arc_length, x, y, mean, sd, lo95: mean - Z_975 * sd, hi95: mean + Z_975 * sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffSummary {
    pub sentinels: Vec<SentinelRow>,
    /// Row-major sentinel covariance, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateRow {
    pub scheme: Scheme,
    pub mean: f64,
    pub sd: f64,
    pub prob_positive: f64,
    /// Border points carrying weight.
    pub points: usize,
}

impl From<&LateResult<f64>> for LateRow {
    fn from(r: &LateResult<f64>) -> Self {
        Self { scheme: r.scheme, mean: r.mean, sd: r.sd(), prob_positive: r.prob_positive(), points: r.points.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub method: TestMethod,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_sd: Option<f64>,
}

impl From<&TestResult<f64>> for TestRow {
    fn from(r: &TestResult<f64>) -> Self {
        Self {
            method: r.method,
            statistic: r.statistic,
            p_value: r.p_value,
            draws: r.draws,
            null_mean: r.null.map(|n| n.mean),
            null_sd: r.null.map(|n| n.sd),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub provenance: Provenance,
    pub data: DataSummary,
    pub theta: Hyperparams<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    /// Covariate coefficients removed from the outcomes before the cliff fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cliff: Option<CliffSummary>,
    #[serde(default)]
    pub lates: Vec<LateRow>,
    #[serde(default)]
    pub tests: Vec<TestRow>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

pub fn write_sentinels_csv<W: Write>(w: W, rows: &[SentinelRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["index", "arc_length", "x", "y", "mean", "sd", "lo95", "hi95"])?;
    for r in rows {
        let mut rec = vec![r.index.to_string()];
        rec.extend([r.arc_length, r.x, r.y, r.mean, r.sd, r.lo95, r.hi95].map(fmt_float));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_lates_csv<W: Write>(w: W, rows: &[LateRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["scheme", "mean", "sd", "prob_positive", "points"])?;
    for r in rows {
        out.write_record([
            r.scheme.to_string(),
            fmt_float(r.mean),
            fmt_float(r.sd),
            fmt_float(r.prob_positive),
            r.points.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_tests_csv<W: Write>(w: W, rows: &[TestRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["method", "statistic", "p_value", "draws"])?;
    for r in rows {
        out.write_record([
            r.method.to_string(),
            fmt_float(r.statistic),
            fmt_float(r.p_value),
            r.draws.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per angle; failed angles have an empty p-value and the error.
pub fn write_placebo_csv<W: Write>(w: W, report: &PlaceboReport) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["angle", "p_value", "error"])?;
    for e in &report.entries {
        out.write_record([
            fmt_float(e.angle),
            e.p_value.map(fmt_float).unwrap_or_default(),
            e.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_wiggly_csv<W: Write>(w: W, table: &WigglyTable) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["scheme", "n_wiggles", "mean_estimate", "mean_sd", "estimand"])?;
    for r in &table.rows {
        out.write_record([
            r.scheme.to_string(),
            r.n_wiggles.to_string(),
            fmt_float(r.mean_estimate),
            fmt_float(r.mean_sd),
            fmt_float(r.estimand),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_confounding_csv<W: Write>(w: W, r: &ConfoundingResult) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["rdd_estimate", "rdd_limit", "geordd_inv_mean", "geordd_inv_sd", "n_treated", "n_control"])?;
    out.write_record([
        fmt_float(r.rdd_estimate),
        fmt_float(r.rdd_limit),
        fmt_float(r.geordd_inv_mean),
        fmt_float(r.geordd_inv_sd),
        r.n_treated.to_string(),
        r.n_control.to_string(),
    ])?;
    out.flush()?;
    Ok(())
}

pub fn write_power_csv<W: Write>(w: W, r: &PowerResult) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["method", "effect", "rejections", "n_sims", "rejection_rate"])?;
    for row in &r.rows {
        out.write_record([
            row.method.to_string(),
            fmt_float(r.config.effect),
            row.rejections.to_string(),
            r.config.n_sims.to_string(),
            fmt_float(row.rejection_rate),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar describing how a simulation table was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetadata {
    pub simulation: String,
    pub seed: u64,
    pub n_sims: usize,
    pub settings: serde_json::Value,
    pub version: String,
}

impl SimMetadata {
    pub fn new(simulation: &str, seed: u64, n_sims: usize, settings: &impl Serialize) -> Result<Self> {
        Ok(Self {
            simulation: simulation.into(),
            seed,
            n_sims,
            settings: serde_json::to_value(settings)?,
            version: env!("CARGO_PKG_VERSION").into(),
        })
    }
}

/// Writes `body` to `path`, or to stdout when `path` is `-`.
pub fn write_to(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if path.as_os_str() == "-" {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        body(&mut lock)
    } else {
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?,
        );
        body(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AnalysisReport {
        AnalysisReport {
            provenance: Provenance { config_hash: "ab".into(), seed: Some(3), version: "0.1.0".into() },
            data: DataSummary {
                n_treated: 2,
                n_control: 3,
                rows_read: 6,
                dropped: vec![DroppedRow { line: 4, reason: "missing outcome".into() }],
            },
            theta: Hyperparams::new(0.1 + 0.2, 1.0 / 3.0, 2f64.sqrt(), 20.0).unwrap(),
            fit: Some(FitSummary {
                log_likelihood: -12.345678901234567,
                initial_log_likelihood: -13.0,
                evaluations: 10,
                failed_starts: 0,
            }),
            beta: Some(vec![1e-300, -7.1e22]),
            cliff: Some(CliffSummary {
                sentinels: vec![SentinelRow::new(0, 0.5, 0.1, 0.7, -0.19, 0.06)],
                covariance: Some(vec![vec![0.0036]]),
            }),
            lates: vec![LateRow { scheme: Scheme::Inv, mean: -0.19, sd: 0.06, prob_positive: 7.7e-4, points: 1 }],
            tests: vec![TestRow {
                method: TestMethod::MllBootstrap,
                statistic: 3.25,
                p_value: 0.002,
                draws: Some(1000),
                null_mean: Some(0.1),
                null_sd: Some(std::f64::consts::PI),
            }],
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let r = sample();
        let back = AnalysisReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.theta.lengthscale.to_bits(), r.theta.lengthscale.to_bits());
    }

    #[test]
    fn sentinel_csv_layout() {
        let mut buf = Vec::new();
        write_sentinels_csv(&mut buf, &sample().cliff.unwrap().sentinels).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "index,arc_length,x,y,mean,sd,lo95,hi95");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[4], "-1.9000000000000000e-1");
        let lo: f64 = row[6].parse().unwrap();
        assert!((lo - (-0.19 - 1.959964 * 0.06)).abs() < 1e-6);
    }

    #[test]
    fn floats_carry_seventeen_digits() {
        let s = fmt_float(0.1);
        let digits = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(digits.len(), 17);
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }
}
