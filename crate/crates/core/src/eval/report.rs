//! Report documents and their CSV/JSON serialization.

use std::io::Write;

use serde::{Serialize, Serializer};

use super::metrics::{empirical_cdf, to_db};
use super::scenario::ScenarioConfig;
use super::sweep::{CdfStudy, Design, SweepResult};
use crate::Result;

/// dB value that serializes `-inf` as the string `"-inf"` since JSON has no
/// infinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Db(pub f64);

impl Db {
    pub fn from_linear(x: f64) -> Self {
        Db(to_db(x))
    }
}

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_str(&self.0.to_string())
        }
    }
}

/// `printf("%.9g")`: 9 significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-4, 1e9)`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Provenance attached to every report.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ScenarioConfig,
}

impl Metadata {
    pub fn new(command: &str, config: &ScenarioConfig) -> Self {
        Self {
            command: command.into(),
            seed: config.seed,
            config_hash: config.fingerprint(),
            config: config.clone(),
        }
    }
}

/// Sweep CSV: `design,frequency_hz,gain_db`.
pub fn write_sweep_csv<W: Write>(out: W, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["design", "frequency_hz", "gain_db"])?;
    for row in &sweep.rows {
        w.write_record([
            row.design.name().to_string(),
            fmt_sig9(row.frequency_hz),
            fmt_sig9(to_db(row.gain)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRowReport {
    pub design: Design,
    pub frequency_hz: f64,
    pub gain_db: Db,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummaryReport {
    pub design: Design,
    pub stationary_gain_db: Db,
    pub worst_case_gain_db: Db,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub metadata: Metadata,
    /// 1-based.
    pub user: usize,
    /// Values at the carrier frequency.
    pub designs: Vec<SweepSummaryReport>,
    pub rows: Vec<SweepRowReport>,
}

impl SweepReport {
    pub fn new(metadata: Metadata, sweep: &SweepResult) -> Self {
        Self {
            metadata,
            user: sweep.user + 1,
            designs: sweep
                .summaries
                .iter()
                .map(|s| SweepSummaryReport {
                    design: s.design,
                    stationary_gain_db: Db::from_linear(s.stationary_gain),
                    worst_case_gain_db: Db::from_linear(s.worst_case_gain),
                })
                .collect(),
            rows: sweep
                .rows
                .iter()
                .map(|r| SweepRowReport {
                    design: r.design,
                    frequency_hz: r.frequency_hz,
                    gain_db: Db::from_linear(r.gain),
                })
                .collect(),
        }
    }
}

/// One CDF point.
#[derive(Debug, Clone, Serialize)]
pub struct CdfPoint {
    pub user: usize,
    pub value_db: Db,
    pub cdf_prob: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignCdf {
    pub design: Design,
    pub metric: &'static str,
    pub num_samples: usize,
    pub zf_infeasible: usize,
    pub median_db: Db,
    pub points: Vec<CdfPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CdfReport {
    pub metadata: Metadata,
    pub num_trials: usize,
    pub frequencies_hz: Vec<f64>,
    pub designs: Vec<DesignCdf>,
}

impl CdfReport {
    /// Sorts each design's samples (ties keep trial order) into a CDF.
    pub fn new(metadata: Metadata, study: &CdfStudy) -> Result<Self> {
        let designs = study
            .designs
            .iter()
            .map(|d| {
                let mut tagged: Vec<(f64, usize)> = d
                    .samples
                    .iter()
                    .map(|s| (to_db(s.value), s.user))
                    .collect();
                tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
                let values: Vec<f64> = tagged.iter().map(|t| t.0).collect();
                let median = if values.iter().any(|v| v.is_finite()) {
                    empirical_cdf(&values)?.median()
                } else {
                    f64::NEG_INFINITY
                };
                let n = tagged.len() as f64;
                Ok(DesignCdf {
                    design: d.design,
                    metric: study.metric.name(),
                    num_samples: tagged.len(),
                    zf_infeasible: d.zf_infeasible,
                    median_db: Db(median),
                    points: tagged
                        .into_iter()
                        .enumerate()
                        .map(|(i, (v, user))| CdfPoint {
                            user,
                            value_db: Db(v),
                            cdf_prob: (i + 1) as f64 / n,
                        })
                        .collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            metadata,
            num_trials: study.num_trials,
            frequencies_hz: study.frequencies.clone(),
            designs,
        })
    }

    /// CDF CSV: `design,user,metric,value_db,cdf_prob`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["design", "user", "metric", "value_db", "cdf_prob"])?;
        for d in &self.designs {
            for p in &d.points {
                w.write_record([
                    d.design.name().to_string(),
                    p.user.to_string(),
                    d.metric.to_string(),
                    fmt_sig9(p.value_db.0),
                    fmt_sig9(p.cdf_prob),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
