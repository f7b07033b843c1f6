//! Repeats the pipeline over values of one hyperparameter.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kgdata::KnowledgeGraph;
use crate::metrics::MetricsRow;
use crate::pipeline::{run, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Heads,
    Lambda,
    Dim,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Heads => "K",
            SweepParam::Lambda => "lambda",
            SweepParam::Dim => "dim",
        }
    }

    fn integral(self) -> bool {
        matches!(self, SweepParam::Heads | SweepParam::Dim)
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = base.clone();
        if self.integral() && !(value >= 1.0 && value.fract() == 0.0) {
            return Err(Error::Config(format!("{self} takes positive integers, got {value}")));
        }
        match self {
            SweepParam::Heads => cfg.train.heads = value as usize,
            SweepParam::Dim => cfg.train.dim = value as usize,
            SweepParam::Lambda => cfg.train.lambda = value,
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn format_value(self, value: f64) -> String {
        if self.integral() {
            format!("{}", value as u64)
        } else {
            format!("{value}")
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "k" | "heads" => Ok(SweepParam::Heads),
            "lambda" => Ok(SweepParam::Lambda),
            "d" | "dim" => Ok(SweepParam::Dim),
            _ => Err(Error::Config(format!("unknown sweep parameter `{s}` (expected K, lambda or dim)"))),
        }
    }
}

/// Parses `1,2,4`, a range `0.1..1.0` (step 0.1) or `a..b:step`.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse sweep values `{spec}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values = if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 0.1),
        };
        let lo = num(lo)?;
        if step.is_nan() || step <= 0.0 || hi < lo {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        // round to the step's precision so 0.1 + 0.2 prints as 0.3
        (0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

/// Runs `run_one` per value and collects one row each. A failing run is
/// logged and recorded as a row without metrics.
pub fn sweep_with<F>(dataset: &str, param: SweepParam, values: &[f64], base: &RunConfig, mut run_one: F) -> Result<Vec<MetricsRow>>
where
    F: FnMut(&RunConfig) -> Result<(crate::metrics::EvalReport, f64)>,
{
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let start = std::time::Instant::now();
        let outcome = param.apply(base, v).and_then(|cfg| run_one(&cfg));
        let (report, wall) = match outcome {
            Ok((r, wall)) => (Some(r), wall),
            Err(e) => {
                log::error!("{param} = {v}: {e}");
                (None, start.elapsed().as_secs_f64())
            }
        };
        rows.push(MetricsRow {
            dataset: dataset.to_owned(),
            param: param.as_str().to_owned(),
            value: param.format_value(v),
            report,
            seed: base.seed,
            wall_seconds: wall,
        });
    }
    Ok(rows)
}

/// Full pipeline per value on an already labeled graph.
pub fn sweep(dataset: &str, kg: &KnowledgeGraph, param: SweepParam, values: &[f64], base: &RunConfig) -> Result<Vec<MetricsRow>> {
    sweep_with(dataset, param, values, base, |cfg| {
        let out = run(kg, cfg)?;
        Ok((out.test, out.wall_seconds))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EvalReport;

    #[test]
    fn parses_lists_and_ranges() {
        assert_eq!(parse_values("1,2,4,8").unwrap(), vec![1.0, 2.0, 4.0, 8.0]);
        let l = parse_values("0.1..1.0").unwrap();
        assert_eq!(l.len(), 10);
        assert_eq!(l[2], 0.3);
        assert_eq!(l[9], 1.0);
        assert_eq!(parse_values("20..40:10").unwrap(), vec![20.0, 30.0, 40.0]);
        assert!(parse_values("").is_err());
        assert!(parse_values("1..0").is_err());
        assert!(parse_values("a,b").is_err());
    }

    #[test]
    fn parameter_names() {
        assert_eq!("K".parse::<SweepParam>().unwrap(), SweepParam::Heads);
        assert_eq!("dim".parse::<SweepParam>().unwrap(), SweepParam::Dim);
        assert!("beta".parse::<SweepParam>().is_err());
    }

    #[test]
    fn failures_become_rows_without_metrics() {
        let base = RunConfig::default();
        let rows = sweep_with("toy", SweepParam::Heads, &[1.0, 2.5, 4.0], &base, |cfg| {
            if cfg.train.heads == 4 {
                return Err(Error::Diverged { epoch: 1, detail: "test".into() });
            }
            Ok((EvalReport::from_counts(1, 1, 0, 0).unwrap(), 0.0))
        })
        .unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].report.is_some());
        assert!(rows[1].report.is_none());
        assert!(rows[2].report.is_none());
        assert_eq!(rows[0].value, "1");
        assert!(sweep_with("toy", SweepParam::Lambda, &[], &base, |_| unreachable!()).is_err());
    }

    #[test]
    fn apply_sets_the_field() {
        let base = RunConfig::default();
        assert_eq!(SweepParam::Lambda.apply(&base, 0.3).unwrap().train.lambda, 0.3);
        assert_eq!(SweepParam::Dim.apply(&base, 50.0).unwrap().train.dim, 50);
        assert!(SweepParam::Lambda.apply(&base, -1.0).is_err());
    }
}
