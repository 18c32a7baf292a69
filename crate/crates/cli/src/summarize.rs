use std::path::Path;

use serde::{Deserialize, Serialize};

use lqgvtr_core::stats::{log_log_slope, mean_se, median, LineFit};
use lqgvtr_core::vtr::learner::TraceRow;
use lqgvtr_core::Error;

use crate::error::CliError;

pub const TRACE_HEADER: [&str; 6] = ["step", "cost", "cumulative_regret", "episode", "score", "halted"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub horizon: usize,
    pub final_regret: f64,
    pub episodes: usize,
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonAggregate {
    pub horizon: usize,
    pub runs: usize,
    pub median_regret: f64,
    pub mean_regret: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub per_horizon: Vec<HorizonAggregate>,
    /// Log-log fit of median final regret against `H`.
    pub slope: Option<LineFit>,
    /// 95% interval on the slope.
    pub slope_interval: Option<(f64, f64)>,
    /// Why the slope is missing, when it is.
    pub flag: Option<String>,
}

/// Reads one trace, checking the header against the fixed schema.
pub fn read_trace(path: &Path) -> Result<TraceSummary, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(Error::SchemaMismatch(format!("{}: header {:?}", path.display(), header)).into());
    }
    let mut last: Option<TraceRow> = None;
    for row in rdr.deserialize() {
        last = Some(row?);
    }
    let last = last.ok_or_else(|| Error::SchemaMismatch(format!("{}: no rows", path.display())))?;
    Ok(TraceSummary {
        horizon: last.step,
        final_regret: last.cumulative_regret,
        episodes: last.episode,
        halted: last.halted,
    })
}

pub fn summarize_traces(traces: &[TraceSummary]) -> Summary {
    let mut horizons: Vec<usize> = traces.iter().map(|t| t.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let per_horizon: Vec<HorizonAggregate> = horizons
        .iter()
        .map(|&h| {
            let vals: Vec<f64> = traces.iter().filter(|t| t.horizon == h).map(|t| t.final_regret).collect();
            let est = mean_se(&vals);
            HorizonAggregate {
                horizon: h,
                runs: vals.len(),
                median_regret: median(&vals),
                mean_regret: est.mean,
                std_error: est.std_error,
            }
        })
        .collect();
    let xs: Vec<f64> = per_horizon.iter().map(|a| a.horizon as f64).collect();
    let ys: Vec<f64> = per_horizon.iter().map(|a| a.median_regret).collect();
    let (slope, flag) = if per_horizon.len() < 2 {
        (None, Some("fewer than two distinct horizons".to_string()))
    } else if ys.iter().any(|&y| !(y > 0.0)) {
        (None, Some("non-positive median regret".to_string()))
    } else {
        (log_log_slope(&xs, &ys), None)
    };
    Summary {
        slope_interval: slope.map(|s| s.slope_interval()),
        per_horizon,
        slope,
        flag,
    }
}

pub fn summarize(paths: &[impl AsRef<Path>]) -> Result<Summary, CliError> {
    let traces = paths.iter().map(|p| read_trace(p.as_ref())).collect::<Result<Vec<_>, _>>()?;
    Ok(summarize_traces(&traces))
}
