//! Result records and deterministic emission (metrics.csv, summary.json).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub run_id: String,
    pub seed: u64,
    pub time_s: f64,
    pub metric: String,
    pub value: f64,
}

impl ResultRecord {
    pub fn new(run_id: &str, seed: u64, time_s: f64, metric: &str, value: f64) -> Self {
        Self { run_id: run_id.to_string(), seed, time_s, metric: metric.to_string(), value }
    }
}

/// Aggregate of one (metric, time) cell across repetitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub time_s: f64,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean/std per (metric, time) over all records.
pub fn aggregate(records: &[ResultRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.metric.clone(), r.time_s.to_bits()))
            .or_default()
            .push(r.value);
    }
    let mut out: Vec<Aggregate> = groups
        .into_iter()
        .map(|((metric, time_bits), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            Aggregate { metric, time_s: f64::from_bits(time_bits), n, mean, std: var.sqrt() }
        })
        .collect();
    out.sort_by(|a, b| {
        a.metric
            .cmp(&b.metric)
            .then(a.time_s.partial_cmp(&b.time_s).unwrap_or(std::cmp::Ordering::Equal))
    });
    out
}

/// Stable ordering for emission; makes output independent of worker count.
pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| {
        a.run_id
            .cmp(&b.run_id)
            .then(a.seed.cmp(&b.seed))
            .then(a.time_s.partial_cmp(&b.time_s).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.metric.cmp(&b.metric))
    });
}

pub fn write_metrics_csv(records: &[ResultRecord], path: &Path) -> Result<(), SimError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "run_id,seed,time_s,metric,value")?;
    for r in records {
        writeln!(f, "{},{},{},{},{}", r.run_id, r.seed, r.time_s, r.metric, r.value)?;
    }
    Ok(())
}

pub fn write_summary_json(records: &[ResultRecord], path: &Path) -> Result<(), SimError> {
    let aggregates = aggregate(records);
    debug_assert!(aggregates_consistent(records, &aggregates));
    let doc = serde_json::json!({ "aggregates": aggregates });
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap() + "\n")?;
    Ok(())
}

/// Every aggregate must equal the recomputed mean/std of its records.
pub fn aggregates_consistent(records: &[ResultRecord], aggregates: &[Aggregate]) -> bool {
    for agg in aggregates {
        let values: Vec<f64> = records
            .iter()
            .filter(|r| r.metric == agg.metric && r.time_s.to_bits() == agg.time_s.to_bits())
            .map(|r| r.value)
            .collect();
        if values.len() != agg.n {
            return false;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        if (mean - agg.mean).abs() > 1e-12 || (var.sqrt() - agg.std).abs() > 1e-12 {
            return false;
        }
    }
    true
}
