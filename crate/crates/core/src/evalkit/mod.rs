//! Delivery and capacity metrics over evaluation runs, plus the result CSVs.

mod csvout;

pub use csvout::{CsvOutError, write_histogram_csv, write_results_csv, write_summary_csv, HISTOGRAM_HEADER, RESULTS_HEADER, SUMMARY_HEADER};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no episodes recorded")]
    Empty,
    #[error("histogram bin must be positive")]
    ZeroBin,
    #[error("bin of {bin_ms} ms does not divide the {budget_ms} ms budget")]
    BinDoesNotDivide { bin_ms: u64, budget_ms: u64 },
    #[error("runs of {variant} at {payload_bytes} bytes have different configuration digests")]
    MixedDigest { variant: String, payload_bytes: u64 },
}

/// Raw outcome of evaluating one trained (or random) policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub variant: String,
    pub seed: u64,
    pub payload_bytes: u64,
    pub budget_ms: u64,
    /// Digest of everything but the seed; runs of one variant must agree.
    pub config_digest: String,
    /// Per episode, mean over steps of the summed V2I rate (bit/s).
    pub v2i_sum_bps: Vec<f64>,
    /// Per agent-episode delivery time in ms, `None` when the payload was lost.
    pub deliveries: Vec<Option<f64>>,
}

impl RunMetrics {
    pub fn lost_count(&self) -> usize {
        self.deliveries.iter().filter(|d| d.is_none()).count()
    }

    pub fn delivery_times(&self) -> Vec<f64> {
        self.deliveries.iter().flatten().copied().collect()
    }
}

/// Mean over episodes of the V2I sum rate, in Mbps.
pub fn v2i_sum_capacity(metrics: &RunMetrics) -> Result<f64, MetricsError> {
    if metrics.v2i_sum_bps.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(metrics.v2i_sum_bps.iter().sum::<f64>() / metrics.v2i_sum_bps.len() as f64 / 1e6)
}

/// Successful agent-episodes over all agent-episodes.
pub fn delivery_rate(metrics: &RunMetrics) -> Result<f64, MetricsError> {
    let total = metrics.deliveries.len();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(1.0 - metrics.lost_count() as f64 / total as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_ms: u64,
    /// Count of `[i * bin_ms, (i + 1) * bin_ms)`; the last bin holds
    /// deliveries that complete exactly at the budget.
    pub counts: Vec<usize>,
    pub lost: usize,
    pub median_ms: Option<f64>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.lost
    }

    pub fn bin_start_ms(&self, i: usize) -> u64 {
        i as u64 * self.bin_ms
    }
}

fn histogram_of(times: &[f64], lost: usize, budget_ms: u64, bin_ms: u64) -> Result<Histogram, MetricsError> {
    if bin_ms == 0 {
        return Err(MetricsError::ZeroBin);
    }
    if !budget_ms.is_multiple_of(bin_ms) {
        return Err(MetricsError::BinDoesNotDivide { bin_ms, budget_ms });
    }
    let n_bins = (budget_ms / bin_ms) as usize + 1;
    let mut counts = vec![0; n_bins];
    for &t in times {
        let i = ((t / bin_ms as f64).floor().max(0.0) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram { bin_ms, counts, lost, median_ms: median(times) })
}

pub fn delivery_time_histogram(metrics: &RunMetrics, bin_ms: u64) -> Result<Histogram, MetricsError> {
    histogram_of(&metrics.delivery_times(), metrics.lost_count(), metrics.budget_ms, bin_ms)
}

/// Histogram over the union of several runs' agent-episodes.
pub fn pooled_histogram(runs: &[&RunMetrics], bin_ms: u64) -> Result<Histogram, MetricsError> {
    let Some(first) = runs.first() else { return Err(MetricsError::Empty) };
    let times: Vec<f64> = runs.iter().flat_map(|r| r.delivery_times()).collect();
    let lost = runs.iter().map(|r| r.lost_count()).sum();
    histogram_of(&times, lost, first.budget_ms, bin_ms)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub sd: f64,
}

pub fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanSd { mean, sd }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub variant: String,
    pub payload_bytes: u64,
    pub runs: usize,
    pub single_run: bool,
    pub v2i_sum_mbps: MeanSd,
    pub delivery_rate: MeanSd,
}

/// Mean and sample deviation across runs, one row per (variant, payload) in
/// first-seen order.
pub fn compare_runs(runs: &[RunMetrics]) -> Result<Vec<ComparisonRow>, MetricsError> {
    let mut groups: Vec<((String, u64), Vec<&RunMetrics>)> = Vec::new();
    for r in runs {
        let key = (r.variant.clone(), r.payload_bytes);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((variant, payload_bytes), group)| {
            if group.iter().any(|r| r.config_digest != group[0].config_digest) {
                return Err(MetricsError::MixedDigest { variant, payload_bytes });
            }
            let caps = group.iter().map(|r| v2i_sum_capacity(r)).collect::<Result<Vec<_>, _>>()?;
            let rates = group.iter().map(|r| delivery_rate(r)).collect::<Result<Vec<_>, _>>()?;
            Ok(ComparisonRow {
                variant,
                payload_bytes,
                runs: group.len(),
                single_run: group.len() == 1,
                v2i_sum_mbps: mean_sd(&caps),
                delivery_rate: mean_sd(&rates),
            })
        })
        .collect()
}
