use std::io::Write;

use super::{compare_runs, delivery_rate, delivery_time_histogram, pooled_histogram, v2i_sum_capacity, MetricsError, RunMetrics};

pub const RESULTS_HEADER: [&str; 7] = [
    "variant",
    "seed",
    "payload_bytes",
    "v2i_sum_mbps",
    "v2v_delivery_rate",
    "median_delivery_ms",
    "lost_count",
];
pub const HISTOGRAM_HEADER: [&str; 3] = ["variant", "bin_start_ms", "count"];
pub const SUMMARY_HEADER: [&str; 8] = [
    "variant",
    "payload_bytes",
    "runs",
    "v2i_sum_mbps_mean",
    "v2i_sum_mbps_sd",
    "v2v_delivery_rate_mean",
    "v2v_delivery_rate_sd",
    "single_run",
];

#[derive(Debug, thiserror::Error)]
pub enum CsvOutError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per run.
pub fn write_results_csv<W: Write>(w: W, runs: &[RunMetrics]) -> Result<(), CsvOutError> {
    let mut out = writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in runs {
        let median = super::median(&r.delivery_times());
        out.write_record([
            r.variant.clone(),
            r.seed.to_string(),
            r.payload_bytes.to_string(),
            v2i_sum_capacity(r)?.to_string(),
            delivery_rate(r)?.to_string(),
            opt(median),
            r.lost_count().to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Histogram pooled over seeds for each variant in `runs`, which should all
/// share one payload. The lost bucket is written with `bin_start_ms = -1`.
pub fn write_histogram_csv<W: Write>(w: W, runs: &[RunMetrics], bin_ms: u64) -> Result<(), CsvOutError> {
    let mut out = writer(w);
    out.write_record(HISTOGRAM_HEADER)?;
    let mut variants: Vec<&str> = Vec::new();
    for r in runs {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
    }
    for v in variants {
        let group: Vec<&RunMetrics> = runs.iter().filter(|r| r.variant == v).collect();
        let h = if group.len() == 1 { delivery_time_histogram(group[0], bin_ms)? } else { pooled_histogram(&group, bin_ms)? };
        for (i, c) in h.counts.iter().enumerate() {
            out.write_record([v.to_string(), h.bin_start_ms(i).to_string(), c.to_string()])?;
        }
        out.write_record([v.to_string(), "-1".into(), h.lost.to_string()])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, runs: &[RunMetrics]) -> Result<(), CsvOutError> {
    let mut out = writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for row in compare_runs(runs)? {
        out.write_record([
            row.variant,
            row.payload_bytes.to_string(),
            row.runs.to_string(),
            row.v2i_sum_mbps.mean.to_string(),
            row.v2i_sum_mbps.sd.to_string(),
            row.delivery_rate.mean.to_string(),
            row.delivery_rate.sd.to_string(),
            row.single_run.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
