use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{average_ranks, AnalysisError};

pub const BUCKETS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub country_id: String,
    pub log_score: f64,
    /// Quantile bucket, 1 (lowest score) to 9 (highest).
    pub bucket: u8,
}

/// Quantile buckets from average ranks: `floor((rank - 0.5) * 9 / n) + 1`.
/// Tied scores share a bucket, all-equal scores land in bucket 5, and bucket
/// sizes differ by at most one when scores are distinct.
pub fn export_map(scores: &[(String, f64)]) -> Vec<MapRow> {
    let n = scores.len();
    let values: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let ranks = average_ranks(&values);
    scores
        .iter()
        .zip(ranks)
        .map(|((id, s), r)| {
            let b = ((r - 0.5) * BUCKETS as f64 / n as f64).floor() as usize + 1;
            MapRow {
                country_id: id.clone(),
                log_score: *s,
                bucket: b.clamp(1, BUCKETS) as u8,
            }
        })
        .collect()
}

pub fn write_map_csv<W: Write>(rows: &[MapRow], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
