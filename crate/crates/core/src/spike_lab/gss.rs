use serde::{Deserialize, Serialize};

use super::{GradientTrace, SpikeLabError};
use crate::params::ParameterStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub step: usize,
    pub coordinate: usize,
    pub segment: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpikeStats {
    pub segment: String,
    pub total_spikes: usize,
    pub total_params: usize,
    pub ratio: f64,
}

fn mean_abs(col: usize, trace: &GradientTrace) -> f64 {
    let sum: f64 = trace.records().iter().map(|r| r[col].abs()).sum();
    sum / trace.steps() as f64
}

/// Spike score of every recorded step of `coordinate`:
/// `|g_i| / mean_j |g_j|` over the full trace.
pub fn gss(trace: &GradientTrace, coordinate: usize) -> Result<Vec<f64>, SpikeLabError> {
    let col = trace.column_of(coordinate)?;
    let mean = mean_abs(col, trace);
    if !(mean > 0.0) {
        return Err(SpikeLabError::UndefinedScore(coordinate));
    }
    Ok(trace
        .records()
        .iter()
        .map(|r| r[col].abs() / mean)
        .collect())
}

/// Every `(step, coordinate)` whose spike score exceeds `theta`, ordered by
/// step and then coordinate. Coordinates with an all-zero history have no
/// score and produce no events.
pub fn detect_spikes(
    trace: &GradientTrace,
    theta: f64,
    store: &ParameterStore,
) -> Result<Vec<SpikeEvent>, SpikeLabError> {
    if store.len() != trace.dimension() {
        return Err(SpikeLabError::LengthMismatch {
            expected: trace.dimension(),
            got: store.len(),
        });
    }
    let mut cols: Vec<(usize, usize)> = trace
        .coordinates()
        .iter()
        .copied()
        .enumerate()
        .map(|(col, c)| (c, col))
        .collect();
    cols.sort_unstable();
    let scored: Vec<(usize, usize, f64, usize)> = cols
        .into_iter()
        .filter_map(|(c, col)| {
            let mean = mean_abs(col, trace);
            (mean > 0.0).then(|| store.segment_index_of(c).map(|seg| (c, col, mean, seg)))
        })
        .collect::<Result<_, _>>()?;

    let mut events = Vec::new();
    for (step, row) in trace.records().iter().enumerate() {
        for &(c, col, mean, seg) in &scored {
            let score = row[col].abs() / mean;
            if score > theta {
                events.push(SpikeEvent {
                    step,
                    coordinate: c,
                    segment: store.segments()[seg].name.clone(),
                    score,
                });
            }
        }
    }
    Ok(events)
}

/// Per-segment spike counts and spikes-per-parameter ratios, in segment
/// order. Segments without events are reported with zero.
pub fn segment_stats(
    events: &[SpikeEvent],
    store: &ParameterStore,
) -> Result<Vec<SegmentSpikeStats>, SpikeLabError> {
    let mut counts = vec![0usize; store.segments().len()];
    for e in events {
        counts[store.segment_index_of(e.coordinate)?] += 1;
    }
    Ok(store
        .segments()
        .iter()
        .zip(counts)
        .map(|(seg, total_spikes)| SegmentSpikeStats {
            segment: seg.name.clone(),
            total_spikes,
            total_params: seg.len,
            ratio: total_spikes as f64 / seg.len as f64,
        })
        .collect())
}
