//! CSV exchange formats.
//!
//! * events: `step,coordinate,segment,score`
//! * segment stats: `segment,total_spikes,total_params,ratio`
//! * traces (long format): `step,coordinate,segment,value`
//! * layouts: `segment,start,len`

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{GradientTrace, SegmentSpikeStats, SpikeEvent, SpikeLabError};
use crate::params::ParameterStore;

pub fn write_events_csv<W: Write>(w: W, events: &[SpikeEvent]) -> Result<(), SpikeLabError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "coordinate", "segment", "score"])?;
    for e in events {
        out.write_record([
            e.step.to_string(),
            e.coordinate.to_string(),
            e.segment.clone(),
            e.score.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stats_csv<W: Write>(w: W, stats: &[SegmentSpikeStats]) -> Result<(), SpikeLabError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["segment", "total_spikes", "total_params", "ratio"])?;
    for s in stats {
        out.write_record([
            s.segment.clone(),
            s.total_spikes.to_string(),
            s.total_params.to_string(),
            s.ratio.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    step: usize,
    coordinate: usize,
    segment: String,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayoutRow {
    segment: String,
    start: usize,
    len: usize,
}

pub fn write_trace_csv<W: Write>(
    w: W,
    trace: &GradientTrace,
    store: &ParameterStore,
) -> Result<(), SpikeLabError> {
    let mut out = csv::Writer::from_writer(w);
    let names: Vec<&str> = trace
        .coordinates()
        .iter()
        .map(|&c| store.segment_of(c))
        .collect::<Result<_, _>>()?;
    for (step, row) in trace.records().iter().enumerate() {
        for ((&coordinate, &value), segment) in trace.coordinates().iter().zip(row).zip(&names) {
            out.serialize(TraceRow {
                step,
                coordinate,
                segment: segment.to_string(),
                value,
            })?;
        }
    }
    if trace.steps() == 0 {
        out.write_record(["step", "coordinate", "segment", "value"])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_layout_csv<W: Write>(w: W, store: &ParameterStore) -> Result<(), SpikeLabError> {
    let mut out = csv::Writer::from_writer(w);
    for s in store.segments() {
        out.serialize(LayoutRow {
            segment: s.name.clone(),
            start: s.start,
            len: s.len,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_layout_csv<R: Read>(r: R) -> Result<ParameterStore, SpikeLabError> {
    let mut rows: Vec<LayoutRow> = csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()?;
    rows.sort_by_key(|r| r.start);
    let mut expect = 0;
    for r in &rows {
        if r.start != expect {
            return Err(SpikeLabError::Format(format!(
                "layout segment {:?} starts at {}, expected {}",
                r.segment, r.start, expect
            )));
        }
        expect += r.len;
    }
    let spec: Vec<(String, usize)> = rows.into_iter().map(|r| (r.segment, r.len)).collect();
    Ok(ParameterStore::new(&spec)?)
}

/// Parses a long-format trace. Without an explicit `layout`, segment
/// boundaries are inferred from the first recorded coordinate of each
/// segment, which is exact for unsampled traces.
pub fn read_trace_csv<R: Read>(
    r: R,
    layout: Option<ParameterStore>,
) -> Result<(GradientTrace, ParameterStore), SpikeLabError> {
    let mut by_step: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut seg_of: BTreeMap<usize, String> = BTreeMap::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: TraceRow = row?;
        if let Some(prev) = seg_of.insert(row.coordinate, row.segment.clone()) {
            if prev != row.segment {
                return Err(SpikeLabError::Format(format!(
                    "coordinate {} listed under segments {prev:?} and {:?}",
                    row.coordinate, row.segment
                )));
            }
        }
        if by_step
            .entry(row.step)
            .or_default()
            .insert(row.coordinate, row.value)
            .is_some()
        {
            return Err(SpikeLabError::Format(format!(
                "duplicate entry for step {} coordinate {}",
                row.step, row.coordinate
            )));
        }
    }
    let coords: Vec<usize> = seg_of.keys().copied().collect();
    let mut records = Vec::with_capacity(by_step.len());
    for (expected, (step, row)) in by_step.into_iter().enumerate() {
        if step != expected {
            return Err(SpikeLabError::Format(format!("missing step {expected}")));
        }
        if row.len() != coords.len() {
            return Err(SpikeLabError::Format(format!(
                "step {step} records {} coordinates, expected {}",
                row.len(),
                coords.len()
            )));
        }
        records.push(row.into_values().collect());
    }

    let store = match layout {
        Some(store) => store,
        None => infer_layout(&seg_of)?,
    };
    for (&c, name) in &seg_of {
        if store.segment_of(c)? != name {
            return Err(SpikeLabError::Format(format!(
                "coordinate {c} is labelled {name:?} but the layout places it elsewhere"
            )));
        }
    }
    let trace = GradientTrace::from_records(store.len(), coords, records)?;
    Ok((trace, store))
}

fn infer_layout(seg_of: &BTreeMap<usize, String>) -> Result<ParameterStore, SpikeLabError> {
    let mut starts: Vec<(usize, String)> = Vec::new();
    for (&c, name) in seg_of {
        match starts.last() {
            Some((_, last)) if last == name => {}
            _ => {
                if starts.iter().any(|(_, n)| n == name) {
                    return Err(SpikeLabError::Format(format!(
                        "segment {name:?} is not contiguous"
                    )));
                }
                starts.push((c, name.clone()));
            }
        }
    }
    let n = seg_of.keys().next_back().map_or(0, |&c| c + 1);
    if let Some(first) = starts.first_mut() {
        first.0 = 0;
    }
    let spec: Vec<(String, usize)> = starts
        .iter()
        .enumerate()
        .map(|(k, (start, name))| {
            let end = starts.get(k + 1).map_or(n, |next| next.0);
            (name.clone(), end - start)
        })
        .collect();
    Ok(ParameterStore::new(&spec)?)
}
