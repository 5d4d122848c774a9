use rand::seq::index;

use super::SpikeLabError;
use crate::params::ParameterStore;
use crate::rng::RngStream;

/// Per-step gradient records for a fixed set of coordinates.
///
/// Either every coordinate is recorded, or a deterministic subsample of
/// `k` coordinates per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTrace {
    n: usize,
    coords: Vec<usize>,
    records: Vec<Vec<f64>>,
}

impl GradientTrace {
    /// Records every one of `n` coordinates.
    pub fn full(n: usize) -> Self {
        Self {
            n,
            coords: (0..n).collect(),
            records: Vec::new(),
        }
    }

    /// Records `per_segment` randomly chosen coordinates of every segment
    /// (all of them when a segment is smaller).
    pub fn subsampled(store: &ParameterStore, per_segment: usize, rng: &mut RngStream) -> Self {
        let mut coords = Vec::new();
        for seg in store.segments() {
            if seg.len <= per_segment {
                coords.extend(seg.range());
            } else {
                let mut picked = index::sample(rng, seg.len, per_segment).into_vec();
                picked.sort_unstable();
                coords.extend(picked.into_iter().map(|j| seg.start + j));
            }
        }
        Self {
            n: store.len(),
            coords,
            records: Vec::new(),
        }
    }

    /// A trace over explicit coordinates with pre-recorded rows.
    pub fn from_records(
        n: usize,
        coords: Vec<usize>,
        records: Vec<Vec<f64>>,
    ) -> Result<Self, SpikeLabError> {
        if let Some(&c) = coords.iter().find(|&&c| c >= n) {
            return Err(SpikeLabError::UnknownCoordinate(c));
        }
        if let Some(r) = records.iter().find(|r| r.len() != coords.len()) {
            return Err(SpikeLabError::LengthMismatch {
                expected: coords.len(),
                got: r.len(),
            });
        }
        Ok(Self { n, coords, records })
    }

    /// Appends one step from a full-length gradient.
    pub fn push(&mut self, grad: &[f64]) -> Result<(), SpikeLabError> {
        if grad.len() != self.n {
            return Err(SpikeLabError::LengthMismatch {
                expected: self.n,
                got: grad.len(),
            });
        }
        self.records
            .push(self.coords.iter().map(|&c| grad[c]).collect());
        Ok(())
    }

    /// Number of recorded steps (`T + 1`).
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    /// Size of the full coordinate space.
    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Recorded coordinate ids, in column order.
    pub fn coordinates(&self) -> &[usize] {
        &self.coords
    }

    pub fn records(&self) -> &[Vec<f64>] {
        &self.records
    }

    pub(crate) fn column_of(&self, coordinate: usize) -> Result<usize, SpikeLabError> {
        self.coords
            .iter()
            .position(|&c| c == coordinate)
            .ok_or(SpikeLabError::UnknownCoordinate(coordinate))
    }

    /// History of one recorded coordinate.
    pub fn history(&self, coordinate: usize) -> Result<Vec<f64>, SpikeLabError> {
        let col = self.column_of(coordinate)?;
        Ok(self.records.iter().map(|r| r[col]).collect())
    }
}
