//! Flat parameter storage with named segments, and coordinate masks.

use rand::seq::index;
use thiserror::Error;

use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid segment spec: {0}")]
    InvalidSpec(String),
    #[error("index {index} out of range for store of length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("mask density {0} outside (0, 1]")]
    InvalidDensity(f64),
    #[error("value vector has length {got}, store expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// One named, contiguous range of a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

/// A flat real vector partitioned into named segments that stand in for
/// layers. Segments are disjoint, contiguous and cover the whole vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParameterStore {
    /// Lays out the segments in order with zero-initialized values.
    pub fn new<S: AsRef<str>>(spec: &[(S, usize)]) -> Result<Self, ParamError> {
        if spec.is_empty() {
            return Err(ParamError::InvalidSpec("no segments".into()));
        }
        let mut segments = Vec::with_capacity(spec.len());
        let mut start = 0;
        for (name, len) in spec {
            let name = name.as_ref();
            if *len == 0 {
                return Err(ParamError::InvalidSpec(format!(
                    "segment {name:?} has length 0"
                )));
            }
            segments.push(Segment {
                name: name.to_string(),
                start,
                len: *len,
            });
            start += len;
        }
        Ok(Self {
            values: vec![0.0; start],
            segments,
        })
    }

    /// Same layout as [`ParameterStore::new`], filled with `values`.
    pub fn with_values<S: AsRef<str>>(
        spec: &[(S, usize)],
        values: Vec<f64>,
    ) -> Result<Self, ParamError> {
        let mut store = Self::new(spec)?;
        store.set_values(values)?;
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: Vec<f64>) -> Result<(), ParamError> {
        if values.len() != self.values.len() {
            return Err(ParamError::LengthMismatch {
                expected: self.values.len(),
                got: values.len(),
            });
        }
        self.values = values;
        Ok(())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Position of the segment containing coordinate `i`.
    pub fn segment_index_of(&self, i: usize) -> Result<usize, ParamError> {
        if i >= self.len() {
            return Err(ParamError::OutOfRange {
                index: i,
                len: self.len(),
            });
        }
        // segments are sorted by start; find the last one starting at or before i
        Ok(self.segments.partition_point(|s| s.start <= i) - 1)
    }

    pub fn segment_of(&self, i: usize) -> Result<&str, ParamError> {
        let k = self.segment_index_of(i)?;
        Ok(&self.segments[k].name)
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Number of coordinates kept by a mask of the given density.
pub fn mask_size(n: usize, density: f64) -> usize {
    ((density * n as f64).round() as usize).clamp(1, n.max(1))
}

fn check_density(density: f64) -> Result<(), ParamError> {
    if density > 0.0 && density <= 1.0 {
        Ok(())
    } else {
        Err(ParamError::InvalidDensity(density))
    }
}

/// A sorted set of coordinate indices selected out of `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMask {
    indices: Vec<usize>,
    density: f64,
    n: usize,
}

impl IndexMask {
    /// The identity mask over `n` coordinates.
    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            density: 1.0,
            n,
        }
    }

    /// Uniform sample without replacement of `mask_size(n, density)`
    /// coordinates.
    pub fn sample(n: usize, density: f64, rng: &mut RngStream) -> Result<Self, ParamError> {
        check_density(density)?;
        let k = mask_size(n, density);
        if k == n {
            return Ok(Self::full(n));
        }
        let mut indices = index::sample(rng, n, k).into_vec();
        indices.sort_unstable();
        Ok(Self {
            indices,
            density,
            n,
        })
    }

    /// Keeps the `mask_size(n, density)` coordinates with the largest
    /// `scores`; ties go to the lower index.
    pub fn top_k(scores: &[f64], density: f64) -> Result<Self, ParamError> {
        check_density(density)?;
        let n = scores.len();
        let k = mask_size(n, density);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut indices = order[..k].to_vec();
        indices.sort_unstable();
        Ok(Self {
            indices,
            density,
            n,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    /// Size of the coordinate space the mask was drawn from.
    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::streams;

    #[test]
    fn layout_arithmetic() {
        let s = ParameterStore::new(&[("a", 2), ("b", 3)]).unwrap();
        assert_eq!(s.len(), 5);
        let b = s.segment("b").unwrap();
        assert_eq!((b.start, b.end()), (2, 5));
        assert!(s.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_spec_rejected() {
        let empty: [(&str, usize); 0] = [];
        assert!(matches!(
            ParameterStore::new(&empty),
            Err(ParamError::InvalidSpec(_))
        ));
        assert!(matches!(
            ParameterStore::new(&[("a", 0)]),
            Err(ParamError::InvalidSpec(_))
        ));
    }

    #[test]
    fn segment_lookup() {
        let s = ParameterStore::new(&[("a", 2), ("b", 3)]).unwrap();
        assert_eq!(s.segment_of(2).unwrap(), "b");
        assert_eq!(s.segment_of(1).unwrap(), "a");
        assert_eq!(s.segment_of(0).unwrap(), "a");
        assert_eq!(s.segment_of(4).unwrap(), "b");
        assert_eq!(
            s.segment_of(5),
            Err(ParamError::OutOfRange { index: 5, len: 5 })
        );
        let w = ParameterStore::new(&[("w", 4)]).unwrap();
        assert_eq!(w.segment_of(3).unwrap(), "w");
    }

    #[test]
    fn full_density_is_identity() {
        let mut rng = RngStream::new(1, streams::MASK);
        let m = IndexMask::sample(4, 1.0, &mut rng).unwrap();
        assert_eq!(m.indices(), &[0, 1, 2, 3]);
    }

    #[test]
    fn mask_size_contract() {
        let mut rng = RngStream::new(1, streams::MASK);
        let m = IndexMask::sample(1000, 0.25, &mut rng).unwrap();
        assert_eq!(m.len(), 250);
        assert!(m.indices().windows(2).all(|w| w[0] < w[1]));
        assert!(m.indices().iter().all(|&i| i < 1000));
        // never empty
        let tiny = IndexMask::sample(10, 0.01, &mut rng).unwrap();
        assert_eq!(tiny.len(), 1);
    }

    #[test]
    fn mask_determinism() {
        let a = IndexMask::sample(500, 0.1, &mut RngStream::new(9, streams::MASK)).unwrap();
        let b = IndexMask::sample(500, 0.1, &mut RngStream::new(9, streams::MASK)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_density() {
        let mut rng = RngStream::new(1, streams::MASK);
        for d in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                IndexMask::sample(10, d, &mut rng),
                Err(ParamError::InvalidDensity(_))
            ));
        }
    }

    #[test]
    fn top_k_by_magnitude() {
        let m = IndexMask::top_k(&[3.0, 1.0, 2.0], 2.0 / 3.0).unwrap();
        assert_eq!(m.indices(), &[0, 2]);
    }
}
