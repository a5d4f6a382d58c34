//! The cutting-plane model `T^{q,W}(z) = max_{y in W} T^q f_{s(y)}(z, y)`,
//! the bundle `W` and the memory of recent oracle samples.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::oracle::{taylor_eval_slice, Oracle, OracleSample};
use crate::types::{Point, TrustRegion};

/// Coordinates closer than this (in max-norm) count as the same bundle point.
pub const DUPLICATE_TOL: f64 = 1e-14;

/// Samples whose base points lie in `region`.
#[derive(Debug, Clone)]
pub struct Bundle {
    samples: Vec<OracleSample>,
    region: TrustRegion,
}

impl Bundle {
    /// A bundle holding only `sample`, which must lie in `region`.
    pub fn new(sample: OracleSample, region: TrustRegion) -> Result<Self> {
        let mut b = Bundle {
            samples: Vec::new(),
            region,
        };
        b.insert(sample)?;
        Ok(b)
    }

    pub fn samples(&self) -> &[OracleSample] {
        &self.samples
    }

    pub fn region(&self) -> &TrustRegion {
        &self.region
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn contains_base(&self, z: &Point) -> bool {
        self.samples.iter().any(|s| is_duplicate(s.base(), z))
    }

    /// Adds `sample`. Returns `false` (and leaves the bundle unchanged) when a
    /// sample with the same base point is already present.
    pub fn insert(&mut self, sample: OracleSample) -> Result<bool> {
        sample.base().check_dim(self.region.dim())?;
        if !self.region.contains(sample.base()) {
            return Err(Error::invalid("bundle sample outside the trust region"));
        }
        if let Some(first) = self.samples.first() {
            if first.order() != sample.order() {
                return Err(Error::invalid("bundle samples must share one model order"));
            }
        }
        if self.contains_base(sample.base()) {
            return Ok(false);
        }
        self.samples.push(sample);
        Ok(true)
    }

    /// Copy of this bundle extended by `sample`.
    pub fn with_sample(&self, sample: OracleSample) -> Result<Bundle> {
        let mut b = self.clone();
        b.insert(sample)?;
        Ok(b)
    }

    /// Model value at `z` and the first sample attaining it.
    pub fn model_eval(&self, z: &Point) -> Result<(f64, usize)> {
        z.check_dim(self.region.dim())?;
        self.model_eval_slice(z).ok_or_else(|| Error::invalid("empty bundle"))
    }

    pub(crate) fn model_eval_slice(&self, z: &[f64]) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (k, s) in self.samples.iter().enumerate() {
            let v = taylor_eval_slice(s, z);
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, k));
            }
        }
        best
    }

    /// `f(z) - T^{q,W}(z)`; nonpositive at every bundle point.
    pub fn model_gap(&self, oracle: &dyn Oracle, z: &Point) -> Result<f64> {
        let (m, _) = self.model_eval(z)?;
        Ok(oracle.value(z)? - m)
    }
}

fn is_duplicate(a: &Point, b: &Point) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= DUPLICATE_TOL)
}

/// First-in first-out memory of the most recent oracle samples.
#[derive(Debug, Clone)]
pub struct PointMemory {
    buf: VecDeque<OracleSample>,
    capacity: usize,
}

impl PointMemory {
    pub const DEFAULT_CAPACITY: usize = 100;

    pub fn new(capacity: usize) -> Self {
        PointMemory {
            buf: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, sample: OracleSample) {
        if self.capacity == 0 {
            return;
        }
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(sample);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &OracleSample> {
        self.buf.iter()
    }
}

impl Default for PointMemory {
    fn default() -> Self {
        PointMemory::new(Self::DEFAULT_CAPACITY)
    }
}

/// Initial bundle: the center sample plus every memorized sample inside
/// `region`, without duplicates.
pub fn seed_bundle(
    memory: &PointMemory,
    center_sample: OracleSample,
    region: TrustRegion,
) -> Result<Bundle> {
    if !is_duplicate(center_sample.base(), region.center()) {
        return Err(Error::invalid("center sample must sit at the region center"));
    }
    let order = center_sample.order();
    let mut bundle = Bundle::new(center_sample, region)?;
    for s in memory.iter() {
        if s.order() == order && bundle.region().contains(s.base()) {
            bundle.insert(s.clone())?;
        }
    }
    Ok(bundle)
}
