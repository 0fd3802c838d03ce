use std::fmt;

use fixedbitset::FixedBitSet;
use thiserror::Error;

/// Dense 0-based identifier of a processing element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeId(pub usize);

impl From<usize> for PeId {
    fn from(id: usize) -> Self {
        PeId(id)
    }
}

impl fmt::Display for PeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("cluster must have at least one PE")]
    NoPes,
    #[error("PE id {id} out of range for a cluster of {n_pes} PEs")]
    PeOutOfRange { id: usize, n_pes: usize },
}

/// Shape of a homogeneous cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ClusterConfig {
    n_pes: usize,
}

impl ClusterConfig {
    pub fn new(n_pes: usize) -> Result<Self, ClusterError> {
        if n_pes == 0 {
            return Err(ClusterError::NoPes);
        }
        Ok(Self { n_pes })
    }

    pub fn n_pes(&self) -> usize {
        self.n_pes
    }
}

impl Default for ClusterConfig {
    /// 1024 PEs, the size of the CM-5 partition the workload model is drawn from.
    fn default() -> Self {
        Self { n_pes: 1024 }
    }
}

/// A set of PE ids drawn from a cluster of fixed size.
///
/// Every set carries its cluster size, so sets from the same cluster compare
/// and combine directly. Iteration is always in ascending id order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PeSet {
    bits: FixedBitSet,
}

impl PeSet {
    pub fn empty(n_pes: usize) -> Self {
        Self {
            bits: FixedBitSet::with_capacity(n_pes),
        }
    }

    pub fn full(n_pes: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(n_pes);
        bits.insert_range(..);
        Self { bits }
    }

    pub fn from_ids<I>(n_pes: usize, ids: I) -> Result<Self, ClusterError>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut set = Self::empty(n_pes);
        for id in ids {
            if id >= n_pes {
                return Err(ClusterError::PeOutOfRange { id, n_pes });
            }
            set.bits.insert(id);
        }
        Ok(set)
    }

    /// Cluster size this set is drawn from.
    pub fn capacity(&self) -> usize {
        self.bits.len()
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn contains(&self, id: PeId) -> bool {
        self.bits.contains(id.0)
    }

    pub fn insert(&mut self, id: PeId) {
        self.bits.insert(id.0);
    }

    pub fn iter(&self) -> impl Iterator<Item = PeId> + '_ {
        self.bits.ones().map(PeId)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.bits.ones().collect()
    }

    pub fn union_with(&mut self, other: &PeSet) {
        self.bits.union_with(&other.bits);
    }

    pub fn intersect_with(&mut self, other: &PeSet) {
        self.bits.intersect_with(&other.bits);
    }

    pub fn difference_with(&mut self, other: &PeSet) {
        self.bits.difference_with(&other.bits);
    }

    pub fn intersects(&self, other: &PeSet) -> bool {
        !self.bits.is_disjoint(&other.bits)
    }

    pub fn is_subset(&self, other: &PeSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    /// Complement within the cluster.
    pub fn complement(&self) -> PeSet {
        let mut bits = self.bits.clone();
        bits.toggle_range(..);
        Self { bits }
    }

    /// The `n` lowest ids of this set, or `None` when the set is smaller than `n`.
    pub fn lowest(&self, n: usize) -> Option<PeSet> {
        let mut out = Self::empty(self.capacity());
        let mut taken = 0;
        for id in self.bits.ones().take(n) {
            out.bits.insert(id);
            taken += 1;
        }
        (taken == n).then_some(out)
    }
}

/// Renders as `0,1,5`, or `-` for the empty set.
impl fmt::Display for PeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for (i, id) in self.bits.ones().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}/{}", self.capacity())
    }
}
