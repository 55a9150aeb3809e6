//! Ordered subsets of truncated modes used as matrix bases, grouped by
//! cluster so that cluster blocks are contiguous.

use std::ops::Range;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::field::{BandSplit, FourierField, ModeIndex, Truncation};
use crate::lattice::ClusterPartition;

#[derive(Clone, Debug)]
pub struct ModeLayout {
    trunc: Truncation,
    modes: Vec<usize>,
    position: Vec<Option<usize>>,
    mirror: Vec<usize>,
    cluster: Vec<usize>,
    blocks: Vec<(usize, Range<usize>)>,
}

impl ModeLayout {
    /// Basis from truncation indices, ordered by `(cluster, index)`.
    pub fn new(trunc: Truncation, indices: &[usize], cluster_of: impl Fn(usize) -> usize) -> Self {
        let mut keyed: Vec<(usize, usize)> = indices.iter().map(|&i| (cluster_of(i), i)).collect();
        keyed.sort_unstable();
        let mut position = vec![None; trunc.len()];
        for (k, (_, i)) in keyed.iter().enumerate() {
            position[*i] = Some(k);
        }
        let mirror = keyed
            .iter()
            .map(|(_, i)| {
                position[trunc.mirror_index(*i)].expect("layout must be closed under mirroring")
            })
            .collect();
        let mut blocks: Vec<(usize, Range<usize>)> = Vec::new();
        for (k, (a, _)) in keyed.iter().enumerate() {
            match blocks.last_mut() {
                Some((b, r)) if b == a => r.end = k + 1,
                _ => blocks.push((*a, k..k + 1)),
            }
        }
        Self {
            trunc,
            cluster: keyed.iter().map(|(a, _)| *a).collect(),
            modes: keyed.into_iter().map(|(_, i)| i).collect(),
            position,
            mirror,
            blocks,
        }
    }

    /// The resonant band, blocked by cluster.
    pub fn h_band(bs: &BandSplit) -> Self {
        Self::new(bs.truncation(), &bs.h_modes(), |i| bs.cluster_of_mode(i))
    }

    /// The non-resonant band, blocked by cluster.
    pub fn f_band(bs: &BandSplit) -> Self {
        Self::new(bs.truncation(), &bs.f_modes(), |i| bs.cluster_of_mode(i))
    }

    /// Every truncated mode as one block.
    pub fn all(trunc: Truncation) -> Self {
        let idx: Vec<usize> = (0..trunc.len()).collect();
        Self::new(trunc, &idx, |_| 0)
    }

    /// All modes whose spatial frequency lies in some cluster, blocked.
    pub fn all_clustered(trunc: Truncation, p: &ClusterPartition) -> Self {
        let idx: Vec<usize> = (0..trunc.len()).collect();
        Self::new(trunc, &idx, |i| {
            p.cluster_at(trunc.spatial_index(i)).expect("partition covers truncation")
        })
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Truncation index of basis position `k`.
    pub fn index(&self, k: usize) -> usize {
        self.modes[k]
    }

    pub fn mode(&self, k: usize) -> ModeIndex {
        self.trunc.mode(self.modes[k])
    }

    pub fn position(&self, index: usize) -> Option<usize> {
        self.position[index]
    }

    pub fn mirror(&self, k: usize) -> usize {
        self.mirror[k]
    }

    pub fn cluster(&self, k: usize) -> usize {
        self.cluster[k]
    }

    /// `(alpha, positions)` for every cluster with at least one basis mode.
    pub fn blocks(&self) -> &[(usize, Range<usize>)] {
        &self.blocks
    }

    pub fn block_of(&self, alpha: usize) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|(a, _)| *a == alpha)
            .map(|(_, r)| r.clone())
    }

    pub fn gather(&self, u: &FourierField) -> DVector<Complex64> {
        debug_assert_eq!(u.truncation(), self.trunc);
        DVector::from_iterator(self.len(), self.modes.iter().map(|&i| u.at(i)))
    }

    /// Inverse of [`gather`](Self::gather); modes outside the basis are zero
    /// and the result is symmetrized.
    pub fn scatter(&self, v: &DVector<Complex64>) -> FourierField {
        let mut coeffs = vec![Complex64::default(); self.trunc.len()];
        for (k, &i) in self.modes.iter().enumerate() {
            coeffs[i] = v[k];
        }
        FourierField::from_coeffs_lossy(self.trunc, coeffs)
    }

    /// Largest `|v_k - conj(v_mirror(k))|`.
    pub fn symmetry_defect(&self, v: &DVector<Complex64>) -> f64 {
        (0..self.len())
            .map(|k| (v[k] - v[self.mirror[k]].conj()).norm())
            .fold(0.0, f64::max)
    }
}
