//! Per-cluster block operators `A_alpha(w) = P_alpha (L_w + eps V_D) P_alpha`
//! and their spectra in `w`.
//!
//! Screening and the stage cutoffs `psi_k` over the excluded sets `O_k` live
//! here too.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::beam::OmegaInterval;
use crate::diagonalization::{max_entry, CMatrix};
use crate::layout::ModeLayout;
use crate::lattice::ClusterPartition;
use crate::par::*;

/// Hermiticity tolerance, relative to the largest entry.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DivisorError {
    #[error("block for cluster {alpha} is not Hermitian (defect {defect:.3e})")]
    NotHermitian { alpha: usize, defect: f64 },
    #[error("omega grid has {points} point(s) on [{lo}, {hi}]; need a step of at most {required:.3e}")]
    GridTooCoarse {
        points: usize,
        lo: f64,
        hi: f64,
        required: f64,
    },
    #[error("eigenvalue {l} of cluster {alpha} is not decreasing in omega near {omega}")]
    NotMonotone { alpha: usize, l: usize, omega: f64 },
}

/// One cluster block with its `w`-independent data.
#[derive(Clone, Debug)]
pub struct Block {
    pub alpha: usize,
    pub shell: usize,
    pub rep_bracket: f64,
    pub positions: Range<usize>,
    j2: Vec<f64>,
    spatial: Vec<f64>,
    vd: CMatrix,
    diagonal: bool,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.j2.len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Largest and smallest `j^2` in the block.
    pub fn j2_range(&self) -> (f64, f64) {
        let lo = self.j2.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.j2.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    }

    /// `diag(-w^2 j^2 + |n|^4 + m) + eps V_D`.
    pub fn matrix(&self, omega: f64, eps: f64) -> CMatrix {
        let w2 = omega * omega;
        let mut a = &self.vd * Complex64::new(eps, 0.0);
        for k in 0..self.dim() {
            a[(k, k)] += -w2 * self.j2[k] + self.spatial[k];
        }
        a
    }

    /// Sorted eigenvalues at `w`.
    pub fn eigs(&self, omega: f64, eps: f64) -> Vec<f64> {
        let w2 = omega * omega;
        let mut e: Vec<f64> = if self.diagonal {
            (0..self.dim())
                .map(|k| -w2 * self.j2[k] + self.spatial[k] + eps * self.vd[(k, k)].re)
                .collect()
        } else {
            SymmetricEigen::new(self.matrix(omega, eps)).eigenvalues.iter().copied().collect()
        };
        e.sort_by(|a, b| a.total_cmp(b));
        e
    }
}

/// All blocks of the resonant band with `V_D` frozen.
#[derive(Clone, Debug)]
pub struct BlockFamily {
    pub m: f64,
    pub eps: f64,
    pub blocks: Vec<Block>,
}

impl BlockFamily {
    pub fn new(
        layout: &ModeLayout,
        p: &ClusterPartition,
        m: f64,
        eps: f64,
        v_d: Option<&CMatrix>,
    ) -> Result<Self, DivisorError> {
        let blocks = layout
            .blocks()
            .iter()
            .map(|(alpha, range)| {
                let d = range.len();
                let vd = match v_d {
                    Some(v) => v.view((range.start, range.start), (d, d)).into_owned(),
                    None => CMatrix::zeros(d, d),
                };
                let defect = max_entry(&(&vd - vd.adjoint()));
                if defect > HERMITIAN_TOL * max_entry(&vd).max(1.0) {
                    return Err(DivisorError::NotHermitian {
                        alpha: *alpha,
                        defect,
                    });
                }
                let diagonal = (0..d).all(|r| (0..d).all(|c| r == c || vd[(r, c)].norm() == 0.0));
                let modes: Vec<_> = range.clone().map(|k| layout.mode(k)).collect();
                Ok(Block {
                    alpha: *alpha,
                    shell: p.shell(*alpha),
                    rep_bracket: p.rep_bracket(*alpha),
                    positions: range.clone(),
                    j2: modes.iter().map(|q| (q.j as f64).powi(2)).collect(),
                    spatial: modes.iter().map(|q| q.n.norm4() as f64 + m).collect(),
                    vd,
                    diagonal,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { m, eps, blocks })
    }

    pub fn block(&self, alpha: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.alpha == alpha)
    }

    pub fn max_shell(&self) -> usize {
        self.blocks.iter().map(|b| b.shell).max().unwrap_or(0)
    }
}

/// Hermitian matrix of `P_alpha (L_w + eps V_D) P_alpha`.
pub fn assemble_block(family: &BlockFamily, alpha: usize, omega: f64) -> Option<CMatrix> {
    family.block(alpha).map(|b| b.matrix(omega, family.eps))
}

/// Sorted real eigenvalues of a Hermitian matrix.
pub fn block_eigs(a: &CMatrix) -> Result<Vec<f64>, DivisorError> {
    let defect = max_entry(&(a - a.adjoint()));
    if defect > HERMITIAN_TOL * max_entry(a).max(1.0) {
        return Err(DivisorError::NotHermitian { alpha: usize::MAX, defect });
    }
    let n = a.nrows();
    let diagonal = (0..n).all(|r| (0..n).all(|c| r == c || a[(r, c)].norm() == 0.0));
    let mut e: Vec<f64> = if diagonal {
        a.diagonal().iter().map(|z| z.re).collect()
    } else {
        SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect()
    };
    e.sort_by(|x, y| x.total_cmp(y));
    Ok(e)
}

#[derive(Clone, Debug)]
pub struct EigDerivative {
    pub alpha: usize,
    pub derivs: Vec<f64>,
    pub h: f64,
    /// `[-4 C0 <n(alpha)>^4, -2 C0^{-1} <n(alpha)>^4]` with `C0 = K0^2`.
    pub bracket: (f64, f64),
    /// Set when no stencil refinement gave consistent differences.
    pub ambiguous: bool,
}

impl EigDerivative {
    pub fn all_negative(&self) -> bool {
        self.derivs.iter().all(|&d| d < 0.0)
    }

    pub fn in_bracket(&self) -> bool {
        self.derivs
            .iter()
            .all(|&d| self.bracket.0 <= d && d <= self.bracket.1)
    }
}

fn central(block: &Block, omega: f64, eps: f64, h: f64) -> Vec<f64> {
    let up = block.eigs(omega + h, eps);
    let down = block.eigs(omega - h, eps);
    up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Central differences of sorted eigenvalues. The stencil is compared with
/// one ten times smaller and refined until both agree.
pub fn eig_omega_derivative(family: &BlockFamily, block: &Block, k0: f64, omega: f64, h: f64) -> EigDerivative {
    let c0 = k0 * k0;
    let b4 = block.rep_bracket.powi(4);
    let bracket = (-4.0 * c0 * b4, -2.0 * b4 / c0);
    let mut h = h;
    let mut coarse = central(block, omega, family.eps, h);
    for _ in 0..4 {
        let fine = central(block, omega, family.eps, h / 10.0);
        let scale = coarse.iter().map(|d| d.abs()).fold(1.0, f64::max);
        let gap = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap <= 1e-5 * scale {
            return EigDerivative {
                alpha: block.alpha,
                derivs: coarse,
                h,
                bracket,
                ambiguous: false,
            };
        }
        log::warn!("eigenvalue matching ambiguous for cluster {} at omega {omega}, refining h to {}", block.alpha, h / 10.0);
        h /= 10.0;
        coarse = fine;
    }
    EigDerivative {
        alpha: block.alpha,
        derivs: coarse,
        h,
        bracket,
        ambiguous: true,
    }
}

#[derive(Clone, Debug)]
pub struct ClusterScreen {
    pub alpha: usize,
    pub min_abs: f64,
    /// `min |lambda| <n(alpha)>^{2 zeta}`.
    pub margin: f64,
    pub resonant: bool,
    /// `delta^{-1} <n(alpha)>^{2 zeta}` when non-resonant.
    pub inverse_bound: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ResonanceRecord {
    pub omega: f64,
    pub clusters: Vec<ClusterScreen>,
}

impl ResonanceRecord {
    pub fn resonant(&self) -> bool {
        self.clusters.iter().any(|c| c.resonant)
    }

    /// Cluster with the smallest normalized margin.
    pub fn worst(&self) -> Option<&ClusterScreen> {
        self.clusters.iter().min_by(|a, b| a.margin.total_cmp(&b.margin))
    }
}

pub fn screen(omega: f64, delta: f64, zeta: f64, family: &BlockFamily) -> ResonanceRecord {
    let clusters = family
        .blocks
        .par_iter()
        .map(|b| {
            let min_abs = b
                .eigs(omega, family.eps)
                .iter()
                .map(|x| x.abs())
                .fold(f64::INFINITY, f64::min);
            let weight = b.rep_bracket.powf(2.0 * zeta);
            let margin = min_abs * weight;
            let resonant = margin < delta;
            ClusterScreen {
                alpha: b.alpha,
                min_abs,
                margin,
                resonant,
                inverse_bound: (!resonant).then(|| weight / delta),
            }
        })
        .collect();
    ResonanceRecord { omega, clusters }
}

/// Union of open intervals, sorted and merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| b > a);
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Self { intervals: merged }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a < x && x < b)
    }

    /// Points at distance at least `mu` from the complement.
    pub fn erode(&self, mu: f64) -> Self {
        Self::from_intervals(self.intervals.iter().map(|&(a, b)| (a + mu, b - mu)).collect())
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_intervals(self.intervals.iter().chain(&other.intervals).copied().collect())
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.intervals.iter().all(|&(a, b)| {
            other
                .intervals
                .iter()
                .any(|&(c, d)| c <= a + 1e-15 && b <= d + 1e-15)
        })
    }
}

/// Cubic smoothstep `3x^2 - 2x^3` clamped to `[0, 1]`.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn smoothstep_slope(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        6.0 * x * (1.0 - x)
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct StageCutoff {
    pub k: usize,
    /// Threshold `2 delta 2^{-2 k zeta}`.
    pub tau: f64,
    /// Erosion margin `delta / (128 C0) 2^{-2k(zeta+2)}`.
    pub mu: f64,
    pub o: IntervalSet,
    pub g: IntervalSet,
}

impl StageCutoff {
    /// `psi_k(w)`: 1 on `G_k`, 0 off `O_k`, smoothstep ramps of width
    /// `mu / 2` centred `mu / 2` inside each end of an `O_k` interval.
    pub fn psi(&self, omega: f64) -> f64 {
        let w = self.mu / 2.0;
        for &(a, b) in self.o.intervals() {
            if a < omega && omega < b {
                let rise = smoothstep((omega - a - self.mu / 4.0) / w);
                let fall = smoothstep((b - self.mu / 4.0 - omega) / w);
                return rise.min(fall);
            }
        }
        0.0
    }

    pub fn psi_derivative(&self, omega: f64) -> f64 {
        let w = self.mu / 2.0;
        for &(a, b) in self.o.intervals() {
            if a < omega && omega < b {
                let xr = (omega - a - self.mu / 4.0) / w;
                let xf = (b - self.mu / 4.0 - omega) / w;
                return if smoothstep(xr) <= smoothstep(xf) {
                    smoothstep_slope(xr) / w
                } else {
                    -smoothstep_slope(xf) / w
                };
            }
        }
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct CutoffParams {
    pub delta: f64,
    pub zeta: f64,
    pub k0: f64,
    pub k_max: usize,
    pub interval: OmegaInterval,
    pub grid_step: f64,
}

impl CutoffParams {
    /// `C0 = K0^2`.
    pub fn c0(&self) -> f64 {
        self.k0 * self.k0
    }

    /// `C1 = 256 C0 (3/2)`.
    pub fn c1(&self) -> f64 {
        384.0 * self.c0()
    }

    pub fn tau(&self, k: usize) -> f64 {
        2.0 * self.delta * 2f64.powf(-2.0 * k as f64 * self.zeta)
    }

    pub fn mu(&self, k: usize) -> f64 {
        self.delta / (128.0 * self.c0()) * 2f64.powf(-2.0 * k as f64 * (self.zeta + 2.0))
    }

    /// `C1 delta^{-1} 2^{2k(zeta+2)}`.
    pub fn psi_slope_bound(&self, k: usize) -> f64 {
        self.c1() / self.delta * 2f64.powf(2.0 * k as f64 * (self.zeta + 2.0))
    }
}

#[derive(Clone, Debug)]
pub struct CutoffFamily {
    pub params: CutoffParams,
    pub stages: Vec<StageCutoff>,
}

impl CutoffFamily {
    pub fn stage(&self, k: usize) -> Option<&StageCutoff> {
        self.stages.iter().find(|s| s.k == k)
    }

    pub fn psi(&self, k: usize, omega: f64) -> f64 {
        self.stage(k).map_or(0.0, |s| s.psi(omega))
    }

    /// Shells whose excluded set contains `w`.
    pub fn excluding_shells(&self, omega: f64) -> Vec<usize> {
        self.stages
            .iter()
            .filter(|s| s.o.contains(omega))
            .map(|s| s.k)
            .collect()
    }

    pub fn union(&self) -> IntervalSet {
        self.stages
            .iter()
            .fold(IntervalSet::default(), |acc, s| acc.union(&s.o))
    }
}

/// `{w : |lambda_l(w)| < tau}` for one decreasing curve, given samples on `grid`.
fn level_interval(
    eval: &dyn Fn(f64) -> f64,
    grid: &[f64],
    samples: &[f64],
    tau: f64,
) -> Option<(f64, f64)> {
    let (lo, hi) = (grid[0], *grid.last().unwrap());
    if samples[0] <= -tau || *samples.last().unwrap() >= tau {
        return None;
    }
    // first crossing below `level` of a decreasing function
    let crossing = |level: f64| -> f64 {
        let i = samples.iter().position(|&s| s <= level);
        match i {
            Some(0) => lo,
            Some(i) => {
                let (mut a, mut b) = (grid[i - 1], grid[i]);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if eval(mid) > level {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            }
            None => hi,
        }
    };
    let a = crossing(tau);
    let b = crossing(-tau);
    (b > a).then_some((a, b))
}

fn check_grid(grid: &[f64], params: &CutoffParams) -> Result<(), DivisorError> {
    if grid.len() < 2 {
        return Err(DivisorError::GridTooCoarse {
            points: grid.len(),
            lo: params.interval.lo,
            hi: params.interval.hi,
            required: params.interval.width() / 2.0,
        });
    }
    Ok(())
}

/// Excluded intervals contributed by one block at threshold `tau`.
pub fn block_excluded(
    block: &Block,
    eps: f64,
    grid: &[f64],
    tau: f64,
) -> Result<Vec<(f64, f64)>, DivisorError> {
    if block.is_diagonal() {
        let mut out = Vec::new();
        for k in 0..block.dim() {
            let (j2, s, v) = (block.j2[k], block.spatial[k], eps * block.vd[(k, k)].re);
            let curve = |w: f64| -w * w * j2 + s + v;
            let samples: Vec<f64> = grid.iter().map(|&w| curve(w)).collect();
            out.extend(level_interval(&curve, grid, &samples, tau));
        }
        return Ok(out);
    }
    let sampled: Vec<Vec<f64>> = grid.iter().map(|&w| block.eigs(w, eps)).collect();
    let mut out = Vec::new();
    for l in 0..block.dim() {
        let samples: Vec<f64> = sampled.iter().map(|e| e[l]).collect();
        if let Some(i) = samples.windows(2).position(|s| s[1] > s[0]) {
            return Err(DivisorError::NotMonotone {
                alpha: block.alpha,
                l,
                omega: grid[i],
            });
        }
        let curve = |w: f64| block.eigs(w, eps)[l];
        out.extend(level_interval(&curve, grid, &samples, tau));
    }
    Ok(out)
}

type ShellIntervals = (usize, Vec<(f64, f64)>);

/// Build `O_k`, `G_k`, `psi_k` for shells `0..=k_max` from frozen blocks.
pub fn build_cutoffs(family: &BlockFamily, params: &CutoffParams) -> Result<CutoffFamily, DivisorError> {
    let grid = params.interval.grid_with_step(params.grid_step);
    check_grid(&grid, params)?;
    let per_block: Vec<Result<ShellIntervals, DivisorError>> = family
        .blocks
        .par_iter()
        .filter(|b| b.shell <= params.k_max)
        .map(|b| Ok((b.shell, block_excluded(b, family.eps, &grid, params.tau(b.shell))?)))
        .collect();
    let mut raw: Vec<Vec<(f64, f64)>> = vec![Vec::new(); params.k_max + 1];
    for r in per_block {
        let (k, iv) = r?;
        raw[k].extend(iv);
    }
    let stages = raw
        .into_iter()
        .enumerate()
        .map(|(k, iv)| {
            let o = IntervalSet::from_intervals(iv);
            let mu = params.mu(k);
            StageCutoff {
                k,
                tau: params.tau(k),
                mu,
                g: o.erode(mu),
                o,
            }
        })
        .collect();
    Ok(CutoffFamily {
        params: params.clone(),
        stages,
    })
}

/// Total length of `U_k O_k`.
pub fn measure_excluded(cutoffs: &CutoffFamily) -> f64 {
    cutoffs.union().measure()
}

#[derive(Clone, Debug)]
pub struct MeasureTable {
    pub rows: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Excluded measure over a grid of `delta` values and its log-log slope.
pub fn measure_scaling(
    family: &BlockFamily,
    params: &CutoffParams,
    deltas: &[f64],
) -> Result<MeasureTable, DivisorError> {
    let rows = deltas
        .iter()
        .map(|&delta| {
            let p = CutoffParams {
                delta,
                ..params.clone()
            };
            Ok((delta, measure_excluded(&build_cutoffs(family, &p)?)))
        })
        .collect::<Result<Vec<_>, DivisorError>>()?;
    let slope = loglog_slope(&rows);
    Ok(MeasureTable { rows, slope })
}

/// Spectral norm of the inverse of a Hermitian block.
pub fn inverse_norm(a: &DMatrix<Complex64>) -> f64 {
    let e = SymmetricEigen::new(a.clone()).eigenvalues;
    1.0 / e.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{band_split, Truncation};
    use crate::lattice::{build_partition, LatticePoint, PartitionParams};

    fn family(eps: f64, n: i32, j: i32) -> (BlockFamily, ClusterPartition, f64, ModeLayout) {
        let p = build_partition(&PartitionParams::new(1, n, 0.05)).unwrap();
        let bs = band_split(&p, 1.0, Truncation::new(1, j, n)).unwrap();
        let lay = ModeLayout::h_band(&bs);
        let fam = BlockFamily::new(&lay, &p, 1.0, eps, None).unwrap();
        (fam, p, bs.k0, lay)
    }

    fn params(delta: f64, k0: f64) -> CutoffParams {
        CutoffParams {
            delta,
            zeta: 3.05,
            k0,
            k_max: 12,
            interval: OmegaInterval::default(),
            grid_step: 1e-3,
        }
    }

    #[test]
    fn unperturbed_block_is_diagonal() {
        let (fam, p, _, _) = family(0.0, 3, 12);
        let alpha = crate::lattice::cluster_of(&p, &LatticePoint::new(&[1])).unwrap();
        let a = assemble_block(&fam, alpha, 1.0).unwrap();
        let e = block_eigs(&a).unwrap();
        let mut d: Vec<f64> = a.diagonal().iter().map(|z| z.re).collect();
        d.sort_by(|x, y| x.total_cmp(y));
        assert_eq!(e, d);
        assert!(e.contains(&1.0));
    }

    #[test]
    fn two_by_two_spectrum() {
        let a = CMatrix::from_row_slice(2, 2, &[
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(2.0, 0.0),
        ]);
        let e = block_eigs(&a).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
        let bad = CMatrix::from_row_slice(2, 2, &[
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(2.0, 0.0),
        ]);
        assert!(block_eigs(&bad).is_err());
    }

    #[test]
    fn derivative_at_zero_eps() {
        let (fam, p, k0, _) = family(0.0, 3, 12);
        let alpha = crate::lattice::cluster_of(&p, &LatticePoint::new(&[2])).unwrap();
        let b = fam.block(alpha).unwrap();
        let d = eig_omega_derivative(&fam, b, k0, 1.0, 1e-5);
        assert!(d.all_negative() && d.in_bracket() && !d.ambiguous);
        let mut exact: Vec<f64> = b.j2.iter().map(|j2| -2.0 * j2).collect();
        exact.sort_by(|x, y| x.total_cmp(y));
        // eigenvalues sorted ascending at w = 1 are -j^2 + 17, so the
        // steepest curve is first
        for (x, y) in d.derivs.iter().zip(&exact) {
            assert!((x - y).abs() <= 1e-6 * y.abs(), "{x} vs {y}");
        }
        assert!(exact.contains(&-8.0));
    }

    #[test]
    fn screening_examples() {
        let (fam, p, _, _) = family(0.0, 2, 8);
        let alpha = crate::lattice::cluster_of(&p, &LatticePoint::new(&[1])).unwrap();
        let rec = screen(2f64.sqrt(), 1e-3, 3.05, &fam);
        let c = rec.clusters.iter().find(|c| c.alpha == alpha).unwrap();
        assert!(c.resonant && c.min_abs < 1e-14);
        let rec = screen(1.0, 0.5, 3.05, &fam);
        let c = rec.clusters.iter().find(|c| c.alpha == alpha).unwrap();
        assert!(!c.resonant);
        let a = assemble_block(&fam, alpha, 1.0).unwrap();
        assert!((inverse_norm(&a) - 1.0 / c.min_abs).abs() < 1e-12);
        assert!(inverse_norm(&a) <= c.inverse_bound.unwrap());
    }

    #[test]
    fn interval_algebra() {
        let s = IntervalSet::from_intervals(vec![(0.0, 1.0), (0.5, 2.0), (3.0, 4.0), (5.0, 4.5)]);
        assert_eq!(s.intervals(), &[(0.0, 2.0), (3.0, 4.0)]);
        assert_eq!(s.measure(), 3.0);
        let e = s.erode(0.6);
        assert_eq!(e.intervals().len(), 1);
        assert!(e.is_subset_of(&s));
    }

    #[test]
    fn cutoffs_around_sqrt2() {
        let (fam, _, k0, _) = family(0.0, 1, 4);
        let delta = 1e-3;
        let cf = build_cutoffs(&fam, &params(delta, k0)).unwrap();
        let s0 = cf.stage(0).unwrap();
        let root = 2f64.sqrt();
        let hit = s0.o.intervals().iter().find(|(a, b)| *a < root && root < *b).unwrap();
        let half = 2.0 * delta / (2.0 * root);
        assert!(((hit.1 - hit.0) / 2.0 - half).abs() < 1e-6 * half + 1e-9);
        assert!(s0.g.is_subset_of(&s0.o));
        assert_eq!(s0.psi(root), 1.0);
        assert_eq!(s0.psi(1.7), 0.0);
        let mut max_slope: f64 = 0.0;
        let n = 20001;
        for i in 0..n {
            let w = hit.0 + (hit.1 - hit.0) * i as f64 / (n - 1) as f64;
            let v = s0.psi(w);
            assert!((0.0..=1.0).contains(&v));
            max_slope = max_slope.max(s0.psi_derivative(w).abs());
        }
        assert!(max_slope <= cf.params.psi_slope_bound(0));
        assert!(max_slope > 0.5 * cf.params.psi_slope_bound(0));
        assert_eq!(cf.excluding_shells(root), vec![0]);
        assert!(cf.excluding_shells(1.7).is_empty());
    }

    #[test]
    fn exclusion_is_monotone_in_delta() {
        let (fam, _, k0, _) = family(0.0, 4, 24);
        let small = build_cutoffs(&fam, &params(5e-4, k0)).unwrap();
        let large = build_cutoffs(&fam, &params(2e-3, k0)).unwrap();
        assert!(small.union().is_subset_of(&large.union()));
        assert!(measure_excluded(&small) < measure_excluded(&large));
        let table = measure_scaling(&fam, &params(1e-3, k0), &[2e-3, 1e-3]).unwrap();
        let ratio = table.rows[1].1 / table.rows[0].1;
        assert!((0.4..=0.6).contains(&ratio));
    }

    #[test]
    fn no_roots_means_no_exclusion() {
        // with |j| <= 1 the only roots are w = 1 and w = sqrt 2
        let (fam, _, k0, _) = family(0.0, 1, 1);
        let mut prm = params(1e-3, k0);
        prm.interval = OmegaInterval::new(1.5, 2.0).unwrap();
        assert_eq!(measure_excluded(&build_cutoffs(&fam, &prm).unwrap()), 0.0);
    }
}
