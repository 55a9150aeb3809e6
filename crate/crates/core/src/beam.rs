//! The beam operator `L_w = w^2 d_tt + Delta^2 + m` as a diagonal multiplier
//! `-w^2 j^2 + |n|^4 + m`. Gap and coercivity certificates live alongside it.

use thiserror::Error;

use crate::field::{BandSplit, FourierField, ModeIndex};
use crate::lattice::{ClusterPartition, LatticePoint};
use crate::par::*;

/// Smallest multiplier magnitude accepted by [`invert_on_f`].
pub const MIN_MULTIPLIER: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum BeamError {
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("omega interval [{lo}, {hi}] must satisfy 0 < lo <= hi")]
    BadInterval { lo: f64, hi: f64 },
    #[error("multiplier {value:.3e} at {mode} is too close to zero to invert")]
    NearZeroMultiplier { mode: ModeIndex, value: f64 },
    #[error("right-hand side has support at {0} inside the resonant band")]
    SupportInH(ModeIndex),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamSymbol {
    pub m: f64,
    pub omega: f64,
}

impl BeamSymbol {
    pub fn new(m: f64, omega: f64) -> Result<Self, BeamError> {
        if m <= 0.0 || m.is_nan() {
            return Err(BeamError::NonPositiveMass(m));
        }
        Ok(Self { m, omega })
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..*self }
    }
}

/// Multiplier of `L_w` on `e^{i(jt + n.x)}`.
pub fn eigenvalue(sym: &BeamSymbol, mode: &ModeIndex) -> f64 {
    multiplier(sym.m, sym.omega, mode.j, &mode.n)
}

#[inline]
pub fn multiplier(m: f64, omega: f64, j: i32, n: &LatticePoint) -> f64 {
    let jf = j as f64;
    -omega * omega * jf * jf + n.norm4() as f64 + m
}

/// `lambda_n = sqrt(|n|^4 + m)`, the spectrum of `sqrt(Delta^2 + m)`.
pub fn spatial_frequency(m: f64, n: &LatticePoint) -> f64 {
    (n.norm4() as f64 + m).sqrt()
}

pub fn apply(sym: &BeamSymbol, u: &FourierField) -> FourierField {
    u.map_diagonal(|q| eigenvalue(sym, q))
}

/// Gap constant: `1/(2 sqrt 2)` for `m <= 1`, `1/(2 sqrt(2m))` otherwise.
pub fn gap_constant(m: f64) -> f64 {
    if m <= 1.0 {
        1.0 / (2.0 * 2f64.sqrt())
    } else {
        1.0 / (2.0 * (2.0 * m).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct GapReport {
    pub c_gap: f64,
    /// `min |lambda_n - lambda_n'| / ||n|^2 - |n'|^2|` over cross-cluster pairs.
    pub min_ratio: f64,
    pub worst: Option<(LatticePoint, LatticePoint)>,
    pub violations: Vec<(LatticePoint, LatticePoint)>,
    pub pairs_checked: usize,
    /// Cross-cluster pairs with `|n| = |n'|`, where both sides vanish.
    pub equal_norm_pairs: usize,
}

impl GapReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn gap_across_clusters(m: f64, p: &ClusterPartition) -> GapReport {
    let lattice = p.lattice();
    let pts = lattice.points();
    let c_gap = gap_constant(m);
    let rows: Vec<_> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let a = pts[i];
            let ca = p.cluster_at(i);
            let la = spatial_frequency(m, &a);
            let mut min_ratio = f64::INFINITY;
            let mut worst = None;
            let mut bad = Vec::new();
            let mut checked = 0usize;
            let mut equal = 0usize;
            for (k, b) in pts.iter().enumerate().skip(i + 1) {
                if p.cluster_at(k) == ca {
                    continue;
                }
                let dn = (a.norm2() - b.norm2()).abs() as f64;
                if dn == 0.0 {
                    equal += 1;
                    continue;
                }
                checked += 1;
                let ratio = (la - spatial_frequency(m, b)).abs() / dn;
                if ratio < min_ratio {
                    min_ratio = ratio;
                    worst = Some((a, *b));
                }
                if ratio <= c_gap {
                    bad.push((a, *b));
                }
            }
            (min_ratio, worst, bad, checked, equal)
        })
        .collect();
    let mut report = GapReport {
        c_gap,
        min_ratio: f64::INFINITY,
        worst: None,
        violations: Vec::new(),
        pairs_checked: 0,
        equal_norm_pairs: 0,
    };
    for (r, w, bad, checked, equal) in rows {
        if r < report.min_ratio {
            report.min_ratio = r;
            report.worst = w;
        }
        report.violations.extend(bad);
        report.pairs_checked += checked;
        report.equal_norm_pairs += equal;
    }
    report
}

/// Closed frequency interval on which constants are certified.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OmegaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl Default for OmegaInterval {
    fn default() -> Self {
        Self { lo: 1.0, hi: 2.0 }
    }
}

impl OmegaInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, BeamError> {
        if !(lo > 0.0 && lo <= hi) {
            return Err(BeamError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, omega: f64) -> bool {
        self.lo <= omega && omega <= self.hi
    }

    /// `count` equally spaced points including both endpoints.
    pub fn grid(&self, count: usize) -> Vec<f64> {
        if count <= 1 {
            return vec![self.lo];
        }
        let h = self.width() / (count - 1) as f64;
        (0..count)
            .map(|i| if i + 1 == count { self.hi } else { self.lo + h * i as f64 })
            .collect()
    }

    /// Points with spacing at most `step`.
    pub fn grid_with_step(&self, step: f64) -> Vec<f64> {
        let count = (self.width() / step).ceil() as usize + 1;
        self.grid(count.max(2))
    }
}

#[derive(Clone, Debug)]
pub struct FBandCertificate {
    /// Largest `c` with `|mult| >= c (j^2 + <n(alpha)>^4)` on the f-band over
    /// the whole interval; `+inf` for an empty band.
    pub c: f64,
    pub worst: Option<ModeIndex>,
    /// Modes whose multiplier changes sign on the interval.
    pub violations: Vec<ModeIndex>,
    /// Same ratio sampled on the omega grid; never below `c`.
    pub grid_min: f64,
    pub modes_checked: usize,
}

impl FBandCertificate {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.c > 0.0
    }
}

/// Certify coercivity of `L_w` on the f-band. The multiplier is monotone in
/// `w > 0`, so its minimum modulus over the interval sits at an endpoint
/// unless it changes sign; the grid pass is a redundancy check.
pub fn f_band_lower_bound(
    m: f64,
    interval: OmegaInterval,
    bs: &BandSplit,
    p: &ClusterPartition,
    grid_step: f64,
) -> FBandCertificate {
    let t = bs.truncation();
    let grid = interval.grid_with_step(grid_step);
    let f_modes = bs.f_modes();
    let rows: Vec<_> = f_modes
        .par_iter()
        .map(|&i| {
            let q = t.mode(i);
            let rb = p.rep_bracket(bs.cluster_of_mode(i));
            let denom = (q.j as f64).powi(2) + rb.powi(4);
            let a = multiplier(m, interval.lo, q.j, &q.n);
            let b = multiplier(m, interval.hi, q.j, &q.n);
            let certified = if a.signum() != b.signum() || a == 0.0 || b == 0.0 {
                0.0
            } else {
                a.abs().min(b.abs()) / denom
            };
            let sampled = grid
                .iter()
                .map(|&w| multiplier(m, w, q.j, &q.n).abs() / denom)
                .fold(f64::INFINITY, f64::min);
            (q, certified, sampled)
        })
        .collect();
    let mut cert = FBandCertificate {
        c: f64::INFINITY,
        worst: None,
        violations: Vec::new(),
        grid_min: f64::INFINITY,
        modes_checked: rows.len(),
    };
    for (q, c, s) in rows {
        if c == 0.0 {
            cert.violations.push(q);
        }
        if c < cert.c {
            cert.c = c;
            cert.worst = Some(q);
        }
        cert.grid_min = cert.grid_min.min(s);
    }
    cert
}

/// Divide an f-band field by the beam multiplier.
pub fn invert_on_f(
    sym: &BeamSymbol,
    bs: &BandSplit,
    rhs: &FourierField,
) -> Result<FourierField, BeamError> {
    let t = rhs.truncation();
    let mut out = FourierField::zeros(t);
    for (i, c) in rhs.coeffs().iter().enumerate() {
        if bs.is_h(i) {
            if c.norm() != 0.0 {
                return Err(BeamError::SupportInH(t.mode(i)));
            }
            continue;
        }
        let mode = t.mode(i);
        let mu = eigenvalue(sym, &mode);
        if mu.abs() < MIN_MULTIPLIER {
            return Err(BeamError::NearZeroMultiplier { mode, value: mu });
        }
        out.coeffs_mut()[i] = c / mu;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{band_split, Truncation};
    use crate::lattice::{build_partition, PartitionParams};
    use crate::testutil::random_field;
    use num_complex::Complex64;

    fn pt(x: &[i32]) -> LatticePoint {
        LatticePoint::new(x)
    }

    #[test]
    fn eigenvalue_examples() {
        let one = BeamSymbol::new(1.0, 1.0).unwrap();
        assert_eq!(eigenvalue(&one, &ModeIndex::new(1, pt(&[1]))), 1.0);
        let res = one.with_omega(2f64.sqrt());
        assert!(eigenvalue(&res, &ModeIndex::new(1, pt(&[1]))).abs() < 1e-15);
        assert_eq!(spatial_frequency(1.0, &pt(&[1])), 2f64.sqrt());
        assert!(BeamSymbol::new(0.0, 1.0).is_err());
    }

    #[test]
    fn gap_constants() {
        assert_eq!(gap_constant(1.0), 1.0 / (2.0 * 2f64.sqrt()));
        assert!((gap_constant(4.0) - 1.0 / (4.0 * 2f64.sqrt())).abs() < 1e-16);
    }

    #[test]
    fn gap_d1() {
        let p = build_partition(&PartitionParams::new(1, 8, 0.05)).unwrap();
        let r = gap_across_clusters(1.0, &p);
        assert!(r.passed());
        let d = (2f64.sqrt() - 17f64.sqrt()).abs();
        assert!((d - 2.709).abs() < 1e-3 && d > 3.0 * gap_constant(1.0));
    }

    #[test]
    fn f_band_certificate() {
        let p = build_partition(&PartitionParams::new(1, 2, 0.05)).unwrap();
        let t = Truncation::new(1, 100, 2);
        let bs = band_split(&p, 1.0, t).unwrap();
        let cert = f_band_lower_bound(1.0, OmegaInterval::default(), &bs, &p, 1e-3);
        assert!(cert.passed(), "{cert:?}");
        assert!(cert.grid_min >= cert.c);
        // j = 100, n = 0: |1 - w^2 1e4| / (1e4 + 1) >= 0.5 on [1, 2]
        let i = t.index_of(&ModeIndex::new(100, pt(&[0]))).unwrap();
        assert!(!bs.is_h(i));
        assert!((1.0 - 1e4f64).abs() / (1e4 + 1.0) >= 0.5 * 0.9999);

        let tiny = Truncation::new(1, 0, 0);
        let p0 = build_partition(&PartitionParams::new(1, 0, 0.05));
        if let Ok(p0) = p0 {
            let bs0 = band_split(&p0, 1.0, tiny).unwrap();
            let c0 = f_band_lower_bound(1.0, OmegaInterval::default(), &bs0, &p0, 1e-3);
            assert!(c0.passed());
        }
    }

    #[test]
    fn invert_roundtrip() {
        let p = build_partition(&PartitionParams::new(1, 3, 0.05)).unwrap();
        let t = Truncation::new(1, 120, 3);
        let bs = band_split(&p, 1.0, t).unwrap();
        let sym = BeamSymbol::new(1.0, 1.0).unwrap();
        let zero = invert_on_f(&sym, &bs, &FourierField::zeros(t)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let f = bs.project_f(&random_field(t, 2, 1.0));
        let back = apply(&sym, &invert_on_f(&sym, &bs, &f).unwrap());
        assert!(back.sub(&f).unwrap().max_abs() < 1e-12);

        let mut single = FourierField::zeros(t);
        let q = ModeIndex::new(100, pt(&[0]));
        single.set(&q, Complex64::new(1.0, 0.0)).unwrap();
        let inv = invert_on_f(&sym, &bs, &single).unwrap();
        assert!((inv.get(&q).re + 1.0 / 9999.0).abs() < 1e-18);

        let leak = random_field(t, 2, 1.0);
        assert!(matches!(invert_on_f(&sym, &bs, &leak), Err(BeamError::SupportInH(_))));
    }

    #[test]
    fn self_adjoint() {
        let t = Truncation::new(2, 4, 3);
        let sym = BeamSymbol::new(1.5, 1.3).unwrap();
        let u = random_field(t, 5, 1.0);
        let v = random_field(t, 6, 1.0);
        let a = apply(&sym, &u).inner(&v);
        let b = u.inner(&apply(&sym, &v));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        assert!(apply(&sym, &u).is_real(1e-13));
    }
}
