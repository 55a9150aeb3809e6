//! Block diagonalization of `L_w + eps V` relative to the cluster
//! decomposition: conjugation by `T = prod (Id + eps Q_i)` with each `Q_i`
//! solving a homological equation against `Delta^2 + m`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::beam::{multiplier, BeamSymbol};
use crate::layout::ModeLayout;
use crate::lattice::LatticePoint;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("cross-cluster pair {0} / {1} has equal |n|^4 inside the cutoff")]
    ZeroDivisor(LatticePoint, LatticePoint),
    #[error("matrix is {rows}x{cols}, layout has {len} modes")]
    Shape { rows: usize, cols: usize, len: usize },
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Largest entry modulus.
pub fn max_entry(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Default cutoff constant `2^{-rho}`: the largest `c0` for which the
/// separation estimate keeps every in-cutoff divisor nonzero.
pub fn default_c0(rho: f64) -> f64 {
    2f64.powf(-rho)
}

/// `|n - n'| <= c0 (|n| + |n'|)^rho`.
pub fn in_cutoff(n: &LatticePoint, np: &LatticePoint, c0: f64, rho: f64) -> bool {
    (*n - *np).norm() <= c0 * (n.norm() + np.norm()).powf(rho)
}

/// Beam multipliers on the layout basis.
pub fn beam_diagonal(sym: &BeamSymbol, layout: &ModeLayout) -> Vec<f64> {
    (0..layout.len())
        .map(|k| {
            let q = layout.mode(k);
            multiplier(sym.m, sym.omega, q.j, &q.n)
        })
        .collect()
}

fn check_shape(a: &CMatrix, layout: &ModeLayout) -> Result<(), DiagError> {
    if a.nrows() != layout.len() || a.ncols() != layout.len() {
        return Err(DiagError::Shape {
            rows: a.nrows(),
            cols: a.ncols(),
            len: layout.len(),
        });
    }
    Ok(())
}

/// `(A_D, A_ND)`: within-cluster blocks and the rest.
pub fn split_diag(a: &CMatrix, layout: &ModeLayout) -> (CMatrix, CMatrix) {
    let mut d = CMatrix::zeros(a.nrows(), a.ncols());
    let mut nd = CMatrix::zeros(a.nrows(), a.ncols());
    for col in 0..a.ncols() {
        for row in 0..a.nrows() {
            if layout.cluster(row) == layout.cluster(col) {
                d[(row, col)] = a[(row, col)];
            } else {
                nd[(row, col)] = a[(row, col)];
            }
        }
    }
    (d, nd)
}

#[derive(Clone, Debug)]
pub struct Homological {
    /// Anti-Hermitian solution with `B*(D^2+m) + (D^2+m)B = A - R_cut`.
    pub b: CMatrix,
    pub r_cut: CMatrix,
    /// Smallest `||n|^4 - |n'|^4|` over in-cutoff cross-cluster pairs.
    pub min_divisor: f64,
}

/// Entrywise solution of the homological equation across clusters, after
/// moving entries outside the `c0` cutoff to `R_cut`.
pub fn solve_homological(
    a_nd: &CMatrix,
    layout: &ModeLayout,
    c0: f64,
    rho: f64,
) -> Result<Homological, DiagError> {
    check_shape(a_nd, layout)?;
    let dim = layout.len();
    let mut b = CMatrix::zeros(dim, dim);
    let mut r_cut = CMatrix::zeros(dim, dim);
    let mut min_divisor = f64::INFINITY;
    for col in 0..dim {
        let nc = layout.mode(col).n;
        for row in 0..dim {
            if layout.cluster(row) == layout.cluster(col) {
                continue;
            }
            let nr = layout.mode(row).n;
            let entry = a_nd[(row, col)];
            if in_cutoff(&nr, &nc, c0, rho) {
                let divisor = (nr.norm4() - nc.norm4()) as f64;
                if divisor == 0.0 {
                    return Err(DiagError::ZeroDivisor(nr, nc));
                }
                min_divisor = min_divisor.min(divisor.abs());
                b[(row, col)] = entry / divisor;
            } else {
                r_cut[(row, col)] = entry;
            }
        }
    }
    Ok(Homological {
        b,
        r_cut,
        min_divisor,
    })
}

/// `B*(D^2+m) + (D^2+m)B` for diagonal `D^2 + m`.
pub fn homological_lhs(b: &CMatrix, layout: &ModeLayout, m: f64) -> CMatrix {
    let d: Vec<f64> = (0..layout.len()).map(|k| layout.mode(k).n.norm4() as f64 + m).collect();
    let ba = b.adjoint();
    CMatrix::from_fn(b.nrows(), b.ncols(), |r, k| ba[(r, k)] * d[k] + b[(r, k)] * d[r])
}

/// In-cutoff cross-cluster part of `a`.
pub fn cutoff_part(a: &CMatrix, layout: &ModeLayout, c0: f64, rho: f64) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |r, k| {
        if layout.cluster(r) != layout.cluster(k)
            && in_cutoff(&layout.mode(r).n, &layout.mode(k).n, c0, rho)
        {
            a[(r, k)]
        } else {
            Complex64::default()
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagParams {
    pub eps: f64,
    pub c0: f64,
    pub rho: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Frobenius norm of `eps` times the in-cutoff off-diagonal potential.
    pub offdiag_before: f64,
    pub offdiag_after: f64,
    /// Frobenius norm of `eps R_cut` for this step.
    pub cutoff_mass: f64,
}

#[derive(Clone, Debug)]
pub struct ConjugationResult {
    /// `Q` with `T = Id + eps Q`.
    pub q: CMatrix,
    pub v_d: CMatrix,
    pub r1: CMatrix,
    pub steps: usize,
    pub diagnostics: Vec<StepDiagnostics>,
    pub min_divisor: f64,
    pub rho_prime: f64,
}

impl ConjugationResult {
    pub fn t(&self, eps: f64) -> CMatrix {
        let n = self.q.nrows();
        CMatrix::identity(n, n) + &self.q * c(eps)
    }
}

/// `W = Q* L + L Q + eps Q* L Q + T* V T`, i.e. `(T*(L + eps V)T - L) / eps`
/// without the cancellation.
fn conjugated_potential(l: &[f64], v: &CMatrix, q: &CMatrix, eps: f64) -> CMatrix {
    let n = v.nrows();
    let lq = CMatrix::from_fn(n, n, |r, k| q[(r, k)] * l[r]);
    let qa = q.adjoint();
    let t = CMatrix::identity(n, n) + q * c(eps);
    lq.adjoint() + &lq + &qa * &lq * c(eps) + t.adjoint() * v * &t
}

/// One elimination step on the current conjugated potential `w`. Returns the
/// step generator `Q_i = -B` with the homological solution it came from.
pub fn conjugate_once(
    w: &CMatrix,
    layout: &ModeLayout,
    params: &DiagParams,
) -> Result<(CMatrix, Homological), DiagError> {
    let (_, nd) = split_diag(w, layout);
    let h = solve_homological(&nd, layout, params.c0, params.rho)?;
    Ok((-&h.b, h))
}

/// Run `steps` conjugation steps starting from `L + eps V`.
pub fn diagonalize(
    l: &[f64],
    v: &CMatrix,
    layout: &ModeLayout,
    params: &DiagParams,
) -> Result<ConjugationResult, DiagError> {
    check_shape(v, layout)?;
    let n = layout.len();
    let eps = params.eps;
    let mut q = CMatrix::zeros(n, n);
    let mut w = v.clone();
    let mut diagnostics = Vec::with_capacity(params.steps);
    let mut min_divisor = f64::INFINITY;
    for step in 1..=params.steps {
        let before = cutoff_part(&w, layout, params.c0, params.rho).norm() * eps;
        let (qi, h) = conjugate_once(&w, layout, params)?;
        min_divisor = min_divisor.min(h.min_divisor);
        // (Id + eps Q)(Id + eps Q_i) = Id + eps (Q + Q_i + eps Q Q_i)
        q = &q + &qi + &q * &qi * c(eps);
        w = conjugated_potential(l, v, &q, eps);
        let after = cutoff_part(&w, layout, params.c0, params.rho).norm() * eps;
        diagnostics.push(StepDiagnostics {
            step,
            offdiag_before: before,
            offdiag_after: after,
            cutoff_mass: h.r_cut.norm() * eps,
        });
    }
    let (v_d, w_nd) = split_diag(&w, layout);
    Ok(ConjugationResult {
        q,
        v_d,
        r1: -w_nd,
        steps: params.steps,
        diagnostics,
        min_divisor,
        rho_prime: 1.0 + params.rho / 2.0,
    })
}

/// Entrywise `T*(L + eps V)T - (L + eps V_D - eps R1)`, computed directly.
pub fn bookkeeping_residual(l: &[f64], v: &CMatrix, res: &ConjugationResult, eps: f64) -> f64 {
    let n = v.nrows();
    let lm = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, l.iter().map(|&x| c(x))));
    let t = res.t(eps);
    let lhs = t.adjoint() * (&lm + v * c(eps)) * &t;
    let rhs = &lm + &res.v_d * c(eps) - &res.r1 * c(eps);
    max_entry(&(lhs - rhs))
}
