//! Elimination of the non-resonant band. Writing `u = u1 + u2` with `u1` on
//! the resonant band, the f-band part of `G(u) = 0` is
//! `u2 = eps L^{-1} f2 + eps w2` with `w2 = L^{-1} P_F dF(u1 + u2)`, solved by
//! Picard iteration from `w2 = 0`.

use log::debug;
use thiserror::Error;

use crate::beam::{self, BeamError};
use crate::equation::{pde_residual, Problem};
use crate::field::{BandSplit, FieldError, FourierField};

/// Successive-difference ratio treated as non-contractive.
pub const STALL_RATIO: f64 = 0.95;
/// Consecutive stalled steps before giving up.
pub const STALL_STEPS: usize = 5;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("Picard map is not contracting: ratio {ratio:.3} for {steps} consecutive steps")]
    NonContraction { ratio: f64, steps: usize },
    #[error("f-band solve did not reach {tol:.1e} in {max_iter} iterations (last difference {last:.3e})")]
    MaxIter { tol: f64, max_iter: usize, last: f64 },
    #[error("stale f-band solution: u1 changed since the last solve")]
    Stale,
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub fn split_forcing(f: &FourierField, bs: &BandSplit) -> (FourierField, FourierField) {
    (bs.project_h(f), bs.project_f(f))
}

#[derive(Clone, Debug)]
pub struct FBandSolution {
    pub w2: FourierField,
    pub u2: FourierField,
    pub iterations: usize,
    /// `||w_{n+1} - w_n|| / ||w_n - w_{n-1}||`, only above the noise floor.
    pub ratios: Vec<f64>,
    /// `||w2 - Phi(w2)||_{H^0}` at exit.
    pub fixed_point_residual: f64,
}

impl FBandSolution {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iter: 200,
        }
    }
}

/// Solve the f-band for a given resonant part `u1`.
pub fn solve_f_band(
    pb: &Problem,
    bs: &BandSplit,
    u1: &FourierField,
    opts: PicardOptions,
) -> Result<FBandSolution, ReductionError> {
    let (_, f2) = split_forcing(&pb.forcing, bs);
    let base = beam::invert_on_f(&pb.sym, bs, &f2)?.scale(pb.eps);
    let phi = |w: &FourierField| -> Result<FourierField, ReductionError> {
        let mut u = u1.clone();
        u.axpy(1.0, &base)?;
        u.axpy(pb.eps, w)?;
        let g = bs.project_f(&pb.nl.grad_phi2(&u));
        Ok(beam::invert_on_f(&pb.sym, bs, &g)?)
    };

    let mut w = FourierField::zeros(u1.truncation());
    let mut ratios = Vec::new();
    let mut prev_diff: Option<f64> = None;
    let mut stalled = 0usize;
    for it in 1..=opts.max_iter {
        let next = phi(&w)?;
        let diff = next.sub(&w)?.sobolev_norm(0.0);
        let floor = 64.0 * f64::EPSILON * next.sobolev_norm(0.0);
        w = next;
        if diff <= opts.tol.max(floor) {
            let fixed_point_residual = phi(&w)?.sub(&w)?.sobolev_norm(0.0);
            debug!("f-band converged in {it} steps, ratios {ratios:?}");
            let mut u2 = base.clone();
            u2.axpy(pb.eps, &w)?;
            return Ok(FBandSolution {
                w2: w,
                u2,
                iterations: it,
                ratios,
                fixed_point_residual,
            });
        }
        if let Some(prev) = prev_diff {
            let ratio = diff / prev;
            ratios.push(ratio);
            if ratio >= STALL_RATIO {
                stalled += 1;
                if stalled >= STALL_STEPS {
                    return Err(ReductionError::NonContraction {
                        ratio,
                        steps: stalled,
                    });
                }
            } else {
                stalled = 0;
            }
        }
        prev_diff = Some(diff);
    }
    Err(ReductionError::MaxIter {
        tol: opts.tol,
        max_iter: opts.max_iter,
        last: prev_diff.unwrap_or(f64::NAN),
    })
}

/// A resonant-band state together with its solved f-band.
#[derive(Clone, Debug)]
pub struct ReducedProblem {
    pub u1: FourierField,
    pub f1: FourierField,
    pub f2: FourierField,
    pub solution: FBandSolution,
    pub eps: f64,
    pub omega: f64,
}

impl ReducedProblem {
    pub fn solve(
        pb: &Problem,
        bs: &BandSplit,
        u1: &FourierField,
        opts: PicardOptions,
    ) -> Result<Self, ReductionError> {
        let u1 = bs.project_h(u1);
        let (f1, f2) = split_forcing(&pb.forcing, bs);
        let solution = solve_f_band(pb, bs, &u1, opts)?;
        Ok(Self {
            u1,
            f1,
            f2,
            solution,
            eps: pb.eps,
            omega: pb.sym.omega,
        })
    }

    /// `u1 + u2`.
    pub fn full(&self) -> FourierField {
        self.u1.add(&self.solution.u2).expect("same truncation")
    }
}

/// Resonant-band residual `||P_H(L u1 - eps P_H dF(u1 + u2) - eps f1)||_{H^0}`.
pub fn reduced_residual(
    pb: &Problem,
    bs: &BandSplit,
    u1: &FourierField,
    rp: &ReducedProblem,
) -> Result<f64, ReductionError> {
    if bs.project_h(u1) != rp.u1 {
        return Err(ReductionError::Stale);
    }
    let u = rp.full();
    let mut r = beam::apply(&pb.sym, &rp.u1);
    r.axpy(-pb.eps, &bs.project_h(&pb.nl.grad_phi2(&u)))?;
    r.axpy(-pb.eps, &rp.f1)?;
    Ok(bs.project_h(&r).sobolev_norm(0.0))
}

/// Band components of the full residual `G(u1 + u2)`.
pub fn band_residuals(pb: &Problem, bs: &BandSplit, rp: &ReducedProblem) -> (f64, f64) {
    let r = pde_residual(pb, &rp.full());
    (
        bs.project_h(&r).sobolev_norm(0.0),
        bs.project_f(&r).sobolev_norm(0.0),
    )
}

/// Largest candidate `eps` whose Picard ratios stay below `bound`.
pub fn discover_gamma0(
    pb: &Problem,
    bs: &BandSplit,
    u1: &FourierField,
    candidates: &[f64],
    bound: f64,
) -> Option<f64> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut best = None;
    for eps in sorted {
        match solve_f_band(&pb.with_eps(eps), bs, u1, PicardOptions::default()) {
            Ok(sol) if sol.max_ratio() <= bound => best = Some(eps),
            _ => break,
        }
    }
    best
}
