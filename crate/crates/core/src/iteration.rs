//! The staged scheme on the resonant band. At stage `k -> k+1`, with all
//! operators frozen at `u_k`:
//!
//! ```text
//! H_{k+1} = S_{k+1} [ T* R~ u_k + R1 w_k + T* f_eff ]
//! P_alpha w_{k+1} = (1 - psi_k'(w)) eps A_alpha^{-1} P_alpha H_{k+1}   (shell k' <= k+1)
//! u_{k+1} = T w_{k+1}
//! ```
//!
//! where `T = Id + eps Q` block diagonalizes `L + eps V` and `f_eff` carries
//! the forcing plus the coupling to the eliminated f-band.

use log::{debug, info};
use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::beam::OmegaInterval;
use crate::diagonalization::{beam_diagonal, diagonalize, CMatrix, ConjugationResult, DiagError, DiagParams};
use crate::equation::{residual_norm, Problem};
use crate::field::{band_split, BandSplit, FieldError, FourierField};
use crate::lattice::ClusterPartition;
use crate::layout::ModeLayout;
use crate::lyapunov::{PicardOptions, ReducedProblem, ReductionError};
use crate::nonlinearity::{multiplication_matrix, para_split_matrix};
use crate::par::*;
use crate::small_divisors::{build_cutoffs, screen, BlockFamily, CutoffFamily, CutoffParams, DivisorError};

#[derive(Debug, Error)]
pub enum IterError {
    #[error("omega = {omega} lies in the excluded set of shell {shell}")]
    Excluded { omega: f64, shell: usize },
    #[error("cluster {alpha} is resonant at omega = {omega} but its cutoff vanishes")]
    InconsistentCutoff { alpha: usize, omega: f64 },
    #[error("iteration stagnated: fitted decay exponent {exponent:.3} < 0.1 after {stages} stages")]
    Stagnation { exponent: f64, stages: usize },
    #[error("block solve failed for cluster {0}")]
    Singular(usize),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error(transparent)]
    Divisor(#[from] DivisorError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Debug)]
pub struct IterParams {
    pub delta: f64,
    pub zeta: f64,
    /// Homological cutoff constant; `None` selects `2^{-rho}`.
    pub c0: Option<f64>,
    pub n_diag: usize,
    pub k_max: usize,
    pub tol_step: f64,
    pub sigma: f64,
    pub picard: PicardOptions,
    pub interval: OmegaInterval,
    pub grid_step: f64,
}

impl IterParams {
    pub fn new(delta: f64, zeta: f64) -> Self {
        Self {
            delta,
            zeta,
            c0: None,
            n_diag: 1,
            k_max: 12,
            tol_step: 1e-10,
            sigma: 2.0,
            picard: PicardOptions::default(),
            interval: OmegaInterval::default(),
            grid_step: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub k: usize,
    pub dw_norm: f64,
    pub du_norm: f64,
    pub residual: f64,
    pub offdiag_before: f64,
    pub offdiag_after: f64,
    pub excluded_measure: f64,
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub k: usize,
    pub u: FourierField,
    pub w: FourierField,
    pub reduced: ReducedProblem,
    pub cutoffs: Option<CutoffFamily>,
    pub history: Vec<StageRecord>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub state: SolverState,
    /// `u1 + u2` after the final f-band solve.
    pub solution: FourierField,
    pub residual: f64,
    pub converged: bool,
    /// Least-squares `-d ln ||w_k - w_{k-1}|| / dk`.
    pub decay_exponent: f64,
}

impl RunReport {
    pub fn stages(&self) -> usize {
        self.state.history.len()
    }
}

type BlockPiece = (std::ops::Range<usize>, DVector<Complex64>);

/// Everything a stage needs besides the state.
pub struct Solver<'a> {
    pub pb: &'a Problem,
    pub partition: &'a ClusterPartition,
    pub bs: BandSplit,
    pub layout: ModeLayout,
    pub params: IterParams,
    l_diag: Vec<f64>,
    weights: Vec<f64>,
}

/// Intermediate operators of one stage, exposed for inspection.
pub struct StageOperators {
    pub conj: ConjugationResult,
    pub rt: CMatrix,
    pub f_eff: DVector<Complex64>,
    pub family: BlockFamily,
}

fn cplx(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

impl<'a> Solver<'a> {
    pub fn new(pb: &'a Problem, partition: &'a ClusterPartition, params: IterParams) -> Result<Self, IterError> {
        let bs = band_split(partition, pb.sym.m, pb.truncation())?;
        let layout = ModeLayout::h_band(&bs);
        let l_diag = beam_diagonal(&pb.sym, &layout);
        let weights = (0..layout.len())
            .map(|k| layout.mode(k).weight().powf(params.sigma / 2.0))
            .collect();
        Ok(Self {
            pb,
            partition,
            bs,
            layout,
            params,
            l_diag,
            weights,
        })
    }

    pub fn c0(&self) -> f64 {
        self.params
            .c0
            .unwrap_or_else(|| crate::diagonalization::default_c0(self.partition.rho()))
    }

    /// `H^sigma` norm of a layout vector.
    pub fn norm(&self, v: &DVector<Complex64>) -> f64 {
        v.iter()
            .zip(&self.weights)
            .map(|(z, w)| (z * w).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn max_shell(&self) -> usize {
        self.layout
            .blocks()
            .iter()
            .map(|(a, _)| self.partition.shell(*a))
            .max()
            .unwrap_or(0)
    }

    pub fn initial_state(&self) -> Result<SolverState, IterError> {
        let zero = FourierField::zeros(self.pb.truncation());
        let reduced = ReducedProblem::solve(self.pb, &self.bs, &zero, self.params.picard)?;
        Ok(SolverState {
            k: 0,
            u: zero.clone(),
            w: zero,
            reduced,
            cutoffs: None,
            history: Vec::new(),
        })
    }

    pub fn cutoff_params(&self) -> CutoffParams {
        CutoffParams {
            delta: self.params.delta,
            zeta: self.params.zeta,
            k0: self.bs.k0,
            k_max: self.params.k_max,
            interval: self.params.interval,
            grid_step: self.params.grid_step,
        }
    }

    /// Operators frozen at the state's `u`.
    pub fn operators(&self, state: &SolverState) -> Result<StageOperators, IterError> {
        let eps = self.pb.eps;
        let big_u = state.reduced.full();
        let g = self.pb.nl.multiplier_field(&big_u);
        let m_hh = multiplication_matrix(&g, &self.layout, &self.layout);
        let split = para_split_matrix(&m_hh, &self.layout);
        let u1 = self.layout.gather(&state.u);
        let grad_h = self.layout.gather(&self.pb.nl.grad_phi2(&big_u));
        let f_eff = self.layout.gather(&state.reduced.f1) + grad_h - &m_hh * &u1;
        let conj = diagonalize(
            &self.l_diag,
            &split.v(),
            &self.layout,
            &DiagParams {
                eps,
                c0: self.c0(),
                rho: self.partition.rho(),
                steps: self.params.n_diag,
            },
        )?;
        let family = BlockFamily::new(&self.layout, self.partition, self.pb.sym.m, eps, Some(&conj.v_d))?;
        Ok(StageOperators {
            conj,
            rt: split.remainder,
            f_eff,
            family,
        })
    }

    /// `H_{k+1}` on the layout.
    pub fn rhs_h(&self, state: &SolverState, ops: &StageOperators, k_next: usize) -> DVector<Complex64> {
        let eps = self.pb.eps;
        let t_adj = ops.conj.t(eps).adjoint();
        let u = self.layout.gather(&state.u);
        let w = self.layout.gather(&state.w);
        let mut h = &t_adj * (&ops.rt * &u) + &ops.conj.r1 * &w + &t_adj * &ops.f_eff;
        let bound = 2f64.powi(k_next as i32 + 1);
        for k in 0..self.layout.len() {
            if self.partition.rep_bracket(self.layout.cluster(k)) >= bound {
                h[k] = Complex64::default();
            }
        }
        h
    }

    /// Damped block solves for shells `k' <= k_next`.
    pub fn block_solve(
        &self,
        ops: &StageOperators,
        h: &DVector<Complex64>,
        cutoffs: &CutoffFamily,
        k_next: usize,
    ) -> Result<DVector<Complex64>, IterError> {
        let eps = self.pb.eps;
        let omega = self.pb.sym.omega;
        let record = screen(omega, self.params.delta, self.params.zeta, &ops.family);
        let parts: Vec<Result<BlockPiece, IterError>> = ops
            .family
            .blocks
            .par_iter()
            .filter(|b| b.shell <= k_next)
            .map(|b| {
                let psi = cutoffs.psi(b.shell, omega);
                let resonant = record
                    .clusters
                    .iter()
                    .any(|c| c.alpha == b.alpha && c.resonant);
                if resonant && psi == 0.0 {
                    return Err(IterError::InconsistentCutoff { alpha: b.alpha, omega });
                }
                let rhs = h.rows(b.positions.start, b.dim()).into_owned();
                if psi == 1.0 || eps == 0.0 {
                    return Ok((b.positions.clone(), DVector::zeros(b.dim())));
                }
                let x = b
                    .matrix(omega, eps)
                    .lu()
                    .solve(&rhs)
                    .ok_or(IterError::Singular(b.alpha))?;
                Ok((b.positions.clone(), x * cplx((1.0 - psi) * eps)))
            })
            .collect();
        let mut w = DVector::zeros(self.layout.len());
        for part in parts {
            let (range, x) = part?;
            w.rows_mut(range.start, range.len()).copy_from(&x);
        }
        Ok(w)
    }

    /// `u_{k+1} = (Id + eps Q) w_{k+1}`.
    pub fn recover_u(&self, ops: &StageOperators, w: &DVector<Complex64>) -> DVector<Complex64> {
        w + &ops.conj.q * w * cplx(self.pb.eps)
    }

    /// Advance one stage.
    pub fn stage(&self, state: &SolverState) -> Result<SolverState, IterError> {
        let k_next = state.k + 1;
        let omega = self.pb.sym.omega;
        let ops = self.operators(state)?;
        let cutoffs = build_cutoffs(&ops.family, &self.cutoff_params())?;
        if let Some(&shell) = cutoffs.excluding_shells(omega).first() {
            return Err(IterError::Excluded { omega, shell });
        }
        let h = self.rhs_h(state, &ops, k_next);
        let w_next = self.block_solve(&ops, &h, &cutoffs, k_next)?;
        let u_next = self.recover_u(&ops, &w_next);

        let dw = self.norm(&(&w_next - self.layout.gather(&state.w)));
        let du = self.norm(&(&u_next - self.layout.gather(&state.u)));
        let u_field = self.layout.scatter(&u_next);
        let w_field = self.layout.scatter(&w_next);
        let reduced = ReducedProblem::solve(self.pb, &self.bs, &u_field, self.params.picard)?;
        let residual = residual_norm(self.pb, &reduced.full());
        let diag = ops.conj.diagnostics.last().copied();
        let record = StageRecord {
            k: k_next,
            dw_norm: dw,
            du_norm: du,
            residual,
            offdiag_before: diag.map_or(0.0, |d| d.offdiag_before),
            offdiag_after: diag.map_or(0.0, |d| d.offdiag_after),
            excluded_measure: cutoffs.union().measure(),
        };
        debug!("stage {k_next}: dw {dw:.3e} du {du:.3e} residual {residual:.3e}");
        let mut history = state.history.clone();
        history.push(record);
        Ok(SolverState {
            k: k_next,
            u: u_field,
            w: w_field,
            reduced,
            cutoffs: Some(cutoffs),
            history,
        })
    }

    pub fn run(&self) -> Result<RunReport, IterError> {
        let mut state = self.initial_state()?;
        let saturation = self.max_shell();
        let mut converged = false;
        while state.k < self.params.k_max {
            state = self.stage(&state)?;
            let last = state.history.last().expect("one stage done");
            if self.pb.eps == 0.0 {
                converged = true;
                break;
            }
            // S_k covers every shell once k >= max shell
            if state.k >= saturation && last.du_norm <= self.params.tol_step {
                converged = true;
                break;
            }
        }
        let exponent = decay_exponent(&state.history);
        if !converged && exponent < 0.1 {
            return Err(IterError::Stagnation {
                exponent,
                stages: state.history.len(),
            });
        }
        let solution = state.reduced.full();
        let residual = residual_norm(self.pb, &solution);
        info!(
            "staged solve: {} stages, converged {converged}, residual {residual:.3e}",
            state.history.len()
        );
        Ok(RunReport {
            state,
            solution,
            residual,
            converged,
            decay_exponent: exponent,
        })
    }
}

/// Fitted `-d ln ||w_k - w_{k-1}|| / dk` over stages with nonzero steps.
pub fn decay_exponent(history: &[StageRecord]) -> f64 {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .filter(|r| r.dw_norm > 0.0)
        .map(|r| (r.k as f64, r.dw_norm.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}
