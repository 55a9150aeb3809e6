//! Brute-force damped Newton solver for `G(u) = 0` over every truncated mode,
//! independent of the band reduction and the staged scheme.

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::beam::eigenvalue;
use crate::diagonalization::CMatrix;
use crate::equation::{pde_residual, Problem};
use crate::field::FourierField;
use crate::layout::ModeLayout;
use crate::nonlinearity::multiplication_matrix;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("singular Jacobian at iteration {iteration} (min singular value {sigma_min:.3e})")]
    Singular { iteration: usize, sigma_min: f64 },
    #[error("Newton diverged: no Armijo step accepted at iteration {iteration} (residual {residual:.3e})")]
    Diverged { iteration: usize, residual: f64 },
    #[error("Newton did not converge in {max_iter} iterations (residual {residual:.3e})")]
    MaxIter { max_iter: usize, residual: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            armijo: 1e-4,
            min_step: 1.0 / 1024.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub u: FourierField,
    pub residual: f64,
    pub iterations: usize,
    /// `||G(u_k)||_{H^0}` per iterate, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub steps: Vec<f64>,
}

/// `J(u) = diag(L_w) - eps Mult(d^2F/dz^2(u))` on every mode.
pub fn jacobian(pb: &Problem, u: &FourierField, layout: &ModeLayout) -> CMatrix {
    let hess = pb.nl.hessian_field(u);
    let mut j = multiplication_matrix(&hess, layout, layout) * Complex64::new(-pb.eps, 0.0);
    for k in 0..layout.len() {
        j[(k, k)] += eigenvalue(&pb.sym, &layout.mode(k));
    }
    j
}

fn sigma_min(j: &CMatrix) -> f64 {
    j.clone().singular_values().min()
}

pub fn newton_solve(
    pb: &Problem,
    u_init: Option<&FourierField>,
    opts: NewtonOptions,
) -> Result<NewtonReport, OracleError> {
    let layout = ModeLayout::all(pb.truncation());
    let mut u = u_init
        .cloned()
        .unwrap_or_else(|| FourierField::zeros(pb.truncation()));
    let mut g = pde_residual(pb, &u);
    let mut res = g.sobolev_norm(0.0);
    let mut history = vec![res];
    let mut steps = Vec::new();
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(NewtonReport {
                u,
                residual: res,
                iterations: it,
                residual_history: history,
                steps,
            });
        }
        let jac = jacobian(pb, &u, &layout);
        let rhs = -layout.gather(&g);
        let delta = match jac.clone().lu().solve(&rhs) {
            Some(d) if d.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => d,
            _ => {
                return Err(OracleError::Singular {
                    iteration: it,
                    sigma_min: sigma_min(&jac),
                })
            }
        };
        let step = layout.scatter(&delta);
        let mut t = 1.0;
        loop {
            let trial = u.add(&step.scale(t)).expect("same truncation");
            let g_trial = pde_residual(pb, &trial);
            let r_trial = g_trial.sobolev_norm(0.0);
            if r_trial * r_trial <= (1.0 - 2.0 * opts.armijo * t) * res * res || r_trial <= opts.tol {
                u = trial;
                g = g_trial;
                res = r_trial;
                break;
            }
            t *= 0.5;
            if t < opts.min_step {
                return Err(OracleError::Diverged {
                    iteration: it,
                    residual: res,
                });
            }
        }
        steps.push(t);
        history.push(res);
    }
    if res <= opts.tol {
        return Ok(NewtonReport {
            u,
            residual: res,
            iterations: opts.max_iter,
            residual_history: history,
            steps,
        });
    }
    Err(OracleError::MaxIter {
        max_iter: opts.max_iter,
        residual: res,
    })
}

/// Largest relative error between Jacobian columns and central differences
/// of `G` along the real directions `e_q + e_-q` and `i(e_q - e_-q)`.
/// `max_dirs` bounds the number of modes probed (evenly spread).
pub fn jacobian_fd_check(pb: &Problem, u: &FourierField, h: f64, max_dirs: usize) -> f64 {
    let layout = ModeLayout::all(pb.truncation());
    let jac = jacobian(pb, u, &layout);
    let n = layout.len();
    let stride = n.div_ceil(max_dirs.max(1)).max(1);
    let mut worst: f64 = 0.0;
    for k in (0..n).step_by(stride) {
        let mk = layout.mirror(k);
        if mk < k {
            continue;
        }
        let dirs: Vec<Complex64> = if mk == k {
            vec![Complex64::new(1.0, 0.0)]
        } else {
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]
        };
        for c in dirs {
            let mut d = DVector::zeros(n);
            d[k] = c;
            if mk != k {
                d[mk] = c.conj();
            }
            let dir = layout.scatter(&d);
            let plus = pde_residual(pb, &u.add(&dir.scale(h)).unwrap());
            let minus = pde_residual(pb, &u.add(&dir.scale(-h)).unwrap());
            let fd = layout.gather(&plus.sub(&minus).unwrap()) / Complex64::new(2.0 * h, 0.0);
            let exact = &jac * &d;
            let err = (&fd - &exact).norm() / exact.norm().max(1e-300);
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::BeamSymbol;
    use crate::field::{ModeIndex, Truncation};
    use crate::lattice::LatticePoint;
    use crate::nonlinearity::{Nonlinearity, NonlinearitySpec};
    use crate::testutil::random_field;

    fn problem(eps: f64) -> Problem {
        let t = Truncation::new(1, 4, 2);
        let nl = Nonlinearity::new(NonlinearitySpec::quartic(1, 1.0), t);
        let mut f = FourierField::zeros(t);
        f.set(&ModeIndex::new(1, LatticePoint::new(&[1])), Complex64::new(1.0, 0.0))
            .unwrap();
        Problem::new(BeamSymbol::new(1.0, 1.234).unwrap(), eps, nl, f)
    }

    #[test]
    fn zero_eps_is_zero() {
        let r = newton_solve(&problem(0.0), None, NewtonOptions::default()).unwrap();
        assert_eq!(r.u.max_abs(), 0.0);
        assert!(r.iterations <= 1);
    }

    #[test]
    fn converges_quadratically() {
        let pb = problem(0.05);
        let r = newton_solve(&pb, None, NewtonOptions::default()).unwrap();
        assert!(r.residual <= 1e-12);
        let h = &r.residual_history;
        for w in h.windows(2).filter(|w| w[0] > 1e-9 && w[1] > 1e-13) {
            assert!(w[1] / (w[0] * w[0]) < 1e3, "{h:?}");
        }
    }

    #[test]
    fn jacobian_matches_differences() {
        let lin = problem(0.0);
        let u = random_field(lin.truncation(), 1, 0.3);
        assert!(jacobian_fd_check(&lin, &u, 1e-4, 100) <= 1e-12);
        let pb = problem(0.5);
        assert!(jacobian_fd_check(&pb, &u, 1e-4, 100) <= 1e-6);
        let lay = ModeLayout::all(pb.truncation());
        let j = jacobian(&pb, &u, &lay);
        assert!(crate::diagonalization::max_entry(&(&j - j.adjoint())) <= 1e-14);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        // w = 1, m = 1: the multiplier of (j = 1, n = 0) is exactly zero
        let mut pb = problem(1e-3);
        pb.sym = pb.sym.with_omega(1.0);
        match newton_solve(&pb, None, NewtonOptions::default()) {
            Err(OracleError::Singular { sigma_min, .. }) => assert!(sigma_min < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
