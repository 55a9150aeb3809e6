//! The truncated Galerkin system `G(u) = L_w u - eps dF(u) - eps f = 0`,
//! shared verbatim by the staged solver and the Newton oracle.

use crate::beam::{self, BeamSymbol};
use crate::field::{FourierField, Truncation};
use crate::nonlinearity::Nonlinearity;

#[derive(Clone, Debug)]
pub struct Problem {
    pub sym: BeamSymbol,
    pub eps: f64,
    pub nl: Nonlinearity,
    pub forcing: FourierField,
}

impl Problem {
    pub fn new(sym: BeamSymbol, eps: f64, nl: Nonlinearity, forcing: FourierField) -> Self {
        assert_eq!(nl.truncation(), forcing.truncation(), "forcing truncation mismatch");
        Self {
            sym,
            eps,
            nl,
            forcing,
        }
    }

    pub fn truncation(&self) -> Truncation {
        self.forcing.truncation()
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }
}

/// `G(u) = L_w u - eps dF/dz(u) - eps f` on the full truncation.
pub fn pde_residual(pb: &Problem, u: &FourierField) -> FourierField {
    let mut r = beam::apply(&pb.sym, u);
    r.axpy(-pb.eps, &pb.nl.grad_phi2(u)).expect("same truncation");
    r.axpy(-pb.eps, &pb.forcing).expect("same truncation");
    r
}

/// `||G(u)||_{H^0}`.
pub fn residual_norm(pb: &Problem, u: &FourierField) -> f64 {
    pde_residual(pb, u).sobolev_norm(0.0)
}
