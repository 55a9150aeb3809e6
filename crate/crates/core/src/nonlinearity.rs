//! Nonlinearities `F(t, x, z) = a(t, x) z^p / p` with `p >= 3`, evaluated
//! pseudo-spectrally.
//!
//! `dF/dz(u) = g(u) u` holds exactly, so the linear part is the multiplication
//! matrix of `g`, split into para and remainder pieces.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::field::{FourierField, ModeIndex, Truncation};
use crate::layout::ModeLayout;
use crate::lattice::LatticePoint;
use crate::par::*;
use crate::transform::Grid;

#[derive(Debug, Error)]
pub enum NonlinearityError {
    #[error("unknown nonlinearity key `{0}` (expected quartic, quintic, cubic_cos or quartic_field)")]
    UnknownKey(String),
    #[error("nonlinearity `{key}` takes at most {max} parameter(s), got {got}")]
    TooManyParams { key: String, max: usize, got: usize },
    #[error("nonlinearity `quartic_field` needs a coefficient field")]
    MissingField,
    #[error("coefficient field has dimension {got}, expected {expected}")]
    FieldDimension { expected: usize, got: usize },
}

/// `F = a(t, x) z^power / power`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearitySpec {
    pub key: String,
    pub power: u32,
    pub a: FourierField,
}

impl NonlinearitySpec {
    fn constant(key: &str, dim: usize, power: u32, coeff: f64) -> Self {
        let mut a = FourierField::zeros(Truncation::new(dim, 0, 0));
        a.set(&ModeIndex::new(0, LatticePoint::zero(dim)), Complex64::new(coeff, 0.0))
            .expect("zero mode is in the truncation");
        Self {
            key: key.to_string(),
            power,
            a,
        }
    }

    /// `coeff z^4 / 4`.
    pub fn quartic(dim: usize, coeff: f64) -> Self {
        Self::constant("quartic", dim, 4, coeff)
    }

    /// `coeff z^5 / 5`.
    pub fn quintic(dim: usize, coeff: f64) -> Self {
        Self::constant("quintic", dim, 5, coeff)
    }

    /// `coeff cos(t) cos(x_1) z^3 / 3`.
    pub fn cubic_cos(dim: usize, coeff: f64) -> Self {
        let mut a = FourierField::zeros(Truncation::new(dim, 1, 1));
        let mut e1 = [0; 3];
        e1[0] = 1;
        let e1 = LatticePoint::new(&e1[..dim]);
        let c = Complex64::new(coeff / 4.0, 0.0);
        a.set(&ModeIndex::new(1, e1), c).unwrap();
        a.set(&ModeIndex::new(1, -e1), c).unwrap();
        Self {
            key: "cubic_cos".into(),
            power: 3,
            a,
        }
    }

    /// `a(t, x) z^4 / 4` for a given real coefficient field.
    pub fn quartic_field(a: FourierField) -> Self {
        Self {
            key: "quartic_field".into(),
            power: 4,
            a,
        }
    }

    pub fn from_key(
        key: &str,
        dim: usize,
        params: &[f64],
        field: Option<FourierField>,
    ) -> Result<Self, NonlinearityError> {
        let coeff = |max: usize| -> Result<f64, NonlinearityError> {
            if params.len() > max {
                return Err(NonlinearityError::TooManyParams {
                    key: key.into(),
                    max,
                    got: params.len(),
                });
            }
            Ok(params.first().copied().unwrap_or(1.0))
        };
        match key {
            "quartic" => Ok(Self::quartic(dim, coeff(1)?)),
            "quintic" => Ok(Self::quintic(dim, coeff(1)?)),
            "cubic_cos" => Ok(Self::cubic_cos(dim, coeff(1)?)),
            "quartic_field" => {
                coeff(0)?;
                let a = field.ok_or(NonlinearityError::MissingField)?;
                if a.truncation().dim != dim {
                    return Err(NonlinearityError::FieldDimension {
                        expected: dim,
                        got: a.truncation().dim,
                    });
                }
                Ok(Self::quartic_field(a))
            }
            other => Err(NonlinearityError::UnknownKey(other.to_string())),
        }
    }
}

/// Doubled truncation `(2J, 2N)` carrying every difference `q - q'`.
pub fn difference_truncation(t: Truncation) -> Truncation {
    Truncation::new(t.dim, 2 * t.j_max, 2 * t.n_max)
}

/// A nonlinearity bound to a field truncation, with a dealiased grid.
#[derive(Clone, Debug)]
pub struct Nonlinearity {
    spec: NonlinearitySpec,
    trunc: Truncation,
    grid: Grid,
    a_values: Vec<f64>,
}

impl Nonlinearity {
    pub fn new(spec: NonlinearitySpec, trunc: Truncation) -> Self {
        let grid = dealiased_grid(&spec, trunc);
        let a_values = grid.synthesize(&spec.a);
        Self {
            spec,
            trunc,
            grid,
            a_values,
        }
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn pointwise(&self, u: &FourierField, f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
        assert_eq!(u.truncation(), self.trunc, "field truncation mismatch");
        let vals = self.grid.synthesize(u);
        vals.par_iter()
            .zip(self.a_values.par_iter())
            .map(|(&z, &a)| f(a, z))
            .collect()
    }

    /// `Phi_2(u)`: the torus average of `F(t, x, u)`.
    pub fn phi2(&self, u: &FourierField) -> f64 {
        let p = self.spec.power as i32;
        let vals = self.pointwise(u, |a, z| a * z.powi(p) / p as f64);
        Grid::mean(&vals)
    }

    /// Coefficients of `dF/dz(t, x, u)` on the field truncation.
    pub fn grad_phi2(&self, u: &FourierField) -> FourierField {
        let p = self.spec.power as i32;
        let vals = self.pointwise(u, |a, z| a * z.powi(p - 1));
        self.grid.analyze(&vals, self.trunc)
    }

    /// `g = a u^{p-2}` on the difference truncation, so `dF/dz(u) = g u`.
    pub fn multiplier_field(&self, u: &FourierField) -> FourierField {
        let p = self.spec.power as i32;
        let vals = self.pointwise(u, |a, z| a * z.powi(p - 2));
        self.grid.analyze(&vals, difference_truncation(self.trunc))
    }

    /// `d^2F/dz^2 = (p-1) a u^{p-2}` on the difference truncation.
    pub fn hessian_field(&self, u: &FourierField) -> FourierField {
        self.multiplier_field(u).scale(self.spec.power as f64 - 1.0)
    }
}

/// Grid resolving products of degree `power` in `u` against `a` without
/// aliasing into the difference truncation.
pub fn dealiased_grid(spec: &NonlinearitySpec, t: Truncation) -> Grid {
    let at = spec.a.truncation();
    let p = spec.power as usize;
    let size = |k: usize, ka: usize| (2 * (2 * k + 1)).max(p * k + ka + 1).max(2 * ka + 1);
    Grid::for_dim(
        t.dim,
        size(t.j_max as usize, at.j_max as usize),
        size(t.n_max as usize, at.n_max as usize),
    )
}

/// `M[r, c] = g^(q_r - q_c)` on the layout basis.
pub fn multiplication_matrix(g: &FourierField, rows: &ModeLayout, cols: &ModeLayout) -> DMatrix<Complex64> {
    let data: Vec<Vec<Complex64>> = (0..rows.len())
        .into_par_iter()
        .map(|r| {
            let qr = rows.mode(r);
            (0..cols.len())
                .map(|c| {
                    let qc = cols.mode(c);
                    g.get(&ModeIndex::new(qr.j - qc.j, qr.n - qc.n))
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| data[r][c])
}

/// Para indicator `|n - n'| <= (|n| + |n'|) / 10`.
pub fn is_para(n: &LatticePoint, np: &LatticePoint) -> bool {
    10.0 * (*n - *np).norm() <= n.norm() + np.norm()
}

/// `M = para + remainder` with disjoint supports in `(n, n')`. The solved
/// equation uses `V = -para` and `R~ = remainder`, so that
/// `L u + eps V u - eps R~ u = L u - eps M u`.
#[derive(Clone, Debug)]
pub struct SplitPotential {
    pub para: DMatrix<Complex64>,
    pub remainder: DMatrix<Complex64>,
}

impl SplitPotential {
    pub fn v(&self) -> DMatrix<Complex64> {
        -&self.para
    }

    pub fn rt(&self) -> &DMatrix<Complex64> {
        &self.remainder
    }

    pub fn full(&self) -> DMatrix<Complex64> {
        &self.para + &self.remainder
    }
}

pub fn para_split_matrix(m: &DMatrix<Complex64>, layout: &ModeLayout) -> SplitPotential {
    let mut para = DMatrix::zeros(m.nrows(), m.ncols());
    let mut remainder = DMatrix::zeros(m.nrows(), m.ncols());
    for c in 0..m.ncols() {
        let nc = layout.mode(c).n;
        for r in 0..m.nrows() {
            if is_para(&layout.mode(r).n, &nc) {
                para[(r, c)] = m[(r, c)];
            } else {
                remainder[(r, c)] = m[(r, c)];
            }
        }
    }
    SplitPotential { para, remainder }
}

/// Para split of the multiplication matrix of `g(u)` on `layout`.
pub fn para_split(nl: &Nonlinearity, u: &FourierField, layout: &ModeLayout) -> SplitPotential {
    let g = nl.multiplier_field(u);
    para_split_matrix(&multiplication_matrix(&g, layout, layout), layout)
}

/// Operator norms of `R~` from `H^s` to `H^{s+r}` for each `r` in `gains`.
pub fn smoothing_decay(rt: &DMatrix<Complex64>, layout: &ModeLayout, s: f64, gains: &[f64]) -> Vec<(f64, f64)> {
    let w: Vec<f64> = (0..layout.len()).map(|k| layout.mode(k).weight().sqrt()).collect();
    gains
        .iter()
        .map(|&r| {
            let scaled = DMatrix::from_fn(rt.nrows(), rt.ncols(), |i, k| {
                rt[(i, k)] * (w[i].powf(s + r) / w[k].powf(s))
            });
            let norm = if scaled.is_empty() {
                0.0
            } else {
                scaled.singular_values().max()
            };
            (r, norm)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_field, rng};
    use rand::Rng;

    fn t1() -> Truncation {
        Truncation::new(1, 4, 3)
    }

    #[test]
    fn catalog_keys() {
        assert!(NonlinearitySpec::from_key("quartic", 1, &[], None).is_ok());
        assert!(NonlinearitySpec::from_key("cubic_cos", 2, &[0.5], None).is_ok());
        assert!(matches!(
            NonlinearitySpec::from_key("sine", 1, &[], None),
            Err(NonlinearityError::UnknownKey(_))
        ));
        assert!(NonlinearitySpec::from_key("quartic_field", 1, &[], None).is_err());
    }

    #[test]
    fn zero_field_has_zero_gradient() {
        for spec in [
            NonlinearitySpec::quartic(1, 1.0),
            NonlinearitySpec::quintic(1, 1.0),
            NonlinearitySpec::cubic_cos(1, 1.0),
        ] {
            let nl = Nonlinearity::new(spec, t1());
            let z = FourierField::zeros(t1());
            assert_eq!(nl.grad_phi2(&z).max_abs(), 0.0);
            assert_eq!(nl.multiplier_field(&z).max_abs(), 0.0);
        }
    }

    /// Direct convolution of coefficient tables, truncated to `out`.
    fn convolve(a: &FourierField, b: &FourierField, out: Truncation) -> FourierField {
        let mut c = FourierField::zeros(out);
        for (i, x) in a.coeffs().iter().enumerate() {
            let qa = a.truncation().mode(i);
            for (k, y) in b.coeffs().iter().enumerate() {
                let qb = b.truncation().mode(k);
                let q = ModeIndex::new(qa.j + qb.j, qa.n + qb.n);
                if let Some(idx) = out.index_of(&q) {
                    c.coeffs_mut()[idx] += x * y;
                }
            }
        }
        c
    }

    #[test]
    fn cubic_matches_triple_convolution() {
        let t = t1();
        let big = Truncation::new(1, 12, 9);
        let u = random_field(t, 3, 0.5);
        let ub = u.retruncate(big);
        let u2 = convolve(&ub, &ub, big);
        let u3 = convolve(&u2, &ub, t);
        let nl = Nonlinearity::new(NonlinearitySpec::quartic(1, 1.0), t);
        let g = nl.grad_phi2(&u);
        assert!(g.sub(&u3).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn gradient_is_multiplication_by_g() {
        for spec in [
            NonlinearitySpec::quartic(2, 1.0),
            NonlinearitySpec::quintic(2, 0.7),
            NonlinearitySpec::cubic_cos(2, 1.3),
        ] {
            let t = Truncation::new(2, 3, 2);
            let nl = Nonlinearity::new(spec, t);
            let u = random_field(t, 8, 0.3);
            let lay = ModeLayout::all(t);
            let m = multiplication_matrix(&nl.multiplier_field(&u), &lay, &lay);
            let mu = lay.scatter(&(&m * lay.gather(&u)));
            let g = nl.grad_phi2(&u);
            assert!(mu.sub(&g).unwrap().max_abs() < 1e-10);
            assert!((&m - m.adjoint()).camax() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = Truncation::new(1, 3, 3);
        let nl = Nonlinearity::new(NonlinearitySpec::quartic(1, 1.0), t);
        let u = random_field(t, 1, 0.3);
        let h = random_field(t, 2, 1.0);
        let step = 1e-5;
        let fd = (nl.phi2(&u.add(&h.scale(step)).unwrap()) - nl.phi2(&u.add(&h.scale(-step)).unwrap()))
            / (2.0 * step);
        let exact = nl.grad_phi2(&u).inner(&h);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs());
    }

    #[test]
    fn split_is_exact_and_complementary() {
        let p = crate::lattice::build_partition(&crate::lattice::PartitionParams::new(1, 6, 0.05)).unwrap();
        let t = Truncation::new(1, 6, 6);
        let lay = ModeLayout::all_clustered(t, &p);
        let nl = Nonlinearity::new(NonlinearitySpec::quartic(1, 1.0), t);
        let u = random_field(t, 4, 0.2);
        let g = nl.multiplier_field(&u);
        let m = multiplication_matrix(&g, &lay, &lay);
        let sp = para_split_matrix(&m, &lay);
        assert!((sp.full() - &m).camax() <= 1e-14);
        for r in 0..lay.len() {
            for c in 0..lay.len() {
                assert!(sp.para[(r, c)] == Complex64::default() || sp.remainder[(r, c)] == Complex64::default());
            }
        }
        assert_eq!(sp.v(), sp.v().adjoint());
        let eps = 1e-2;
        let v = lay.gather(&u);
        let e = Complex64::new(eps, 0.0);
        let lhs = -(&m * &v) * e;
        let rhs = (sp.v() * &v - sp.rt() * &v) * e;
        assert!((lhs - rhs).camax() < 1e-15);
    }

    #[test]
    fn constant_g_is_pure_para() {
        let t = Truncation::new(1, 3, 3);
        let lay = ModeLayout::all(t);
        let mut g = FourierField::zeros(difference_truncation(t));
        g.set(&ModeIndex::new(0, LatticePoint::zero(1)), Complex64::new(2.5, 0.0)).unwrap();
        let sp = para_split_matrix(&multiplication_matrix(&g, &lay, &lay), &lay);
        assert_eq!(sp.remainder.camax(), 0.0);
        assert_eq!(sp.para, DMatrix::identity(lay.len(), lay.len()) * Complex64::new(2.5, 0.0));
    }

    #[test]
    fn smoothing_norms() {
        let t = Truncation::new(1, 2, 6);
        let lay = ModeLayout::all(t);
        let zero = DMatrix::zeros(lay.len(), lay.len());
        assert!(smoothing_decay(&zero, &lay, 0.0, &[0.0, 1.0]).iter().all(|(_, n)| *n == 0.0));
        let mut r = rng(5);
        let mut g = FourierField::zeros(difference_truncation(t));
        g.set(&ModeIndex::new(0, LatticePoint::new(&[6])), Complex64::new(r.random_range(0.5..1.0), 0.0))
            .unwrap();
        let sp = para_split_matrix(&multiplication_matrix(&g, &lay, &lay), &lay);
        let norms = smoothing_decay(&sp.remainder, &lay, 0.0, &[0.0, 0.5]);
        assert!(norms.iter().all(|(_, n)| n.is_finite() && *n > 0.0));
        assert!(norms[0].1 <= sp.remainder.norm() + 1e-12);
    }
}
