//! Pseudo-spectral transforms between coefficient tables and uniform
//! space-time grids on `T x T^d`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::{FourierField, Truncation};

/// Uniform grid with `shape[0]` points in `t` and `shape[1..]` in `x`.
#[derive(Clone)]
pub struct Grid {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("shape", &self.shape).finish()
    }
}

impl Grid {
    pub fn new(shape: Vec<usize>) -> Self {
        assert!(shape.iter().all(|&s| s > 0));
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&s| planner.plan_fft_forward(s)).collect();
        let inverse = shape.iter().map(|&s| planner.plan_fft_inverse(s)).collect();
        Self {
            shape,
            forward,
            inverse,
        }
    }

    /// Grid with `pt` time points and `px` points per spatial axis.
    pub fn for_dim(dim: usize, pt: usize, px: usize) -> Self {
        let mut shape = vec![pt];
        shape.extend(std::iter::repeat_n(px, dim));
        Self::new(shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether every mode of `t` is resolved without wrap-around.
    pub fn resolves(&self, t: &Truncation) -> bool {
        self.shape.len() == t.dim + 1
            && self.shape[0] > 2 * t.j_max as usize
            && self.shape[1..].iter().all(|&p| p > 2 * t.n_max as usize)
    }

    /// Grid coordinates `(t, x_1, ..., x_d)` of flat index `i`.
    pub fn point(&self, mut i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.len()];
        for (a, &s) in self.shape.iter().enumerate().rev() {
            out[a] = 2.0 * std::f64::consts::PI * (i % s) as f64 / s as f64;
            i /= s;
        }
        out
    }

    fn flat_index(&self, t: &Truncation, index: usize) -> usize {
        let mode = t.mode(index);
        let mut flat = mode.j.rem_euclid(self.shape[0] as i32) as usize;
        for (a, &x) in mode.n.coords().iter().enumerate() {
            let s = self.shape[a + 1];
            flat = flat * s + x.rem_euclid(s as i32) as usize;
        }
        flat
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        let ndim = self.shape.len();
        let mut line = Vec::new();
        for (axis, plan) in plans.iter().enumerate().take(ndim) {
            let len = self.shape[axis];
            let stride: usize = self.shape[axis + 1..].iter().product();
            let outer: usize = self.shape[..axis].iter().product();
            if stride == 1 {
                plan.process(data);
                continue;
            }
            line.resize(len, Complex64::default());
            for o in 0..outer {
                let base = o * len * stride;
                for s in 0..stride {
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[base + k * stride + s];
                    }
                    plan.process(&mut line);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride + s] = *v;
                    }
                }
            }
        }
    }

    /// Point values `u(t, x) = sum u^(j,n) e^{i(jt + n.x)}`.
    pub fn synthesize(&self, u: &FourierField) -> Vec<f64> {
        let t = u.truncation();
        assert!(self.resolves(&t), "grid {:?} does not resolve {t:?}", self.shape);
        let mut data = vec![Complex64::default(); self.len()];
        for (i, c) in u.coeffs().iter().enumerate() {
            data[self.flat_index(&t, i)] = *c;
        }
        self.transform(&mut data, true);
        data.into_iter().map(|z| z.re).collect()
    }

    /// Coefficients of a real grid function restricted to truncation `t`.
    pub fn analyze(&self, values: &[f64], t: Truncation) -> FourierField {
        assert_eq!(values.len(), self.len());
        assert!(self.resolves(&t), "grid {:?} does not resolve {t:?}", self.shape);
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        let scale = 1.0 / self.len() as f64;
        let coeffs = (0..t.len())
            .map(|i| data[self.flat_index(&t, i)] * scale)
            .collect();
        FourierField::from_coeffs_lossy(t, coeffs)
    }

    /// Grid average, i.e. the normalised integral over the torus.
    pub fn mean(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ModeIndex;
    use crate::lattice::LatticePoint;
    use crate::testutil::random_field;

    #[test]
    fn roundtrip() {
        let t = Truncation::new(2, 3, 2);
        let u = random_field(t, 1, 1.0);
        let g = Grid::for_dim(2, 8, 6);
        let v = g.analyze(&g.synthesize(&u), t);
        for (a, b) in u.coeffs().iter().zip(v.coeffs()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn single_mode_is_cosine() {
        let t = Truncation::new(1, 2, 2);
        let mut u = FourierField::zeros(t);
        u.set(&ModeIndex::new(1, LatticePoint::new(&[2])), Complex64::new(0.5, 0.0))
            .unwrap();
        let g = Grid::for_dim(1, 7, 9);
        let vals = g.synthesize(&u);
        for (i, v) in vals.iter().enumerate() {
            let p = g.point(i);
            assert!((v - (p[0] + 2.0 * p[1]).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn parseval_on_quadrature_grid() {
        let t = Truncation::new(2, 4, 3);
        let u = random_field(t, 4, 1.0);
        let g = Grid::for_dim(2, 2 * 4 + 2, 2 * 3 + 2);
        let vals = g.synthesize(&u);
        let l2 = Grid::mean(&vals.iter().map(|v| v * v).collect::<Vec<_>>());
        let coeff = u.sobolev_norm(0.0).powi(2);
        assert!((l2 - coeff).abs() <= 1e-10 * coeff);
    }
}
