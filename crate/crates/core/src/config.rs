//! TOML run configuration with validation and a stable content hash.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::beam::{BeamSymbol, OmegaInterval};
use crate::equation::Problem;
use crate::field::{FourierField, ModeIndex, Truncation};
use crate::iteration::IterParams;
use crate::lattice::{build_partition, ClusterPartition, LatticePoint, LinkRule, PartitionError, PartitionParams};
use crate::lyapunov::PicardOptions;
use crate::nonlinearity::{Nonlinearity, NonlinearityError, NonlinearitySpec};
use crate::oracle::NewtonOptions;
use crate::testutil::smooth_random_field;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{key}`: {rule}")]
    Invalid { key: String, rule: String },
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

impl ConfigError {
    fn invalid(key: &str, rule: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            rule: rule.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub key: String,
    #[serde(default)]
    pub params: Vec<f64>,
    /// `[j, n_1, .., n_d, re, im]` records for `quartic_field`.
    #[serde(default)]
    pub field: Vec<Vec<f64>>,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self {
            key: "quartic".into(),
            params: Vec::new(),
            field: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ForcingMode {
    pub j: i32,
    pub n: Vec<i32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Random forcing scaled to `||f||_{H^sigma} = q0`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RandomForcing {
    pub q0: f64,
    #[serde(default = "two")]
    pub sigma: f64,
}

fn two() -> f64 {
    2.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol_step: f64,
    pub sigma: f64,
    pub k_max: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_step: 1e-10,
            sigma: 2.0,
            k_max: 12,
            picard_tol: 1e-14,
            picard_max_iter: 200,
            newton_tol: 1e-12,
            newton_max_iter: 50,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { points: 1001 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureConfig {
    pub deltas: Vec<f64>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            deltas: vec![4e-3, 2e-3, 1e-3, 5e-4],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    /// Time frequencies `0..=j_max`; defaults to the truncation.
    pub j_max: Option<i32>,
    pub omegas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub omegas: Vec<f64>,
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub d: usize,
    pub m: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub zeta: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub c0: Option<f64>,
    #[serde(default = "one")]
    pub n_diag: usize,
    #[serde(default = "default_j_max")]
    pub j_max: i32,
    #[serde(default = "default_n_max")]
    pub n_max: i32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_f")]
    pub omega_lo: f64,
    #[serde(default = "two")]
    pub omega_hi: f64,
    #[serde(default = "default_step")]
    pub omega_step: f64,
    #[serde(default = "default_link")]
    pub theta_link: f64,
    #[serde(default = "default_ceiling")]
    pub theta1_ceiling: f64,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub forcing: Vec<ForcingMode>,
    pub random_forcing: Option<RandomForcing>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

fn default_omega() -> f64 {
    1.5
}
fn default_delta() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.05
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn default_j_max() -> i32 {
    16
}
fn default_n_max() -> i32 {
    4
}
fn default_step() -> f64 {
    1e-3
}
fn default_link() -> f64 {
    0.5
}
fn default_ceiling() -> f64 {
    64.0
}

/// Threshold `beta d + d/2 + 2` above which the measure series converges.
pub fn zeta_threshold(beta: f64, d: usize) -> f64 {
    beta * d as f64 + d as f64 / 2.0 + 2.0
}

impl SolverConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: SolverConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=3).contains(&self.d) {
            return Err(ConfigError::invalid("d", "d must be 1, 2 or 3"));
        }
        if !(self.m > 0.0) {
            return Err(ConfigError::invalid("m", "m > 0"));
        }
        if !(self.beta > 0.0 && self.beta < 0.1) {
            return Err(ConfigError::invalid("beta", "0 < beta < 1/10"));
        }
        if !(self.delta > 0.0) {
            return Err(ConfigError::invalid("delta", "delta > 0"));
        }
        if !(self.eps >= 0.0) {
            return Err(ConfigError::invalid("eps", "eps >= 0"));
        }
        if self.eps > self.delta * self.delta * (1.0 + 1e-12) {
            return Err(ConfigError::invalid("eps", "eps ≤ delta²"));
        }
        if self.j_max < 1 || self.n_max < 1 {
            return Err(ConfigError::invalid("j_max/n_max", "truncation radii must be >= 1"));
        }
        OmegaInterval::new(self.omega_lo, self.omega_hi)
            .map_err(|_| ConfigError::invalid("omega_lo/omega_hi", "0 < omega_lo <= omega_hi"))?;
        if !(self.omega_lo..=self.omega_hi).contains(&self.omega) {
            return Err(ConfigError::invalid("omega", "omega_lo <= omega <= omega_hi"));
        }
        if !(self.omega_step > 0.0) {
            return Err(ConfigError::invalid("omega_step", "omega_step > 0"));
        }
        if let Some(c0) = self.c0 {
            if !(c0 > 0.0) {
                return Err(ConfigError::invalid("c0", "c0 > 0"));
            }
        }
        if self.tolerances.k_max < 1 {
            return Err(ConfigError::invalid("tolerances.k_max", "k_max >= 1"));
        }
        if self.sweep.points < 2 {
            return Err(ConfigError::invalid("sweep.points", "at least 2 points"));
        }
        if self.measure.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(ConfigError::invalid("measure.deltas", "all deltas > 0"));
        }
        if self.zeta() <= zeta_threshold(self.beta, self.d) {
            warn!(
                "zeta = {} does not exceed beta d + d/2 + 2 = {}",
                self.zeta(),
                zeta_threshold(self.beta, self.d)
            );
        }
        for f in &self.forcing {
            if f.n.len() != self.d {
                return Err(ConfigError::invalid("forcing.n", format!("expected {} components", self.d)));
            }
        }
        self.forcing_field()?;
        self.nonlinearity_spec()?;
        Ok(())
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
            .unwrap_or_else(|| zeta_threshold(self.beta, self.d) + 0.5)
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.d, self.j_max, self.n_max)
    }

    pub fn interval(&self) -> OmegaInterval {
        OmegaInterval {
            lo: self.omega_lo,
            hi: self.omega_hi,
        }
    }

    pub fn partition_params(&self) -> PartitionParams {
        let mut p = PartitionParams::new(self.d, self.n_max, self.beta);
        p.link = LinkRule {
            theta_link: self.theta_link,
        };
        p.theta1_ceiling = self.theta1_ceiling;
        p
    }

    pub fn partition(&self) -> Result<ClusterPartition, PartitionError> {
        build_partition(&self.partition_params())
    }

    pub fn nonlinearity_spec(&self) -> Result<NonlinearitySpec, ConfigError> {
        let nl = &self.nonlinearity;
        let field = if nl.field.is_empty() {
            None
        } else {
            Some(records_to_field(&nl.field, self.d, "nonlinearity.field")?)
        };
        Ok(NonlinearitySpec::from_key(&nl.key, self.d, &nl.params, field)?)
    }

    /// Explicit forcing modes, plus the random helper if configured.
    pub fn forcing_field(&self) -> Result<FourierField, ConfigError> {
        let t = self.truncation();
        let mut f = FourierField::zeros(t);
        for m in &self.forcing {
            let mode = ModeIndex::new(m.j, LatticePoint::new(&m.n));
            f.set(&mode, Complex64::new(m.re, m.im))
                .map_err(|e| ConfigError::invalid("forcing", e.to_string()))?;
        }
        if let Some(rf) = &self.random_forcing {
            if !(rf.q0 >= 0.0) {
                return Err(ConfigError::invalid("random_forcing.q0", "q0 >= 0"));
            }
            let r = smooth_random_field(t, self.seed, 1.0, 1.0);
            let norm = r.sobolev_norm(rf.sigma);
            if norm > 0.0 {
                f.axpy(rf.q0 / norm, &r)
                    .map_err(|e| ConfigError::invalid("random_forcing", e.to_string()))?;
            }
        }
        Ok(f)
    }

    pub fn problem(&self) -> Result<Problem, ConfigError> {
        let t = self.truncation();
        let sym = BeamSymbol::new(self.m, self.omega).map_err(|e| ConfigError::invalid("m", e.to_string()))?;
        let nl = Nonlinearity::new(self.nonlinearity_spec()?, t);
        Ok(Problem::new(sym, self.eps, nl, self.forcing_field()?))
    }

    pub fn iter_params(&self) -> IterParams {
        let tol = &self.tolerances;
        IterParams {
            delta: self.delta,
            zeta: self.zeta(),
            c0: self.c0,
            n_diag: self.n_diag,
            k_max: tol.k_max,
            tol_step: tol.tol_step,
            sigma: tol.sigma,
            picard: PicardOptions {
                tol: tol.picard_tol,
                max_iter: tol.picard_max_iter,
            },
            interval: self.interval(),
            grid_step: self.omega_step,
        }
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.tolerances.newton_tol,
            max_iter: self.tolerances.newton_max_iter,
            ..NewtonOptions::default()
        }
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn records_to_field(records: &[Vec<f64>], d: usize, key: &str) -> Result<FourierField, ConfigError> {
    let mut jm = 0;
    let mut nm = 0;
    let mut modes = Vec::new();
    for r in records {
        if r.len() != d + 3 {
            return Err(ConfigError::invalid(key, format!("records need {} numbers", d + 3)));
        }
        let j = r[0] as i32;
        let n: Vec<i32> = r[1..=d].iter().map(|x| *x as i32).collect();
        jm = jm.max(j.abs());
        nm = nm.max(n.iter().map(|x| x.abs()).max().unwrap_or(0));
        modes.push((ModeIndex::new(j, LatticePoint::new(&n)), Complex64::new(r[d + 1], r[d + 2])));
    }
    let mut f = FourierField::zeros(Truncation::new(d, jm, nm));
    for (q, c) in modes {
        f.set(&q, c).map_err(|e| ConfigError::invalid(key, e.to_string()))?;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_valid() {
        let c = SolverConfig::parse("d = 1\nm = 1.0\n").unwrap();
        assert_eq!(c.zeta(), 0.05 + 0.5 + 2.0 + 0.5);
        assert_eq!(c.nonlinearity.key, "quartic");
        assert!(c.problem().is_ok());
    }

    #[test]
    fn eps_above_delta_squared_is_rejected() {
        let e = SolverConfig::parse("d = 1\nm = 1.0\neps = 0.02\ndelta = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("eps ≤ delta²"), "{e}");
        assert!(SolverConfig::parse("d = 1\nm = 1.0\neps = 0.01\ndelta = 0.1\n").is_ok());
    }

    #[test]
    fn bad_beta_and_unknown_keys() {
        let e = SolverConfig::parse("d = 1\nm = 1.0\nbeta = 0.2\n").unwrap_err();
        assert!(e.to_string().contains("beta"));
        let e = SolverConfig::parse("d = 1\nm = 1.0\nbogus = 3\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = SolverConfig::parse("d = 1\nm = \"one\"\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse(_)));
        let e = SolverConfig::parse("d = 1\nm = 1.0\n[nonlinearity]\nkey = \"sine\"\n").unwrap_err();
        assert!(e.to_string().contains("sine"));
    }

    #[test]
    fn forcing_and_hash() {
        let text = "d = 1\nm = 1.0\n[[forcing]]\nj = 1\nn = [1]\nre = 1.0\n";
        let c = SolverConfig::parse(text).unwrap();
        let f = c.forcing_field().unwrap();
        assert_eq!(f.get(&ModeIndex::new(-1, LatticePoint::new(&[-1]))), Complex64::new(1.0, 0.0));
        assert_eq!(c.hash(), SolverConfig::parse(text).unwrap().hash());
        let other = SolverConfig::parse("d = 1\nm = 2.0\n").unwrap();
        assert_ne!(c.hash(), other.hash());

        let rf = SolverConfig::parse("d = 1\nm = 1.0\n[random_forcing]\nq0 = 0.01\n").unwrap();
        let f = rf.forcing_field().unwrap();
        assert!((f.sobolev_norm(2.0) - 0.01).abs() < 1e-15);
    }
}
