//! Truncated space-time Fourier coefficients of real functions on `T x T^d`.
//!
//! A field stores `u^(j, n)` for `|j| <= J`, `|n|_inf <= N` in a dense array
//! ordered lexicographically by `(j, n_1, ..., n_d)`. With this ordering the
//! mirror mode `(-j, -n)` of index `i` sits at `len - 1 - i`, and reality of
//! the represented function is the Hermitian symmetry
//! `u^(-j,-n) = conj(u^(j,n))`.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{ClusterPartition, Lattice, LatticePoint};

/// Tolerance for rejecting writes that break Hermitian symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("mode {mode} breaks Hermitian symmetry by {defect:.3e}")]
    Asymmetric { mode: ModeIndex, defect: f64 },
    #[error("truncation mismatch: {0:?} vs {1:?}")]
    TruncationMismatch(Truncation, Truncation),
    #[error("mode {0} lies outside the truncation")]
    OutOfTruncation(ModeIndex),
    #[error("field has support at {0} outside the resonant band")]
    LeakOutsideBand(ModeIndex),
    #[error("unknown cluster id {0}")]
    UnknownCluster(usize),
    #[error("partition radius {radius} does not match truncation N = {n_max}")]
    PartitionMismatch { radius: i32, n_max: i32 },
    #[error("dump parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One space-time mode `(j, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub j: i32,
    pub n: LatticePoint,
}

impl ModeIndex {
    pub fn new(j: i32, n: LatticePoint) -> Self {
        Self { j, n }
    }

    pub fn mirror(&self) -> Self {
        Self { j: -self.j, n: -self.n }
    }

    /// Sobolev weight `(1 + j^2 + |n|^4)`.
    pub fn weight(&self) -> f64 {
        1.0 + (self.j as f64).powi(2) + self.n.norm4() as f64
    }
}

impl std::fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(j={}, n={})", self.j, self.n)
    }
}

/// Rectangular truncation `|j| <= j_max`, `|n|_inf <= n_max` in dimension `dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Truncation {
    pub dim: usize,
    pub j_max: i32,
    pub n_max: i32,
}

impl Truncation {
    pub fn new(dim: usize, j_max: i32, n_max: i32) -> Self {
        assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
        assert!(j_max >= 0 && n_max >= 0);
        Self { dim, j_max, n_max }
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.dim, self.n_max)
    }

    fn spatial_len(&self) -> usize {
        self.lattice().len()
    }

    pub fn len(&self) -> usize {
        (2 * self.j_max + 1) as usize * self.spatial_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, mode: &ModeIndex) -> bool {
        mode.j.abs() <= self.j_max && self.lattice().contains(&mode.n)
    }

    pub fn index_of(&self, mode: &ModeIndex) -> Option<usize> {
        if mode.j.abs() > self.j_max {
            return None;
        }
        let s = self.lattice().index_of(&mode.n)?;
        Some((mode.j + self.j_max) as usize * self.spatial_len() + s)
    }

    pub fn mode(&self, index: usize) -> ModeIndex {
        let sl = self.spatial_len();
        ModeIndex {
            j: (index / sl) as i32 - self.j_max,
            n: self.lattice().point(index % sl),
        }
    }

    /// Index of `(-j, -n)`.
    pub fn mirror_index(&self, index: usize) -> usize {
        self.len() - 1 - index
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }

    /// Lattice index of the spatial part of mode `index`.
    pub fn spatial_index(&self, index: usize) -> usize {
        index % self.spatial_len()
    }

    /// Whether `other` contains every mode of `self`.
    pub fn fits_in(&self, other: &Truncation) -> bool {
        self.dim == other.dim && self.j_max <= other.j_max && self.n_max <= other.n_max
    }
}

/// Coefficient table of a real function on `T x T^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    trunc: Truncation,
    coeffs: Vec<Complex64>,
}

impl FourierField {
    pub fn zeros(trunc: Truncation) -> Self {
        Self {
            trunc,
            coeffs: vec![Complex64::new(0.0, 0.0); trunc.len()],
        }
    }

    /// Wrap raw coefficients, rejecting tables that are not Hermitian
    /// symmetric to [`SYMMETRY_TOL`] and symmetrizing the rest exactly.
    pub fn from_coeffs(trunc: Truncation, coeffs: Vec<Complex64>) -> Result<Self, FieldError> {
        if coeffs.len() != trunc.len() {
            return Err(FieldError::Parse {
                line: 0,
                msg: format!("expected {} coefficients, got {}", trunc.len(), coeffs.len()),
            });
        }
        let mut f = Self { trunc, coeffs };
        let (i, defect) = f.symmetry_defect();
        if defect > SYMMETRY_TOL {
            return Err(FieldError::Asymmetric {
                mode: trunc.mode(i),
                defect,
            });
        }
        f.symmetrize();
        Ok(f)
    }

    /// Wrap coefficients that are symmetric up to rounding (e.g. outputs of
    /// linear algebra on real operators), symmetrizing unconditionally.
    pub fn from_coeffs_lossy(trunc: Truncation, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), trunc.len());
        let mut f = Self { trunc, coeffs };
        f.symmetrize();
        f
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, mode: &ModeIndex) -> Complex64 {
        self.trunc
            .index_of(mode)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    pub fn at(&self, index: usize) -> Complex64 {
        self.coeffs[index]
    }

    /// Set `u^(mode)` and its mirror to keep the field real.
    pub fn set(&mut self, mode: &ModeIndex, value: Complex64) -> Result<(), FieldError> {
        let i = self
            .trunc
            .index_of(mode)
            .ok_or(FieldError::OutOfTruncation(*mode))?;
        let m = self.trunc.mirror_index(i);
        if i == m {
            if value.im.abs() > SYMMETRY_TOL {
                return Err(FieldError::Asymmetric {
                    mode: *mode,
                    defect: value.im.abs(),
                });
            }
            self.coeffs[i] = Complex64::new(value.re, 0.0);
        } else {
            self.coeffs[i] = value;
            self.coeffs[m] = value.conj();
        }
        Ok(())
    }

    /// Largest `|u^(q) - conj(u^(-q))|` and where it occurs.
    pub fn symmetry_defect(&self) -> (usize, f64) {
        let mut worst = (0, 0.0);
        for i in 0..self.coeffs.len() {
            let m = self.trunc.mirror_index(i);
            let d = (self.coeffs[i] - self.coeffs[m].conj()).norm();
            if d > worst.1 {
                worst = (i, d);
            }
        }
        worst
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.symmetry_defect().1 <= tol
    }

    pub fn symmetrize(&mut self) {
        let len = self.coeffs.len();
        for i in 0..len.div_ceil(2) {
            let m = len - 1 - i;
            let avg = (self.coeffs[i] + self.coeffs[m].conj()) * 0.5;
            self.coeffs[i] = avg;
            self.coeffs[m] = avg.conj();
        }
    }

    fn check_same(&self, other: &FourierField) -> Result<(), FieldError> {
        if self.trunc != other.trunc {
            return Err(FieldError::TruncationMismatch(self.trunc, other.trunc));
        }
        Ok(())
    }

    pub fn add(&self, other: &FourierField) -> Result<FourierField, FieldError> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &FourierField) -> Result<FourierField, FieldError> {
        self.check_same(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    fn zip_with(&self, other: &FourierField, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        Self {
            trunc: self.trunc,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> FourierField {
        Self {
            trunc: self.trunc,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &FourierField) -> Result<(), FieldError> {
        self.check_same(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
        Ok(())
    }

    /// Keep coefficients where `keep(index)` holds.
    pub fn mask(&self, keep: impl Fn(usize) -> bool) -> FourierField {
        Self {
            trunc: self.trunc,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| if keep(i) { *c } else { Complex64::default() })
                .collect(),
        }
    }

    /// Apply a real diagonal multiplier `mult(mode)`.
    pub fn map_diagonal(&self, mult: impl Fn(&ModeIndex) -> f64) -> FourierField {
        Self {
            trunc: self.trunc,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * mult(&self.trunc.mode(i)))
                .collect(),
        }
    }

    /// Real inner product `Re sum u^(q) conj(v^(q))`, the `L^2` pairing of
    /// the represented functions (normalised by the torus volume).
    pub fn inner(&self, other: &FourierField) -> f64 {
        debug_assert_eq!(self.trunc, other.trunc);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    pub fn sobolev_norm(&self, sigma: f64) -> f64 {
        sobolev_norm(self, sigma)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Copy into a larger (or equal) truncation, or drop modes outside a
    /// smaller one.
    pub fn retruncate(&self, trunc: Truncation) -> FourierField {
        let mut out = FourierField::zeros(trunc);
        for (i, c) in self.coeffs.iter().enumerate() {
            if let Some(k) = trunc.index_of(&self.trunc.mode(i)) {
                out.coeffs[k] = *c;
            }
        }
        out
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }
}

/// `(sum (1 + j^2 + |n|^4)^sigma |u^(j,n)|^2)^{1/2}`.
pub fn sobolev_norm(u: &FourierField, sigma: f64) -> f64 {
    let t = u.truncation();
    u.coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| t.mode(i).weight().powf(sigma) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Resonant/non-resonant classification of every truncated mode.
#[derive(Clone, Debug)]
pub struct BandSplit {
    pub k0: f64,
    pub theta0: f64,
    trunc: Truncation,
    in_h: Vec<bool>,
    cluster: Vec<usize>,
}

impl BandSplit {
    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn is_h(&self, index: usize) -> bool {
        self.in_h[index]
    }

    /// Cluster of the spatial part of mode `index`.
    pub fn cluster_of_mode(&self, index: usize) -> usize {
        self.cluster[index]
    }

    pub fn h_modes(&self) -> Vec<usize> {
        (0..self.in_h.len()).filter(|&i| self.in_h[i]).collect()
    }

    pub fn f_modes(&self) -> Vec<usize> {
        (0..self.in_h.len()).filter(|&i| !self.in_h[i]).collect()
    }

    pub fn project_h(&self, u: &FourierField) -> FourierField {
        u.mask(|i| self.in_h[i])
    }

    pub fn project_f(&self, u: &FourierField) -> FourierField {
        u.mask(|i| !self.in_h[i])
    }
}

/// Band constant `K0 = max{2 sqrt(m), 8 / sqrt(m)} Theta0^2`.
pub fn band_constant(m: f64, theta0: f64) -> f64 {
    (2.0 * m.sqrt()).max(8.0 / m.sqrt()) * theta0 * theta0
}

/// `true` iff `K0^{-1} <n(alpha)>^2 <= |j| <= K0 <n(alpha)>^2`.
pub fn in_band(k0: f64, j: i32, rep_bracket: f64) -> bool {
    let b2 = rep_bracket * rep_bracket;
    let aj = j.abs() as f64;
    b2 / k0 <= aj && aj <= k0 * b2
}

pub fn band_split(p: &ClusterPartition, m: f64, trunc: Truncation) -> Result<BandSplit, FieldError> {
    assert!(m > 0.0, "mass must be positive");
    if p.radius() != trunc.n_max || p.dim() != trunc.dim {
        return Err(FieldError::PartitionMismatch {
            radius: p.radius(),
            n_max: trunc.n_max,
        });
    }
    let theta0 = p.theta0();
    let k0 = band_constant(m, theta0);
    let mut in_h = Vec::with_capacity(trunc.len());
    let mut cluster = Vec::with_capacity(trunc.len());
    for i in 0..trunc.len() {
        let mode = trunc.mode(i);
        let alpha = p
            .cluster_at(trunc.spatial_index(i))
            .expect("partition covers the truncation");
        cluster.push(alpha);
        in_h.push(in_band(k0, mode.j, p.rep_bracket(alpha)));
    }
    Ok(BandSplit {
        k0,
        theta0,
        trunc,
        in_h,
        cluster,
    })
}

/// `Pi~_alpha u`: keep modes whose spatial frequency lies in `Omega_alpha`.
pub fn project_cluster(
    u: &FourierField,
    alpha: usize,
    p: &ClusterPartition,
) -> Result<FourierField, FieldError> {
    if alpha >= p.len() {
        return Err(FieldError::UnknownCluster(alpha));
    }
    let t = u.truncation();
    if p.radius() != t.n_max || p.dim() != t.dim {
        return Err(FieldError::PartitionMismatch {
            radius: p.radius(),
            n_max: t.n_max,
        });
    }
    Ok(u.mask(|i| p.cluster_at(t.spatial_index(i)) == Some(alpha)))
}

/// `S~_k`: zero every cluster with `<n(alpha)> >= 2^{k+1}`.
pub fn truncate_sk(u: &FourierField, k: usize, p: &ClusterPartition) -> FourierField {
    let t = u.truncation();
    let bound = 2f64.powi(k as i32 + 1);
    u.mask(|i| {
        p.cluster_at(t.spatial_index(i))
            .map(|a| p.rep_bracket(a) < bound)
            .unwrap_or(false)
    })
}

/// Dyadic spatial shells: returns `(Delta_p u, S_p u)` where `Delta_0` keeps
/// `n = 0`, `Delta_p` keeps `2^{p-1} <= |n| < 2^p`, and `S_p = sum_{p'<p} Delta_p'`.
pub fn dyadic_decompose(u: &FourierField, p: u32) -> (FourierField, FourierField) {
    let t = u.truncation();
    let delta = u.mask(|i| dyadic_shell(&t.mode(i).n) == p);
    let partial = u.mask(|i| dyadic_shell(&t.mode(i).n) < p);
    (delta, partial)
}

/// Index `p` of the dyadic shell containing `n`.
pub fn dyadic_shell(n: &LatticePoint) -> u32 {
    let r2 = n.norm2();
    if r2 == 0 {
        return 0;
    }
    // 2^{p-1} <= |n| < 2^p  <=>  4^{p-1} <= |n|^2 < 4^p
    let mut p = 1u32;
    while r2 >= 4i64.pow(p) {
        p += 1;
    }
    p
}

/// The three band norms compared to the `H~^sigma` norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEquivalence {
    pub tilde: f64,
    pub per_mode: f64,
    pub per_frequency: f64,
    pub per_cluster: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Bracket `[c, C]` guaranteed by the band condition, `K0` and `Theta0`.
    pub bracket: (f64, f64),
}

pub fn equivalent_norm_check(
    u: &FourierField,
    sigma: f64,
    p: &ClusterPartition,
    bs: &BandSplit,
) -> Result<NormEquivalence, FieldError> {
    let t = u.truncation();
    if t != bs.truncation() {
        return Err(FieldError::TruncationMismatch(t, bs.truncation()));
    }
    for (i, c) in u.coeffs().iter().enumerate() {
        if !bs.is_h(i) && c.norm() > 0.0 {
            return Err(FieldError::LeakOutsideBand(t.mode(i)));
        }
    }
    let tilde = sobolev_norm(u, sigma);
    let mut per_mode = 0.0;
    let mut per_n = std::collections::BTreeMap::<usize, f64>::new();
    let mut per_alpha = vec![0.0; p.len()];
    for (i, c) in u.coeffs().iter().enumerate() {
        let mode = t.mode(i);
        let w = mode.n.bracket().powf(4.0 * sigma);
        per_mode += w * c.norm_sqr();
        *per_n.entry(t.spatial_index(i)).or_default() += c.norm_sqr();
        per_alpha[bs.cluster_of_mode(i)] += c.norm_sqr();
    }
    let per_frequency: f64 = per_n
        .iter()
        .map(|(s, e)| t.lattice().point(*s).bracket().powf(4.0 * sigma) * e)
        .sum();
    let per_cluster: f64 = per_alpha
        .iter()
        .enumerate()
        .map(|(a, e)| p.rep_bracket(a).powf(4.0 * sigma) * e)
        .sum();
    let (per_mode, per_frequency, per_cluster) =
        (per_mode.sqrt(), per_frequency.sqrt(), per_cluster.sqrt());

    let ratios = if tilde == 0.0 {
        [1.0; 3]
    } else {
        [per_mode / tilde, per_frequency / tilde, per_cluster / tilde]
    };
    // Weight comparison on the band: <n>^4 / 2 <= 1 + j^2 + |n|^4
    // <= (1 + K0^2 Theta0^4) <n>^4, and <n(alpha)> within Theta0 of <n>.
    let th = bs.theta0;
    let a = (1.0 + bs.k0 * bs.k0 * th.powi(4)).powf(-sigma.abs() / 2.0);
    let b = 2f64.powf(sigma.abs() / 2.0);
    let bracket = (a * th.powf(-2.0 * sigma.abs()), b * th.powf(2.0 * sigma.abs()));
    Ok(NormEquivalence {
        tilde,
        per_mode,
        per_frequency,
        per_cluster,
        ratio_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        bracket,
    })
}

/// Write `j, n_1..n_d, re, im` records in lexicographic mode order.
pub fn write_dump<W: Write>(u: &FourierField, out: &mut W, meta: &[String]) -> io::Result<()> {
    let t = u.truncation();
    for line in meta {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "# truncation dim={} j_max={} n_max={}", t.dim, t.j_max, t.n_max)?;
    let mut header = String::from("j");
    for k in 1..=t.dim {
        write!(header, ",n{k}").unwrap();
    }
    header.push_str(",re,im");
    writeln!(out, "{header}")?;
    for (i, c) in u.coeffs().iter().enumerate() {
        let mode = t.mode(i);
        let mut row = format!("{}", mode.j);
        for x in mode.n.coords() {
            write!(row, ",{x}").unwrap();
        }
        writeln!(out, "{row},{:e},{:e}", c.re, c.im)?;
    }
    Ok(())
}

/// Parse a dump produced by [`write_dump`]. Round-trips bit-exactly.
pub fn read_dump<R: BufRead>(input: R) -> Result<FourierField, FieldError> {
    let mut trunc: Option<Truncation> = None;
    let mut coeffs: Vec<Complex64> = Vec::new();
    let perr = |line: usize, msg: &str| FieldError::Parse {
        line,
        msg: msg.to_string(),
    };
    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(spec) = rest.trim().strip_prefix("truncation") {
                let mut dim = None;
                let mut j_max = None;
                let mut n_max = None;
                for kv in spec.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(|| perr(ln + 1, "bad key=value"))?;
                    let v: i64 = v.parse().map_err(|_| perr(ln + 1, "bad integer"))?;
                    match k {
                        "dim" => dim = Some(v as usize),
                        "j_max" => j_max = Some(v as i32),
                        "n_max" => n_max = Some(v as i32),
                        _ => return Err(perr(ln + 1, "unknown truncation key")),
                    }
                }
                let t = Truncation::new(
                    dim.ok_or_else(|| perr(ln + 1, "missing dim"))?,
                    j_max.ok_or_else(|| perr(ln + 1, "missing j_max"))?,
                    n_max.ok_or_else(|| perr(ln + 1, "missing n_max"))?,
                );
                coeffs = vec![Complex64::default(); t.len()];
                trunc = Some(t);
            }
            continue;
        }
        if line.is_empty() || line.starts_with('j') {
            continue;
        }
        let t = trunc.ok_or_else(|| perr(ln + 1, "record before truncation line"))?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != t.dim + 3 {
            return Err(perr(ln + 1, "wrong number of columns"));
        }
        let j: i32 = fields[0].parse().map_err(|_| perr(ln + 1, "bad j"))?;
        let n: Vec<i32> = fields[1..=t.dim]
            .iter()
            .map(|s| s.parse::<i32>())
            .collect::<Result<_, _>>()
            .map_err(|_| perr(ln + 1, "bad n"))?;
        let re: f64 = fields[t.dim + 1].parse().map_err(|_| perr(ln + 1, "bad re"))?;
        let im: f64 = fields[t.dim + 2].parse().map_err(|_| perr(ln + 1, "bad im"))?;
        let mode = ModeIndex::new(j, LatticePoint::new(&n));
        let i = t
            .index_of(&mode)
            .ok_or_else(|| perr(ln + 1, "mode outside truncation"))?;
        coeffs[i] = Complex64::new(re, im);
    }
    let t = trunc.ok_or_else(|| perr(0, "missing truncation line"))?;
    let f = FourierField { trunc: t, coeffs };
    let (i, defect) = f.symmetry_defect();
    if defect > SYMMETRY_TOL {
        return Err(FieldError::Asymmetric {
            mode: t.mode(i),
            defect,
        });
    }
    Ok(f)
}
