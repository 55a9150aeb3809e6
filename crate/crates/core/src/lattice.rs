//! Frequency clusters on a truncated integer lattice.
//!
//! The lattice `{n in Z^d : |n|_inf <= N}` is partitioned into clusters whose
//! points are close both in position and in squared norm, while points of
//! distinct clusters are polynomially separated. Clusters are the connected
//! components of a closeness graph; every separation constant is then
//! certified a posteriori by an exhaustive pair scan.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use petgraph::unionfind::UnionFind;
use thiserror::Error;

use crate::par::*;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Margin added to certified constants so the strict inequalities hold.
const CERT_MARGIN: f64 = 1e-9;

/// A spatial frequency `n in Z^d`, `d <= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint {
    coords: [i32; MAX_DIM],
    dim: u8,
}

impl LatticePoint {
    pub fn new(coords: &[i32]) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&coords.len()),
            "lattice dimension must be 1..=3"
        );
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self {
            coords: c,
            dim: coords.len() as u8,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(&vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim()]
    }

    /// Squared Euclidean norm `|n|^2`.
    pub fn norm2(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    /// `|n|^4`, exact as an integer.
    pub fn norm4(&self) -> i64 {
        let n2 = self.norm2();
        n2 * n2
    }

    /// Japanese bracket `<n> = (1 + |n|^2)^{1/2}`.
    pub fn bracket(&self) -> f64 {
        (1.0 + self.norm2() as f64).sqrt()
    }

    pub fn sup_norm(&self) -> i32 {
        self.coords().iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coords().iter().all(|&c| c == 0)
    }
}

impl Neg for LatticePoint {
    type Output = LatticePoint;

    fn neg(self) -> LatticePoint {
        let mut out = self;
        for c in out.coords.iter_mut() {
            *c = -*c;
        }
        out
    }
}

impl Add for LatticePoint {
    type Output = LatticePoint;

    fn add(self, rhs: LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for (a, b) in out.coords.iter_mut().zip(rhs.coords.iter()) {
            *a += *b;
        }
        out
    }
}

impl Sub for LatticePoint {
    type Output = LatticePoint;

    fn sub(self, rhs: LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for (a, b) in out.coords.iter_mut().zip(rhs.coords.iter()) {
            *a -= *b;
        }
        out
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Combined position/energy distance `|n - n'| + ||n|^2 - |n'|^2|`.
pub fn separation(a: &LatticePoint, b: &LatticePoint) -> f64 {
    (*a - *b).norm() + (a.norm2() - b.norm2()).abs() as f64
}

/// The cube `{n : |n|_inf <= radius}` with a lexicographic index map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    dim: usize,
    radius: i32,
}

impl Lattice {
    pub fn new(dim: usize, radius: i32) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        assert!(radius >= 0);
        Self { dim, radius }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: &LatticePoint) -> bool {
        n.dim() == self.dim && n.sup_norm() <= self.radius
    }

    pub fn index_of(&self, n: &LatticePoint) -> Option<usize> {
        if !self.contains(n) {
            return None;
        }
        let side = self.side();
        Some(
            n.coords()
                .iter()
                .fold(0usize, |acc, &c| acc * side + (c + self.radius) as usize),
        )
    }

    pub fn point(&self, mut index: usize) -> LatticePoint {
        let side = self.side();
        let mut c = [0i32; MAX_DIM];
        for k in (0..self.dim).rev() {
            c[k] = (index % side) as i32 - self.radius;
            index /= side;
        }
        LatticePoint::new(&c[..self.dim])
    }

    /// All points in lexicographic order.
    pub fn points(&self) -> Vec<LatticePoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Closeness predicate: `n ~ n'` iff
/// `|n-n'| + ||n|^2-|n'|^2| <= theta_link + min(|n|,|n'|)^beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkRule {
    pub theta_link: f64,
}

impl Default for LinkRule {
    fn default() -> Self {
        Self { theta_link: 0.5 }
    }
}

impl LinkRule {
    pub fn threshold(&self, beta: f64, a: &LatticePoint, b: &LatticePoint) -> f64 {
        self.theta_link + a.norm().min(b.norm()).powf(beta)
    }

    pub fn links(&self, beta: f64, a: &LatticePoint, b: &LatticePoint) -> bool {
        separation(a, b) <= self.threshold(beta, a, b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionParams {
    pub dim: usize,
    pub radius: i32,
    pub beta: f64,
    pub link: LinkRule,
    /// Construction fails if the certified cardinality constant exceeds this.
    pub theta1_ceiling: f64,
}

impl PartitionParams {
    pub fn new(dim: usize, radius: i32, beta: f64) -> Self {
        Self {
            dim,
            radius,
            beta,
            link: LinkRule::default(),
            theta1_ceiling: 64.0,
        }
    }
}

/// Separation and size constants attached to a partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionConstants {
    pub theta: f64,
    pub rho: f64,
    pub theta0: f64,
    pub theta1: f64,
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("beta = {0} outside (0, 1/10)")]
    InvalidBeta(f64),
    #[error("truncation radius {0} must be >= 1")]
    InvalidRadius(i32),
    #[error("dimension {0} unsupported (expected 1, 2 or 3)")]
    InvalidDimension(usize),
    #[error("cardinality constant {theta1:.4} exceeds ceiling {ceiling}\n{report}")]
    Cardinality {
        theta1: f64,
        ceiling: f64,
        report: Box<CertificationReport>,
    },
    #[error("no positive separation exponent can be certified\n{0}")]
    Separation(Box<CertificationReport>),
    #[error("point {0} lies outside the truncated lattice")]
    OutOfTruncation(LatticePoint),
    #[error("point {0} is not covered by any cluster")]
    NotCovered(LatticePoint),
    #[error("unknown cluster id {0}")]
    UnknownCluster(usize),
}

/// A partition of the truncated lattice into clusters `Omega_alpha`.
#[derive(Clone, Debug)]
pub struct ClusterPartition {
    lattice: Lattice,
    beta: f64,
    clusters: Vec<Vec<LatticePoint>>,
    representatives: Vec<LatticePoint>,
    point_cluster: Vec<Option<usize>>,
    mirror: Vec<Option<usize>>,
    constants: PartitionConstants,
}

impl ClusterPartition {
    /// Assemble a partition from explicit clusters without any checking.
    ///
    /// The representative of each cluster is its point of smallest norm
    /// (lexicographically first among ties).
    pub fn from_parts(
        lattice: Lattice,
        beta: f64,
        clusters: Vec<Vec<LatticePoint>>,
        constants: PartitionConstants,
    ) -> Self {
        let mut point_cluster = vec![None; lattice.len()];
        let mut representatives = Vec::with_capacity(clusters.len());
        for (alpha, members) in clusters.iter().enumerate() {
            for n in members {
                if let Some(i) = lattice.index_of(n) {
                    point_cluster[i] = Some(alpha);
                }
            }
            let rep = members
                .iter()
                .min_by_key(|n| (n.norm2(), **n))
                .copied()
                .unwrap_or_else(|| LatticePoint::zero(lattice.dim()));
            representatives.push(rep);
        }
        let mirror = clusters
            .iter()
            .map(|members| {
                let first = members.first()?;
                let idx = lattice.index_of(&-*first)?;
                point_cluster[idx]
            })
            .collect();
        Self {
            lattice,
            beta,
            clusters,
            representatives,
            point_cluster,
            mirror,
            constants,
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn radius(&self) -> i32 {
        self.lattice.radius()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn constants(&self) -> PartitionConstants {
        self.constants
    }

    pub fn theta(&self) -> f64 {
        self.constants.theta
    }

    pub fn rho(&self) -> f64 {
        self.constants.rho
    }

    pub fn theta0(&self) -> f64 {
        self.constants.theta0
    }

    pub fn theta1(&self) -> f64 {
        self.constants.theta1
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> &[Vec<LatticePoint>] {
        &self.clusters
    }

    pub fn cluster(&self, alpha: usize) -> Result<&[LatticePoint], PartitionError> {
        self.clusters
            .get(alpha)
            .map(|c| c.as_slice())
            .ok_or(PartitionError::UnknownCluster(alpha))
    }

    pub fn representative(&self, alpha: usize) -> LatticePoint {
        self.representatives[alpha]
    }

    /// `<n(alpha)>`.
    pub fn rep_bracket(&self, alpha: usize) -> f64 {
        self.representatives[alpha].bracket()
    }

    /// Dyadic shell `k` with `2^k <= <n(alpha)> < 2^{k+1}`.
    pub fn shell(&self, alpha: usize) -> usize {
        shell_of(self.rep_bracket(alpha))
    }

    /// Id of the cluster `-Omega_alpha`, when it exists.
    pub fn mirror(&self, alpha: usize) -> Option<usize> {
        self.mirror[alpha]
    }

    /// Cluster id by lattice index (fast path for field code).
    pub fn cluster_at(&self, lattice_index: usize) -> Option<usize> {
        self.point_cluster[lattice_index]
    }
}

/// Dyadic shell index of a bracket value `b >= 1`.
pub fn shell_of(bracket: f64) -> usize {
    let mut k = 0usize;
    while bracket >= 2f64.powi(k as i32 + 1) {
        k += 1;
    }
    k
}

/// Unique cluster containing `n`.
pub fn cluster_of(p: &ClusterPartition, n: &LatticePoint) -> Result<usize, PartitionError> {
    let idx = p
        .lattice
        .index_of(n)
        .ok_or(PartitionError::OutOfTruncation(*n))?;
    p.point_cluster[idx].ok_or(PartitionError::NotCovered(*n))
}

/// Build the cluster decomposition by transitive closure of the link rule and
/// certify its constants.
pub fn build_partition(params: &PartitionParams) -> Result<ClusterPartition, PartitionError> {
    if !(params.beta > 0.0 && params.beta < 0.1) {
        return Err(PartitionError::InvalidBeta(params.beta));
    }
    if params.radius < 1 {
        return Err(PartitionError::InvalidRadius(params.radius));
    }
    if !(1..=MAX_DIM).contains(&params.dim) {
        return Err(PartitionError::InvalidDimension(params.dim));
    }
    let lattice = Lattice::new(params.dim, params.radius);
    let points = lattice.points();
    let beta = params.beta;
    let link = params.link;

    let edges: Vec<(usize, usize)> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let a = points[i];
            ((i + 1)..points.len())
                .filter(|&j| link.links(beta, &a, &points[j]))
                .map(|j| (i, j))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut uf = UnionFind::<usize>::new(points.len());
    for (i, j) in edges {
        uf.union(i, j);
    }
    let labels = uf.into_labeling();
    let mut by_root: std::collections::BTreeMap<usize, Vec<LatticePoint>> = Default::default();
    for (i, root) in labels.iter().enumerate() {
        by_root.entry(*root).or_default().push(points[i]);
    }
    let mut clusters: Vec<Vec<LatticePoint>> = by_root.into_values().collect();
    clusters.sort_by_key(|c| {
        let rep = c.iter().min_by_key(|n| (n.norm2(), **n)).copied().unwrap();
        (rep.norm2(), rep)
    });

    let provisional = PartitionConstants {
        theta: 0.0,
        rho: 0.0,
        theta0: 1.0,
        theta1: 1.0,
    };
    let mut partition = ClusterPartition::from_parts(lattice, beta, clusters, provisional);
    let tight = tight_constants(&partition);
    let theta = if tight.theta_sup < 0.0 {
        0.0
    } else {
        tight.theta_sup + CERT_MARGIN
    };
    let rho = (tight.rho_max - CERT_MARGIN).min(0.99 * beta);
    partition.constants = PartitionConstants {
        theta,
        rho,
        theta0: tight.theta0,
        theta1: tight.theta1,
    };

    if !(rho > 0.0) {
        let report = verify_partition(&partition);
        return Err(PartitionError::Separation(Box::new(report)));
    }
    if tight.theta1 > params.theta1_ceiling {
        let report = verify_partition(&partition);
        return Err(PartitionError::Cardinality {
            theta1: tight.theta1,
            ceiling: params.theta1_ceiling,
            report: Box::new(report),
        });
    }
    Ok(partition)
}

/// Tightest constants observed on a finite partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TightConstants {
    /// `sup (sep(n,n') - |n|^beta)` over distinct intra-cluster pairs
    /// (`-inf` when every cluster is a singleton).
    pub theta_sup: f64,
    /// `inf ln(sep) / ln|n|` over inter-cluster pairs with `|n| > 1`.
    pub rho_max: f64,
    pub theta0: f64,
    pub theta1: f64,
}

#[derive(Clone, Copy, Debug)]
struct PairStats {
    theta_sup: f64,
    rho_max: f64,
    intra_worst: f64,
    intra_witness: Option<(LatticePoint, LatticePoint)>,
    inter_worst: f64,
    inter_witness: Option<(LatticePoint, LatticePoint)>,
    pairs: usize,
}

impl PairStats {
    fn empty() -> Self {
        Self {
            theta_sup: f64::NEG_INFINITY,
            rho_max: f64::INFINITY,
            intra_worst: f64::NEG_INFINITY,
            intra_witness: None,
            inter_worst: f64::NEG_INFINITY,
            inter_witness: None,
            pairs: 0,
        }
    }

    fn merge(mut self, other: PairStats) -> Self {
        self.theta_sup = self.theta_sup.max(other.theta_sup);
        self.rho_max = self.rho_max.min(other.rho_max);
        if other.intra_worst > self.intra_worst {
            self.intra_worst = other.intra_worst;
            self.intra_witness = other.intra_witness;
        }
        if other.inter_worst > self.inter_worst {
            self.inter_worst = other.inter_worst;
            self.inter_witness = other.inter_witness;
        }
        self.pairs += other.pairs;
        self
    }
}

/// Exhaustive ordered-pair scan. `intra_worst` is the largest value of
/// `sep - theta - |n|^beta` and `inter_worst` of `|n|^rho - sep`; an
/// inequality holds iff its worst value is negative.
fn scan_pairs(p: &ClusterPartition) -> PairStats {
    let members: Vec<(LatticePoint, usize)> = p
        .clusters
        .iter()
        .enumerate()
        .flat_map(|(alpha, c)| c.iter().map(move |n| (*n, alpha)))
        .collect();
    let beta = p.beta;
    let PartitionConstants { theta, rho, .. } = p.constants;

    members
        .par_iter()
        .map(|&(a, alpha)| {
            let mut st = PairStats::empty();
            let a_norm = a.norm();
            let a_beta = a_norm.powf(beta);
            let a_rho = a_norm.powf(rho);
            for &(b, alpha_b) in &members {
                if a == b && alpha == alpha_b {
                    continue;
                }
                st.pairs += 1;
                let sep = separation(&a, &b);
                if alpha == alpha_b {
                    st.theta_sup = st.theta_sup.max(sep - a_beta);
                    let excess = sep - theta - a_beta;
                    if excess > st.intra_worst {
                        st.intra_worst = excess;
                        st.intra_witness = Some((a, b));
                    }
                } else {
                    if a_norm > 1.0 {
                        st.rho_max = st.rho_max.min(sep.ln() / a_norm.ln());
                    }
                    let deficit = a_rho - sep;
                    if deficit > st.inter_worst {
                        st.inter_worst = deficit;
                        st.inter_witness = Some((a, b));
                    }
                }
            }
            st
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(PairStats::empty(), PairStats::merge)
}

fn size_constants(p: &ClusterPartition) -> (f64, f64) {
    let beta_d = p.beta * p.dim() as f64;
    let mut theta0 = 1.0f64;
    let mut theta1 = 1.0f64;
    for (alpha, members) in p.clusters.iter().enumerate() {
        let rb = p.rep_bracket(alpha);
        for n in members {
            let b = n.bracket();
            theta0 = theta0.max(b / rb).max(rb / b);
        }
        theta1 = theta1.max(members.len() as f64 / rb.powf(beta_d));
    }
    (theta0, theta1)
}

pub fn tight_constants(p: &ClusterPartition) -> TightConstants {
    let st = scan_pairs(p);
    let (theta0, theta1) = size_constants(p);
    TightConstants {
        theta_sup: st.theta_sup,
        rho_max: st.rho_max,
        theta0,
        theta1,
    }
}

/// Outcome of one certified inequality family.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub witness: Option<(LatticePoint, Option<LatticePoint>)>,
    pub detail: String,
}

impl Check {
    fn pass(name: &'static str) -> Self {
        Self {
            name,
            passed: true,
            witness: None,
            detail: String::new(),
        }
    }

    fn fail(name: &'static str, a: LatticePoint, b: Option<LatticePoint>, detail: String) -> Self {
        Self {
            name,
            passed: false,
            witness: Some((a, b)),
            detail,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CertificationReport {
    pub covering: Check,
    pub disjoint: Check,
    pub intra: Check,
    pub inter: Check,
    pub comparability: Check,
    pub cardinality: Check,
    pub mirror: Check,
    pub tight: TightConstants,
    pub pairs_checked: usize,
}

impl CertificationReport {
    pub fn checks(&self) -> [&Check; 7] {
        [
            &self.covering,
            &self.disjoint,
            &self.intra,
            &self.inter,
            &self.comparability,
            &self.cardinality,
            &self.mirror,
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }
}

impl fmt::Display for CertificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.checks() {
            write!(f, "{:<14} {}", c.name, if c.passed { "pass" } else { "FAIL" })?;
            if let Some((a, b)) = &c.witness {
                match b {
                    Some(b) => write!(f, "  witness {a} {b}")?,
                    None => write!(f, "  witness {a}")?,
                }
            }
            if !c.detail.is_empty() {
                write!(f, "  {}", c.detail)?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "pairs={} theta_sup={:.6} rho_max={:.6} theta0={:.6} theta1={:.6}",
            self.pairs_checked,
            self.tight.theta_sup,
            self.tight.rho_max,
            self.tight.theta0,
            self.tight.theta1
        )
    }
}

/// Exhaustively check every partition invariant against the constants stored
/// in `p`, and report the tightest constants that would certify.
pub fn verify_partition(p: &ClusterPartition) -> CertificationReport {
    let lattice = p.lattice;
    let mut seen = vec![0usize; lattice.len()];
    let mut outside = None;
    for members in &p.clusters {
        for n in members {
            match lattice.index_of(n) {
                Some(i) => seen[i] += 1,
                None => outside = Some(*n),
            }
        }
    }

    let covering = match seen.iter().position(|&c| c == 0) {
        Some(i) => Check::fail(
            "covering",
            lattice.point(i),
            None,
            "point missing from every cluster".into(),
        ),
        None => match outside {
            Some(n) => Check::fail("covering", n, None, "point outside truncation".into()),
            None => Check::pass("covering"),
        },
    };

    let disjoint = match seen.iter().position(|&c| c > 1) {
        Some(i) => Check::fail(
            "disjoint",
            lattice.point(i),
            None,
            format!("point appears {} times", seen[i]),
        ),
        None => match p.clusters.iter().position(|c| c.is_empty()) {
            Some(alpha) => Check::fail(
                "disjoint",
                LatticePoint::zero(p.dim()),
                None,
                format!("cluster {alpha} is empty"),
            ),
            None => Check::pass("disjoint"),
        },
    };

    let st = scan_pairs(p);
    let intra = if let (true, Some((a, b))) = (st.intra_worst >= 0.0, st.intra_witness) {
        Check::fail(
            "intra",
            a,
            Some(b),
            format!(
                "sep {:.6} >= theta + |n|^beta = {:.6}",
                separation(&a, &b),
                p.theta() + a.norm().powf(p.beta)
            ),
        )
    } else {
        Check::pass("intra")
    };
    let inter = if let (true, Some((a, b))) = (st.inter_worst >= 0.0, st.inter_witness) {
        Check::fail(
            "inter",
            a,
            Some(b),
            format!(
                "sep {:.6} <= |n|^rho = {:.6}",
                separation(&a, &b),
                a.norm().powf(p.rho())
            ),
        )
    } else {
        Check::pass("inter")
    };

    let beta_d = p.beta * p.dim() as f64;
    let mut comparability = Check::pass("comparability");
    let mut cardinality = Check::pass("cardinality");
    for (alpha, members) in p.clusters.iter().enumerate() {
        let rb = p.rep_bracket(alpha);
        if let Some(n) = members.iter().find(|n| {
            let b = n.bracket();
            b > p.theta0() * rb * (1.0 + 1e-12) || b * p.theta0() * (1.0 + 1e-12) < rb
        }) {
            if comparability.passed {
                comparability = Check::fail(
                    "comparability",
                    *n,
                    Some(p.representative(alpha)),
                    format!("theta0 = {:.6}", p.theta0()),
                );
            }
        }
        if members.len() as f64 > p.theta1() * rb.powf(beta_d) * (1.0 + 1e-12) && cardinality.passed
        {
            cardinality = Check::fail(
                "cardinality",
                p.representative(alpha),
                None,
                format!("|Omega| = {} > theta1 <n>^(beta d)", members.len()),
            );
        }
    }

    let mut mirror = Check::pass("mirror");
    for members in &p.clusters {
        let Some(first) = members.first() else { continue };
        let neg = -*first;
        let Some(beta_id) = lattice.index_of(&neg).and_then(|i| p.point_cluster[i]) else {
            mirror = Check::fail("mirror", neg, None, "negation not covered".into());
            break;
        };
        let mut a: Vec<LatticePoint> = members.iter().map(|n| -*n).collect();
        let mut b = p.clusters[beta_id].clone();
        a.sort();
        b.sort();
        if a != b {
            mirror = Check::fail(
                "mirror",
                *first,
                Some(neg),
                "negated cluster is not a cluster".into(),
            );
            break;
        }
    }

    let (theta0, theta1) = size_constants(p);
    CertificationReport {
        covering,
        disjoint,
        intra,
        inter,
        comparability,
        cardinality,
        mirror,
        tight: TightConstants {
            theta_sup: st.theta_sup,
            rho_max: st.rho_max,
            theta0,
            theta1,
        },
        pairs_checked: st.pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1(n: i32) -> LatticePoint {
        LatticePoint::new(&[n])
    }

    fn p2(a: i32, b: i32) -> LatticePoint {
        LatticePoint::new(&[a, b])
    }

    #[test]
    fn lattice_index_roundtrip() {
        let l = Lattice::new(2, 3);
        for i in 0..l.len() {
            assert_eq!(l.index_of(&l.point(i)), Some(i));
        }
        assert_eq!(l.index_of(&p2(4, 0)), None);
        assert_eq!(l.points()[0], p2(-3, -3));
    }

    #[test]
    fn rejects_bad_beta() {
        for beta in [0.0, 0.1, 0.2, -0.01] {
            let err = build_partition(&PartitionParams::new(1, 4, beta)).unwrap_err();
            assert!(matches!(err, PartitionError::InvalidBeta(_)));
        }
    }

    #[test]
    fn one_dimensional_clusters_are_singletons() {
        let p = build_partition(&PartitionParams::new(1, 8, 0.05)).unwrap();
        assert_eq!(p.len(), 17);
        assert!(p.clusters().iter().all(|c| c.len() == 1));
        let report = verify_partition(&p);
        assert!(report.passed(), "{report}");
        // Any rho below 1 separates: the tight exponent exceeds one.
        assert!(report.tight.rho_max > 1.0);
        assert!(p.rho() >= 0.9 * p.beta());
        assert_eq!(p.theta(), 0.0);
        assert_eq!(p.theta0(), 1.0);
    }

    #[test]
    fn nine_point_lattice_is_partitioned() {
        for beta in [0.01, 0.05, 0.09] {
            let p = build_partition(&PartitionParams::new(2, 1, beta)).unwrap();
            let total: usize = p.clusters().iter().map(|c| c.len()).sum();
            assert_eq!(total, 9);
            let r = verify_partition(&p);
            assert!(r.covering.passed && r.disjoint.passed);
        }
    }

    #[test]
    fn merged_partition_fails_intra() {
        let p = build_partition(&PartitionParams::new(2, 5, 0.05)).unwrap();
        let a = cluster_of(&p, &p2(1, 0)).unwrap();
        let b = cluster_of(&p, &p2(5, 0)).unwrap();
        assert_ne!(a, b);
        let mut clusters = p.clusters().to_vec();
        let moved = std::mem::take(&mut clusters[b]);
        clusters[a].extend(moved);
        clusters.retain(|c| !c.is_empty());
        let merged = ClusterPartition::from_parts(p.lattice(), p.beta(), clusters, p.constants());
        let report = verify_partition(&merged);
        assert!(!report.intra.passed);
        let (w1, w2) = report.intra.witness.unwrap();
        let w2 = w2.unwrap();
        assert!(separation(&w1, &w2) >= merged.theta() + w1.norm().powf(merged.beta()));
    }

    #[test]
    fn removed_point_fails_covering() {
        let p = build_partition(&PartitionParams::new(2, 3, 0.05)).unwrap();
        let mut clusters = p.clusters().to_vec();
        let last = clusters.len() - 1;
        clusters[last].pop();
        clusters.retain(|c| !c.is_empty());
        let broken = ClusterPartition::from_parts(p.lattice(), p.beta(), clusters, p.constants());
        let report = verify_partition(&broken);
        assert!(!report.covering.passed);
        assert!(!report.passed());
    }

    #[test]
    fn cluster_of_singletons_and_mirrors() {
        let p = build_partition(&PartitionParams::new(1, 8, 0.05)).unwrap();
        let a = cluster_of(&p, &p1(3)).unwrap();
        assert_eq!(p.cluster(a).unwrap(), &[p1(3)]);
        let b = cluster_of(&p, &p1(-3)).unwrap();
        assert_eq!(p.mirror(a), Some(b));
        assert!(matches!(
            cluster_of(&p, &p1(9)),
            Err(PartitionError::OutOfTruncation(_))
        ));
    }

    #[test]
    fn shells() {
        assert_eq!(shell_of(1.0), 0);
        assert_eq!(shell_of(1.999), 0);
        assert_eq!(shell_of(2.0), 1);
        assert_eq!(shell_of(17f64.sqrt()), 2);
    }

    #[test]
    fn cardinality_ceiling_is_enforced() {
        let mut params = PartitionParams::new(2, 4, 0.05);
        params.link.theta_link = 3.0;
        params.theta1_ceiling = 2.0;
        let err = build_partition(&params).unwrap_err();
        assert!(matches!(err, PartitionError::Cardinality { .. }));
    }
}
