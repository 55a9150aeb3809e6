//! Subcommand orchestration. Every command returns its named output files in
//! memory.

use std::fmt::Write as _;

use thiserror::Error;

use crate::beam::multiplier;
use crate::config::{ConfigError, SolverConfig};
use crate::field::{band_split, write_dump, FieldError};
use crate::iteration::{IterError, Solver};
use crate::lattice::{verify_partition, ClusterPartition, PartitionError};
use crate::layout::ModeLayout;
use crate::oracle::{newton_solve, OracleError};
use crate::par::*;
use crate::small_divisors::{measure_scaling, screen, BlockFamily, DivisorError};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Divisor(#[from] DivisorError),
    #[error(transparent)]
    Iteration(#[from] IterError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl DriverError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Partition(_) => "partition",
            Self::Field(_) => "field",
            Self::Divisor(_) => "small_divisors",
            Self::Iteration(IterError::Excluded { .. }) => "excluded_omega",
            Self::Iteration(_) => "iteration",
            Self::Oracle(_) => "oracle",
            Self::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Partition(_) | Self::Field(_) => 4,
            Self::Iteration(IterError::Excluded { .. }) => 5,
            Self::Divisor(_) | Self::Iteration(_) | Self::Oracle(_) => 6,
        }
    }

    /// Single-line `key=value` rendering for stderr.
    pub fn machine_line(&self) -> String {
        let msg = self.to_string().replace('"', "'").replace('\n', " ");
        let mut line = format!("error kind={} code={}", self.kind(), self.exit_code());
        if let Self::Config(ConfigError::Invalid { key, .. }) = self {
            let _ = write!(line, " key={key}");
        }
        let _ = write!(line, " message=\"{msg}\"");
        line
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Partition,
    Spectrum,
    Sweep,
    Measure,
    Solve,
    OracleCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Partition => "partition",
            Self::Spectrum => "spectrum",
            Self::Sweep => "sweep",
            Self::Measure => "measure",
            Self::Solve => "solve",
            Self::OracleCompare => "oracle-compare",
        }
    }
}

/// Comma-separated table with `#` metadata lines.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            ..Self::default()
        }
    }

    fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn render(&self, hash: &str) -> String {
        let mut s = format!("# config-hash {hash}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s.push_str(&self.header.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
}

impl Output {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, content) in &self.files {
            std::fs::write(dir.join(name), content)?;
        }
        Ok(())
    }
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

fn coords(n: &crate::lattice::LatticePoint) -> String {
    n.coords().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn run(cmd: Command, cfg: &SolverConfig) -> Result<Output, DriverError> {
    let hash = cfg.hash();
    let tables = match cmd {
        Command::Partition => partition(cfg)?,
        Command::Spectrum => vec![("spectrum.csv".into(), spectrum(cfg))],
        Command::Sweep => vec![("sweep.csv".into(), sweep(cfg)?)],
        Command::Measure => vec![("measure.csv".into(), measure(cfg)?)],
        Command::Solve => return solve(cfg, &hash),
        Command::OracleCompare => vec![("oracle_compare.csv".into(), oracle_compare(cfg)?)],
    };
    Ok(Output {
        files: tables.into_iter().map(|(n, t)| (n, t.render(&hash))).collect(),
    })
}

fn partition(cfg: &SolverConfig) -> Result<Vec<(String, Table)>, DriverError> {
    let p = cfg.partition()?;
    let report = verify_partition(&p);
    let mut clusters = Table::new(&["alpha_id", "representative", "size", "min_norm", "max_norm"]);
    clusters.meta("d", cfg.d);
    clusters.meta("n_max", cfg.n_max);
    clusters.meta("beta", cfg.beta);
    clusters.meta("certified", report.passed());
    clusters.meta("pairs_checked", report.pairs_checked);
    for (alpha, members) in p.clusters().iter().enumerate() {
        let norms = members.iter().map(|n| n.norm());
        let lo = norms.clone().fold(f64::INFINITY, f64::min);
        let hi = norms.fold(0.0, f64::max);
        clusters.rows.push(vec![
            alpha.to_string(),
            p.representative(alpha).to_string(),
            members.len().to_string(),
            f(lo),
            f(hi),
        ]);
    }
    let mut constants = Table::new(&["theta", "rho", "theta0", "theta1"]);
    constants.rows.push(vec![f(p.theta()), f(p.rho()), f(p.theta0()), f(p.theta1())]);
    Ok(vec![
        ("partition.csv".into(), clusters),
        ("constants.csv".into(), constants),
    ])
}

fn spectrum(cfg: &SolverConfig) -> Table {
    let omegas = if cfg.spectrum.omegas.is_empty() {
        vec![cfg.omega]
    } else {
        cfg.spectrum.omegas.clone()
    };
    let j_max = cfg.spectrum.j_max.unwrap_or(cfg.j_max);
    let points = crate::lattice::Lattice::new(cfg.d, cfg.n_max).points();
    let mut t = Table::new(&["omega", "j", "n", "multiplier"]);
    t.meta("m", cfg.m);
    for &w in &omegas {
        for j in 0..=j_max {
            for n in &points {
                t.rows.push(vec![f(w), j.to_string(), coords(n), f(multiplier(cfg.m, w, j, n))]);
            }
        }
    }
    t
}

fn unperturbed_family(cfg: &SolverConfig, p: &ClusterPartition) -> Result<(BlockFamily, f64), DriverError> {
    let bs = band_split(p, cfg.m, cfg.truncation())?;
    let layout = ModeLayout::h_band(&bs);
    Ok((BlockFamily::new(&layout, p, cfg.m, cfg.eps, None)?, bs.k0))
}

fn sweep(cfg: &SolverConfig) -> Result<Table, DriverError> {
    let p = cfg.partition()?;
    let (family, _) = unperturbed_family(cfg, &p)?;
    let grid = cfg.interval().grid(cfg.sweep.points);
    let zeta = cfg.zeta();
    let rows: Vec<Vec<String>> = grid
        .par_iter()
        .map(|&w| {
            let rec = screen(w, cfg.delta, zeta, &family);
            let (margin, alpha) = rec
                .worst()
                .map(|c| (c.margin, c.alpha.to_string()))
                .unwrap_or((f64::INFINITY, "-".into()));
            vec![f(w), f(margin), alpha, rec.resonant().to_string()]
        })
        .collect();
    let mut t = Table::new(&["omega", "min_margin", "worst_cluster", "resonant"]);
    t.meta("delta", cfg.delta);
    t.meta("zeta", zeta);
    t.meta("eps", cfg.eps);
    t.rows = rows;
    Ok(t)
}

fn measure(cfg: &SolverConfig) -> Result<Table, DriverError> {
    let p = cfg.partition()?;
    let (family, k0) = unperturbed_family(cfg, &p)?;
    let params = crate::small_divisors::CutoffParams {
        delta: cfg.delta,
        zeta: cfg.zeta(),
        k0,
        k_max: cfg.tolerances.k_max,
        interval: cfg.interval(),
        grid_step: cfg.omega_step,
    };
    let table = measure_scaling(&family, &params, &cfg.measure.deltas)?;
    let mut t = Table::new(&["delta", "measure", "fitted_slope"]);
    t.meta("eps", cfg.eps);
    t.meta("zeta", cfg.zeta());
    t.meta("k0", k0);
    for (d, m) in &table.rows {
        t.rows.push(vec![f(*d), f(*m), f(table.slope)]);
    }
    Ok(t)
}

fn solve(cfg: &SolverConfig, hash: &str) -> Result<Output, DriverError> {
    let pb = cfg.problem()?;
    let p = cfg.partition()?;
    let solver = Solver::new(&pb, &p, cfg.iter_params())?;
    let report = solver.run()?;
    let mut t = Table::new(&["k", "dw_norm", "du_norm", "residual"]);
    t.meta("omega", cfg.omega);
    t.meta("eps", cfg.eps);
    t.meta("converged", report.converged);
    t.meta("final_residual", f(report.residual));
    t.meta("decay_exponent", f(report.decay_exponent));
    for r in &report.state.history {
        t.rows.push(vec![r.k.to_string(), f(r.dw_norm), f(r.du_norm), f(r.residual)]);
    }
    let mut dump = Vec::new();
    let meta = vec![
        format!("config-hash {hash}"),
        format!("omega = {}", cfg.omega),
        format!("eps = {}", cfg.eps),
    ];
    write_dump(&report.solution, &mut dump, &meta)?;
    Ok(Output {
        files: vec![
            ("solve_history.csv".into(), t.render(hash)),
            ("solution.dump".into(), String::from_utf8(dump).expect("ascii dump")),
        ],
    })
}

/// Staged solve and Newton oracle at one `(omega, eps)`.
pub fn compare_point(cfg: &SolverConfig, omega: f64, eps: f64) -> Result<[f64; 3], DriverError> {
    let mut c = cfg.clone();
    c.omega = omega;
    c.eps = eps;
    let pb = c.problem()?;
    let p = c.partition()?;
    let staged = Solver::new(&pb, &p, c.iter_params())?.run()?;
    let newton = newton_solve(&pb, None, c.newton_options())?;
    let distance = staged.solution.sub(&newton.u)?.sobolev_norm(0.0);
    Ok([newton.residual, staged.residual, distance])
}

fn oracle_compare(cfg: &SolverConfig) -> Result<Table, DriverError> {
    let omegas = if cfg.compare.omegas.is_empty() {
        vec![cfg.omega]
    } else {
        cfg.compare.omegas.clone()
    };
    let epss = if cfg.compare.eps.is_empty() {
        vec![cfg.eps]
    } else {
        cfg.compare.eps.clone()
    };
    let jobs: Vec<(f64, f64)> = omegas
        .iter()
        .flat_map(|&w| epss.iter().map(move |&e| (w, e)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(w, e)| {
            let [nr, sr, dist] = compare_point(cfg, w, e)?;
            Ok(vec![f(w), f(e), f(nr), f(sr), f(dist)])
        })
        .collect::<Result<Vec<_>, DriverError>>()?;
    let mut t = Table::new(&["omega", "eps", "newton_residual", "staged_residual", "distance"]);
    t.meta("delta", cfg.delta);
    t.rows = rows;
    Ok(t)
}
