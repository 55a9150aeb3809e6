//! Acceptance suite. Runs every check, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use beam_galerkin::beam::{f_band_lower_bound, gap_across_clusters, BeamSymbol, OmegaInterval};
use beam_galerkin::diagonalization::{
    beam_diagonal, bookkeeping_residual, default_c0, diagonalize, homological_lhs, in_cutoff, max_entry,
    solve_homological, CMatrix, DiagParams,
};
use beam_galerkin::equation::Problem;
use beam_galerkin::field::{band_split, FourierField, ModeIndex, Truncation};
use beam_galerkin::iteration::{IterParams, RunReport, Solver};
use beam_galerkin::lattice::{build_partition, verify_partition, LatticePoint, PartitionParams};
use beam_galerkin::layout::ModeLayout;
use beam_galerkin::lyapunov::{band_residuals, PicardOptions, ReducedProblem};
use beam_galerkin::nonlinearity::{Nonlinearity, NonlinearitySpec};
use beam_galerkin::oracle::{newton_solve, NewtonOptions};
use beam_galerkin::small_divisors::{eig_omega_derivative, measure_scaling, BlockFamily, CutoffParams};
use beam_galerkin::testutil::{random_field, rng, smooth_random_field};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn forced_problem(d: usize, j: i32, n: i32, omega: f64, eps: f64) -> Problem {
    let t = Truncation::new(d, j, n);
    let mut f = FourierField::zeros(t);
    let mut e1 = vec![0; d];
    e1[0] = 1;
    f.set(&ModeIndex::new(1, LatticePoint::new(&e1)), Complex64::new(1.0, 0.0))
        .unwrap();
    let nl = Nonlinearity::new(NonlinearitySpec::quartic(d, 1.0), t);
    Problem::new(BeamSymbol::new(1.0, omega).unwrap(), eps, nl, f)
}

fn staged(pb: &Problem, delta: f64) -> RunReport {
    let t = pb.truncation();
    let p = build_partition(&PartitionParams::new(t.dim, t.n_max, 0.05)).unwrap();
    let zeta = 0.05 * t.dim as f64 + t.dim as f64 / 2.0 + 2.5;
    Solver::new(pb, &p, IterParams::new(delta, zeta)).unwrap().run().unwrap()
}

fn partition_certification() -> Outcome {
    let start = Instant::now();
    let p = build_partition(&PartitionParams::new(2, 8, 0.05)).unwrap();
    let report = verify_partition(&p);
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<_> = report.checks().iter().filter(|c| !c.passed).map(|c| c.name).collect();
    check(
        report.passed() && secs < 10.0,
        format!(
            "{} clusters, {} pairs, failed checks {:?}, {secs:.2}s",
            p.len(),
            report.pairs_checked,
            failed
        ),
    )
}

fn spectral_gap() -> Outcome {
    let p = build_partition(&PartitionParams::new(2, 8, 0.05)).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [0.5, 1.0, 4.0] {
        let r = gap_across_clusters(m, &p);
        ok &= r.passed() && r.violations.is_empty();
        parts.push(format!("m={m}: ratio {:.3}, {} violations", r.min_ratio, r.violations.len()));
    }
    check(ok, parts.join("; "))
}

fn f_band_coercivity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, n, j) in [(1, 6, 64), (2, 4, 32)] {
        let p = build_partition(&PartitionParams::new(d, n, 0.05)).unwrap();
        for m in [0.5, 1.0, 4.0] {
            let bs = band_split(&p, m, Truncation::new(d, j, n)).unwrap();
            let cert = f_band_lower_bound(m, OmegaInterval::default(), &bs, &p, 1e-3);
            ok &= cert.passed() && cert.grid_min >= cert.c;
            parts.push(format!("d={d} m={m}: c={:.3e} over {} modes", cert.c, cert.modes_checked));
        }
    }
    check(ok, parts.join("; "))
}

fn reduction_contraction() -> Outcome {
    let start = Instant::now();
    let pb = forced_problem(1, 32, 6, 1.234, 1e-3);
    let p = build_partition(&PartitionParams::new(1, 6, 0.05)).unwrap();
    let bs = band_split(&p, 1.0, pb.truncation()).unwrap();
    let mut worst_ratio: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for seed in 0..4 {
        let u1 = bs.project_h(&smooth_random_field(pb.truncation(), seed, 0.1, 0.5));
        let rp = ReducedProblem::solve(&pb, &bs, &u1, PicardOptions::default()).unwrap();
        let (_, f_res) = band_residuals(&pb, &bs, &rp);
        worst_ratio = worst_ratio.max(rp.solution.max_ratio());
        worst_res = worst_res.max(f_res);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_ratio <= 0.5 && worst_res <= 1e-12 && secs < 30.0,
        format!("max Picard ratio {worst_ratio:.3e}, f-band residual {worst_res:.3e}, {secs:.2}s"),
    )
}

fn homological_identity() -> Outcome {
    let p = build_partition(&PartitionParams::new(2, 4, 0.05)).unwrap();
    let bs = band_split(&p, 1.0, Truncation::new(2, 8, 4)).unwrap();
    let lay = ModeLayout::h_band(&bs);
    let (c0, rho) = (default_c0(p.rho()), p.rho());
    let n = lay.len();
    let mut worst: f64 = 0.0;
    let mut antisym = true;
    for seed in 0..20 {
        let mut r = rng(seed);
        let mut a = CMatrix::zeros(n, n);
        for col in 0..n {
            for row in 0..col {
                if lay.cluster(row) != lay.cluster(col) {
                    let z = Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
                    a[(row, col)] = z;
                    a[(col, row)] = z.conj();
                }
            }
        }
        let h = solve_homological(&a, &lay, c0, rho).unwrap();
        let lhs = homological_lhs(&h.b, &lay, 1.0);
        worst = worst.max(max_entry(&(lhs - (&a - &h.r_cut))));
        antisym &= h.b.adjoint() == -&h.b;
    }
    check(
        worst <= 1e-12 && antisym,
        format!("20 matrices of size {n}, worst entry {worst:.3e}, antihermitian {antisym}"),
    )
}

fn conjugation() -> Outcome {
    let p = build_partition(&PartitionParams::new(1, 5, 0.05)).unwrap();
    let bs = band_split(&p, 1.0, Truncation::new(1, 12, 5)).unwrap();
    let lay = ModeLayout::h_band(&bs);
    let (c0, rho) = (default_c0(p.rho()), p.rho());
    let l = beam_diagonal(&BeamSymbol::new(1.0, 1.3).unwrap(), &lay);
    let n = lay.len();
    let mut r = rng(9);
    let mut v = CMatrix::zeros(n, n);
    for col in 0..n {
        for row in 0..=col {
            let (qr, qc) = (lay.mode(row), lay.mode(col));
            let cross = lay.cluster(row) != lay.cluster(col);
            if qr.j != qc.j || (cross && !in_cutoff(&qr.n, &qc.n, c0, rho)) {
                continue;
            }
            let z = if row == col {
                Complex64::new(r.random_range(-1.0..1.0), 0.0)
            } else {
                Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
            };
            v[(row, col)] = z;
            v[(col, row)] = z.conj();
        }
    }
    let mut after = Vec::new();
    let mut book: f64 = 0.0;
    let mut reduced = true;
    for eps in [1e-2, 5e-3] {
        let res = diagonalize(&l, &v, &lay, &DiagParams { eps, c0, rho, steps: 1 }).unwrap();
        book = book.max(bookkeeping_residual(&l, &v, &res, eps));
        let d = res.diagnostics[0];
        reduced &= d.offdiag_after < d.offdiag_before;
        after.push(d.offdiag_after);
    }
    let slope = (after[0] / after[1]).ln() / 2f64.ln();
    check(
        slope >= 1.7 && book <= 1e-10 && reduced,
        format!("fitted exponent {slope:.3}, bookkeeping {book:.3e}"),
    )
}

fn eigenvalue_monotonicity() -> Outcome {
    // unperturbed: derivatives are exactly -2 w j^2
    let p = build_partition(&PartitionParams::new(1, 4, 0.05)).unwrap();
    let bs = band_split(&p, 1.0, Truncation::new(1, 16, 4)).unwrap();
    let lay = ModeLayout::h_band(&bs);
    let fam0 = BlockFamily::new(&lay, &p, 1.0, 0.0, None).unwrap();
    let mut rel: f64 = 0.0;
    for w in [1.1, 1.37, 1.9] {
        for b in &fam0.blocks {
            let d = eig_omega_derivative(&fam0, b, bs.k0, w, 1e-5);
            let mut pairs: Vec<(f64, f64)> = b
                .positions
                .clone()
                .map(|k| {
                    let q = lay.mode(k);
                    let j2 = (q.j as f64).powi(2);
                    (-w * w * j2 + q.n.norm4() as f64 + 1.0, -2.0 * w * j2)
                })
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let exact: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            for (x, y) in d.derivs.iter().zip(&exact) {
                rel = rel.max((x - y).abs() / y.abs());
            }
        }
    }
    // perturbed: block potential of a converged stage
    let pb = forced_problem(1, 16, 4, 1.234, 1e-3);
    let solver = Solver::new(&pb, &p, IterParams::new(1e-3f64.sqrt(), 3.05)).unwrap();
    let s0 = solver.initial_state().unwrap();
    let s1 = solver.stage(&s0).unwrap();
    let fam = solver.operators(&s1).unwrap().family;
    let grid = OmegaInterval::default().grid(100);
    let mut negative = true;
    let mut max_deriv = f64::NEG_INFINITY;
    for &w in &grid {
        for b in &fam.blocks {
            let d = eig_omega_derivative(&fam, b, bs.k0, w, 1e-5);
            negative &= d.all_negative();
            max_deriv = max_deriv.max(d.derivs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    check(
        rel <= 1e-6 && negative,
        format!("eps=0 relative error {rel:.3e}; eps=1e-3 largest derivative {max_deriv:.3e} over 100 points"),
    )
}

fn solver_vs_oracle() -> Outcome {
    let start = Instant::now();
    let eps: f64 = 1e-3;
    let pb = forced_problem(1, 16, 4, 1.234, eps);
    let run = staged(&pb, eps.sqrt());
    let newton = newton_solve(&pb, None, NewtonOptions::default()).unwrap();
    let dist = run.solution.sub(&newton.u).unwrap().sobolev_norm(0.0);
    let secs = start.elapsed().as_secs_f64();
    check(
        run.converged && run.residual <= 1e-9 && dist <= 1e-8 && secs < 60.0,
        format!(
            "{} stages, residual {:.3e}, distance {dist:.3e}, {secs:.2}s",
            run.stages(),
            run.residual
        ),
    )
}

fn decay_rate() -> Outcome {
    let eps: f64 = 1e-3;
    let pb = forced_problem(1, 16, 4, 1.234, eps);
    let run = staged(&pb, eps.sqrt());
    let t = pb.truncation();
    let p = build_partition(&PartitionParams::new(1, t.n_max, 0.05)).unwrap();
    let saturation = (0..p.len()).map(|a| p.shell(a)).max().unwrap();
    let steps: Vec<f64> = run
        .state
        .history
        .iter()
        .filter(|r| r.k <= saturation + 1)
        .map(|r| r.dw_norm)
        .collect();
    let decreasing = steps.windows(2).all(|w| w[1] < w[0]);
    let ratios: Vec<String> = steps.windows(2).map(|w| format!("{:.2e}", w[1] / w[0])).collect();
    check(
        decreasing && run.decay_exponent >= 2f64.ln(),
        format!(
            "step ratios [{}], fitted rate {:.2}x per stage",
            ratios.join(" "),
            run.decay_exponent.exp()
        ),
    )
}

fn measure_scaling_check() -> Outcome {
    let start = Instant::now();
    let p = build_partition(&PartitionParams::new(1, 6, 0.05)).unwrap();
    let bs = band_split(&p, 1.0, Truncation::new(1, 64, 6)).unwrap();
    let lay = ModeLayout::h_band(&bs);
    let fam = BlockFamily::new(&lay, &p, 1.0, 0.0, None).unwrap();
    let params = CutoffParams {
        delta: 1e-3,
        zeta: 3.05,
        k0: bs.k0,
        k_max: 12,
        interval: OmegaInterval::default(),
        grid_step: 1e-3,
    };
    let table = measure_scaling(&fam, &params, &[4e-3, 2e-3, 1e-3, 5e-4]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rows: Vec<String> = table.rows.iter().map(|(d, m)| format!("{d:e}:{m:.3e}")).collect();
    check(
        (table.slope - 1.0).abs() <= 0.3 && secs < 60.0,
        format!("slope {:.3} from [{}], {secs:.2}s", table.slope, rows.join(" ")),
    )
}

fn solution_scaling() -> Outcome {
    let delta = 1e-3f64.sqrt();
    let mut scaled = Vec::new();
    for eps in [1e-4, 1e-3] {
        let pb = forced_problem(1, 16, 4, 1.234, eps);
        let run = staged(&pb, delta);
        scaled.push(run.solution.sobolev_norm(2.0) / eps);
    }
    let ratio = scaled[0].max(scaled[1]) / scaled[0].min(scaled[1]);
    check(
        ratio <= 2.0,
        format!("||u||/eps = {:.4e}, {:.4e}; ratio {ratio:.4}", scaled[0], scaled[1]),
    )
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let d = 1 + (seed % 2) as usize;
        let t = Truncation::new(d, 6, 3);
        let spec = if seed % 4 < 2 {
            NonlinearitySpec::quartic(d, 1.0)
        } else {
            NonlinearitySpec::quintic(d, 0.7)
        };
        let nl = Nonlinearity::new(spec, t);
        let u = random_field(t, 2 * seed, 0.2);
        let h = random_field(t, 2 * seed + 1, 0.2);
        let s = 1e-4;
        let fd = (nl.phi2(&u.add(&h.scale(s)).unwrap()) - nl.phi2(&u.add(&h.scale(-s)).unwrap())) / (2.0 * s);
        let exact = nl.grad_phi2(&u).inner(&h);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-300));
    }
    check(worst <= 1e-6, format!("worst relative error {worst:.3e} over 20 pairs"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("partition certification", partition_certification),
        ("spectral gap", spectral_gap),
        ("f-band coercivity", f_band_coercivity),
        ("reduction contraction", reduction_contraction),
        ("homological identity", homological_identity),
        ("conjugation", conjugation),
        ("eigenvalue monotonicity", eigenvalue_monotonicity),
        ("staged solver vs oracle", solver_vs_oracle),
        ("decay rate", decay_rate),
        ("measure scaling", measure_scaling_check),
        ("solution scaling", solution_scaling),
        ("gradient check", gradient_check),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
