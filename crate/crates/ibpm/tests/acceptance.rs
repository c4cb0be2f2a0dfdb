//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `IBPM_ACCEPTANCE=1,5,7` restricts the run to the listed criteria.
//! Criterion 4 (the Re 100 vortex street, about 3.5 hours on one core) only
//! runs with `IBPM_WAKE=1`.

use ibpm::bench::{bench_matrix, bench_rhs, case_matrix};
use ibpm::config::{CaseConfig, GridSpec};
use ibpm::run::build_simulation;
use ibpm::{parse_config, run_case, RunOptions};
use ibpm_core::body::{delta_roma, DELTA_SUPPORT};
use ibpm_core::diagnostics::{analyze_oscillation, convergence_order, couette_analytic, sample_velocity};
use ibpm_core::grid::{Rect, StaggeredGrid};
use ibpm_core::krylov::{SaParams, SolverKind, SolverParams};
use ibpm_core::operators::{assemble_bn, assemble_diffusion, assemble_implicit, coupled_matrix, metric_diagonal};
use ibpm_core::sparse::{sliced_triple_product, spmm, CsrMatrix, Triplets};
use ibpm_core::stepper::{NoObserver, RefreshPolicy, Simulation};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::Instant;

/// Criterion 1: fitted spatial order range.
const C1_ORDER: (f64, f64) = (0.8, 1.2);
/// Criterion 2: Richardson order ranges for N = 1 and N = 3.
const C2_ORDER_N1: (f64, f64) = (0.85, 1.1);
const C2_ORDER_N3: (f64, f64) = (2.5, 3.0);
/// Criterion 3: steady drag, full and smoke grids.
const C3_CD: f64 = 1.57;
const C3_CD_TOL: f64 = 0.05;
const C3_SMOKE_CD: (f64, f64) = (1.4, 1.8);
/// Criterion 4: Strouhal number, mean drag and lift amplitude.
const C4_ST: (f64, f64) = (0.166, 0.010);
const C4_CD: (f64, f64) = (1.37, 0.07);
const C4_CL: (f64, f64) = (0.339, 0.05);
/// Criterion 5 and 7: symmetry and product agreement.
const SYMMETRY_TOL: f64 = 1e-12;
const ZERO_EIG_TOL: f64 = 1e-10;
const PRODUCT_TOL: f64 = 1e-13;
/// Criterion 6: allowed deviation of the halving ratio from 2^N.
const C6_RATIO_TOL: f64 = 0.2;
/// Criterion 10: delta identities.
const DELTA_TOL: f64 = 1e-12;
/// Criterion 11: bound on force coefficients of the flapping smoke run.
const C11_FORCE_BOUND: f64 = 100.0;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Result<Outcome, String>;

fn cases_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases")
}

fn load(name: &str) -> Result<CaseConfig, String> {
    parse_config(&cases_dir().join(format!("{name}.cfg"))).map_err(|e| e.to_string())
}

fn in_range(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn within(x: f64, (target, tol): (f64, f64)) -> bool {
    (x - target).abs() <= tol
}

fn couette_case(cells: usize, dt: f64, t_end: f64, n_order: usize) -> Result<CaseConfig, String> {
    let mut cfg = load("couette")?;
    let domain = match &cfg.grid {
        GridSpec::Cells { domain, .. } => *domain,
        GridSpec::Stretched { .. } => return Err("couette case must use a cell grid".into()),
    };
    cfg.grid = GridSpec::Cells { domain, nx: cells, ny: cells };
    cfg.dt = dt;
    cfg.stepping.dt = dt;
    cfg.stepping.n_order = n_order;
    cfg.steps = (t_end / dt).round() as usize;
    let h = domain.width() / cells as f64;
    if let Some(c) = cfg.couette.as_mut() {
        c.margin = 2.0 * h;
    }
    Ok(cfg)
}

fn run_sim(cfg: &CaseConfig) -> Result<Simulation, String> {
    let mut sim = build_simulation(cfg).map_err(|e| e.to_string())?;
    sim.run(cfg.steps, &mut NoObserver).map_err(|e| e.to_string())?;
    Ok(sim)
}

/// Azimuthal velocity at the Couette sampling points (rays offset by a
/// quarter spacing) with the analytic values.
fn couette_samples(sim: &Simulation, cfg: &CaseConfig) -> Result<Vec<(f64, f64)>, String> {
    let c = cfg.couette.as_ref().ok_or("missing [couette] section")?;
    let (r0, r1) = (c.r_i + c.margin, c.r_o - c.margin);
    let mut out = Vec::new();
    for ray in 0..c.rays {
        let th = 2.0 * std::f64::consts::PI * (ray as f64 + 0.25) / c.rays as f64;
        let (s, co) = th.sin_cos();
        for k in 0..c.samples {
            let r = r0 + (r1 - r0) * k as f64 / (c.samples - 1) as f64;
            let (u, v) = sample_velocity(&sim.grid, &sim.state.q, &sim.state.bv, c.center[0] + r * co, c.center[1] + r * s);
            let exact = couette_analytic(r, c.omega, c.r_i, c.r_o).map_err(|e| e.to_string())?;
            out.push((-s * u + co * v, exact));
        }
    }
    Ok(out)
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n as f64).sqrt()
}

/// Couette spatial order. Each grid is run at `dt` and `dt/2` and the
/// profiles are extrapolated linearly to `dt = 0`, which removes the
/// first-order splitting error that otherwise competes with the O(h)
/// boundary smearing.
fn criterion_1() -> Result<Outcome, String> {
    let mut data = Vec::new();
    let mut detail = Vec::new();
    for (cells, dt) in [(75, 0.02), (150, 0.01), (300, 0.005)] {
        let coarse = couette_case(cells, dt, 8.0, 1)?;
        let fine = couette_case(cells, 0.5 * dt, 8.0, 1)?;
        let (a, b) = (run_sim(&coarse)?, run_sim(&fine)?);
        let (sa, sb) = (couette_samples(&a, &coarse)?, couette_samples(&b, &fine)?);
        let raw = rms(sb.iter().map(|(u, e)| u - e));
        let err = rms(sa.iter().zip(&sb).map(|((ua, e), (ub, _))| 2.0 * ub - ua - e));
        data.push((3.0 / cells as f64, err));
        detail.push(format!("{cells}²: {err:.3e} (dt {}: {raw:.3e})", 0.5 * dt));
    }
    let p = convergence_order(&data).map_err(|e| e.to_string())?;
    Ok(Outcome {
        pass: in_range(p, C1_ORDER),
        detail: format!("order {p:.3}; {}", detail.join(", ")),
    })
}

fn velocities_at_t2(n_order: usize) -> Result<Vec<Vec<f64>>, String> {
    [0.01, 0.005, 0.0025]
        .into_iter()
        .map(|dt| {
            let cfg = couette_case(151, dt, 2.0, n_order)?;
            let sim = run_sim(&cfg)?;
            Ok(sim.grid.velocities(&sim.state.q))
        })
        .collect()
}

fn richardson_order(u: &[Vec<f64>]) -> f64 {
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    (diff(&u[0], &u[1]) / diff(&u[1], &u[2])).log2()
}

fn criterion_2() -> Result<Outcome, String> {
    let p1 = richardson_order(&velocities_at_t2(1)?);
    let p3 = richardson_order(&velocities_at_t2(3)?);
    Ok(Outcome {
        pass: in_range(p1, C2_ORDER_N1) && in_range(p3, C2_ORDER_N3),
        detail: format!("N=1 order {p1:.3}, N=3 order {p3:.3}"),
    })
}

fn final_cd(name: &str) -> Result<f64, String> {
    let cfg = load(name)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let s = run_case(&cfg, &opts).map_err(|e| e.to_string())?;
    s.forces.last().map(|r| r.cd).ok_or_else(|| "no steps".into())
}

fn criterion_3() -> Result<Outcome, String> {
    let smoke = final_cd("cylinder_re40_smoke")?;
    let full = final_cd("cylinder_re40")?;
    Ok(Outcome {
        pass: (full - C3_CD).abs() <= C3_CD_TOL && in_range(smoke, C3_SMOKE_CD),
        detail: format!("Cd {full:.4} (h 0.02), {smoke:.4} (h 0.04)"),
    })
}

fn criterion_4() -> Result<Outcome, String> {
    let cfg = load("wake_re100")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let s = run_case(&cfg, &opts).map_err(|e| e.to_string())?;
    let t: Vec<f64> = s.forces.iter().map(|r| r.t).collect();
    let cl: Vec<f64> = s.forces.iter().map(|r| r.cl).collect();
    let cd: Vec<f64> = s.forces.iter().map(|r| r.cd).collect();
    let lift = analyze_oscillation(&t, &cl, cfg.discard).map_err(|e| e.to_string())?;
    let start = (cfg.discard * cd.len() as f64) as usize;
    let mean_cd = cd[start..].iter().sum::<f64>() / (cd.len() - start) as f64;
    let st = lift.frequency * cfg.length / cfg.u_ref;
    Ok(Outcome {
        pass: within(st, C4_ST) && within(mean_cd, C4_CD) && within(lift.amplitude, C4_CL),
        detail: format!("St {st:.4}, mean Cd {mean_cd:.4}, Cl amplitude {:.4}", lift.amplitude),
    })
}

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n_rows(), a.n_cols());
    for (i, j, v) in a.triplets() {
        m[(i, j)] = v;
    }
    m
}

fn criterion_5() -> Result<Outcome, String> {
    // Residuals after every step of a moving-body run and a closed-box run.
    let mut worst: f64 = 0.0;
    let mut target: f64 = 0.0;
    for name in ["flapping_smoke", "couette"] {
        let mut cfg = load(name)?;
        if name == "couette" {
            cfg = couette_case(75, 0.02, 1.0, 1)?;
        }
        target = 10.0 * cfg.stepping.solve2.rel_tol;
        let mut sim = build_simulation(&cfg).map_err(|e| e.to_string())?;
        for _ in 0..cfg.steps {
            let rep = sim.advance(&mut NoObserver).map_err(|e| e.to_string())?;
            worst = worst.max(rep.divergence_residual).max(rep.slip_residual);
            let lhs2 = &sim.ops.lhs2;
            if lhs2.max_asymmetry() > SYMMETRY_TOL * lhs2.max_abs() {
                return Ok(Outcome {
                    pass: false,
                    detail: format!("{name}: asymmetric coupled matrix at step {}", rep.step_index),
                });
            }
        }
    }
    // Null space of the unpinned coupled matrix on a 12 × 12 grid.
    let mut cfg = couette_case(12, 0.05, 0.05, 1)?;
    cfg.bodies.retain(|b| b.name == "outer");
    let sim = build_simulation(&cfg).map_err(|e| e.to_string())?;
    let ops = &sim.ops;
    let (raw, _) = coupled_matrix(&ops.qt, &ops.bn, &ops.q, usize::MAX).map_err(|e| e.to_string())?;
    let ev = SymmetricEigen::new(dense(&raw)).eigenvalues;
    let top = ev.amax();
    let zeros = ev.iter().filter(|l| l.abs() <= ZERO_EIG_TOL * top).count();
    Ok(Outcome {
        pass: worst <= target && zeros == 1,
        detail: format!("max residual {worst:.2e} (bound {target:.0e}), {zeros} zero eigenvalue(s) of {}", ev.len()),
    })
}

fn criterion_6() -> Result<Outcome, String> {
    let grid = StaggeredGrid::uniform(Rect::square(0.5), 16, 16).map_err(|e| e.to_string())?;
    let m = metric_diagonal(&grid);
    let l = assemble_diffusion(&grid);
    let defect = |dt: f64, n: usize| -> Result<f64, String> {
        let a = assemble_implicit(&m, &l, dt, 0.05).map_err(|e| e.to_string())?;
        let bn = assemble_bn(&m, &l, dt, 0.05, n).map_err(|e| e.to_string())?;
        let ab = dense(&spmm(&a, &bn).map_err(|e| e.to_string())?);
        Ok((DMatrix::identity(ab.nrows(), ab.ncols()) - ab).norm())
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for n in [1, 3] {
        let ratio = defect(2e-3, n)? / defect(1e-3, n)?;
        let want = 2f64.powi(n as i32);
        pass &= (ratio / want - 1.0).abs() <= C6_RATIO_TOL;
        detail.push(format!("N={n}: ratio {ratio:.3} (2^N = {want})"));
    }
    Ok(Outcome {
        pass,
        detail: detail.join(", "),
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> CsrMatrix {
    let mut t = Triplets::new(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if rng.gen::<f64>() < density {
                t.push(i, j, rng.gen_range(-1.0..1.0));
            }
        }
    }
    t.to_csr()
}

fn criterion_7() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut peak_ok = true;
    for _ in 0..50 {
        let (m, k, n) = (rng.gen_range(8..40), rng.gen_range(8..40), rng.gen_range(8..40));
        let a = random_matrix(&mut rng, m, k, 0.15);
        let b = random_matrix(&mut rng, k, k, 0.15);
        let c = random_matrix(&mut rng, k, n, 0.15);
        let ab = spmm(&a, &b).map_err(|e| e.to_string())?;
        let reference = spmm(&ab, &c).map_err(|e| e.to_string())?.to_dense();
        let scale = reference.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
        for slice in [1, 7, m] {
            let (p, stats) = sliced_triple_product(&a, &b, &c, slice).map_err(|e| e.to_string())?;
            let err = p
                .to_dense()
                .iter()
                .flatten()
                .zip(reference.iter().flatten())
                .fold(0.0f64, |e, (x, y)| e.max((x - y).abs() / scale));
            worst = worst.max(err);
            if slice < m && stats.peak_intermediate_nnz >= ab.nnz() {
                peak_ok = false;
            }
        }
    }
    Ok(Outcome {
        pass: worst <= PRODUCT_TOL && peak_ok,
        detail: format!("max relative deviation {worst:.1e}; sliced peaks below full intermediate: {peak_ok}"),
    })
}

fn criterion_8() -> Result<Outcome, String> {
    let cfg = load("cylinder_60")?;
    let a = case_matrix(&cfg).map_err(|e| e.to_string())?;
    let params = SolverParams {
        rel_tol: 1e-5,
        max_iters: 20_000,
        ..SolverParams::default()
    };
    let table = bench_matrix(&a, &bench_rhs(a.n_rows()), params, &SaParams::default());
    let it = |k: SolverKind| table.row(k).filter(|r| r.converged).map(|r| r.iterations);
    let (sa, diag, cg) = (
        it(SolverKind::PcgSmoothedAggregation),
        it(SolverKind::PcgDiagonal),
        it(SolverKind::Cg),
    );
    let pass = matches!((sa, diag, cg), (Some(s), Some(d), Some(c)) if s < d && d < c);
    Ok(Outcome {
        pass,
        detail: format!("iterations pcg-sa {sa:?}, pcg-diag {diag:?}, cg {cg:?} on {} rows", a.n_rows()),
    })
}

fn flapping_forces(n_pc: usize, policy: RefreshPolicy) -> Result<(Vec<[f64; 2]>, Simulation), String> {
    let mut cfg = load("flapping_smoke")?;
    cfg.stepping.n_pc = n_pc;
    let mut sim = build_simulation(&cfg).map_err(|e| e.to_string())?;
    sim.policy = policy;
    let mut forces = Vec::new();
    for _ in 0..cfg.steps {
        sim.advance(&mut NoObserver).map_err(|e| e.to_string())?;
        let r = ibpm::run::force_record(&sim, &cfg);
        forces.push([r.cd, r.cl]);
    }
    Ok((forces, sim))
}

fn criterion_9() -> Result<Outcome, String> {
    let rel_tol = load("flapping_smoke")?.stepping.solve2.rel_tol;
    let (reference, ref_sim) = flapping_forces(1, RefreshPolicy::AlwaysRebuild)?;
    let (one, one_sim) = flapping_forces(1, RefreshPolicy::Reuse)?;
    let identical = one_sim.state == ref_sim.state && one == reference;
    let mut worst: f64 = 0.0;
    let mut builds = Vec::new();
    for n_pc in [2, 4] {
        let (f, sim) = flapping_forces(n_pc, RefreshPolicy::Reuse)?;
        builds.push(sim.hierarchy_builds());
        for (a, b) in f.iter().zip(&one) {
            worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
    }
    Ok(Outcome {
        pass: identical && worst <= 10.0 * rel_tol,
        detail: format!(
            "n_pc=1 identical to rebuild: {identical}; max coefficient deviation {worst:.2e} (bound {:.0e}); hierarchy builds {} / {builds:?}",
            10.0 * rel_tol,
            one_sim.hierarchy_builds()
        ),
    })
}

fn criterion_10() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let h = 0.37;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s: f64 = rng.gen_range(0.0..1.0);
        let r: f64 = rng.gen_range(-2.0..2.0);
        worst = worst.max((delta_roma(r * h, h) - delta_roma(-r * h, h)).abs());
        let (mut mass, mut moment) = (0.0, 0.0);
        for j in -3i32..=3 {
            let x = (j as f64 - s) * h;
            let d = delta_roma(x, h) * h;
            mass += d;
            moment += x * d;
        }
        worst = worst.max((mass - 1.0).abs()).max(moment.abs() / h);
    }
    let mut seam: f64 = 0.0;
    for r in [0.5, DELTA_SUPPORT] {
        for sign in [-1.0, 1.0] {
            let x = sign * r * h;
            let eps = 1e-9 * h;
            seam = seam.max((delta_roma(x - eps, h) - delta_roma(x + eps, h)).abs() * h);
        }
    }
    Ok(Outcome {
        pass: worst <= DELTA_TOL && seam <= 1e-8,
        detail: format!("max identity defect {worst:.1e}, seam jump {seam:.1e}"),
    })
}

fn criterion_11() -> Result<Outcome, String> {
    let cfg = load("flapping_smoke")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let s = run_case(&cfg, &opts).map_err(|e| e.to_string())?;
    let peak = s.forces.iter().fold(0.0f64, |m, r| m.max(r.cd.abs()).max(r.cl.abs()));
    let text = std::fs::read_to_string(dir.path().join(format!("vorticity_{:06}.txt", cfg.steps))).map_err(|e| e.to_string())?;
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
        .filter_map(|l| l.split_whitespace().nth(2).map(|v| v.parse::<f64>()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let finite = !values.is_empty() && values.iter().all(|v| v.is_finite());
    Ok(Outcome {
        pass: s.steps == cfg.steps && peak.is_finite() && peak <= C11_FORCE_BOUND && finite,
        detail: format!("{} steps, peak |C| {peak:.3}, {} finite vorticity samples", s.steps, values.len()),
    })
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("IBPM_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wake = std::env::var("IBPM_WAKE").is_ok_and(|v| v == "1");
    let checks: [(usize, &str, Check); 11] = [
        (1, "Couette spatial convergence", criterion_1),
        (2, "Couette temporal convergence", criterion_2),
        (3, "cylinder Re 40 drag", criterion_3),
        (4, "vortex street Re 100", criterion_4),
        (5, "step invariants", criterion_5),
        (6, "approximate inverse order", criterion_6),
        (7, "sliced triple product", criterion_7),
        (8, "solver ordering", criterion_8),
        (9, "hierarchy reuse", criterion_9),
        (10, "delta function", criterion_10),
        (11, "flapping smoke run", criterion_11),
    ];
    let mut failures = 0;
    for (n, name, check) in checks {
        if selected.as_ref().is_some_and(|s| !s.contains(&n)) {
            continue;
        }
        if n == 4 && !wake {
            println!("criterion {n:>2} {name}: SKIPPED (set IBPM_WAKE=1; about 3.5 hours on one core)");
            continue;
        }
        let t = Instant::now();
        let (tag, detail) = match check() {
            Ok(o) if o.pass => ("PASS", o.detail),
            Ok(o) => ("FAIL", o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failures += 1;
        }
        println!("criterion {n:>2} {name}: {tag} [{:.1} s] {detail}", t.elapsed().as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
