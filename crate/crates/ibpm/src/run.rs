//! Case driver: setup, time loop, outputs and timing.

use crate::config::{CaseConfig, CouetteSpec};
use crate::error::{Error, Result};
use crate::io::{read_checkpoint, vorticity_to_string, write_atomic, write_checkpoint};
use ibpm_core::diagnostics::{
    analyze_oscillation, compute_force_coefficients, compute_vorticity, couette_analytic, couette_error,
    sample_velocity, ForceRecord, Oscillation, ProfileError,
};
use ibpm_core::stepper::{FlowState, Phase, Simulation, StepObserver, StepReport};
use std::fmt;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

/// Builds the simulation described by `cfg` at its start time. Problems
/// with the case itself (sizing, body placement) come back as
/// [`Error::Setup`].
pub fn build_simulation(cfg: &CaseConfig) -> Result<Simulation> {
    let grid = cfg.grid.build().map_err(Error::Setup)?;
    let mut bodies = Vec::with_capacity(cfg.bodies.len());
    for spec in &cfg.bodies {
        let body = spec.build(grid.h_min)?;
        if let Some((lo, hi)) = body.spacing_violation(grid.h_min) {
            log::warn!(
                "body {}: point spacing in [{lo:.4}, {hi:.4}] is outside [0.8h, 1.2h] for h = {}",
                spec.name,
                grid.h_min
            );
        }
        bodies.push(body);
    }
    let [u0, v0] = cfg.initial_velocity;
    let q0 = grid.sample_fluxes(|_, _| (u0, v0));
    Simulation::new(grid, bodies, cfg.bc, cfg.stepping, q0, cfg.t0).map_err(Error::Setup)
}

const PHASES: [&str; 8] = [
    "setup",
    "assembly",
    "explicit",
    "solve 1",
    "solve 2",
    "projection",
    "preconditioner",
    "diagnostics",
];

fn slot(p: Phase) -> usize {
    match p {
        Phase::Assembly => 1,
        Phase::Explicit => 2,
        Phase::Solve1 => 3,
        Phase::Solve2 => 4,
        Phase::Projection => 5,
        Phase::Preconditioner => 6,
    }
}

/// Wall-clock time per phase.
#[derive(Debug, Clone, Default)]
pub struct PhaseTimer {
    totals: [Duration; 8],
    open: [Option<Instant>; 8],
}

impl PhaseTimer {
    fn start(&mut self, k: usize) {
        self.open[k] = Some(Instant::now());
    }

    fn stop(&mut self, k: usize) {
        if let Some(t) = self.open[k].take() {
            self.totals[k] += t.elapsed();
        }
    }

    pub fn table(&self) -> TimingTable {
        TimingTable {
            rows: PHASES
                .iter()
                .zip(self.totals)
                .map(|(n, d)| (n.to_string(), d.as_secs_f64()))
                .collect(),
        }
    }
}

impl StepObserver for PhaseTimer {
    fn enter(&mut self, phase: Phase) {
        self.start(slot(phase));
    }

    fn leave(&mut self, phase: Phase) {
        self.stop(slot(phase));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub rows: Vec<(String, f64)>,
}

impl TimingTable {
    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.1).sum()
    }

    pub fn seconds(&self, phase: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == phase).map(|r| r.1)
    }
}

impl fmt::Display for TimingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total = self.total();
        writeln!(f, "{:<16}{:>12}{:>9}", "phase", "seconds", "share")?;
        for (name, s) in &self.rows {
            let share = if total > 0.0 { 100.0 * s / total } else { 0.0 };
            writeln!(f, "{name:<16}{s:>12.3}{share:>8.1}%")?;
        }
        writeln!(f, "{:<16}{total:>12.3}{:>8.1}%", "total", 100.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; overrides the case file.
    pub out_dir: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub steps: usize,
    pub final_time: f64,
    /// Force history of this invocation (after any resume point).
    pub forces: Vec<ForceRecord>,
    pub reports: Vec<StepReport>,
    pub timing: TimingTable,
    pub couette: Option<ProfileError>,
    pub oscillation: Option<Oscillation>,
    pub final_state: FlowState,
}

pub fn resolve_out_dir(cfg: &CaseConfig, opts: &RunOptions) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

pub fn force_record(sim: &Simulation, cfg: &CaseConfig) -> ForceRecord {
    compute_force_coefficients(sim.state.f_tilde(), sim.time(), cfg.u_ref, cfg.length)
}

fn record_is_finite(r: &ForceRecord) -> bool {
    [r.fx, r.fy, r.cd, r.cl].iter().all(|x| x.is_finite())
}

/// Runs a case to `cfg.steps` total steps, writing `forces.csv`,
/// vorticity snapshots, checkpoints and `summary.txt` into the output
/// directory. Nothing is written unless setup succeeds.
pub fn run_case(cfg: &CaseConfig, opts: &RunOptions) -> Result<RunSummary> {
    if opts.threads > 1 {
        log::warn!("kernels run on one thread; --threads {} has no effect", opts.threads);
    }
    let mut timer = PhaseTimer::default();
    timer.start(0);
    let mut sim = build_simulation(cfg)?;
    if let Some(path) = &opts.resume {
        let (state, dt) = read_checkpoint(path)?;
        if dt != cfg.dt {
            return Err(Error::Format {
                path: path.display().to_string(),
                line: 2,
                msg: format!("checkpoint dt {dt} differs from the case dt {}", cfg.dt),
            });
        }
        sim.restore(state)?;
    }
    timer.stop(0);

    let out = resolve_out_dir(cfg, opts);
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    let forces_path = out.join("forces.csv");
    let file = std::fs::File::create(&forces_path).map_err(io_err(&forces_path))?;
    let mut forces_out = std::io::BufWriter::new(file);
    writeln!(forces_out, "t,fx,fy,cd,cl").map_err(io_err(&forces_path))?;

    let mut forces = Vec::new();
    let mut reports = Vec::new();
    log::info!(
        "{}: grid {}x{}, {} body points, coupled system {} rows ({} nonzeros)",
        cfg.name,
        sim.grid.nx,
        sim.grid.ny,
        sim.ops.n_b,
        sim.ops.lhs2.n_rows(),
        sim.ops.lhs2.nnz()
    );
    while sim.state.step_index < cfg.steps {
        let last_good = sim.state.clone();
        let step = sim.state.step_index + 1;
        let outcome = sim.advance(&mut timer).map_err(Error::Core).and_then(|rep| {
            let rec = force_record(&sim, cfg);
            if record_is_finite(&rec) && sim.state.q.iter().all(|x| x.is_finite()) {
                Ok((rep, rec))
            } else {
                Err(Error::Core(ibpm_core::Error::NonFinite("flow state")))
            }
        });
        let (rep, rec) = match outcome {
            Ok(v) => v,
            Err(e) => {
                forces_out.flush().map_err(io_err(&forces_path))?;
                let ck = out.join("checkpoint_last_good.txt");
                write_checkpoint(&ck, &last_good, cfg.dt)?;
                return Err(Error::Step {
                    step,
                    checkpoint: ck.display().to_string(),
                    source: Box::new(e),
                });
            }
        };
        timer.start(7);
        writeln!(forces_out, "{:e},{:e},{:e},{:e},{:e}", rec.t, rec.fx, rec.fy, rec.cd, rec.cl)
            .map_err(io_err(&forces_path))?;
        if cfg.vorticity && cfg.output_interval > 0 && step % cfg.output_interval == 0 {
            let w = compute_vorticity(&sim.grid, &sim.state.q);
            let p = out.join(format!("vorticity_{step:06}.txt"));
            write_atomic(&p, &vorticity_to_string(&w, rec.t))?;
        }
        if cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 {
            write_checkpoint(&out.join(format!("checkpoint_{step:06}.txt")), &sim.state, cfg.dt)?;
        }
        timer.stop(7);
        if step % 100 == 0 || step == cfg.steps {
            log::info!(
                "step {step} t = {:.4} cd = {:.4} cl = {:.4} iterations {}/{} cfl {:.2}",
                rec.t,
                rec.cd,
                rec.cl,
                rep.solve1.iterations,
                rep.solve2.iterations,
                rep.cfl
            );
        }
        forces.push(rec);
        reports.push(rep);
    }
    forces_out.flush().map_err(io_err(&forces_path))?;

    timer.start(7);
    write_checkpoint(&out.join("checkpoint_final.txt"), &sim.state, cfg.dt)?;
    let couette = match &cfg.couette {
        Some(c) => {
            write_atomic(&out.join("couette_profile.txt"), &couette_profile(&sim, c)?)?;
            Some(couette_error(
                &sim.grid,
                &sim.state.q,
                &sim.state.bv,
                c.center,
                c.omega,
                c.r_i,
                c.r_o,
                c.margin,
                c.rays,
                c.samples,
            )?)
        }
        None => None,
    };
    let t: Vec<f64> = forces.iter().map(|r| r.t).collect();
    let cl: Vec<f64> = forces.iter().map(|r| r.cl).collect();
    let oscillation = analyze_oscillation(&t, &cl, cfg.discard).ok();
    timer.stop(7);

    let timing = timer.table();
    let summary = RunSummary {
        out_dir: out.clone(),
        steps: sim.state.step_index,
        final_time: sim.time(),
        forces,
        reports,
        timing,
        couette,
        oscillation,
        final_state: sim.state.clone(),
    };
    write_atomic(&out.join("summary.txt"), &summary_text(cfg, &sim, &summary))?;
    Ok(summary)
}

/// `r u_theta exact` lines: the azimuthal velocity averaged over the
/// sampling rays against the analytic profile.
fn couette_profile(sim: &Simulation, c: &CouetteSpec) -> Result<String> {
    let mut out = String::from("r u_theta exact\n");
    let (r0, r1) = (c.r_i + c.margin, c.r_o - c.margin);
    for k in 0..c.samples {
        let r = r0 + (r1 - r0) * k as f64 / (c.samples - 1) as f64;
        let mut sum = 0.0;
        for ray in 0..c.rays {
            let th = 2.0 * std::f64::consts::PI * (ray as f64 + 0.25) / c.rays as f64;
            let (s, co) = th.sin_cos();
            let (u, v) = sample_velocity(
                &sim.grid,
                &sim.state.q,
                &sim.state.bv,
                c.center[0] + r * co,
                c.center[1] + r * s,
            );
            sum += -s * u + co * v;
        }
        let exact = couette_analytic(r, c.omega, c.r_i, c.r_o)?;
        writeln!(out, "{r:e} {:e} {exact:e}", sum / c.rays as f64).expect("string write");
    }
    Ok(out)
}

fn summary_text(cfg: &CaseConfig, sim: &Simulation, s: &RunSummary) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "case {}", cfg.name);
    let _ = writeln!(w, "grid {} x {} (h_min {})", sim.grid.nx, sim.grid.ny, sim.grid.h_min);
    let _ = writeln!(
        w,
        "unknowns: velocity {} coupled {} (nnz {})",
        sim.grid.n_q(),
        sim.ops.lhs2.n_rows(),
        sim.ops.lhs2.nnz()
    );
    if let Some(h) = sim.hierarchy() {
        let _ = writeln!(w, "sa levels {:?}", h.level_sizes());
    }
    let _ = writeln!(w, "hierarchy builds {}", sim.hierarchy_builds());
    let _ = writeln!(w, "steps {} final time {}", s.steps, s.final_time);
    if let Some(r) = s.forces.last() {
        let _ = writeln!(w, "final cd {} cl {}", r.cd, r.cl);
    }
    let it2: usize = s.reports.iter().map(|r| r.solve2.iterations).sum();
    if !s.reports.is_empty() {
        let _ = writeln!(w, "mean solve-2 iterations {:.2}", it2 as f64 / s.reports.len() as f64);
    }
    if let Some(c) = &s.couette {
        let _ = writeln!(w, "couette l2 {} linf {} samples {}", c.l2, c.linf, c.samples);
    }
    if let Some(o) = &s.oscillation {
        let _ = writeln!(
            w,
            "lift oscillation: frequency {} strouhal {} mean {} amplitude {} periods {}",
            o.frequency,
            o.frequency * cfg.length / cfg.u_ref,
            o.mean,
            o.amplitude,
            o.periods
        );
    }
    let _ = write!(w, "\n{}", s.timing);
    out
}
