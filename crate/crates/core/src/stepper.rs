//! Time integration: Adams–Bashforth convection, Crank–Nicolson diffusion
//! and the three-stage projection onto the divergence-free, no-slip
//! subspace.

use alloc::vec;
use alloc::vec::Vec;

use crate::body::LagrangianBody;
use crate::error::{Error, Result};
use crate::grid::StaggeredGrid;
use crate::krylov::{
    build_sa_hierarchy, diagonal_preconditioner, pcg, solve_with, DiagonalPreconditioner, SaHierarchy, SaParams,
    SolveReport, SolverKind, SolverParams,
};
use crate::math::{norm2, norm_inf};
use crate::operators::{
    body_velocities, diffusion_bc, divergence_bc, BoundaryConditions, BoundaryValues, OperatorParams, OperatorSet,
    DEFAULT_SLICE_ROWS,
};

/// Explicit convection term `N(q)`: conservative central differences of
/// `∇·(u u)` at every velocity node, scaled like the momentum rows.
pub fn compute_convection(grid: &StaggeredGrid, q: &[f64], bv: &BoundaryValues) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let vel = grid.velocities(q);
    let u = |i: usize, j: usize| vel[grid.u_index(i, j)];
    let v = |i: usize, j: usize| vel[grid.v_index(i, j)];
    // u on the vertical line x_faces[a] at cell row j.
    let u_col = |a: usize, j: usize| {
        if a == 0 {
            bv.left.normal[j]
        } else if a == nx {
            bv.right.normal[j]
        } else {
            u(a - 1, j)
        }
    };
    // v on the horizontal line y_faces[b] at cell column i.
    let v_row = |i: usize, b: usize| {
        if b == 0 {
            bv.bottom.normal[i]
        } else if b == ny {
            bv.top.normal[i]
        } else {
            v(i, b - 1)
        }
    };
    let u_vertex = |a: usize, b: usize| {
        if b == 0 {
            bv.bottom.tangential[a - 1]
        } else if b == ny {
            bv.top.tangential[a - 1]
        } else {
            let (d0, d1) = (grid.dy[b - 1], grid.dy[b]);
            (u_col(a, b - 1) * d1 + u_col(a, b) * d0) / (d0 + d1)
        }
    };
    let v_vertex = |a: usize, b: usize| {
        if a == 0 {
            bv.left.tangential[b - 1]
        } else if a == nx {
            bv.right.tangential[b - 1]
        } else {
            let (d0, d1) = (grid.dx[a - 1], grid.dx[a]);
            (v_row(a - 1, b) * d1 + v_row(a, b) * d0) / (d0 + d1)
        }
    };
    let mut n = vec![0.0; grid.n_q()];
    for j in 0..ny {
        for i in 0..nx - 1 {
            let mx = grid.u_span(i);
            let ue = 0.5 * (u_col(i + 1, j) + u_col(i + 2, j));
            let uw = 0.5 * (u_col(i, j) + u_col(i + 1, j));
            let uv_n = u_vertex(i + 1, j + 1) * v_vertex(i + 1, j + 1);
            let uv_s = u_vertex(i + 1, j) * v_vertex(i + 1, j);
            let conv = (ue * ue - uw * uw) / mx + (uv_n - uv_s) / grid.dy[j];
            n[grid.u_index(i, j)] = mx * conv;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let my = grid.v_span(j);
            let vn = 0.5 * (v_row(i, j + 1) + v_row(i, j + 2));
            let vs = 0.5 * (v_row(i, j) + v_row(i, j + 1));
            let uv_e = u_vertex(i + 1, j + 1) * v_vertex(i + 1, j + 1);
            let uv_w = u_vertex(i, j + 1) * v_vertex(i, j + 1);
            let conv = (uv_e - uv_w) / grid.dx[i] + (vn * vn - vs * vs) / my;
            n[grid.v_index(i, j)] = my * conv;
        }
    }
    n
}

/// Right-hand side of the momentum solve,
/// `(M/Δt + ν/2 L) qⁿ − 3/2 Nⁿ + 1/2 Nⁿ⁻¹ + ν/2 (bcⁿ + bcⁿ⁺¹)`.
/// Without `conv_prev` the convection term is forward Euler.
pub fn compute_rhs1(
    ops: &OperatorSet,
    q: &[f64],
    conv: &[f64],
    conv_prev: Option<&[f64]>,
    bc_old: &[f64],
    bc_new: &[f64],
) -> Vec<f64> {
    let (dt, nu) = (ops.params.dt, ops.params.nu);
    let mut r = vec![0.0; q.len()];
    ops.l.mul_vec_into(q, &mut r);
    for k in 0..q.len() {
        let explicit = match conv_prev {
            Some(p) => 1.5 * conv[k] - 0.5 * p[k],
            None => conv[k],
        };
        r[k] = ops.m[k] / dt * q[k] + 0.5 * nu * r[k] - explicit + 0.5 * nu * (bc_old[k] + bc_new[k]);
    }
    r
}

/// Advances the boundary values from `tⁿ` to `tⁿ⁺¹`: Dirichlet values are
/// reimposed, convective edges take an upwind step from the velocities of
/// `q` and the outflow is shifted to conserve mass. Returns the largest
/// Courant number of the convective update.
pub fn apply_velocity_bcs(grid: &StaggeredGrid, bc: &BoundaryConditions, bv: &mut BoundaryValues, q: &[f64], dt: f64) -> f64 {
    bv.apply_dirichlet(bc);
    let cfl = bv.update_convective(grid, bc, &grid.velocities(q), dt);
    if cfl > 1.0 {
        log::warn!("convective outflow update has Courant number {cfl:.3} > 1");
    }
    bv.balance_outflow(grid, bc);
    cfl
}

/// Flow variables carried from one step to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub q: Vec<f64>,
    pub conv_prev: Option<Vec<f64>>,
    /// `(φ, f̃)`; `f̃` lists all x components, then all y.
    pub lambda: Vec<f64>,
    pub bv: BoundaryValues,
    pub t0: f64,
    pub step_index: usize,
    pub n_p: usize,
}

impl FlowState {
    pub fn new(grid: &StaggeredGrid, bc: &BoundaryConditions, q: Vec<f64>, n_b: usize, t0: f64) -> Self {
        FlowState {
            q,
            conv_prev: None,
            lambda: vec![0.0; grid.n_p() + 2 * n_b],
            bv: BoundaryValues::new(grid, bc),
            t0,
            step_index: 0,
            n_p: grid.n_p(),
        }
    }

    /// Time of the current state, `t0 + step_index Δt`.
    pub fn time(&self, dt: f64) -> f64 {
        self.t0 + self.step_index as f64 * dt
    }

    pub fn phi(&self) -> &[f64] {
        &self.lambda[..self.n_p]
    }

    pub fn f_tilde(&self) -> &[f64] {
        &self.lambda[self.n_p..]
    }

    /// `φ` with its mean removed.
    pub fn pressure(&self) -> Vec<f64> {
        let phi = self.phi();
        let mean = phi.iter().sum::<f64>() / phi.len() as f64;
        phi.iter().map(|p| p - mean).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteppingParams {
    pub dt: f64,
    pub nu: f64,
    pub n_order: usize,
    /// Rebuild the SA hierarchy of a moving-body case every `n_pc` steps.
    pub n_pc: usize,
    pub solve1: SolverParams,
    pub solve2: SolverParams,
    pub solver2: SolverKind,
    pub sa: SaParams,
    /// Extra solves with a ten times smaller tolerance allowed when a step
    /// misses its divergence or no-slip bound.
    pub max_tightenings: usize,
    /// Row-slice size of the coupled-matrix triple product.
    pub slice_rows: usize,
}

impl SteppingParams {
    pub fn new(dt: f64, nu: f64) -> Self {
        SteppingParams {
            dt,
            nu,
            n_order: 1,
            n_pc: 2,
            solve1: SolverParams::default(),
            solve2: SolverParams::default(),
            solver2: SolverKind::PcgSmoothedAggregation,
            sa: SaParams::default(),
            max_tightenings: 3,
            slice_rows: DEFAULT_SLICE_ROWS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if self.n_pc == 0 {
            return Err(Error::InvalidParameter("n_pc must be at least 1".into()));
        }
        self.solve1.validate()?;
        self.solve2.validate()
    }

    pub fn operator_params(&self) -> OperatorParams {
        OperatorParams {
            n_order: self.n_order,
            slice_rows: self.slice_rows,
            ..OperatorParams::new(self.dt, self.nu)
        }
    }
}

/// How operators and the SA hierarchy follow a moving body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefreshPolicy {
    /// Update body operators in place every step and rebuild the hierarchy
    /// when `step_index % n_pc == 0`.
    Reuse,
    /// Reassemble every operator and the hierarchy from scratch every step.
    AlwaysRebuild,
}

/// Phases reported to a [`StepObserver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Assembly,
    Explicit,
    Solve1,
    Solve2,
    Projection,
    Preconditioner,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Assembly,
        Phase::Explicit,
        Phase::Solve1,
        Phase::Solve2,
        Phase::Projection,
        Phase::Preconditioner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Assembly => "assembly",
            Phase::Explicit => "explicit terms",
            Phase::Solve1 => "solve 1",
            Phase::Solve2 => "solve 2",
            Phase::Projection => "projection",
            Phase::Preconditioner => "preconditioner build",
        }
    }
}

/// Receives phase boundaries, e.g. to time them.
pub trait StepObserver {
    fn enter(&mut self, phase: Phase);
    fn leave(&mut self, phase: Phase);
}

pub struct NoObserver;

impl StepObserver for NoObserver {
    fn enter(&mut self, _: Phase) {}
    fn leave(&mut self, _: Phase) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step_index: usize,
    pub t: f64,
    pub solve1: SolveReport,
    pub solve2: SolveReport,
    pub cfl: f64,
    /// `‖D q − bc2‖₂ / max(1, ‖bc2‖₂)`.
    pub divergence_residual: f64,
    /// `‖E q − u_B‖∞ / max(1, ‖u_B‖∞)`.
    pub slip_residual: f64,
    pub operators_refreshed: bool,
    pub hierarchy_rebuilt: bool,
    pub tightenings: usize,
}

/// A flow problem and its solver state.
pub struct Simulation {
    pub grid: StaggeredGrid,
    pub bodies: Vec<LagrangianBody>,
    pub bc: BoundaryConditions,
    pub params: SteppingParams,
    pub policy: RefreshPolicy,
    pub ops: OperatorSet,
    pub state: FlowState,
    diag_a: DiagonalPreconditioner,
    hierarchy: Option<SaHierarchy>,
    hierarchy_builds: usize,
}

impl Simulation {
    /// Sets up a run starting from the velocity field `q0` (fluxes) at `t0`.
    pub fn new(
        grid: StaggeredGrid,
        mut bodies: Vec<LagrangianBody>,
        bc: BoundaryConditions,
        params: SteppingParams,
        q0: Vec<f64>,
        t0: f64,
    ) -> Result<Self> {
        params.validate()?;
        bc.validate()?;
        if q0.len() != grid.n_q() {
            return Err(Error::DimensionMismatch {
                op: "initial field",
                expected: grid.n_q(),
                found: q0.len(),
            });
        }
        for b in &mut bodies {
            b.motion.validate()?;
            b.move_to(t0);
        }
        let ops = OperatorSet::assemble(&grid, &bodies, params.operator_params())?;
        let diag_a = diagonal_preconditioner(&ops.a)?;
        let state = FlowState::new(&grid, &bc, q0, ops.n_b, t0);
        let mut sim = Simulation {
            grid,
            bodies,
            bc,
            params,
            policy: RefreshPolicy::Reuse,
            ops,
            state,
            diag_a,
            hierarchy: None,
            hierarchy_builds: 0,
        };
        sim.build_hierarchy(&mut NoObserver)?;
        Ok(sim)
    }

    /// Uniform stream `(u_inf, 0)` as an initial flux field.
    pub fn uniform_flow(grid: &StaggeredGrid, u_inf: f64) -> Vec<f64> {
        grid.sample_fluxes(|_, _| (u_inf, 0.0))
    }

    /// Whether any body can move during the step ending at `t`.
    pub fn moving_at(&self, t: f64) -> bool {
        let t_prev = t - self.params.dt;
        self.bodies
            .iter()
            .any(|b| b.motion.is_moving_at(t) || b.motion.is_moving_at(t_prev))
    }

    /// Whether any body moves at some point of the run.
    pub fn has_moving_body(&self) -> bool {
        self.bodies.iter().any(|b| b.motion.is_moving_at(f64::NEG_INFINITY) || b.motion.nudge.is_some())
    }

    pub fn hierarchy(&self) -> Option<&SaHierarchy> {
        self.hierarchy.as_ref()
    }

    /// Number of SA hierarchies built so far.
    pub fn hierarchy_builds(&self) -> usize {
        self.hierarchy_builds
    }

    pub fn time(&self) -> f64 {
        self.state.time(self.params.dt)
    }

    fn build_hierarchy(&mut self, obs: &mut dyn StepObserver) -> Result<()> {
        if !self.params.solver2.needs_hierarchy() {
            return Ok(());
        }
        obs.enter(Phase::Preconditioner);
        let h = build_sa_hierarchy(&self.ops.lhs2, &self.params.sa);
        obs.leave(Phase::Preconditioner);
        let mut h = h?;
        h.built_at = Some(self.state.step_index);
        self.hierarchy = Some(h);
        self.hierarchy_builds += 1;
        Ok(())
    }

    /// Moves the bodies to `t` and brings the operators (and, per policy,
    /// the hierarchy) up to date. Returns (operators refreshed, hierarchy
    /// rebuilt).
    pub fn refresh_for_motion(&mut self, t: f64, obs: &mut dyn StepObserver) -> Result<(bool, bool)> {
        if !self.moving_at(t) {
            return Ok((false, false));
        }
        obs.enter(Phase::Assembly);
        for b in &mut self.bodies {
            b.move_to(t);
        }
        let r = match self.policy {
            RefreshPolicy::Reuse => self.ops.update_bodies(&self.grid, &self.bodies),
            RefreshPolicy::AlwaysRebuild => {
                OperatorSet::assemble(&self.grid, &self.bodies, self.params.operator_params()).map(|ops| self.ops = ops)
            }
        };
        obs.leave(Phase::Assembly);
        r?;
        let rebuild = match self.policy {
            RefreshPolicy::Reuse => self.state.step_index % self.params.n_pc == 0,
            RefreshPolicy::AlwaysRebuild => true,
        };
        if rebuild {
            self.build_hierarchy(obs)?;
        }
        Ok((true, rebuild))
    }

    /// Replaces the flow state, e.g. from a checkpoint. The hierarchy is
    /// rebuilt at the body position it had when an uninterrupted run last
    /// built it, so the continuation is exact.
    pub fn restore(&mut self, state: FlowState) -> Result<()> {
        if state.q.len() != self.grid.n_q() || state.lambda.len() != self.ops.lhs2_dim() {
            return Err(Error::DimensionMismatch {
                op: "restored state",
                expected: self.grid.n_q() + self.ops.lhs2_dim(),
                found: state.q.len() + state.lambda.len(),
            });
        }
        let n = state.step_index;
        self.state = state;
        if !self.has_moving_body() || n == 0 {
            return Ok(());
        }
        let t_of = |s: usize, st: &FlowState, dt: f64| st.t0 + s as f64 * dt;
        let dt = self.params.dt;
        let last_build = (0..n).rev().find(|&s| {
            let due = match self.policy {
                RefreshPolicy::Reuse => s % self.params.n_pc == 0,
                RefreshPolicy::AlwaysRebuild => true,
            };
            due && self.moving_at(t_of(s + 1, &self.state, dt))
        });
        if let Some(s) = last_build {
            let t = t_of(s + 1, &self.state, dt);
            for b in &mut self.bodies {
                b.move_to(t);
            }
            self.ops.update_bodies(&self.grid, &self.bodies)?;
            let saved = self.state.step_index;
            self.state.step_index = s;
            self.build_hierarchy(&mut NoObserver)?;
            self.state.step_index = saved;
        }
        let t_now = self.state.time(dt);
        for b in &mut self.bodies {
            b.move_to(t_now);
        }
        self.ops.update_bodies(&self.grid, &self.bodies)
    }

    /// Advances one time step. On error the state is left unchanged.
    pub fn advance(&mut self, obs: &mut dyn StepObserver) -> Result<StepReport> {
        let dt = self.params.dt;
        let t_new = self.state.t0 + (self.state.step_index + 1) as f64 * dt;
        let (refreshed, rebuilt) = self.refresh_for_motion(t_new, obs)?;

        obs.enter(Phase::Explicit);
        let q_n = &self.state.q;
        let conv = compute_convection(&self.grid, q_n, &self.state.bv);
        let mut bv_new = self.state.bv.clone();
        let cfl = apply_velocity_bcs(&self.grid, &self.bc, &mut bv_new, q_n, dt);
        let bc_old = diffusion_bc(&self.grid, &self.state.bv);
        let bc_new = diffusion_bc(&self.grid, &bv_new);
        let r1 = compute_rhs1(&self.ops, q_n, &conv, self.state.conv_prev.as_deref(), &bc_old, &bc_new);
        obs.leave(Phase::Explicit);

        obs.enter(Phase::Solve1);
        let s1 = pcg(&self.ops.a, &r1, q_n, &self.diag_a, &self.params.solve1);
        obs.leave(Phase::Solve1);
        let (q_star, rep1) = s1?;
        let rep1 = rep1.into_result()?;

        let bc2 = divergence_bc(&self.grid, &bv_new);
        let ub = body_velocities(&self.bodies);
        let n_p = self.ops.n_p;
        let mut rhs2 = self.ops.qt.spmv(&q_star)?;
        for k in 0..n_p {
            rhs2[k] += bc2[k];
        }
        for (k, u) in ub.iter().enumerate() {
            rhs2[n_p + k] -= u;
        }
        rhs2[self.ops.params.pin] = 0.0;

        let bc2_scale = norm2(&bc2).max(1.0);
        let ub_scale = norm_inf(&ub).max(1.0);
        let target = 10.0 * self.params.solve2.rel_tol;
        let mut solve2 = self.params.solve2;
        let mut lambda = self.state.lambda.clone();
        lambda[self.ops.params.pin] = 0.0;
        let mut tightenings = 0;
        let mut total2 = SolveReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            history: Vec::new(),
        };
        loop {
            obs.enter(Phase::Solve2);
            let s2 = solve_with(
                self.params.solver2,
                &self.ops.lhs2,
                &rhs2,
                &lambda,
                &solve2,
                None,
                self.hierarchy.as_ref(),
            );
            obs.leave(Phase::Solve2);
            let (l, rep2) = s2?;
            let rep2 = rep2.into_result()?;
            lambda = l;
            total2.iterations += rep2.iterations;
            total2.relative_residual = rep2.relative_residual;
            total2.history.extend(rep2.history);

            obs.enter(Phase::Projection);
            let y = self.ops.q.spmv(&lambda)?;
            let corr = self.ops.bn.spmv(&y)?;
            let q_new: Vec<f64> = q_star.iter().zip(&corr).map(|(a, b)| a - b).collect();
            obs.leave(Phase::Projection);
            if q_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("velocity flux after projection"));
            }

            let mut div = self.ops.d.spmv(&q_new)?;
            for (d, b) in div.iter_mut().zip(&bc2) {
                *d -= b;
            }
            let div_res = norm2(&div) / bc2_scale;
            let mut slip = self.ops.e.spmv(&q_new)?;
            for (s, u) in slip.iter_mut().zip(&ub) {
                *s -= u;
            }
            let slip_res = norm_inf(&slip) / ub_scale;

            let ok = div_res <= target && slip_res <= target;
            if ok || tightenings >= self.params.max_tightenings {
                if !ok {
                    log::warn!(
                        "step {}: constraint residuals {div_res:.2e} (divergence) {slip_res:.2e} (no-slip) above {target:.0e}",
                        self.state.step_index
                    );
                }
                let report = StepReport {
                    step_index: self.state.step_index,
                    t: t_new,
                    solve1: rep1,
                    solve2: total2,
                    cfl,
                    divergence_residual: div_res,
                    slip_residual: slip_res,
                    operators_refreshed: refreshed,
                    hierarchy_rebuilt: rebuilt,
                    tightenings,
                };
                self.state.q = q_new;
                self.state.conv_prev = Some(conv);
                self.state.lambda = lambda;
                self.state.bv = bv_new;
                self.state.step_index += 1;
                return Ok(report);
            }
            tightenings += 1;
            solve2.rel_tol *= 0.1;
        }
    }

    /// Runs `n` steps, stopping at the first failure.
    pub fn run(&mut self, n: usize, obs: &mut dyn StepObserver) -> Result<Vec<StepReport>> {
        (0..n).map(|_| self.advance(obs)).collect()
    }
}
