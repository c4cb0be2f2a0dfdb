//! Discrete operators on the transformed (momentum-flux) unknowns.
//!
//! Every momentum row is multiplied by the width of its control volume in
//! the flow direction and every velocity is replaced by its flux
//! `q = R u` (`R` = transverse cell width). In these variables
//!
//! ```text
//!   M = diag(mx / dy | my / dx)      L symmetric
//!   D = −Gᵀ                          E = Ê R⁻¹,  (R M) H = Eᵀ diag(ds)
//! ```
//!
//! and the coupled momentum equation reads `A q + G φ + Eᵀ f̃ = r₁` with
//! `f̃_k` the force exerted by the body point `k` on the fluid, negated and
//! multiplied by its arc-length weight.

use alloc::vec;
use alloc::vec::Vec;

use crate::body::{delta_roma, LagrangianBody, DELTA_SUPPORT};
use crate::error::{Error, Result};
use crate::grid::StaggeredGrid;
use crate::sparse::{sliced_triple_product, spmm, CsrMatrix, TripleProductStats, Triplets};

/// Rows per slice of the `Qᵀ Bᴺ Q` product.
pub const DEFAULT_SLICE_ROWS: usize = 8192;

/// Condition on one velocity component along one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentBc {
    Dirichlet(f64),
    /// `∂u/∂t + c ∂u/∂n = 0` with `n` the outward normal and `c ≥ 0`.
    Convective(f64),
}

impl ComponentBc {
    pub fn is_convective(&self) -> bool {
        matches!(self, ComponentBc::Convective(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeBc {
    pub u: ComponentBc,
    pub v: ComponentBc,
}

impl EdgeBc {
    pub const NO_SLIP: EdgeBc = EdgeBc::dirichlet(0.0, 0.0);

    pub const fn dirichlet(u: f64, v: f64) -> Self {
        EdgeBc {
            u: ComponentBc::Dirichlet(u),
            v: ComponentBc::Dirichlet(v),
        }
    }

    pub const fn convective(speed: f64) -> Self {
        EdgeBc {
            u: ComponentBc::Convective(speed),
            v: ComponentBc::Convective(speed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    /// Sign of the outward normal along its axis.
    pub fn outward(self) -> f64 {
        match self {
            Edge::Left | Edge::Bottom => -1.0,
            Edge::Right | Edge::Top => 1.0,
        }
    }

    fn is_vertical(self) -> bool {
        matches!(self, Edge::Left | Edge::Right)
    }
}

/// Velocity conditions on the four edges of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    pub left: EdgeBc,
    pub right: EdgeBc,
    pub bottom: EdgeBc,
    pub top: EdgeBc,
}

impl BoundaryConditions {
    /// No-slip walls on all four sides.
    pub const CLOSED: BoundaryConditions = BoundaryConditions {
        left: EdgeBc::NO_SLIP,
        right: EdgeBc::NO_SLIP,
        bottom: EdgeBc::NO_SLIP,
        top: EdgeBc::NO_SLIP,
    };

    /// Uniform stream `(u_inf, 0)` entering on the left, free-stream values
    /// on the top and bottom and a convective outlet on the right.
    pub fn free_stream(u_inf: f64) -> Self {
        BoundaryConditions {
            left: EdgeBc::dirichlet(u_inf, 0.0),
            right: EdgeBc::convective(u_inf),
            bottom: EdgeBc::dirichlet(u_inf, 0.0),
            top: EdgeBc::dirichlet(u_inf, 0.0),
        }
    }

    pub fn edge(&self, e: Edge) -> &EdgeBc {
        match e {
            Edge::Left => &self.left,
            Edge::Right => &self.right,
            Edge::Bottom => &self.bottom,
            Edge::Top => &self.top,
        }
    }

    /// (normal, tangential) conditions of an edge.
    pub fn normal_tangential(&self, e: Edge) -> (ComponentBc, ComponentBc) {
        let b = self.edge(e);
        if e.is_vertical() {
            (b.u, b.v)
        } else {
            (b.v, b.u)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for e in Edge::ALL {
            let b = self.edge(e);
            for c in [b.u, b.v] {
                match c {
                    ComponentBc::Dirichlet(v) if !v.is_finite() => {
                        return Err(Error::InvalidParameter(alloc::format!("{e:?} edge value is not finite")))
                    }
                    ComponentBc::Convective(s) if !(s >= 0.0 && s.is_finite()) => {
                        return Err(Error::InvalidParameter(alloc::format!(
                            "{e:?} edge convective speed must be finite and non-negative"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn has_convective_edge(&self) -> bool {
        Edge::ALL.iter().any(|&e| {
            let b = self.edge(e);
            b.u.is_convective() || b.v.is_convective()
        })
    }
}

/// Boundary velocities along one edge. On the left/right edges `normal`
/// holds `u` at the `ny` edge faces and `tangential` holds `v` at the
/// `ny − 1` interior y-faces; top and bottom are the transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeValues {
    pub normal: Vec<f64>,
    pub tangential: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    pub left: EdgeValues,
    pub right: EdgeValues,
    pub bottom: EdgeValues,
    pub top: EdgeValues,
}

impl BoundaryValues {
    /// Initial boundary values: Dirichlet values, and for convective
    /// components the convective speed (normal) or zero (tangential).
    pub fn new(grid: &StaggeredGrid, bc: &BoundaryConditions) -> Self {
        let make = |e: Edge, n_normal: usize| {
            let (cn, ct) = bc.normal_tangential(e);
            let nv = match cn {
                ComponentBc::Dirichlet(v) | ComponentBc::Convective(v) => v,
            };
            let tv = match ct {
                ComponentBc::Dirichlet(v) => v,
                ComponentBc::Convective(_) => 0.0,
            };
            EdgeValues {
                normal: vec![nv; n_normal],
                tangential: vec![tv; n_normal - 1],
            }
        };
        BoundaryValues {
            left: make(Edge::Left, grid.ny),
            right: make(Edge::Right, grid.ny),
            bottom: make(Edge::Bottom, grid.nx),
            top: make(Edge::Top, grid.nx),
        }
    }

    pub fn edge(&self, e: Edge) -> &EdgeValues {
        match e {
            Edge::Left => &self.left,
            Edge::Right => &self.right,
            Edge::Bottom => &self.bottom,
            Edge::Top => &self.top,
        }
    }

    pub fn edge_mut(&mut self, e: Edge) -> &mut EdgeValues {
        match e {
            Edge::Left => &mut self.left,
            Edge::Right => &mut self.right,
            Edge::Bottom => &mut self.bottom,
            Edge::Top => &mut self.top,
        }
    }

    /// Resets every Dirichlet component to its prescribed value.
    pub fn apply_dirichlet(&mut self, bc: &BoundaryConditions) {
        for e in Edge::ALL {
            let (cn, ct) = bc.normal_tangential(e);
            let ev = self.edge_mut(e);
            if let ComponentBc::Dirichlet(v) = cn {
                ev.normal.iter_mut().for_each(|x| *x = v);
            }
            if let ComponentBc::Dirichlet(v) = ct {
                ev.tangential.iter_mut().for_each(|x| *x = v);
            }
        }
    }

    /// Net volume flux leaving the domain through its edges.
    pub fn net_outflow(&self, grid: &StaggeredGrid) -> f64 {
        Edge::ALL
            .iter()
            .map(|&e| {
                let w = edge_widths(grid, e);
                e.outward() * self.edge(e).normal.iter().zip(w).map(|(u, w)| u * w).sum::<f64>()
            })
            .sum()
    }

    /// First-order upwind update of every convective component,
    /// `u_b ← u_b − c Δt / Δn (u_b − u_interior)`, using the interior face
    /// velocities `vel` of the previous step. Returns the largest Courant
    /// number `c Δt / Δn` used.
    pub fn update_convective(&mut self, grid: &StaggeredGrid, bc: &BoundaryConditions, vel: &[f64], dt: f64) -> f64 {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut cfl: f64 = 0.0;
        for e in Edge::ALL {
            let (cn, ct) = bc.normal_tangential(e);
            // Distance from the edge to the adjacent normal and tangential
            // unknowns, and accessors for their interior values.
            let (dn, dt_dist): (f64, f64) = match e {
                Edge::Left => (grid.dx[0], 0.5 * grid.dx[0]),
                Edge::Right => (grid.dx[nx - 1], 0.5 * grid.dx[nx - 1]),
                Edge::Bottom => (grid.dy[0], 0.5 * grid.dy[0]),
                Edge::Top => (grid.dy[ny - 1], 0.5 * grid.dy[ny - 1]),
            };
            let interior_normal = |k: usize| -> f64 {
                match e {
                    Edge::Left => vel[grid.u_index(0, k)],
                    Edge::Right => vel[grid.u_index(nx - 2, k)],
                    Edge::Bottom => vel[grid.v_index(k, 0)],
                    Edge::Top => vel[grid.v_index(k, ny - 2)],
                }
            };
            let interior_tangential = |k: usize| -> f64 {
                match e {
                    Edge::Left => vel[grid.v_index(0, k)],
                    Edge::Right => vel[grid.v_index(nx - 1, k)],
                    Edge::Bottom => vel[grid.u_index(k, 0)],
                    Edge::Top => vel[grid.u_index(k, ny - 1)],
                }
            };
            let ev = self.edge_mut(e);
            if let ComponentBc::Convective(c) = cn {
                let nu = c * dt / dn;
                cfl = cfl.max(nu);
                for (k, ub) in ev.normal.iter_mut().enumerate() {
                    *ub -= nu * (*ub - interior_normal(k));
                }
            }
            if let ComponentBc::Convective(c) = ct {
                let nu = c * dt / dt_dist;
                cfl = cfl.max(nu);
                for (k, ub) in ev.tangential.iter_mut().enumerate() {
                    *ub -= nu * (*ub - interior_tangential(k));
                }
            }
        }
        cfl
    }

    /// Shifts the normal velocity on convective edges uniformly so the net
    /// outflow through all edges vanishes. Returns the shift applied, or
    /// `None` without a convective edge.
    pub fn balance_outflow(&mut self, grid: &StaggeredGrid, bc: &BoundaryConditions) -> Option<f64> {
        let length: f64 = Edge::ALL
            .iter()
            .filter(|&&e| bc.normal_tangential(e).0.is_convective())
            .map(|&e| edge_widths(grid, e).iter().sum::<f64>())
            .sum();
        if length == 0.0 {
            return None;
        }
        let shift = self.net_outflow(grid) / length;
        for e in Edge::ALL {
            if bc.normal_tangential(e).0.is_convective() {
                let s = e.outward() * shift;
                self.edge_mut(e).normal.iter_mut().for_each(|u| *u -= s);
            }
        }
        Some(shift)
    }
}

fn edge_widths(grid: &StaggeredGrid, e: Edge) -> &[f64] {
    if e.is_vertical() {
        &grid.dy
    } else {
        &grid.dx
    }
}

/// Diagonal of `M`: `mx / dy` on u rows, `my / dx` on v rows.
pub fn metric_diagonal(grid: &StaggeredGrid) -> Vec<f64> {
    let mut m = Vec::with_capacity(grid.n_q());
    for j in 0..grid.ny {
        for i in 0..grid.nx - 1 {
            m.push(grid.u_span(i) / grid.dy[j]);
        }
    }
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx {
            m.push(grid.v_span(j) / grid.dx[i]);
        }
    }
    m
}

/// Symmetric diffusion operator `L` acting on fluxes. Boundary neighbours
/// are omitted here; their contribution is [`diffusion_bc`].
pub fn assemble_diffusion(grid: &StaggeredGrid) -> CsrMatrix {
    let (nx, ny) = (grid.nx, grid.ny);
    let (dx, dy) = (&grid.dx, &grid.dy);
    let mut t = Triplets::with_capacity(grid.n_q(), grid.n_q(), 5 * grid.n_q());
    for j in 0..ny {
        for i in 0..nx - 1 {
            let row = grid.u_index(i, j);
            let mx = grid.u_span(i);
            let mut diag = -(1.0 / dx[i + 1] + 1.0 / dx[i]) / dy[j];
            if i + 1 < nx - 1 {
                t.push(row, grid.u_index(i + 1, j), 1.0 / (dx[i + 1] * dy[j]));
            }
            if i > 0 {
                t.push(row, grid.u_index(i - 1, j), 1.0 / (dx[i] * dy[j]));
            }
            if j + 1 < ny {
                let dyn_ = 0.5 * (dy[j] + dy[j + 1]);
                t.push(row, grid.u_index(i, j + 1), mx / (dy[j] * dyn_ * dy[j + 1]));
                diag -= mx / (dy[j] * dyn_ * dy[j]);
            } else {
                diag -= mx / (dy[j] * 0.5 * dy[j] * dy[j]);
            }
            if j > 0 {
                let dys = 0.5 * (dy[j] + dy[j - 1]);
                t.push(row, grid.u_index(i, j - 1), mx / (dy[j] * dys * dy[j - 1]));
                diag -= mx / (dy[j] * dys * dy[j]);
            } else {
                diag -= mx / (dy[j] * 0.5 * dy[j] * dy[j]);
            }
            t.push(row, row, diag);
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let row = grid.v_index(i, j);
            let my = grid.v_span(j);
            let mut diag = -(1.0 / dy[j + 1] + 1.0 / dy[j]) / dx[i];
            if j + 1 < ny - 1 {
                t.push(row, grid.v_index(i, j + 1), 1.0 / (dy[j + 1] * dx[i]));
            }
            if j > 0 {
                t.push(row, grid.v_index(i, j - 1), 1.0 / (dy[j] * dx[i]));
            }
            if i + 1 < nx {
                let dxe = 0.5 * (dx[i] + dx[i + 1]);
                t.push(row, grid.v_index(i + 1, j), my / (dx[i] * dxe * dx[i + 1]));
                diag -= my / (dx[i] * dxe * dx[i]);
            } else {
                diag -= my / (dx[i] * 0.5 * dx[i] * dx[i]);
            }
            if i > 0 {
                let dxw = 0.5 * (dx[i] + dx[i - 1]);
                t.push(row, grid.v_index(i - 1, j), my / (dx[i] * dxw * dx[i - 1]));
                diag -= my / (dx[i] * dxw * dx[i]);
            } else {
                diag -= my / (dx[i] * 0.5 * dx[i] * dx[i]);
            }
            t.push(row, row, diag);
        }
    }
    t.to_csr()
}

/// Boundary part of `L q` for the boundary velocities `bv`.
pub fn diffusion_bc(grid: &StaggeredGrid, bv: &BoundaryValues) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (dx, dy) = (&grid.dx, &grid.dy);
    let mut b = vec![0.0; grid.n_q()];
    for j in 0..ny {
        b[grid.u_index(0, j)] += bv.left.normal[j] / dx[0];
        b[grid.u_index(nx - 2, j)] += bv.right.normal[j] / dx[nx - 1];
    }
    for i in 0..nx - 1 {
        let mx = grid.u_span(i);
        b[grid.u_index(i, 0)] += mx * bv.bottom.tangential[i] / (dy[0] * 0.5 * dy[0]);
        b[grid.u_index(i, ny - 1)] += mx * bv.top.tangential[i] / (dy[ny - 1] * 0.5 * dy[ny - 1]);
    }
    for i in 0..nx {
        b[grid.v_index(i, 0)] += bv.bottom.normal[i] / dy[0];
        b[grid.v_index(i, ny - 2)] += bv.top.normal[i] / dy[ny - 1];
    }
    for j in 0..ny - 1 {
        let my = grid.v_span(j);
        b[grid.v_index(0, j)] += my * bv.left.tangential[j] / (dx[0] * 0.5 * dx[0]);
        b[grid.v_index(nx - 1, j)] += my * bv.right.tangential[j] / (dx[nx - 1] * 0.5 * dx[nx - 1]);
    }
    b
}

/// Gradient `G` (`n_q × n_p`, pressure differences across each face) and
/// divergence `D = −Gᵀ` (net flux out of each cell).
pub fn assemble_grad_div(grid: &StaggeredGrid) -> (CsrMatrix, CsrMatrix) {
    let mut t = Triplets::with_capacity(grid.n_q(), grid.n_p(), 2 * grid.n_q());
    for j in 0..grid.ny {
        for i in 0..grid.nx - 1 {
            let row = grid.u_index(i, j);
            t.push(row, grid.p_index(i + 1, j), 1.0);
            t.push(row, grid.p_index(i, j), -1.0);
        }
    }
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx {
            let row = grid.v_index(i, j);
            t.push(row, grid.p_index(i, j + 1), 1.0);
            t.push(row, grid.p_index(i, j), -1.0);
        }
    }
    let g = t.to_csr();
    let d = g.transpose().scaled(-1.0);
    (g, d)
}

/// Right-hand side of `D q = bc2`: minus the boundary outflow of each cell.
pub fn divergence_bc(grid: &StaggeredGrid, bv: &BoundaryValues) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut b = vec![0.0; grid.n_p()];
    for j in 0..ny {
        b[grid.p_index(0, j)] += bv.left.normal[j] * grid.dy[j];
        b[grid.p_index(nx - 1, j)] -= bv.right.normal[j] * grid.dy[j];
    }
    for i in 0..nx {
        b[grid.p_index(i, 0)] += bv.bottom.normal[i] * grid.dx[i];
        b[grid.p_index(i, ny - 1)] -= bv.top.normal[i] * grid.dx[i];
    }
    b
}

/// Total number of Lagrangian points over all bodies.
pub fn total_points(bodies: &[LagrangianBody]) -> usize {
    bodies.iter().map(|b| b.len()).sum()
}

/// Prescribed boundary velocities `u_B`: all x components, then all y.
pub fn body_velocities(bodies: &[LagrangianBody]) -> Vec<f64> {
    let n_b = total_points(bodies);
    let mut ub = vec![0.0; 2 * n_b];
    for (k, v) in bodies.iter().flat_map(|b| b.velocities.iter()).enumerate() {
        ub[k] = v[0];
        ub[n_b + k] = v[1];
    }
    ub
}

/// Visits every velocity node in the delta support of `(x, y)`:
/// `f(q_index, dx_dy_weight, d(x_i − ξ) d(y_i − η))`, u block first.
fn for_each_support_node(grid: &StaggeredGrid, p: [f64; 2], mut f: impl FnMut(usize, bool, f64, f64)) {
    let h = grid.h_min;
    let reach = DELTA_SUPPORT * h;
    let ic = StaggeredGrid::locate(&grid.x_faces, p[0]);
    let jc = StaggeredGrid::locate(&grid.y_faces, p[1]);
    let i_range = ic.saturating_sub(3)..(ic + 4);
    let j_range = jc.saturating_sub(3)..(jc + 4);
    for j in j_range.clone().filter(|&j| j < grid.ny) {
        let wy = delta_roma(grid.yc[j] - p[1], h);
        if wy == 0.0 || (grid.yc[j] - p[1]).abs() >= reach {
            continue;
        }
        for i in i_range.clone().filter(|&i| i + 1 < grid.nx) {
            let wx = delta_roma(grid.x_faces[i + 1] - p[0], h);
            if wx != 0.0 {
                f(grid.u_index(i, j), true, grid.u_span(i) * grid.dy[j], wx * wy);
            }
        }
    }
    for j in j_range.filter(|&j| j + 1 < grid.ny) {
        let wy = delta_roma(grid.y_faces[j + 1] - p[1], h);
        if wy == 0.0 {
            continue;
        }
        for i in i_range.clone().filter(|&i| i < grid.nx) {
            let wx = delta_roma(grid.xc[i] - p[0], h);
            if wx != 0.0 {
                f(grid.v_index(i, j), false, grid.dx[i] * grid.v_span(j), wx * wy);
            }
        }
    }
}

fn check_bodies(grid: &StaggeredGrid, bodies: &[LagrangianBody]) -> Result<()> {
    for (b, body) in bodies.iter().enumerate() {
        body.check_support(grid, b)?;
    }
    Ok(())
}

/// Velocity-form interpolation `Ê` (`2 n_b × n_q`):
/// `Ê_{k,i} = Δx Δy d(x_i − ξ_k) d(y_i − η_k)`, acting on face velocities.
pub fn assemble_interpolation_velocity(grid: &StaggeredGrid, bodies: &[LagrangianBody]) -> Result<CsrMatrix> {
    check_bodies(grid, bodies)?;
    let n_b = total_points(bodies);
    let mut t = Triplets::with_capacity(2 * n_b, grid.n_q(), 18 * n_b);
    for (k, p) in bodies.iter().flat_map(|b| b.points.iter()).enumerate() {
        for_each_support_node(grid, *p, |col, is_u, area, w| {
            t.push(if is_u { k } else { n_b + k }, col, area * w);
        });
    }
    Ok(t.to_csr())
}

/// Interpolation on fluxes, `E = Ê R⁻¹`.
pub fn assemble_interpolation(grid: &StaggeredGrid, bodies: &[LagrangianBody]) -> Result<CsrMatrix> {
    Ok(assemble_interpolation_velocity(grid, bodies)?.scale_cols(&inverse(&grid.flux_scale())))
}

/// Regularization `H` (`n_q × 2 n_b`), `H_{i,k} = d(x_i − ξ_k) d(y_i − η_k) ds_k`:
/// spreads point forces to a force density on the faces.
pub fn assemble_regularization(grid: &StaggeredGrid, bodies: &[LagrangianBody]) -> Result<CsrMatrix> {
    check_bodies(grid, bodies)?;
    let n_b = total_points(bodies);
    let mut t = Triplets::with_capacity(grid.n_q(), 2 * n_b, 18 * n_b);
    let weights = bodies.iter().flat_map(|b| b.weights.iter());
    for (k, (p, ds)) in bodies.iter().flat_map(|b| b.points.iter()).zip(weights).enumerate() {
        for_each_support_node(grid, *p, |row, is_u, _, w| {
            t.push(row, if is_u { k } else { n_b + k }, w * ds);
        });
    }
    Ok(t.to_csr())
}

fn inverse(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| 1.0 / x).collect()
}

/// `A = M/Δt − (ν/2) L`.
pub fn assemble_implicit(m: &[f64], l: &CsrMatrix, dt: f64, nu: f64) -> Result<CsrMatrix> {
    let mdt: Vec<f64> = m.iter().map(|x| x / dt).collect();
    CsrMatrix::diagonal(&mdt).add(1.0, l, -0.5 * nu)
}

/// `Bᴺ = Δt M⁻¹ Σ_{j<N} ((ν Δt / 2) L M⁻¹)^j`.
pub fn assemble_bn(m: &[f64], l: &CsrMatrix, dt: f64, nu: f64, n_order: usize) -> Result<CsrMatrix> {
    if !(1..=3).contains(&n_order) {
        return Err(Error::InvalidParameter(alloc::format!(
            "approximate-inverse order must be 1, 2 or 3 (got {n_order})"
        )));
    }
    let m_inv = inverse(m);
    let n = m.len();
    let x = l.scale_cols(&m_inv).scaled(0.5 * nu * dt);
    let mut sum = CsrMatrix::identity(n);
    let mut power = CsrMatrix::identity(n);
    for _ in 1..n_order {
        power = spmm(&power, &x)?;
        sum = sum.add(1.0, &power, 1.0)?;
    }
    let scale: Vec<f64> = m_inv.iter().map(|v| dt * v).collect();
    Ok(sum.scale_rows(&scale))
}

/// Pre-pinning `Qᵀ Bᴺ Q` built slice by slice.
pub fn coupled_matrix(qt: &CsrMatrix, bn: &CsrMatrix, q: &CsrMatrix, slice_rows: usize) -> Result<(CsrMatrix, TripleProductStats)> {
    sliced_triple_product(qt, bn, q, slice_rows)
}

/// Physical and numerical constants of an operator set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorParams {
    pub dt: f64,
    pub nu: f64,
    pub n_order: usize,
    /// Pressure cell whose row and column are pinned in `lhs2`.
    pub pin: usize,
    pub slice_rows: usize,
}

impl OperatorParams {
    pub fn new(dt: f64, nu: f64) -> Self {
        OperatorParams {
            dt,
            nu,
            n_order: 1,
            pin: 0,
            slice_rows: DEFAULT_SLICE_ROWS,
        }
    }

    pub fn validate(&self, grid: &StaggeredGrid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter("nu must be positive".into()));
        }
        if self.pin >= grid.n_p() {
            return Err(Error::InvalidParameter(alloc::format!(
                "pinned cell {} outside 0..{}",
                self.pin,
                grid.n_p()
            )));
        }
        if self.slice_rows == 0 {
            return Err(Error::InvalidParameter("slice_rows must be positive".into()));
        }
        Ok(())
    }
}

/// Every operator of one time-step configuration.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub params: OperatorParams,
    pub n_p: usize,
    pub n_b: usize,
    pub m: Vec<f64>,
    pub m_inv: Vec<f64>,
    pub l: CsrMatrix,
    pub g: CsrMatrix,
    pub d: CsrMatrix,
    pub e: CsrMatrix,
    pub h: CsrMatrix,
    pub a: CsrMatrix,
    pub bn: CsrMatrix,
    pub q: CsrMatrix,
    pub qt: CsrMatrix,
    pub lhs2: CsrMatrix,
    pub triple_stats: TripleProductStats,
}

impl OperatorSet {
    pub fn assemble(grid: &StaggeredGrid, bodies: &[LagrangianBody], params: OperatorParams) -> Result<Self> {
        params.validate(grid)?;
        let m = metric_diagonal(grid);
        let m_inv = inverse(&m);
        let l = assemble_diffusion(grid);
        let (g, d) = assemble_grad_div(grid);
        let a = assemble_implicit(&m, &l, params.dt, params.nu)?;
        let bn = assemble_bn(&m, &l, params.dt, params.nu, params.n_order)?;
        let mut ops = OperatorSet {
            params,
            n_p: grid.n_p(),
            n_b: 0,
            m,
            m_inv,
            l,
            g,
            d,
            e: CsrMatrix::zeros(0, grid.n_q()),
            h: CsrMatrix::zeros(grid.n_q(), 0),
            a,
            bn,
            q: CsrMatrix::zeros(0, 0),
            qt: CsrMatrix::zeros(0, 0),
            lhs2: CsrMatrix::zeros(0, 0),
            triple_stats: TripleProductStats::default(),
        };
        ops.update_bodies(grid, bodies)?;
        Ok(ops)
    }

    /// Rebuilds the body-dependent operators `E`, `H`, `Q`, `Qᵀ` and `lhs2`
    /// for the current body positions.
    pub fn update_bodies(&mut self, grid: &StaggeredGrid, bodies: &[LagrangianBody]) -> Result<()> {
        self.e = assemble_interpolation(grid, bodies)?;
        self.h = assemble_regularization(grid, bodies)?;
        self.n_b = total_points(bodies);
        self.q = self.g.hstack(&self.e.transpose())?;
        self.qt = self.q.transpose();
        let (c, stats) = coupled_matrix(&self.qt, &self.bn, &self.q, self.params.slice_rows)?;
        self.lhs2 = c.pin(self.params.pin);
        self.triple_stats = stats;
        Ok(())
    }

    pub fn n_q(&self) -> usize {
        self.m.len()
    }

    /// Dimension of `lhs2`, `n_p + 2 n_b`.
    pub fn lhs2_dim(&self) -> usize {
        self.n_p + 2 * self.n_b
    }
}
