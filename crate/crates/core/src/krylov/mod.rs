//! Conjugate gradients, with and without preconditioning.

mod amg;
mod dense;

use alloc::vec;
use alloc::vec::Vec;

pub use amg::{build_sa_hierarchy, SaHierarchy, SaLevel, SaParams};
pub use dense::DenseCholesky;

use crate::error::{Error, Result};
use crate::math::{axpy, dot, norm2, sqrt};
use crate::sparse::CsrMatrix;

/// Stopping rule and bookkeeping switches for an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Stop when `‖b − A x‖₂ ≤ rel_tol · ‖b‖₂`.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Keep the relative residual of every iteration.
    pub record_history: bool,
    /// Verify `max |A − Aᵀ| ≤ 1e-12 max |A|` before iterating.
    pub check_symmetry: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            rel_tol: 1e-5,
            max_iters: 5000,
            record_history: false,
            check_symmetry: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidParameter("rel_tol must lie in (0, 1)".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl SolveReport {
    /// Turns a non-converged report into an error.
    pub fn into_result(self) -> Result<SolveReport> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                relative_residual: self.relative_residual,
            })
        }
    }
}

/// Linear operator `z = M⁻¹ r` applied once per PCG iteration.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Jacobi preconditioner `z_i = r_i / A_ii`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPreconditioner {
    inv_diag: Vec<f64>,
}

pub fn diagonal_preconditioner(a: &CsrMatrix) -> Result<DiagonalPreconditioner> {
    let inv_diag = a
        .diag()
        .into_iter()
        .enumerate()
        .map(|(row, d)| if d == 0.0 { Err(Error::ZeroDiagonal { row }) } else { Ok(1.0 / d) })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagonalPreconditioner { inv_diag })
}

impl Preconditioner for DiagonalPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

fn check_inputs(a: &CsrMatrix, b: &[f64], x0: &[f64], params: &SolverParams) -> Result<()> {
    params.validate()?;
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch {
            op: "cg (square matrix)",
            expected: a.n_rows(),
            found: a.n_cols(),
        });
    }
    for (len, op) in [(b.len(), "cg (rhs)"), (x0.len(), "cg (initial guess)")] {
        if len != a.n_rows() {
            return Err(Error::DimensionMismatch {
                op,
                expected: a.n_rows(),
                found: len,
            });
        }
    }
    if params.check_symmetry {
        a.check_symmetric(1e-12)?;
    }
    Ok(())
}

/// Plain conjugate gradients from the initial guess `x0`.
pub fn cg(a: &CsrMatrix, b: &[f64], x0: &[f64], params: &SolverParams) -> Result<(Vec<f64>, SolveReport)> {
    check_inputs(a, b, x0, params)?;
    let n = b.len();
    let mut x = x0.to_vec();
    let mut history = Vec::new();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((x, report(0, 0.0, true, history)));
    }
    let mut r = vec![0.0; n];
    a.mul_vec_into(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rr = dot(&r, &r);
    let mut res = sqrt(rr) / b_norm;
    if params.record_history {
        history.push(res);
    }
    if res <= params.rel_tol {
        return Ok((x, report(0, res, true, history)));
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=params.max_iters {
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::Breakdown { iteration: it, curvature });
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        res = sqrt(rr_new) / b_norm;
        if params.record_history {
            history.push(res);
        }
        if res <= params.rel_tol {
            return Ok((x, report(it, res, true, history)));
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok((x, report(params.max_iters, res, false, history)))
}

/// Preconditioned conjugate gradients; `m` must be symmetric positive
/// definite.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    m: &dyn Preconditioner,
    params: &SolverParams,
) -> Result<(Vec<f64>, SolveReport)> {
    check_inputs(a, b, x0, params)?;
    let n = b.len();
    let mut x = x0.to_vec();
    let mut history = Vec::new();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((x, report(0, 0.0, true, history)));
    }
    let mut r = vec![0.0; n];
    a.mul_vec_into(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = norm2(&r) / b_norm;
    if params.record_history {
        history.push(res);
    }
    if res <= params.rel_tol {
        return Ok((x, report(0, res, true, history)));
    }
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=params.max_iters {
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::Breakdown { iteration: it, curvature });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        res = norm2(&r) / b_norm;
        if params.record_history {
            history.push(res);
        }
        if res <= params.rel_tol {
            return Ok((x, report(it, res, true, history)));
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok((x, report(params.max_iters, res, false, history)))
}

/// Stationary iteration `x ← x + M⁻¹ (b − A x)`: with an SA hierarchy as
/// `m` this is multigrid used as a standalone solver.
pub fn stationary(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    m: &dyn Preconditioner,
    params: &SolverParams,
) -> Result<(Vec<f64>, SolveReport)> {
    check_inputs(a, b, x0, params)?;
    let n = b.len();
    let mut x = x0.to_vec();
    let mut history = Vec::new();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((x, report(0, 0.0, true, history)));
    }
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut res = f64::INFINITY;
    for it in 0..=params.max_iters {
        a.mul_vec_into(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        res = norm2(&r) / b_norm;
        if !res.is_finite() {
            return Err(Error::NonFinite("stationary iteration residual"));
        }
        if params.record_history {
            history.push(res);
        }
        if res <= params.rel_tol {
            return Ok((x, report(it, res, true, history)));
        }
        if it == params.max_iters {
            break;
        }
        m.apply(&r, &mut z);
        axpy(1.0, &z, &mut x);
    }
    Ok((x, report(params.max_iters, res, false, history)))
}

fn report(iterations: usize, relative_residual: f64, converged: bool, history: Vec<f64>) -> SolveReport {
    SolveReport {
        iterations,
        relative_residual,
        converged,
        history,
    }
}

/// The four solver variants of the comparison harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Cg,
    PcgDiagonal,
    PcgSmoothedAggregation,
    /// V-cycles of the SA hierarchy as a standalone solver.
    SmoothedAggregation,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::Cg,
        SolverKind::PcgDiagonal,
        SolverKind::PcgSmoothedAggregation,
        SolverKind::SmoothedAggregation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Cg => "cg",
            SolverKind::PcgDiagonal => "pcg-diag",
            SolverKind::PcgSmoothedAggregation => "pcg-sa",
            SolverKind::SmoothedAggregation => "amg",
        }
    }

    pub fn parse(s: &str) -> Option<SolverKind> {
        SolverKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn needs_hierarchy(self) -> bool {
        matches!(self, SolverKind::PcgSmoothedAggregation | SolverKind::SmoothedAggregation)
    }
}

/// Runs `kind` on `A x = b`. SA variants use `hierarchy`, which must have
/// been built for `a` (or for an earlier version of it).
pub fn solve_with(
    kind: SolverKind,
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    params: &SolverParams,
    diagonal: Option<&DiagonalPreconditioner>,
    hierarchy: Option<&SaHierarchy>,
) -> Result<(Vec<f64>, SolveReport)> {
    match kind {
        SolverKind::Cg => cg(a, b, x0, params),
        SolverKind::PcgDiagonal => match diagonal {
            Some(d) => pcg(a, b, x0, d, params),
            None => pcg(a, b, x0, &diagonal_preconditioner(a)?, params),
        },
        SolverKind::PcgSmoothedAggregation | SolverKind::SmoothedAggregation => {
            let h = hierarchy.ok_or_else(|| Error::InvalidParameter("SA solver needs a hierarchy".into()))?;
            if kind == SolverKind::SmoothedAggregation {
                stationary(a, b, x0, h, params)
            } else {
                pcg(a, b, x0, h, params)
            }
        }
    }
}
