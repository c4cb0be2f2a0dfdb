//! Solver comparison on a coupled (pressure and force) system.

use crate::config::CaseConfig;
use crate::error::{Error, Result};
use ibpm_core::krylov::{
    build_sa_hierarchy, diagonal_preconditioner, solve_with, SaParams, SolverKind, SolverParams,
};
use ibpm_core::operators::OperatorSet;
use ibpm_core::sparse::CsrMatrix;
use std::fmt;
use std::time::Instant;

pub const SOLVERS: [SolverKind; 4] = [
    SolverKind::Cg,
    SolverKind::PcgDiagonal,
    SolverKind::PcgSmoothedAggregation,
    SolverKind::SmoothedAggregation,
];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub solver: SolverKind,
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
    /// Preconditioner construction time in seconds.
    pub setup: f64,
    pub solve: f64,
    /// Failure other than running out of iterations.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub n: usize,
    pub nnz: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn row(&self, kind: SolverKind) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.solver == kind)
    }
}

impl fmt::Display for BenchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system: {} rows, {} nonzeros", self.n, self.nnz)?;
        writeln!(
            f,
            "{:<10}{:>11}{:>11}{:>14}{:>11}{:>11}",
            "solver", "iterations", "converged", "residual", "setup s", "solve s"
        )?;
        for r in &self.rows {
            write!(
                f,
                "{:<10}{:>11}{:>11}{:>14.3e}{:>11.4}{:>11.4}",
                r.solver.name(),
                r.iterations,
                if r.converged { "yes" } else { "no" },
                r.relative_residual,
                r.setup,
                r.solve
            )?;
            if let Some(e) = &r.error {
                write!(f, "  ({e})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Deterministic rough right-hand side with entries in `[-0.5, 0.5)`.
pub fn bench_rhs(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = ((i as f64 + 1.0) * 12.9898).sin() * 43758.5453;
            s - s.floor() - 0.5
        })
        .collect()
}

/// The pinned coupled matrix of a case at its start time.
pub fn case_matrix(cfg: &CaseConfig) -> Result<CsrMatrix> {
    let grid = cfg.grid.build().map_err(Error::Setup)?;
    let bodies = cfg
        .bodies
        .iter()
        .map(|b| {
            let mut body = b.build(grid.h_min)?;
            body.move_to(cfg.t0);
            Ok(body)
        })
        .collect::<Result<Vec<_>>>()?;
    let ops = OperatorSet::assemble(&grid, &bodies, cfg.stepping.operator_params()).map_err(Error::Setup)?;
    Ok(ops.lhs2)
}

/// Runs every solver on `a x = b` from a zero initial guess.
pub fn bench_matrix(a: &CsrMatrix, b: &[f64], params: SolverParams, sa: &SaParams) -> BenchTable {
    let x0 = vec![0.0; a.n_rows()];
    let mut rows = Vec::new();
    for kind in SOLVERS {
        let t = Instant::now();
        let diag = match kind {
            SolverKind::PcgDiagonal => Some(diagonal_preconditioner(a)),
            _ => None,
        };
        let hierarchy = kind.needs_hierarchy().then(|| build_sa_hierarchy(a, sa));
        let setup = t.elapsed().as_secs_f64();
        let fail = |e: ibpm_core::Error| BenchRow {
            solver: kind,
            iterations: 0,
            converged: false,
            relative_residual: f64::NAN,
            setup,
            solve: 0.0,
            error: Some(e.to_string()),
        };
        let diag = match diag.transpose() {
            Ok(d) => d,
            Err(e) => {
                rows.push(fail(e));
                continue;
            }
        };
        let hierarchy = match hierarchy.transpose() {
            Ok(h) => h,
            Err(e) => {
                rows.push(fail(e));
                continue;
            }
        };
        let t = Instant::now();
        let result = solve_with(kind, a, b, &x0, &params, diag.as_ref(), hierarchy.as_ref());
        let solve = t.elapsed().as_secs_f64();
        rows.push(match result {
            Ok((_, rep)) => BenchRow {
                solver: kind,
                iterations: rep.iterations,
                converged: rep.converged,
                relative_residual: rep.relative_residual,
                setup,
                solve,
                error: None,
            },
            Err(e) => BenchRow { solve, ..fail(e) },
        });
    }
    BenchTable {
        n: a.n_rows(),
        nnz: a.nnz(),
        rows,
    }
}
