//! Smoothed-aggregation algebraic multigrid.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::dense::DenseCholesky;
use super::Preconditioner;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::sparse::{sliced_triple_product, spmm, CsrMatrix, Triplets};

/// Largest coarsest-level matrix factored densely.
const MAX_DENSE: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaParams {
    /// Strength threshold on the finest level, `|a_ij| ≥ θ √(a_ii a_jj)`.
    /// Level `l` uses `θ / 2^l`.
    pub theta: f64,
    /// Stop coarsening once a level has at most this many rows.
    pub max_coarse: usize,
    pub max_levels: usize,
    /// Power iterations for the spectral radius of `D⁻¹A`.
    pub power_iters: usize,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            theta: 0.25,
            max_coarse: 64,
            max_levels: 25,
            power_iters: 10,
        }
    }
}

/// One non-coarsest level: its operator and the transfers to the next level.
#[derive(Debug, Clone)]
pub struct SaLevel {
    pub a: CsrMatrix,
    pub p: CsrMatrix,
    pub r: CsrMatrix,
    pub inv_diag: Vec<f64>,
    /// Jacobi damping, `4 / (3 ρ(D⁻¹A))`.
    pub omega: f64,
}

#[derive(Debug, Clone, Default)]
struct Work {
    b: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

/// Multigrid hierarchy applied as one symmetric V-cycle per call.
#[derive(Debug)]
pub struct SaHierarchy {
    levels: Vec<SaLevel>,
    coarse_a: CsrMatrix,
    coarse: DenseCholesky,
    stalled: bool,
    /// Step index at which the hierarchy was last built, if the caller
    /// tracks it.
    pub built_at: Option<usize>,
    work: RefCell<Work>,
}

impl SaHierarchy {
    pub fn levels(&self) -> &[SaLevel] {
        &self.levels
    }

    /// Number of levels including the directly solved coarsest one.
    pub fn n_levels(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn coarse_matrix(&self) -> &CsrMatrix {
        &self.coarse_a
    }

    /// True when aggregation stopped coarsening before reaching
    /// `max_coarse`.
    pub fn stalled(&self) -> bool {
        self.stalled
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.levels.iter().map(|l| l.a.n_rows()).collect();
        s.push(self.coarse_a.n_rows());
        s
    }

    /// Total nonzeros over all level operators divided by the finest.
    pub fn operator_complexity(&self) -> f64 {
        let fine = self.levels.first().map_or(self.coarse_a.nnz(), |l| l.a.nnz()) as f64;
        let total: usize = self.levels.iter().map(|l| l.a.nnz()).sum::<usize>() + self.coarse_a.nnz();
        total as f64 / fine.max(1.0)
    }

    fn cycle(&self, w: &mut Work, l: usize) {
        if l == self.levels.len() {
            self.coarse.solve_into(&w.b[l], &mut w.x[l]);
            return;
        }
        let lev = &self.levels[l];
        for ((x, b), d) in w.x[l].iter_mut().zip(&w.b[l]).zip(&lev.inv_diag) {
            *x = lev.omega * d * b;
        }
        residual(&lev.a, &w.b[l], &w.x[l], &mut w.r[l]);
        {
            let (fine, coarse) = w.b.split_at_mut(l + 1);
            lev.r.mul_vec_into(&w.r[l], &mut coarse[0]);
            let _ = fine;
        }
        self.cycle(w, l + 1);
        {
            let (fine, coarse) = w.x.split_at_mut(l + 1);
            lev.p.mul_vec_into(&coarse[0], &mut w.r[l]);
            for (x, c) in fine[l].iter_mut().zip(&w.r[l]) {
                *x += c;
            }
        }
        residual(&lev.a, &w.b[l], &w.x[l], &mut w.r[l]);
        for ((x, r), d) in w.x[l].iter_mut().zip(&w.r[l]).zip(&lev.inv_diag) {
            *x += lev.omega * d * r;
        }
    }
}

impl Preconditioner for SaHierarchy {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut w = self.work.borrow_mut();
        w.b[0].copy_from_slice(r);
        self.cycle(&mut w, 0);
        z.copy_from_slice(&w.x[0]);
    }
}

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) {
    a.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

const NONE: usize = usize::MAX;

/// Symmetric strength-of-connection graph as adjacency lists in CSR form.
fn strength_graph(a: &CsrMatrix, theta: f64) -> (Vec<usize>, Vec<usize>) {
    let diag = a.diag();
    let mut ptr = Vec::with_capacity(a.n_rows() + 1);
    let mut idx = Vec::with_capacity(a.nnz());
    ptr.push(0);
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j != i && v != 0.0 && v.abs() >= theta * sqrt((diag[i] * diag[j]).abs()) {
                idx.push(j);
            }
        }
        ptr.push(idx.len());
    }
    (ptr, idx)
}

/// Greedy three-pass aggregation. Returns the aggregate of every node and
/// the number of aggregates.
pub(crate) fn aggregate(a: &CsrMatrix, theta: f64) -> (Vec<usize>, usize) {
    let n = a.n_rows();
    let (ptr, idx) = strength_graph(a, theta);
    let nbrs = |i: usize| &idx[ptr[i]..ptr[i + 1]];
    let mut agg = vec![NONE; n];
    let mut count = 0;
    // Pass 1: seed aggregates from nodes whose whole neighbourhood is free.
    for i in 0..n {
        let nb = nbrs(i);
        if agg[i] != NONE || nb.is_empty() || nb.iter().any(|&j| agg[j] != NONE) {
            continue;
        }
        agg[i] = count;
        for &j in nb {
            agg[j] = count;
        }
        count += 1;
    }
    // Pass 2: attach leftovers to a neighbouring pass-1 aggregate.
    let seeded = agg.clone();
    for i in 0..n {
        if agg[i] == NONE {
            if let Some(&j) = nbrs(i).iter().find(|&&j| seeded[j] != NONE) {
                agg[i] = seeded[j];
            }
        }
    }
    // Pass 3: whatever remains forms new aggregates; isolated nodes become
    // singletons.
    for i in 0..n {
        if agg[i] != NONE {
            continue;
        }
        agg[i] = count;
        for &j in nbrs(i) {
            if agg[j] == NONE {
                agg[j] = count;
            }
        }
        count += 1;
    }
    (agg, count)
}

fn tentative_prolongator(agg: &[usize], n_agg: usize) -> CsrMatrix {
    let mut size = vec![0usize; n_agg];
    for &k in agg {
        size[k] += 1;
    }
    let mut t = Triplets::with_capacity(agg.len(), n_agg, agg.len());
    for (i, &k) in agg.iter().enumerate() {
        t.push(i, k, 1.0 / sqrt(size[k] as f64));
    }
    t.to_csr()
}

/// Rayleigh-quotient estimate of `ρ(D⁻¹A)` after `iters` power steps.
fn spectral_radius(a: &CsrMatrix, inv_diag: &[f64], iters: usize) -> f64 {
    let n = a.n_rows();
    // Deterministic scrambled start so no eigenvector is missed by symmetry.
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            0.5 + ((state >> 11) as f64) / ((1u64 << 53) as f64)
        })
        .collect();
    let mut ax = vec![0.0; n];
    let mut rho = 0.0;
    for _ in 0..iters.max(1) {
        a.mul_vec_into(&x, &mut ax);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += x[i] * ax[i];
            den += x[i] * x[i] / inv_diag[i];
        }
        rho = if den > 0.0 { num / den } else { 0.0 };
        let mut norm = 0.0;
        for i in 0..n {
            x[i] = ax[i] * inv_diag[i];
            norm += x[i] * x[i];
        }
        let norm = sqrt(norm);
        if norm == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= norm);
    }
    rho
}

/// Builds the hierarchy for the symmetric positive (semi)definite `a`.
pub fn build_sa_hierarchy(a: &CsrMatrix, params: &SaParams) -> Result<SaHierarchy> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch {
            op: "SA hierarchy",
            expected: a.n_rows(),
            found: a.n_cols(),
        });
    }
    if !(params.theta >= 0.0 && params.theta < 1.0) || params.max_levels == 0 {
        return Err(Error::InvalidParameter("SA needs 0 ≤ θ < 1 and at least one level".into()));
    }
    let mut levels = Vec::new();
    let mut current = a.clone();
    let mut stalled = false;
    while current.n_rows() > params.max_coarse.max(1) && levels.len() + 1 < params.max_levels {
        let n = current.n_rows();
        let theta = params.theta * crate::math::powf(0.5, levels.len() as f64);
        let (agg, n_agg) = aggregate(&current, theta);
        if n_agg >= n {
            log::warn!("aggregation made no progress at {n} rows; solving that level directly");
            stalled = true;
            break;
        }
        let inv_diag = current
            .diag()
            .into_iter()
            .enumerate()
            .map(|(row, d)| if d > 0.0 { Ok(1.0 / d) } else { Err(Error::ZeroDiagonal { row }) })
            .collect::<Result<Vec<_>>>()?;
        let rho = spectral_radius(&current, &inv_diag, params.power_iters);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Singular(alloc::format!("spectral radius estimate {rho} at {n} rows")));
        }
        let omega = 4.0 / (3.0 * rho);
        let p_tent = tentative_prolongator(&agg, n_agg);
        let ap = spmm(&current, &p_tent)?.scale_rows(&inv_diag);
        let p = p_tent.add(1.0, &ap, -omega)?;
        let r = p.transpose();
        let (coarse, _) = sliced_triple_product(&r, &current, &p, r.n_rows().max(1))?;
        levels.push(SaLevel {
            a: current,
            p,
            r,
            inv_diag,
            omega,
        });
        current = coarse;
    }
    if current.n_rows() > MAX_DENSE {
        return Err(Error::Singular(alloc::format!(
            "coarsest level has {} rows, too many for a dense factorization",
            current.n_rows()
        )));
    }
    let coarse = DenseCholesky::factor(&current)?;
    let mut work = Work::default();
    for lev in &levels {
        let n = lev.a.n_rows();
        work.b.push(vec![0.0; n]);
        work.x.push(vec![0.0; n]);
        work.r.push(vec![0.0; n]);
    }
    let n = current.n_rows();
    work.b.push(vec![0.0; n]);
    work.x.push(vec![0.0; n]);
    work.r.push(vec![0.0; n]);
    Ok(SaHierarchy {
        levels,
        coarse_a: current,
        coarse,
        stalled,
        built_at: None,
        work: RefCell::new(work),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::{pcg, stationary, SolverParams};

    pub(crate) fn poisson_2d(n: usize) -> CsrMatrix {
        let mut t = Triplets::new(n * n, n * n);
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                t.push(k, k, 4.0);
                if i > 0 {
                    t.push(k, k - 1, -1.0);
                }
                if i + 1 < n {
                    t.push(k, k + 1, -1.0);
                }
                if j > 0 {
                    t.push(k, k - n, -1.0);
                }
                if j + 1 < n {
                    t.push(k, k + n, -1.0);
                }
            }
        }
        t.to_csr()
    }

    #[test]
    fn aggregates_cover_all_nodes() {
        let a = poisson_2d(10);
        let (agg, n_agg) = aggregate(&a, 0.25);
        assert!(agg.iter().all(|&k| k < n_agg));
        assert!(n_agg < 100 / 3);
        let mut seen = vec![false; n_agg];
        agg.iter().for_each(|&k| seen[k] = true);
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn isolated_nodes_are_singletons() {
        let (agg, n_agg) = aggregate(&CsrMatrix::identity(5), 0.25);
        assert_eq!(n_agg, 5);
        assert_eq!(agg, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn stalled_coarsening_falls_back_to_direct() {
        let h = build_sa_hierarchy(&CsrMatrix::diagonal(&[2.0; 100]), &SaParams::default()).unwrap();
        assert!(h.stalled());
        assert_eq!(h.n_levels(), 1);
        let mut z = vec![0.0; 100];
        h.apply(&vec![1.0; 100], &mut z);
        assert!(z.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn spectral_radius_of_poisson() {
        let a = poisson_2d(20);
        let inv = vec![0.25; 400];
        let rho = spectral_radius(&a, &inv, 10);
        let exact = 1.0 + libm::cos(core::f64::consts::PI / 21.0);
        assert!(rho <= exact + 1e-12 && rho > 0.9 * exact, "{rho} vs {exact}");
    }

    #[test]
    fn hierarchy_solves_poisson() {
        let a = poisson_2d(40);
        let h = build_sa_hierarchy(&a, &SaParams::default()).unwrap();
        assert!(h.n_levels() >= 2, "{:?}", h.level_sizes());
        assert!(h.coarse_matrix().n_rows() <= 64, "{:?} {}", h.level_sizes(), h.stalled());
        let b: Vec<f64> = (0..1600).map(|i| libm::sin(i as f64)).collect();
        let params = SolverParams {
            rel_tol: 1e-8,
            ..Default::default()
        };
        let (_, rep) = pcg(&a, &b, &vec![0.0; 1600], &h, &params).unwrap();
        assert!(rep.converged && rep.iterations < 30, "{rep:?}");
        let (_, rep) = stationary(&a, &b, &vec![0.0; 1600], &h, &params).unwrap();
        assert!(rep.converged, "{rep:?}");
    }
}
