use ibpm_core::body::{discretize_circle, LagrangianBody};
use ibpm_core::grid::{build_stretched_grid, Rect, StaggeredGrid};
use ibpm_core::operators::{
    assemble_bn, assemble_diffusion, assemble_implicit, assemble_interpolation, assemble_regularization,
    coupled_matrix, metric_diagonal, OperatorParams, OperatorSet,
};
use ibpm_core::sparse::{spmm, CsrMatrix};
use nalgebra::{DMatrix, SymmetricEigen};

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n_rows(), a.n_cols());
    for (i, j, v) in a.triplets() {
        m[(i, j)] = v;
    }
    m
}

fn eigenvalues(a: &CsrMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(dense(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn small_cases() -> Vec<(StaggeredGrid, Vec<LagrangianBody>)> {
    let plain = StaggeredGrid::uniform(Rect::square(1.0), 8, 8).unwrap();
    let with_body = StaggeredGrid::uniform(Rect::square(1.0), 12, 12).unwrap();
    let body = discretize_circle([0.05, -0.02], 0.8, with_body.h_min).unwrap();
    let stretched = build_stretched_grid(
        Rect::new(-1.1, 1.1, -1.0, 1.0),
        Rect::square(0.6),
        0.2,
        [1.3, 1.2, 1.25, 1.1],
    )
    .unwrap();
    assert!(stretched.nx <= 12 && stretched.ny <= 12);
    let small_body = discretize_circle([0.0, 0.0], 0.3, 0.2).unwrap();
    vec![(plain, vec![]), (with_body, vec![body]), (stretched, vec![small_body])]
}

#[test]
fn coupled_matrix_has_one_null_direction_before_pinning() {
    for (grid, bodies) in small_cases() {
        for n_order in [1, 3] {
            let params = OperatorParams {
                n_order,
                ..OperatorParams::new(0.02, 0.05)
            };
            let ops = OperatorSet::assemble(&grid, &bodies, params).unwrap();
            let (raw, _) = coupled_matrix(&ops.qt, &ops.bn, &ops.q, usize::MAX).unwrap();
            assert!(raw.max_asymmetry() <= 1e-12 * raw.max_abs());
            let ev = eigenvalues(&raw);
            let top = ev.last().copied().unwrap();
            let zero = ev.iter().filter(|l| l.abs() <= 1e-10 * top).count();
            assert_eq!(zero, 1, "{}x{} N={n_order}: {:?}", grid.nx, grid.ny, &ev[..3]);
            assert!(ev[0] > -1e-10 * top);

            let pinned = eigenvalues(&ops.lhs2);
            assert!(pinned[0] > 1e-10 * top, "pinned system not definite: {}", pinned[0]);
            assert!(ops.lhs2.max_asymmetry() <= 1e-12 * ops.lhs2.max_abs());
            assert_eq!(ops.lhs2.n_rows(), grid.n_p() + 2 * bodies.iter().map(|b| b.len()).sum::<usize>());
        }
    }
}

#[test]
fn implicit_operator_is_spd() {
    for (grid, _) in small_cases() {
        let m = metric_diagonal(&grid);
        let l = assemble_diffusion(&grid);
        let a = assemble_implicit(&m, &l, 0.05, 0.1).unwrap();
        assert!(a.max_asymmetry() <= 1e-12 * a.max_abs());
        let ev = eigenvalues(&a);
        assert!(ev[0] > 0.0, "smallest eigenvalue {}", ev[0]);
        // L alone is negative definite with Dirichlet walls.
        assert!(eigenvalues(&l).last().unwrap() < &0.0);
    }
}

/// `‖I − A Bᴺ‖` under halving `dt`, Frobenius norm.
fn bn_defect(grid: &StaggeredGrid, dt: f64, nu: f64, n: usize) -> f64 {
    let m = metric_diagonal(grid);
    let l = assemble_diffusion(grid);
    let a = assemble_implicit(&m, &l, dt, nu).unwrap();
    let bn = assemble_bn(&m, &l, dt, nu, n).unwrap();
    let ab = dense(&spmm(&a, &bn).unwrap());
    (DMatrix::identity(ab.nrows(), ab.ncols()) - ab).norm()
}

#[test]
fn bn_defect_scales_with_dt_to_the_order() {
    let grid = StaggeredGrid::uniform(Rect::square(0.5), 16, 16).unwrap();
    for n in [1, 2, 3] {
        let r = bn_defect(&grid, 2e-3, 0.05, n) / bn_defect(&grid, 1e-3, 0.05, n);
        let want = 2f64.powi(n as i32);
        assert!((r / want - 1.0).abs() < 0.2, "N={n}: ratio {r}, expected {want}");
    }
}

fn interior_u_rows(grid: &StaggeredGrid) -> Vec<(usize, usize, usize)> {
    let mut rows = Vec::new();
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 2 {
            rows.push((i, j, grid.u_index(i, j)));
        }
    }
    rows
}

#[test]
fn diffusion_is_exact_on_linear_fields() {
    let grid = build_stretched_grid(Rect::square(3.0), Rect::square(1.0), 0.125, [1.1, 1.2, 1.15, 1.05]).unwrap();
    let l = assemble_diffusion(&grid);
    let q = grid.sample_fluxes(|x, y| (2.0 * x - 3.0 * y + 1.0, -x + 0.5 * y));
    let lq = l.spmv(&q).unwrap();
    for (_, _, row) in interior_u_rows(&grid) {
        assert!(lq[row].abs() < 1e-10, "row {row}: {}", lq[row]);
    }
    for j in 1..grid.ny - 2 {
        for i in 1..grid.nx - 1 {
            let row = grid.v_index(i, j);
            assert!(lq[row].abs() < 1e-10, "row {row}: {}", lq[row]);
        }
    }
}

/// Max over interior u rows of `|(L q)/S − 4|` for `u = x² + y²`.
fn quadratic_defect(grid: &StaggeredGrid, band: f64) -> f64 {
    let l = assemble_diffusion(grid);
    let m = metric_diagonal(grid);
    let q = grid.sample_fluxes(|x, y| (x * x + y * y, 0.0));
    let lq = l.spmv(&q).unwrap();
    let r = grid.flux_scale();
    let mut worst: f64 = 0.0;
    for (i, j, row) in interior_u_rows(grid) {
        let (x, y) = grid.u_position(i, j);
        if x.abs() > band || y.abs() > band {
            continue;
        }
        // L q = S ∇²u with S = M R.
        let lap = lq[row] / (m[row] * r[row]);
        worst = worst.max((lap - 4.0).abs());
    }
    worst
}

#[test]
fn diffusion_is_consistent_on_quadratics() {
    // Uniform grids: exact.
    let uniform = StaggeredGrid::uniform(Rect::square(1.0), 10, 10).unwrap();
    assert!(quadratic_defect(&uniform, 10.0) < 1e-10);
    // Stretched grids: the defect shrinks with the stretching ratio.
    let coarse = build_stretched_grid(Rect::square(4.0), Rect::square(0.5), 0.1, [1.1; 4]).unwrap();
    let fine = build_stretched_grid(Rect::square(4.0), Rect::square(0.5), 0.05, [1.05; 4]).unwrap();
    let (ec, ef) = (quadratic_defect(&coarse, 2.0), quadratic_defect(&fine, 2.0));
    assert!(ec > 1e-6 && ef < 0.7 * ec, "coarse {ec} fine {ef}");
}

#[test]
fn interpolation_reproduces_linear_fields() {
    let grid = build_stretched_grid(Rect::square(2.0), Rect::square(0.8), 0.05, [1.1; 4]).unwrap();
    let body = discretize_circle([0.013, -0.021], 0.9, grid.h_min).unwrap();
    let e = assemble_interpolation(&grid, std::slice::from_ref(&body)).unwrap();
    let (a, b, c) = (0.7, -1.3, 0.4);
    let q = grid.sample_fluxes(|x, y| (a * x + b * y + c, b * x - a * y));
    let uv = e.spmv(&q).unwrap();
    let n = body.len();
    for (k, p) in body.points.iter().enumerate() {
        assert!((uv[k] - (a * p[0] + b * p[1] + c)).abs() < 1e-10);
        assert!((uv[n + k] - (b * p[0] - a * p[1])).abs() < 1e-10);
    }
}

#[test]
fn regularization_spreads_total_force() {
    let grid = StaggeredGrid::uniform(Rect::square(1.0), 20, 20).unwrap();
    let body = discretize_circle([0.0, 0.0], 0.8, grid.h_min).unwrap();
    let h = assemble_regularization(&grid, std::slice::from_ref(&body)).unwrap();
    let n = body.len();
    let mut f = vec![0.0; 2 * n];
    for k in 0..n {
        f[k] = 1.0 + (k as f64).sin();
        f[n + k] = -0.5;
    }
    let spread = h.spmv(&f).unwrap();
    let area = grid.h_min * grid.h_min;
    let fx: f64 = (0..grid.n_u()).map(|r| spread[r] * area).sum();
    let fy: f64 = (grid.n_u()..grid.n_q()).map(|r| spread[r] * area).sum();
    let want_x: f64 = (0..n).map(|k| f[k] * body.weights[k]).sum();
    let want_y: f64 = (0..n).map(|k| f[n + k] * body.weights[k]).sum();
    assert!((fx - want_x).abs() < 1e-12 * want_x.abs().max(1.0));
    assert!((fy - want_y).abs() < 1e-12 * want_y.abs().max(1.0));
    assert!(h.spmv(&vec![0.0; 2 * n]).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn coupled_matrix_sparsity_follows_the_block_structure() {
    let grid = StaggeredGrid::uniform(Rect::square(1.0), 16, 16).unwrap();
    let body = discretize_circle([0.0, 0.0], 0.7, grid.h_min).unwrap();
    let ops = OperatorSet::assemble(&grid, &[body], OperatorParams::new(0.01, 0.01)).unwrap();
    let n_p = grid.n_p();
    for (r, c, _) in ops.lhs2.triplets() {
        if r < n_p && c < n_p {
            let (ri, rj) = (r % grid.nx, r / grid.nx);
            let (ci, cj) = (c % grid.nx, c / grid.nx);
            let dist = ri.abs_diff(ci) + rj.abs_diff(cj);
            assert!(dist <= 1, "pressure block entry ({r}, {c}) outside the 5-point stencil");
        }
    }
    // Coupling strips and the body block are populated.
    assert!(ops.lhs2.triplets().any(|(r, c, _)| r >= n_p && c < n_p));
    assert!(ops.lhs2.triplets().any(|(r, c, _)| r >= n_p && c >= n_p));
}

#[test]
fn table_one_dimensions() {
    let grid = build_stretched_grid(Rect::square(15.0), Rect::square(0.54), 0.02, [1.02; 4]).unwrap();
    let body = discretize_circle([0.0, 0.0], 1.0, 0.02).unwrap();
    assert_eq!((grid.nx, grid.ny, body.len()), (330, 330, 158));
    let ops = OperatorSet::assemble(&grid, &[body], OperatorParams::new(0.01, 1.0 / 40.0)).unwrap();
    assert_eq!(ops.lhs2.n_rows(), 109216);
    let nnz = ops.lhs2.nnz() as f64;
    assert!((nnz / 554752.0 - 1.0).abs() < 0.1, "nnz {nnz}");

    let grid = build_stretched_grid(Rect::square(15.0), Rect::new(-2.0, 2.0, -0.52, 0.52), 0.01, [1.01; 4]).unwrap();
    let body = ibpm_core::body::ellipse_with_points([0.0, 0.0], 1.0, 0.12, 101).unwrap();
    assert_eq!((grid.nx, grid.ny), (930, 654));
    assert_eq!(grid.n_p() + 2 * body.len(), 608422);
}
