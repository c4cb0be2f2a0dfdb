use ibpm_core::body::{body_motion, delta_roma, MotionKind, MotionParams, Nudge, DELTA_SUPPORT};
use ibpm_core::diagnostics::{compute_force_coefficients, convergence_order, estimate_strouhal};
use ibpm_core::grid::{build_stretched_grid, Rect};
use ibpm_core::krylov::{build_sa_hierarchy, cg, Preconditioner, SaParams, SolverParams};
use ibpm_core::sparse::{sliced_triple_product, spmm, CsrMatrix, Triplets};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = CsrMatrix> {
    prop::collection::vec((0..rows, 0..cols, -2.0f64..2.0), 0..3 * (rows + cols)).prop_map(move |entries| {
        let mut t = Triplets::new(rows, cols);
        for (i, j, v) in entries {
            t.push(i, j, v);
        }
        t.to_csr()
    })
}

fn dense_product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| (0..cols).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

fn close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    let scale = a.iter().chain(b).flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..10, 1usize..10, 1usize..10)
}

proptest! {
    #[test]
    fn spmv_is_linear(
        (a, x, y) in (1usize..12, 1usize..12).prop_flat_map(|(r, c)| (
            matrix(r, c),
            prop::collection::vec(-1.0f64..1.0, c),
            prop::collection::vec(-1.0f64..1.0, c),
        )),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| alpha * u + beta * v).collect();
        let lhs = a.spmv(&combo).unwrap();
        let (ax, ay) = (a.spmv(&x).unwrap(), a.spmv(&y).unwrap());
        let scale = a.max_abs().max(1.0) * 8.0;
        for k in 0..lhs.len() {
            prop_assert!((lhs[k] - (alpha * ax[k] + beta * ay[k])).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn product_matches_dense_and_transposes(
        (a, b) in dims().prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(k, n))),
    ) {
        let ab = spmm(&a, &b).unwrap();
        prop_assert!(close(&ab.to_dense(), &dense_product(&a.to_dense(), &b.to_dense()), 1e-13));
        let bt_at = spmm(&b.transpose(), &a.transpose()).unwrap();
        prop_assert!(close(&ab.transpose().to_dense(), &bt_at.to_dense(), 1e-13));
    }

    #[test]
    fn triple_product_is_slice_invariant(
        (a, b, c) in dims().prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(k, k), matrix(k, n))),
        s1 in 1usize..12,
        s2 in 1usize..12,
    ) {
        let (p1, _) = sliced_triple_product(&a, &b, &c, s1).unwrap();
        let (p2, _) = sliced_triple_product(&a, &b, &c, s2).unwrap();
        prop_assert!(close(&p1.to_dense(), &p2.to_dense(), 1e-13));
        let reference = spmm(&spmm(&a, &b).unwrap(), &c).unwrap();
        prop_assert!(close(&p1.to_dense(), &reference.to_dense(), 1e-13));
    }

    #[test]
    fn delta_is_even_with_unit_mass_and_no_first_moment(
        r in -3.0f64..3.0,
        h in 0.01f64..2.0,
        s in 0.0f64..1.0,
    ) {
        prop_assert_eq!(delta_roma(r * h, h), delta_roma(-r * h, h));
        prop_assert!(delta_roma(r * h, h) >= 0.0);
        if r.abs() >= DELTA_SUPPORT {
            prop_assert_eq!(delta_roma(r * h, h), 0.0);
        }
        let (mut mass, mut moment) = (0.0, 0.0);
        for j in -4i32..=4 {
            let x = (j as f64 - s) * h;
            let d = delta_roma(x, h) * h;
            mass += d;
            moment += x * d;
        }
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(moment.abs() < 1e-12 * h);
    }

    #[test]
    fn stretched_grids_keep_their_invariants(
        cells in (2usize..20, 2usize..20),
        h in 0.05f64..0.5,
        ratios in prop::array::uniform4(1.0f64..1.2),
        margins in prop::array::uniform4(0.0f64..3.0),
    ) {
        let uniform = Rect::new(-0.5 * cells.0 as f64 * h, 0.5 * cells.0 as f64 * h, -0.5 * cells.1 as f64 * h, 0.5 * cells.1 as f64 * h);
        let domain = Rect::new(uniform.x0 - margins[0], uniform.x1 + margins[1], uniform.y0 - margins[2], uniform.y1 + margins[3]);
        let grid = build_stretched_grid(domain, uniform, h, ratios).unwrap();
        for (faces, widths, lo, hi, r_lo, r_hi) in [
            (&grid.x_faces, &grid.dx, uniform.x0, uniform.x1, ratios[0], ratios[1]),
            (&grid.y_faces, &grid.dy, uniform.y0, uniform.y1, ratios[2], ratios[3]),
        ] {
            let mut x = faces[0];
            for (k, w) in widths.iter().enumerate() {
                prop_assert!(*w > 0.0);
                x += w;
                prop_assert!((x - faces[k + 1]).abs() <= 1e-12 * faces.iter().fold(1.0f64, |m, f| m.max(f.abs())));
            }
            let n = widths.len();
            let first = faces.iter().position(|f| (f - lo).abs() < 1e-9 * h).unwrap();
            let last = faces.iter().position(|f| (f - hi).abs() < 1e-9 * h).unwrap();
            for w in &widths[first..last] {
                prop_assert!((w / h - 1.0).abs() < 1e-12);
            }
            // Interior stretched cells grow geometrically; the outermost cell closes the domain.
            for k in 1..first.saturating_sub(1) {
                prop_assert!((widths[k] / widths[k + 1] - r_lo).abs() < 1e-10);
            }
            for k in last + 1..n.saturating_sub(1) {
                prop_assert!((widths[k] / widths[k - 1] - r_hi).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn motion_velocities_are_derivatives(
        kind in prop_oneof![
            (-2.0f64..2.0).prop_map(|omega| MotionKind::Rotating { omega }),
            (0.5f64..3.0, 0.1f64..1.0, 0.5f64..2.0, 0.5f64..2.0)
                .prop_map(|(k, kh, chord, u_ref)| MotionKind::Heaving { k, kh, chord, u_ref }),
            (0.5f64..3.0, 0.1f64..1.0, -1.5f64..1.5, 0.0f64..1.0, -3.0f64..3.0)
                .prop_map(|(a0, f, alpha0, beta, phase)| MotionKind::Flapping { a0, f, alpha0, beta, phase }),
        ],
        nudge in prop::option::of(((-0.1f64..0.1, -0.1f64..0.1), 0.5f64..2.0)),
        t in 0.01f64..5.0,
    ) {
        let params = MotionParams {
            kind,
            nudge: nudge.map(|((x, y), duration)| Nudge { offset: [x, y], duration }),
        };
        let eps = 1e-6;
        let (a, b) = (body_motion(&params, t - eps), body_motion(&params, t + eps));
        let p = body_motion(&params, t);
        for c in 0..2 {
            let fd = (b.offset[c] - a.offset[c]) / (2.0 * eps);
            prop_assert!((fd - p.velocity[c]).abs() < 1e-5, "component {}: {} vs {}", c, fd, p.velocity[c]);
        }
        prop_assert!(((b.angle - a.angle) / (2.0 * eps) - p.omega).abs() < 1e-5);
    }

    #[test]
    fn strouhal_is_amplitude_invariant(scale in 1e-3f64..1e3, exp in -10i32..10, f in 0.1f64..0.4, mean in -1.0f64..1.0) {
        let t: Vec<f64> = (0..8000).map(|k| k as f64 * 0.01).collect();
        let cl: Vec<f64> = t.iter().map(|t| mean + (2.0 * std::f64::consts::PI * f * t).sin()).collect();
        let st = estimate_strouhal(&t, &cl, 1.0, 1.0, 0.5).unwrap();
        prop_assert!((st - f).abs() < 1e-3);
        // Power-of-two scaling is exact in floating point.
        let pow2: Vec<f64> = cl.iter().map(|c| 2f64.powi(exp) * c).collect();
        prop_assert_eq!(st, estimate_strouhal(&t, &pow2, 1.0, 1.0, 0.5).unwrap());
        let scaled: Vec<f64> = cl.iter().map(|c| scale * c).collect();
        prop_assert!((st - estimate_strouhal(&t, &scaled, 1.0, 1.0, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn doubling_speed_quarters_coefficients(fx in -5.0f64..5.0, fy in -5.0f64..5.0, u in 0.1f64..10.0) {
        let f = [fx, fy];
        let slow = compute_force_coefficients(&f, 0.0, u, 1.0);
        let fast = compute_force_coefficients(&f, 0.0, 2.0 * u, 1.0);
        prop_assert_eq!(fast.cd, slow.cd / 4.0);
        prop_assert_eq!(fast.cl, slow.cl / 4.0);
    }

    #[test]
    fn convergence_order_of_exact_power_law(p in 0.5f64..4.0, c in 1e-3f64..1e3, h0 in 0.01f64..1.0) {
        let data: Vec<(f64, f64)> = (0..4).map(|k| {
            let h = h0 / 2f64.powi(k);
            (h, c * h.powf(p))
        }).collect();
        prop_assert!((convergence_order(&data).unwrap() - p).abs() < 1e-12);
    }
}

/// Pinned 5-point Poisson matrix on an `n × n` grid.
fn poisson(n: usize) -> CsrMatrix {
    let mut t = Triplets::new(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let r = j * n + i;
            let mut diag = 0.0;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni >= 0 && nj >= 0 && (ni as usize) < n && (nj as usize) < n {
                    t.push(r, nj as usize * n + ni as usize, -1.0);
                    diag += 1.0;
                }
            }
            t.push(r, r, diag);
        }
    }
    t.to_csr().pin(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn v_cycle_is_linear_and_symmetric(seed in prop::collection::vec(-1.0f64..1.0, 2 * 400)) {
        let a = poisson(20);
        let h = build_sa_hierarchy(&a, &SaParams { max_coarse: 20, ..SaParams::default() }).unwrap();
        prop_assert!(h.n_levels() >= 2);
        let (r1, r2) = seed.split_at(400);
        let apply = |r: &[f64]| {
            let mut z = vec![0.0; r.len()];
            h.apply(r, &mut z);
            z
        };
        let (z1, z2) = (apply(r1), apply(r2));
        let sum: Vec<f64> = r1.iter().zip(r2).map(|(a, b)| a + b).collect();
        let z12 = apply(&sum);
        let scale = z1.iter().chain(&z2).fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..400 {
            prop_assert!((z12[k] - z1[k] - z2[k]).abs() < 1e-10 * scale);
        }
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((dot(&z1, r2) - dot(r1, &z2)).abs() < 1e-10 * scale * 400.0);
    }
}

#[test]
fn cg_error_decreases_in_the_energy_norm() {
    let a = poisson(6);
    let n = a.n_rows();
    let b: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { ((k * 7) % 5) as f64 - 2.0 }).collect();
    let x0 = vec![0.0; n];
    let (exact, _) = cg(&a, &b, &x0, &SolverParams { rel_tol: 1e-14, max_iters: 1000, ..SolverParams::default() }).unwrap();
    let energy = |x: &[f64]| {
        let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let ae = a.spmv(&e).unwrap();
        e.iter().zip(&ae).map(|(a, b)| a * b).sum::<f64>().sqrt()
    };
    let mut prev = energy(&x0);
    for k in 1..30 {
        let (x, _) = cg(&a, &b, &x0, &SolverParams { rel_tol: 1e-300, max_iters: k, ..SolverParams::default() }).unwrap();
        let e = energy(&x);
        assert!(e <= prev * (1.0 + 1e-12) + 1e-14, "iteration {k}: {e} > {prev}");
        prev = e;
    }
}
