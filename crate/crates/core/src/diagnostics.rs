//! Forces, vorticity, shedding frequency and reference solutions.

use alloc::vec::Vec;

use crate::body::LagrangianBody;
use crate::error::{Error, Result};
use crate::grid::StaggeredGrid;
use crate::math;
use crate::operators::BoundaryValues;

/// Total force on the bodies and its coefficients at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceRecord {
    pub t: f64,
    pub fx: f64,
    pub fy: f64,
    pub cd: f64,
    pub cl: f64,
}

/// Force exerted by the fluid on each body, `Σ_k f̃_k` over its points.
/// Positive `x` is drag for a stream in `+x`.
pub fn body_forces(f_tilde: &[f64], bodies: &[LagrangianBody]) -> Vec<[f64; 2]> {
    let n_b = f_tilde.len() / 2;
    let mut start = 0;
    bodies
        .iter()
        .map(|b| {
            let r = start..start + b.len();
            start += b.len();
            [f_tilde[r.clone()].iter().sum(), f_tilde[n_b + r.start..n_b + r.end].iter().sum()]
        })
        .collect()
}

/// Total force and coefficients `C = F / (½ u∞² ref_length)`.
pub fn compute_force_coefficients(f_tilde: &[f64], t: f64, u_inf: f64, ref_length: f64) -> ForceRecord {
    let n_b = f_tilde.len() / 2;
    let fx: f64 = f_tilde[..n_b].iter().sum();
    let fy: f64 = f_tilde[n_b..].iter().sum();
    let q = 0.5 * u_inf * u_inf * ref_length;
    ForceRecord {
        t,
        fx,
        fy,
        cd: fx / q,
        cl: fy / q,
    }
}

/// Kinetic energy `½ qᵀ M q` (the sum of `½ u² ΔxΔy` over velocity nodes).
pub fn kinetic_energy(m: &[f64], q: &[f64]) -> f64 {
    0.5 * m.iter().zip(q).map(|(m, q)| m * q * q).sum::<f64>()
}

/// Vorticity `∂v/∂x − ∂u/∂y` at the interior vertices, as `(x, y, ω)`
/// rows ordered with x fastest.
pub fn compute_vorticity(grid: &StaggeredGrid, q: &[f64]) -> Vec<[f64; 3]> {
    let vel = grid.velocities(q);
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = Vec::with_capacity((nx - 1) * (ny - 1));
    for b in 1..ny {
        for a in 1..nx {
            let dvdx = (vel[grid.v_index(a, b - 1)] - vel[grid.v_index(a - 1, b - 1)]) / (grid.xc[a] - grid.xc[a - 1]);
            let dudy = (vel[grid.u_index(a - 1, b)] - vel[grid.u_index(a - 1, b - 1)]) / (grid.yc[b] - grid.yc[b - 1]);
            out.push([grid.x_faces[a], grid.y_faces[b], dvdx - dudy]);
        }
    }
    out
}

fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    if x <= nodes[0] {
        return (0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 2, 1.0);
    }
    let k = nodes.partition_point(|&p| p <= x) - 1;
    (k, (x - nodes[k]) / (nodes[k + 1] - nodes[k]))
}

/// Bilinear interpolation of the face velocities (including the boundary
/// normal components) at `(x, y)`. Points outside the node hull are
/// clamped to it.
pub fn sample_velocity(grid: &StaggeredGrid, q: &[f64], bv: &BoundaryValues, x: f64, y: f64) -> (f64, f64) {
    let vel = grid.velocities(q);
    let (nx, ny) = (grid.nx, grid.ny);
    let u_at = |a: usize, j: usize| {
        if a == 0 {
            bv.left.normal[j]
        } else if a == nx {
            bv.right.normal[j]
        } else {
            vel[grid.u_index(a - 1, j)]
        }
    };
    let v_at = |i: usize, b: usize| {
        if b == 0 {
            bv.bottom.normal[i]
        } else if b == ny {
            bv.top.normal[i]
        } else {
            vel[grid.v_index(i, b - 1)]
        }
    };
    let (a, sx) = bracket(&grid.x_faces, x);
    let (j, sy) = bracket(&grid.yc, y);
    let u = (1.0 - sx) * ((1.0 - sy) * u_at(a, j) + sy * u_at(a, j + 1))
        + sx * ((1.0 - sy) * u_at(a + 1, j) + sy * u_at(a + 1, j + 1));
    let (i, tx) = bracket(&grid.xc, x);
    let (b, ty) = bracket(&grid.y_faces, y);
    let v = (1.0 - tx) * ((1.0 - ty) * v_at(i, b) + ty * v_at(i, b + 1))
        + tx * ((1.0 - ty) * v_at(i + 1, b) + ty * v_at(i + 1, b + 1));
    (u, v)
}

/// Steady azimuthal velocity between a cylinder of radius `r_i` rotating
/// at `omega` and a fixed cylinder of radius `r_o`; solid-body rotation
/// inside `r_i`.
pub fn couette_analytic(r: f64, omega: f64, r_i: f64, r_o: f64) -> Result<f64> {
    if !(r >= 0.0) || r > r_o * (1.0 + 1e-12) || !(r_i > 0.0 && r_i < r_o) {
        return Err(Error::InvalidParameter(alloc::format!(
            "Couette profile needs 0 ≤ r ≤ r_o and 0 < r_i < r_o (r = {r})"
        )));
    }
    if r < r_i {
        return Ok(omega * r);
    }
    Ok(omega * r_i * (r_o / r - r / r_o) / (r_o / r_i - r_i / r_o))
}

/// Error of the azimuthal velocity against the Couette profile, sampled on
/// `n_rays` equally spaced rays from `center` at `n_samples` radii in
/// `[r_i + margin, r_o − margin]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileError {
    /// Root mean square error over all samples.
    pub l2: f64,
    pub linf: f64,
    pub samples: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn couette_error(
    grid: &StaggeredGrid,
    q: &[f64],
    bv: &BoundaryValues,
    center: [f64; 2],
    omega: f64,
    r_i: f64,
    r_o: f64,
    margin: f64,
    n_rays: usize,
    n_samples: usize,
) -> Result<ProfileError> {
    let (r0, r1) = (r_i + margin, r_o - margin);
    if !(r1 > r0) || n_rays == 0 || n_samples < 2 {
        return Err(Error::InvalidParameter("empty Couette sampling band".into()));
    }
    let mut sum = 0.0;
    let mut linf: f64 = 0.0;
    let mut count = 0;
    for ray in 0..n_rays {
        // Offset the rays so none runs along a grid line.
        let th = 2.0 * math::PI * (ray as f64 + 0.25) / n_rays as f64;
        let (s, c) = (math::sin(th), math::cos(th));
        for k in 0..n_samples {
            let r = r0 + (r1 - r0) * k as f64 / (n_samples - 1) as f64;
            let (u, v) = sample_velocity(grid, q, bv, center[0] + r * c, center[1] + r * s);
            let err = -s * u + c * v - couette_analytic(r, omega, r_i, r_o)?;
            sum += err * err;
            linf = linf.max(err.abs());
            count += 1;
        }
    }
    Ok(ProfileError {
        l2: math::sqrt(sum / count as f64),
        linf,
        samples: count,
    })
}

/// Observed order `p` of `e ≈ C hᵖ`: the least-squares slope of
/// `log e` against `log h` (exact for two levels).
pub fn convergence_order(data: &[(f64, f64)]) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::InvalidParameter("convergence order needs at least two levels".into()));
    }
    if data.iter().any(|&(h, e)| !(h > 0.0) || !(e > 0.0)) {
        return Err(Error::InvalidParameter("step sizes and errors must be positive".into()));
    }
    let n = data.len() as f64;
    let xs: Vec<f64> = data.iter().map(|d| math::ln(d.0)).collect();
    let ys: Vec<f64> = data.iter().map(|d| math::ln(d.1)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all step sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Shedding statistics of a lift (or drag) series after its transient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub frequency: f64,
    pub mean: f64,
    /// Half the peak-to-peak range.
    pub amplitude: f64,
    pub periods: usize,
}

/// Frequency from the mean spacing of upward zero crossings of the
/// mean-removed signal, using samples after the first `discard` fraction
/// of the series. Needs at least three full periods.
pub fn analyze_oscillation(t: &[f64], y: &[f64], discard: f64) -> Result<Oscillation> {
    if t.len() != y.len() {
        return Err(Error::DimensionMismatch {
            op: "oscillation series",
            expected: t.len(),
            found: y.len(),
        });
    }
    if !(0.0..1.0).contains(&discard) {
        return Err(Error::InvalidParameter("discard fraction must lie in [0, 1)".into()));
    }
    let start = (discard * t.len() as f64) as usize;
    let (t, y) = (&t[start..], &y[start..]);
    if y.len() < 3 {
        return Err(Error::InvalidParameter("series too short".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut crossings = Vec::new();
    for k in 1..y.len() {
        let (a, b) = (y[k - 1] - mean, y[k] - mean);
        if a < 0.0 && b >= 0.0 {
            crossings.push(t[k - 1] + (t[k] - t[k - 1]) * (-a / (b - a)));
        }
    }
    if crossings.len() < 4 {
        return Err(Error::InvalidParameter(alloc::format!(
            "only {} full periods detected; at least 3 are needed",
            crossings.len().saturating_sub(1)
        )));
    }
    let periods = crossings.len() - 1;
    let period = (crossings[periods] - crossings[0]) / periods as f64;
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    Ok(Oscillation {
        frequency: 1.0 / period,
        mean,
        amplitude: 0.5 * (hi - lo),
        periods,
    })
}

/// Strouhal number `f d / u∞` of a lift series.
pub fn estimate_strouhal(t: &[f64], cl: &[f64], d: f64, u_inf: f64, discard: f64) -> Result<f64> {
    Ok(analyze_oscillation(t, cl, discard)?.frequency * d / u_inf)
}
