//! Staggered Cartesian grids with a uniform near-body block and geometric
//! stretching towards the domain edges.
//!
//! Layout of the unknowns:
//!
//! * `u` lives on the interior vertical faces, `(nx - 1) * ny` of them,
//!   numbered row by row: `u(i, j)` sits at `(x_faces[i + 1], yc[j])`.
//! * `v` lives on the interior horizontal faces, `nx * (ny - 1)` of them:
//!   `v(i, j)` sits at `(xc[i], y_faces[j + 1])`.
//! * pressure lives at the `nx * ny` cell centres.
//!
//! The flux vector `q` stores all `u` unknowns first, then all `v`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn square(half: f64) -> Self {
        Rect::new(-half, half, -half, half)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }
}

/// One stretched run of cells on one side of the uniform block. `end` is the
/// absolute coordinate where the run stops; cells grow by `ratio` per cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub end: f64,
    pub ratio: f64,
}

/// Description of one axis: a uniform block `[lo, hi]` of width-`h` cells,
/// flanked by stretched runs listed from the uniform block outward.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisLayout {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    pub lower: Vec<Segment>,
    pub upper: Vec<Segment>,
}

impl AxisLayout {
    /// Single stretched run on each side up to `[start, end]`.
    pub fn simple(start: f64, end: f64, lo: f64, hi: f64, h: f64, ratios: [f64; 2]) -> Self {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        if start < lo {
            lower.push(Segment {
                end: start,
                ratio: ratios[0],
            });
        }
        if end > hi {
            upper.push(Segment {
                end,
                ratio: ratios[1],
            });
        }
        AxisLayout {
            lo,
            hi,
            h,
            lower,
            upper,
        }
    }

    pub fn start(&self) -> f64 {
        self.lower.last().map_or(self.lo, |s| s.end)
    }

    pub fn end(&self) -> f64 {
        self.upper.last().map_or(self.hi, |s| s.end)
    }

    /// Face coordinates along this axis.
    pub fn faces(&self) -> Result<Vec<f64>> {
        if !(self.h > 0.0) {
            return Err(Error::InvalidParameter("h_min must be positive".into()));
        }
        let (lo, hi) = snap_uniform(self.lo, self.hi, self.h)?;
        let n_uniform = math::round((hi - lo) / self.h) as usize;

        let lower = stretched_widths(&self.lower, lo, self.h, -1.0)?;
        let upper = stretched_widths(&self.upper, hi, self.h, 1.0)?;

        let mut faces = Vec::with_capacity(lower.len() + n_uniform + upper.len() + 1);
        // Walk outward from lo, then reverse.
        let mut x = lo;
        faces.push(x);
        for (k, w) in lower.iter().enumerate() {
            x -= w;
            faces.push(if k + 1 == lower.len() { self.start() } else { x });
        }
        faces.reverse();
        for k in 1..=n_uniform {
            faces.push(lo + k as f64 * self.h);
        }
        let last = faces.len() - 1;
        faces[last] = hi;
        let mut x = hi;
        for (k, w) in upper.iter().enumerate() {
            x += w;
            faces.push(if k + 1 == upper.len() { self.end() } else { x });
        }
        Ok(faces)
    }
}

/// Snaps `[lo, hi]` outward to a whole number of `h` cells when the shortfall
/// is at most half a cell.
fn snap_uniform(lo: f64, hi: f64, h: f64) -> Result<(f64, f64)> {
    if hi <= lo {
        return Err(Error::Sizing("uniform region has non-positive extent".into()));
    }
    let n = (hi - lo) / h;
    let k = math::ceil(n - 1e-9);
    let extra = (k - n) * h;
    if extra > 0.5 * h {
        return Err(Error::Sizing(alloc::format!(
            "uniform extent {} is not a whole number of cells of width {} ({} cells)",
            hi - lo,
            h,
            n
        )));
    }
    if extra.abs() <= 1e-9 * h {
        Ok((lo, hi))
    } else {
        Ok((lo - 0.5 * extra, hi + 0.5 * extra))
    }
}

/// Widths of the cells beyond the uniform block on one side, ordered outward.
/// Each run continues the geometric progression of the previous one; the last
/// cell of a run is truncated so that the run ends exactly on `Segment::end`.
fn stretched_widths(segments: &[Segment], from: f64, h: f64, dir: f64) -> Result<Vec<f64>> {
    let mut widths = Vec::new();
    let mut pos = from;
    let mut w_prev = h;
    for seg in segments {
        if !(seg.ratio >= 1.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "stretching ratio {} must be >= 1",
                seg.ratio
            )));
        }
        let mut remaining = (seg.end - pos) * dir;
        if remaining < -1e-12 {
            return Err(Error::Sizing(alloc::format!(
                "segment end {} lies inside the region already covered",
                seg.end
            )));
        }
        while remaining > 1e-12 * h {
            let w = w_prev * seg.ratio;
            if remaining <= w * (1.0 + 1e-9) {
                if remaining < 1e-6 * w && !widths.is_empty() {
                    *widths.last_mut().unwrap() += remaining;
                } else {
                    widths.push(remaining);
                }
                w_prev = w;
                break;
            }
            widths.push(w);
            remaining -= w;
            w_prev = w;
        }
        pos = seg.end;
    }
    Ok(widths)
}

/// Staggered grid. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredGrid {
    pub nx: usize,
    pub ny: usize,
    pub x_faces: Vec<f64>,
    pub y_faces: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub xc: Vec<f64>,
    pub yc: Vec<f64>,
    /// Block of cells of width `h_min` in which bodies may live.
    pub uniform_region: Rect,
    pub h_min: f64,
}

/// Grid with a uniform block in `uniform` and one stretched run per side.
/// `ratios` are ordered left, right, bottom, top.
pub fn build_stretched_grid(
    domain: Rect,
    uniform: Rect,
    h_min: f64,
    ratios: [f64; 4],
) -> Result<StaggeredGrid> {
    if !domain.contains(&uniform) {
        return Err(Error::InvalidParameter(
            "uniform region must lie inside the domain".into(),
        ));
    }
    for r in ratios {
        if !(r >= 1.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "stretching ratio {r} must be >= 1"
            )));
        }
    }
    let x = AxisLayout::simple(
        domain.x0,
        domain.x1,
        uniform.x0,
        uniform.x1,
        h_min,
        [ratios[0], ratios[1]],
    );
    let y = AxisLayout::simple(
        domain.y0,
        domain.y1,
        uniform.y0,
        uniform.y1,
        h_min,
        [ratios[2], ratios[3]],
    );
    StaggeredGrid::from_layouts(&x, &y)
}

impl StaggeredGrid {
    pub fn from_layouts(x: &AxisLayout, y: &AxisLayout) -> Result<Self> {
        if (x.h - y.h).abs() > 1e-12 * x.h {
            return Err(Error::InvalidParameter(
                "both axes must share the same uniform width".into(),
            ));
        }
        let x_faces = x.faces()?;
        let y_faces = y.faces()?;
        let (ux0, ux1) = snap_uniform(x.lo, x.hi, x.h)?;
        let (uy0, uy1) = snap_uniform(y.lo, y.hi, y.h)?;
        if ux0 < x.start() - 1e-12 || ux1 > x.end() + 1e-12 || uy0 < y.start() - 1e-12 || uy1 > y.end() + 1e-12
        {
            return Err(Error::Sizing(
                "snapped uniform region no longer fits in the domain".into(),
            ));
        }
        Self::from_faces(x_faces, y_faces, Rect::new(ux0, ux1, uy0, uy1), x.h)
    }

    /// Grid from explicit face coordinates.
    pub fn from_faces(
        x_faces: Vec<f64>,
        y_faces: Vec<f64>,
        uniform_region: Rect,
        h_min: f64,
    ) -> Result<Self> {
        if x_faces.len() < 2 || y_faces.len() < 2 {
            return Err(Error::Sizing("a grid needs at least one cell per direction".into()));
        }
        let widths = |f: &[f64]| -> Result<Vec<f64>> {
            let w: Vec<f64> = f.windows(2).map(|p| p[1] - p[0]).collect();
            if w.iter().any(|&d| !(d > 0.0)) {
                return Err(Error::Sizing("face coordinates must be strictly increasing".into()));
            }
            Ok(w)
        };
        let dx = widths(&x_faces)?;
        let dy = widths(&y_faces)?;
        let xc = x_faces.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        let yc = y_faces.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        Ok(StaggeredGrid {
            nx: dx.len(),
            ny: dy.len(),
            x_faces,
            y_faces,
            dx,
            dy,
            xc,
            yc,
            uniform_region,
            h_min,
        })
    }

    /// Uniform `nx × ny` grid covering `domain`; the whole domain counts as the
    /// uniform region. Cells must be square.
    pub fn uniform(domain: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Sizing("a grid needs at least one cell per direction".into()));
        }
        let hx = domain.width() / nx as f64;
        let hy = domain.height() / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx {
            return Err(Error::Sizing("uniform grids must have square cells".into()));
        }
        let mut x: Vec<f64> = (0..=nx).map(|i| domain.x0 + i as f64 * hx).collect();
        let mut y: Vec<f64> = (0..=ny).map(|j| domain.y0 + j as f64 * hy).collect();
        x[nx] = domain.x1;
        y[ny] = domain.y1;
        Self::from_faces(x, y, domain, hx)
    }

    pub fn domain(&self) -> Rect {
        Rect::new(
            self.x_faces[0],
            self.x_faces[self.nx],
            self.y_faces[0],
            self.y_faces[self.ny],
        )
    }

    /// `(n_u, n_v, n_p)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.n_u(), self.n_v(), self.n_p())
    }

    #[inline]
    pub fn n_u(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    #[inline]
    pub fn n_v(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    #[inline]
    pub fn n_q(&self) -> usize {
        self.n_u() + self.n_v()
    }

    #[inline]
    pub fn n_p(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn u_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }

    #[inline]
    pub fn v_index(&self, i: usize, j: usize) -> usize {
        self.n_u() + j * self.nx + i
    }

    #[inline]
    pub fn p_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn u_position(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x_faces[i + 1], self.yc[j])
    }

    #[inline]
    pub fn v_position(&self, i: usize, j: usize) -> (f64, f64) {
        (self.xc[i], self.y_faces[j + 1])
    }

    /// Width of the momentum control volume around `u(i, j)` in x.
    #[inline]
    pub fn u_span(&self, i: usize) -> f64 {
        0.5 * (self.dx[i] + self.dx[i + 1])
    }

    /// Height of the momentum control volume around `v(i, j)` in y.
    #[inline]
    pub fn v_span(&self, j: usize) -> f64 {
        0.5 * (self.dy[j] + self.dy[j + 1])
    }

    /// Velocity-to-flux factor for every entry of `q` (`dy` for u, `dx` for v).
    pub fn flux_scale(&self) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.n_q());
        for j in 0..self.ny {
            for _ in 0..self.nx - 1 {
                r.push(self.dy[j]);
            }
        }
        for _ in 0..self.ny - 1 {
            for i in 0..self.nx {
                r.push(self.dx[i]);
            }
        }
        r
    }

    /// Converts fluxes to face velocities.
    pub fn velocities(&self, q: &[f64]) -> Vec<f64> {
        q.iter().zip(self.flux_scale()).map(|(q, r)| q / r).collect()
    }

    /// Converts face velocities to fluxes.
    pub fn fluxes(&self, vel: &[f64]) -> Vec<f64> {
        vel.iter().zip(self.flux_scale()).map(|(u, r)| u * r).collect()
    }

    /// Flux field of the velocity field `f(x, y) -> (u, v)` sampled at the faces.
    pub fn sample_fluxes(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.n_q());
        for j in 0..self.ny {
            for i in 0..self.nx - 1 {
                let (x, y) = self.u_position(i, j);
                q.push(f(x, y).0 * self.dy[j]);
            }
        }
        for j in 0..self.ny - 1 {
            for i in 0..self.nx {
                let (x, y) = self.v_position(i, j);
                q.push(f(x, y).1 * self.dx[i]);
            }
        }
        q
    }

    /// Index of the cell containing `x` along a face array (clamped).
    pub(crate) fn locate(faces: &[f64], x: f64) -> usize {
        let n = faces.len() - 1;
        match faces.binary_search_by(|f| f.partial_cmp(&x).unwrap_or(core::cmp::Ordering::Less)) {
            Ok(k) => k.min(n - 1),
            Err(k) => k.saturating_sub(1).min(n - 1),
        }
    }
}
