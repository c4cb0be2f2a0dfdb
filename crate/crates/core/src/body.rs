//! Immersed bodies: Lagrangian point clouds, the regularized delta
//! function and prescribed rigid-body kinematics.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Rect, StaggeredGrid};
use crate::math::{self, PI};

pub type Point = [f64; 2];

/// Three-cell smoothed delta function (Roma, Peskin & Berger).
///
/// Returns a weight with units of `1/length`; zero for `|r| > 1.5 h`.
pub fn delta_roma(r: f64, h: f64) -> f64 {
    let x = r.abs() / h;
    if x <= 0.5 {
        (1.0 + math::sqrt(1.0 - 3.0 * x * x)) / (3.0 * h)
    } else if x <= 1.5 {
        let s = 1.0 - 3.0 * (1.0 - x) * (1.0 - x);
        // s may dip below zero by a rounding error at the outer edge.
        (5.0 - 3.0 * x - math::sqrt(s.max(0.0))) / (6.0 * h)
    } else {
        0.0
    }
}

/// Half-width of the delta support in units of `h`.
pub const DELTA_SUPPORT: f64 = 1.5;

/// Rigid motion prescribed for a body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionKind {
    Stationary,
    /// Rotation about the body centre at angular velocity `omega`.
    Rotating { omega: f64 },
    /// Surface velocity of a rotation at `omega` with the points held in
    /// place. Exact for axisymmetric bodies, whose point set does not change
    /// under rotation, and keeps their operators constant.
    Spinning { omega: f64 },
    /// Plunging: `y(t) = amplitude · sin(ω t)` with `ω = 2 k U / c` and
    /// `amplitude = (kh / k) · c`.
    Heaving {
        k: f64,
        kh: f64,
        chord: f64,
        u_ref: f64,
    },
    /// Hovering stroke: `x(t) = A0/2 cos(2πft)`, `α(t) = α0 + β sin(2πft + φ)`.
    Flapping {
        a0: f64,
        f: f64,
        alpha0: f64,
        beta: f64,
        phase: f64,
    },
}

/// Start-up perturbation: the body starts displaced by `offset` and is
/// brought back smoothly over `duration`, `offset · (1 + cos(π t / T)) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nudge {
    pub offset: Point,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionParams {
    pub kind: MotionKind,
    pub nudge: Option<Nudge>,
}

impl MotionParams {
    pub const STATIONARY: MotionParams = MotionParams {
        kind: MotionKind::Stationary,
        nudge: None,
    };

    pub fn new(kind: MotionKind) -> Self {
        MotionParams { kind, nudge: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        match self.kind {
            MotionKind::Heaving { k, chord, u_ref, .. } => {
                if !(k > 0.0) || !(chord > 0.0) || !(u_ref > 0.0) {
                    return bad("heaving needs k, chord and reference speed > 0");
                }
            }
            MotionKind::Flapping { f, .. } => {
                if !(f > 0.0) {
                    return bad("flapping frequency must be > 0");
                }
            }
            _ => {}
        }
        if let Some(n) = self.nudge {
            if !(n.duration > 0.0) {
                return bad("nudge duration must be > 0");
            }
        }
        Ok(())
    }

    /// Whether the body may be at a different place at `t` than at rest.
    pub fn is_moving_at(&self, t: f64) -> bool {
        let nudging = self.nudge.is_some_and(|n| t <= n.duration);
        nudging || !matches!(self.kind, MotionKind::Stationary | MotionKind::Spinning { .. })
    }
}

/// Rigid transform of a body at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Displacement of the centre from its reference position.
    pub offset: Point,
    /// Rotation about the centre, counter-clockwise.
    pub angle: f64,
    /// Velocity of the centre.
    pub velocity: Point,
    /// Angular velocity.
    pub omega: f64,
}

/// Pose of a body following `params` at time `t`.
pub fn body_motion(params: &MotionParams, t: f64) -> Pose {
    let mut pose = match params.kind {
        MotionKind::Stationary => Pose {
            offset: [0.0; 2],
            angle: 0.0,
            velocity: [0.0; 2],
            omega: 0.0,
        },
        MotionKind::Rotating { omega } => Pose {
            offset: [0.0; 2],
            angle: omega * t,
            velocity: [0.0; 2],
            omega,
        },
        MotionKind::Spinning { omega } => Pose {
            offset: [0.0; 2],
            angle: 0.0,
            velocity: [0.0; 2],
            omega,
        },
        MotionKind::Heaving {
            k,
            kh,
            chord,
            u_ref,
        } => {
            let w = 2.0 * k * u_ref / chord;
            let amp = kh / k * chord;
            Pose {
                offset: [0.0, amp * math::sin(w * t)],
                angle: 0.0,
                velocity: [0.0, amp * w * math::cos(w * t)],
                omega: 0.0,
            }
        }
        MotionKind::Flapping {
            a0,
            f,
            alpha0,
            beta,
            phase,
        } => {
            let w = 2.0 * PI * f;
            Pose {
                offset: [0.5 * a0 * math::cos(w * t), 0.0],
                angle: alpha0 + beta * math::sin(w * t + phase),
                velocity: [-0.5 * a0 * w * math::sin(w * t), 0.0],
                omega: beta * w * math::cos(w * t + phase),
            }
        }
    };
    if let Some(n) = params.nudge {
        if t < n.duration {
            let s = PI * t / n.duration;
            let shape = 0.5 * (1.0 + math::cos(s));
            let rate = -0.5 * math::sin(s) * PI / n.duration;
            for c in 0..2 {
                pose.offset[c] += n.offset[c] * shape;
                pose.velocity[c] += n.offset[c] * rate;
            }
        }
    }
    pose
}

/// A rigid body represented by ordered boundary points.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianBody {
    /// Points relative to the centre, in the reference orientation.
    pub shape: Vec<Point>,
    /// Reference position of the centre.
    pub center: Point,
    /// Quadrature weight (arc length) carried by each point.
    pub weights: Vec<f64>,
    /// Target spacing used when discretizing.
    pub ds: f64,
    pub motion: MotionParams,
    /// Current positions.
    pub points: Vec<Point>,
    /// Current prescribed velocities `u_B`.
    pub velocities: Vec<Point>,
}

impl LagrangianBody {
    /// Body from points given in absolute coordinates; the centre is their
    /// mean and each point's weight is half the length of its two adjacent
    /// segments (closed curve).
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n < 4 {
            return Err(Error::DegenerateBody(alloc::format!(
                "{n} points; at least 4 are required"
            )));
        }
        let cx = points.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let cy = points.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        let dist = |a: Point, b: Point| math::hypot(a[0] - b[0], a[1] - b[1]);
        let weights: Vec<f64> = (0..n)
            .map(|k| 0.5 * (dist(points[k], points[(k + 1) % n]) + dist(points[k], points[(k + n - 1) % n])))
            .collect();
        let ds = weights.iter().sum::<f64>() / n as f64;
        let shape = points.iter().map(|p| [p[0] - cx, p[1] - cy]).collect();
        Ok(Self::assemble([cx, cy], shape, weights, ds))
    }

    fn assemble(center: Point, shape: Vec<Point>, weights: Vec<f64>, ds: f64) -> Self {
        let points = shape.iter().map(|p| [p[0] + center[0], p[1] + center[1]]).collect();
        let velocities = alloc::vec![[0.0; 2]; shape.len()];
        LagrangianBody {
            shape,
            center,
            weights,
            ds,
            motion: MotionParams::STATIONARY,
            points,
            velocities,
        }
    }

    pub fn with_motion(mut self, motion: MotionParams) -> Self {
        self.motion = motion;
        self.move_to(0.0);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Places the body at time `t`: positions and point velocities follow
    /// the rigid pose (translation plus `ω × r` about the centre).
    pub fn move_to(&mut self, t: f64) {
        let pose = body_motion(&self.motion, t);
        let (s, c) = (math::sin(pose.angle), math::cos(pose.angle));
        let cx = self.center[0] + pose.offset[0];
        let cy = self.center[1] + pose.offset[1];
        for (k, r) in self.shape.iter().enumerate() {
            let rx = c * r[0] - s * r[1];
            let ry = s * r[0] + c * r[1];
            self.points[k] = [cx + rx, cy + ry];
            self.velocities[k] = [pose.velocity[0] - pose.omega * ry, pose.velocity[1] + pose.omega * rx];
        }
    }

    /// Checks that every point keeps the full delta support inside the
    /// uniform block of `grid`.
    pub fn check_support(&self, grid: &StaggeredGrid, body_index: usize) -> Result<()> {
        let u: Rect = grid.uniform_region;
        let c = DELTA_SUPPORT * grid.h_min - 1e-12 * grid.h_min;
        for (k, p) in self.points.iter().enumerate() {
            if p[0] - u.x0 < c || u.x1 - p[0] < c || p[1] - u.y0 < c || u.y1 - p[1] < c {
                return Err(Error::OutsideUniformRegion {
                    body: body_index,
                    point: k,
                    x: p[0],
                    y: p[1],
                });
            }
        }
        Ok(())
    }

    /// Largest deviation of the current point spacing from `[0.8 h, 1.2 h]`,
    /// as `Some((min_spacing, max_spacing))` when outside.
    pub fn spacing_violation(&self, h: f64) -> Option<(f64, f64)> {
        let n = self.points.len();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for k in 0..n {
            let (a, b) = (self.points[k], self.points[(k + 1) % n]);
            let d = math::hypot(a[0] - b[0], a[1] - b[1]);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo < 0.8 * h || hi > 1.2 * h).then_some((lo, hi))
    }
}

/// Circle of `diameter` around `center` with `⌈π d / h⌉` equally spaced
/// points, the first one at angle zero.
pub fn discretize_circle(center: Point, diameter: f64, h: f64) -> Result<LagrangianBody> {
    if !(diameter > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParameter("diameter and h must be positive".into()));
    }
    let n = math::ceil(PI * diameter / h - 1e-9) as usize;
    circle_with_points(center, diameter, n)
}

/// Circle with an explicit number of points.
pub fn circle_with_points(center: Point, diameter: f64, n: usize) -> Result<LagrangianBody> {
    if n < 4 {
        return Err(Error::DegenerateBody(alloc::format!(
            "circle would have {n} points; at least 4 are required"
        )));
    }
    let r = 0.5 * diameter;
    let shape = (0..n)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / n as f64;
            [r * math::cos(th), r * math::sin(th)]
        })
        .collect();
    let ds = PI * diameter / n as f64;
    Ok(LagrangianBody::assemble(center, shape, alloc::vec![ds; n], ds))
}

/// Ellipse with the chord along x, centred on `center`, with
/// `round(perimeter / h)` points equally spaced in arc length.
pub fn discretize_ellipse(center: Point, chord: f64, thickness_ratio: f64, h: f64) -> Result<LagrangianBody> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("h must be positive".into()));
    }
    if !(chord > 0.0) || !(thickness_ratio > 0.0 && thickness_ratio <= 1.0) {
        return Err(Error::InvalidParameter(
            "ellipse needs chord > 0 and 0 < thickness ratio <= 1".into(),
        ));
    }
    let perimeter = ellipse_arc(0.5 * chord, 0.5 * chord * thickness_ratio, 2.0 * PI);
    let n = math::round(perimeter / h) as usize;
    ellipse_with_points(center, chord, thickness_ratio, n)
}

/// Ellipse with an explicit number of points.
pub fn ellipse_with_points(center: Point, chord: f64, thickness_ratio: f64, n: usize) -> Result<LagrangianBody> {
    if n < 4 {
        return Err(Error::DegenerateBody(alloc::format!(
            "ellipse would have {n} points; at least 4 are required"
        )));
    }
    let a = 0.5 * chord;
    let b = a * thickness_ratio;
    let perimeter = ellipse_arc(a, b, 2.0 * PI);
    let ds = perimeter / n as f64;
    let mut shape = Vec::with_capacity(n);
    let mut theta = 0.0;
    for k in 0..n {
        let target = ds * k as f64;
        theta = invert_arc(a, b, target, theta);
        shape.push([a * math::cos(theta), b * math::sin(theta)]);
    }
    Ok(LagrangianBody::assemble(center, shape, alloc::vec![ds; n], ds))
}

fn arc_speed(a: f64, b: f64, th: f64) -> f64 {
    let (s, c) = (math::sin(th), math::cos(th));
    math::sqrt(a * a * s * s + b * b * c * c)
}

/// Arc length of the ellipse `(a cos θ, b sin θ)` from 0 to `theta`
/// (adaptive Simpson, absolute tolerance 1e-12).
pub fn ellipse_arc(a: f64, b: f64, theta: f64) -> f64 {
    // Split at quarter turns where the integrand has its kinks in slope.
    let quarter = 0.5 * PI;
    let mut total = 0.0;
    let mut start = 0.0;
    while start < theta {
        let end = (start + quarter).min(theta);
        total += adaptive_simpson(&|t| arc_speed(a, b, t), start, end, 1e-13, 50);
        start = end;
    }
    total
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Parameter angle at which the arc length reaches `s`; Newton iteration
/// safeguarded by bisection, to 1e-12.
fn invert_arc(a: f64, b: f64, s: f64, guess: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 2.0 * PI);
    let mut th = guess.clamp(lo, hi);
    for _ in 0..200 {
        let g = ellipse_arc(a, b, th) - s;
        if g.abs() < 1e-12 {
            break;
        }
        if g > 0.0 {
            hi = th;
        } else {
            lo = th;
        }
        let step = th - g / arc_speed(a, b, th);
        th = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
    }
    th
}
