//! Case description files.
//!
//! A case is a flat `key = value` text with `[section]` headers. `#` starts
//! a comment. Bodies use one `[body NAME]` section each. Every key is
//! listed in `cases/README.md`; anything else is rejected.

use crate::error::{Error, Result};
use ibpm_core::body::{
    circle_with_points, discretize_circle, discretize_ellipse, ellipse_with_points, LagrangianBody, MotionKind,
    MotionParams, Nudge,
};
use ibpm_core::grid::{AxisLayout, Rect, Segment, StaggeredGrid};
use ibpm_core::krylov::{SaParams, SolverKind};
use ibpm_core::operators::{BoundaryConditions, ComponentBc, EdgeBc};
use ibpm_core::stepper::SteppingParams;
use std::cell::Cell;
use std::path::{Path, PathBuf};

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub struct Origin {
    pub path: String,
    pub line: usize,
}

impl Origin {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// Evenly spaced `nx × ny` cells over `domain`.
    Cells { domain: Rect, nx: usize, ny: usize },
    /// Uniform block of width `h` with stretched runs outside it.
    Stretched { x: AxisLayout, y: AxisLayout },
}

impl GridSpec {
    pub fn build(&self) -> ibpm_core::Result<StaggeredGrid> {
        match self {
            GridSpec::Cells { domain, nx, ny } => StaggeredGrid::uniform(*domain, *nx, *ny),
            GridSpec::Stretched { x, y } => StaggeredGrid::from_layouts(x, y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    Circle { diameter: f64 },
    Ellipse { chord: f64, thickness: f64 },
    /// Closed curve read from a file of `x y` lines, absolute coordinates.
    PointFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    pub name: String,
    pub shape: ShapeSpec,
    pub center: [f64; 2],
    /// Explicit point count; otherwise derived from the grid spacing.
    pub points: Option<usize>,
    pub motion: MotionParams,
    pub origin: Origin,
}

impl BodySpec {
    /// Discretizes the body for a grid of minimum width `h`.
    pub fn build(&self, h: f64) -> Result<LagrangianBody> {
        let setup = Error::Setup;
        let body = match (&self.shape, self.points) {
            (ShapeSpec::Circle { diameter }, None) => discretize_circle(self.center, *diameter, h),
            (ShapeSpec::Circle { diameter }, Some(n)) => circle_with_points(self.center, *diameter, n),
            (ShapeSpec::Ellipse { chord, thickness }, None) => discretize_ellipse(self.center, *chord, *thickness, h),
            (ShapeSpec::Ellipse { chord, thickness }, Some(n)) => ellipse_with_points(self.center, *chord, *thickness, n),
            (ShapeSpec::PointFile { path }, _) => {
                let pts = read_point_file(path)?;
                LagrangianBody::from_points(pts)
            }
        }
        .map_err(setup)?;
        Ok(body.with_motion(self.motion))
    }
}

fn read_point_file(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pts = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format {
                path: path.display().to_string(),
                line: k + 1,
                msg: format!("expected `x y`, found `{line}`"),
            })?;
        if v.len() != 2 {
            return Err(Error::Format {
                path: path.display().to_string(),
                line: k + 1,
                msg: format!("expected two numbers, found {}", v.len()),
            });
        }
        pts.push([v[0], v[1]]);
    }
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouetteSpec {
    pub center: [f64; 2],
    pub r_i: f64,
    pub r_o: f64,
    pub omega: f64,
    /// Distance kept from both cylinders when sampling the profile.
    pub margin: f64,
    pub rays: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub name: String,
    pub grid: GridSpec,
    pub nu: f64,
    /// Velocity and length scales of the force coefficients.
    pub u_ref: f64,
    pub length: f64,
    pub dt: f64,
    pub steps: usize,
    pub t0: f64,
    /// Vorticity snapshot every this many steps (0: none).
    pub output_interval: usize,
    /// Checkpoint every this many steps (0: only at the end).
    pub checkpoint_interval: usize,
    pub initial_velocity: [f64; 2],
    pub bodies: Vec<BodySpec>,
    pub bc: BoundaryConditions,
    pub stepping: SteppingParams,
    pub output_dir: Option<PathBuf>,
    pub vorticity: bool,
    /// Leading fraction of the force history left out of the oscillation
    /// summary.
    pub discard: f64,
    pub couette: Option<CouetteSpec>,
}

struct Entry {
    key: String,
    value: String,
    line: usize,
    used: Cell<bool>,
}

struct Section {
    name: String,
    label: Option<String>,
    line: usize,
    entries: Vec<Entry>,
}

const SECTIONS: &[&str] = &[
    "case", "grid", "fluid", "time", "initial", "boundary", "body", "solver", "output", "couette",
];

fn split_sections(text: &str, path: &str) -> Result<Vec<Section>> {
    let err = |line: usize, msg: String| Error::Config {
        path: path.to_string(),
        line,
        msg,
    };
    let mut sections: Vec<Section> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, format!("unterminated section header `{line}`")))?;
            let mut words = inner.split_whitespace();
            let name = words.next().ok_or_else(|| err(line_no, "empty section header".into()))?;
            let label = words.next().map(str::to_string);
            if words.next().is_some() {
                return Err(err(line_no, format!("malformed section header `{line}`")));
            }
            if !SECTIONS.contains(&name) {
                return Err(err(line_no, format!("unknown section [{name}]")));
            }
            if name == "body" {
                if let Some(prev) = sections.iter().find(|s| s.name == "body" && s.label == label) {
                    return Err(err(
                        line_no,
                        format!("duplicate body section (first defined on line {})", prev.line),
                    ));
                }
            } else {
                if label.is_some() {
                    return Err(err(line_no, format!("section [{name}] takes no name")));
                }
                if let Some(prev) = sections.iter().find(|s| s.name == name) {
                    return Err(err(
                        line_no,
                        format!("duplicate section [{name}] (first defined on line {})", prev.line),
                    ));
                }
            }
            sections.push(Section {
                name: name.to_string(),
                label,
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        let sec = sections
            .last_mut()
            .ok_or_else(|| err(line_no, format!("key `{key}` outside of any section")))?;
        if key.is_empty() || value.is_empty() {
            return Err(err(line_no, format!("expected `key = value`, found `{line}`")));
        }
        if let Some(prev) = sec.entries.iter().find(|e| e.key == key) {
            return Err(err(line_no, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        sec.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: line_no,
            used: Cell::new(false),
        });
    }
    Ok(sections)
}

/// Typed access to one section; remembers which keys were read.
struct Reader<'a> {
    sec: Option<&'a Section>,
    name: String,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn origin(&self, line: usize) -> Origin {
        Origin {
            path: self.path.to_string(),
            line,
        }
    }

    fn section_origin(&self) -> Origin {
        self.origin(self.sec.map_or(0, |s| s.line))
    }

    fn entry(&self, key: &str) -> Option<&'a Entry> {
        let e = self.sec?.entries.iter().find(|e| e.key == key)?;
        e.used.set(true);
        Some(e)
    }

    fn has(&self, key: &str) -> bool {
        self.sec.is_some_and(|s| s.entries.iter().any(|e| e.key == key))
    }

    fn fail(&self, e: &Entry, msg: impl core::fmt::Display) -> Error {
        self.origin(e.line).error(format!("[{}] {}: {msg}", self.name, e.key))
    }

    fn missing(&self, key: &str) -> Error {
        self.section_origin()
            .error(format!("[{}] is missing required key `{key}`", self.name))
    }

    fn str(&self, key: &str) -> Option<&'a str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    fn numbers(&self, key: &str, counts: &[usize]) -> Result<Option<(Vec<f64>, usize)>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        let v: Vec<f64> = e
            .value
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|_| self.fail(e, format!("`{w}` is not a number"))))
            .collect::<Result<_>>()?;
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(self.fail(e, format!("{bad} is not finite")));
        }
        if !counts.contains(&v.len()) {
            let want: Vec<String> = counts.iter().map(usize::to_string).collect();
            return Err(self.fail(e, format!("expected {} number(s), found {}", want.join(" or "), v.len())));
        }
        Ok(Some((v, e.line)))
    }

    fn f64_checked(&self, key: &str, check: impl Fn(f64) -> bool, rule: &str) -> Result<Option<f64>> {
        match self.numbers(key, &[1])? {
            None => Ok(None),
            Some((v, _)) => {
                if !check(v[0]) {
                    let e = self.entry(key).expect("present");
                    return Err(self.fail(e, format!("{} violates `{rule}`", v[0])));
                }
                Ok(Some(v[0]))
            }
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.f64_checked(key, |_| true, "")
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        self.f64_checked(key, |x| x > 0.0, "> 0")
    }

    fn required<T>(&self, key: &str, v: Result<Option<T>>) -> Result<T> {
        v?.ok_or_else(|| self.missing(key))
    }

    fn point(&self, key: &str) -> Result<Option<[f64; 2]>> {
        Ok(self.numbers(key, &[2])?.map(|(v, _)| [v[0], v[1]]))
    }

    fn rect(&self, key: &str) -> Result<Option<Rect>> {
        let Some((v, _)) = self.numbers(key, &[4])? else {
            return Ok(None);
        };
        if !(v[0] < v[1] && v[2] < v[3]) {
            let e = self.entry(key).expect("present");
            return Err(self.fail(e, "expected `x0 x1 y0 y1` with x0 < x1 and y0 < y1"));
        }
        Ok(Some(Rect::new(v[0], v[1], v[2], v[3])))
    }

    fn count(&self, key: &str, min: usize) -> Result<Option<usize>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        let n: usize = e
            .value
            .parse()
            .map_err(|_| self.fail(e, format!("`{}` is not a non-negative integer", e.value)))?;
        if n < min {
            return Err(self.fail(e, format!("{n} violates `>= {min}`")));
        }
        Ok(Some(n))
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        match e.value.as_str() {
            "true" | "yes" | "on" => Ok(Some(true)),
            "false" | "no" | "off" => Ok(Some(false)),
            other => Err(self.fail(e, format!("`{other}` is not a boolean"))),
        }
    }

    /// `end:ratio` tokens, e.g. `0.78:1.02 15:1`.
    fn segments(&self, key: &str) -> Result<Option<Vec<Segment>>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for w in e.value.split_whitespace() {
            let parsed = w
                .split_once(':')
                .and_then(|(a, b)| Some((a.parse::<f64>().ok()?, b.parse::<f64>().ok()?)));
            let (end, ratio) = parsed.ok_or_else(|| self.fail(e, format!("`{w}` is not `end:ratio`")))?;
            if !(ratio >= 1.0) {
                return Err(self.fail(e, format!("stretching ratio {ratio} violates `>= 1`")));
            }
            out.push(Segment { end, ratio });
        }
        Ok(Some(out))
    }

    fn finish(&self) -> Result<()> {
        if let Some(sec) = self.sec {
            if let Some(e) = sec.entries.iter().find(|e| !e.used.get()) {
                return Err(self.origin(e.line).error(format!("unknown key `{}` in [{}]", e.key, self.name)));
            }
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<CaseConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        line: 0,
        msg: format!("cannot read case file: {e}"),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let name = path.file_stem().map_or("case".into(), |s| s.to_string_lossy().into_owned());
    parse_config_str(&text, &path.display().to_string(), base, &name)
}

/// Parses case text. `path` labels error messages, relative file names
/// resolve against `base`, and `default_name` is used when `[case]` gives
/// none.
pub fn parse_config_str(text: &str, path: &str, base: &Path, default_name: &str) -> Result<CaseConfig> {
    let sections = split_sections(text, path)?;
    let reader = |name: &str| Reader {
        sec: sections.iter().find(|s| s.name == name),
        name: name.to_string(),
        path,
    };
    let case = reader("case");
    let name = case.str("name").unwrap_or(default_name).to_string();
    case.str("description");
    case.finish()?;

    let grid_r = reader("grid");
    if grid_r.sec.is_none() {
        return Err(Origin { path: path.into(), line: 0 }.error("missing [grid] section"));
    }
    let grid = parse_grid(&grid_r)?;
    let slice_rows = grid_r.count("slice_rows", 1)?;
    grid_r.finish()?;
    let h = match &grid {
        GridSpec::Cells { domain, nx, ny } => (domain.width() / *nx as f64).min(domain.height() / *ny as f64),
        GridSpec::Stretched { x, .. } => x.h,
    };

    let fluid = reader("fluid");
    let u_ref = fluid.positive("u_ref")?.unwrap_or(1.0);
    let length = fluid.positive("length")?.unwrap_or(1.0);
    let nu = match (fluid.positive("nu")?, fluid.positive("re")?) {
        (Some(nu), None) => nu,
        (None, Some(re)) => u_ref * length / re,
        (Some(nu), Some(re)) => {
            let implied = u_ref * length / nu;
            if (implied - re).abs() > 1e-9 * re {
                let e = fluid.entry("re").expect("present");
                return Err(fluid.fail(
                    e,
                    format!("re = {re} contradicts u_ref·length/nu = {implied}"),
                ));
            }
            nu
        }
        (None, None) => {
            return Err(fluid.section_origin().error("[fluid] needs `nu` or `re`"));
        }
    };
    fluid.finish()?;

    let time = reader("time");
    let dt = time.required("dt", time.positive("dt"))?;
    let steps = time.required("steps", time.count("steps", 1))?;
    let t0 = time.f64("start")?.unwrap_or(0.0);
    let output_interval = time.count("output_interval", 0)?.unwrap_or(0);
    let checkpoint_interval = time.count("checkpoint_interval", 0)?.unwrap_or(0);
    time.finish()?;

    let initial = reader("initial");
    let initial_velocity = initial.point("velocity")?.unwrap_or([0.0; 2]);
    initial.finish()?;

    let bc = parse_boundary(&reader("boundary"))?;

    let mut bodies = Vec::new();
    for sec in sections.iter().filter(|s| s.name == "body") {
        let label = sec.label.clone().unwrap_or_else(|| format!("body{}", bodies.len()));
        let r = Reader {
            sec: Some(sec),
            name: format!("body {label}"),
            path,
        };
        bodies.push(parse_body(&r, label, base, u_ref)?);
    }

    let mut stepping = SteppingParams::new(dt, nu);
    parse_solver(&reader("solver"), &mut stepping)?;
    if let Some(n) = slice_rows {
        stepping.slice_rows = n;
    }

    let output = reader("output");
    let output_dir = output.str("directory").map(|d| base.join(d));
    let vorticity = output.bool("vorticity")?.unwrap_or(true);
    let discard = output
        .f64_checked("discard", |x| (0.0..1.0).contains(&x), "0 <= discard < 1")?
        .unwrap_or(0.5);
    output.finish()?;

    let couette = parse_couette(&reader("couette"), h)?;

    let cfg = CaseConfig {
        name,
        grid,
        nu,
        u_ref,
        length,
        dt,
        steps,
        t0,
        output_interval,
        checkpoint_interval,
        initial_velocity,
        bodies,
        bc,
        stepping,
        output_dir,
        vorticity,
        discard,
        couette,
    };
    Ok(cfg)
}

fn parse_grid(r: &Reader) -> Result<GridSpec> {
    let domain = r.required("domain", r.rect("domain"))?;
    if let Some((v, line)) = r.numbers("cells", &[1, 2])? {
        let bad = |m: &str| r.origin(line).error(format!("[grid] cells: {m}"));
        let n: Vec<usize> = v
            .iter()
            .map(|&x| (x >= 1.0 && x.fract() == 0.0).then_some(x as usize).ok_or_else(|| bad("expected positive integers")))
            .collect::<Result<_>>()?;
        for key in ["uniform", "h", "ratio", "x_lower", "x_upper", "y_lower", "y_upper"] {
            if r.has(key) {
                return Err(bad(&format!("cannot be combined with `{key}`")));
            }
        }
        let (nx, ny) = (n[0], *n.last().expect("non-empty"));
        return Ok(GridSpec::Cells { domain, nx, ny });
    }
    let uniform = r.rect("uniform")?.unwrap_or(domain);
    if !domain.contains(&uniform) {
        return Err(r.section_origin().error("[grid] uniform region must lie inside the domain"));
    }
    let h = r.required("h", r.positive("h"))?;
    let ratios = match r.numbers("ratio", &[1, 4])? {
        None => [1.0; 4],
        Some((v, line)) => {
            if v.iter().any(|&x| !(x >= 1.0)) {
                return Err(r.origin(line).error("[grid] ratio: stretching ratios must be >= 1"));
            }
            if v.len() == 1 {
                [v[0]; 4]
            } else {
                [v[0], v[1], v[2], v[3]]
            }
        }
    };
    let axis = |lo_key: &str, hi_key: &str, start: f64, end: f64, lo: f64, hi: f64, rr: [f64; 2]| -> Result<AxisLayout> {
        let mut layout = AxisLayout::simple(start, end, lo, hi, h, rr);
        for (key, edge, upper) in [(lo_key, start, false), (hi_key, end, true)] {
            if let Some(segs) = r.segments(key)? {
                let e = r.entry(key).expect("present");
                let last = segs.last().ok_or_else(|| r.fail(e, "empty segment list"))?;
                if (last.end - edge).abs() > 1e-12 * edge.abs().max(1.0) {
                    return Err(r.fail(e, format!("last segment ends at {} but the domain edge is {edge}", last.end)));
                }
                let mut prev = if upper { hi } else { lo };
                for s in &segs {
                    let outward = if upper { s.end > prev } else { s.end < prev };
                    if !outward {
                        return Err(r.fail(e, "segment ends must move outward from the uniform region"));
                    }
                    prev = s.end;
                }
                if upper {
                    layout.upper = segs;
                } else {
                    layout.lower = segs;
                }
            }
        }
        Ok(layout)
    };
    let x = axis("x_lower", "x_upper", domain.x0, domain.x1, uniform.x0, uniform.x1, [ratios[0], ratios[1]])?;
    let y = axis("y_lower", "y_upper", domain.y0, domain.y1, uniform.y0, uniform.y1, [ratios[2], ratios[3]])?;
    Ok(GridSpec::Stretched { x, y })
}

fn parse_boundary(r: &Reader) -> Result<BoundaryConditions> {
    let mut bc = BoundaryConditions::CLOSED;
    for (key, slot) in [
        ("left", &mut bc.left),
        ("right", &mut bc.right),
        ("bottom", &mut bc.bottom),
        ("top", &mut bc.top),
    ] {
        let Some(e) = r.entry(key) else { continue };
        let words: Vec<&str> = e.value.split_whitespace().collect();
        let nums = |w: &[&str]| -> Result<Vec<f64>> {
            w.iter()
                .map(|s| s.parse::<f64>().map_err(|_| r.fail(e, format!("`{s}` is not a number"))))
                .collect()
        };
        *slot = match words.as_slice() {
            ["no-slip"] => EdgeBc::NO_SLIP,
            ["dirichlet", rest @ ..] if rest.len() == 2 => {
                let v = nums(rest)?;
                EdgeBc {
                    u: ComponentBc::Dirichlet(v[0]),
                    v: ComponentBc::Dirichlet(v[1]),
                }
            }
            ["convective", rest @ ..] if rest.len() == 1 => {
                let c = nums(rest)?[0];
                if !(c > 0.0) {
                    return Err(r.fail(e, "convection speed must be > 0"));
                }
                EdgeBc {
                    u: ComponentBc::Convective(c),
                    v: ComponentBc::Convective(c),
                }
            }
            _ => {
                return Err(r.fail(e, "expected `no-slip`, `dirichlet U V` or `convective C`"));
            }
        };
    }
    r.finish()?;
    bc.validate().map_err(|err| r.section_origin().error(format!("[boundary] {err}")))?;
    Ok(bc)
}

fn parse_body(r: &Reader, name: String, base: &Path, u_ref: f64) -> Result<BodySpec> {
    let origin = r.section_origin();
    let center = r.point("center")?.unwrap_or([0.0; 2]);
    let shape_name = r.str("shape").ok_or_else(|| r.missing("shape"))?;
    let mut chord = 1.0;
    let shape = match shape_name {
        "circle" => ShapeSpec::Circle {
            diameter: r.required("diameter", r.positive("diameter"))?,
        },
        "ellipse" => {
            chord = r.required("chord", r.positive("chord"))?;
            let thickness = r.required(
                "thickness",
                r.f64_checked("thickness", |x| x > 0.0 && x <= 1.0, "0 < thickness <= 1"),
            )?;
            ShapeSpec::Ellipse { chord, thickness }
        }
        "points" => {
            let file = r.str("file").ok_or_else(|| r.missing("file"))?;
            let path = base.join(file);
            if !path.is_file() {
                let e = r.entry("file").expect("present");
                return Err(r.fail(e, format!("{} does not exist", path.display())));
            }
            ShapeSpec::PointFile { path }
        }
        other => {
            let e = r.entry("shape").expect("present");
            return Err(r.fail(e, format!("unknown shape `{other}` (circle, ellipse, points)")));
        }
    };
    let points = r.count("points", 4)?;
    let kind = match r.str("motion").unwrap_or("stationary") {
        "stationary" => MotionKind::Stationary,
        "rotating" => MotionKind::Rotating {
            omega: r.required("omega", r.f64("omega"))?,
        },
        "spinning" => MotionKind::Spinning {
            omega: r.required("omega", r.f64("omega"))?,
        },
        "heaving" => {
            let k = r.required("k", r.positive("k"))?;
            let kh = r.required("kh", r.f64("kh"))?;
            MotionKind::Heaving { k, kh, chord, u_ref }
        }
        "flapping" => MotionKind::Flapping {
            a0: r.required("amplitude", r.f64("amplitude"))?,
            f: r.required("frequency", r.positive("frequency"))?,
            alpha0: r.required("alpha0", r.f64("alpha0"))?,
            beta: r.required("beta", r.f64("beta"))?,
            phase: r.f64("phase")?.unwrap_or(0.0),
        },
        other => {
            let e = r.entry("motion").expect("present");
            return Err(r.fail(
                e,
                format!("unknown motion `{other}` (stationary, rotating, spinning, heaving, flapping)"),
            ));
        }
    };
    let nudge = match (r.point("nudge_offset")?, r.positive("nudge_duration")?) {
        (None, None) => None,
        (Some(offset), duration) => Some(Nudge {
            offset,
            duration: duration.unwrap_or(1.0),
        }),
        (None, Some(_)) => return Err(r.missing("nudge_offset")),
    };
    r.finish()?;
    let motion = MotionParams { kind, nudge };
    motion
        .validate()
        .map_err(|e| origin.error(format!("[body {name}] {e}")))?;
    Ok(BodySpec {
        name,
        shape,
        center,
        points,
        motion,
        origin,
    })
}

fn parse_solver(r: &Reader, p: &mut SteppingParams) -> Result<()> {
    let tol = |key: &str| r.f64_checked(key, |x| x > 0.0 && x < 1.0, "0 < tol < 1");
    if let Some(t) = tol("rel_tol")? {
        p.solve1.rel_tol = t;
        p.solve2.rel_tol = t;
    }
    if let Some(t) = tol("solve1_rel_tol")? {
        p.solve1.rel_tol = t;
    }
    if let Some(t) = tol("solve2_rel_tol")? {
        p.solve2.rel_tol = t;
    }
    if let Some(n) = r.count("max_iters", 1)? {
        p.solve1.max_iters = n;
        p.solve2.max_iters = n;
    }
    if let Some(e) = r.entry("solver2") {
        p.solver2 = SolverKind::parse(&e.value)
            .ok_or_else(|| r.fail(e, format!("unknown solver `{}` (cg, pcg-diag, pcg-sa, amg)", e.value)))?;
    }
    if let Some(n) = r.count("n_pc", 1)? {
        p.n_pc = n;
    }
    if let Some(n) = r.count("order", 1)? {
        if n > 3 {
            let e = r.entry("order").expect("present");
            return Err(r.fail(e, "order must be 1, 2 or 3"));
        }
        p.n_order = n;
    }
    let mut sa = SaParams::default();
    if let Some(t) = r.f64_checked("theta", |x| (0.0..1.0).contains(&x), "0 <= theta < 1")? {
        sa.theta = t;
    }
    if let Some(n) = r.count("max_coarse", 1)? {
        sa.max_coarse = n;
    }
    p.sa = sa;
    if let Some(n) = r.count("max_tightenings", 0)? {
        p.max_tightenings = n;
    }
    r.finish()?;
    Ok(())
}

fn parse_couette(r: &Reader, h: f64) -> Result<Option<CouetteSpec>> {
    if r.sec.is_none() {
        return Ok(None);
    }
    let center = r.point("center")?.unwrap_or([0.0; 2]);
    let r_i = r.required("r_i", r.positive("r_i"))?;
    let r_o = r.required("r_o", r.positive("r_o"))?;
    if !(r_o > r_i) {
        return Err(r.section_origin().error("[couette] needs r_o > r_i"));
    }
    let omega = r.required("omega", r.f64("omega"))?;
    let margin = r.f64_checked("margin", |x| x >= 0.0, ">= 0")?.unwrap_or(2.0 * h);
    let rays = r.count("rays", 1)?.unwrap_or(8);
    let samples = r.count("samples", 2)?.unwrap_or(21);
    r.finish()?;
    Ok(Some(CouetteSpec {
        center,
        r_i,
        r_o,
        omega,
        margin,
        rays,
        samples,
    }))
}
