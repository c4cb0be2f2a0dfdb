//! Plain-text file formats: checkpoints, matrices, grid dumps, vorticity
//! snapshots.
//!
//! Floating-point values are written with Rust's shortest round-trip
//! formatting, so reading a file back gives bit-identical numbers.

use crate::error::{Error, Result};
use ibpm_core::grid::StaggeredGrid;
use ibpm_core::operators::{BoundaryValues, Edge, EdgeValues};
use ibpm_core::sparse::{CsrMatrix, Triplets};
use ibpm_core::stepper::FlowState;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &str = "ibpm-checkpoint 1";

/// Writes `contents` to `path` through a temporary file and a rename, so an
/// interrupted write never leaves a truncated file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn push_vec(out: &mut String, label: &str, v: &[f64]) {
    writeln!(out, "{label} {}", v.len()).expect("string write");
    for x in v {
        writeln!(out, "{x:e}").expect("string write");
    }
}

const EDGES: [(Edge, &str); 4] = [
    (Edge::Left, "left"),
    (Edge::Right, "right"),
    (Edge::Bottom, "bottom"),
    (Edge::Top, "top"),
];

pub fn checkpoint_to_string(state: &FlowState, dt: f64) -> String {
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC}").expect("string write");
    writeln!(out, "dt {dt:e}").expect("string write");
    writeln!(out, "t0 {:e}", state.t0).expect("string write");
    writeln!(out, "step_index {}", state.step_index).expect("string write");
    writeln!(out, "n_p {}", state.n_p).expect("string write");
    push_vec(&mut out, "q", &state.q);
    match &state.conv_prev {
        Some(c) => push_vec(&mut out, "conv_prev", c),
        None => out.push_str("conv_prev none\n"),
    }
    push_vec(&mut out, "lambda", &state.lambda);
    for (edge, name) in EDGES {
        let ev = state.bv.edge(edge);
        push_vec(&mut out, &format!("{name}.normal"), &ev.normal);
        push_vec(&mut out, &format!("{name}.tangential"), &ev.tangential);
    }
    out
}

pub fn write_checkpoint(path: &Path, state: &FlowState, dt: f64) -> Result<()> {
    write_atomic(path, &checkpoint_to_string(state, dt))
}

/// Line-oriented reader with positions for error messages.
struct Lines<'a> {
    path: String,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(path: &Path, text: &'a str) -> Self {
        Lines {
            path: path.display().to_string(),
            iter: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        loop {
            let (k, l) = self.iter.next().ok_or_else(|| self.err("unexpected end of file"))?;
            self.line = k + 1;
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                return Ok(l);
            }
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    /// `label value` line.
    fn field(&mut self, label: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == label => Ok(v.trim()),
            _ => Err(self.err(format!("expected `{label} ...`, found `{l}`"))),
        }
    }

    fn vector(&mut self, label: &str) -> Result<Vec<f64>> {
        let n: usize = {
            let v = self.field(label)?;
            self.parse(v)?
        };
        (0..n)
            .map(|_| {
                let l = self.next()?;
                self.parse(l)
            })
            .collect()
    }
}

pub fn read_checkpoint(path: &Path) -> Result<(FlowState, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Lines::new(path, &text);
    if r.next()? != CHECKPOINT_MAGIC {
        return Err(r.err(format!("not a checkpoint (expected `{CHECKPOINT_MAGIC}`)")));
    }
    let dt: f64 = {
        let v = r.field("dt")?;
        r.parse(v)?
    };
    let t0: f64 = {
        let v = r.field("t0")?;
        r.parse(v)?
    };
    let step_index: usize = {
        let v = r.field("step_index")?;
        r.parse(v)?
    };
    let n_p: usize = {
        let v = r.field("n_p")?;
        r.parse(v)?
    };
    let q = r.vector("q")?;
    let conv_prev = {
        let l = r.next()?;
        match l.split_once(' ') {
            Some(("conv_prev", "none")) => None,
            Some(("conv_prev", n)) => {
                let n: usize = r.parse(n.trim())?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    let l = r.next()?;
                    v.push(r.parse(l)?);
                }
                Some(v)
            }
            _ => return Err(r.err(format!("expected `conv_prev ...`, found `{l}`"))),
        }
    };
    let lambda = r.vector("lambda")?;
    let mut edges = Vec::new();
    for (_, name) in EDGES {
        let normal = r.vector(&format!("{name}.normal"))?;
        let tangential = r.vector(&format!("{name}.tangential"))?;
        edges.push(EdgeValues { normal, tangential });
    }
    let mut it = edges.into_iter();
    let mut next_edge = || it.next().expect("four edges");
    let bv = BoundaryValues {
        left: next_edge(),
        right: next_edge(),
        bottom: next_edge(),
        top: next_edge(),
    };
    if n_p > lambda.len() {
        return Err(r.err("n_p exceeds the length of lambda"));
    }
    let state = FlowState {
        q,
        conv_prev,
        lambda,
        bv,
        t0,
        step_index,
        n_p,
    };
    Ok((state, dt))
}

/// `n_rows n_cols nnz` followed by one 0-based `row col value` per entry.
pub fn matrix_to_string(a: &CsrMatrix) -> String {
    let mut out = String::with_capacity(32 * a.nnz() + 32);
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz()).expect("string write");
    for (i, j, v) in a.triplets() {
        writeln!(out, "{i} {j} {v:e}").expect("string write");
    }
    out
}

pub fn write_matrix(path: &Path, a: &CsrMatrix) -> Result<()> {
    write_atomic(path, &matrix_to_string(a))
}

/// Whether `text` starts like a matrix file (three integers on the first
/// content line).
pub fn looks_like_matrix(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| {
            let w: Vec<&str> = l.split_whitespace().collect();
            w.len() == 3 && w.iter().all(|x| x.parse::<usize>().is_ok())
        })
}

pub fn parse_matrix(path: &Path, text: &str) -> Result<CsrMatrix> {
    let mut r = Lines::new(path, text);
    let header = r.next()?;
    let dims: Vec<usize> = header.split_whitespace().map(|w| r.parse(w)).collect::<Result<_>>()?;
    let [n_rows, n_cols, nnz] = dims[..] else {
        return Err(r.err("expected `n_rows n_cols nnz`"));
    };
    let mut t = Triplets::with_capacity(n_rows, n_cols, nnz);
    for _ in 0..nnz {
        let l = r.next()?;
        let w: Vec<&str> = l.split_whitespace().collect();
        if w.len() != 3 {
            return Err(r.err(format!("expected `row col value`, found `{l}`")));
        }
        let (i, j, v): (usize, usize, f64) = (r.parse(w[0])?, r.parse(w[1])?, r.parse(w[2])?);
        if i >= n_rows || j >= n_cols {
            return Err(r.err(format!("entry ({i}, {j}) outside a {n_rows}x{n_cols} matrix")));
        }
        t.push(i, j, v);
    }
    Ok(t.to_csr())
}

pub fn read_matrix(path: &Path) -> Result<CsrMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(path, &text)
}

/// Face coordinates: a block of x faces, then a block of y faces, one value
/// per line, each block preceded by a `# x faces N` comment.
pub fn grid_dump(grid: &StaggeredGrid) -> String {
    let mut out = String::new();
    for (name, faces) in [("x", &grid.x_faces), ("y", &grid.y_faces)] {
        writeln!(out, "# {name} faces {}", faces.len()).expect("string write");
        for f in faces.iter() {
            writeln!(out, "{f:e}").expect("string write");
        }
    }
    out
}

/// Vorticity samples as `x y omega` lines.
pub fn vorticity_to_string(samples: &[[f64; 3]], t: f64) -> String {
    let mut out = String::with_capacity(48 * samples.len() + 32);
    writeln!(out, "# t = {t}").expect("string write");
    out.push_str("x y omega\n");
    for s in samples {
        writeln!(out, "{:e} {:e} {:e}", s[0], s[1], s[2]).expect("string write");
    }
    out
}
