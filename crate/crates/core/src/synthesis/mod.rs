//! Block-diagonal observer gain design making `W⊗A − K·D_C·(W⊗A)` Schur
//! stable.
//!
//! The closed loop decouples over groups of local state indices that are
//! not linked by `A` or by any `D_C` block, so the gain is designed group by
//! group with each `K_i` restricted to the group's rows and columns. Within
//! a group the default method runs cone-complementarity linearization on
//! the Lyapunov LMI pair and falls back to derivative-free descent on the
//! spectral radius.

mod ccl;
mod descent;
pub mod sdp;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::{assemble_ahat, kronecker, matrix_to_text, parse_matrix, spectral_radius, DenseMatrix};

/// `K = diag(K_1, …, K_n)`, one square block per CAV.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGain {
    blocks: Vec<DenseMatrix>,
}

impl ObserverGain {
    pub fn zeros(agents: usize, dim: usize) -> Self {
        Self {
            blocks: vec![DenseMatrix::zeros(dim, dim); agents],
        }
    }

    pub fn from_blocks(blocks: Vec<DenseMatrix>) -> Result<Self> {
        let dim = blocks.first().map_or(0, DenseMatrix::nrows);
        for b in &blocks {
            if b.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "gain block is {}x{}, expected {dim}x{dim}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self { blocks })
    }

    pub fn agent_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_dim(&self) -> usize {
        self.blocks.first().map_or(0, DenseMatrix::nrows)
    }

    pub fn block(&self, i: usize) -> &DenseMatrix {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[DenseMatrix] {
        &self.blocks
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let d = self.block_dim();
        let n = self.agent_count();
        let mut k = DenseMatrix::zeros(n * d, n * d);
        for (i, b) in self.blocks.iter().enumerate() {
            k.view_mut((i * d, i * d), (d, d)).copy_from(b);
        }
        k
    }

    /// Gain with the blocks of `removed` agents dropped.
    pub fn without_agents(&self, removed: &std::collections::BTreeSet<usize>) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .enumerate()
                .filter(|(i, _)| !removed.contains(i))
                .map(|(_, b)| b.clone())
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("gain {} {}\n", self.agent_count(), self.block_dim());
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(out, "[block {i}]");
            out.push_str(&matrix_to_text(b));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<(usize, String)> = Vec::new();
        let mut header = None;
        for (no, line) in text.lines().enumerate() {
            let trimmed = line.split('#').next().unwrap_or("").trim();
            if trimmed.is_empty() {
                continue;
            }
            if header.is_none() {
                let parts: Vec<&str> = trimmed.split_whitespace().collect();
                match parts.as_slice() {
                    ["gain", n, d] => {
                        let parse = |t: &str| {
                            t.parse::<usize>().map_err(|e| Error::Parse { line: no + 1, msg: format!("bad count `{t}`: {e}") })
                        };
                        header = Some((parse(n)?, parse(d)?));
                    }
                    _ => {
                        return Err(Error::Parse {
                            line: no + 1,
                            msg: "expected `gain <agents> <dim>` header".into(),
                        })
                    }
                }
            } else if trimmed.starts_with("[block") {
                sections.push((no + 1, String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(trimmed);
                body.push('\n');
            } else {
                return Err(Error::Parse { line: no + 1, msg: "entry outside a block section".into() });
            }
        }
        let (n, d) = header.ok_or(Error::Parse { line: 0, msg: "empty gain file".into() })?;
        if sections.len() != n {
            return Err(Error::Parse {
                line: 0,
                msg: format!("header declares {n} blocks, found {}", sections.len()),
            });
        }
        let mut blocks = Vec::with_capacity(n);
        for (line, body) in sections {
            let m = parse_matrix(&body).map_err(|e| match e {
                Error::Parse { line: l, msg } => Error::Parse { line: line + l, msg },
                other => other,
            })?;
            if m.shape() != (d, d) {
                return Err(Error::Parse { line, msg: format!("block is {}x{}, expected {d}x{d}", m.nrows(), m.ncols()) });
            }
            blocks.push(m);
        }
        Self::from_blocks(blocks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMethod {
    #[default]
    Ccl,
    SpectralDescent,
}

impl fmt::Display for GainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GainMethod::Ccl => "ccl",
            GainMethod::SpectralDescent => "descent",
        })
    }
}

impl FromStr for GainMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "ccl" => Ok(GainMethod::Ccl),
            "descent" | "spectral_descent" => Ok(GainMethod::SpectralDescent),
            other => Err(format!("unknown gain method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub method: GainMethod,
    /// Target is `ρ(Â) < 1 − margin`.
    pub margin: f64,
    /// Linearization rounds per group.
    pub max_iterations: usize,
    /// `tr(XY) − dim` below this ends the linearization loop.
    pub trace_tol: f64,
    /// Strictness of the Lyapunov LMI.
    pub lmi_epsilon: f64,
    pub descent_initial_step: f64,
    pub descent_min_step: f64,
    pub descent_max_evals: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            method: GainMethod::Ccl,
            margin: 1e-3,
            max_iterations: 50,
            trace_tol: 1e-6,
            lmi_epsilon: 1e-3,
            descent_initial_step: 0.25,
            descent_min_step: 1e-6,
            descent_max_evals: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub gain: ObserverGain,
    pub achieved_spectral_radius: f64,
    /// Method that produced the final gain.
    pub method: GainMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// One decoupled piece of the closed loop.
#[derive(Debug, Clone)]
pub(crate) struct GroupProblem {
    /// Local state indices in this group.
    pub states: Vec<usize>,
    /// `Q` restricted to the group, index `agent * |states| + position`.
    pub q: DenseMatrix,
    /// `D_C·Q` restricted likewise.
    pub dq: DenseMatrix,
    /// Free gain entries as group-level `(row, col)`, both in the same
    /// agent's block.
    pub free: Vec<(usize, usize)>,
}

impl GroupProblem {
    pub fn size(&self) -> usize {
        self.q.nrows()
    }

    pub fn closed_loop(&self, k: &[f64]) -> DenseMatrix {
        let mut ahat = self.q.clone();
        for (&(r, c), &v) in self.free.iter().zip(k) {
            if v != 0.0 {
                let row = self.dq.row(c) * v;
                let mut target = ahat.row_mut(r);
                target -= row;
            }
        }
        ahat
    }

    pub fn radius(&self, k: &[f64]) -> f64 {
        spectral_radius(&self.closed_loop(k)).unwrap_or(f64::INFINITY)
    }
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut x = x;
    while parent[x] != root {
        let next = parent[x];
        parent[x] = root;
        x = next;
    }
    root
}

/// Splits the local state indices into groups closed under `A` and every
/// `D_C` block.
pub(crate) fn state_groups(a: &DenseMatrix, dc: &DenseMatrix, agents: usize) -> Vec<Vec<usize>> {
    let d = a.nrows();
    let mut parent: Vec<usize> = (0..d).collect();
    let link = |x: usize, y: usize, parent: &mut Vec<usize>| {
        let (rx, ry) = (find(parent, x), find(parent, y));
        if rx != ry {
            parent[rx.max(ry)] = rx.min(ry);
        }
    };
    for r in 0..d {
        for c in 0..d {
            if a[(r, c)] != 0.0 {
                link(r, c, &mut parent);
            }
            for i in 0..agents {
                if dc[(i * d + r, i * d + c)] != 0.0 {
                    link(r, c, &mut parent);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; d];
    for s in 0..d {
        let root = find(&mut parent, s);
        if root_slot[root] == usize::MAX {
            root_slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[root]].push(s);
    }
    groups
}

fn group_problem(q: &DenseMatrix, dq: &DenseMatrix, dc: &DenseMatrix, d: usize, agents: usize, states: Vec<usize>) -> GroupProblem {
    let g = states.len();
    let global: Vec<usize> = (0..agents).flat_map(|i| states.iter().map(move |&s| i * d + s)).collect();
    let sub = |m: &DenseMatrix| DenseMatrix::from_fn(global.len(), global.len(), |r, c| m[(global[r], global[c])]);
    let mut free = Vec::new();
    for i in 0..agents {
        for (pc, &sc) in states.iter().enumerate() {
            let row_live = (0..d).any(|x| dc[(i * d + sc, i * d + x)] != 0.0);
            if !row_live {
                continue;
            }
            for pr in 0..g {
                free.push((i * g + pr, i * g + pc));
            }
        }
    }
    GroupProblem {
        states,
        q: sub(q),
        dq: sub(dq),
        free,
    }
}

fn check_block_diagonal(dc: &DenseMatrix, agents: usize, d: usize) -> Result<()> {
    for r in 0..dc.nrows() {
        for c in 0..dc.ncols() {
            if r / d != c / d && dc[(r, c)] != 0.0 {
                return Err(Error::NotBlockDiagonal(format!(
                    "D_C entry ({r}, {c}) couples agents {} and {} of {agents}",
                    r / d,
                    c / d
                )));
            }
        }
    }
    Ok(())
}

/// Designs `K` so that `ρ(W⊗A − K·D_C·(W⊗A)) < 1 − margin`. Failure to
/// reach the target is reported through `converged`, not as an error.
pub fn synthesize_gain(w: &DenseMatrix, a: &DenseMatrix, dc: &DenseMatrix, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    if !w.is_square() {
        return Err(Error::NotSquare { rows: w.nrows(), cols: w.ncols() });
    }
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let (n, d) = (w.nrows(), a.nrows());
    if dc.shape() != (n * d, n * d) {
        return Err(Error::DimensionMismatch(format!(
            "D_C is {}x{}, expected {}x{}",
            dc.nrows(),
            dc.ncols(),
            n * d,
            n * d
        )));
    }
    check_block_diagonal(dc, n, d)?;
    let q = kronecker(w, a)?;
    let dq = dc * &q;
    let target = 1.0 - cfg.margin;

    let mut blocks = vec![DenseMatrix::zeros(d, d); n];
    let mut iterations = 0;
    let mut used = cfg.method;
    for states in state_groups(a, dc, n) {
        let prob = group_problem(&q, &dq, dc, d, n, states);
        let (k, iters, method) = design_group(&prob, cfg, target);
        iterations += iters;
        if method == GainMethod::SpectralDescent {
            used = GainMethod::SpectralDescent;
        }
        let g = prob.states.len();
        for (&(r, c), &v) in prob.free.iter().zip(&k) {
            let agent = r / g;
            blocks[agent][(prob.states[r % g], prob.states[c % g])] = v;
        }
    }
    let gain = ObserverGain::from_blocks(blocks)?;
    let rho = spectral_radius(&assemble_ahat(w, a, &gain, dc)?)?;
    Ok(SynthesisResult {
        gain,
        achieved_spectral_radius: rho,
        method: used,
        iterations,
        converged: rho < target,
    })
}

fn design_group(prob: &GroupProblem, cfg: &SynthesisConfig, target: f64) -> (Vec<f64>, usize, GainMethod) {
    let zero = vec![0.0; prob.free.len()];
    if prob.free.is_empty() || prob.radius(&zero) < target {
        return (zero, 0, cfg.method);
    }
    let (start, iters) = match cfg.method {
        GainMethod::Ccl => {
            let out = ccl::run(prob, cfg, target);
            if out.radius < target {
                return (out.k, out.iterations, GainMethod::Ccl);
            }
            (out.k, out.iterations)
        }
        GainMethod::SpectralDescent => (zero, 0),
    };
    let out = descent::run(prob, cfg, target, start);
    (out.k, iters + out.evaluations, GainMethod::SpectralDescent)
}
