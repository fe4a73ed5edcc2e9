//! Dense linear algebra for the networked observer: Kronecker products,
//! consensus weights, the shared-observation matrix `D_C`, the closed-loop
//! error matrix and spectral radius.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::structural::SensorPlacement;
use crate::synthesis::ObserverGain;

pub type DenseMatrix = DMatrix<f64>;
pub type DenseVector = DVector<f64>;

/// Default cap on either dimension of a Kronecker product.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Tolerance used when validating row sums of consensus weights.
pub const STOCHASTIC_TOL: f64 = 1e-9;

pub fn kronecker(lhs: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    kronecker_capped(lhs, rhs, DEFAULT_MAX_DIM)
}

pub fn kronecker_capped(lhs: &DenseMatrix, rhs: &DenseMatrix, max_dim: usize) -> Result<DenseMatrix> {
    let rows = lhs.nrows() * rhs.nrows();
    let cols = lhs.ncols() * rhs.ncols();
    let requested = rows.max(cols);
    if requested > max_dim {
        return Err(Error::DimensionCap { requested, max: max_dim });
    }
    Ok(lhs.kronecker(rhs))
}

/// How consensus weights are assigned on a neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightRule {
    /// `w_ij = 1 / |N_i|`.
    #[default]
    Uniform,
    /// Link weights normalized per row; unweighted links count as 1.
    LinkWeights,
}

/// Row-stochastic `W` with `w_ij != 0` exactly when `j -> i` is a link
/// (`j` is in the neighbourhood of `i`).
pub fn build_row_stochastic(g: &DirectedGraph, rule: WeightRule) -> Result<DenseMatrix> {
    let n = g.node_count();
    let mut w = DenseMatrix::zeros(n, n);
    for i in 0..n {
        if !g.has_self_loop(i) {
            return Err(Error::MissingSelfLoop(i));
        }
        let hood = g.in_neighbors(i);
        if n > 1 && hood.len() == 1 && g.out_neighbors(i).len() == 1 {
            return Err(Error::IsolatedNode(i));
        }
        match rule {
            WeightRule::Uniform => {
                let share = 1.0 / hood.len() as f64;
                for &j in &hood {
                    w[(i, j)] = share;
                }
            }
            WeightRule::LinkWeights => {
                let raw: Vec<f64> = hood.iter().map(|&j| g.weight(j, i).unwrap_or(1.0)).collect();
                if let Some(bad) = raw.iter().find(|v| !v.is_finite() || **v <= 0.0) {
                    return Err(Error::DimensionMismatch(format!(
                        "link weight {bad} into node {i} must be positive"
                    )));
                }
                let total: f64 = raw.iter().sum();
                for (&j, v) in hood.iter().zip(raw) {
                    w[(i, j)] = v / total;
                }
            }
        }
    }
    Ok(w)
}

/// Checks nonnegativity and unit row sums within `tol`.
pub fn check_row_stochastic(w: &DenseMatrix, tol: f64) -> Result<()> {
    if !w.is_square() {
        return Err(Error::NotSquare { rows: w.nrows(), cols: w.ncols() });
    }
    for (row, r) in w.row_iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if r.iter().any(|&v| v < -tol || !v.is_finite()) || (sum - 1.0).abs() > tol {
            return Err(Error::NotRowStochastic { row, sum });
        }
    }
    Ok(())
}

/// `sum_{j in N_i} C_j^T C_j` for one agent.
pub fn shared_observation_block(
    placement: &SensorPlacement,
    neighbourhood: &[usize],
    state_dim: usize,
) -> Result<DenseMatrix> {
    let mut block = DenseMatrix::zeros(state_dim, state_dim);
    for &j in neighbourhood {
        for &s in placement.measured(j) {
            if s >= state_dim {
                return Err(Error::StateOutOfRange { index: s, dim: state_dim });
            }
            block[(s, s)] += 1.0;
        }
    }
    Ok(block)
}

/// Block-diagonal `D_C` with block `i = sum_{j in N_i} C_j^T C_j`.
pub fn build_dc(placement: &SensorPlacement, w_graph: &DirectedGraph, state_dim: usize) -> Result<DenseMatrix> {
    let n = w_graph.node_count();
    if placement.cav_count() != n {
        return Err(Error::DimensionMismatch(format!(
            "placement has {} agents, graph has {n}",
            placement.cav_count()
        )));
    }
    let mut dc = DenseMatrix::zeros(n * state_dim, n * state_dim);
    for i in 0..n {
        if !w_graph.has_self_loop(i) {
            return Err(Error::MissingSelfLoop(i));
        }
        let block = shared_observation_block(placement, &w_graph.in_neighbors(i), state_dim)?;
        dc.view_mut((i * state_dim, i * state_dim), (state_dim, state_dim))
            .copy_from(&block);
    }
    Ok(dc)
}

/// Closed-loop error matrix `W⊗A − K·D_C·(W⊗A)`.
pub fn assemble_ahat(w: &DenseMatrix, a: &DenseMatrix, k: &ObserverGain, dc: &DenseMatrix) -> Result<DenseMatrix> {
    let q = kronecker(w, a)?;
    let dim = q.nrows();
    if k.agent_count() != w.nrows() || k.block_dim() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "gain has {} blocks of size {}, expected {} of size {}",
            k.agent_count(),
            k.block_dim(),
            w.nrows(),
            a.nrows()
        )));
    }
    if dc.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "D_C is {}x{}, expected {dim}x{dim}",
            dc.nrows(),
            dc.ncols()
        )));
    }
    let kd = k.to_dense() * dc;
    Ok(&q - kd * &q)
}

/// All eigenvalues of a square matrix via the real Schur form.
pub fn eigenvalues(m: &DenseMatrix) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    // The QR sweep can stall at machine-precision deflation on defective
    // spectra; slightly looser thresholds still resolve them.
    for eps in [f64::EPSILON, 1e-14, 1e-12] {
        if let Some(schur) = Schur::try_new(m.clone(), eps, 300 * m.nrows()) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::EigenFailure)
}

pub fn spectral_radius(m: &DenseMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `rows cols` header followed by one line per row. `{}` formatting of
/// `f64` is the shortest decimal that parses back to the same value.
pub fn matrix_to_text(m: &DenseMatrix) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for r in m.row_iter() {
        let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses one matrix in the format written by [`matrix_to_text`]. Entries
/// may be spread over any number of lines.
pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let mut tokens = text
        .lines()
        .enumerate()
        .flat_map(|(i, l)| {
            l.split('#')
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(move |t| (i + 1, t))
                .collect::<Vec<_>>()
        });
    let mut dim = |what: &str| -> Result<usize> {
        let (line, t) = tokens.next().ok_or(Error::Parse { line: 0, msg: format!("missing {what}") })?;
        t.parse::<usize>()
            .map_err(|e| Error::Parse { line, msg: format!("bad {what} `{t}`: {e}") })
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    for (line, t) in tokens.by_ref().take(rows * cols) {
        let v = t
            .parse::<f64>()
            .map_err(|e| Error::Parse { line, msg: format!("bad entry `{t}`: {e}") })?;
        data.push(v);
    }
    if data.len() != rows * cols {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected {} entries, found {}", rows * cols, data.len()),
        });
    }
    if let Some((line, t)) = tokens.next() {
        return Err(Error::Parse { line, msg: format!("trailing token `{t}`") });
    }
    Ok(DenseMatrix::from_row_slice(rows, cols, &data))
}
