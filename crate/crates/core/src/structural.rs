//! Structural (zero/nonzero) observability of the HDV system as seen by a
//! network of CAVs.
//!
//! For a self-damped system matrix every state carries a self-loop, so the
//! system digraph is cyclic and observability reduces to output coverage of
//! every parent SCC. Distributing the sensors over a strongly connected CAV
//! network preserves this (the parent SCCs of `W⊗A` are the replicated
//! parent SCCs of `A`). Redundancy adds a multiplicity requirement on the
//! sensors and a connectivity requirement on the network.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::graph::{
    is_strongly_connected, link_connectivity, node_connectivity, scc_decompose, DirectedGraph,
};
use crate::matrix::{build_dc, check_row_stochastic, kronecker, DenseMatrix, STOCHASTIC_TOL};

/// Sparsity pattern of a matrix, decoupled from its values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredMatrix {
    rows: usize,
    cols: usize,
    pattern: BTreeSet<(usize, usize)>,
}

impl StructuredMatrix {
    pub fn new<I>(rows: usize, cols: usize, nonzeros: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let pattern: BTreeSet<_> = nonzeros.into_iter().collect();
        if let Some(&(r, c)) = pattern.iter().find(|&&(r, c)| r >= rows || c >= cols) {
            return Err(Error::DimensionMismatch(format!(
                "entry ({r}, {c}) outside {rows}x{cols} pattern"
            )));
        }
        Ok(Self { rows, cols, pattern })
    }

    /// Pattern of the exactly-nonzero entries of `m`.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let pattern = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .filter(|&(r, c)| m[(r, c)] != 0.0)
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            pattern,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_nonzero(&self, r: usize, c: usize) -> bool {
        self.pattern.contains(&(r, c))
    }

    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pattern.iter().copied()
    }

    /// First diagonal index that is structurally zero, if any.
    pub fn zero_diagonal(&self) -> Option<usize> {
        (0..self.rows.min(self.cols)).find(|&i| !self.is_nonzero(i, i))
    }

    /// Dense realization with `value(r, c)` on every nonzero.
    pub fn realize(&self, mut value: impl FnMut(usize, usize) -> f64) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for &(r, c) in &self.pattern {
            m[(r, c)] = value(r, c);
        }
        m
    }
}

/// Which global state indices each CAV measures. Each measured index is one
/// selection row of that CAV's output matrix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SensorPlacement {
    measured: Vec<Vec<usize>>,
}

impl SensorPlacement {
    pub fn new(measured: Vec<Vec<usize>>) -> Self {
        Self { measured }
    }

    pub fn empty(cav_count: usize) -> Self {
        Self::new(vec![Vec::new(); cav_count])
    }

    pub fn cav_count(&self) -> usize {
        self.measured.len()
    }

    pub fn measured(&self, cav: usize) -> &[usize] {
        self.measured.get(cav).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_sensors(&self, cav: usize) -> bool {
        !self.measured(cav).is_empty()
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        for list in &self.measured {
            if let Some(&index) = list.iter().find(|&&s| s >= state_dim) {
                return Err(Error::StateOutOfRange { index, dim: state_dim });
            }
        }
        Ok(())
    }

    /// Selection-style `C_i`: one row per measured state.
    pub fn output_matrix(&self, cav: usize, state_dim: usize) -> DenseMatrix {
        let rows = self.measured(cav);
        let mut c = DenseMatrix::zeros(rows.len(), state_dim);
        for (r, &s) in rows.iter().enumerate() {
            c[(r, s)] = 1.0;
        }
        c
    }

    /// All CAV outputs stacked.
    pub fn stacked_output_matrix(&self, state_dim: usize) -> DenseMatrix {
        let total: usize = self.measured.iter().map(Vec::len).sum();
        let mut c = DenseMatrix::zeros(total, state_dim);
        let mut r = 0;
        for list in &self.measured {
            for &s in list {
                c[(r, s)] = 1.0;
                r += 1;
            }
        }
        c
    }

    /// Distinct CAVs that measure at least one state in `states`.
    pub fn cavs_covering(&self, states: &[usize]) -> BTreeSet<usize> {
        self.measured
            .iter()
            .enumerate()
            .filter(|(_, list)| list.iter().any(|s| states.contains(s)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Placement with the given CAVs dropped; survivors keep their order.
    pub fn without_cavs(&self, removed: &BTreeSet<usize>) -> Self {
        Self::new(
            self.measured
                .iter()
                .enumerate()
                .filter(|(i, _)| !removed.contains(i))
                .map(|(_, l)| l.clone())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub condition: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservabilityVerdict {
    pub observable: bool,
    pub parent_components: Vec<Vec<usize>>,
    pub uncovered_parent_components: Vec<Vec<usize>>,
    pub redundancy_level: usize,
    pub diagnostics: Vec<Diagnostic>,
    /// The verdict rests on a sufficient condition only (strong
    /// connectivity); a negative answer does not prove unobservability.
    pub sufficiency_only: bool,
}

impl ObservabilityVerdict {
    pub fn to_key_value(&self) -> String {
        let fmt_sets = |sets: &[Vec<usize>]| {
            let parts: Vec<String> = sets
                .iter()
                .map(|s| {
                    let inner: Vec<String> = s.iter().map(usize::to_string).collect();
                    format!("{{{}}}", inner.join(","))
                })
                .collect();
            format!("[{}]", parts.join(","))
        };
        let mut out = String::new();
        let _ = writeln!(out, "observable={}", self.observable);
        let _ = writeln!(out, "redundancy_level={}", self.redundancy_level);
        let _ = writeln!(out, "parents={}", fmt_sets(&self.parent_components));
        let _ = writeln!(out, "uncovered={}", fmt_sets(&self.uncovered_parent_components));
        let _ = writeln!(out, "sufficiency_only={}", self.sufficiency_only);
        for d in &self.diagnostics {
            let _ = writeln!(out, "check.{}={}", d.condition, if d.passed { "pass" } else { "fail" });
        }
        out
    }

    pub fn to_report(&self, state_name: impl Fn(usize) -> String) -> String {
        let names = |set: &[usize]| set.iter().map(|&s| state_name(s)).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Observable: {}{}",
            if self.observable { "yes" } else { "no" },
            if self.sufficiency_only && !self.observable {
                " (sufficient condition not met)"
            } else {
                ""
            }
        );
        let _ = writeln!(out, "Redundancy level: {}", self.redundancy_level);
        let _ = writeln!(out, "Parent SCCs:");
        for p in &self.parent_components {
            let mark = if self.uncovered_parent_components.contains(p) {
                "UNCOVERED"
            } else {
                "covered"
            };
            let _ = writeln!(out, "  {{{}}} {mark}", names(p));
        }
        let _ = writeln!(out, "Checks:");
        for d in &self.diagnostics {
            let _ = writeln!(
                out,
                "  [{}] {}: {}",
                if d.passed { "pass" } else { "FAIL" },
                d.condition,
                d.detail
            );
        }
        out
    }
}

/// Node per state; link `j -> i` for every nonzero `A_ij`.
pub fn system_digraph(a: &StructuredMatrix) -> Result<DirectedGraph> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let mut g = DirectedGraph::new(a.rows());
    for (i, j) in a.nonzeros() {
        g.add_link(j, i)?;
    }
    Ok(g)
}

/// Digraph of `W⊗A`: node `cav * d + state`, link `(j, b) -> (i, a)` when
/// `j -> i` is in the network and `b -> a` is in the system digraph.
pub fn kronecker_digraph(w_graph: &DirectedGraph, a_graph: &DirectedGraph) -> Result<DirectedGraph> {
    let d = a_graph.node_count();
    let mut g = DirectedGraph::new(w_graph.node_count() * d);
    for (j, i) in w_graph.links() {
        for (b, a) in a_graph.links() {
            g.add_link(j * d + b, i * d + a)?;
        }
    }
    Ok(g)
}

fn parent_analysis(a: &StructuredMatrix) -> Result<Vec<Vec<usize>>> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if let Some(i) = a.zero_diagonal() {
        return Err(Error::NotSelfDamped(i));
    }
    let scc = scc_decompose(&system_digraph(a)?);
    Ok(scc.parent_components().iter().map(|c| c.to_vec()).collect())
}

fn min_multiplicity(parents: &[Vec<usize>], placement: &SensorPlacement) -> usize {
    parents
        .iter()
        .map(|p| placement.cavs_covering(p).len())
        .min()
        .unwrap_or(0)
}

/// Output coverage of every parent SCC by the union of all CAV sensors.
pub fn centralized_structural_observability(
    a: &StructuredMatrix,
    placement: &SensorPlacement,
) -> Result<ObservabilityVerdict> {
    placement.validate(a.rows())?;
    let parents = parent_analysis(a)?;
    let uncovered: Vec<Vec<usize>> = parents
        .iter()
        .filter(|p| placement.cavs_covering(p).is_empty())
        .cloned()
        .collect();
    let observable = uncovered.is_empty();
    let multiplicity = min_multiplicity(&parents, placement);
    Ok(ObservabilityVerdict {
        observable,
        diagnostics: vec![
            Diagnostic {
                condition: "self_damped",
                passed: true,
                detail: "all diagonal entries nonzero".into(),
            },
            Diagnostic {
                condition: "parent_coverage",
                passed: observable,
                detail: format!("{} of {} parent SCCs measured", parents.len() - uncovered.len(), parents.len()),
            },
        ],
        parent_components: parents,
        uncovered_parent_components: uncovered,
        redundancy_level: if observable { multiplicity } else { 0 },
        sufficiency_only: false,
    })
}

fn check_network(w_graph: &DirectedGraph, placement: &SensorPlacement) -> Result<()> {
    if w_graph.node_count() != placement.cav_count() {
        return Err(Error::DimensionMismatch(format!(
            "network has {} CAVs, placement has {}",
            w_graph.node_count(),
            placement.cav_count()
        )));
    }
    if let Some(v) = (0..w_graph.node_count()).find(|&v| !w_graph.has_self_loop(v)) {
        return Err(Error::MissingSelfLoop(v));
    }
    Ok(())
}

/// Network connectivity `min(node, link)`; `None` for a single CAV, where
/// the network imposes no bound.
fn network_connectivity(w_graph: &DirectedGraph) -> Option<usize> {
    if w_graph.node_count() < 2 {
        return None;
    }
    let link = link_connectivity(w_graph).expect("two or more nodes");
    Some(link.min(node_connectivity(w_graph)))
}

/// Centralized coverage plus strong connectivity of the CAV network.
pub fn distributed_structural_observability(
    a: &StructuredMatrix,
    w_graph: &DirectedGraph,
    placement: &SensorPlacement,
) -> Result<ObservabilityVerdict> {
    check_network(w_graph, placement)?;
    let mut verdict = centralized_structural_observability(a, placement)?;
    let sc = is_strongly_connected(w_graph);
    verdict.diagnostics.push(Diagnostic {
        condition: "strong_connectivity",
        passed: sc,
        detail: if sc {
            "CAV network is strongly connected".into()
        } else {
            "CAV network is not strongly connected".into()
        },
    });
    verdict.observable = verdict.observable && sc;
    verdict.sufficiency_only = true;
    verdict.redundancy_level = if verdict.observable {
        let multiplicity = min_multiplicity(&verdict.parent_components, placement);
        let conn = network_connectivity(w_graph);
        verdict.diagnostics.push(Diagnostic {
            condition: "sensor_multiplicity",
            passed: multiplicity >= 1,
            detail: format!("every parent SCC measured by >= {multiplicity} distinct CAVs"),
        });
        if let Some(c) = conn {
            verdict.diagnostics.push(Diagnostic {
                condition: "network_connectivity",
                passed: c >= 1,
                detail: format!("network is {c}-node/link-connected"),
            });
        }
        conn.map_or(multiplicity, |c| c.min(multiplicity))
    } else {
        0
    };
    Ok(verdict)
}

/// Largest `q` with every parent SCC measured by `q` distinct CAVs and a
/// `q`-node/link-connected network; `0` when not observable at all.
pub fn redundant_observability_level(
    a: &StructuredMatrix,
    w_graph: &DirectedGraph,
    placement: &SensorPlacement,
) -> Result<usize> {
    Ok(distributed_structural_observability(a, w_graph, placement)?.redundancy_level)
}

/// Relative rank threshold for the numeric test. `None` selects
/// `d · eps` (scaled by the largest singular value).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RankTolerance(pub Option<f64>);

/// Full-rank test of `[D_C; D_C Q; …; D_C Q^{d-1}]` with `Q = W⊗A`.
///
/// The neighbourhoods behind `D_C` are read from the support of `W`. Each
/// block row is normalized before stacking; row scaling does not change the
/// rank and keeps high powers of `Q` representable.
pub fn numeric_observability_check(
    a: &DenseMatrix,
    w: &DenseMatrix,
    placement: &SensorPlacement,
    rank_tol: RankTolerance,
) -> Result<bool> {
    check_row_stochastic(w, STOCHASTIC_TOL)?;
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let n = w.nrows();
    let mut hood = DirectedGraph::new(n);
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] != 0.0 || i == j {
                hood.add_link(j, i)?;
            }
        }
    }
    let dc = build_dc(placement, &hood, a.nrows())?;
    let q = kronecker(w, a)?;
    let d = q.nrows();
    let scale = q.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max).max(1.0);
    let q = q / scale;

    let mut obs = DenseMatrix::zeros(d * d, d);
    let mut block = dc.clone();
    for k in 0..d {
        let norm = block.norm();
        if norm > 0.0 {
            obs.view_mut((k * d, 0), (d, d)).copy_from(&(&block / norm));
        }
        block = &block * &q;
    }
    let sv = SVD::new(obs, false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return Ok(d == 0);
    }
    let threshold = match rank_tol.0 {
        Some(tol) => tol * smax,
        None => d as f64 * f64::EPSILON * smax,
    };
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    Ok(rank == d)
}
