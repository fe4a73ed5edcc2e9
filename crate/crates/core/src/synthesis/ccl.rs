//! Cone-complementarity linearization for one group:
//!
//! ```text
//! minimize tr(X_k Y + X Y_k)
//! s.t. [[X, Âᵀ], [Â, Y]] ⪰ εI,   [[X, I], [I, Y]] ≻ 0
//! ```
//!
//! with `Â = Q − K·D·Q` affine in the free gain entries. At `XY = I` the
//! first constraint is the Lyapunov inequality `X − ÂᵀXÂ ≻ 0`.

use super::sdp::{self, BarrierConfig, LmiBlock, SparseSym};
use super::{GroupProblem, SynthesisConfig};
use crate::matrix::{DenseMatrix, DenseVector};

pub(crate) struct CclOutcome {
    pub k: Vec<f64>,
    pub radius: f64,
    pub iterations: usize,
}

struct Layout {
    n: usize,
    sym: Vec<(usize, usize)>,
    k_offset: usize,
    total: usize,
}

impl Layout {
    fn new(n: usize, free: usize) -> Self {
        let sym: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
        let k_offset = 2 * sym.len();
        Self { n, sym, k_offset, total: k_offset + free }
    }

    fn x_var(&self, v: usize) -> usize {
        v
    }

    fn y_var(&self, v: usize) -> usize {
        self.sym.len() + v
    }

    fn sym_basis(&self, v: usize, offset: usize) -> SparseSym {
        let (a, b) = self.sym[v];
        if a == b {
            vec![(a + offset, a + offset, 1.0)]
        } else {
            vec![(a + offset, b + offset, 1.0), (b + offset, a + offset, 1.0)]
        }
    }

    fn unpack(&self, z: &DenseVector, base: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for (v, &(a, b)) in self.sym.iter().enumerate() {
            m[(a, b)] = z[base + v];
            m[(b, a)] = z[base + v];
        }
        m
    }
}

fn blocks(prob: &GroupProblem, layout: &Layout, eps: f64) -> Vec<LmiBlock> {
    let n = layout.n;
    let mut lyap_const = DenseMatrix::zeros(2 * n, 2 * n);
    let mut coupling_const = DenseMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        lyap_const[(i, i)] = -eps;
        lyap_const[(n + i, n + i)] = -eps;
        coupling_const[(i, n + i)] = 1.0;
        coupling_const[(n + i, i)] = 1.0;
        for j in 0..n {
            lyap_const[(n + i, j)] = prob.q[(i, j)];
            lyap_const[(j, n + i)] = prob.q[(i, j)];
        }
    }
    let mut lyap_terms = Vec::with_capacity(layout.total);
    let mut coupling_terms = Vec::with_capacity(layout.k_offset);
    for v in 0..layout.sym.len() {
        let bx = layout.sym_basis(v, 0);
        let by = layout.sym_basis(v, n);
        lyap_terms.push((layout.x_var(v), bx.clone()));
        lyap_terms.push((layout.y_var(v), by.clone()));
        coupling_terms.push((layout.x_var(v), bx));
        coupling_terms.push((layout.y_var(v), by));
    }
    for (e, &(r, c)) in prob.free.iter().enumerate() {
        let mut basis = Vec::new();
        for j in 0..n {
            let v = prob.dq[(c, j)];
            if v != 0.0 {
                basis.push((n + r, j, -v));
                basis.push((j, n + r, -v));
            }
        }
        lyap_terms.push((layout.k_offset + e, basis));
    }
    vec![
        LmiBlock { size: 2 * n, constant: lyap_const, terms: lyap_terms },
        LmiBlock { size: 2 * n, constant: coupling_const, terms: coupling_terms },
    ]
}

fn objective(layout: &Layout, xk: &DenseMatrix, yk: &DenseMatrix) -> DenseVector {
    let mut c = DenseVector::zeros(layout.total);
    for (v, &(a, b)) in layout.sym.iter().enumerate() {
        let mult = if a == b { 1.0 } else { 2.0 };
        c[layout.x_var(v)] = mult * yk[(a, b)];
        c[layout.y_var(v)] = mult * xk[(a, b)];
    }
    c
}

pub(crate) fn run(prob: &GroupProblem, cfg: &SynthesisConfig, target: f64) -> CclOutcome {
    let n = prob.size();
    let layout = Layout::new(n, prob.free.len());
    let lmis = blocks(prob, &layout, cfg.lmi_epsilon);

    let sigma = prob.q.singular_values().max();
    let alpha = (sigma + cfg.lmi_epsilon).max(1.0) * 1.5 + 0.1;
    let mut z = DenseVector::zeros(layout.total);
    for (v, &(a, b)) in layout.sym.iter().enumerate() {
        if a == b {
            z[layout.x_var(v)] = alpha;
            z[layout.y_var(v)] = alpha;
        }
    }

    let mut xk = DenseMatrix::identity(n, n);
    let mut yk = DenseMatrix::identity(n, n);
    let mut best = CclOutcome {
        k: vec![0.0; prob.free.len()],
        radius: prob.radius(&vec![0.0; prob.free.len()]),
        iterations: 0,
    };
    let barrier = BarrierConfig::default();
    for it in 1..=cfg.max_iterations {
        let c = objective(&layout, &xk, &yk);
        let Some(sol) = sdp::solve(&c, &lmis, z.clone(), &barrier) else {
            break;
        };
        z = sol.z;
        let k: Vec<f64> = (0..prob.free.len()).map(|e| z[layout.k_offset + e]).collect();
        let radius = prob.radius(&k);
        best.iterations = it;
        if radius < best.radius {
            best.k = k;
            best.radius = radius;
        }
        if best.radius < target {
            break;
        }
        xk = layout.unpack(&z, 0);
        yk = layout.unpack(&z, layout.sym.len());
        if (&xk * &yk).trace() - (n as f64) < cfg.trace_tol {
            break;
        }
    }
    best
}
