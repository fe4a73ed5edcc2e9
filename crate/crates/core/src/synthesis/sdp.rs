//! Log-barrier interior-point method for small problems of the form
//!
//! ```text
//! minimize  cᵀz   subject to  F_c(z) = F_c0 + Σ_i z_i F_ci ≻ 0  for every block c
//! ```
//!
//! Basis matrices are symmetric and stored as sparse triplets; Newton
//! systems are assembled from `tr(S F_i S F_j)` with `S = F⁻¹`.

use nalgebra::Cholesky;

use crate::matrix::{DenseMatrix, DenseVector};

/// Symmetric basis matrix as `(row, col, value)` triplets covering every
/// stored entry (both triangles).
pub type SparseSym = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: DenseMatrix,
    /// `(variable index, basis matrix)`; variables absent here have a zero
    /// coefficient in this block.
    pub terms: Vec<(usize, SparseSym)>,
}

impl LmiBlock {
    pub fn evaluate(&self, z: &DenseVector) -> DenseMatrix {
        let mut f = self.constant.clone();
        for (i, basis) in &self.terms {
            let zi = z[*i];
            if zi != 0.0 {
                for &(r, c, v) in basis {
                    f[(r, c)] += zi * v;
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierConfig {
    pub initial_t: f64,
    pub t_growth: f64,
    /// Stop once the duality-gap bound `Σ size / t` falls below this.
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            initial_t: 1.0,
            t_growth: 10.0,
            gap_tol: 1e-7,
            newton_tol: 1e-10,
            max_newton: 60,
            max_outer: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub z: DenseVector,
    pub objective: f64,
    pub newton_steps: usize,
}

fn log_det_pd(m: &DenseMatrix) -> Option<(f64, DenseMatrix)> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    let mut log_det = 0.0;
    for i in 0..m.nrows() {
        log_det += 2.0 * l[(i, i)].ln();
    }
    Some((log_det, chol.inverse()))
}

struct Problem<'a> {
    c: &'a DenseVector,
    blocks: &'a [LmiBlock],
}

impl Problem<'_> {
    /// Barrier value and inverses, or `None` outside the interior.
    fn value(&self, z: &DenseVector, t: f64) -> Option<(f64, Vec<DenseMatrix>)> {
        let mut phi = t * self.c.dot(z);
        let mut inverses = Vec::with_capacity(self.blocks.len());
        for b in self.blocks {
            let (ld, inv) = log_det_pd(&b.evaluate(z))?;
            phi -= ld;
            inverses.push(inv);
        }
        Some((phi, inverses))
    }

    fn gradient_hessian(&self, t: f64, inverses: &[DenseMatrix]) -> (DenseVector, DenseMatrix) {
        let m = self.c.len();
        let mut g = self.c * t;
        let mut h = DenseMatrix::zeros(m, m);
        for (b, s) in self.blocks.iter().zip(inverses) {
            let n = b.size;
            // P_i = S F_i S, accumulated from the basis triplets.
            let mut p = DenseMatrix::zeros(n, n);
            let products: Vec<DenseMatrix> = b
                .terms
                .iter()
                .map(|(i, basis)| {
                    p.fill(0.0);
                    let mut trace = 0.0;
                    for &(r, c, v) in basis {
                        trace += v * s[(c, r)];
                        p.ger(v, &s.column(r), &s.row(c).transpose(), 1.0);
                    }
                    g[*i] -= trace;
                    p.clone()
                })
                .collect();
            for (a, (i, _)) in b.terms.iter().enumerate() {
                for (j, basis_j) in &b.terms {
                    let mut hij = 0.0;
                    for &(r, c, v) in basis_j {
                        hij += v * products[a][(c, r)];
                    }
                    h[(*i, *j)] += hij;
                }
            }
        }
        (g, h)
    }
}

fn solve_newton(h: &DenseMatrix, g: &DenseVector) -> Option<DenseVector> {
    if let Some(ch) = Cholesky::new(h.clone()) {
        return Some(-ch.solve(g));
    }
    let scale = h.diagonal().amax().max(1.0);
    let mut reg = h.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-10 * scale;
    }
    Cholesky::new(reg).map(|ch| -ch.solve(g))
}

/// Barrier path-following from a strictly feasible `z0`. Returns the last
/// interior iterate even if the gap target is not met.
pub fn solve(c: &DenseVector, blocks: &[LmiBlock], z0: DenseVector, cfg: &BarrierConfig) -> Option<BarrierSolution> {
    let prob = Problem { c, blocks };
    let mut z = z0;
    prob.value(&z, cfg.initial_t)?;
    let total: usize = blocks.iter().map(|b| b.size).sum();
    let mut t = cfg.initial_t;
    let mut newton_steps = 0;
    for _ in 0..cfg.max_outer {
        for _ in 0..cfg.max_newton {
            let (phi, inverses) = prob.value(&z, t)?;
            let (g, h) = prob.gradient_hessian(t, &inverses);
            let Some(dz) = solve_newton(&h, &g) else { break };
            let decrement = -g.dot(&dz);
            newton_steps += 1;
            if decrement / 2.0 <= cfg.newton_tol || !decrement.is_finite() {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-12 {
                let trial = &z + &dz * step;
                if let Some((phi_trial, _)) = prob.value(&trial, t) {
                    if phi_trial <= phi - 0.25 * step * decrement {
                        z = trial;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if total as f64 / t < cfg.gap_tol {
            break;
        }
        t *= cfg.t_growth;
    }
    Some(BarrierSolution {
        objective: c.dot(&z),
        z,
        newton_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_bound() {
        // minimize z subject to z - 2 > 0
        let block = LmiBlock {
            size: 1,
            constant: DenseMatrix::from_element(1, 1, -2.0),
            terms: vec![(0, vec![(0, 0, 1.0)])],
        };
        let sol = solve(
            &DenseVector::from_element(1, 1.0),
            &[block],
            DenseVector::from_element(1, 5.0),
            &BarrierConfig::default(),
        )
        .unwrap();
        assert!((sol.z[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn smallest_eigenvalue() {
        // max z s.t. M - zI ⪰ 0 gives λ_min(M)
        let m = DenseMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 5.0]);
        let block = LmiBlock {
            size: 3,
            constant: m.clone(),
            terms: vec![(0, vec![(0, 0, -1.0), (1, 1, -1.0), (2, 2, -1.0)])],
        };
        let sol = solve(
            &DenseVector::from_element(1, -1.0),
            &[block],
            DenseVector::from_element(1, 0.0),
            &BarrierConfig::default(),
        )
        .unwrap();
        let lmin = m.symmetric_eigenvalues().min();
        assert!((sol.z[0] - lmin).abs() < 1e-6);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let block = LmiBlock {
            size: 1,
            constant: DenseMatrix::from_element(1, 1, -2.0),
            terms: vec![(0, vec![(0, 0, 1.0)])],
        };
        assert!(solve(
            &DenseVector::from_element(1, 1.0),
            &[block],
            DenseVector::from_element(1, 1.0),
            &BarrierConfig::default()
        )
        .is_none());
    }
}
