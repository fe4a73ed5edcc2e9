use mixobs::graph::DirectedGraph;
use mixobs::matrix::{build_row_stochastic, kronecker, spectral_radius, DenseMatrix, WeightRule};
use nalgebra::Complex;
use proptest::prelude::*;

fn square(n: usize) -> impl Strategy<Value = DenseMatrix> {
    proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| DenseMatrix::from_row_slice(n, n, &v))
}

/// Characteristic polynomial coefficients, highest degree first
/// (Faddeev–LeVerrier).
fn char_poly(a: &DenseMatrix) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DenseMatrix::zeros(n, n);
    let id = DenseMatrix::identity(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[k - 1];
        let c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// Roots by Durand–Kerner iteration on the monic polynomial.
fn roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex<f64>| coeffs.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
    let seed = Complex::new(0.4, 0.9);
    let mut r: Vec<Complex<f64>> = (0..n).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..2000 {
        for i in 0..n {
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= r[i] - r[j];
                }
            }
            let step = eval(r[i]) / denom;
            r[i] -= step;
        }
    }
    r
}

fn strongly_connected(max: usize) -> impl Strategy<Value = DirectedGraph> {
    (2..=max).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let mut g = DirectedGraph::cycle(n).with_self_loops();
            for a in 0..n {
                for b in 0..n {
                    if bits[a * n + b] && !g.has_link(a, b) {
                        g.add_link(a, b).unwrap();
                    }
                }
            }
            g
        })
    })
}

proptest! {
    #[test]
    fn kronecker_mixed_product(w in square(3), a in square(3)) {
        let k = kronecker(&w, &a).unwrap();
        let lhs = &k * &k;
        let rhs = kronecker(&(&w * &w), &(&a * &a)).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-10);
    }

    #[test]
    fn row_stochastic_rows_and_support(g in strongly_connected(7), weighted in any::<bool>()) {
        let rule = if weighted { WeightRule::LinkWeights } else { WeightRule::Uniform };
        let w = build_row_stochastic(&g, rule).unwrap();
        for i in 0..g.node_count() {
            prop_assert!((w.row(i).sum() - 1.0).abs() <= 1e-12);
            for j in 0..g.node_count() {
                prop_assert_eq!(w[(i, j)] != 0.0, g.has_link(j, i));
                prop_assert!(w[(i, j)] >= 0.0);
            }
        }
    }

    #[test]
    fn radius_of_kronecker_is_product(p in square(3), q in square(2)) {
        let lhs = spectral_radius(&kronecker(&p, &q).unwrap()).unwrap();
        let rhs = spectral_radius(&p).unwrap() * spectral_radius(&q).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn radius_matches_characteristic_roots(a in square(4)) {
        let expected = roots(&char_poly(&a)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let got = spectral_radius(&a).unwrap();
        prop_assert!((got - expected).abs() <= 1e-6, "{} vs {}", got, expected);
    }
}
