mod common;

use alphasne::divergence::{
    asne_cost, asne_gradient, gradient_sum, nerv_cost, output_probabilities, output_probabilities_from_coords,
    sne_gradient, Embedding,
};
use alphasne::NeighborProbabilities;
use ndarray::Array2;

fn cost_at(p: &NeighborProbabilities, coords: &Array2<f64>, alpha: f64) -> f64 {
    let q = output_probabilities_from_coords(coords.view()).unwrap();
    asne_cost(p, &q, alpha).unwrap().total
}

fn central_difference(p: &NeighborProbabilities, coords: &Array2<f64>, alpha: f64, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(coords.dim());
    for idx in ndarray::indices(coords.dim()) {
        let mut plus = coords.clone();
        let mut minus = coords.clone();
        plus[idx] += h;
        minus[idx] -= h;
        g[idx] = (cost_at(p, &plus, alpha) - cost_at(p, &minus, alpha)) / (2.0 * h);
    }
    g
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = common::rng(11);
    for _ in 0..5 {
        let p = common::random_input(8, &mut rng);
        let y = common::random_coords(8, 2, 1.0, &mut rng);
        let emb = Embedding::new(y.clone()).unwrap();
        let q = output_probabilities(&emb).unwrap();
        for alpha in [0.0, 0.2, 0.5, 0.8, 1.0, 0.35] {
            let g = asne_gradient(&p, &q, &emb, alpha).unwrap();
            let fd = central_difference(&p, &y, alpha, 1e-6);
            let err = (&g - &fd).mapv(|v| v * v).sum().sqrt() / fd.mapv(|v| v * v).sum().sqrt();
            assert!(err < 1e-6, "alpha {alpha}: relative error {err}");
        }
    }
}

#[test]
fn alpha_one_is_sne() {
    let mut rng = common::rng(12);
    let p = common::random_input(10, &mut rng);
    let emb = Embedding::new(common::random_coords(10, 3, 0.7, &mut rng)).unwrap();
    let q = output_probabilities(&emb).unwrap();
    let a = asne_gradient(&p, &q, &emb, 1.0).unwrap();
    let s = sne_gradient(&p, &q, &emb).unwrap();
    assert!(a.iter().zip(s.iter()).all(|(x, y)| (x - y).abs() <= 1e-12));
    let c = asne_cost(&p, &q, 1.0).unwrap().total;
    assert!((c - nerv_cost(&p, &q, 1.0).unwrap()).abs() < 1e-10);
    assert!((asne_cost(&p, &q, 0.0).unwrap().total - nerv_cost(&p, &q, 0.0).unwrap()).abs() < 1e-10);
}

#[test]
fn gradient_sums_to_zero() {
    let mut rng = common::rng(13);
    let p = common::random_input(12, &mut rng);
    let emb = Embedding::new(common::random_coords(12, 2, 1.0, &mut rng)).unwrap();
    let q = output_probabilities(&emb).unwrap();
    for alpha in [0.0, 0.3, 1.0] {
        let g = asne_gradient(&p, &q, &emb, alpha).unwrap();
        for s in gradient_sum(&g) {
            assert!(s.abs() < 1e-12, "alpha {alpha}: {s}");
        }
    }
}

#[test]
fn gradient_is_continuous_near_the_limits() {
    let mut rng = common::rng(14);
    let p = common::random_input(8, &mut rng);
    let emb = Embedding::new(common::random_coords(8, 2, 1.0, &mut rng)).unwrap();
    let q = output_probabilities(&emb).unwrap();
    for (edge, near) in [(0.0, 1e-5), (1.0, 1.0 - 1e-5)] {
        let a = asne_gradient(&p, &q, &emb, edge).unwrap();
        let b = asne_gradient(&p, &q, &emb, near).unwrap();
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let diff = a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 1e-3 * scale, "alpha {edge}: {diff} vs {scale}");
    }
}

#[test]
fn mismatched_sizes_are_rejected() {
    let mut rng = common::rng(15);
    let p = common::random_input(6, &mut rng);
    let emb = Embedding::new(common::random_coords(5, 2, 1.0, &mut rng)).unwrap();
    let q = output_probabilities(&emb).unwrap();
    assert!(asne_gradient(&p, &q, &emb, 0.5).is_err());
}
