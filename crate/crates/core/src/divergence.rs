//! The alpha-divergence family, the alpha-SNE / SNE / NeRV costs, output
//! probabilities and their analytic gradients.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::affinity::{NeighborProbabilities, ProbabilityKind, PROBABILITY_FLOOR};
use crate::error::{Error, Result};

/// Distance from 0 or 1 below which `alpha` is routed to the KL limits.
pub const ALPHA_LIMIT_EPS: f64 = 1e-9;

const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-9;

/// Low-dimensional coordinates, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Array2<f64>,
    pub iteration: usize,
    pub seed: u64,
}

impl Embedding {
    pub fn new(coords: Array2<f64>) -> Result<Self> {
        if let Some(v) = coords.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("embedding has non-finite coordinate {v}")));
        }
        Ok(Embedding {
            coords,
            iteration: 0,
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Breakdown of an alpha-SNE cost.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CostReport {
    pub total: f64,
    pub per_point: Vec<f64>,
    pub alpha: f64,
    /// Compatibility factors `theta_i = sum_{j != i} p_ij^alpha q_ij^(1-alpha)`.
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Branch {
    /// `KL(q || p)`
    ReverseKl,
    /// `KL(p || q)`
    ForwardKl,
    General(f64),
}

pub(crate) fn branch(alpha: f64) -> Branch {
    if alpha.abs() < ALPHA_LIMIT_EPS {
        Branch::ReverseKl
    } else if (alpha - 1.0).abs() < ALPHA_LIMIT_EPS {
        Branch::ForwardKl
    } else {
        Branch::General(alpha)
    }
}

#[inline]
fn floored(x: f64) -> f64 {
    x.max(PROBABILITY_FLOOR)
}

/// Contribution of one coordinate to `D_alpha(p || q)`.
#[inline]
fn divergence_term(p: f64, q: f64, b: Branch) -> f64 {
    if p == 0.0 && q == 0.0 {
        return 0.0;
    }
    match b {
        Branch::ForwardKl => {
            if p == 0.0 {
                0.0
            } else {
                p * (p.ln() - floored(q).ln())
            }
        }
        Branch::ReverseKl => {
            if q == 0.0 {
                0.0
            } else {
                q * (q.ln() - floored(p).ln())
            }
        }
        Branch::General(a) => {
            let (pp, qq) = if (0.0..=1.0).contains(&a) { (p, q) } else { (floored(p), floored(q)) };
            (pp.powf(a) * qq.powf(1.0 - a) - a * p + (a - 1.0) * q) / (a * (a - 1.0))
        }
    }
}

fn check_distribution(name: &str, v: &[f64]) -> Result<()> {
    if let Some((j, x)) = v.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::invalid(format!("{name}[{j}] = {x} is not a valid probability")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
        return Err(Error::invalid(format!("{name} sums to {s}, expected 1")));
    }
    Ok(())
}

/// `D_alpha(p || q) = sum_j (p_j^a q_j^(1-a) - a p_j + (a-1) q_j) / (a (a-1))`,
/// with `KL(q || p)` at `alpha = 0` and `KL(p || q)` at `alpha = 1`.
pub fn alpha_divergence(p: &[f64], q: &[f64], alpha: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dims(format!("p has {} entries, q has {}", p.len(), q.len())));
    }
    if !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be finite, got {alpha}")));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    let b = branch(alpha);
    Ok(p.iter().zip(q).map(|(pj, qj)| divergence_term(*pj, *qj, b)).sum())
}

/// `KL(p || q)` over two probability vectors.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    alpha_divergence(p, q, 1.0)
}

fn check_pair(p: &NeighborProbabilities, q: &NeighborProbabilities) -> Result<usize> {
    if p.n() != q.n() {
        return Err(Error::dims(format!("P has {} rows, Q has {}", p.n(), q.n())));
    }
    if p.kind() != ProbabilityKind::Input || q.kind() != ProbabilityKind::Output {
        return Err(Error::invalid("expected P of kind input and Q of kind output"));
    }
    Ok(p.n())
}

fn row_divergence(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>, i: usize, b: Branch) -> (f64, f64) {
    let mut d = 0.0;
    let mut theta = 0.0;
    for (j, (pj, qj)) in p.iter().zip(q.iter()).enumerate() {
        if j == i {
            continue;
        }
        d += divergence_term(*pj, *qj, b);
        theta += match b {
            Branch::ReverseKl => *qj,
            Branch::ForwardKl => *pj,
            Branch::General(a) => pj.powf(a) * qj.powf(1.0 - a),
        };
    }
    (d, theta)
}

/// `sum_i D_alpha(p_i || q_i)` with per-row terms and compatibility factors.
pub fn asne_cost(p: &NeighborProbabilities, q: &NeighborProbabilities, alpha: f64) -> Result<CostReport> {
    let n = check_pair(p, q)?;
    if !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be finite, got {alpha}")));
    }
    let b = branch(alpha);
    let mut per_point = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for i in 0..n {
        let (d, t) = row_divergence(p.row(i), q.row(i), i, b);
        per_point.push(d);
        theta.push(t);
    }
    Ok(CostReport {
        total: per_point.iter().sum(),
        per_point,
        alpha,
        theta,
    })
}

/// `lambda * sum_i KL(p_i || q_i) + (1 - lambda) * sum_i KL(q_i || p_i)`.
pub fn nerv_cost(p: &NeighborProbabilities, q: &NeighborProbabilities, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let forward = asne_cost(p, q, 1.0)?.total;
    let reverse = asne_cost(p, q, 0.0)?.total;
    Ok(lambda * forward + (1.0 - lambda) * reverse)
}

fn check_coords(coords: &ArrayView2<'_, f64>) -> Result<()> {
    if coords.nrows() < 2 {
        return Err(Error::invalid("need at least 2 map points"));
    }
    if let Some(v) = coords.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite map coordinate {v}")));
    }
    Ok(())
}

/// Output probabilities together with their elementwise logarithm (the
/// diagonal of the log matrix is left at 0).
pub(crate) fn output_probabilities_with_log(coords: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
    let (n, d) = coords.dim();
    let y = coords.as_standard_layout();
    let y = y.as_slice().expect("standard layout");
    let mut logits = vec![0.0; n * n];
    for i in 0..n {
        let yi = &y[i * d..(i + 1) * d];
        for j in (i + 1)..n {
            let dist: f64 = yi.iter().zip(&y[j * d..(j + 1) * d]).map(|(a, b)| (a - b) * (a - b)).sum();
            logits[i * n + j] = -dist;
            logits[j * n + i] = -dist;
        }
    }
    let ln_floor = PROBABILITY_FLOOR.ln();
    let mut q = vec![0.0; n * n];
    let mut lnq = vec![0.0; n * n];
    for i in 0..n {
        let lrow = &logits[i * n..(i + 1) * n];
        let qrow = &mut q[i * n..(i + 1) * n];
        let lqrow = &mut lnq[i * n..(i + 1) * n];
        let m = lrow
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (j, v) in qrow.iter_mut().enumerate() {
            if j != i {
                *v = (lrow[j] - m).exp();
                z += *v;
            }
        }
        let lnz = m + z.ln();
        // floor, then renormalize
        let mut s = 0.0;
        let mut floored_any = false;
        for j in 0..n {
            if j == i {
                continue;
            }
            let lq = lrow[j] - lnz;
            lqrow[j] = if lq < ln_floor {
                floored_any = true;
                ln_floor
            } else {
                lq
            };
            qrow[j] = (qrow[j] / z).max(PROBABILITY_FLOOR);
            s += qrow[j];
        }
        let lns = if floored_any { s.ln() } else { 0.0 };
        for j in 0..n {
            if j != i {
                qrow[j] /= s;
                lqrow[j] -= lns;
            }
        }
    }
    let shape = (n, n);
    (
        Array2::from_shape_vec(shape, q).expect("n x n"),
        Array2::from_shape_vec(shape, lnq).expect("n x n"),
    )
}

/// `q_ij = exp(-|y_i - y_j|^2) / sum_{k != i} exp(-|y_i - y_k|^2)`, floored at
/// [`PROBABILITY_FLOOR`] and renormalized.
pub fn output_probabilities(embedding: &Embedding) -> Result<NeighborProbabilities> {
    let coords = embedding.coords.view();
    check_coords(&coords)?;
    let (q, _) = output_probabilities_with_log(coords);
    Ok(NeighborProbabilities::new_unchecked(q, ProbabilityKind::Output))
}

/// Same as [`output_probabilities`], without the non-finite check of an
/// [`Embedding`] wrapper.
pub fn output_probabilities_from_coords(coords: ArrayView2<'_, f64>) -> Result<NeighborProbabilities> {
    check_coords(&coords)?;
    let q = output_probabilities_with_log(coords).0;
    Ok(NeighborProbabilities::new_unchecked(q, ProbabilityKind::Output))
}

/// `sum_j S_ij (y_i - y_j)` scaled by `scale`, for a pair-weight matrix `S`
/// whose diagonal is ignored.
fn spring_forces(s: &Array2<f64>, coords: ArrayView2<'_, f64>, scale: f64) -> Array2<f64> {
    let (n, d) = coords.dim();
    let y = coords.as_standard_layout();
    let y = y.as_slice().expect("standard layout");
    let s = s.as_slice().expect("standard layout");
    let mut grad = vec![0.0; n * d];
    for i in 0..n {
        let yi = &y[i * d..(i + 1) * d];
        let srow = &s[i * n..(i + 1) * n];
        let g = &mut grad[i * d..(i + 1) * d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let w = srow[j];
            let yj = &y[j * d..(j + 1) * d];
            for k in 0..d {
                g[k] += w * (yi[k] - yj[k]);
            }
        }
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Array2::from_shape_vec((n, d), grad).expect("n x d")
}

/// Pairwise attraction/repulsion weights and compatibility factors for the
/// alpha-SNE gradient, computed from log-probabilities.
///
/// Returns `(S, cost_rows)` where `S = M + M^T` is the symmetric spring
/// stiffness and `cost_rows[i]` is `D_alpha(p_i || q_i)`.
pub(crate) fn gradient_springs(
    p: ArrayView2<'_, f64>,
    lnp: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    lnq: ArrayView2<'_, f64>,
    alpha: f64,
) -> (Array2<f64>, Vec<f64>, f64) {
    let n = p.nrows();
    let mut m = Array2::<f64>::zeros((n, n));
    let mut costs = vec![0.0; n];
    let b = branch(alpha);
    let scale = match b {
        Branch::ReverseKl => 2.0,
        Branch::ForwardKl => 2.0,
        Branch::General(a) => 2.0 / a,
    };
    for (i, cost) in costs.iter_mut().enumerate() {
        let (prow, lprow, qrow, lqrow) = (p.row(i), lnp.row(i), q.row(i), lnq.row(i));
        let mut mrow = m.row_mut(i);
        match b {
            Branch::General(a) => {
                let mut theta = 0.0;
                let (mut sp, mut sq) = (0.0, 0.0);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let w = (a * lprow[j] + (1.0 - a) * lqrow[j]).exp();
                    mrow[j] = w;
                    theta += w;
                    sp += prow[j];
                    sq += qrow[j];
                }
                for j in 0..n {
                    if j != i {
                        mrow[j] -= theta * qrow[j];
                    }
                }
                *cost = (theta - a * sp + (a - 1.0) * sq) / (a * (a - 1.0));
            }
            Branch::ForwardKl => {
                let mut kl = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    mrow[j] = prow[j] - qrow[j];
                    kl += prow[j] * (lprow[j] - lqrow[j]);
                }
                *cost = kl;
            }
            Branch::ReverseKl => {
                let mut kl = 0.0;
                for j in 0..n {
                    if j != i {
                        kl += qrow[j] * (lqrow[j] - lprow[j]);
                    }
                }
                for j in 0..n {
                    if j != i {
                        mrow[j] = qrow[j] * kl - qrow[j] * (lqrow[j] - lprow[j]);
                    }
                }
                *cost = kl;
            }
        }
    }
    let mut s = m.clone();
    s += &m.t();
    (s, costs, scale)
}

/// Gradient and per-row cost evaluated from probability and log-probability
/// matrices. Every gradient in the crate goes through here.
pub(crate) fn gradient_from_logs(
    p: ArrayView2<'_, f64>,
    lnp: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    lnq: ArrayView2<'_, f64>,
    coords: ArrayView2<'_, f64>,
    alpha: f64,
) -> (Array2<f64>, Vec<f64>) {
    let (s, costs, scale) = gradient_springs(p, lnp, q, lnq, alpha);
    (spring_forces(&s, coords, scale), costs)
}

pub(crate) fn log_matrix(p: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = p.mapv(|v| floored(v).ln());
    for i in 0..out.nrows() {
        out[[i, i]] = 0.0;
    }
    out
}

fn check_gradient_inputs(
    p: &NeighborProbabilities,
    q: &NeighborProbabilities,
    embedding: &Embedding,
) -> Result<()> {
    let n = check_pair(p, q)?;
    if embedding.n() != n {
        return Err(Error::dims(format!("embedding has {} points, P has {n} rows", embedding.n())));
    }
    check_coords(&embedding.coords.view())
}

/// Analytic gradient of the alpha-SNE cost with respect to the map points.
///
/// For `alpha != 0`:
/// `(2/alpha) sum_j (y_i - y_j)(p_ij^a q_ij^(1-a) - theta_i q_ij + p_ji^a q_ji^(1-a) - theta_j q_ji)`.
/// At `alpha = 0` the limiting gradient of `sum_i KL(q_i || p_i)` is used.
pub fn asne_gradient(
    p: &NeighborProbabilities,
    q: &NeighborProbabilities,
    embedding: &Embedding,
    alpha: f64,
) -> Result<Array2<f64>> {
    check_gradient_inputs(p, q, embedding)?;
    if !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be finite, got {alpha}")));
    }
    let lnp = log_matrix(p.probs());
    let lnq = log_matrix(q.probs());
    let (g, _) = gradient_from_logs(p.probs(), lnp.view(), q.probs(), lnq.view(), embedding.coords.view(), alpha);
    Ok(g)
}

/// Gradient of the SNE cost, `2 sum_j (y_i - y_j)(p_ij - q_ij + p_ji - q_ji)`.
pub fn sne_gradient(p: &NeighborProbabilities, q: &NeighborProbabilities, embedding: &Embedding) -> Result<Array2<f64>> {
    check_gradient_inputs(p, q, embedding)?;
    let pm = p.probs();
    let qm = q.probs();
    let mut s = &pm - &qm;
    s += &pm.t();
    s -= &qm.t();
    Ok(spring_forces(&s, embedding.coords.view(), 2.0))
}

/// Sum of the gradient over all points; zero for a translation-invariant cost.
pub fn gradient_sum(grad: &Array2<f64>) -> Vec<f64> {
    grad.sum_axis(Axis(0)).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn input(m: Array2<f64>) -> NeighborProbabilities {
        NeighborProbabilities::new(m, ProbabilityKind::Input).unwrap()
    }

    fn output(m: Array2<f64>) -> NeighborProbabilities {
        NeighborProbabilities::new(m, ProbabilityKind::Output).unwrap()
    }

    #[test]
    fn identical_distributions_have_zero_divergence() {
        for a in [0.0, 0.3, 0.5, 1.0, 1.7, -0.4] {
            assert!(alpha_divergence(&[0.5, 0.5], &[0.5, 0.5], a).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn hellinger_like_value_at_half() {
        let d = alpha_divergence(&[0.8, 0.2], &[0.2, 0.8], 0.5).unwrap();
        assert!((d - 0.8).abs() < 1e-12, "{d}");
    }

    #[test]
    fn continuity_near_one() {
        let p = [0.8, 0.2];
        let q = [0.2, 0.8];
        let kl = kl_divergence(&p, &q).unwrap();
        let near = alpha_divergence(&p, &q, 0.999).unwrap();
        assert!((near - kl).abs() < 1e-3);
        assert!((alpha_divergence(&p, &q, 1.0 - 1e-6).unwrap() - kl).abs() < 1e-4);
        let rkl = alpha_divergence(&p, &q, 0.0).unwrap();
        assert!((alpha_divergence(&p, &q, 1e-6).unwrap() - rkl).abs() < 1e-4);
        assert!((alpha_divergence(&p, &q, 5e-10).unwrap() - rkl).abs() < 1e-15);
    }

    #[test]
    fn divergence_errors() {
        assert!(alpha_divergence(&[0.5, 0.5], &[1.0], 0.5).is_err());
        assert!(alpha_divergence(&[1.5, -0.5], &[0.5, 0.5], 0.5).is_err());
        assert!(alpha_divergence(&[0.6, 0.6], &[0.5, 0.5], 0.5).is_err());
    }

    #[test]
    fn equal_matrices_give_unit_theta_and_zero_cost() {
        let m = array![[0.0, 0.7, 0.3], [0.4, 0.0, 0.6], [0.5, 0.5, 0.0]];
        let rep = asne_cost(&input(m.clone()), &output(m), 0.4).unwrap();
        assert!(rep.total.abs() < 1e-15);
        assert!(rep.theta.iter().all(|t| (t - 1.0).abs() < 1e-12));
    }

    #[test]
    fn nerv_rejects_lambda_outside_unit_interval() {
        let m = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(nerv_cost(&input(m.clone()), &output(m.clone()), 1.2).is_err());
        assert!(nerv_cost(&input(m.clone()), &output(m), -0.1).is_err());
    }

    #[test]
    fn kinds_are_checked() {
        let m = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(asne_cost(&output(m.clone()), &input(m), 0.5).is_err());
    }

    #[test]
    fn equilateral_triangle_output() {
        let h = 3f64.sqrt() / 2.0;
        let e = Embedding::new(array![[0.0, 0.0], [1.0, 0.0], [0.5, h]]).unwrap();
        let q = output_probabilities(&e).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 0.5 };
                assert!((q.probs()[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_log_matches_probabilities() {
        let coords = array![[0.0, 0.0], [1.0, 0.5], [7.0, 0.0], [-0.3, 2.0]];
        let (q, lnq) = output_probabilities_with_log(coords.view());
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((q[[i, j]].ln() - lnq[[i, j]]).abs() < 1e-12, "{i},{j}");
                }
            }
            assert!((q.row(i).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_match_gradient_vanishes() {
        let e = Embedding::new(array![[0.0, 0.1], [0.7, -0.2], [0.3, 0.9], [-0.5, 0.4]]).unwrap();
        let q = output_probabilities(&e).unwrap();
        let p = input(q.probs().to_owned());
        for a in [0.0, 0.3, 0.8, 1.0] {
            let g = asne_gradient(&p, &q, &e, a).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-10), "alpha {a}: {g}");
        }
        assert!(sne_gradient(&p, &q, &e).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn single_pair_attracts_when_p_exceeds_q() {
        // three points on a line; point 2 is far in the map but close in the input
        let e = Embedding::new(array![[0.0], [1.0], [3.0]]).unwrap();
        let q = output_probabilities(&e).unwrap();
        let p = input(array![[0.0, 0.2, 0.8], [0.5, 0.0, 0.5], [0.8, 0.2, 0.0]]);
        assert!(p.probs()[[0, 2]] > q.probs()[[0, 2]]);
        let g = sne_gradient(&p, &q, &e).unwrap();
        // the descent step -g moves point 2 toward point 0
        assert!(g[[2, 0]] > 0.0);
    }
}
