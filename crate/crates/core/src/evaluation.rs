//! Neighborhood retrieval quality: mean precision and recall, the
//! precision-recall curve and its area, and the binary neighborhood model.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K_INPUT: usize = 20;
pub const DEFAULT_K_MAX: usize = 100;

/// The `k` nearest neighbors of every point, nearest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSets {
    sets: Vec<Vec<usize>>,
    k: usize,
}

impl NeighborSets {
    pub fn new(sets: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let n = sets.len();
        for (i, s) in sets.iter().enumerate() {
            if s.len() != k {
                return Err(Error::invalid(format!("set {i} has {} members, expected {k}", s.len())));
            }
            let mut seen = vec![false; n];
            for &j in s {
                if j >= n || j == i || seen[j] {
                    return Err(Error::invalid(format!("set {i} has an invalid member {j}")));
                }
                seen[j] = true;
            }
        }
        Ok(NeighborSets { sets, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    /// Neighbors of point `i`, nearest first.
    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// The `k` nearest of each set, for `k <= self.k()`.
    pub fn truncated(&self, k: usize) -> Result<NeighborSets> {
        if k == 0 || k > self.k {
            return Err(Error::invalid(format!("cannot truncate {}-neighbor sets to {k}", self.k)));
        }
        Ok(NeighborSets {
            sets: self.sets.iter().map(|s| s[..k].to_vec()).collect(),
            k,
        })
    }
}

/// Neighbors of each row ordered by squared Euclidean distance, then index.
fn sorted_neighbors(points: ArrayView2<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("neighborhood size {k} must lie in 1..={}", n.saturating_sub(1))));
    }
    if let Some(((i, j), _)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite coordinate at row {i}, column {j}")));
    }
    let mut out = Vec::with_capacity(n);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        let xi = points.row(i);
        for j in (0..n).filter(|&j| j != i) {
            let d: f64 = xi.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            order.push((d, j));
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(cmp);
        out.push(order.iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

/// Exact `k`-nearest neighbors by Euclidean distance; ties go to the lower
/// index.
pub fn knn_sets(points: ArrayView2<f64>, k: usize) -> Result<NeighborSets> {
    Ok(NeighborSets {
        sets: sorted_neighbors(points, k)?,
        k,
    })
}

/// `(mean precision, mean recall)` of `output_sets` against `input_sets`.
pub fn precision_recall(input_sets: &NeighborSets, output_sets: &NeighborSets) -> Result<(f64, f64)> {
    let n = input_sets.n();
    if output_sets.n() != n {
        return Err(Error::dims(format!("input sets cover {n} points, output sets {}", output_sets.n())));
    }
    let mut mark = vec![false; n];
    let (mut prec, mut rec) = (0.0, 0.0);
    for i in 0..n {
        for &j in input_sets.set(i) {
            mark[j] = true;
        }
        let hits = output_sets.set(i).iter().filter(|&&j| mark[j]).count() as f64;
        for &j in input_sets.set(i) {
            mark[j] = false;
        }
        prec += hits / output_sets.k() as f64;
        rec += hits / input_sets.k() as f64;
    }
    Ok((prec / n as f64, rec / n as f64))
}

/// One point of the retrieval curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
}

/// Mean precision against mean recall for output neighborhoods of size
/// `1..=k_max`, with the trapezoidal area under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCurve {
    /// Ordered by output neighborhood size.
    pub points: Vec<CurvePoint>,
    pub auc: f64,
    pub k_input: usize,
    pub k_max: usize,
    /// Set when the requested `k_max` exceeded `n - 1`.
    pub capped: bool,
}

/// Area under a precision-recall curve: points sorted by recall (stable),
/// extended flat to recall 0 and 1, integrated with the trapezoid rule.
pub fn curve_area(points: &[CurvePoint]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let first = pts[0].1;
    let last = pts[pts.len() - 1].1;
    pts.insert(0, (0.0, first));
    pts.push((1.0, last));
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1)).sum()
}

/// Retrieval curve of an embedding: input neighborhoods of size `k_input`,
/// output neighborhoods of every size from 1 to `k_max` (capped at `n - 1`).
pub fn retrieval_auc(
    input_points: ArrayView2<f64>,
    output_points: ArrayView2<f64>,
    k_input: usize,
    k_max: usize,
) -> Result<RetrievalCurve> {
    let n = input_points.nrows();
    if output_points.nrows() != n {
        return Err(Error::dims(format!(
            "input has {n} points but output has {}",
            output_points.nrows()
        )));
    }
    if k_input == 0 || n <= k_input {
        return Err(Error::invalid(format!("need more than k_input = {k_input} points, got {n}")));
    }
    if k_max == 0 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let capped = k_max > n - 1;
    let k_max = k_max.min(n - 1);
    let input = sorted_neighbors(input_points, k_input)?;
    let output = sorted_neighbors(output_points, k_max)?;

    // hits[k-1] summed over points
    let mut hits = vec![0usize; k_max];
    let mut mark = vec![false; n];
    for i in 0..n {
        for &j in &input[i] {
            mark[j] = true;
        }
        let mut count = 0;
        for (r, &j) in output[i].iter().enumerate() {
            count += mark[j] as usize;
            hits[r] += count;
        }
        for &j in &input[i] {
            mark[j] = false;
        }
    }
    let points: Vec<CurvePoint> = hits
        .iter()
        .enumerate()
        .map(|(r, &h)| {
            let k = r + 1;
            CurvePoint {
                k,
                recall: h as f64 / (n * k_input) as f64,
                precision: h as f64 / (n * k) as f64,
            }
        })
        .collect();
    Ok(RetrievalCurve {
        auc: curve_area(&points),
        points,
        k_input,
        k_max,
        capped,
    })
}

/// Binary neighborhood model: every input neighbor of a point gets
/// probability `(1 - delta) / k`, every output neighbor `(1 - delta) / r`,
/// and the remaining points share `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub n_total: usize,
    pub k_in: usize,
    pub r_out: usize,
    pub delta: f64,
    pub true_positives: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
}

/// Neighbor and non-neighbor probabilities of one side of a [`BinaryModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryLevels {
    pub neighbor: f64,
    pub other: f64,
}

impl BinaryModel {
    pub fn new(n_total: usize, k_in: usize, r_out: usize, true_positives: usize, delta: f64) -> Result<Self> {
        if n_total < 3 {
            return Err(Error::invalid(format!("need at least 3 points, got {n_total}")));
        }
        if k_in == 0 || r_out == 0 || k_in >= n_total || r_out >= n_total {
            return Err(Error::invalid(format!(
                "neighborhood sizes k = {k_in}, r = {r_out} must lie in 1..{n_total}"
            )));
        }
        if true_positives > k_in.min(r_out) {
            return Err(Error::invalid(format!(
                "{true_positives} true positives exceed min(k, r) = {}",
                k_in.min(r_out)
            )));
        }
        let others = n_total - 1;
        let used = k_in + r_out - true_positives;
        if used > others {
            return Err(Error::invalid(format!(
                "k + r - TP = {used} exceeds the {others} other points"
            )));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::invalid(format!("delta = {delta} must lie in (0, 0.5)")));
        }
        Ok(BinaryModel {
            n_total,
            k_in,
            r_out,
            delta,
            true_positives,
            misses: k_in - true_positives,
            false_positives: r_out - true_positives,
            true_negatives: others - used,
        })
    }

    fn levels(&self, size: usize, normalize: bool) -> BinaryLevels {
        let d = self.delta;
        let neighbor = (1.0 - d) / size as f64;
        let other = d / (self.n_total - size + 1) as f64;
        if !normalize {
            return BinaryLevels { neighbor, other };
        }
        let total = size as f64 * neighbor + (self.n_total - 1 - size) as f64 * other;
        BinaryLevels {
            neighbor: neighbor / total,
            other: other / total,
        }
    }

    /// `(a, b)`: input neighbor and non-neighbor values before
    /// renormalization.
    pub fn raw_input(&self) -> BinaryLevels {
        self.levels(self.k_in, false)
    }

    /// `(c, d)`: output neighbor and non-neighbor values before
    /// renormalization.
    pub fn raw_output(&self) -> BinaryLevels {
        self.levels(self.r_out, false)
    }

    /// Input levels rescaled so the `N - 1` entries sum to one.
    pub fn input(&self) -> BinaryLevels {
        self.levels(self.k_in, true)
    }

    /// Output levels rescaled so the `N - 1` entries sum to one.
    pub fn output(&self) -> BinaryLevels {
        self.levels(self.r_out, true)
    }

    pub fn precision(&self) -> f64 {
        self.true_positives as f64 / self.r_out as f64
    }

    pub fn recall(&self) -> f64 {
        self.true_positives as f64 / self.k_in as f64
    }
}

fn check_open_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// `D_alpha(p || q)` between the renormalized binary distributions,
/// `(1 - sum_j p_j^alpha q_j^(1-alpha)) / (alpha (1 - alpha))` with the sum
/// grouped by the four count classes.
pub fn binary_model_divergence(model: &BinaryModel, alpha: f64) -> Result<f64> {
    check_open_alpha(alpha)?;
    let p = model.input();
    let q = model.output();
    let w = |a: f64, c: f64| (alpha * a.ln() + (1.0 - alpha) * c.ln()).exp();
    let sum = model.true_positives as f64 * w(p.neighbor, q.neighbor)
        + model.misses as f64 * w(p.neighbor, q.other)
        + model.false_positives as f64 * w(p.other, q.neighbor)
        + model.true_negatives as f64 * w(p.other, q.other);
    Ok((1.0 - sum) / (alpha * (1.0 - alpha)))
}

/// Small-`delta` limit of [`binary_model_divergence`], keeping only the
/// true-positive term: `(1 - (1 - delta) TP / (k^alpha r^(1-alpha))) / (alpha (1 - alpha))`.
pub fn binary_model_divergence_limit(model: &BinaryModel, alpha: f64) -> Result<f64> {
    check_open_alpha(alpha)?;
    let k = model.k_in as f64;
    let r = model.r_out as f64;
    let tp = model.true_positives as f64;
    let dominant = (1.0 - model.delta) * tp / (k.powf(alpha) * r.powf(1.0 - alpha));
    Ok((1.0 - dominant) / (alpha * (1.0 - alpha)))
}

/// `TP / (r^alpha k^(1 - alpha))`: precision at `alpha = 1`, recall at
/// `alpha = 0`.
pub fn pr_geometric_mean(model: &BinaryModel, alpha: f64) -> f64 {
    let k = model.k_in as f64;
    let r = model.r_out as f64;
    model.true_positives as f64 / (r.powf(alpha) * k.powf(1.0 - alpha))
}
