//! Input-space neighborhood probabilities.
//!
//! Every row of the input matrix `P` is a Gaussian kernel over squared
//! distances, normalized over `j != i`, with a per-row bandwidth found by
//! binary search so that the row's perplexity matches a target value.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Smallest probability kept in any off-diagonal entry before the row is
/// renormalized.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Relative tolerance on the achieved perplexity of a calibrated row.
pub const PERPLEXITY_TOLERANCE: f64 = 1e-4;

const MAX_BANDWIDTH_ITERS: usize = 100;

/// Tolerance used internally by the search; tighter than
/// [`PERPLEXITY_TOLERANCE`] so that flooring cannot push a row over it.
const SEARCH_TOLERANCE: f64 = 1e-6;

/// Tolerance on the row sums of a [`NeighborProbabilities`] matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A sample matrix with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    data: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, data: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = data.dim();
        if n < 2 {
            return Err(Error::invalid(format!("dataset needs at least 2 rows, got {n}")));
        }
        if d < 1 {
            return Err(Error::invalid("dataset needs at least 1 feature column"));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value {v} at row {i}, column {j}")));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::dims(format!("{} labels for {n} rows", l.len())));
            }
        }
        Ok(Dataset {
            name: name.into(),
            data,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Returns a copy with every feature column shifted to zero mean and
    /// scaled to unit (population) standard deviation. Constant columns are
    /// only centered.
    pub fn standardized(&self) -> Dataset {
        let mut data = self.data.clone();
        let n = data.nrows() as f64;
        for mut col in data.axis_iter_mut(Axis(1)) {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
        }
        Dataset {
            name: self.name.clone(),
            data,
            labels: self.labels.clone(),
        }
    }
}

/// Which space a probability matrix describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbabilityKind {
    Input,
    Output,
}

/// Row-stochastic matrix of conditional neighbor probabilities with a zero
/// diagonal: `p_ij` for [`ProbabilityKind::Input`], `q_ij` for
/// [`ProbabilityKind::Output`].
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborProbabilities {
    probs: Array2<f64>,
    kind: ProbabilityKind,
}

impl NeighborProbabilities {
    /// Validates and wraps a probability matrix.
    pub fn new(probs: Array2<f64>, kind: ProbabilityKind) -> Result<Self> {
        let (n, m) = probs.dim();
        if n != m {
            return Err(Error::dims(format!("probability matrix is {n}x{m}, expected square")));
        }
        if n < 2 {
            return Err(Error::invalid("probability matrix needs at least 2 rows"));
        }
        for (i, row) in probs.axis_iter(Axis(0)).enumerate() {
            if row[i] != 0.0 {
                return Err(Error::invalid(format!("diagonal entry {i} is {}, expected 0", row[i])));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::invalid(format!("row {i} has invalid probability {v}")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE * n as f64 {
                return Err(Error::invalid(format!("row {i} sums to {s}")));
            }
        }
        Ok(NeighborProbabilities { probs, kind })
    }

    pub(crate) fn new_unchecked(probs: Array2<f64>, kind: ProbabilityKind) -> Self {
        NeighborProbabilities { probs, kind }
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.probs.row(i)
    }

    pub fn kind(&self) -> ProbabilityKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.probs.nrows()
    }

    /// Off-diagonal entries in row-major order.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n - 1));
        for (i, row) in self.probs.axis_iter(Axis(0)).enumerate() {
            out.extend(row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v));
        }
        out
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.probs
    }
}

/// Per-row Gaussian bandwidths found by perplexity calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSet {
    pub sigmas: Vec<f64>,
    pub perplexity: f64,
    /// Shannon entropy of each calibrated row, in bits.
    pub achieved_entropies: Vec<f64>,
    /// Rows whose perplexity could not be matched.
    pub degenerate: Vec<bool>,
    pub warnings: Vec<String>,
}

impl BandwidthSet {
    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }
}

/// Squared Euclidean distances between all pairs of rows.
pub fn pairwise_sq_distances(data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {v} at row {i}, column {j}")));
    }
    let n = data.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let xi = data.row(i);
        for j in (i + 1)..n {
            let d: f64 = xi
                .iter()
                .zip(data.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    Ok(out)
}

fn check_square(sq_dists: &ArrayView2<'_, f64>) -> Result<usize> {
    let (n, m) = sq_dists.dim();
    if n != m {
        return Err(Error::dims(format!("distance matrix is {n}x{m}, expected square")));
    }
    if n < 2 {
        return Err(Error::invalid("distance matrix needs at least 2 rows"));
    }
    Ok(n)
}

/// Entropy (nats) of the row distribution `exp(-precision * d_j)` over the
/// off-diagonal shifted distances, together with the normalized weights.
fn row_entropy(shifted: &[f64], precision: f64, weights: &mut [f64]) -> f64 {
    let mut z = 0.0;
    for (w, d) in weights.iter_mut().zip(shifted) {
        *w = (-precision * d).exp();
        z += *w;
    }
    let mut mean_d = 0.0;
    for (w, d) in weights.iter_mut().zip(shifted) {
        *w /= z;
        mean_d += *w * d;
    }
    z.ln() + precision * mean_d
}

/// Binary search for per-row bandwidths matching `perplexity`.
///
/// The search runs on distances divided by the row's mean off-diagonal
/// distance, so scaling all distances by a constant scales every `sigma_i^2`
/// by the same constant.
pub fn calibrate_bandwidths(sq_dists: ArrayView2<'_, f64>, perplexity: f64) -> Result<BandwidthSet> {
    let n = check_square(&sq_dists)?;
    if !(perplexity.is_finite() && perplexity > 0.0) {
        return Err(Error::invalid(format!("perplexity must be positive, got {perplexity}")));
    }
    if perplexity >= (n - 1) as f64 {
        return Err(Error::invalid(format!(
            "perplexity {perplexity} must be below n-1 = {}",
            n - 1
        )));
    }
    let target = perplexity.ln();

    let mut sigmas = vec![1.0; n];
    let mut entropies = vec![0.0; n];
    let mut degenerate = vec![false; n];
    let mut warnings = Vec::new();

    let mut shifted = vec![0.0; n - 1];
    let mut weights = vec![0.0; n - 1];
    for i in 0..n {
        let row = sq_dists.row(i);
        let others = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, d)| *d);
        let (mut lo_d, mut hi_d, mut sum_d) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for (slot, d) in shifted.iter_mut().zip(others) {
            *slot = d;
            lo_d = lo_d.min(d);
            hi_d = hi_d.max(d);
            sum_d += d;
        }
        if hi_d - lo_d <= 1e-12 * hi_d.max(1.0) {
            degenerate[i] = true;
            sigmas[i] = 1.0;
            entropies[i] = ((n - 1) as f64).log2();
            warnings.push(format!(
                "row {i}: all distances equal, perplexity {perplexity} unreachable; using uniform probabilities"
            ));
            continue;
        }
        let scale = sum_d / (n - 1) as f64;
        for d in shifted.iter_mut() {
            *d = (*d - lo_d) / scale;
        }

        let mut precision = 1.0;
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut h = row_entropy(&shifted, precision, &mut weights);
        let mut converged = false;
        for _ in 0..MAX_BANDWIDTH_ITERS {
            if (h.exp() - perplexity).abs() <= perplexity * SEARCH_TOLERANCE {
                converged = true;
                break;
            }
            if h > target {
                lo = precision;
                precision = if hi.is_finite() { 0.5 * (lo + hi) } else { precision * 2.0 };
            } else {
                hi = precision;
                precision = 0.5 * (lo + hi);
            }
            h = row_entropy(&shifted, precision, &mut weights);
        }
        if !converged && (h.exp() - perplexity).abs() <= perplexity * PERPLEXITY_TOLERANCE {
            converged = true;
        }
        // precision' = scale / (2 sigma^2)
        sigmas[i] = (scale / (2.0 * precision)).sqrt();
        entropies[i] = h / std::f64::consts::LN_2;
        if !converged {
            degenerate[i] = true;
            warnings.push(format!(
                "row {i}: perplexity search stopped at {:.6} (target {perplexity})",
                h.exp()
            ));
        }
    }

    Ok(BandwidthSet {
        sigmas,
        perplexity,
        achieved_entropies: entropies,
        degenerate,
        warnings,
    })
}

/// Floors the off-diagonal entries of each row at [`PROBABILITY_FLOOR`] and
/// renormalizes. The diagonal stays exactly zero.
pub(crate) fn floor_and_normalize_rows(probs: &mut Array2<f64>) {
    for (i, mut row) in probs.axis_iter_mut(Axis(0)).enumerate() {
        let mut s = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            if j == i {
                *v = 0.0;
            } else {
                *v = v.max(PROBABILITY_FLOOR);
                s += *v;
            }
        }
        row.mapv_inplace(|v| v / s);
    }
}

/// Gaussian-kernel conditional probabilities
/// `p_ij = exp(-d_ij / (2 sigma_i^2)) / sum_{k != i} exp(-d_ik / (2 sigma_i^2))`.
pub fn input_probabilities(
    sq_dists: ArrayView2<'_, f64>,
    bandwidths: &BandwidthSet,
) -> Result<NeighborProbabilities> {
    let n = check_square(&sq_dists)?;
    if bandwidths.len() != n {
        return Err(Error::dims(format!(
            "{} bandwidths for a {n}x{n} distance matrix",
            bandwidths.len()
        )));
    }
    if let Some(s) = bandwidths.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::invalid(format!("bandwidth {s} is not positive")));
    }
    let mut probs = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let row = sq_dists.row(i);
        let mut out = probs.row_mut(i);
        let denom = 2.0 * bandwidths.sigmas[i] * bandwidths.sigmas[i];
        let lo = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, d)| *d)
            .fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        for (j, v) in out.iter_mut().enumerate() {
            if j != i {
                *v = (-(row[j] - lo) / denom).exp();
                z += *v;
            }
        }
        out.mapv_inplace(|v| v / z);
    }
    floor_and_normalize_rows(&mut probs);
    Ok(NeighborProbabilities::new_unchecked(probs, ProbabilityKind::Input))
}

/// Distances, bandwidth calibration and input probabilities in one call.
pub fn affinities(dataset: &Dataset, perplexity: f64) -> Result<(NeighborProbabilities, BandwidthSet)> {
    let sq = pairwise_sq_distances(dataset.data())?;
    let bw = calibrate_bandwidths(sq.view(), perplexity)?;
    let p = input_probabilities(sq.view(), &bw)?;
    Ok((p, bw))
}
