//! Selection of `alpha` through the EDA density (exponential divergence with
//! augmentation).
//!
//! The alpha-divergence between `v` and `m` equals the beta-divergence
//! between `u = v^a / a^(2a)` and `mu = m^a / a^(2a)` with `beta = 1/a - 1`.
//! The EDA density
//!
//! ```text
//! p(u; mu, phi, beta) = exp[ (beta-1)/2 log u - D_beta(u || mu) / phi ] / Z(beta, phi, mu)
//! ```
//!
//! then gives a likelihood for `alpha`, either maximized directly (with `Z`
//! computed by quadrature) or replaced by a score matching objective that
//! never needs `Z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::NeighborProbabilities;
use crate::divergence::{output_probabilities, Embedding};
use crate::error::{Error, Result};
use crate::quadrature::{golden_section_min, integrate};

/// Smallest `|alpha|` accepted by the transform.
pub const MIN_ALPHA: f64 = 1e-9;
/// Default relative tolerance of the normalizer quadrature.
pub const NORMALIZER_REL_TOL: f64 = 1e-8;
/// Search interval for `log(phi)`.
pub const LOG_PHI_RANGE: (f64, f64) = (-12.0, 4.0);
/// Bracket width at which the `log(phi)` search stops.
pub const LOG_PHI_TOL: f64 = 1e-6;

/// Log of the integrand-to-peak ratio at which the integration range is cut.
const TAIL_LOG_CUTOFF: f64 = -40.0;
const BETA_ZERO_EPS: f64 = 1e-12;
/// Node spacing, in `log(phi_eff)`, of [`LogNormalizerTable`].
const TABLE_STEP: f64 = 0.05;

/// Shape (`beta`) and dispersion (`phi`) of an EDA density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdaParams {
    pub beta: f64,
    pub phi: f64,
}

impl EdaParams {
    pub fn new(beta: f64, phi: f64) -> Result<Self> {
        let p = EdaParams { beta, phi };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return Err(Error::invalid(format!("dispersion must be positive, got {}", self.phi)));
        }
        if !self.beta.is_finite() || (self.beta + 1.0).abs() < BETA_ZERO_EPS {
            return Err(Error::invalid(format!("beta = {} is outside the EDA family", self.beta)));
        }
        Ok(())
    }
}

/// `beta = 1/alpha - 1`.
pub fn beta_from_alpha(alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha.abs() <= MIN_ALPHA {
        return Err(Error::invalid(format!("alpha = {alpha} has no beta counterpart")));
    }
    Ok(1.0 / alpha - 1.0)
}

/// `ln(alpha^(2 alpha))`, the log of the transform's scale.
fn log_transform_scale(alpha: f64) -> f64 {
    2.0 * alpha * alpha.abs().ln()
}

/// `u_i = v_i^alpha / alpha^(2 alpha)`.
pub fn transform_to_beta(v: &[f64], alpha: f64) -> Result<Vec<f64>> {
    beta_from_alpha(alpha)?;
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::invalid(format!("entry {i} = {x} must be positive")));
    }
    let c = log_transform_scale(alpha);
    Ok(v.iter().map(|x| (alpha * x.ln() - c).exp()).collect())
}

/// `(u^beta - mu^beta) / beta`, continuous through `beta = 0` where it is
/// `ln(u / mu)`.
#[inline]
fn power_difference(ln_u: f64, ln_mu: f64, beta: f64) -> f64 {
    let r = ln_u - ln_mu;
    if beta.abs() < BETA_ZERO_EPS {
        r
    } else {
        (beta * ln_mu).exp() * (beta * r).exp_m1() / beta
    }
}

#[inline]
fn beta_divergence_ln(u: f64, ln_u: f64, mu: f64, ln_mu: f64, beta: f64) -> f64 {
    let e = power_difference(ln_u, ln_mu, beta);
    let mu_b = if beta.abs() < BETA_ZERO_EPS { 1.0 } else { (beta * ln_mu).exp() };
    (u * e - mu_b * (u - mu)) / (beta + 1.0)
}

/// `D_beta(u || mu) = u^(b+1)/(b(b+1)) + mu^(b+1)/(b+1) - u mu^b / b`, with
/// the generalized KL divergence `u ln(u/mu) - u + mu` at `beta = 0`.
pub fn beta_divergence(u: f64, mu: f64, beta: f64) -> f64 {
    beta_divergence_ln(u, u.ln(), mu, mu.ln(), beta)
}

fn check_point(u: f64, mu: f64, params: &EdaParams) -> Result<()> {
    params.validate()?;
    if !(u.is_finite() && u > 0.0) || !(mu.is_finite() && mu > 0.0) {
        return Err(Error::invalid(format!("u = {u} and mu = {mu} must be positive")));
    }
    Ok(())
}

/// Exponent of the EDA density, without `log Z`:
/// `((b-1)/2) ln u + (1/phi)(-u^(b+1)/(b(b+1)) + u mu^b / b - mu^(b+1)/(b+1))`.
///
/// At `beta = 0` the bracket takes its limit `-(u ln(u/mu) - u + mu)`.
pub fn eda_log_density_unnormalized(u: f64, mu: f64, params: &EdaParams) -> Result<f64> {
    check_point(u, mu, params)?;
    let b = params.beta;
    Ok(0.5 * (b - 1.0) * u.ln() - beta_divergence(u, mu, b) / params.phi)
}

/// `d/du` of [`eda_log_density_unnormalized`].
pub fn eda_score(u: f64, mu: f64, params: &EdaParams) -> Result<f64> {
    check_point(u, mu, params)?;
    let b = params.beta;
    Ok(0.5 * (b - 1.0) / u - power_difference(u.ln(), mu.ln(), b) / params.phi)
}

/// `d^2/du^2` of [`eda_log_density_unnormalized`].
pub fn eda_score_derivative(u: f64, mu: f64, params: &EdaParams) -> Result<f64> {
    check_point(u, mu, params)?;
    let b = params.beta;
    Ok(-0.5 * (b - 1.0) / (u * u) - ((b - 1.0) * u.ln()).exp() / params.phi)
}

/// `log Z` for `mu = 1`, integrating over `s = ln u`.
fn log_normalizer_unit(beta: f64, ln_phi: f64, rel_tol: f64) -> Result<f64> {
    let inv_phi = (-ln_phi).exp();
    let half = 0.5 * (beta + 1.0);
    let e_of = |s: f64| if beta.abs() < BETA_ZERO_EPS { s } else { (beta * s).exp_m1() / beta };
    let h = |s: f64| {
        let u = s.exp();
        half * s - (u * e_of(s) - s.exp_m1()) / (beta + 1.0) * inv_phi
    };
    let dh = |s: f64| half - s.exp() * e_of(s) * inv_phi;

    // bracket and bisect the stationary point of h
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut guard = 0;
    while dh(lo) <= 0.0 {
        lo = lo * 2.0 - 1.0;
        guard += 1;
        if guard > 80 || !lo.is_finite() {
            return Err(Error::numerical("could not bracket the EDA mode from below"));
        }
    }
    guard = 0;
    while dh(hi) >= 0.0 {
        hi = hi * 2.0 + 1.0;
        guard += 1;
        if guard > 80 || !hi.is_finite() {
            return Err(Error::numerical(format!(
                "EDA integrand does not decay (beta = {beta}, ln phi = {ln_phi})"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dh(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mode = 0.5 * (lo + hi);
    let peak = h(mode);
    if !peak.is_finite() {
        return Err(Error::numerical("non-finite EDA log-density at its mode"));
    }
    let u = mode.exp();
    let curvature = u * ((beta + 1.0) * e_of(mode) + 1.0) * inv_phi;
    let width = if curvature.is_finite() && curvature > 0.0 { curvature.sqrt().recip() } else { 1.0 };

    // walk outwards geometrically until the integrand is negligible
    let mut left = vec![mode];
    let mut right = vec![mode];
    for (dir, pts) in [(-1.0, &mut left), (1.0, &mut right)] {
        let mut k = 1.0;
        loop {
            let s = mode + dir * k * width;
            pts.push(s);
            let v = h(s) - peak;
            if v < TAIL_LOG_CUTOFF || v.is_nan() && dir < 0.0 {
                break;
            }
            k *= 2.0;
            if k > 2f64.powi(80) || !s.is_finite() {
                return Err(Error::numerical(format!(
                    "EDA normalizer diverges (beta = {beta}, ln phi = {ln_phi})"
                )));
            }
        }
    }
    left.reverse();
    left.pop();
    let mut breaks = left;
    breaks.extend(right);
    breaks.dedup();

    let integral = integrate(
        |s| {
            let v = (h(s) - peak).exp();
            if v.is_nan() {
                0.0
            } else {
                v
            }
        },
        &breaks,
        rel_tol,
    )?;
    if integral.value.is_nan() || integral.value <= 0.0 {
        return Err(Error::numerical("EDA normalizer integral is not positive"));
    }
    Ok(peak + integral.value.ln())
}

/// `log Z(beta, phi, mu)` with a chosen quadrature tolerance.
///
/// Uses `Z(mu, phi) = mu^((b+1)/2) Z(1, phi mu^-(b+1))`, then integrates
/// over `ln u` with the peak of the integrand factored out.
pub fn log_normalizer_with_tolerance(params: &EdaParams, mu: f64, rel_tol: f64) -> Result<f64> {
    check_point(1.0, mu, params)?;
    if rel_tol.is_nan() || rel_tol <= 0.0 {
        return Err(Error::invalid("quadrature tolerance must be positive"));
    }
    let b = params.beta;
    let ln_mu = mu.ln();
    let ln_phi_eff = params.phi.ln() - (b + 1.0) * ln_mu;
    Ok(0.5 * (b + 1.0) * ln_mu + log_normalizer_unit(b, ln_phi_eff, rel_tol)?)
}

/// `log Z(beta, phi, mu)` at [`NORMALIZER_REL_TOL`].
pub fn log_normalizer(params: &EdaParams, mu: f64) -> Result<f64> {
    log_normalizer_with_tolerance(params, mu, NORMALIZER_REL_TOL)
}

/// `Z(beta, phi, mu) = integral_0^inf exp(eda_log_density_unnormalized(u)) du`.
pub fn eda_normalizer(params: &EdaParams, mu: f64) -> Result<f64> {
    let z = log_normalizer(params, mu)?.exp();
    if !z.is_finite() {
        return Err(Error::numerical(format!("normalizer overflows: log Z = {}", log_normalizer(params, mu)?)));
    }
    Ok(z)
}

/// `log Z(beta, 1, phi_eff)` tabulated over `ln phi_eff` on a uniform grid
/// and interpolated with local cubics.
#[derive(Debug, Clone)]
pub struct LogNormalizerTable {
    beta: f64,
    start: f64,
    values: Vec<f64>,
}

impl LogNormalizerTable {
    pub fn new(beta: f64, ln_phi_lo: f64, ln_phi_hi: f64) -> Result<Self> {
        EdaParams::new(beta, 1.0)?;
        if ln_phi_lo.is_nan() || ln_phi_hi.is_nan() || ln_phi_lo >= ln_phi_hi {
            return Err(Error::invalid("empty normalizer table range"));
        }
        let start = ln_phi_lo - 2.0 * TABLE_STEP;
        let count = ((ln_phi_hi - ln_phi_lo) / TABLE_STEP).ceil() as usize + 5;
        let values = (0..count)
            .map(|k| log_normalizer_unit(beta, start + k as f64 * TABLE_STEP, NORMALIZER_REL_TOL * 1e-2))
            .collect::<Result<Vec<_>>>()?;
        Ok(LogNormalizerTable { beta, start, values })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `log Z(beta, phi_eff)` for `mu = 1`.
    pub fn eval(&self, ln_phi: f64) -> Result<f64> {
        let x = (ln_phi - self.start) / TABLE_STEP;
        let k = x.floor() as isize - 1;
        if k < 0 || k as usize + 3 >= self.values.len() {
            return log_normalizer_unit(self.beta, ln_phi, NORMALIZER_REL_TOL);
        }
        let k = k as usize;
        let t = x - (k + 1) as f64;
        let [y0, y1, y2, y3] = [self.values[k], self.values[k + 1], self.values[k + 2], self.values[k + 3]];
        // Lagrange cubic through nodes at -1, 0, 1, 2
        Ok(-t * (t - 1.0) * (t - 2.0) / 6.0 * y0 + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * y1
            - (t + 1.0) * t * (t - 2.0) / 2.0 * y2
            + (t + 1.0) * t * (t - 1.0) / 6.0 * y3)
    }
}

fn check_vectors(v: &[f64], m: &[f64]) -> Result<()> {
    if v.len() != m.len() {
        return Err(Error::dims(format!("v has {} entries, m has {}", v.len(), m.len())));
    }
    if v.is_empty() {
        return Err(Error::invalid("empty data vector"));
    }
    for (name, x) in [("v", v), ("m", m)] {
        if let Some((i, y)) = x.iter().enumerate().find(|(_, y)| !(y.is_finite() && **y > 0.0)) {
            return Err(Error::invalid(format!("{name}[{i}] = {y} must be positive")));
        }
    }
    Ok(())
}

/// Transformed data shared by the objectives for one candidate `alpha`.
#[derive(Debug, Clone)]
struct Transformed {
    alpha: f64,
    beta: f64,
    u: Vec<f64>,
    ln_u: Vec<f64>,
    mu: Vec<f64>,
    ln_mu: Vec<f64>,
}

impl Transformed {
    fn new(v: &[f64], m: &[f64], alpha: f64) -> Result<Self> {
        check_vectors(v, m)?;
        let beta = beta_from_alpha(alpha)?;
        if (beta + 1.0).abs() < BETA_ZERO_EPS {
            return Err(Error::invalid("beta = -1 has no change of variables"));
        }
        let c = log_transform_scale(alpha);
        let ln_u: Vec<f64> = v.iter().map(|x| alpha * x.ln() - c).collect();
        let ln_mu: Vec<f64> = m.iter().map(|x| alpha * x.ln() - c).collect();
        Ok(Transformed {
            alpha,
            beta,
            u: ln_u.iter().map(|x| x.exp()).collect(),
            mu: ln_mu.iter().map(|x| x.exp()).collect(),
            ln_u,
            ln_mu,
        })
    }

    fn divergences(&self) -> Vec<f64> {
        (0..self.u.len())
            .map(|i| beta_divergence_ln(self.u[i], self.ln_u[i], self.mu[i], self.ln_mu[i], self.beta))
            .collect()
    }

    /// Sum of the `phi`-independent part of the log-likelihood:
    /// `((b-1)/2) ln u - b ln u + ln|b+1|`.
    fn likelihood_offset(&self) -> f64 {
        let b = self.beta;
        let jac = (b + 1.0).abs().ln();
        self.ln_u.iter().map(|lu| 0.5 * (b - 1.0) * lu - b * lu + jac).sum()
    }

    /// Score-matching sums `(A, B, C)` with `J = A + B/phi + C/phi^2`.
    fn score_matching_terms(&self, data_space: bool) -> (f64, f64, f64) {
        let (a, b) = (self.alpha, self.beta);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for i in 0..self.u.len() {
            let u = self.u[i];
            // psi = p0 + p1/phi, psi' = d0 + d1/phi
            let p0 = 0.5 * (b - 1.0) / u;
            let p1 = -power_difference(self.ln_u[i], self.ln_mu[i], b);
            let d0 = -0.5 * (b - 1.0) / (u * u);
            let d1 = -((b - 1.0) * self.ln_u[i]).exp();
            if data_space {
                // score of the log-density of v, including the Jacobian
                let g0 = p0 - b / u;
                let g2 = d0 + b / (u * u);
                let (c1, c2) = (a * (a + 1.0) * u, a * a * u * u);
                s0 += c1 * g0 + c2 * g2 + 0.5 * c2 * g0 * g0;
                s1 += c1 * p1 + c2 * d1 + c2 * g0 * p1;
                s2 += 0.5 * c2 * p1 * p1;
            } else {
                let u2 = u * u;
                s0 += 2.0 * u * p0 + u2 * d0 + 0.5 * u2 * p0 * p0;
                s1 += 2.0 * u * p1 + u2 * d1 + u2 * p0 * p1;
                s2 += 0.5 * u2 * p1 * p1;
            }
        }
        (s0, s1, s2)
    }
}

/// Log-likelihood of `v` under the EDA model with means `m`:
/// `sum_i [ log p_EDA(u_i; mu_i, phi, beta) - beta ln u_i + ln|beta + 1| ]`.
///
/// Each entry's normalizer is integrated directly; see
/// [`LikelihoodEvaluator`] for the tabulated variant used during search.
pub fn eda_log_likelihood(v: &[f64], m: &[f64], alpha: f64, phi: f64) -> Result<f64> {
    let t = Transformed::new(v, m, alpha)?;
    let params = EdaParams::new(t.beta, phi)?;
    let div = t.divergences();
    let mut total = t.likelihood_offset();
    for (d, mu) in div.iter().zip(&t.mu) {
        total -= d / phi;
        total -= log_normalizer(&params, *mu)?;
    }
    Ok(total)
}

/// Non-negative score matching objective of the EDA density of the
/// transformed data `u`:
/// `sum_i [ 2 u psi(u) + u^2 psi'(u) + u^2 psi(u)^2 / 2 ]`.
pub fn score_matching_objective(v: &[f64], m: &[f64], alpha: f64, phi: f64) -> Result<f64> {
    let t = Transformed::new(v, m, alpha)?;
    EdaParams::new(t.beta, phi)?;
    let (a, b, c) = t.score_matching_terms(false);
    Ok(a + b / phi + c / (phi * phi))
}

/// Non-negative score matching objective of the implied density of `v`
/// itself (EDA density times the Jacobian of `v -> u`), so that values at
/// different `alpha` describe the same data.
pub fn score_matching_objective_data(v: &[f64], m: &[f64], alpha: f64, phi: f64) -> Result<f64> {
    let t = Transformed::new(v, m, alpha)?;
    EdaParams::new(t.beta, phi)?;
    let (a, b, c) = t.score_matching_terms(true);
    Ok(a + b / phi + c / (phi * phi))
}

/// Log-likelihood of one candidate `alpha` as a function of `phi`, with the
/// normalizer read from a [`LogNormalizerTable`].
#[derive(Debug, Clone)]
pub struct LikelihoodEvaluator {
    t: Transformed,
    divergences: Vec<f64>,
    offset: f64,
    table: LogNormalizerTable,
}

impl LikelihoodEvaluator {
    pub fn new(v: &[f64], m: &[f64], alpha: f64) -> Result<Self> {
        let t = Transformed::new(v, m, alpha)?;
        let scale = t.beta + 1.0;
        let (lo, hi) = t
            .ln_mu
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
        let table = LogNormalizerTable::new(
            t.beta,
            (LOG_PHI_RANGE.0 - scale * hi).min(LOG_PHI_RANGE.0 - scale * lo),
            (LOG_PHI_RANGE.1 - scale * lo).max(LOG_PHI_RANGE.1 - scale * hi),
        )?;
        Ok(LikelihoodEvaluator {
            divergences: t.divergences(),
            offset: t.likelihood_offset(),
            t,
            table,
        })
    }

    pub fn log_likelihood(&self, phi: f64) -> Result<f64> {
        let ln_phi = phi.ln();
        let b1 = self.t.beta + 1.0;
        let mut total = self.offset;
        for (d, ln_mu) in self.divergences.iter().zip(&self.t.ln_mu) {
            total -= d / phi;
            total -= 0.5 * b1 * ln_mu + self.table.eval(ln_phi - b1 * ln_mu)?;
        }
        Ok(total)
    }
}

/// How candidate values of `alpha` are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdaMethod {
    /// Minimize the score matching objective (the default).
    ScoreMatching,
    /// Maximize the EDA log-likelihood.
    MaxLikelihood,
}

impl EdaMethod {
    pub fn name(&self) -> &'static str {
        match self {
            EdaMethod::ScoreMatching => "score_matching",
            EdaMethod::MaxLikelihood => "max_likelihood",
        }
    }
}

/// Which score matching density the [`EdaMethod::ScoreMatching`] selection
/// uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSpace {
    /// Density of the transformed values `u`.
    Transformed,
    /// Density of the probabilities `v` (includes the Jacobian).
    #[default]
    Data,
}

/// Fitted dispersion and objective for one `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveFit {
    pub phi: f64,
    pub value: f64,
}

/// All objectives evaluated for one candidate `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub alpha: f64,
    pub score_matching: ObjectiveFit,
    pub score_matching_data: ObjectiveFit,
    pub log_likelihood: Option<ObjectiveFit>,
}

fn fit_log_phi<F: FnMut(f64) -> f64>(mut objective: F) -> ObjectiveFit {
    let best = golden_section_min(|lp| objective(lp.exp()), LOG_PHI_RANGE.0, LOG_PHI_RANGE.1, LOG_PHI_TOL);
    ObjectiveFit {
        phi: best.x.exp(),
        value: best.value,
    }
}

/// Fits `phi` for every objective at one `alpha`. The likelihood, which
/// needs numerical normalizers, is only computed when `with_likelihood`.
pub fn fit_candidate(v: &[f64], m: &[f64], alpha: f64, with_likelihood: bool) -> Result<CandidateFit> {
    let t = Transformed::new(v, m, alpha)?;
    let sm = |data: bool| {
        let (a, b, c) = t.score_matching_terms(data);
        fit_log_phi(|phi| a + b / phi + c / (phi * phi))
    };
    let score_matching = sm(false);
    let score_matching_data = sm(true);
    let log_likelihood = if with_likelihood {
        let ev = LikelihoodEvaluator::new(v, m, alpha)?;
        let mut failure = None;
        let mut fit = fit_log_phi(|phi| match ev.log_likelihood(phi) {
            Ok(l) => -l,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        });
        if let Some(e) = failure {
            if !fit.value.is_finite() {
                return Err(e);
            }
        }
        fit.value = -fit.value;
        Some(fit)
    } else {
        None
    };
    Ok(CandidateFit {
        alpha,
        score_matching,
        score_matching_data,
        log_likelihood,
    })
}

/// A candidate whose embedding or fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub alpha: f64,
    pub message: String,
}

/// Outcome of a grid search over `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaFit {
    pub grid: Vec<f64>,
    /// Objective of `method` per grid value (`NaN` for failed candidates).
    pub objectives: Vec<f64>,
    /// Fitted dispersion of `method` per grid value.
    pub phis: Vec<f64>,
    pub selected_alpha: f64,
    pub method: EdaMethod,
    pub score_space: ScoreSpace,
    pub candidates: Vec<Option<CandidateFit>>,
    pub failures: Vec<CandidateFailure>,
}

/// Settings for [`estimate_alpha`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub method: EdaMethod,
    pub score_space: ScoreSpace,
    /// Also evaluate the likelihood when selecting by score matching.
    pub record_likelihood: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            method: EdaMethod::ScoreMatching,
            score_space: ScoreSpace::default(),
            record_likelihood: true,
        }
    }
}

impl EstimateOptions {
    pub fn with_method(method: EdaMethod) -> Self {
        EstimateOptions {
            method,
            ..Default::default()
        }
    }
}

/// `{0.05, 0.10, ..., 1.0}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 0.05).collect()
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    if let Some(a) = grid.iter().find(|a| !(**a > 1e-6 && **a <= 1.0)) {
        return Err(Error::invalid(format!("grid value {a} is outside (0, 1]")));
    }
    Ok(())
}

/// Scores each `alpha` in `grid`: embeds with `embed(alpha)`, takes
/// `v = vec(P)` and `m = vec(Q)` over off-diagonal entries, fits `phi`, and
/// picks the optimum of the chosen objective.
pub fn estimate_alpha<F>(p: &NeighborProbabilities, embed: F, grid: &[f64], options: EstimateOptions) -> Result<EdaFit>
where
    F: Fn(f64) -> Result<Embedding> + Sync,
{
    estimate_alpha_with_embeddings(p, embed, grid, options).map(|(fit, _)| fit)
}

/// [`estimate_alpha`], also returning the embedding of every successful
/// candidate.
pub fn estimate_alpha_with_embeddings<F>(
    p: &NeighborProbabilities,
    embed: F,
    grid: &[f64],
    options: EstimateOptions,
) -> Result<(EdaFit, Vec<Option<Embedding>>)>
where
    F: Fn(f64) -> Result<Embedding> + Sync,
{
    check_grid(grid)?;
    let v = p.off_diagonal();
    let want_likelihood = options.record_likelihood || options.method == EdaMethod::MaxLikelihood;
    let outcomes: Vec<Result<(CandidateFit, Embedding)>> = grid
        .par_iter()
        .map(|&alpha| {
            let embedding = embed(alpha)?;
            if embedding.n() != p.n() {
                return Err(Error::dims(format!("embedding has {} points, P has {}", embedding.n(), p.n())));
            }
            let m = output_probabilities(&embedding)?.off_diagonal();
            let fit = fit_candidate(&v, &m, alpha, want_likelihood)?;
            Ok((fit, embedding))
        })
        .collect();

    let mut objectives = Vec::with_capacity(grid.len());
    let mut phis = Vec::with_capacity(grid.len());
    let mut candidates = Vec::with_capacity(grid.len());
    let mut embeddings = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for (alpha, outcome) in grid.iter().zip(outcomes) {
        match outcome {
            Ok((fit, emb)) => {
                let chosen = match options.method {
                    EdaMethod::ScoreMatching => match options.score_space {
                        ScoreSpace::Transformed => fit.score_matching,
                        ScoreSpace::Data => fit.score_matching_data,
                    },
                    EdaMethod::MaxLikelihood => fit.log_likelihood.expect("likelihood requested"),
                };
                objectives.push(chosen.value);
                phis.push(chosen.phi);
                candidates.push(Some(fit));
                embeddings.push(Some(emb));
            }
            Err(e) => {
                objectives.push(f64::NAN);
                phis.push(f64::NAN);
                candidates.push(None);
                embeddings.push(None);
                failures.push(CandidateFailure {
                    alpha: *alpha,
                    message: e.to_string(),
                });
            }
        }
    }

    let better = |a: f64, b: f64| match options.method {
        EdaMethod::ScoreMatching => a < b,
        EdaMethod::MaxLikelihood => a > b,
    };
    let mut selected: Option<usize> = None;
    for (k, obj) in objectives.iter().enumerate() {
        if obj.is_finite() && selected.is_none_or(|s| better(*obj, objectives[s])) {
            selected = Some(k);
        }
    }
    let Some(selected) = selected else {
        return Err(Error::numerical(format!(
            "every alpha candidate failed: {}",
            failures.iter().map(|f| format!("{}: {}", f.alpha, f.message)).collect::<Vec<_>>().join("; ")
        )));
    };

    Ok((
        EdaFit {
            grid: grid.to_vec(),
            objectives,
            phis,
            selected_alpha: grid[selected],
            method: options.method,
            score_space: options.score_space,
            candidates,
            failures,
        },
        embeddings,
    ))
}
