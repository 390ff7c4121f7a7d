//! Rank probabilities of a Dirichlet posterior as one-dimensional integrals.
//!
//! With `θ_k = γ_k / Σγ` and independent `γ_k ~ Gamma(α_k, β)`, the common
//! normalizer drops out of every comparison between shares:
//!
//! * a pair `{i, j}` holds the two largest candidate shares iff
//!   `min(γ_i, γ_j) > max_{k ∉ {i, j}} γ_k`, so the probability is
//!   `∫ F_max(u) f_min(u) du`;
//! * candidate `i` has a majority of the non-blank vote iff
//!   `γ_i > Σ_{k ≠ i} γ_k`, a sum that is itself Gamma distributed, giving
//!   `∫ F_sum(u) f_i(u) du`;
//! * `i` beats `j` iff `γ_i > γ_j`, giving `∫ F_j(u) f_i(u) du`.
//!
//! The blank category never enters any of these events.
//!
//! Integrals are taken in `t = ln u` over the envelope of the involved
//! marginals' `1e-12` and `1 - 1e-12` quantiles, with each marginal's median
//! as a breakpoint so narrow peaks are never straddled by a single panel.
//! Products of distribution functions are accumulated as sums of logs.

use thiserror::Error;

use crate::model::DirichletPosterior;
use crate::numerics::{integrate_with_breakpoints, GammaMarginal, NumericError, QuadratureSpec};

/// Tail mass left outside the integration envelope on each side.
pub const TAIL_MASS: f64 = 1e-12;

/// How far outside `[0, 1]` an integrated probability may land before it is
/// treated as an error instead of clamped.
pub const CLAMP_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("index {0} is not a candidate of this layout")]
    NotACandidate(usize),
    #[error("a pair needs two distinct candidates, got {0} twice")]
    SameCandidate(usize),
    #[error("all marginals of one computation must share a rate")]
    MixedRates,
    #[error("integrated probability {0} lies outside [0, 1] beyond tolerance")]
    OutOfRange(f64),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

impl RankError {
    /// The best available probability when the failure was a quadrature that
    /// missed its tolerance or landed outside `[0, 1]`.
    pub fn best_estimate(&self) -> Option<f64> {
        self.raw_estimate().map(|v| v.clamp(0.0, 1.0))
    }

    /// The integral the quadrature actually produced, unclamped.
    pub fn raw_estimate(&self) -> Option<f64> {
        match self {
            RankError::Numeric(NumericError::NotConverged { value, .. }) => Some(*value),
            RankError::OutOfRange(value) => Some(*value),
            _ => None,
        }
    }
}

/// The marginals entering `δ_min = min(pair)` and `δ_max = max(field_rest)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxAssembly {
    pair: [GammaMarginal; 2],
    field_rest: Vec<GammaMarginal>,
}

impl MinMaxAssembly {
    pub fn new(
        pair: [GammaMarginal; 2],
        field_rest: Vec<GammaMarginal>,
    ) -> Result<Self, RankError> {
        let rate = pair[0].rate();
        if pair[1].rate() != rate || field_rest.iter().any(|g| g.rate() != rate) {
            return Err(RankError::MixedRates);
        }
        Ok(Self { pair, field_rest })
    }

    /// Pair `{i, j}` against every other candidate of the posterior.
    pub fn from_posterior(
        post: &DirichletPosterior,
        i: usize,
        j: usize,
        rate: f64,
    ) -> Result<Self, RankError> {
        check_pair(post, i, j)?;
        let gammas = gammas(post, rate)?;
        let field_rest = post
            .layout()
            .candidate_indices()
            .into_iter()
            .filter(|&k| k != i && k != j)
            .map(|k| gammas[k])
            .collect();
        Self::new([gammas[i], gammas[j]], field_rest)
    }

    pub fn pair(&self) -> &[GammaMarginal; 2] {
        &self.pair
    }

    pub fn field_rest(&self) -> &[GammaMarginal] {
        &self.field_rest
    }

    /// `ln f_min(u)` where
    /// `f_min(u) = f_1(u)[1 - F_2(u)] + f_2(u)[1 - F_1(u)]`.
    pub fn f_min_log(&self, u: f64) -> Result<f64, RankError> {
        check_positive(u)?;
        Ok(self.f_min_log_unchecked(u))
    }

    /// `ln F_max(u) = Σ ln F_k(u)` over the field; zero for an empty field.
    pub fn cdf_max_log(&self, u: f64) -> Result<f64, RankError> {
        check_positive(u)?;
        Ok(self.cdf_max_log_unchecked(u))
    }

    fn f_min_log_unchecked(&self, u: f64) -> f64 {
        let t = u.ln();
        self.f_min_log_at_log(t) - t
    }

    fn cdf_max_log_unchecked(&self, u: f64) -> f64 {
        self.cdf_max_log_at_log(u.ln())
    }

    /// Log density of `ln min(pair)` at `t`.
    fn f_min_log_at_log(&self, t: f64) -> f64 {
        let [a, b] = &self.pair;
        log_add_exp(
            a.log_pdf_at_log(t) + b.ln_sf_at_log(t),
            b.log_pdf_at_log(t) + a.ln_sf_at_log(t),
        )
    }

    fn cdf_max_log_at_log(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for g in &self.field_rest {
            acc += g.ln_cdf_at_log(t);
            if acc == f64::NEG_INFINITY {
                break;
            }
        }
        acc
    }

    /// `P(min(pair) > max(field_rest))`.
    pub fn probability(&self, spec: &QuadratureSpec) -> Result<f64, RankError> {
        let envelope: Vec<GammaMarginal> =
            self.pair.iter().chain(&self.field_rest).copied().collect();
        integrate_log_space(
            &envelope,
            |t| self.cdf_max_log_at_log(t) + self.f_min_log_at_log(t),
            spec,
        )
    }
}

fn check_positive(u: f64) -> Result<(), RankError> {
    if u.is_finite() && u > 0.0 {
        Ok(())
    } else {
        Err(NumericError::Domain(format!("expected finite u > 0, got {u}")).into())
    }
}

fn check_candidate(post: &DirichletPosterior, i: usize) -> Result<(), RankError> {
    if post.layout().is_candidate(i) {
        Ok(())
    } else {
        Err(RankError::NotACandidate(i))
    }
}

fn check_pair(post: &DirichletPosterior, i: usize, j: usize) -> Result<(), RankError> {
    check_candidate(post, i)?;
    check_candidate(post, j)?;
    if i == j {
        return Err(RankError::SameCandidate(i));
    }
    Ok(())
}

fn gammas(post: &DirichletPosterior, rate: f64) -> Result<Vec<GammaMarginal>, RankError> {
    post.alpha()
        .iter()
        .map(|&a| GammaMarginal::new(a, rate).map_err(RankError::from))
        .collect()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// `∫ exp(ln_density(t)) dt` over the quantile envelope of `marginals` in
/// `t = ln u`, where `ln_density` is already the log density in `t`.
///
/// Working in `t` keeps small-shape marginals, whose mass sits at `u` far
/// below the smallest double, on a representable scale.
fn integrate_log_space<F: Fn(f64) -> f64>(
    marginals: &[GammaMarginal],
    ln_density: F,
    spec: &QuadratureSpec,
) -> Result<f64, RankError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut points = Vec::with_capacity(marginals.len() + 2);
    for g in marginals {
        lo = lo.min(g.log_quantile(TAIL_MASS)?);
        hi = hi.max(g.log_quantile(1.0 - TAIL_MASS)?);
        points.push(g.log_quantile(0.5)?);
    }
    points.retain(|&p| p > lo && p < hi);
    points.push(lo);
    points.push(hi);
    points.sort_by(f64::total_cmp);
    let min_gap = 1e-9 * (hi - lo);
    points.dedup_by(|next, prev| *next - *prev < min_gap);
    let last = points.len() - 1;
    points[last] = hi;

    let integrand = |t: f64| {
        let v = ln_density(t);
        if v.is_nan() {
            0.0
        } else {
            v.exp()
        }
    };
    let value = integrate_with_breakpoints(integrand, &points, spec)?.value;
    clamp_probability(value)
}

fn clamp_probability(value: f64) -> Result<f64, RankError> {
    if !(-CLAMP_SLACK..=1.0 + CLAMP_SLACK).contains(&value) {
        return Err(RankError::OutOfRange(value));
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Probability that candidates `i` and `j` take the two largest shares.
pub fn prob_pair_top2(
    post: &DirichletPosterior,
    i: usize,
    j: usize,
    spec: &QuadratureSpec,
) -> Result<f64, RankError> {
    prob_pair_top2_at_rate(post, i, j, 1.0, spec)
}

pub fn prob_pair_top2_at_rate(
    post: &DirichletPosterior,
    i: usize,
    j: usize,
    rate: f64,
    spec: &QuadratureSpec,
) -> Result<f64, RankError> {
    MinMaxAssembly::from_posterior(post, i, j, rate)?.probability(spec)
}

/// Probability that candidate `i` wins more than half of the non-blank vote.
pub fn prob_majority(
    post: &DirichletPosterior,
    i: usize,
    spec: &QuadratureSpec,
) -> Result<f64, RankError> {
    prob_majority_at_rate(post, i, 1.0, spec)
}

pub fn prob_majority_at_rate(
    post: &DirichletPosterior,
    i: usize,
    rate: f64,
    spec: &QuadratureSpec,
) -> Result<f64, RankError> {
    check_candidate(post, i)?;
    let candidate = GammaMarginal::new(post.alpha()[i], rate)?;
    let rest_shape: f64 = post
        .layout()
        .candidate_indices()
        .into_iter()
        .filter(|&k| k != i)
        .map(|k| post.alpha()[k])
        .sum();
    let rest = GammaMarginal::new(rest_shape, rate)?;
    integrate_log_space(
        &[candidate, rest],
        |t| rest.ln_cdf_at_log(t) + candidate.log_pdf_at_log(t),
        spec,
    )
}

/// Probability that candidate `i` receives more votes than candidate `j`.
pub fn prob_beats(
    post: &DirichletPosterior,
    i: usize,
    j: usize,
    spec: &QuadratureSpec,
) -> Result<f64, RankError> {
    prob_beats_at_rate(post, i, j, 1.0, spec)
}

pub fn prob_beats_at_rate(
    post: &DirichletPosterior,
    i: usize,
    j: usize,
    rate: f64,
    spec: &QuadratureSpec,
) -> Result<f64, RankError> {
    check_pair(post, i, j)?;
    let winner = GammaMarginal::new(post.alpha()[i], rate)?;
    let loser = GammaMarginal::new(post.alpha()[j], rate)?;
    integrate_log_space(
        &[winner, loser],
        |t| loser.ln_cdf_at_log(t) + winner.log_pdf_at_log(t),
        spec,
    )
}
