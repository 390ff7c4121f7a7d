//! Brute-force Monte Carlo counterparts of the rank kernels.
//!
//! Used only to cross-check the quadrature results. Draws come from
//! ChaCha8 streams: draw block `b` of a run with seed `s` always uses stream
//! `b` of the generator seeded with `s`, so estimates are reproducible bit for
//! bit and independent of how blocks are spread over workers.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::DirichletPosterior;
use crate::numerics::NumericError;

/// Draws per independent sub-stream.
pub const BLOCK_DRAWS: u64 = 1 << 16;

/// A binomial proportion estimated by simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_draws: u64,
    pub seed: u64,
}

impl OracleEstimate {
    pub fn from_hits(hits: u64, n_draws: u64, seed: u64) -> Self {
        let estimate = hits as f64 / n_draws as f64;
        Self {
            estimate,
            std_error: (estimate * (1.0 - estimate) / n_draws as f64).sqrt(),
            n_draws,
            seed,
        }
    }

    /// Standardized distance of the estimate from `reference`.
    ///
    /// The binomial variance is taken at the reference value, floored at one
    /// draw's worth (`p(1-p) >= 1/N`), so references of exactly 0 or 1 still
    /// give a finite score.
    pub fn z_score(&self, reference: f64) -> f64 {
        let n = self.n_draws as f64;
        let var = (reference * (1.0 - reference)).max(1.0 / n) / n;
        (self.estimate - reference) / var.sqrt()
    }
}

/// One Gamma(shape, rate) variate.
///
/// Marsaglia–Tsang squeeze/acceptance for `shape >= 1`; smaller shapes draw
/// at `shape + 1` and multiply by `U^(1/shape)`.
pub fn sample_gamma<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> Result<f64, NumericError> {
    if !(shape.is_finite() && shape > 0.0) || !(rate.is_finite() && rate > 0.0) {
        return Err(NumericError::Domain(format!(
            "gamma sampling needs shape > 0 and rate > 0, got ({shape}, {rate})"
        )));
    }
    Ok(sample_unit_gamma(shape, rng) / rate)
}

fn sample_unit_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let boost: f64 = rng.sample::<f64, _>(Open01).powf(1.0 / shape);
        return sample_unit_gamma(shape + 1.0, rng) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.sample(Open01);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `ln` of a unit-rate Gamma variate. Shapes far below one put most of
/// their mass under the smallest double; in log form those draws still
/// compare and rank correctly.
fn sample_unit_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.sample(Open01);
        return sample_unit_gamma(shape + 1.0, rng).ln() + u.ln() / shape;
    }
    sample_unit_gamma(shape, rng).ln()
}

/// The generator for draw block `block` of a run seeded with `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

pub fn block_count(n_draws: u64) -> u64 {
    n_draws.div_ceil(BLOCK_DRAWS)
}

/// Feeds every draw of the given blocks to `visit` as the logs of one
/// unit-rate Gamma vector over the full layout.
pub fn simulate_blocks<F: FnMut(&[f64])>(
    post: &DirichletPosterior,
    n_draws: u64,
    seed: u64,
    blocks: Range<u64>,
    mut visit: F,
) {
    let alpha = post.alpha();
    let mut draw = vec![0.0; alpha.len()];
    for block in blocks {
        let start = block * BLOCK_DRAWS;
        if start >= n_draws {
            break;
        }
        let len = BLOCK_DRAWS.min(n_draws - start);
        let mut rng = block_rng(seed, block);
        for _ in 0..len {
            for (slot, &a) in draw.iter_mut().zip(alpha) {
                *slot = sample_unit_log_gamma(a, &mut rng);
            }
            visit(&draw);
        }
    }
}

fn count_hits<F: Fn(&[f64]) -> bool>(
    post: &DirichletPosterior,
    n_draws: u64,
    seed: u64,
    event: F,
) -> OracleEstimate {
    let mut hits = 0u64;
    simulate_blocks(post, n_draws, seed, 0..block_count(n_draws), |g| {
        if event(g) {
            hits += 1;
        }
    });
    OracleEstimate::from_hits(hits, n_draws, seed)
}

/// Event counts for every first-round kernel over one shared set of draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirstRoundTally {
    pub n_draws: u64,
    pub seed: u64,
    /// Indexed by layout position; the blank entry stays zero.
    pub majority_hits: Vec<u64>,
    /// Keyed by `(lo, hi)` layout positions.
    pub pair_hits: BTreeMap<(usize, usize), u64>,
}

impl FirstRoundTally {
    fn empty(post: &DirichletPosterior, n_draws: u64, seed: u64) -> Self {
        Self {
            n_draws,
            seed,
            majority_hits: vec![0; post.layout().len()],
            pair_hits: BTreeMap::new(),
        }
    }

    pub fn merge(&mut self, other: &FirstRoundTally) {
        for (a, b) in self.majority_hits.iter_mut().zip(&other.majority_hits) {
            *a += b;
        }
        for (k, v) in &other.pair_hits {
            *self.pair_hits.entry(*k).or_default() += v;
        }
    }

    pub fn majority(&self, i: usize) -> OracleEstimate {
        OracleEstimate::from_hits(self.majority_hits[i], self.n_draws, self.seed)
    }

    pub fn pair(&self, i: usize, j: usize) -> OracleEstimate {
        let key = (i.min(j), i.max(j));
        let hits = self.pair_hits.get(&key).copied().unwrap_or(0);
        OracleEstimate::from_hits(hits, self.n_draws, self.seed)
    }
}

/// Tallies the blocks in `blocks` of an `n_draws`-draw run.
pub fn mc_first_round_blocks(
    post: &DirichletPosterior,
    n_draws: u64,
    seed: u64,
    blocks: Range<u64>,
) -> FirstRoundTally {
    let candidates = post.layout().candidate_indices();
    let mut tally = FirstRoundTally::empty(post, n_draws, seed);
    simulate_blocks(post, n_draws, seed, blocks, |lg| {
        let (mut first, mut second) = (usize::MAX, usize::MAX);
        for &k in &candidates {
            if first == usize::MAX || lg[k] > lg[first] {
                second = first;
                first = k;
            } else if second == usize::MAX || lg[k] > lg[second] {
                second = k;
            }
        }
        *tally
            .pair_hits
            .entry((first.min(second), first.max(second)))
            .or_default() += 1;
        // Only the leader can hold more than half; compare relative to it.
        let total: f64 = candidates.iter().map(|&k| (lg[k] - lg[first]).exp()).sum();
        if 2.0 > total {
            tally.majority_hits[first] += 1;
        }
    });
    tally
}

/// Tallies all first-round events of one run.
pub fn mc_first_round(post: &DirichletPosterior, n_draws: u64, seed: u64) -> FirstRoundTally {
    mc_first_round_blocks(post, n_draws, seed, 0..block_count(n_draws))
}

/// Same tally as [`mc_first_round`], with blocks spread over `workers`
/// threads.
pub fn mc_first_round_parallel(
    post: &DirichletPosterior,
    n_draws: u64,
    seed: u64,
    workers: usize,
) -> FirstRoundTally {
    let blocks = block_count(n_draws);
    let workers = (workers.max(1) as u64).min(blocks.max(1));
    let per = blocks.div_ceil(workers);
    let parts: Vec<FirstRoundTally> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let range = (w * per).min(blocks)..((w + 1) * per).min(blocks);
                s.spawn(move || mc_first_round_blocks(post, n_draws, seed, range))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("oracle worker panicked"))
            .collect()
    });
    let mut total = FirstRoundTally::empty(post, n_draws, seed);
    for part in &parts {
        total.merge(part);
    }
    total
}

/// Fraction of draws in which `i` and `j` hold the two largest candidate
/// shares.
pub fn mc_pair_top2(
    post: &DirichletPosterior,
    i: usize,
    j: usize,
    n_draws: u64,
    seed: u64,
) -> OracleEstimate {
    mc_first_round(post, n_draws, seed).pair(i, j)
}

/// Fraction of draws in which `i` holds more than half the candidate total.
pub fn mc_majority(post: &DirichletPosterior, i: usize, n_draws: u64, seed: u64) -> OracleEstimate {
    let candidates = post.layout().candidate_indices();
    count_hits(post, n_draws, seed, |lg| {
        let top = candidates
            .iter()
            .map(|&k| lg[k])
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = candidates.iter().map(|&k| (lg[k] - top).exp()).sum();
        2.0 * (lg[i] - top).exp() > total
    })
}

/// Fraction of draws in which `i` outpolls `j`.
pub fn mc_beats(
    post: &DirichletPosterior,
    i: usize,
    j: usize,
    n_draws: u64,
    seed: u64,
) -> OracleEstimate {
    count_hits(post, n_draws, seed, |lg| lg[i] > lg[j])
}

/// One Dirichlet draw, obtained by normalizing the Gamma representation.
pub fn sample_dirichlet<R: Rng + ?Sized>(post: &DirichletPosterior, rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = post
        .alpha()
        .iter()
        .map(|&a| sample_unit_log_gamma(a, rng))
        .collect();
    let top = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut g {
        *v = (*v - top).exp();
    }
    let total: f64 = g.iter().sum();
    for v in &mut g {
        *v /= total;
    }
    g
}
