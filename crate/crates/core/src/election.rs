//! Probability that each candidate is elected in a two-round contest.
//!
//! A candidate wins either outright in the first round or, when nobody does,
//! by reaching the runoff and beating the opponent there:
//!
//! ```text
//! P(i elected) = P(i majority)
//!              + P(no majority) · Σ_{j≠i} P({i,j} top two) · P(i beats j in the runoff)
//! ```
//!
//! The product treats "no first-round winner" and "{i, j} reach the runoff"
//! as independent, which they are not under the posterior. The formula is
//! kept as is; see `p_elected`.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

use crate::model::{CategoryLayout, DirichletPosterior};
use crate::numerics::QuadratureSpec;
use crate::rank_prob::{prob_beats, prob_majority, prob_pair_top2, RankError};

/// Slack allowed on `Σ P(majority) <= 1` before it counts as a violation.
pub const MAJORITY_SUM_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElectionError {
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("majority probabilities sum to {0}, above one")]
    MajoritySum(f64),
    #[error("pollster mismatch: first round from {first:?}, scenario {pair} from {scenario:?}")]
    PollsterMismatch {
        first: String,
        scenario: String,
        pair: String,
    },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

/// What to use for a runoff pair that was never polled head to head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fallback {
    /// Treat the runoff as a coin flip.
    #[default]
    Half,
    /// Drop the pair's contribution.
    Skip,
}

impl Fallback {
    pub fn as_str(self) -> &'static str {
        match self {
            Fallback::Half => "half",
            Fallback::Skip => "skip",
        }
    }

    /// Runoff win probability assigned to either candidate of an unpolled pair.
    pub fn value(self) -> f64 {
        match self {
            Fallback::Half => 0.5,
            Fallback::Skip => 0.0,
        }
    }
}

impl std::str::FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half" => Ok(Fallback::Half),
            "skip" => Ok(Fallback::Skip),
            other => Err(format!(
                "unknown fallback {other:?} (expected half or skip)"
            )),
        }
    }
}

/// Unordered pair of first-round layout positions, stored low first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidatePair(usize, usize);

impl CandidatePair {
    /// `None` when `i == j`.
    pub fn new(i: usize, j: usize) -> Option<Self> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => Some(Self(i, j)),
            std::cmp::Ordering::Greater => Some(Self(j, i)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> usize {
        self.0
    }

    pub fn hi(&self) -> usize {
        self.1
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 == i || self.1 == i
    }

    pub fn other(&self, i: usize) -> usize {
        if self.0 == i {
            self.1
        } else {
            self.0
        }
    }

    /// `"lo/hi"` using the layout's labels.
    pub fn label(&self, layout: &CategoryLayout) -> String {
        format!("{}/{}", layout.label(self.0), layout.label(self.1))
    }
}

impl fmt::Display for CandidatePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}}}", self.0, self.1)
    }
}

/// Second-round posteriors keyed by the first-round pair they describe.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioTable {
    entries: BTreeMap<CandidatePair, DirichletPosterior>,
}

impl ScenarioTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Files a head-to-head posterior under the first-round pair named by its
    /// two candidate labels, replacing any earlier entry.
    pub fn insert(
        &mut self,
        first_round: &CategoryLayout,
        post: DirichletPosterior,
    ) -> Result<CandidatePair, ElectionError> {
        let layout = post.layout();
        if layout.len() != 3 {
            return Err(ElectionError::Scenario(format!(
                "a runoff posterior has two candidates and blank, got [{layout}]"
            )));
        }
        let positions: Vec<usize> = layout
            .candidate_indices()
            .into_iter()
            .map(|k| {
                let label = layout.label(k);
                first_round
                    .index_of(label)
                    .filter(|&i| first_round.is_candidate(i))
                    .ok_or_else(|| {
                        ElectionError::Scenario(format!(
                            "runoff candidate {label:?} is not a first-round candidate"
                        ))
                    })
            })
            .collect::<Result<_, _>>()?;
        let pair =
            CandidatePair::new(positions[0], positions[1]).expect("layout labels are distinct");
        self.entries.insert(pair, post);
        Ok(pair)
    }

    pub fn get(&self, pair: CandidatePair) -> Option<&DirichletPosterior> {
        self.entries.get(&pair)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CandidatePair, &DirichletPosterior)> {
        self.entries.iter()
    }

    fn check_pollster(&self, post1: &DirichletPosterior) -> Result<(), ElectionError> {
        let Some(first) = post1.pollster() else {
            return Ok(());
        };
        for (pair, post) in &self.entries {
            if let Some(scenario) = post.pollster() {
                if scenario != first {
                    return Err(ElectionError::PollsterMismatch {
                        first: first.to_string(),
                        scenario: scenario.to_string(),
                        pair: pair.label(post1.layout()),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A kernel result; `failure` is set when quadrature missed its tolerance and
/// `value` is the best estimate available.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub failure: Option<String>,
}

impl KernelValue {
    fn capture(result: Result<f64, RankError>) -> Result<Self, ElectionError> {
        match result {
            Ok(value) => Ok(Self {
                value,
                failure: None,
            }),
            Err(e) => match e.best_estimate() {
                Some(value) => Ok(Self {
                    value,
                    failure: Some(e.to_string()),
                }),
                None => Err(e.into()),
            },
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Where the runoff probability for a pair came from.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadToHead {
    /// `P(lo beats hi)` from a polled scenario.
    Scenario(KernelValue),
    Fallback(Fallback),
}

impl HeadToHead {
    /// Probability that `winner` (a member of `pair`) takes the runoff.
    fn win_probability(&self, pair: CandidatePair, winner: usize) -> f64 {
        match self {
            HeadToHead::Scenario(v) if winner == pair.lo() => v.value,
            HeadToHead::Scenario(v) => 1.0 - v.value,
            HeadToHead::Fallback(f) => f.value(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEntry {
    pub pair: CandidatePair,
    pub p_top2: KernelValue,
    pub head_to_head: HeadToHead,
}

/// Everything reported for one poll date.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectionReport {
    pub pollster: Option<String>,
    pub date: Option<NaiveDate>,
    pub layout: CategoryLayout,
    /// First-round layout positions of the candidates, in layout order.
    pub candidates: Vec<usize>,
    /// Aligned with `candidates`.
    pub p_majority: Vec<KernelValue>,
    pub p_no_first_round_winner: f64,
    pub p_top2: Vec<PairEntry>,
    /// Aligned with `candidates`.
    pub p_elected: Vec<f64>,
    /// Pairs without a polled scenario and the fallback used for them.
    pub missing_scenarios: Vec<(CandidatePair, Fallback)>,
}

impl ElectionReport {
    pub fn top2(&self, i: usize, j: usize) -> Option<f64> {
        let pair = CandidatePair::new(i, j)?;
        self.p_top2
            .iter()
            .find(|e| e.pair == pair)
            .map(|e| e.p_top2.value)
    }

    pub fn elected(&self, i: usize) -> Option<f64> {
        let pos = self.candidates.iter().position(|&c| c == i)?;
        Some(self.p_elected[pos])
    }

    pub fn majority(&self, i: usize) -> Option<f64> {
        let pos = self.candidates.iter().position(|&c| c == i)?;
        Some(self.p_majority[pos].value)
    }

    /// Descriptions of every kernel that missed its tolerance.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (c, v) in self.candidates.iter().zip(&self.p_majority) {
            if let Some(f) = &v.failure {
                out.push(format!("majority {}: {f}", self.layout.label(*c)));
            }
        }
        for e in &self.p_top2 {
            if let Some(f) = &e.p_top2.failure {
                out.push(format!("top2 {}: {f}", e.pair.label(&self.layout)));
            }
            if let HeadToHead::Scenario(v) = &e.head_to_head {
                if let Some(f) = &v.failure {
                    out.push(format!("runoff {}: {f}", e.pair.label(&self.layout)));
                }
            }
        }
        out
    }
}

fn no_winner_from(majorities: impl IntoIterator<Item = f64>) -> Result<f64, ElectionError> {
    let total: f64 = majorities.into_iter().sum();
    if total > 1.0 + MAJORITY_SUM_SLACK {
        return Err(ElectionError::MajoritySum(total));
    }
    Ok((1.0 - total).clamp(0.0, 1.0))
}

/// `1 - Σ_i P(i has a first-round majority)`.
pub fn p_no_first_round_winner(
    post: &DirichletPosterior,
    spec: &QuadratureSpec,
) -> Result<f64, ElectionError> {
    let majorities = post
        .layout()
        .candidate_indices()
        .into_iter()
        .map(|i| prob_majority(post, i, spec))
        .collect::<Result<Vec<_>, _>>()?;
    no_winner_from(majorities)
}

fn head_to_head(
    scenarios: &ScenarioTable,
    pair: CandidatePair,
    first_round: &CategoryLayout,
    spec: &QuadratureSpec,
    fallback: Fallback,
) -> Result<HeadToHead, ElectionError> {
    let Some(post2) = scenarios.get(pair) else {
        return Ok(HeadToHead::Fallback(fallback));
    };
    let layout2 = post2.layout();
    let lo = layout2
        .index_of(first_round.label(pair.lo()))
        .expect("scenario table checked the labels");
    let hi = layout2
        .index_of(first_round.label(pair.hi()))
        .expect("scenario table checked the labels");
    Ok(HeadToHead::Scenario(KernelValue::capture(prob_beats(
        post2, lo, hi, spec,
    ))?))
}

fn compose(i: usize, majority_i: f64, no_winner: f64, entries: &[PairEntry]) -> f64 {
    let runoff: f64 = entries
        .iter()
        .filter(|e| e.pair.contains(i))
        .map(|e| e.p_top2.value * e.head_to_head.win_probability(e.pair, i))
        .sum();
    majority_i + no_winner * runoff
}

/// Probability that candidate `i` is elected.
///
/// `P(no majority)` multiplies `P({i, j} top two)` as if the two events were
/// independent. This is a deliberate approximation; the exact joint
/// probability is not computed.
pub fn p_elected(
    post1: &DirichletPosterior,
    scenarios: &ScenarioTable,
    i: usize,
    spec: &QuadratureSpec,
    fallback: Fallback,
) -> Result<f64, ElectionError> {
    scenarios.check_pollster(post1)?;
    let layout = post1.layout();
    if !layout.is_candidate(i) {
        return Err(RankError::NotACandidate(i).into());
    }
    let mut majority_i = 0.0;
    let mut majorities = Vec::new();
    for k in layout.candidate_indices() {
        let v = KernelValue::capture(prob_majority(post1, k, spec))?.value;
        if k == i {
            majority_i = v;
        }
        majorities.push(v);
    }
    let no_winner = no_winner_from(majorities)?;
    let entries = layout
        .candidate_indices()
        .into_iter()
        .filter_map(|j| CandidatePair::new(i, j))
        .map(|pair| pair_entry(post1, scenarios, pair, spec, fallback))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compose(i, majority_i, no_winner, &entries))
}

fn pair_entry(
    post1: &DirichletPosterior,
    scenarios: &ScenarioTable,
    pair: CandidatePair,
    spec: &QuadratureSpec,
    fallback: Fallback,
) -> Result<PairEntry, ElectionError> {
    Ok(PairEntry {
        pair,
        p_top2: KernelValue::capture(prob_pair_top2(post1, pair.lo(), pair.hi(), spec))?,
        head_to_head: head_to_head(scenarios, pair, post1.layout(), spec, fallback)?,
    })
}

/// Evaluates every kernel once and assembles the full report.
///
/// A kernel that misses its tolerance does not abort the report: its best
/// estimate is used and the failure is recorded on the entry.
pub fn full_report(
    post1: &DirichletPosterior,
    scenarios: &ScenarioTable,
    spec: &QuadratureSpec,
    fallback: Fallback,
) -> Result<ElectionReport, ElectionError> {
    scenarios.check_pollster(post1)?;
    let layout = post1.layout();
    let candidates = layout.candidate_indices();

    let p_majority = candidates
        .iter()
        .map(|&i| KernelValue::capture(prob_majority(post1, i, spec)))
        .collect::<Result<Vec<_>, _>>()?;
    let no_winner = no_winner_from(p_majority.iter().map(|v| v.value))?;

    let mut p_top2 = Vec::with_capacity(candidates.len() * (candidates.len() - 1) / 2);
    for (a, &i) in candidates.iter().enumerate() {
        for &j in &candidates[a + 1..] {
            let pair = CandidatePair::new(i, j).expect("distinct candidates");
            p_top2.push(pair_entry(post1, scenarios, pair, spec, fallback)?);
        }
    }

    let p_elected = candidates
        .iter()
        .zip(&p_majority)
        .map(|(&i, m)| compose(i, m.value, no_winner, &p_top2))
        .collect();
    let missing_scenarios = p_top2
        .iter()
        .filter_map(|e| match e.head_to_head {
            HeadToHead::Fallback(f) => Some((e.pair, f)),
            HeadToHead::Scenario(_) => None,
        })
        .collect();
    let last = post1.provenance().last();

    Ok(ElectionReport {
        pollster: last.map(|id| id.pollster.clone()),
        date: last.map(|id| id.date),
        layout: layout.clone(),
        candidates,
        p_majority,
        p_no_first_round_winner: no_winner,
        p_top2,
        p_elected,
        missing_scenarios,
    })
}
