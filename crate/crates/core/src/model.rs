//! Dirichlet-multinomial model of a poll: category layouts, conjugate
//! updates and the scaled-prior chain across successive polls.

use std::collections::HashSet;
use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

use crate::numerics::GammaMarginal;

/// Reserved label of the blank-vote category.
pub const BLANK_LABEL: &str = "blank";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("layout mismatch: posterior has [{expected}], observation has [{found}]")]
    LayoutMismatch { expected: String, found: String },
    #[error("pollster mismatch: posterior built from {expected:?}, observation from {found:?}")]
    PollsterMismatch { expected: String, found: String },
    #[error("scale factor must lie in (0, 1], got {0}")]
    ScaleFactor(f64),
    #[error("invalid concentration parameter: {0}")]
    Alpha(String),
    #[error("invalid observation: {0}")]
    Observation(String),
}

/// Ordered categories of a contingency table, exactly one of which is the
/// blank vote.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CategoryLayout {
    labels: Vec<String>,
    blank_index: usize,
}

impl CategoryLayout {
    /// Builds a layout from labels; the category named [`BLANK_LABEL`] is the
    /// blank vote and every other label is a candidate.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(ModelError::Layout("empty category label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(ModelError::Layout(format!("duplicate label {label:?}")));
            }
        }
        let blanks: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| *l == BLANK_LABEL)
            .map(|(i, _)| i)
            .collect();
        let blank_index = match blanks.as_slice() {
            [i] => *i,
            [] => return Err(ModelError::Layout("missing blank category".into())),
            _ => unreachable!("labels are unique"),
        };
        if labels.len() < 3 {
            return Err(ModelError::Layout(format!(
                "need at least two candidates, got {}",
                labels.len() - 1
            )));
        }
        Ok(Self {
            labels,
            blank_index,
        })
    }

    /// Candidates `1..=n` followed by the blank category, the shape used for a
    /// first-round table.
    pub fn numbered(candidates: usize) -> Result<Self, ModelError> {
        Self::new(
            (1..=candidates)
                .map(|c| c.to_string())
                .chain(std::iter::once(BLANK_LABEL.to_string())),
        )
    }

    /// The three-category layout of a head-to-head scenario.
    pub fn runoff(first: &str, second: &str) -> Result<Self, ModelError> {
        Self::new([first, second, BLANK_LABEL])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn blank_index(&self) -> usize {
        self.blank_index
    }

    pub fn candidate_indices(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| i != self.blank_index)
            .collect()
    }

    pub fn candidate_count(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn is_candidate(&self, index: usize) -> bool {
        index < self.labels.len() && index != self.blank_index
    }
}

impl fmt::Display for CategoryLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.labels.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Round {
    First,
    Second,
}

impl Round {
    pub fn as_str(self) -> &'static str {
        match self {
            Round::First => "first",
            Round::Second => "second",
        }
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Round {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" | "1" => Ok(Round::First),
            "second" | "2" => Ok(Round::Second),
            other => Err(format!(
                "unknown round {other:?} (expected first or second)"
            )),
        }
    }
}

/// Identifies one published poll.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PollId {
    pub pollster: String,
    pub date: NaiveDate,
    pub round: Round,
    /// Candidate labels of a head-to-head scenario, in published order.
    pub scenario: Option<(String, String)>,
}

impl fmt::Display for PollId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.pollster, self.date, self.round)?;
        if let Some((a, b)) = &self.scenario {
            write!(f, "/{a}-{b}")?;
        }
        Ok(())
    }
}

/// Largest count total accepted for a poll of `sample_size` over `categories`
/// categories.
///
/// Counts are rounded per category from published percentages, which may
/// themselves sum to slightly over 100, so the total can overshoot the sample
/// size by the percentage tolerance plus half a count per category.
pub fn max_working_n(sample_size: u64, categories: usize) -> u64 {
    let slack = sample_size as f64 * 0.015 + categories as f64 / 2.0;
    sample_size + slack.floor() as u64
}

/// One poll's category counts with the undecided respondents already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct PollObservation {
    pub id: PollId,
    pub layout: CategoryLayout,
    pub counts: Vec<u64>,
    pub sample_size_reported: u64,
}

impl PollObservation {
    pub fn new(
        id: PollId,
        layout: CategoryLayout,
        counts: Vec<u64>,
        sample_size_reported: u64,
    ) -> Result<Self, ModelError> {
        if counts.len() != layout.len() {
            return Err(ModelError::Observation(format!(
                "{} counts for a {}-category layout",
                counts.len(),
                layout.len()
            )));
        }
        if sample_size_reported == 0 {
            return Err(ModelError::Observation(
                "sample size must be positive".into(),
            ));
        }
        let total: u64 = counts.iter().sum();
        let limit = max_working_n(sample_size_reported, counts.len());
        if total > limit {
            return Err(ModelError::Observation(format!(
                "counts sum to {total}, above the reported sample size {sample_size_reported} \
                 plus rounding slack (limit {limit})"
            )));
        }
        match (&id.round, &id.scenario) {
            (Round::First, Some(_)) => {
                return Err(ModelError::Observation(
                    "a first-round poll cannot carry a scenario".into(),
                ))
            }
            (Round::Second, None) => {
                return Err(ModelError::Observation(
                    "a second-round poll needs a scenario pair".into(),
                ))
            }
            (Round::Second, Some(_)) if layout.len() != 3 => {
                return Err(ModelError::Observation(
                    "a second-round poll has exactly two candidates and blank".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            id,
            layout,
            counts,
            sample_size_reported,
        })
    }

    /// Number of respondents kept by the model.
    pub fn working_n(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorKind {
    /// All concentration parameters equal to one.
    #[default]
    Uniform,
    /// All concentration parameters equal to one half.
    Jeffreys,
}

impl PriorKind {
    fn alpha(self) -> f64 {
        match self {
            PriorKind::Uniform => 1.0,
            PriorKind::Jeffreys => 0.5,
        }
    }
}

impl std::str::FromStr for PriorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(PriorKind::Uniform),
            "jeffreys" => Ok(PriorKind::Jeffreys),
            other => Err(format!(
                "unknown prior {other:?} (expected uniform or jeffreys)"
            )),
        }
    }
}

/// Default factor applied to a posterior before it serves as the next
/// poll's prior.
pub const DEFAULT_SCALE: f64 = 0.1;

/// A Dirichlet distribution over the categories of a layout, plus the polls
/// folded into it.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPosterior {
    layout: CategoryLayout,
    alpha: Vec<f64>,
    provenance: Vec<PollId>,
}

impl DirichletPosterior {
    pub fn new(
        layout: CategoryLayout,
        alpha: Vec<f64>,
        provenance: Vec<PollId>,
    ) -> Result<Self, ModelError> {
        if alpha.len() != layout.len() {
            return Err(ModelError::Alpha(format!(
                "{} parameters for a {}-category layout",
                alpha.len(),
                layout.len()
            )));
        }
        if let Some(bad) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(ModelError::Alpha(format!(
                "parameters must be finite and > 0, got {bad}"
            )));
        }
        Ok(Self {
            layout,
            alpha,
            provenance,
        })
    }

    pub fn noninformative(layout: CategoryLayout, kind: PriorKind) -> Self {
        let alpha = vec![kind.alpha(); layout.len()];
        Self {
            layout,
            alpha,
            provenance: Vec::new(),
        }
    }

    pub fn layout(&self) -> &CategoryLayout {
        &self.layout
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn provenance(&self) -> &[PollId] {
        &self.provenance
    }

    /// The pollster every folded poll came from, if any poll was folded in.
    pub fn pollster(&self) -> Option<&str> {
        self.provenance.first().map(|id| id.pollster.as_str())
    }

    pub fn concentration(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Conjugate update: adds the observed counts to the parameters.
    pub fn update(&self, obs: &PollObservation) -> Result<Self, ModelError> {
        if obs.layout != self.layout {
            return Err(ModelError::LayoutMismatch {
                expected: self.layout.to_string(),
                found: obs.layout.to_string(),
            });
        }
        if let Some(pollster) = self.pollster() {
            if pollster != obs.id.pollster {
                return Err(ModelError::PollsterMismatch {
                    expected: pollster.to_string(),
                    found: obs.id.pollster.clone(),
                });
            }
        }
        let alpha = self
            .alpha
            .iter()
            .zip(&obs.counts)
            .map(|(a, &c)| a + c as f64)
            .collect();
        let mut provenance = self.provenance.clone();
        provenance.push(obs.id.clone());
        Ok(Self {
            layout: self.layout.clone(),
            alpha,
            provenance,
        })
    }

    /// Multiplies every parameter by `w`, keeping the mean and shrinking the
    /// total concentration by the same factor.
    pub fn scale_forward(&self, w: f64) -> Result<Self, ModelError> {
        if !(w > 0.0 && w <= 1.0) {
            return Err(ModelError::ScaleFactor(w));
        }
        let alpha: Vec<f64> = self.alpha.iter().map(|a| a * w).collect();
        if alpha.iter().any(|a| *a <= 0.0) {
            return Err(ModelError::Alpha(format!(
                "scaling by {w} underflows a parameter"
            )));
        }
        Ok(Self {
            layout: self.layout.clone(),
            alpha,
            provenance: self.provenance.clone(),
        })
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let total = self.concentration();
        self.alpha.iter().map(|a| a / total).collect()
    }

    /// Independent Gamma(alpha_i, rate) variables whose normalized vector is
    /// distributed as this Dirichlet.
    pub fn gamma_representation(&self, rate: f64) -> Result<Vec<GammaMarginal>, ModelError> {
        self.alpha
            .iter()
            .map(|&a| GammaMarginal::new(a, rate).map_err(|e| ModelError::Alpha(e.to_string())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(day: u32) -> PollId {
        PollId {
            pollster: "Acme".into(),
            date: NaiveDate::from_ymd_opt(2018, 9, day).unwrap(),
            round: Round::First,
            scenario: None,
        }
    }

    fn obs(layout: &CategoryLayout, counts: Vec<u64>, day: u32) -> PollObservation {
        let n = counts.iter().sum::<u64>().max(1);
        PollObservation::new(id(day), layout.clone(), counts, n).unwrap()
    }

    #[test]
    fn layout_validation() {
        let l = CategoryLayout::numbered(13).unwrap();
        assert_eq!(l.len(), 14);
        assert_eq!(l.blank_index(), 13);
        assert_eq!(l.candidate_indices(), (0..13).collect::<Vec<_>>());
        assert!(CategoryLayout::new(["a", "b"]).is_err());
        assert!(CategoryLayout::new(["a", "blank"]).is_err());
        assert!(CategoryLayout::new(["a", "a", "blank"]).is_err());
        assert!(CategoryLayout::new(["a", "b", "blank", "c"]).is_ok());
    }

    #[test]
    fn noninformative_priors() {
        let l14 = CategoryLayout::numbered(13).unwrap();
        let p = DirichletPosterior::noninformative(l14, PriorKind::Uniform);
        assert!(p.alpha().iter().all(|&a| a == 1.0));
        assert!(p
            .posterior_mean()
            .iter()
            .all(|&m| (m - 1.0 / 14.0).abs() < 1e-15));

        let l3 = CategoryLayout::runoff("5", "9").unwrap();
        let j = DirichletPosterior::noninformative(l3, PriorKind::Jeffreys);
        assert_eq!(j.alpha(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn update_adds_counts() {
        let l = CategoryLayout::runoff("a", "b").unwrap();
        let p = DirichletPosterior::noninformative(l.clone(), PriorKind::Uniform);
        let post = p.update(&obs(&l, vec![4, 3, 2], 1)).unwrap();
        assert_eq!(post.alpha(), &[5.0, 4.0, 3.0]);
        assert_eq!(post.provenance().len(), 1);
        assert_eq!(post.pollster(), Some("Acme"));

        let l14 = CategoryLayout::numbered(13).unwrap();
        let p14 = DirichletPosterior::noninformative(l14.clone(), PriorKind::Uniform);
        let same = p14.update(&obs(&l14, vec![0; 14], 1)).unwrap();
        assert_eq!(same.alpha(), p14.alpha());

        let l2 = CategoryLayout::new(["x", "y", "blank"]).unwrap();
        let half = DirichletPosterior::new(l2.clone(), vec![0.5, 0.5, 0.5], vec![]).unwrap();
        let r = half.update(&obs(&l2, vec![100, 50, 0], 1)).unwrap();
        assert_eq!(r.alpha(), &[100.5, 50.5, 0.5]);
    }

    #[test]
    fn update_rejects_mismatches() {
        let l = CategoryLayout::runoff("a", "b").unwrap();
        let other = CategoryLayout::runoff("a", "c").unwrap();
        let p = DirichletPosterior::noninformative(l.clone(), PriorKind::Uniform);
        assert!(matches!(
            p.update(&obs(&other, vec![1, 1, 1], 1)),
            Err(ModelError::LayoutMismatch { .. })
        ));
        let p = p.update(&obs(&l, vec![1, 1, 1], 1)).unwrap();
        let mut foreign = obs(&l, vec![1, 1, 1], 2);
        foreign.id.pollster = "Other".into();
        assert!(matches!(
            p.update(&foreign),
            Err(ModelError::PollsterMismatch { .. })
        ));
    }

    #[test]
    fn scale_forward_examples() {
        let l = CategoryLayout::runoff("a", "b").unwrap();
        let p = DirichletPosterior::new(l.clone(), vec![10.0, 30.0, 60.0], vec![]).unwrap();
        let s = p.scale_forward(0.1).unwrap();
        for (got, want) in s.alpha().iter().zip([1.0, 3.0, 6.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(p.scale_forward(1.0).unwrap(), p);

        let q = DirichletPosterior::new(l, vec![2000.0, 1000.0, 0.0001], vec![]).unwrap();
        let s = q.scale_forward(0.05).unwrap();
        assert!((s.alpha()[0] - 100.0).abs() < 1e-12 && (s.alpha()[1] - 50.0).abs() < 1e-12);
        let (m0, m1) = (q.posterior_mean(), s.posterior_mean());
        for (a, b) in m0.iter().zip(&m1) {
            assert!((a - b).abs() < 1e-15);
        }

        for bad in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                p.scale_forward(bad),
                Err(ModelError::ScaleFactor(_))
            ));
        }
    }

    #[test]
    fn posterior_mean_examples() {
        let l4 = CategoryLayout::new(["a", "b", "c", "blank"]).unwrap();
        let p = DirichletPosterior::new(l4, vec![1.0; 4], vec![]).unwrap();
        assert_eq!(p.posterior_mean(), vec![0.25; 4]);
        let l3 = CategoryLayout::runoff("a", "b").unwrap();
        let p = DirichletPosterior::new(l3, vec![5.0, 4.0, 3.0], vec![]).unwrap();
        let m = p.posterior_mean();
        assert!((m[0] - 5.0 / 12.0).abs() < 1e-15);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_representation_shares_rate() {
        let l = CategoryLayout::runoff("a", "b").unwrap();
        let p = DirichletPosterior::new(l, vec![2.0, 3.0, 1.0], vec![]).unwrap();
        let g = p.gamma_representation(7.0).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!((g[0].shape(), g[0].rate()), (2.0, 7.0));
        assert_eq!((g[1].shape(), g[1].rate()), (3.0, 7.0));
        assert!(p.gamma_representation(0.0).is_err());
    }

    #[test]
    fn observation_invariants() {
        let l = CategoryLayout::runoff("a", "b").unwrap();
        assert!(PollObservation::new(id(1), l.clone(), vec![1, 2], 10).is_err());
        assert!(PollObservation::new(id(1), l.clone(), vec![5, 5, 5], 10).is_err());
        assert!(PollObservation::new(id(1), l.clone(), vec![4, 4, 3], 10).is_ok());
        let mut second = id(1);
        second.round = Round::Second;
        assert!(PollObservation::new(second.clone(), l.clone(), vec![1, 1, 1], 10).is_err());
        second.scenario = Some(("a".into(), "b".into()));
        assert!(PollObservation::new(second, l, vec![1, 1, 1], 10).is_ok());
    }

    #[test]
    fn zero_count_categories_are_kept() {
        let l = CategoryLayout::numbered(3).unwrap();
        let p = DirichletPosterior::noninformative(l.clone(), PriorKind::Uniform)
            .update(&obs(&l, vec![10, 0, 5, 0], 1))
            .unwrap();
        assert_eq!(p.alpha(), &[11.0, 1.0, 6.0, 1.0]);
    }
}
