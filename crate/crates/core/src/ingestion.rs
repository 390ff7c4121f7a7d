//! Poll files and posterior stores.
//!
//! Both share one line-oriented UTF-8 grammar. Blank lines and lines starting
//! with `#` are ignored; every other line is one record of comma-separated
//! fields:
//!
//! ```text
//! pollster, YYYY-MM-DD, first|second, A/B or -, <fifth>, label=value, ...
//! ```
//!
//! In a poll file the fifth field is the reported sample size and the values
//! are percentages (0-100); the label `undecided` is accepted and dropped.
//! In a posterior store the fifth field is `w=<scale>` followed by the dates
//! of the polls folded into the posterior, all separated by `;`, and the
//! values are Dirichlet parameters. The blank vote is always labelled
//! `blank`. Second-round records name their head-to-head pair in the fourth
//! field; first-round records use `-`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::model::{
    CategoryLayout, DirichletPosterior, ModelError, PollId, PollObservation, Round, BLANK_LABEL,
};

/// Label of the respondents without a preference.
pub const UNDECIDED_LABEL: &str = "undecided";

/// How far published percentages may sum from 100.
pub const PERCENT_SUM_TOLERANCE: f64 = 1.5;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}, field {field}: {message}")]
    Parse {
        line: usize,
        field: usize,
        message: String,
    },
    #[error("line {line}: duplicate record {key}")]
    Duplicate { line: usize, key: String },
    #[error("unknown category {label:?} for layout [{layout}]")]
    UnknownCategory { label: String, layout: String },
    #[error("percentages sum to {sum}, more than {tolerance} points from 100")]
    PercentSum { sum: f64, tolerance: f64 },
    #[error("record has no blank category")]
    MissingBlank,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One poll as published: percentages of the full sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPollRecord {
    pub pollster: String,
    pub date: NaiveDate,
    pub round: Round,
    pub scenario: Option<(String, String)>,
    pub sample_size: u64,
    /// In file order, including `undecided` when present.
    pub percentages: Vec<(String, f64)>,
}

impl RawPollRecord {
    pub fn id(&self) -> PollId {
        PollId {
            pollster: self.pollster.clone(),
            date: self.date,
            round: self.round,
            scenario: self.scenario.clone(),
        }
    }

    pub fn percent_sum(&self) -> f64 {
        self.percentages.iter().map(|(_, p)| p).sum()
    }

    pub fn check_percent_sum(&self) -> Result<(), IngestError> {
        let sum = self.percent_sum();
        if (sum - 100.0).abs() > PERCENT_SUM_TOLERANCE {
            return Err(IngestError::PercentSum {
                sum,
                tolerance: PERCENT_SUM_TOLERANCE,
            });
        }
        Ok(())
    }

    /// Labels other than `undecided`, in file order.
    pub fn category_labels(&self) -> impl Iterator<Item = &str> {
        self.percentages
            .iter()
            .map(|(l, _)| l.as_str())
            .filter(|l| *l != UNDECIDED_LABEL)
    }

    /// The layout this record describes on its own: its categories in file
    /// order for a first-round poll, `[A, B, blank]` for a scenario `A/B`.
    pub fn natural_layout(&self) -> Result<CategoryLayout, IngestError> {
        match &self.scenario {
            Some((a, b)) => Ok(CategoryLayout::runoff(a, b)?),
            None => Ok(CategoryLayout::new(self.category_labels())?),
        }
    }
}

/// Converts published percentages into category counts on `layout`.
///
/// Each count is `round(percent / 100 · sample_size)`, rounded half away
/// from zero and independently per category. Layout categories the record
/// does not mention get zero.
pub fn to_observation(
    raw: &RawPollRecord,
    layout: &CategoryLayout,
) -> Result<PollObservation, IngestError> {
    raw.check_percent_sum()?;
    let mut counts = vec![0u64; layout.len()];
    let mut saw_blank = false;
    for (label, pct) in &raw.percentages {
        if label == UNDECIDED_LABEL {
            continue;
        }
        let index = layout
            .index_of(label)
            .ok_or_else(|| IngestError::UnknownCategory {
                label: label.clone(),
                layout: layout.to_string(),
            })?;
        saw_blank |= index == layout.blank_index();
        counts[index] = (pct * raw.sample_size as f64 / 100.0).round() as u64;
    }
    if !saw_blank {
        return Err(IngestError::MissingBlank);
    }
    Ok(PollObservation::new(
        raw.id(),
        layout.clone(),
        counts,
        raw.sample_size,
    )?)
}

/// Pollster, date, round and (for runoff records) the scenario pair.
type Header = (String, NaiveDate, Round, Option<(String, String)>);

struct Fields<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn err(&self, field: usize, message: impl Into<String>) -> IngestError {
        IngestError::Parse {
            line: self.line,
            field,
            message: message.into(),
        }
    }

    fn get(&self, field: usize, name: &str) -> Result<&'a str, IngestError> {
        match self.fields.get(field - 1) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.err(field, format!("missing {name}"))),
        }
    }

    fn header(&self) -> Result<Header, IngestError> {
        let pollster = self.get(1, "pollster")?.to_string();
        let date = NaiveDate::parse_from_str(self.get(2, "date")?, "%Y-%m-%d")
            .map_err(|e| self.err(2, format!("bad date: {e}")))?;
        let round: Round = self
            .get(3, "round")?
            .parse()
            .map_err(|e: String| self.err(3, e))?;
        let scenario = match self.get(4, "scenario")? {
            "-" => None,
            s => {
                let (a, b) = s
                    .split_once('/')
                    .filter(|(a, b)| !a.is_empty() && !b.is_empty() && a != b)
                    .ok_or_else(|| self.err(4, format!("scenario {s:?} is not of the form A/B")))?;
                Some((a.trim().to_string(), b.trim().to_string()))
            }
        };
        match (round, &scenario) {
            (Round::Second, None) => {
                return Err(self.err(4, "second-round record needs a scenario pair A/B"))
            }
            (Round::First, Some(_)) => {
                return Err(self.err(4, "first-round record must use '-' for the scenario"))
            }
            _ => {}
        }
        Ok((pollster, date, round, scenario))
    }

    fn pairs(&self) -> Result<Vec<(String, f64)>, IngestError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (k, raw) in self.fields.iter().enumerate().skip(5) {
            let field = k + 1;
            let (label, value) = raw
                .split_once('=')
                .ok_or_else(|| self.err(field, format!("expected label=value, got {raw:?}")))?;
            let label = label.trim();
            if label.is_empty() {
                return Err(self.err(field, "empty label"));
            }
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| self.err(field, format!("bad number {value:?}")))?;
            if !value.is_finite() || value < 0.0 {
                return Err(self.err(field, format!("value must be finite and >= 0, got {value}")));
            }
            if !seen.insert(label.to_string()) {
                return Err(self.err(field, format!("label {label:?} repeated")));
            }
            out.push((label.to_string(), value));
        }
        if out.is_empty() {
            return Err(self.err(6, "no label=value pairs"));
        }
        Ok(out)
    }
}

fn records(text: &str) -> impl Iterator<Item = Fields<'_>> {
    text.lines().enumerate().filter_map(|(n, line)| {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return None;
        }
        Some(Fields {
            line: n + 1,
            fields: trimmed.split(',').map(str::trim).collect(),
        })
    })
}

fn key_of(
    pollster: &str,
    date: NaiveDate,
    round: Round,
    scenario: &Option<(String, String)>,
) -> String {
    let scenario = match scenario {
        Some((a, b)) => format!("{a}/{b}"),
        None => "-".to_string(),
    };
    format!("{pollster}, {date}, {round}, {scenario}")
}

/// Parses poll records from text, keeping file order.
pub fn parse_polls(text: &str) -> Result<Vec<RawPollRecord>, IngestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(text) {
        let (pollster, date, round, scenario) = rec.header()?;
        let sample_size: u64 = rec
            .get(5, "sample size")?
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| rec.err(5, "sample size must be a positive integer"))?;
        let percentages = rec.pairs()?;
        for (k, (_, pct)) in percentages.iter().enumerate() {
            if *pct > 100.0 {
                return Err(rec.err(k + 6, format!("percentage {pct} above 100")));
            }
        }
        // Unordered: "A/B" and "B/A" are the same scenario.
        let norm_scenario = scenario
            .clone()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) });
        let key = key_of(&pollster, date, round, &norm_scenario);
        if !seen.insert(key.clone()) {
            return Err(IngestError::Duplicate {
                line: rec.line,
                key,
            });
        }
        let raw = RawPollRecord {
            pollster,
            date,
            round,
            scenario,
            sample_size,
            percentages,
        };
        raw.check_percent_sum()
            .map_err(|e| rec.err(6, e.to_string()))?;
        out.push(raw);
    }
    Ok(out)
}

pub fn load_poll_file(path: impl AsRef<Path>) -> Result<Vec<RawPollRecord>, IngestError> {
    parse_polls(&read(path.as_ref())?)
}

fn read(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn format_header(out: &mut String, id: &PollId) {
    let scenario = match &id.scenario {
        Some((a, b)) => format!("{a}/{b}"),
        None => "-".to_string(),
    };
    let _ = write!(
        out,
        "{}, {}, {}, {}",
        id.pollster, id.date, id.round, scenario
    );
}

/// A poll-file line that reloads to the same counts.
pub fn format_observation(obs: &PollObservation) -> String {
    let mut out = String::new();
    format_header(&mut out, &obs.id);
    let _ = write!(out, ", {}", obs.sample_size_reported);
    for (label, count) in obs.layout.labels().iter().zip(&obs.counts) {
        let pct = *count as f64 * 100.0 / obs.sample_size_reported as f64;
        let _ = write!(out, ", {label}={pct}");
    }
    let undecided = obs.sample_size_reported.saturating_sub(obs.working_n());
    let pct = undecided as f64 * 100.0 / obs.sample_size_reported as f64;
    let _ = write!(out, ", {UNDECIDED_LABEL}={pct}");
    out
}

/// A posterior as it sits in the store, tagged with the poll that produced
/// it.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPosterior {
    pub id: PollId,
    /// Scale factor the chain carried between polls.
    pub scale: f64,
    pub posterior: DirichletPosterior,
}

/// One store line. Parameters are written in shortest round-trip form, so
/// reloading is exact and rewriting is byte-identical.
pub fn format_posterior(entry: &StoredPosterior) -> String {
    let mut out = String::new();
    format_header(&mut out, &entry.id);
    let dates: Vec<String> = entry
        .posterior
        .provenance()
        .iter()
        .map(|p| p.date.to_string())
        .collect();
    let _ = write!(out, ", w={}", entry.scale);
    for d in &dates {
        let _ = write!(out, ";{d}");
    }
    let post = &entry.posterior;
    for (label, alpha) in post.layout().labels().iter().zip(post.alpha()) {
        let _ = write!(out, ", {label}={alpha}");
    }
    out
}

pub fn format_store(entries: &[StoredPosterior]) -> String {
    let mut out = String::from("# runoff posterior store: pollster, date, round, scenario, w=scale;folded poll dates, label=alpha...\n");
    for e in entries {
        out.push_str(&format_posterior(e));
        out.push('\n');
    }
    out
}

pub fn parse_store(text: &str) -> Result<Vec<StoredPosterior>, IngestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(text) {
        let (pollster, date, round, scenario) = rec.header()?;
        let id = PollId {
            pollster,
            date,
            round,
            scenario,
        };
        let mut folded = rec.get(5, "scale and folded poll dates")?.split(';');
        let scale = folded
            .next()
            .and_then(|w| w.trim().strip_prefix("w="))
            .and_then(|w| w.parse::<f64>().ok())
            .filter(|w| *w > 0.0 && *w <= 1.0)
            .ok_or_else(|| rec.err(5, "expected w=<scale in (0,1]> before the folded dates"))?;
        let provenance = folded
            .map(|d| {
                NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                    .map(|date| PollId { date, ..id.clone() })
                    .map_err(|e| rec.err(5, format!("bad date {d:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pairs = rec.pairs()?;
        let layout = CategoryLayout::new(pairs.iter().map(|(l, _)| l.as_str()))
            .map_err(|e| rec.err(6, e.to_string()))?;
        if let Some((a, b)) = &id.scenario {
            if layout.labels() != [a.as_str(), b.as_str(), BLANK_LABEL] {
                return Err(rec.err(
                    6,
                    format!("scenario {a}/{b} needs categories {a}, {b}, blank"),
                ));
            }
        }
        let alpha = pairs.iter().map(|(_, a)| *a).collect();
        let posterior = DirichletPosterior::new(layout, alpha, provenance)
            .map_err(|e| rec.err(6, e.to_string()))?;
        let key = key_of(&id.pollster, id.date, id.round, &id.scenario);
        if !seen.insert(key.clone()) {
            return Err(IngestError::Duplicate {
                line: rec.line,
                key,
            });
        }
        out.push(StoredPosterior {
            id,
            scale,
            posterior,
        });
    }
    Ok(out)
}

pub fn load_store(path: impl AsRef<Path>) -> Result<Vec<StoredPosterior>, IngestError> {
    parse_store(&read(path.as_ref())?)
}
