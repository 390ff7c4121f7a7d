//! The subcommands. Each takes a resolved [`RunConfig`], does its work and
//! returns what it wrote; failures that still produce output (unconverged
//! kernels, oracle disagreements) are reported as errors after the files are
//! in place.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use runoff::election::{full_report, CandidatePair, ElectionReport, HeadToHead, ScenarioTable};
use runoff::ingestion::{
    format_store, load_poll_file, load_store, to_observation, RawPollRecord, StoredPosterior,
};
use runoff::model::{DirichletPosterior, Round};
use runoff::numerics::QuadratureSpec;
use runoff::oracle::{mc_beats, mc_first_round, OracleEstimate};
use runoff::rank_prob::{prob_beats, prob_majority, prob_pair_top2, RankError};

use crate::chart::{line_chart, Series};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::store::{write_all, write_atomic};

/// |z| above which an oracle comparison counts as a disagreement.
pub const Z_THRESHOLD: f64 = 4.0;

pub const TOP2_TABLE: &str = "top2.csv";
pub const ELECTED_TABLE: &str = "elected.csv";
pub const SCENARIO_TABLE: &str = "scenarios.csv";
pub const ORACLE_TABLE: &str = "oracle.csv";

/// Series whose peak stays below this are left off the charts.
const CHART_FLOOR: f64 = 0.01;

fn prob(x: f64) -> String {
    format!("{x:.9e}")
}

// ---------------------------------------------------------------- update

/// A chain is one pollster's first-round series or one of its head-to-head
/// scenarios; the scenario pair is unordered.
type ChainKey = (String, Round, Option<(String, String)>);

fn chain_key(raw: &RawPollRecord) -> ChainKey {
    let scenario = raw.scenario.as_ref().map(|(a, b)| {
        if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    });
    (raw.pollster.clone(), raw.round, scenario)
}

/// Runs every chain over `records` in date order and returns one stored
/// posterior per record.
///
/// The first record of a chain updates the non-informative prior; each later
/// one updates the previous posterior scaled by `config.scale`. A scenario
/// keeps the candidate order of its first record.
pub fn build_store(
    records: &[RawPollRecord],
    config: &RunConfig,
    source: &Path,
) -> Result<Vec<StoredPosterior>, CliError> {
    let mut selected: Vec<&RawPollRecord> = records
        .iter()
        .filter(|r| config.pollster.as_deref().is_none_or(|p| p == r.pollster))
        .collect();
    if selected.is_empty() {
        return Err(CliError::Input(match &config.pollster {
            Some(p) => format!("{}: no polls by {p:?}", source.display()),
            None => format!("{}: no polls", source.display()),
        }));
    }
    selected.sort_by_key(|r| r.date);

    let mut chains: BTreeMap<ChainKey, DirichletPosterior> = BTreeMap::new();
    let mut entries = Vec::with_capacity(selected.len());
    for raw in selected {
        let key = chain_key(raw);
        let prior = match chains.get(&key) {
            Some(prev) => prev.scale_forward(config.scale)?,
            None => {
                let layout = raw
                    .natural_layout()
                    .map_err(|e| CliError::ingest(source, e))?;
                DirichletPosterior::noninformative(layout, config.prior)
            }
        };
        let layout = prior.layout();
        let mut raw = raw.clone();
        if raw.scenario.is_some() {
            raw.scenario = Some((layout.label(0).to_string(), layout.label(1).to_string()));
        }
        let obs = to_observation(&raw, layout).map_err(|e| {
            CliError::Input(format!(
                "{}: {} {} {}: {e}",
                source.display(),
                raw.pollster,
                raw.date,
                raw.round
            ))
        })?;
        let posterior = prior.update(&obs)?;
        entries.push(StoredPosterior {
            id: raw.id(),
            scale: config.scale,
            posterior: posterior.clone(),
        });
        chains.insert(key, posterior);
    }
    entries.sort_by(|a, b| {
        (&a.id.pollster, a.id.round, &a.id.scenario, a.id.date).cmp(&(
            &b.id.pollster,
            b.id.round,
            &b.id.scenario,
            b.id.date,
        ))
    });
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateSummary {
    pub records: usize,
    pub chains: usize,
}

pub fn cmd_update(config: &RunConfig) -> Result<UpdateSummary, CliError> {
    let path = config.polls_path()?;
    let records = load_poll_file(path).map_err(|e| CliError::ingest(path, e))?;
    let entries = build_store(&records, config, path)?;
    let mut keys: Vec<_> = entries
        .iter()
        .map(|e| (&e.id.pollster, e.id.round, &e.id.scenario))
        .collect();
    keys.dedup();
    let summary = UpdateSummary {
        records: entries.len(),
        chains: keys.len(),
    };
    write_atomic(&config.store, format_store(&entries).as_bytes())?;
    Ok(summary)
}

// ---------------------------------------------------------------- store views

/// One pollster's snapshots, each list in date order.
#[derive(Debug, Clone, Default)]
pub struct PollsterSeries {
    pub first_round: Vec<StoredPosterior>,
    pub scenarios: Vec<StoredPosterior>,
}

impl PollsterSeries {
    /// Latest snapshot of every scenario taken on or before `date`.
    pub fn scenarios_as_of(
        &self,
        first: &DirichletPosterior,
        date: NaiveDate,
    ) -> Result<(ScenarioTable, BTreeMap<CandidatePair, NaiveDate>), CliError> {
        let mut table = ScenarioTable::new();
        let mut dates = BTreeMap::new();
        for s in self.scenarios.iter().filter(|s| s.id.date <= date) {
            let pair = table.insert(first.layout(), s.posterior.clone())?;
            dates.insert(pair, s.id.date);
        }
        Ok((table, dates))
    }

    /// Latest first-round snapshot on or before `date` (or overall).
    pub fn first_round_as_of(&self, date: Option<NaiveDate>) -> Option<&StoredPosterior> {
        self.first_round
            .iter()
            .rev()
            .find(|s| date.is_none_or(|d| s.id.date <= d))
    }
}

/// Reads the store and groups it by pollster.
pub fn load_series(config: &RunConfig) -> Result<BTreeMap<String, PollsterSeries>, CliError> {
    let path = &config.store;
    if !path.exists() {
        return Err(CliError::Input(format!(
            "{}: store not found (run `runoff update` first)",
            path.display()
        )));
    }
    let entries = load_store(path).map_err(|e| CliError::ingest(path, e))?;
    let mut out: BTreeMap<String, PollsterSeries> = BTreeMap::new();
    for e in entries {
        if config
            .pollster
            .as_deref()
            .is_some_and(|p| p != e.id.pollster)
        {
            continue;
        }
        let series = out.entry(e.id.pollster.clone()).or_default();
        match e.id.round {
            Round::First => series.first_round.push(e),
            Round::Second => series.scenarios.push(e),
        }
    }
    out.retain(|_, s| !s.first_round.is_empty());
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no first-round posteriors{}",
            path.display(),
            config
                .pollster
                .as_deref()
                .map(|p| format!(" for {p:?}"))
                .unwrap_or_default()
        )));
    }
    for s in out.values_mut() {
        s.first_round.sort_by_key(|e| e.id.date);
        s.scenarios.sort_by_key(|e| e.id.date);
    }
    Ok(out)
}

// ---------------------------------------------------------------- report

/// One dated report with the scenario dates that fed it.
#[derive(Debug, Clone)]
pub struct DatedReport {
    pub pollster: String,
    pub date: NaiveDate,
    pub report: ElectionReport,
    pub scenario_dates: BTreeMap<CandidatePair, NaiveDate>,
}

fn report_for(
    pollster: &str,
    series: &PollsterSeries,
    snapshot: &StoredPosterior,
    config: &RunConfig,
) -> Result<DatedReport, CliError> {
    let date = snapshot.id.date;
    let (table, scenario_dates) = series.scenarios_as_of(&snapshot.posterior, date)?;
    let report = full_report(
        &snapshot.posterior,
        &table,
        &config.quadrature,
        config.fallback,
    )?;
    Ok(DatedReport {
        pollster: pollster.to_string(),
        date,
        report,
        scenario_dates,
    })
}

fn status(failure: Option<&str>) -> String {
    failure.map_or_else(|| "ok".to_string(), |f| format!("unconverged: {f}"))
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn top2_table(reports: &[DatedReport]) -> Vec<u8> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.report.p_top2.iter().map(move |e| {
                vec![
                    r.pollster.clone(),
                    r.date.to_string(),
                    e.pair.label(&r.report.layout),
                    prob(e.p_top2.value),
                    status(e.p_top2.failure.as_deref()),
                ]
            })
        })
        .collect();
    csv_bytes(&["pollster", "date", "pair", "p_top2", "status"], &rows)
}

pub fn elected_table(reports: &[DatedReport]) -> Vec<u8> {
    let mut rows = Vec::new();
    for r in reports {
        let rep = &r.report;
        for (k, &c) in rep.candidates.iter().enumerate() {
            let majority = &rep.p_majority[k];
            let mut state = status(majority.failure.as_deref());
            if majority.is_ok() {
                let upstream = rep.p_top2.iter().filter(|e| e.pair.contains(c)).any(|e| {
                    !e.p_top2.is_ok()
                        || matches!(&e.head_to_head, HeadToHead::Scenario(v) if !v.is_ok())
                });
                if upstream {
                    state = "unconverged: uses an unconverged pair kernel".to_string();
                }
            }
            rows.push(vec![
                r.pollster.clone(),
                r.date.to_string(),
                rep.layout.label(c).to_string(),
                prob(majority.value),
                prob(rep.p_elected[k]),
                state,
            ]);
        }
    }
    csv_bytes(
        &[
            "pollster",
            "date",
            "candidate",
            "p_majority",
            "p_elected",
            "status",
        ],
        &rows,
    )
}

/// Where each pair's runoff probability came from; `p_first_wins` is the
/// probability that the first-named candidate of the pair wins the runoff.
pub fn scenario_table(reports: &[DatedReport]) -> Vec<u8> {
    let mut rows = Vec::new();
    for r in reports {
        for e in &r.report.p_top2 {
            let label = e.pair.label(&r.report.layout);
            let row = match &e.head_to_head {
                HeadToHead::Scenario(v) => vec![
                    "scenario".to_string(),
                    r.scenario_dates
                        .get(&e.pair)
                        .map(|d| d.to_string())
                        .unwrap_or_default(),
                    prob(v.value),
                    status(v.failure.as_deref()),
                ],
                HeadToHead::Fallback(f) => vec![
                    format!("fallback:{}", f.as_str()),
                    String::new(),
                    prob(f.value()),
                    "ok".to_string(),
                ],
            };
            let mut full = vec![r.pollster.clone(), r.date.to_string(), label];
            full.extend(row);
            rows.push(full);
        }
    }
    csv_bytes(
        &[
            "pollster",
            "date",
            "pair",
            "source",
            "scenario_date",
            "p_first_wins",
            "status",
        ],
        &rows,
    )
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect();
    s.trim_matches('-').to_string()
}

/// Two charts per pollster: pair top-two probabilities and election
/// probabilities over the report dates.
pub fn charts(reports: &[DatedReport]) -> Vec<(String, Vec<u8>)> {
    let mut by_pollster: BTreeMap<&str, Vec<&DatedReport>> = BTreeMap::new();
    for r in reports {
        by_pollster.entry(&r.pollster).or_default().push(r);
    }
    let mut files = Vec::new();
    for (pollster, rs) in by_pollster {
        let dates: Vec<NaiveDate> = rs.iter().map(|r| r.date).collect();
        let layout = &rs[0].report.layout;

        let mut pairs: Vec<Series> = rs[0]
            .report
            .p_top2
            .iter()
            .map(|e| Series::new(e.pair.label(layout), Vec::new()))
            .collect();
        let mut elected: Vec<Series> = rs[0]
            .report
            .candidates
            .iter()
            .map(|&c| Series::new(layout.label(c).to_string(), Vec::new()))
            .collect();
        for r in &rs {
            for (s, e) in pairs.iter_mut().zip(&r.report.p_top2) {
                s.values.push(e.p_top2.value);
            }
            for (s, v) in elected.iter_mut().zip(&r.report.p_elected) {
                s.values.push(*v);
            }
        }
        pairs.retain(|s| s.peak() >= CHART_FLOOR);
        elected.retain(|s| s.peak() >= CHART_FLOOR);
        let base = slug(pollster);
        files.push((
            format!("top2-{base}.svg"),
            line_chart(
                &format!("{pollster}: P(pair is the top two)"),
                &dates,
                &pairs,
            )
            .into_bytes(),
        ));
        files.push((
            format!("elected-{base}.svg"),
            line_chart(&format!("{pollster}: P(elected)"), &dates, &elected).into_bytes(),
        ));
    }
    files
}

fn failure_count(reports: &[DatedReport]) -> usize {
    reports.iter().map(|r| r.report.failures().len()).sum()
}

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub reports: Vec<DatedReport>,
    pub files: Vec<String>,
}

/// Reports every first-round date in the store and writes the tables (and
/// charts with `config.charts`). Nothing is written when the store cannot be
/// read or holds no first-round posteriors.
pub fn cmd_report(config: &RunConfig) -> Result<ReportSummary, CliError> {
    let series = load_series(config)?;
    let mut reports = Vec::new();
    for (pollster, s) in &series {
        for snapshot in &s.first_round {
            reports.push(report_for(pollster, s, snapshot, config)?);
        }
    }
    let mut files = vec![
        (TOP2_TABLE.to_string(), top2_table(&reports)),
        (ELECTED_TABLE.to_string(), elected_table(&reports)),
        (SCENARIO_TABLE.to_string(), scenario_table(&reports)),
    ];
    if config.charts {
        files.extend(charts(&reports));
    }
    write_all(&config.out, &files)?;
    let count = failure_count(&reports);
    if count > 0 {
        return Err(CliError::Convergence { count });
    }
    Ok(ReportSummary {
        reports,
        files: files.into_iter().map(|(n, _)| n).collect(),
    })
}

/// Reports for one date per pollster: `config.date` or the latest.
pub fn single_date_reports(config: &RunConfig) -> Result<Vec<DatedReport>, CliError> {
    let series = load_series(config)?;
    let mut reports = Vec::new();
    for (pollster, s) in &series {
        if let Some(snapshot) = s.first_round_as_of(config.date) {
            reports.push(report_for(pollster, s, snapshot, config)?);
        }
    }
    if reports.is_empty() {
        return Err(CliError::Input(format!(
            "no first-round posterior on or before {}",
            config.date.map(|d| d.to_string()).unwrap_or_default()
        )));
    }
    Ok(reports)
}

/// A table for stdout plus the number of kernels behind it that missed
/// their tolerance.
#[derive(Debug, Clone)]
pub struct TableOutput {
    pub table: Vec<u8>,
    pub failures: usize,
}

/// The election table for one date, as printed by `runoff elect`.
pub fn cmd_elect(config: &RunConfig) -> Result<TableOutput, CliError> {
    let reports = single_date_reports(config)?;
    Ok(TableOutput {
        table: elected_table(&reports),
        failures: failure_count(&reports),
    })
}

/// The pair table for one date, as printed by `runoff top2`.
pub fn cmd_top2(config: &RunConfig) -> Result<TableOutput, CliError> {
    let reports = single_date_reports(config)?;
    Ok(TableOutput {
        table: top2_table(&reports),
        failures: failure_count(&reports),
    })
}

// ---------------------------------------------------------------- oracle

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub pollster: String,
    pub date: NaiveDate,
    pub kernel: &'static str,
    pub target: String,
    pub quadrature: f64,
    pub oracle: OracleEstimate,
    pub z: f64,
}

impl OracleRow {
    fn new(
        pollster: &str,
        date: NaiveDate,
        kernel: &'static str,
        target: String,
        quadrature: f64,
        oracle: OracleEstimate,
    ) -> Self {
        let z = oracle.z_score(quadrature);
        Self {
            pollster: pollster.to_string(),
            date,
            kernel,
            target,
            quadrature,
            oracle,
            z,
        }
    }
}

/// Takes whatever the quadrature produced, even when it missed its tolerance
/// or left `[0, 1]`: the oracle exists to judge that number.
fn value(result: Result<f64, RankError>) -> Result<f64, CliError> {
    match result {
        Ok(v) => Ok(v),
        Err(e) => e.raw_estimate().ok_or_else(|| CliError::Election(e.into())),
    }
}

/// Compares every kernel of one first-round posterior and its scenarios with
/// simulation.
pub fn oracle_rows(
    pollster: &str,
    date: NaiveDate,
    first: &DirichletPosterior,
    scenarios: &ScenarioTable,
    spec: &QuadratureSpec,
    draws: u64,
    seed: u64,
) -> Result<Vec<OracleRow>, CliError> {
    let layout = first.layout();
    let candidates = layout.candidate_indices();
    let tally = mc_first_round(first, draws, seed);
    let mut rows = Vec::new();
    for &i in &candidates {
        let q = value(prob_majority(first, i, spec))?;
        rows.push(OracleRow::new(
            pollster,
            date,
            "majority",
            layout.label(i).to_string(),
            q,
            tally.majority(i),
        ));
    }
    for (a, &i) in candidates.iter().enumerate() {
        for &j in &candidates[a + 1..] {
            let q = value(prob_pair_top2(first, i, j, spec))?;
            let pair = CandidatePair::new(i, j).expect("distinct candidates");
            rows.push(OracleRow::new(
                pollster,
                date,
                "top2",
                pair.label(layout),
                q,
                tally.pair(i, j),
            ));
        }
    }
    for (_, post2) in scenarios.iter() {
        let l2 = post2.layout();
        let (lo, hi) = (0, 1);
        let q = value(prob_beats(post2, lo, hi, spec))?;
        let target = format!("{}>{}", l2.label(lo), l2.label(hi));
        rows.push(OracleRow::new(
            pollster,
            date,
            "beats",
            target,
            q,
            mc_beats(post2, lo, hi, draws, seed),
        ));
    }
    Ok(rows)
}

pub fn oracle_table(rows: &[OracleRow]) -> Vec<u8> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.pollster.clone(),
                r.date.to_string(),
                r.kernel.to_string(),
                r.target.clone(),
                prob(r.quadrature),
                prob(r.oracle.estimate),
                prob(r.oracle.std_error),
                format!("{:.4}", r.z),
            ]
        })
        .collect();
    csv_bytes(
        &[
            "pollster",
            "date",
            "kernel",
            "target",
            "quadrature",
            "oracle",
            "std_error",
            "z",
        ],
        &body,
    )
}

#[derive(Debug, Clone)]
pub struct OracleSummary {
    pub rows: Vec<OracleRow>,
    pub max_abs_z: f64,
}

/// Cross-checks the latest (or `config.date`) report of every pollster
/// against Monte Carlo and writes `oracle.csv`.
pub fn cmd_oracle(config: &RunConfig) -> Result<OracleSummary, CliError> {
    let series = load_series(config)?;
    let mut rows = Vec::new();
    for (pollster, s) in &series {
        let Some(snapshot) = s.first_round_as_of(config.date) else {
            continue;
        };
        let (table, _) = s.scenarios_as_of(&snapshot.posterior, snapshot.id.date)?;
        rows.extend(oracle_rows(
            pollster,
            snapshot.id.date,
            &snapshot.posterior,
            &table,
            &config.quadrature,
            config.draws,
            config.seed,
        )?);
    }
    if rows.is_empty() {
        return Err(CliError::Input("no first-round posterior to check".into()));
    }
    write_all(
        &config.out,
        &[(ORACLE_TABLE.to_string(), oracle_table(&rows))],
    )?;
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let count = rows.iter().filter(|r| r.z.abs() > Z_THRESHOLD).count();
    if count > 0 {
        return Err(CliError::OracleDisagreement {
            count,
            threshold: Z_THRESHOLD,
        });
    }
    Ok(OracleSummary { rows, max_abs_z })
}
