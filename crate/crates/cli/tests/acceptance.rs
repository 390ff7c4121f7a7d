//! End-to-end acceptance checks. Runs without the libtest harness so that the
//! PASS/FAIL line of every criterion is always printed; exits non-zero if any
//! criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use runoff::model::{CategoryLayout, DirichletPosterior};
use runoff::numerics::{integrate, GammaMarginal, QuadratureSpec};
use runoff::oracle::{block_rng, mc_beats, mc_first_round};
use runoff::rank_prob::{
    prob_beats, prob_beats_at_rate, prob_majority, prob_majority_at_rate, prob_pair_top2,
    prob_pair_top2_at_rate,
};
use runoff_cli::commands::{cmd_oracle, cmd_report, cmd_update, ORACLE_TABLE};
use runoff_cli::config::Overrides;
use runoff_cli::RunConfig;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn posterior(alpha: Vec<f64>) -> DirichletPosterior {
    let layout = CategoryLayout::numbered(alpha.len() - 1).unwrap();
    DirichletPosterior::new(layout, alpha, vec![]).unwrap()
}

fn log_uniform_alpha<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let (lo, hi) = (0.5f64.ln(), 3000f64.ln());
    (0..len).map(|_| rng.gen_range(lo..hi).exp()).collect()
}

fn pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| (i + 1..k).map(move |j| (i, j)))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn config(polls: &Path, store: &Path, out: &Path, draws: Option<u64>) -> RunConfig {
    RunConfig::resolve(&Overrides {
        polls: Some(polls.to_path_buf()),
        store: Some(store.to_path_buf()),
        out: Some(out.to_path_buf()),
        draws,
        ..Overrides::default()
    })
    .unwrap()
}

fn pair_partition() -> Outcome {
    let spec = QuadratureSpec::default();
    let mut rng = block_rng(1, 0);
    let mut worst_err = 0.0f64;
    let mut slowest = Duration::ZERO;
    for _ in 0..10 {
        let post = posterior(log_uniform_alpha(&mut rng, 14));
        let start = Instant::now();
        let mut total = 0.0;
        for (i, j) in pairs(13) {
            total += prob_pair_top2(&post, i, j, &spec).map_err(|e| e.to_string())?;
        }
        slowest = slowest.max(start.elapsed());
        worst_err = worst_err.max((total - 1.0).abs());
    }
    check(
        worst_err <= 1e-6 && slowest <= Duration::from_secs(5),
        format!("10 posteriors, max |Σ-1| = {worst_err:.2e}, slowest {slowest:.2?}"),
    )
}

fn rate_invariance() -> Outcome {
    let spec = QuadratureSpec::default();
    let mut rng = block_rng(2, 0);
    let mut worst = 0.0f64;
    let mut evaluated = 0;
    for len in [4, 7, 10] {
        let post = posterior(log_uniform_alpha(&mut rng, len));
        let k = len - 1;
        let at = |rate: f64| -> Result<Vec<f64>, String> {
            let mut v = Vec::new();
            for i in 0..k {
                v.push(prob_majority_at_rate(&post, i, rate, &spec).map_err(|e| e.to_string())?);
            }
            for (i, j) in pairs(k) {
                v.push(
                    prob_pair_top2_at_rate(&post, i, j, rate, &spec).map_err(|e| e.to_string())?,
                );
                v.push(prob_beats_at_rate(&post, i, j, rate, &spec).map_err(|e| e.to_string())?);
            }
            Ok(v)
        };
        let base = at(1.0)?;
        evaluated += base.len();
        for rate in [0.5, 2.0] {
            for (a, b) in base.iter().zip(at(rate)?) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(
        worst <= 1e-10,
        format!("{evaluated} kernels at β ∈ {{0.5, 1, 2}}, max deviation {worst:.2e}"),
    )
}

fn closed_forms() -> Outcome {
    let spec = QuadratureSpec::default();
    let err = |e: runoff::rank_prob::RankError| e.to_string();
    let beats = prob_beats(&posterior(vec![2.0, 1.0, 5.0]), 0, 1, &spec).map_err(err)?;
    let majority = prob_majority(&posterior(vec![1.0, 1.0, 1.0, 3.0]), 0, &spec).map_err(err)?;
    let even = prob_beats(&posterior(vec![37.5, 37.5, 10.0]), 1, 0, &spec).map_err(err)?;
    let mut worst_sym = (even - 0.5).abs();
    for m in [3usize, 5, 8, 13] {
        let post = posterior(vec![40.0; m + 1]);
        let expected = 2.0 / (m * (m - 1)) as f64;
        for (i, j) in [(0, 1), (0, m - 1)] {
            let p = prob_pair_top2(&post, i, j, &spec).map_err(err)?;
            worst_sym = worst_sym.max((p - expected).abs());
        }
    }
    let ok = (beats - 0.75).abs() <= 1e-9 && (majority - 0.25).abs() <= 1e-9 && worst_sym <= 1e-8;
    check(
        ok,
        format!("beats {beats:.12}, majority {majority:.12}, symmetric max error {worst_sym:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    const DRAWS: u64 = 1_000_000;
    let spec = QuadratureSpec::default();
    let mut rng = block_rng(4, 0);
    let start = Instant::now();
    let mut z = Vec::new();
    for n in 0..20u64 {
        let len = 4 + (n as usize % 11);
        let post = posterior(log_uniform_alpha(&mut rng, len));
        // Target the leading candidates so the comparisons are not all at 0.
        let mut order: Vec<usize> = (0..len - 1).collect();
        order.sort_by(|&a, &b| post.alpha()[b].total_cmp(&post.alpha()[a]));
        let (lead, second, third) = (order[0], order[1], order[2]);
        let seed = 100 + n;
        let tally = mc_first_round(&post, DRAWS, seed);
        let q = prob_majority(&post, lead, &spec).map_err(|e| e.to_string())?;
        z.push(tally.majority(lead).z_score(q));
        let q = prob_pair_top2(&post, lead, third, &spec).map_err(|e| e.to_string())?;
        z.push(tally.pair(lead, third).z_score(q));
        let q = prob_beats(&post, second, third, &spec).map_err(|e| e.to_string())?;
        z.push(mc_beats(&post, second, third, DRAWS, seed).z_score(q));
    }
    let elapsed = start.elapsed();
    let max = z.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let within3 = z.iter().filter(|z| z.abs() <= 3.0).count() as f64 / z.len() as f64;
    check(
        max <= 4.0 && within3 >= 0.9 && elapsed <= Duration::from_secs(120),
        format!(
            "{} comparisons, max |z| = {max:.2}, {:.0}% within 3, {elapsed:.2?}",
            z.len(),
            100.0 * within3
        ),
    )
}

fn qualitative_reproduction() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = config(
        &data("alpha_polls.txt"),
        &dir.path().join("store.txt"),
        &dir.path().join("out"),
        None,
    );
    cmd_update(&cfg).map_err(|e| e.to_string())?;
    let summary = cmd_report(&cfg).map_err(|e| e.to_string())?;
    let last = summary
        .reports
        .iter()
        .max_by_key(|r| r.date)
        .ok_or("no reports")?;
    let report = &last.report;
    let idx = |label: &str| {
        report
            .layout
            .index_of(label)
            .ok_or(format!("no candidate {label}"))
    };
    let (leader, runner_up) = (idx("9")?, idx("5")?);
    let max_majority = report
        .p_majority
        .iter()
        .map(|v| v.value)
        .fold(0.0f64, f64::max);
    let top2 = report.top2(leader, runner_up).ok_or("missing pair")?;
    let (p9, p5) = (
        report.elected(leader).unwrap(),
        report.elected(runner_up).unwrap(),
    );
    check(
        max_majority <= 1e-6 && top2 >= 0.999 && p5 > p9,
        format!(
            "{}: max p_majority {max_majority:.1e}, p_top2(5,9) {top2:.6}, p_elected 5 = {p5:.4} vs 9 = {p9:.4}",
            last.date
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store.txt");
    let read = |p: &Path| fs::read(p).map_err(|e| e.to_string());
    let a = config(
        &data("both_polls.txt"),
        &store,
        &dir.path().join("a"),
        Some(100_000),
    );
    let b = config(
        &data("both_polls.txt"),
        &store,
        &dir.path().join("b"),
        Some(100_000),
    );
    cmd_update(&a).map_err(|e| e.to_string())?;
    let first = read(&store)?;
    cmd_update(&a).map_err(|e| e.to_string())?;
    let store_same = first == read(&store)?;
    cmd_oracle(&a).map_err(|e| e.to_string())?;
    cmd_oracle(&b).map_err(|e| e.to_string())?;
    let oracle_same = read(&a.out.join(ORACLE_TABLE))? == read(&b.out.join(ORACLE_TABLE))?;
    check(
        store_same && oracle_same,
        format!("store identical: {store_same}, oracle table identical: {oracle_same}"),
    )
}

fn numerics_suite() -> Outcome {
    let shapes = [0.1, 0.5, 1.0, 2.5, 9.0, 120.0, 3000.0, 12000.0];
    let rates = [0.5, 1.0, 7.0];
    let (mut comp, mut round_trip, mut deriv) = (0.0f64, 0.0f64, 0.0f64);
    for &shape in &shapes {
        for &rate in &rates {
            let g = GammaMarginal::new(shape, rate).map_err(|e| e.to_string())?;
            let sd = shape.sqrt() / rate;
            for z in [-6.0, -2.0, -0.5, 0.0, 0.5, 2.0, 6.0] {
                let u = (g.mean() + z * sd).max(0.0);
                comp = comp.max((g.cdf(u).unwrap() + g.sf(u).unwrap() - 1.0).abs());
                if shape >= 1.0 && z.abs() <= 1.0 && u > 0.0 {
                    let h = 1e-4 * sd;
                    let fd = (g.cdf(u + h).unwrap() - g.cdf(u - h).unwrap()) / (2.0 * h);
                    let pdf = g.log_pdf(u).unwrap().exp();
                    deriv = deriv.max(((fd - pdf) / pdf).abs());
                }
            }
            for p in [1e-10, 0.01, 0.5, 0.99, 1.0 - 1e-10] {
                let q = g.quantile(p).map_err(|e| e.to_string())?;
                round_trip = round_trip.max((g.cdf(q).unwrap() - p).abs());
            }
        }
    }
    let spec = QuadratureSpec::default();
    let mut poly = 0.0f64;
    for k in 0..=22 {
        let r = integrate(|x: f64| x.powi(k), 0.0, 1.0, &spec).map_err(|e| e.to_string())?;
        poly = poly.max((r.value - 1.0 / (k as f64 + 1.0)).abs());
    }
    check(
        comp <= 1e-14 && round_trip <= 1e-10 && deriv <= 1e-6 && poly <= 4.0 * f64::EPSILON,
        format!(
            "P+Q {comp:.1e}, quantile {round_trip:.1e}, pdf/FD {deriv:.1e}, polynomials {poly:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("pair partition", pair_partition),
        ("rate invariance", rate_invariance),
        ("closed forms", closed_forms),
        ("oracle equivalence", oracle_equivalence),
        ("qualitative reproduction", qualitative_reproduction),
        ("determinism", determinism),
        ("numerical analysis", numerics_suite),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let (verdict, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} ({name}): {verdict} - {detail}", n + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
