use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use runoff::ingestion::parse_store;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn runoff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_runoff"))
        .args(args)
        .output()
        .expect("failed to spawn runoff")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert_eq!(
        code(out),
        0,
        "stderr:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_polls(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("polls.txt");
    fs::write(&p, text).unwrap();
    p
}

fn update(polls: &Path, store: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["update", "--polls", path(polls), "--store", path(store)];
    args.extend_from_slice(extra);
    runoff(&args)
}

fn alphas(store: &Path) -> Vec<Vec<f64>> {
    parse_store(&fs::read_to_string(store).unwrap())
        .unwrap()
        .into_iter()
        .map(|e| e.posterior.alpha().to_vec())
        .collect()
}

const ONE_POLL: &str = "X, 2018-09-01, first, -, 1000, a=40, b=35, c=15, blank=10\n";

#[test]
fn single_poll_is_prior_plus_counts() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    assert_ok(&update(&write_polls(dir.path(), ONE_POLL), &store, &[]));
    assert_eq!(alphas(&store), vec![vec![401.0, 351.0, 151.0, 101.0]]);

    assert_ok(&update(
        &write_polls(dir.path(), ONE_POLL),
        &store,
        &["--prior", "jeffreys"],
    ));
    assert_eq!(alphas(&store), vec![vec![400.5, 350.5, 150.5, 100.5]]);
}

#[test]
fn chain_scales_the_previous_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    let polls = write_polls(
        dir.path(),
        "X, 2018-09-01, first, -, 1000, a=40, b=35, c=15, blank=10\n\
         X, 2018-09-08, first, -, 1000, a=40, b=35, c=15, blank=10\n",
    );
    assert_ok(&update(&polls, &store, &["--scale", "1"]));
    assert_eq!(alphas(&store)[1], vec![801.0, 701.0, 301.0, 201.0]);

    // Out-of-order records are processed by date.
    let polls = write_polls(
        dir.path(),
        "X, 2018-09-08, first, -, 1000, a=30, b=30, c=30, blank=10\n\
         X, 2018-09-01, first, -, 1000, a=40, b=35, c=15, blank=10\n",
    );
    assert_ok(&update(&polls, &store, &[]));
    let expected: Vec<f64> = [401.0, 351.0, 151.0, 101.0]
        .iter()
        .zip([300.0, 300.0, 300.0, 100.0])
        .map(|(p, c)| 0.1 * p + c)
        .collect();
    let got = &alphas(&store)[1];
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() <= 1e-12 * e, "{got:?} vs {expected:?}");
    }
}

#[test]
fn update_is_idempotent_and_matches_golden_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    assert_ok(&update(&data("alpha_polls.txt"), &store, &[]));
    let first = fs::read(&store).unwrap();
    assert_ok(&update(&data("alpha_polls.txt"), &store, &[]));
    assert_eq!(fs::read(&store).unwrap(), first);
    assert_eq!(first, fs::read(data("golden/alpha_store.txt")).unwrap());
    // Only the store itself is left behind.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn pollster_filter_and_unknown_pollster() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    assert_ok(&update(
        &data("both_polls.txt"),
        &store,
        &["--pollster", "Beta"],
    ));
    let text = fs::read_to_string(&store).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("Beta,")));
    let out = update(&data("both_polls.txt"), &store, &["--pollster", "Gamma"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    let cases = [
        // Same key twice.
        "X, 2018-09-01, first, -, 1000, a=50, b=40, blank=10\n\
         X, 2018-09-01, first, -, 1000, a=50, b=40, blank=10\n",
        // A runoff poll without its pair.
        "X, 2018-09-01, second, -, 1000, a=50, b=40, blank=10\n",
        // Percentages far from 100.
        "X, 2018-09-01, first, -, 1000, a=50, b=30, blank=10\n",
        // A later poll names a category the chain does not have.
        "X, 2018-09-01, first, -, 1000, a=50, b=40, blank=10\n\
         X, 2018-09-02, first, -, 1000, a=50, c=40, blank=10\n",
    ];
    for text in cases {
        let out = update(&write_polls(dir.path(), text), &store, &[]);
        assert_eq!(code(&out), 1, "{text}");
        assert!(!store.exists(), "a failed update must not write the store");
    }
    let out = update(
        &write_polls(dir.path(), ONE_POLL),
        &store,
        &["--scale", "1.5"],
    );
    assert_eq!(code(&out), 1);
}

fn report(store: &Path, out_dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["report", "--store", path(store), "--out", path(out_dir)];
    args.extend_from_slice(extra);
    runoff(&args)
}

#[test]
fn symmetric_toy_report_matches_golden_tables() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    let out_dir = dir.path().join("out");
    assert_ok(&update(&data("toy_polls.txt"), &store, &[]));
    assert_ok(&report(&store, &out_dir, &[]));
    for name in ["top2", "elected", "scenarios"] {
        assert_eq!(
            fs::read_to_string(out_dir.join(format!("{name}.csv"))).unwrap(),
            fs::read_to_string(data(&format!("golden/toy_{name}.csv"))).unwrap(),
            "{name}.csv"
        );
    }
    // Every pair holds 1/C(4,2) of the top-two mass.
    let top2 = fs::read_to_string(out_dir.join("top2.csv")).unwrap();
    for line in top2.lines().skip(1) {
        let p: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((p - 1.0 / 6.0).abs() <= 1e-8, "{line}");
    }
}

#[test]
fn empty_store_is_an_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    fs::write(&store, "# nothing yet\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = report(&store, &out_dir, &[]);
    assert_eq!(code(&out), 1);
    assert!(!out_dir.exists());
    let out = report(&dir.path().join("missing.txt"), &out_dir, &[]);
    assert_eq!(code(&out), 1);
    assert!(!out_dir.exists());
}

#[test]
fn report_lists_sources_and_draws_charts() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    let out_dir = dir.path().join("out");
    assert_ok(&update(&data("both_polls.txt"), &store, &[]));
    assert_ok(&report(
        &store,
        &out_dir,
        &["--charts", "--fallback", "skip"],
    ));
    let scenarios = fs::read_to_string(out_dir.join("scenarios.csv")).unwrap();
    assert!(scenarios.contains("Alpha,2018-10-06,5/9,scenario,2018-10-06,"));
    // The 3/9 scenario was last polled on 09-26 and is reused afterwards.
    assert!(scenarios.contains("Alpha,2018-10-06,3/9,scenario,2018-09-26,"));
    assert!(scenarios.contains("Beta,2018-10-06,3/9,fallback:skip,,0.000000000e0,ok"));
    for f in [
        "top2-alpha.svg",
        "elected-alpha.svg",
        "top2-beta.svg",
        "elected-beta.svg",
    ] {
        let svg = fs::read_to_string(out_dir.join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"), "{f}");
    }
    let elected = fs::read_to_string(out_dir.join("elected.csv")).unwrap();
    let rows = elected
        .lines()
        .filter(|l| l.starts_with("Alpha,2018-10-06,"))
        .count();
    assert_eq!(rows, 13);
}

#[test]
fn single_date_commands_print_tables() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    assert_ok(&update(&data("both_polls.txt"), &store, &[]));
    let out = runoff(&[
        "elect",
        "--store",
        path(&store),
        "--pollster",
        "Beta",
        "--date",
        "2018-09-20",
    ]);
    assert_ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("pollster,date,candidate,p_majority,p_elected,status\n"));
    // The latest Beta first-round poll on or before 09-20 is from 09-18.
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.starts_with("Beta,2018-09-18,")));
    assert_eq!(text.lines().count(), 14);

    let out = runoff(&["top2", "--store", path(&store)]);
    assert_ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 78);

    let out = runoff(&["elect", "--store", path(&store), "--date", "2018-01-01"]);
    assert_eq!(code(&out), 1);
}

fn oracle(store: &Path, out_dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "oracle",
        "--store",
        path(store),
        "--out",
        path(out_dir),
        "--draws",
        "200000",
    ];
    args.extend_from_slice(extra);
    runoff(&args)
}

fn z_scores(table: &str) -> Vec<f64> {
    table
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn oracle_agrees_on_the_toy_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    assert_ok(&update(&data("toy_polls.txt"), &store, &[]));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ok(&oracle(&store, &a, &["--seed", "3"]));
    assert_ok(&oracle(&store, &b, &["--seed", "3"]));
    let table = fs::read_to_string(a.join("oracle.csv")).unwrap();
    assert_eq!(table, fs::read_to_string(b.join("oracle.csv")).unwrap());
    assert!(table.starts_with("pollster,date,kernel,target,quadrature,oracle,std_error,z\n"));
    let z = z_scores(&table);
    assert_eq!(z.len(), 4 + 6);
    assert!(z.iter().all(|z| z.abs() <= 3.0), "{z:?}");
}

#[test]
fn corrupted_tolerance_surfaces_as_oracle_disagreement() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    assert_ok(&update(&data("alpha_polls.txt"), &store, &[]));
    let out_dir = dir.path().join("out");
    assert_ok(&oracle(&store, &out_dir, &[]));
    let out = oracle(&store, &out_dir, &["--rel-tol", "10"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let z = z_scores(&fs::read_to_string(out_dir.join("oracle.csv")).unwrap());
    assert!(z.iter().any(|z| z.abs() > 4.0));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.txt");
    let polls = write_polls(
        dir.path(),
        "X, 2018-09-01, first, -, 1000, a=40, b=35, c=15, blank=10\n\
         X, 2018-09-08, first, -, 1000, a=40, b=35, c=15, blank=10\n",
    );
    let config = dir.path().join("runoff.toml");
    fs::write(
        &config,
        format!(
            "polls = {:?}\nstore = {:?}\nscale = 1.0\n",
            path(&polls),
            path(&store)
        ),
    )
    .unwrap();
    assert_ok(&runoff(&["update", "--config", path(&config)]));
    assert_eq!(alphas(&store)[1], vec![801.0, 701.0, 301.0, 201.0]);
    assert_ok(&runoff(&[
        "update",
        "--config",
        path(&config),
        "--scale",
        "0.5",
    ]));
    assert_eq!(alphas(&store)[1], vec![600.5, 525.5, 225.5, 150.5]);

    fs::write(&config, "draws = 10\n").unwrap();
    let out = runoff(&["oracle", "--config", path(&config), "--store", path(&store)]);
    assert_eq!(code(&out), 1);
}
