use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hrgsdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrgsdp")).args(args).output().expect("spawn hrgsdp")
}

fn ok(args: &[&str]) -> String {
    let out = hrgsdp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--set", "sim_per_class=2", "--set", "n_iter=120", "--set", "n_burn=60"];

#[test]
fn help_lists_every_config_key() {
    let out = hrgsdp(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for (key, _) in hrgsdp::pipeline::CONFIG_KEYS {
        assert!(text.contains(key), "help misses {key}");
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    assert_eq!(hrgsdp(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(hrgsdp(&["--set", "bogus=1", "config"]).status.code(), Some(1));
    assert_eq!(hrgsdp(&["--set", "n_iter=abc", "config"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = hrgsdp(&["fit", "--manifest", p(&missing), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# comment\nseed=9\nn_iter=300\nn_burn=100\n").unwrap();
    let text = ok(&["--config", p(&file), "--set", "n_iter=500", "config"]);
    assert!(text.contains("seed=9\n"));
    assert!(text.contains("n_iter=500\n"));
    let full = ok(&["--profile", "full", "config"]);
    assert!(full.contains("n_iter=20000\n"));
}

#[test]
fn simulate_fit_cluster_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (sim, fit, cl) = (d.join("sim"), d.join("fit"), d.join("cl"));
    let manifest = sim.join("manifest.csv");

    let mut args = SMALL.to_vec();
    args.extend(["simulate", "--out", p(&sim)]);
    ok(&args);
    let mut args = SMALL.to_vec();
    args.extend(["fit", "--manifest", p(&manifest), "--out", p(&fit)]);
    ok(&args);
    let first = fs::read(fit.join("surfaces.csv")).unwrap();
    ok(&args);
    assert_eq!(first, fs::read(fit.join("surfaces.csv")).unwrap(), "fit is not reproducible");

    ok(&["--set", "g=3", "cluster", "--surfaces", p(&fit.join("surfaces.csv")), "--out", p(&cl)]);
    for f in ["partition.csv", "dendrogram.csv", "kl_rank.csv"] {
        assert!(fs::read_to_string(cl.join(f)).unwrap().contains("#config_hash="), "{f} not stamped");
    }
    let metrics = d.join("metrics.csv");
    let text = ok(&["evaluate", "--partition", p(&cl.join("partition.csv")), "--truth", p(&manifest), "--out", p(&metrics)]);
    assert!(text.starts_with("misassignment"));
    let (mis, chi2) = hrgsdp::pipeline::read_metrics(&metrics).unwrap();
    assert!((0.0..=1.0).contains(&mis) && chi2 >= 0.0);

    let km = d.join("km.csv");
    ok(&["baseline", "--manifest", p(&manifest), "--method", "km", "--out", p(&km)]);
    let table = d.join("table.csv");
    ok(&[
        "crosstab", "--rows", p(&cl.join("partition.csv")), "--cols", p(&km), "--row-name", "DL", "--col-name", "NC",
        "--truth", p(&manifest), "--flag-label", "1", "--out", p(&table),
    ]);
    let table = fs::read_to_string(table).unwrap();
    assert!(table.contains("DL \\ NC,cluster 1"));
    let cells: u64 = table
        .lines()
        .filter(|l| l.starts_with("cluster"))
        .flat_map(|l| l.split(',').skip(1).map(|c| c.split('(').next().unwrap().parse::<u64>().unwrap()).collect::<Vec<_>>())
        .sum();
    assert_eq!(cells, 10);
}

#[test]
fn unknown_baseline_method_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["--set", "sim_per_class=1", "simulate", "--out", p(&sim)]);
    let out = hrgsdp(&["baseline", "--manifest", p(&sim.join("manifest.csv")), "--method", "svm", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn binary_surfaces_are_accepted_by_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (sim, fit) = (d.join("sim"), d.join("fit"));
    let manifest = sim.join("manifest.csv");
    let mut args = SMALL.to_vec();
    args.extend(["simulate", "--out", p(&sim)]);
    ok(&args);
    let mut args = SMALL.to_vec();
    args.extend(["--set", "surface_format=binary", "fit", "--manifest", p(&manifest), "--out", p(&fit)]);
    ok(&args);
    let bin = d.join("fit/surfaces.bin");
    assert_eq!(&fs::read(&bin).unwrap()[..8], b"HRGSURF1");
    ok(&["cluster", "--surfaces", p(&bin), "--out", p(&d.join("cl"))]);
    assert!(d.join("cl/partition.csv").exists());
}
