use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{baseline_partition, cluster, cohort_from_matrices, evaluate, fit, RunConfig, MODEL_NAME};
use crate::baselines::BaselineMethod;
use crate::error::{Error, Result};
use crate::io::write_text;
use crate::sim::generate_cohort;

/// One (method, scale, replicate) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub method: String,
    pub s: f64,
    pub replicate: usize,
    pub misassignment: f64,
    pub chi2: f64,
    /// Selected cluster count; only the model reports one.
    pub kl_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyFailure {
    pub method: String,
    pub s: f64,
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub failures: Vec<StudyFailure>,
}

/// Mean and sample standard deviation per (method, scale).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub s: f64,
    pub n: usize,
    pub misassignment_mean: f64,
    pub misassignment_sd: f64,
    pub chi2_mean: f64,
    pub chi2_sd: f64,
}

/// Seed of replicate `r`; shared across scales so each scale sees the same
/// random streams.
pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add((replicate as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn method_names() -> Vec<&'static str> {
    std::iter::once(MODEL_NAME).chain(BaselineMethod::ALL.iter().map(|m| m.name())).collect()
}

/// Simulate, fit, cluster and score one replicate, plus every baseline with
/// `cfg.baseline_g` clusters. Failures are returned, not raised.
pub fn run_replicate(cfg: &RunConfig, s: f64, replicate: usize) -> (Vec<StudyRow>, Vec<StudyFailure>) {
    let seed = replicate_seed(cfg.seed, replicate);
    let fail = |method: &str, e: Error| StudyFailure {
        method: method.to_string(),
        s,
        replicate,
        message: e.to_string(),
    };
    let mut sim = cfg.sim.clone();
    sim.s = s;
    sim.seed = seed;
    let cohort = match generate_cohort(&sim) {
        Ok(c) => c,
        Err(e) => return (Vec::new(), method_names().into_iter().map(|m| fail(m, Error::Numerical(format!("simulation failed: {e}")))).collect()),
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let model = (|| {
        let ids = (1..=cohort.matrices.len()).map(|t| t.to_string()).collect();
        let loaded = cohort_from_matrices(ids, cohort.matrices.clone(), None, None, cfg.lattice, cfg.intercept)?;
        let mut run_cfg = cfg.clone();
        run_cfg.seed = seed;
        let out = fit(&loaded, &run_cfg)?;
        let clustered = cluster(&out.surfaces, &run_cfg)?;
        let ev = evaluate(&cohort.labels, clustered.partition.labels())?;
        Ok::<_, Error>((ev, clustered.report.rank))
    })();
    match model {
        Ok((ev, rank)) => rows.push(StudyRow {
            method: MODEL_NAME.to_string(),
            s,
            replicate,
            misassignment: ev.misassignment,
            chi2: ev.chi2,
            kl_rank: Some(rank),
        }),
        Err(e) => failures.push(fail(MODEL_NAME, e)),
    }
    for (i, method) in BaselineMethod::ALL.into_iter().enumerate() {
        let result = baseline_partition(&cohort.matrices, method, cfg, seed.wrapping_add(i as u64))
            .and_then(|p| evaluate(&cohort.labels, p.labels()));
        match result {
            Ok(ev) => rows.push(StudyRow {
                method: method.name().to_string(),
                s,
                replicate,
                misassignment: ev.misassignment,
                chi2: ev.chi2,
                kl_rank: None,
            }),
            Err(e) => failures.push(fail(method.name(), e)),
        }
    }
    log::info!("replicate {replicate} at s = {s} done ({} failures)", failures.len());
    (rows, failures)
}

/// Every scale in `cfg.s_values` times `cfg.replicates` replicates, run in
/// parallel. Rows are ordered by scale, replicate, then method.
pub fn replicate_study(cfg: &RunConfig) -> StudyResult {
    let jobs: Vec<(f64, usize)> = cfg
        .s_values
        .iter()
        .flat_map(|&s| (0..cfg.replicates).map(move |r| (s, r)))
        .collect();
    let parts: Vec<_> = jobs.par_iter().map(|&(s, r)| run_replicate(cfg, s, r)).collect();
    let mut result = StudyResult::default();
    for (rows, failures) in parts {
        result.rows.extend(rows);
        result.failures.extend(failures);
    }
    result
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (mean, sd)
}

pub fn summarize(rows: &[StudyRow]) -> Vec<SummaryRow> {
    let mut scales: Vec<f64> = rows.iter().map(|r| r.s).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    let mut methods: Vec<&str> = method_names();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = Vec::new();
    for &s in &scales {
        for &method in &methods {
            let group: Vec<&StudyRow> = rows.iter().filter(|r| r.s == s && r.method == method).collect();
            if group.is_empty() {
                continue;
            }
            let mis: Vec<f64> = group.iter().map(|r| r.misassignment).collect();
            let chi: Vec<f64> = group.iter().map(|r| r.chi2).collect();
            let (misassignment_mean, misassignment_sd) = mean_sd(&mis);
            let (chi2_mean, chi2_sd) = mean_sd(&chi);
            out.push(SummaryRow {
                method: method.to_string(),
                s,
                n: group.len(),
                misassignment_mean,
                misassignment_sd,
                chi2_mean,
                chi2_sd,
            });
        }
    }
    out
}

fn header(meta: &[(&str, String)]) -> String {
    meta.iter().map(|(k, v)| format!("#{k}={v}\n")).collect()
}

fn na(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

/// Long format: `method,s,replicate,misassignment,chi2,kl_rank`.
pub fn format_long(rows: &[StudyRow], meta: &[(&str, String)]) -> String {
    let mut out = header(meta);
    out.push_str("method,s,replicate,misassignment,chi2,kl_rank\n");
    for r in rows {
        let rank = r.kl_rank.map_or_else(|| "NA".to_string(), |k| k.to_string());
        let _ = writeln!(out, "{},{},{},{},{},{rank}", r.method, r.s, r.replicate, r.misassignment, r.chi2);
    }
    out
}

pub fn parse_long(text: &str) -> Result<Vec<StudyRow>> {
    let bad = |no: usize, what: &str| Error::Parse {
        path: "long-format results".into(),
        message: format!("line {no}: {what}"),
    };
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') || line.starts_with("method,") {
            continue;
        }
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 6 {
            return Err(bad(no, "expected 6 columns"));
        }
        rows.push(StudyRow {
            method: c[0].to_string(),
            s: c[1].parse().map_err(|_| bad(no, "bad s"))?,
            replicate: c[2].parse().map_err(|_| bad(no, "bad replicate"))?,
            misassignment: c[3].parse().map_err(|_| bad(no, "bad misassignment"))?,
            chi2: c[4].parse().map_err(|_| bad(no, "bad chi2"))?,
            kl_rank: if c[5] == "NA" { None } else { Some(c[5].parse().map_err(|_| bad(no, "bad kl_rank"))?) },
        });
    }
    Ok(rows)
}

pub fn format_summary(summary: &[SummaryRow], meta: &[(&str, String)]) -> String {
    let mut out = header(meta);
    out.push_str("method,s,n,misassignment_mean,misassignment_sd,chi2_mean,chi2_sd\n");
    for r in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            r.s,
            r.n,
            r.misassignment_mean,
            na(r.misassignment_sd),
            r.chi2_mean,
            na(r.chi2_sd)
        );
    }
    out
}

pub fn format_failures(failures: &[StudyFailure], meta: &[(&str, String)]) -> String {
    let mut out = header(meta);
    out.push_str("method,s,replicate,message\n");
    for f in failures {
        let _ = writeln!(out, "{},{},{},\"{}\"", f.method, f.s, f.replicate, f.message.replace('"', "'"));
    }
    out
}

/// Writes `results_long.csv`, `summary.csv` and `failures.csv`.
pub fn write_study(result: &StudyResult, out_dir: &Path, cfg: &RunConfig) -> Result<()> {
    let meta = cfg.stamp();
    write_text(&out_dir.join("results_long.csv"), &format_long(&result.rows, &meta))?;
    write_text(&out_dir.join("summary.csv"), &format_summary(&summarize(&result.rows), &meta))?;
    write_text(&out_dir.join("failures.csv"), &format_failures(&result.failures, &meta))
}
