//! End-to-end commands: GLCM construction, fitting, clustering, simulation,
//! baselines, evaluation and replicate studies. Every artifact carries the
//! config hash and seed as `#key=value` header lines.

mod config;
mod study;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{haralick_features, run_baseline, BaselineMethod};
use crate::cluster::{cluster_surfaces, posterior_mean_surfaces, Dendrogram, KlReport, Partition};
use crate::error::{invalid, Error, Result};
use crate::glcm::{build_glcm, quantile_bins, BinSpec, CountMatrix};
use crate::io::{
    format_bins, format_count_matrix, format_dendrogram, format_partition, format_trace, metadata, read_bins,
    read_count_matrix, read_image, read_image_list, read_labels, read_surfaces, read_text, write_surfaces, write_text,
    CohortManifest, ManifestEntry,
};
use crate::lattice::{vectorize, LatticeGraph, LatticeMode};
use crate::metrics::{matching_matrix, misassignment_rate, pearson_chi2, MatchingMatrix};
use crate::sampler::{geweke_z, run_chain, subjects_from_counts, ChainTrace, Subject};
use crate::sim::{generate_cohort, SimCohort};

pub use config::{Profile, RunConfig, CONFIG_KEYS};
pub use study::{
    format_failures, format_long, format_summary, parse_long, replicate_seed, replicate_study, run_replicate,
    summarize, write_study, StudyFailure, StudyResult, StudyRow, SummaryRow,
};

/// Method name used for the model in result tables.
pub const MODEL_NAME: &str = "HRGSDP";

fn stamped(cfg: &RunConfig, extra: &[(&'static str, String)]) -> Vec<(&'static str, String)> {
    let mut meta = cfg.stamp();
    meta.extend_from_slice(extra);
    meta
}

/// Subjects ready for the sampler, with their source matrices.
#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub ids: Vec<String>,
    pub matrices: Vec<CountMatrix>,
    pub subjects: Vec<Subject>,
    pub graph: LatticeGraph,
    pub labels: Option<Vec<usize>>,
}

/// Vectorises matrices and attaches size factors and covariates. Without
/// explicit covariates each subject gets `x_t = [N_t]` (after an optional
/// intercept).
pub fn cohort_from_matrices(
    ids: Vec<String>,
    matrices: Vec<CountMatrix>,
    labels: Option<Vec<usize>>,
    covariates: Option<Vec<Vec<f64>>>,
    mode: LatticeMode,
    intercept: bool,
) -> Result<LoadedCohort> {
    let first = matrices.first().ok_or_else(|| invalid("empty cohort"))?;
    let k = first.levels();
    let mut graph = None;
    let mut counts = Vec::with_capacity(matrices.len());
    for (id, m) in ids.iter().zip(&matrices) {
        if m.levels() != k {
            return Err(Error::DimensionMismatch(format!("subject {id} has K = {}, expected {k}", m.levels())));
        }
        let (z, g) = vectorize(m, mode)?;
        graph.get_or_insert(g);
        counts.push(z);
    }
    let mut subjects = subjects_from_counts(&counts, intercept)?;
    if let Some(cov) = covariates {
        for (s, x) in subjects.iter_mut().zip(cov) {
            s.x = if intercept { std::iter::once(1.0).chain(x).collect() } else { x };
        }
    }
    Ok(LoadedCohort {
        ids,
        matrices,
        subjects,
        graph: graph.expect("nonempty cohort"),
        labels,
    })
}

/// Reads a manifest and every matrix it lists.
pub fn load_cohort(manifest_path: &Path, cfg: &RunConfig) -> Result<LoadedCohort> {
    let manifest = CohortManifest::read(manifest_path)?;
    let mut matrices = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let m = read_count_matrix(&e.path)?;
        if m.levels() != manifest.k {
            return Err(Error::DimensionMismatch(format!(
                "{}: K = {}, manifest says {}",
                e.path.display(),
                m.levels(),
                manifest.k
            )));
        }
        matrices.push(m);
    }
    let covariates = manifest
        .entries
        .first()
        .is_some_and(|e| !e.covariates.is_empty())
        .then(|| manifest.entries.iter().map(|e| e.covariates.clone()).collect());
    cohort_from_matrices(
        manifest.ids(),
        matrices,
        manifest.true_labels(),
        covariates,
        manifest.lattice,
        cfg.intercept,
    )
}

// ------------------------------------------------------------------ fit

/// Posterior summaries of one chain.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub trace: ChainTrace,
    pub surfaces: DMatrix<f64>,
    /// Geweke z per scalar series; `None` when too few draws were kept.
    pub geweke: Vec<(String, Option<f64>)>,
}

pub fn geweke_report(trace: &ChainTrace, cfg: &RunConfig) -> Vec<(String, Option<f64>)> {
    trace
        .series_names()
        .into_iter()
        .map(|name| {
            let series = trace.series(&name).unwrap_or_default();
            let z = geweke_z(&series, cfg.geweke.0, cfg.geweke.1).ok();
            (name, z)
        })
        .collect()
}

pub fn fit(cohort: &LoadedCohort, cfg: &RunConfig) -> Result<FitOutput> {
    let p = cohort.subjects[0].covariates();
    let hp = cfg.hyperparams(p);
    log::info!("fitting {} subjects on {} sites, {} sweeps", cohort.subjects.len(), cohort.graph.len(), hp.n_iter);
    let trace = run_chain(&cohort.subjects, &cohort.graph, &hp)?;
    let surfaces = posterior_mean_surfaces(&trace)?;
    let geweke = geweke_report(&trace, cfg);
    Ok(FitOutput { trace, surfaces, geweke })
}

pub fn format_geweke(report: &[(String, Option<f64>)], meta: &[(&str, String)]) -> String {
    let mut out: String = meta.iter().map(|(k, v)| format!("#{k}={v}\n")).collect();
    out.push_str("parameter,z,abs_z\n");
    for (name, z) in report {
        match z {
            Some(z) => {
                let _ = writeln!(out, "{name},{z},{}", z.abs());
            }
            None => {
                let _ = writeln!(out, "{name},NA,NA");
            }
        }
    }
    out
}

/// Paths written by [`fit_command`].
#[derive(Debug, Clone)]
pub struct FitArtifacts {
    pub trace: PathBuf,
    pub surfaces: PathBuf,
    pub geweke: PathBuf,
}

pub fn fit_command(manifest: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<(FitOutput, FitArtifacts)> {
    let cohort = load_cohort(manifest, cfg)?;
    let out = fit(&cohort, cfg)?;
    let meta = stamped(cfg, &[("subjects", cohort.ids.len().to_string()), ("sites", cohort.graph.len().to_string())]);
    let paths = FitArtifacts {
        trace: out_dir.join("trace.csv"),
        surfaces: out_dir.join(cfg.surface_format.file_name()),
        geweke: out_dir.join("geweke.csv"),
    };
    write_text(&paths.trace, &format_trace(&out.trace, &meta))?;
    write_surfaces(&paths.surfaces, cfg.surface_format, &cohort.ids, &out.surfaces, &meta)?;
    write_text(&paths.geweke, &format_geweke(&out.geweke, &meta))?;
    Ok((out, paths))
}

// ------------------------------------------------------------------ cluster

#[derive(Debug, Clone)]
pub struct ClusterOutput {
    pub partition: Partition,
    pub dendrogram: Dendrogram,
    pub report: KlReport,
}

/// Ward tree on the surfaces, cut at the KL rank unless `cfg.g` is set.
pub fn cluster(surfaces: &DMatrix<f64>, cfg: &RunConfig) -> Result<ClusterOutput> {
    let (partition, dendrogram, report) = cluster_surfaces(surfaces, cfg.g_max)?;
    let partition = match cfg.g {
        Some(g) => dendrogram.cut(g)?,
        None => partition,
    };
    Ok(ClusterOutput { partition, dendrogram, report })
}

pub fn format_kl_report(report: &KlReport, chosen: usize, meta: &[(&str, String)]) -> String {
    let mut out: String = meta.iter().map(|(k, v)| format!("#{k}={v}\n")).collect();
    let _ = writeln!(out, "#kl_rank={}\n#clusters={chosen}", report.rank);
    out.push_str("g,dispersion,kl\n");
    for (g, w) in report.dispersion.iter().enumerate().map(|(i, w)| (i + 1, w)) {
        let kl = report.statistics.iter().find(|(h, _)| *h == g).map_or_else(|| "NA".to_string(), |(_, v)| v.to_string());
        let _ = writeln!(out, "{g},{w},{kl}");
    }
    out
}

pub fn cluster_command(surfaces_path: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<(Vec<String>, ClusterOutput)> {
    let file = read_surfaces(surfaces_path)?;
    let out = cluster(&file.surfaces, cfg)?;
    let meta = stamped(cfg, &[("kl_rank", out.report.rank.to_string())]);
    write_text(&out_dir.join("partition.csv"), &format_partition(&file.ids, &out.partition, &meta))?;
    write_text(&out_dir.join("dendrogram.csv"), &format_dendrogram(&out.dendrogram, &meta))?;
    write_text(&out_dir.join("kl_rank.csv"), &format_kl_report(&out.report, out.partition.groups(), &cfg.stamp()))?;
    Ok((file.ids, out))
}

// ------------------------------------------------------------------ evaluate

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matching: MatchingMatrix,
    pub misassignment: f64,
    pub chi2: f64,
}

pub fn evaluate(truth: &[usize], predicted: &[usize]) -> Result<Evaluation> {
    let matching = matching_matrix(truth, predicted)?;
    Ok(Evaluation {
        misassignment: misassignment_rate(&matching)?,
        chi2: pearson_chi2(&matching)?,
        matching,
    })
}

/// Metric lines followed by the matching matrix (true class by row).
pub fn format_evaluation(ev: &Evaluation, meta: &[(&str, String)]) -> String {
    let mut out: String = meta.iter().map(|(k, v)| format!("#{k}={v}\n")).collect();
    let _ = writeln!(out, "#misassignment={}\n#chi2={}", ev.misassignment, ev.chi2);
    let m = &ev.matching;
    out.push_str("class");
    for c in m.col_labels() {
        let _ = write!(out, ",cluster {c}");
    }
    out.push('\n');
    for (i, r) in m.row_labels().iter().enumerate() {
        let _ = write!(out, "{r}");
        for j in 0..m.cols() {
            let _ = write!(out, ",{}", m.get(i, j));
        }
        out.push('\n');
    }
    out
}

/// Reads `misassignment` and `chi2` back from a metrics file.
pub fn read_metrics(path: &Path) -> Result<(f64, f64)> {
    let meta = metadata(&read_text(path)?);
    let get = |key: &str| -> Result<f64> {
        meta.iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| Error::parse(path, format!("missing {key}")))
    };
    Ok((get("misassignment")?, get("chi2")?))
}

/// True labels keyed by id from a manifest or an `id,label` file.
pub fn read_truth(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = read_text(path)?;
    if metadata(&text).iter().any(|(k, _)| k == "k") {
        let manifest = CohortManifest::parse(&text, path)?;
        manifest
            .entries
            .iter()
            .map(|e| {
                e.label
                    .map(|l| (e.id.clone(), l))
                    .ok_or_else(|| Error::parse(path, format!("subject {} has no label", e.id)))
            })
            .collect()
    } else {
        let (ids, labels) = read_labels(path)?;
        Ok(ids.into_iter().zip(labels).collect())
    }
}

/// Aligns a stored partition with true labels by subject id.
pub fn aligned_labels(partition_path: &Path, truth_path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let (ids, predicted) = read_labels(partition_path)?;
    let truth = read_truth(truth_path)?;
    let truth: Vec<usize> = ids
        .iter()
        .map(|id| {
            truth
                .iter()
                .find(|(t, _)| t == id)
                .map(|(_, l)| *l)
                .ok_or_else(|| Error::parse(truth_path, format!("no label for subject {id}")))
        })
        .collect::<Result<_>>()?;
    Ok((truth, predicted))
}

pub fn evaluate_command(partition_path: &Path, truth_path: &Path, out_path: &Path, cfg: &RunConfig) -> Result<Evaluation> {
    let (truth, predicted) = aligned_labels(partition_path, truth_path)?;
    let ev = evaluate(&truth, &predicted)?;
    let source = metadata(&read_text(partition_path)?)
        .into_iter()
        .find(|(k, _)| k == "config_hash")
        .map_or_else(|| "unknown".to_string(), |(_, v)| v);
    write_text(out_path, &format_evaluation(&ev, &stamped(cfg, &[("partition_config_hash", source)])))?;
    Ok(ev)
}

/// Counts of subjects by (row cluster, column cluster), optionally with how
/// many flagged subjects fall in each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossTable {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
    pub flagged: Option<Vec<Vec<u64>>>,
}

pub fn cross_table(rows: &[usize], cols: &[usize], flagged: Option<&[bool]>) -> Result<CrossTable> {
    if rows.len() != cols.len() || flagged.is_some_and(|f| f.len() != rows.len()) {
        return Err(Error::DimensionMismatch("cross-tabulated partitions differ in length".into()));
    }
    let distinct = |v: &[usize]| {
        let mut d = v.to_vec();
        d.sort_unstable();
        d.dedup();
        d
    };
    let (row_labels, col_labels) = (distinct(rows), distinct(cols));
    let idx = |labels: &[usize], l: usize| labels.binary_search(&l).expect("label present");
    let mut counts = vec![vec![0; col_labels.len()]; row_labels.len()];
    let mut marks = flagged.map(|_| counts.clone());
    for t in 0..rows.len() {
        let (i, j) = (idx(&row_labels, rows[t]), idx(&col_labels, cols[t]));
        counts[i][j] += 1;
        if let (Some(m), Some(f)) = (marks.as_mut(), flagged) {
            m[i][j] += u64::from(f[t]);
        }
    }
    Ok(CrossTable { row_labels, col_labels, counts, flagged: marks })
}

/// CSV with one row per row-cluster; cells read `n` or `n(flagged)`.
pub fn format_cross_table(t: &CrossTable, row_name: &str, col_name: &str, meta: &[(&str, String)]) -> String {
    let mut out: String = meta.iter().map(|(k, v)| format!("#{k}={v}\n")).collect();
    let _ = write!(out, "{row_name} \\ {col_name}");
    for c in &t.col_labels {
        let _ = write!(out, ",cluster {c}");
    }
    out.push('\n');
    for (i, r) in t.row_labels.iter().enumerate() {
        let _ = write!(out, "cluster {r}");
        for j in 0..t.col_labels.len() {
            match &t.flagged {
                Some(f) => {
                    let _ = write!(out, ",{}({})", t.counts[i][j], f[i][j]);
                }
                None => {
                    let _ = write!(out, ",{}", t.counts[i][j]);
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Cross-tabulates two stored partitions by subject id. With `flag`, subjects
/// whose true label equals `flag.1` are counted per cell.
pub fn crosstab_command(
    rows_path: &Path,
    cols_path: &Path,
    flag: Option<(&Path, usize)>,
    names: (&str, &str),
    out_path: &Path,
    cfg: &RunConfig,
) -> Result<CrossTable> {
    let (ids, rows) = read_labels(rows_path)?;
    let (col_ids, col_labels) = read_labels(cols_path)?;
    let lookup = |pairs: &[(String, usize)], id: &str, path: &Path| {
        pairs
            .iter()
            .find(|(t, _)| t == id)
            .map(|(_, l)| *l)
            .ok_or_else(|| Error::parse(path, format!("no label for subject {id}")))
    };
    let col_pairs: Vec<(String, usize)> = col_ids.into_iter().zip(col_labels).collect();
    let cols = ids.iter().map(|id| lookup(&col_pairs, id, cols_path)).collect::<Result<Vec<_>>>()?;
    let flagged = match flag {
        Some((truth_path, positive)) => {
            let truth = read_truth(truth_path)?;
            Some(
                ids.iter()
                    .map(|id| lookup(&truth, id, truth_path).map(|l| l == positive))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    let table = cross_table(&rows, &cols, flagged.as_deref())?;
    write_text(out_path, &format_cross_table(&table, names.0, names.1, &cfg.stamp()))?;
    Ok(table)
}

// ------------------------------------------------------------------ simulate / baseline / build-glcm

fn subject_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(3);
    (1..=n).map(|t| format!("s{t:0width$}")).collect()
}

/// Writes matrices plus a labelled manifest into `out_dir`.
pub fn write_cohort(
    out_dir: &Path,
    ids: &[String],
    matrices: &[CountMatrix],
    labels: Option<&[usize]>,
    lattice: LatticeMode,
    meta: &[(&'static str, String)],
) -> Result<CohortManifest> {
    let k = matrices.first().map_or(0, CountMatrix::levels);
    let mut entries = Vec::with_capacity(ids.len());
    for (t, (id, m)) in ids.iter().zip(matrices).enumerate() {
        let path = out_dir.join("matrices").join(format!("{id}.csv"));
        write_text(&path, &format_count_matrix(m))?;
        entries.push(ManifestEntry {
            id: id.clone(),
            path,
            label: labels.map(|l| l[t]),
            covariates: Vec::new(),
        });
    }
    let manifest = CohortManifest {
        k,
        lattice,
        entries,
        extra: meta.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    };
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

pub fn simulate_command(out_dir: &Path, cfg: &RunConfig) -> Result<SimCohort> {
    let mut sim = cfg.sim.clone();
    sim.seed = cfg.seed;
    let cohort = generate_cohort(&sim)?;
    let ids = subject_ids(cohort.matrices.len());
    write_cohort(out_dir, &ids, &cohort.matrices, Some(&cohort.labels), cfg.lattice, &stamped(cfg, &[("sim_s", sim.s.to_string())]))?;
    Ok(cohort)
}

/// Feature-based baseline partition with `cfg.baseline_g` clusters.
pub fn baseline_partition(matrices: &[CountMatrix], method: BaselineMethod, cfg: &RunConfig, seed: u64) -> Result<Partition> {
    let features = matrices.iter().map(haralick_features).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_baseline(method, &features, cfg.baseline_g, cfg.standardize, &mut rng)
}

pub fn baseline_command(manifest: &Path, method: BaselineMethod, out_path: &Path, cfg: &RunConfig) -> Result<Partition> {
    let cohort = load_cohort(manifest, cfg)?;
    let partition = baseline_partition(&cohort.matrices, method, cfg, cfg.seed)?;
    let meta = stamped(cfg, &[("method", method.name().to_string())]);
    write_text(out_path, &format_partition(&cohort.ids, &partition, &meta))?;
    Ok(partition)
}

/// Bins pooled over every ROI pixel of the listed images (or loaded from
/// `bins_path`), one GLCM per image, written with a manifest and the bins.
pub fn build_glcm_command(list_path: &Path, out_dir: &Path, bins_path: Option<&Path>, cfg: &RunConfig) -> Result<(CohortManifest, BinSpec)> {
    let list = read_image_list(list_path)?;
    let images = list
        .iter()
        .map(|e| read_image(&e.image, e.mask.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let bins = match bins_path {
        Some(p) => read_bins(p)?,
        None => {
            let pooled: Vec<f64> = images.iter().flat_map(|im| im.roi_values()).collect();
            quantile_bins(&pooled, cfg.levels, cfg.clip.0, cfg.clip.1)?
        }
    };
    let matrices = list
        .iter()
        .zip(&images)
        .map(|(e, im)| build_glcm(im, &bins, cfg.glcm).map_err(|err| invalid_image(&e.image, err)))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = list.iter().map(|e| e.id.clone()).collect();
    let labels: Option<Vec<usize>> = list.iter().map(|e| e.label).collect();
    let meta = cfg.stamp();
    write_text(&out_dir.join("bins.txt"), &format_bins(&bins, &meta))?;
    let manifest = write_cohort(out_dir, &ids, &matrices, labels.as_deref(), cfg.lattice, &meta)?;
    Ok((manifest, bins))
}

fn invalid_image(path: &Path, err: Error) -> Error {
    match err {
        Error::NoCooccurrences | Error::DegenerateRange => Error::parse(path, err.to_string()),
        other => other,
    }
}
