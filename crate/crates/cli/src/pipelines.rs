//! One function per subcommand. Every pipeline writes its artifacts under
//! the output directory and returns the list of files it produced; the
//! caller records them in the run manifest.

use crate::config::{GammaSpec, RunConfig};
use anyhow::{anyhow, bail, Context, Result};
use setsim_core::analysis::{
    aggregate_fold_pvalues, auc_roc, concordance_index, export_distances, km_curve, logrank, spearman,
    ward_cluster, wilcoxon_signed_rank_greater, AucBin,
};
use setsim_core::bags::{DatasetManifest, EmbeddingBag};
use setsim_core::Dataset;
use setsim_core::explain::{
    representative_patches, select_extreme_per_patient, Candidate, ExtremeMode, SensitivityEngine,
};
use setsim_core::fusion::{align, combine, load_topic_profiles, topic_kernel, FusionMode};
use setsim_core::machines::{
    cross_validate, train_model, tune_on_carve, CvConfig, GammaRule, GridPoint, SurvivalRecord, TaskKind,
    TaskLabels,
};
use setsim_core::matrix::{DistanceMatrix, KernelMatrix, SquareMatrix};
use setsim_core::mmd::{pairwise_distances, to_kernel, PatchKernelParams};
use setsim_core::Model;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

type Files = Vec<PathBuf>;

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}

/// `kernel`: bags -> pairwise squared-MMD distance matrix.
pub fn kernel(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<Files> {
    let dataset: Dataset = Dataset::load(manifest)?;
    let params = PatchKernelParams::new(cfg.sigma)?;
    let distances = pairwise_distances(&dataset.bags, &params, cfg.tile, cfg.threads)?;
    let path = out.join("distances.smm");
    distances.write(&path, &format!("pairwise({})", manifest.display()))?;
    Ok(vec![path.clone(), meta_of(&path)])
}

fn meta_of(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// `transform`: distance matrix -> similarity kernel.
pub fn transform(cfg: &RunConfig, dist: &Path, out: &Path) -> Result<Files> {
    let distances: DistanceMatrix<f64> = DistanceMatrix::load(dist)?;
    let gamma = cfg.gamma.resolve(&distances);
    let kernel = to_kernel(&distances, gamma)?;
    let path = out.join("kernel.smm");
    kernel.write(&path)?;
    Ok(vec![path.clone(), meta_of(&path)])
}

/// Patient / site / label columns for every kernel id, in kernel order.
struct KernelSidecarColumns {
    patients: Vec<String>,
    sites: Option<Vec<String>>,
    labels: Option<Vec<Option<String>>>,
}

fn kernel_columns(
    kernel: &KernelMatrix<f64>,
    manifest: &DatasetManifest,
    label_column: Option<&str>,
    site_column: Option<&str>,
) -> Result<KernelSidecarColumns> {
    let mut patients = Vec::with_capacity(kernel.n());
    let mut sites = site_column.map(|_| Vec::with_capacity(kernel.n()));
    let mut labels = label_column.map(|_| Vec::with_capacity(kernel.n()));
    for id in &kernel.ids {
        let row = manifest
            .rows
            .iter()
            .find(|r| &r.id == id)
            .ok_or_else(|| anyhow!("kernel id '{id}' is missing from the manifest"))?;
        patients.push(row.patient_id.clone());
        if let (Some(sites), Some(col)) = (sites.as_mut(), site_column) {
            let site = row
                .labels
                .get(col)
                .ok_or_else(|| anyhow!("bag '{id}' has no value in site column '{col}'"))?;
            sites.push(site.clone());
        }
        if let (Some(labels), Some(col)) = (labels.as_mut(), label_column) {
            labels.push(row.labels.get(col).cloned());
        }
    }
    Ok(KernelSidecarColumns { patients, sites, labels })
}

/// `retrieve`: top-k neighbors for one query or for every bag.
pub fn retrieve(
    cfg: &RunConfig,
    kernel_path: &Path,
    manifest_path: &Path,
    query: Option<&str>,
    label_column: Option<&str>,
    site_column: Option<&str>,
    out: &Path,
) -> Result<Files> {
    let kernel: KernelMatrix<f64> = KernelMatrix::load(kernel_path)?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let columns = kernel_columns(&kernel, &manifest, label_column, site_column)?;
    let queries: Vec<String> = match query {
        Some(q) => vec![q.to_string()],
        None => kernel.ids.clone(),
    };

    let path = out.join("retrieval.csv");
    let mut writer = csv_writer(&path)?;
    writer.write_record(["query_id", "rank", "neighbor_id", "similarity", "neighbor_label"])?;
    for q in &queries {
        let result =
            setsim_core::retrieval::query_top_k(&kernel, &columns.patients, columns.sites.as_deref(), q, cfg.k)?;
        for (rank, (neighbor, similarity)) in result.neighbors.iter().enumerate() {
            let label = columns
                .labels
                .as_ref()
                .and_then(|l| l[kernel.index_of(neighbor).unwrap()].clone())
                .unwrap_or_default();
            writer.write_record([
                q.as_str(),
                &(rank + 1).to_string(),
                neighbor,
                &format!("{similarity}"),
                &label,
            ])?;
        }
    }
    writer.flush()?;
    Ok(vec![path])
}

/// `eval-retrieval`: majority-vote accuracy at k over the whole matrix.
pub fn eval_retrieval(
    cfg: &RunConfig,
    kernel_path: &Path,
    manifest_path: &Path,
    label_column: &str,
    site_column: Option<&str>,
    out: &Path,
) -> Result<Files> {
    let kernel: KernelMatrix<f64> = KernelMatrix::load(kernel_path)?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let columns = kernel_columns(&kernel, &manifest, Some(label_column), site_column)?;
    let labels = columns.labels.clone().expect("label column requested");
    let report =
        setsim_core::retrieval::mmv_at_k(&kernel, &columns.patients, columns.sites.as_deref(), &labels, cfg.k)?;

    let per_query_path = out.join("retrieval_hits.csv");
    let mut writer = csv_writer(&per_query_path)?;
    writer.write_record(["query_id", "label", "hit"])?;
    for (i, (id, hit)) in report.per_query.iter().enumerate() {
        writer.write_record([id.as_str(), labels[i].as_deref().unwrap_or(""), if *hit { "1" } else { "0" }])?;
    }
    writer.flush()?;

    let summary_path = out.join("mmv_summary.csv");
    let mut writer = csv_writer(&summary_path)?;
    writer.write_record(["scope", "label", "n_queries", "mmv_at_k"])?;
    for (label, (n, pct)) in &report.per_label {
        writer.write_record(["label", label, &n.to_string(), &format!("{pct}")])?;
    }
    writer.write_record(["macro", "", &report.per_query.len().to_string(), &format!("{}", report.macro_average)])?;
    writer.write_record(["micro", "", &report.per_query.len().to_string(), &format!("{}", report.overall)])?;
    writer.flush()?;
    Ok(vec![per_query_path, summary_path])
}

/// Columns used by `fit` to extract survival labels.
pub struct SurvivalColumns<'a> {
    pub time: &'a str,
    pub event: &'a str,
}

/// Eligible samples (present labels) for a task, aligned to distance ids.
fn eligible_labels(
    d: &DistanceMatrix<f64>,
    manifest: &DatasetManifest,
    task: TaskKind,
    label_column: Option<&str>,
    survival: Option<&SurvivalColumns<'_>>,
    t_censor: f64,
) -> Result<(Vec<usize>, Vec<String>, TaskLabels<f64>)> {
    let mut indices = Vec::new();
    let mut patients = Vec::new();
    let mut svr = Vec::new();
    let mut svc = Vec::new();
    let mut surv = Vec::new();
    for (i, id) in d.ids.iter().enumerate() {
        let row = manifest
            .rows
            .iter()
            .find(|r| &r.id == id)
            .ok_or_else(|| anyhow!("distance id '{id}' is missing from the manifest"))?;
        match task {
            TaskKind::Svr | TaskKind::Svc => {
                let col = label_column.ok_or_else(|| anyhow!("--label-column is required for this task"))?;
                let Some(raw) = row.labels.get(col) else { continue };
                match task {
                    TaskKind::Svr => {
                        let value: f64 =
                            raw.parse().with_context(|| format!("bag '{id}': non-numeric target '{raw}'"))?;
                        svr.push(value);
                    }
                    TaskKind::Svc => {
                        let label = match raw.as_str() {
                            "1" | "+1" => 1i8,
                            "0" | "-1" => -1i8,
                            other => bail!("bag '{id}': classification label must be 0/1 or -1/+1, got '{other}'"),
                        };
                        svc.push(label);
                    }
                    TaskKind::Survival => unreachable!(),
                }
            }
            TaskKind::Survival => {
                let cols = survival.ok_or_else(|| anyhow!("survival fitting needs time/event columns"))?;
                let (Some(t), Some(e)) = (row.labels.get(cols.time), row.labels.get(cols.event)) else {
                    continue;
                };
                let time: f64 = t.parse().with_context(|| format!("bag '{id}': non-numeric time '{t}'"))?;
                let event = match e.as_str() {
                    "1" => true,
                    "0" => false,
                    other => bail!("bag '{id}': event indicator must be 0 or 1, got '{other}'"),
                };
                surv.push(SurvivalRecord::new(row.patient_id.clone(), time, event)?.truncated(t_censor));
            }
        }
        indices.push(i);
        patients.push(row.patient_id.clone());
    }
    let labels = match task {
        TaskKind::Svr => TaskLabels::Svr(svr),
        TaskKind::Svc => TaskLabels::Svc(svc),
        TaskKind::Survival => TaskLabels::Survival(surv),
    };
    if labels.is_empty() {
        bail!("no sample carries the labels required by this task");
    }
    Ok((indices, patients, labels))
}

/// Hyperparameter search space for `fit`, shaped by explicit overrides.
pub struct FitOverrides {
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<GammaSpec>,
    pub tune_alpha: bool,
}

fn fit_grid(cfg: &RunConfig, task: TaskKind, over: &FitOverrides) -> Vec<GridPoint> {
    let mut grid = match task {
        TaskKind::Survival => {
            if over.tune_alpha {
                GridPoint::alpha_sweep()
            } else {
                vec![GridPoint {
                    c: 0.0,
                    epsilon: 0.0,
                    alpha: over.alpha.unwrap_or(cfg.alpha),
                    gamma: GammaRule::MedianTimes(1.0),
                }]
            }
        }
        _ => GridPoint::default_grid(task),
    };
    if let Some(c) = over.c {
        for p in &mut grid {
            p.c = c;
        }
    }
    if let Some(eps) = over.epsilon {
        for p in &mut grid {
            p.epsilon = eps;
        }
    }
    if let Some(alpha) = over.alpha {
        for p in &mut grid {
            p.alpha = alpha;
        }
    }
    if let Some(gamma) = over.gamma {
        for p in &mut grid {
            p.gamma = gamma.rule();
        }
    }
    grid.dedup_by(|a, b| a == b);
    grid
}

/// `fit`: cross-validated evaluation plus a final model on all eligible
/// samples.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    cfg: &RunConfig,
    task: TaskKind,
    dist: &Path,
    manifest_path: &Path,
    label_column: Option<&str>,
    survival_columns: Option<SurvivalColumns<'_>>,
    overrides: FitOverrides,
    out: &Path,
) -> Result<Files> {
    let distances: DistanceMatrix<f64> = DistanceMatrix::load(dist)?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let (indices, patients, labels) = eligible_labels(
        &distances,
        &manifest,
        task,
        label_column,
        survival_columns.as_ref(),
        cfg.t_censor_years,
    )?;
    let d = distances.select(&indices);

    let mut cv = CvConfig::new(task, cfg.folds, cfg.val_frac, cfg.seed);
    cv.grid = fit_grid(cfg, task, &overrides);
    let results = cross_validate(&d, &patients, &labels, &cv)?;

    let folds_path = out.join("folds.csv");
    let mut writer = csv_writer(&folds_path)?;
    writer.write_record(["fold", "metric", "value", "C", "epsilon", "alpha", "gamma"])?;
    for fold in &results.folds {
        writer.write_record([
            fold.fold.to_string(),
            results.metric_name.to_string(),
            format!("{}", fold.metric),
            format!("{}", fold.chosen.c),
            format!("{}", fold.chosen.epsilon),
            format!("{}", fold.chosen.alpha),
            format!("{}", fold.gamma),
        ])?;
    }
    writer.flush()?;

    let preds_path = out.join("predictions.csv");
    let mut writer = csv_writer(&preds_path)?;
    writer.write_record(["fold", "id", "prediction"])?;
    for fold in &results.folds {
        for (id, p) in fold.test_ids.iter().zip(&fold.predictions) {
            writer.write_record([fold.fold.to_string(), id.clone(), format!("{p}")])?;
        }
    }
    writer.flush()?;

    let mut metrics = serde_json::json!({
        "task": task.to_string(),
        "metric": results.metric_name,
        "mean": results.mean,
        "sd": results.sd,
        "folds": results.folds.iter().map(|f| f.metric).collect::<Vec<_>>(),
    });
    if matches!(task, TaskKind::Svc) {
        metrics["bin"] = serde_json::json!(AucBin::from_auc(results.mean).to_string());
    }
    let metrics_path = out.join("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;

    // Final deployable model: tune once on a validation carve of everything,
    // then refit on all eligible samples.
    let chosen = tune_on_carve(&d, &patients, &labels, &cv)?;
    let all: Vec<usize> = (0..d.n()).collect();
    let model = train_model(&d, &labels, &all, &chosen)?;
    let model_path = out.join("model.json");
    model.save(&model_path)?;

    Ok(vec![folds_path, preds_path, metrics_path, model_path])
}

/// `predict`: scores every id of a kernel against a saved model.
pub fn predict(model_path: &Path, kernel_path: &Path, out: &Path) -> Result<Files> {
    let model: Model = Model::load(model_path)?;
    let kernel: KernelMatrix<f64> = KernelMatrix::load(kernel_path)?;
    model.check_kernel(&kernel.fingerprint())?;
    let train_idx: Vec<usize> = model
        .train_ids
        .iter()
        .map(|id| {
            kernel
                .index_of(id)
                .ok_or_else(|| anyhow!("training id '{id}' is missing from the kernel"))
        })
        .collect::<Result<_>>()?;
    let queries: Vec<usize> = (0..kernel.n()).collect();
    let rect = kernel.matrix().select_rect(&train_idx, &queries);
    let scores = model.predict(&rect, queries.len())?;

    let path = out.join("predictions.csv");
    let mut writer = csv_writer(&path)?;
    writer.write_record(["id", "score"])?;
    for (id, s) in kernel.ids.iter().zip(&scores) {
        writer.write_record([id.as_str(), &format!("{s}")])?;
    }
    writer.flush()?;
    Ok(vec![path])
}

/// Optional per-patch grid coordinates, resolved through a manifest column
/// holding a CSV path with `x,y` rows.
fn load_coords(manifest_path: &Path, row: &setsim_core::bags::ManifestRow, n: usize) -> Result<Option<Vec<(f64, f64)>>> {
    let Some(rel) = row.labels.get("coords") else {
        return Ok(None);
    };
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let path = if Path::new(rel).is_absolute() { PathBuf::from(rel) } else { base.join(rel) };
    let mut reader = csv::Reader::from_path(&path)?;
    let mut coords = Vec::new();
    for record in reader.records() {
        let record = record?;
        let x: f64 = record.get(0).unwrap_or("").parse().context("bad x coordinate")?;
        let y: f64 = record.get(1).unwrap_or("").parse().context("bad y coordinate")?;
        coords.push((x, y));
    }
    if coords.len() != n {
        bail!("coordinates file {} lists {} patches, bag has {n}", path.display(), coords.len());
    }
    Ok(Some(coords))
}

/// `explain`: per-patch sensitivity of one query bag under a saved model.
pub fn explain(
    cfg: &RunConfig,
    model_path: &Path,
    manifest_path: &Path,
    query: &str,
    out: &Path,
) -> Result<Files> {
    let model: Model = Model::load(model_path)?;
    let dataset: Dataset = Dataset::load(manifest_path)?;
    let sigma = model.kernel.sigma.ok_or_else(|| anyhow!("model fingerprint lacks sigma"))?;
    let gamma = model.kernel.gamma.ok_or_else(|| anyhow!("model fingerprint lacks gamma"))?;
    let params = PatchKernelParams::new(sigma)?;

    let find_bag = |id: &str| -> Result<&EmbeddingBag<f64>> {
        dataset
            .bags
            .iter()
            .find(|b| b.id == id)
            .ok_or_else(|| anyhow!("bag '{id}' is missing from the manifest"))
    };
    let train_bags: Vec<EmbeddingBag<f64>> =
        model.train_ids.iter().map(|id| find_bag(id).cloned()).collect::<Result<_>>()?;
    let query_bag = find_bag(query)?;

    let engine = SensitivityEngine::new(&model, &train_bags, params, gamma, cfg.tile, cfg.threads)?;
    let map = engine.explain(query_bag)?;

    let row = dataset.manifest.rows.iter().find(|r| r.id == query).expect("bag came from manifest");
    let coords = load_coords(manifest_path, row, query_bag.len())?;

    let path = out.join(format!("{query}.sensitivity.csv"));
    let mut writer = csv_writer(&path)?;
    match coords {
        Some(_) => writer.write_record(["bag_id", "patch_index", "delta", "normalized", "x", "y"])?,
        None => writer.write_record(["bag_id", "patch_index", "delta", "normalized"])?,
    }
    for j in 0..map.deltas.len() {
        let mut record = vec![
            map.bag_id.clone(),
            j.to_string(),
            format!("{}", map.deltas[j]),
            format!("{}", map.normalized[j]),
        ];
        if let Some(c) = &coords {
            record.push(format!("{}", c[j].0));
            record.push(format!("{}", c[j].1));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(vec![path])
}

/// `medoids`: representative patches from per-bag sensitivity scores.
pub fn medoids(
    cfg: &RunConfig,
    manifest_path: &Path,
    scores_dir: &Path,
    mode: ExtremeMode,
    out: &Path,
) -> Result<Files> {
    let dataset: Dataset = Dataset::load(manifest_path)?;
    let mut candidates: Vec<Candidate<f64>> = Vec::new();
    for bag in &dataset.bags {
        let scores_path = scores_dir.join(format!("{}.sensitivity.csv", bag.id));
        if !scores_path.exists() {
            continue;
        }
        let mut reader = csv::Reader::from_path(&scores_path)?;
        let headers = reader.headers()?.clone();
        let delta_col = headers
            .iter()
            .position(|h| h == "delta")
            .ok_or_else(|| anyhow!("{} lacks a delta column", scores_path.display()))?;
        let mut deltas = Vec::new();
        for record in reader.records() {
            let record = record?;
            let d: f64 = record.get(delta_col).unwrap_or("").parse().context("bad delta value")?;
            deltas.push(d);
        }
        if deltas.len() != bag.len() {
            bail!(
                "{} lists {} patches, bag '{}' has {}",
                scores_path.display(),
                deltas.len(),
                bag.id,
                bag.len()
            );
        }
        for (j, &score) in deltas.iter().enumerate() {
            candidates.push(Candidate {
                id: format!("{}:{j}", bag.id),
                patient_id: bag.patient_id.clone(),
                score,
                vector: bag.row(j).to_vec(),
            });
        }
    }
    if candidates.is_empty() {
        bail!("no sensitivity files found under {}", scores_dir.display());
    }

    let extremes = select_extreme_per_patient(&candidates, mode, cfg.seed);
    let pool: Vec<Candidate<f64>> = extremes.iter().map(|&i| candidates[i].clone()).collect();
    let medoid_idx = representative_patches(&pool, cfg.medoid_k)?;

    let path = out.join("medoids.csv");
    let mut writer = csv_writer(&path)?;
    writer.write_record(["patch_id", "patient", "score"])?;
    for &i in &medoid_idx {
        writer.write_record([pool[i].id.as_str(), pool[i].patient_id.as_str(), &format!("{}", pool[i].score)])?;
    }
    writer.flush()?;
    Ok(vec![path])
}

/// `topics`: binary topic profiles -> RBF kernel.
pub fn topics(cfg: &RunConfig, topics_csv: &Path, out: &Path) -> Result<Files> {
    let profiles = load_topic_profiles(topics_csv)?;
    let kernel = topic_kernel(&profiles, cfg.sigma)?;
    let path = out.join("topic_kernel.smm");
    kernel.write(&path)?;
    Ok(vec![path.clone(), meta_of(&path)])
}

/// `fuse`: aligned unweighted combination of two or more kernels.
pub fn fuse(cfg: &RunConfig, kernel_paths: &[PathBuf], mode: FusionMode, out: &Path) -> Result<Files> {
    if kernel_paths.len() < 2 {
        bail!("fusing needs at least two --kernel inputs");
    }
    let loaded: Vec<KernelMatrix<f64>> =
        kernel_paths.iter().map(KernelMatrix::load).collect::<setsim_core::Result<_>>()?;
    let aligned = align(&loaded)?;
    let fused = combine(&aligned, mode, cfg.rescale_sum)?;
    let path = out.join("fused.smm");
    fused.write(&path)?;
    Ok(vec![path.clone(), meta_of(&path)])
}

/// `cluster`: Ward dendrogram over `1 - K`, plus flat labels at a cut.
pub fn cluster(
    cfg: &RunConfig,
    dist: Option<&Path>,
    kernel_path: Option<&Path>,
    clusters: usize,
    out: &Path,
) -> Result<Files> {
    let kernel: KernelMatrix<f64> = match (dist, kernel_path) {
        (Some(d), None) => {
            let distances: DistanceMatrix<f64> = DistanceMatrix::load(d)?;
            let gamma = cfg.gamma.resolve(&distances);
            to_kernel(&distances, gamma)?
        }
        (None, Some(k)) => KernelMatrix::load(k)?,
        _ => bail!("cluster needs exactly one of --dist or --kernel"),
    };
    let n = kernel.n();
    let mut dissimilarity = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dissimilarity.set(i, j, 1.0 - kernel.get(i, j));
            }
        }
    }
    let dendrogram = ward_cluster(&dissimilarity)?;
    let labels = dendrogram.cut(clusters)?;

    let dendro_path = out.join("dendrogram.csv");
    let mut writer = csv_writer(&dendro_path)?;
    writer.write_record(["step", "left", "right", "height", "size"])?;
    for (step, merge) in dendrogram.merges.iter().enumerate() {
        writer.write_record([
            step.to_string(),
            merge.left.to_string(),
            merge.right.to_string(),
            format!("{}", merge.height),
            merge.size.to_string(),
        ])?;
    }
    writer.flush()?;

    let labels_path = out.join("labels.csv");
    let mut writer = csv_writer(&labels_path)?;
    writer.write_record(["id", "cluster"])?;
    for (id, label) in kernel.ids.iter().zip(&labels) {
        writer.write_record([id.as_str(), &label.to_string()])?;
    }
    writer.flush()?;
    Ok(vec![dendro_path, labels_path])
}

/// `export`: distance matrix as square CSV plus embedding-settings sidecar.
pub fn export(dist: &Path, out: &Path) -> Result<Files> {
    let distances: DistanceMatrix<f64> = DistanceMatrix::load(dist)?;
    let path = out.join("distances.csv");
    export_distances(&distances, &path)?;
    Ok(vec![path.clone(), meta_of(&path)])
}

/// Which statistic `stats` computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsMetric {
    Spearman,
    Auc,
    Cindex,
    Wilcoxon,
    Logrank,
    Km,
    AggregateP,
}

impl std::str::FromStr for StatsMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "spearman" => Ok(StatsMetric::Spearman),
            "auc" => Ok(StatsMetric::Auc),
            "cindex" => Ok(StatsMetric::Cindex),
            "wilcoxon" => Ok(StatsMetric::Wilcoxon),
            "logrank" => Ok(StatsMetric::Logrank),
            "km" => Ok(StatsMetric::Km),
            "aggregate-p" => Ok(StatsMetric::AggregateP),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

/// Column names for `stats`.
pub struct StatsColumns<'a> {
    pub col_a: Option<&'a str>,
    pub col_b: Option<&'a str>,
    pub time: &'a str,
    pub event: &'a str,
    pub group: Option<&'a str>,
    pub risk: Option<&'a str>,
}

fn read_column(path: &Path, column: &str) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| anyhow!("{} lacks a '{column}' column", path.display()))?;
    let mut values = Vec::new();
    for record in reader.records() {
        values.push(record?.get(idx).unwrap_or("").to_string());
    }
    Ok(values)
}

fn numeric_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    read_column(path, column)?
        .iter()
        .map(|v| v.parse::<f64>().with_context(|| format!("non-numeric value '{v}' in column '{column}'")))
        .collect()
}

fn survival_records(path: &Path, cols: &StatsColumns<'_>) -> Result<Vec<SurvivalRecord>> {
    let times = numeric_column(path, cols.time)?;
    let events = read_column(path, cols.event)?;
    times
        .iter()
        .zip(&events)
        .enumerate()
        .map(|(i, (&t, e))| {
            let event = match e.as_str() {
                "1" => true,
                "0" => false,
                other => bail!("row {i}: event must be 0 or 1, got '{other}'"),
            };
            Ok(SurvivalRecord::new(format!("r{i}"), t, event)?)
        })
        .collect()
}

/// `stats`: one named statistic over CSV columns.
pub fn stats(metric: StatsMetric, input: &Path, cols: &StatsColumns<'_>, out: &Path) -> Result<Files> {
    let mut rows: Vec<BTreeMap<String, serde_json::Value>> = Vec::new();
    let mut extra_files: Files = Vec::new();
    let need = |opt: Option<&str>, flag: &str| -> Result<String> {
        opt.map(str::to_string).ok_or_else(|| anyhow!("--{flag} is required for this metric"))
    };
    match metric {
        StatsMetric::Spearman => {
            let a = numeric_column(input, &need(cols.col_a, "col-a")?)?;
            let b = numeric_column(input, &need(cols.col_b, "col-b")?)?;
            let (rho, p) = spearman(&a, &b)?;
            rows.push(BTreeMap::from([
                ("metric".into(), "spearman".into()),
                ("value".into(), serde_json::json!(rho)),
                ("p_value".into(), serde_json::json!(p)),
            ]));
        }
        StatsMetric::Auc => {
            let labels: Vec<u8> = read_column(input, &need(cols.col_a, "col-a")?)?
                .iter()
                .map(|v| match v.as_str() {
                    "1" | "+1" => Ok(1u8),
                    "0" | "-1" => Ok(0u8),
                    other => bail!("AUC labels must be binary, got '{other}'"),
                })
                .collect::<Result<_>>()?;
            let scores = numeric_column(input, &need(cols.col_b, "col-b")?)?;
            let (auc, bin) = auc_roc(&labels, &scores)?;
            rows.push(BTreeMap::from([
                ("metric".into(), "auc".into()),
                ("value".into(), serde_json::json!(auc)),
                ("bin".into(), serde_json::json!(bin.to_string())),
            ]));
        }
        StatsMetric::Cindex => {
            let records = survival_records(input, cols)?;
            let risks = numeric_column(input, &need(cols.risk, "risk-column")?)?;
            let c = concordance_index(&records, &risks)?;
            rows.push(BTreeMap::from([
                ("metric".into(), "cindex".into()),
                ("value".into(), serde_json::json!(c)),
            ]));
        }
        StatsMetric::Wilcoxon => {
            let a = numeric_column(input, &need(cols.col_a, "col-a")?)?;
            let b = numeric_column(input, &need(cols.col_b, "col-b")?)?;
            let p = wilcoxon_signed_rank_greater(&a, &b)?;
            rows.push(BTreeMap::from([
                ("metric".into(), "wilcoxon_one_sided_p".into()),
                ("value".into(), serde_json::json!(p)),
            ]));
        }
        StatsMetric::Logrank => {
            let records = survival_records(input, cols)?;
            let groups = read_column(input, &need(cols.group, "group-column")?)?;
            let (a, b) = split_two_groups(&records, &groups)?;
            let (statistic, p) = logrank(&a, &b)?;
            rows.push(BTreeMap::from([
                ("metric".into(), "logrank".into()),
                ("statistic".into(), serde_json::json!(statistic)),
                ("value".into(), serde_json::json!(p)),
            ]));
        }
        StatsMetric::Km => {
            let records = survival_records(input, cols)?;
            let groups = read_column(input, &need(cols.group, "group-column")?)?;
            let mut names: Vec<String> = groups.clone();
            names.sort();
            names.dedup();
            let km_path = out.join("km_curves.csv");
            let mut writer = csv_writer(&km_path)?;
            writer.write_record(["group", "time", "survival", "at_risk"])?;
            for name in &names {
                let members: Vec<SurvivalRecord> = records
                    .iter()
                    .zip(&groups)
                    .filter(|(_, g)| *g == name)
                    .map(|(r, _)| r.clone())
                    .collect();
                let curve = km_curve(&members, name.clone())?;
                for i in 0..curve.times.len() {
                    writer.write_record([
                        name.clone(),
                        format!("{}", curve.times[i]),
                        format!("{}", curve.survival[i]),
                        curve.at_risk[i].to_string(),
                    ])?;
                }
                rows.push(BTreeMap::from([
                    ("metric".into(), "km_final_survival".into()),
                    ("group".into(), serde_json::json!(name)),
                    ("value".into(), serde_json::json!(curve.survival.last().copied().unwrap_or(1.0))),
                ]));
            }
            writer.flush()?;
            extra_files.push(km_path);
        }
        StatsMetric::AggregateP => {
            let ps = numeric_column(input, &need(cols.col_a, "col-a")?)?;
            let aggregated = aggregate_fold_pvalues(&ps)?;
            rows.push(BTreeMap::from([
                ("metric".into(), "aggregated_p".into()),
                ("value".into(), serde_json::json!(aggregated)),
            ]));
        }
    }

    let stats_path = out.join("stats.json");
    std::fs::write(&stats_path, serde_json::to_string_pretty(&rows)?)?;
    let mut files = vec![stats_path];
    files.extend(extra_files);
    Ok(files)
}

fn split_two_groups(
    records: &[SurvivalRecord],
    groups: &[String],
) -> Result<(Vec<SurvivalRecord>, Vec<SurvivalRecord>)> {
    let mut names: Vec<&String> = groups.iter().collect();
    names.sort();
    names.dedup();
    if names.len() != 2 {
        bail!("log-rank needs exactly two groups, found {}", names.len());
    }
    let pick = |name: &str| -> Vec<SurvivalRecord> {
        records
            .iter()
            .zip(groups)
            .filter(|(_, g)| g.as_str() == name)
            .map(|(r, _)| r.clone())
            .collect()
    };
    Ok((pick(names[0]), pick(names[1])))
}
