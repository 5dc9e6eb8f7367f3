//! The pipeline stages behind each subcommand.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use acnn::correspondence::{
    default_radii, format_curve, format_map, geodesic_errors, hard_assignment, parse_map, princeton_curve,
    refine_functional_map, EdgeGraph, DIAMETER_SOURCES,
};
use acnn::mesh::{generate, save_off};
use acnn::nn::{
    decode_checkpoint, encode_checkpoint, train as train_network, BatchNormStatistics, LayerSpec, ShapeInput,
    TrainConfig, TrainingSet, TrainingShape,
};
use acnn::patch::apply_patch_operator;
use acnn::spectral::{generalized_eig, hks, hks_time_grid, wks, wks_energy_grid};
use acnn::{Network, PatchOperators, PointMap};

use crate::cache::Cache;
use crate::config::{BatchNormMode, PipelineConfig};
use crate::descriptors::{format_matrix, write_matrix, MatrixFormat, Standardization};
use crate::error::user;
use crate::manifest::{read_sidecar, write_sidecar, Manifest, MapMeta};
use crate::shapes::{FeatureGrid, FeatureModel, Precompute, Shape};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const FEATURES_FILE: &str = "features.json";
pub const LOSS_FILE: &str = "loss.csv";

/// Largest patch tensor of the input descriptors kept in memory during
/// training, in entries.
const MAX_INPUT_PATCH_ENTRIES: usize = 50_000_000;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_map(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| user(format!("cannot read map {}: {e}", path.display())))?;
    parse_map(&text).with_context(|| format!("parsing map {}", path.display()))
}

fn manifest_for(command: &str, config: &PipelineConfig) -> Manifest {
    let mut m = Manifest::new(command);
    m.config_hash = Some(hex::encode(config.hash()));
    m.config = serde_json::to_value(config).ok();
    m
}

fn finish(mut manifest: Manifest, config: &PipelineConfig, cache: Option<&Cache>) -> Result<()> {
    manifest.cache = cache.map(Cache::stats);
    let path = manifest.write(&config.output_path("manifests"))?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}

fn statistics(mode: BatchNormMode) -> BatchNormStatistics {
    match mode {
        BatchNormMode::Training => BatchNormStatistics::Training,
        BatchNormMode::Test => BatchNormStatistics::Test,
    }
}

/// Every mesh named in the config, reference first, without duplicates.
fn all_meshes(config: &PipelineConfig) -> Vec<PathBuf> {
    let mut out = vec![config.resolve(&config.data.reference)];
    for e in config.data.train.iter().chain(&config.data.test) {
        let p = config.resolve(&e.mesh);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PrecomputeReport {
    pub shapes: usize,
    pub eigendecompositions: usize,
    pub rebuilt_corrupt: usize,
}

pub fn precompute(config: &PipelineConfig) -> Result<PrecomputeReport> {
    let cache = Cache::open(config.cache_path())?;
    let pre = Precompute::new(config, &cache);
    let mut manifest = manifest_for("precompute", config);
    let with_patches = config.architecture()?.has_ic();
    let meshes = all_meshes(config);
    for path in &meshes {
        let shape = manifest.time("load", || Shape::load(path))?;
        manifest.input(path)?;
        manifest
            .time("precompute", || pre.precompute(&shape, with_patches))
            .with_context(|| format!("precomputing {}", path.display()))?;
    }
    let stats = cache.stats();
    let report = PrecomputeReport {
        shapes: meshes.len(),
        eigendecompositions: stats.eigendecompositions,
        rebuilt_corrupt: stats.corrupt,
    };
    log::info!(
        "precomputed {} shapes with {} eigendecompositions",
        report.shapes,
        report.eigendecompositions
    );
    manifest.note("report", &report);
    finish(manifest, config, Some(&cache))?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Fraction of labeled training vertices whose argmax is the label.
    pub training_accuracy: f64,
}

struct Prepared {
    features: DMatrix<f64>,
    patches: Option<PatchOperators>,
    input_patches: Option<DMatrix<f64>>,
}

impl Prepared {
    fn input(&self) -> ShapeInput<'_, f64> {
        let mut input = ShapeInput::new(&self.features, self.patches.as_ref());
        input.input_patches = self.input_patches.as_ref();
        input
    }
}

fn prepare(
    features: DMatrix<f64>,
    pre: &Precompute<'_>,
    shape: &Shape,
    network_has_ic: bool,
    first_is_ic: bool,
) -> Result<Prepared> {
    let patches = if network_has_ic { Some(pre.patches(shape)?) } else { None };
    let input_patches = match &patches {
        Some(p) if first_is_ic && features.nrows() * p.bins() * features.ncols() <= MAX_INPUT_PATCH_ENTRIES => {
            Some(apply_patch_operator(p, &features)?)
        }
        _ => None,
    };
    Ok(Prepared {
        features,
        patches,
        input_patches,
    })
}

pub fn train(config: &PipelineConfig) -> Result<TrainReport> {
    let cache = Cache::open(config.cache_path())?;
    let pre = Precompute::new(config, &cache);
    let mut manifest = manifest_for("train", config);
    let architecture = config.architecture()?;
    if config.data.train.is_empty() {
        return Err(user("data.train lists no training shapes"));
    }

    let reference_path = config.resolve(&config.data.reference);
    let reference = Shape::load(&reference_path)?;
    manifest.input(&reference_path)?;
    let grid = manifest.time("descriptors", || FeatureGrid::from_reference(&pre, &reference))?;

    let mut shapes = Vec::new();
    let mut labels = Vec::new();
    for entry in &config.data.train {
        let mesh_path = config.resolve(&entry.mesh);
        let gt_path = entry
            .ground_truth
            .as_ref()
            .map(|p| config.resolve(p))
            .ok_or_else(|| user(format!("training shape {} has no ground_truth", mesh_path.display())))?;
        let shape = Shape::load(&mesh_path)?;
        let gt = read_map(&gt_path)?;
        if gt.len() != shape.n() {
            return Err(user(format!(
                "{} has {} entries for {} vertices",
                gt_path.display(),
                gt.len(),
                shape.n()
            )));
        }
        if let Some(&bad) = gt.iter().find(|&&y| y >= reference.n()) {
            return Err(user(format!(
                "{}: index {bad} outside {} reference vertices",
                gt_path.display(),
                reference.n()
            )));
        }
        check_sidecar(&gt_path, &shape, &reference)?;
        manifest.input(&mesh_path)?;
        manifest.input(&gt_path)?;
        labels.push(gt.into_iter().enumerate().collect::<Vec<_>>());
        shapes.push(shape);
    }

    let raw = manifest.time("descriptors", || {
        shapes.iter().map(|s| grid.compute(&pre, s)).collect::<Result<Vec<_>>>()
    })?;
    let standardization = Standardization::fit(raw.iter())?;
    let model = FeatureModel { grid, standardization };
    let first_is_ic = matches!(architecture.layers().first(), Some(LayerSpec::Ic { .. }));
    let prepared = manifest.time("precompute", || {
        shapes
            .iter()
            .zip(raw)
            .map(|(s, r)| prepare(model.standardization.apply(&r)?, &pre, s, architecture.has_ic(), first_is_ic))
            .collect::<Result<Vec<_>>>()
    })?;

    let input_dim = prepared[0].features.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::new(
        architecture,
        input_dim,
        reference.n(),
        config.operators.orientations,
        config.operators.scales.len(),
        &mut rng,
    )?;
    let set = TrainingSet {
        shapes: prepared
            .iter()
            .zip(&labels)
            .map(|(p, l)| TrainingShape {
                input: p.input(),
                labels: l.clone(),
            })
            .collect(),
        reference_size: reference.n(),
    };
    let train_config = TrainConfig {
        steps: config.training.steps,
        batch_size: config.training.batch_size,
        adam: config.adam(),
        final_lr_fraction: config.training.final_lr_fraction,
        seed: config.seed.wrapping_add(1),
    };
    let every = (config.training.steps / 20).max(1);
    let history = manifest.time("train", || {
        train_network(&mut network, &set, &train_config, |step, loss| {
            if step % every == 0 || step + 1 == config.training.steps {
                log::info!("step {step}: loss {loss:.4}");
            }
        })
    })?;

    let stats = statistics(config.network.batchnorm_statistics);
    let (mut correct, mut total) = (0usize, 0usize);
    for (shape, l) in set.shapes.iter().zip(&labels) {
        let map = hard_assignment(&network.predict(&shape.input, stats)?);
        correct += l.iter().filter(|&&(x, y)| map.assignment[x] == y).count();
        total += l.len();
    }

    let checkpoint = config.output_path(CHECKPOINT_FILE);
    write(&checkpoint, encode_checkpoint(&network, &config.hash()))?;
    let features_path = config.output_path(FEATURES_FILE);
    model.save(&features_path)?;
    let loss_csv = config.output_path(LOSS_FILE);
    let mut csv = String::from("step,loss\n");
    for (i, l) in history.iter().enumerate() {
        csv.push_str(&format!("{i},{l:?}\n"));
    }
    write(&loss_csv, csv)?;
    for p in [&checkpoint, &features_path, &loss_csv] {
        manifest.output(p)?;
    }

    let report = TrainReport {
        checkpoint,
        loss_csv,
        initial_loss: history.first().copied().unwrap_or(f64::NAN),
        final_loss: history.last().copied().unwrap_or(f64::NAN),
        training_accuracy: correct as f64 / total.max(1) as f64,
    };
    log::info!(
        "loss {:.4} -> {:.4}, training accuracy {:.4}",
        report.initial_loss,
        report.final_loss,
        report.training_accuracy
    );
    manifest.note("report", &report);
    finish(manifest, config, Some(&cache))?;
    Ok(report)
}

/// Rejects `path` if its sidecar names other meshes than `query` and `reference`.
fn check_sidecar(path: &Path, query: &Shape, reference: &Shape) -> Result<()> {
    if let Some(meta) = read_sidecar(path)? {
        if meta.query_mesh != query.hash_hex() || meta.reference_mesh != reference.hash_hex() {
            return Err(user(format!(
                "{} was produced for different meshes than {} and {} (mesh hash mismatch)",
                path.display(),
                query.path.display(),
                reference.path.display()
            )));
        }
    }
    Ok(())
}

fn maps_dir(config: &PipelineConfig) -> PathBuf {
    config.output_path("maps")
}

fn test_meshes(config: &PipelineConfig) -> Vec<PathBuf> {
    config.data.test.iter().map(|e| config.resolve(&e.mesh)).collect()
}

fn write_point_map(map_path: &Path, map: &PointMap, meta: &MapMeta) -> Result<()> {
    write(map_path, format_map(&map.assignment))?;
    let mut conf = String::with_capacity(map.len() * 20);
    for c in &map.confidence {
        conf.push_str(&format!("{c:?}\n"));
    }
    write(&map_path.with_extension("confidence"), conf)?;
    write_sidecar(map_path, meta)
}

fn read_point_map(map_path: &Path) -> Result<PointMap> {
    let assignment = read_map(map_path)?;
    let conf_path = map_path.with_extension("confidence");
    match std::fs::read_to_string(&conf_path) {
        Ok(text) => {
            let confidence = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| {
                    l.trim()
                        .parse::<f64>()
                        .map_err(|_| user(format!("{} line {}: not a number", conf_path.display(), i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            if confidence.len() != assignment.len() {
                return Err(user(format!("{} does not match its map", conf_path.display())));
            }
            Ok(PointMap { assignment, confidence })
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(PointMap::certain(assignment)),
        Err(e) => Err(e).with_context(|| format!("reading {}", conf_path.display())),
    }
}

/// Runs the network on each query mesh (default: the test set) and writes
/// `maps/<stem>.map`, its confidences, optionally the soft correspondence,
/// and a provenance sidecar. Returns the map paths.
pub fn infer(config: &PipelineConfig, checkpoint: Option<&Path>, queries: &[PathBuf], soft: bool) -> Result<Vec<PathBuf>> {
    let checkpoint = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output_path(CHECKPOINT_FILE));
    if !checkpoint.is_file() {
        return Err(user(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let cache = Cache::open(config.cache_path())?;
    let pre = Precompute::new(config, &cache);
    let mut manifest = manifest_for("infer", config);
    let bytes = std::fs::read(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let (network, producer_hash): (Network, _) =
        decode_checkpoint(&bytes).with_context(|| format!("decoding {}", checkpoint.display()))?;
    manifest.input(&checkpoint)?;
    if producer_hash != config.hash() {
        log::warn!("{} was trained with a different configuration", checkpoint.display());
    }
    let features_path = checkpoint.with_file_name(FEATURES_FILE);
    let model = FeatureModel::load(&features_path)?;
    manifest.input(&features_path)?;

    let reference_path = config.resolve(&config.data.reference);
    let reference = Shape::load(&reference_path)?;
    manifest.input(&reference_path)?;
    if network.output_dim() != reference.n() {
        return Err(user(format!(
            "checkpoint predicts {} reference vertices, {} has {}",
            network.output_dim(),
            reference_path.display(),
            reference.n()
        )));
    }
    if network.architecture().has_ic()
        && (network.orientations() != config.operators.orientations || network.scales() != config.operators.scales.len())
    {
        return Err(user("checkpoint orientations or scales differ from the operator settings"));
    }

    let queries = if queries.is_empty() { test_meshes(config) } else { queries.to_vec() };
    if queries.is_empty() {
        return Err(user("no query meshes given and data.test is empty"));
    }
    let first_is_ic = matches!(network.architecture().layers().first(), Some(LayerSpec::Ic { .. }));
    let mut written = Vec::new();
    for path in &queries {
        let shape = Shape::load(path)?;
        manifest.input(path)?;
        let features = manifest.time("descriptors", || model.features(&pre, &shape))?;
        if features.ncols() != network.input_dim() {
            return Err(user(format!(
                "{} descriptors per vertex, the network expects {}",
                features.ncols(),
                network.input_dim()
            )));
        }
        let prepared = manifest.time("precompute", || {
            prepare(features, &pre, &shape, network.architecture().has_ic(), first_is_ic)
        })?;
        let probabilities = manifest.time("forward", || {
            network.predict(&prepared.input(), statistics(config.network.batchnorm_statistics))
        })?;
        let map = hard_assignment(&probabilities);
        let map_path = maps_dir(config).join(format!("{}.map", shape.stem()));
        let meta = MapMeta {
            producer: "infer".into(),
            config_hash: Some(hex::encode(producer_hash)),
            query_mesh: shape.hash_hex(),
            reference_mesh: reference.hash_hex(),
        };
        write_point_map(&map_path, &map, &meta)?;
        manifest.output(&map_path)?;
        if soft {
            let soft_path = map_path.with_extension("soft.bin");
            write_matrix(&soft_path, &probabilities, MatrixFormat::Binary)?;
            manifest.output(&soft_path)?;
        }
        log::info!("{} -> {}", path.display(), map_path.display());
        written.push(map_path);
    }
    finish(manifest, config, Some(&cache))?;
    Ok(written)
}

/// Default `(map, query mesh)` pairs: the inferred maps of the test set.
pub fn default_map_jobs(config: &PipelineConfig, suffix: &str) -> Vec<(PathBuf, PathBuf)> {
    test_meshes(config)
        .into_iter()
        .map(|mesh| {
            let stem = mesh.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            (maps_dir(config).join(format!("{stem}{suffix}.map")), mesh)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineReport {
    pub map: PathBuf,
    pub refined: PathBuf,
    pub selected: usize,
}

/// Functional-map refinement of each `(map, query mesh)` pair, written to
/// `maps/<map stem>.refined.map`.
pub fn refine(config: &PipelineConfig, jobs: &[(PathBuf, PathBuf)]) -> Result<Vec<RefineReport>> {
    let cache = Cache::open(config.cache_path())?;
    let pre = Precompute::new(config, &cache);
    let mut manifest = manifest_for("refine", config);
    let reference_path = config.resolve(&config.data.reference);
    let reference = Shape::load(&reference_path)?;
    manifest.input(&reference_path)?;
    let reference_basis = manifest.time("bases", || pre.descriptor_basis(&reference))?;
    let jobs = if jobs.is_empty() { default_map_jobs(config, "") } else { jobs.to_vec() };
    let mut reports = Vec::new();
    for (map_path, query_path) in &jobs {
        let shape = Shape::load(query_path)?;
        manifest.input(query_path)?;
        manifest.input(map_path)?;
        check_sidecar(map_path, &shape, &reference)?;
        let map = read_point_map(map_path)?;
        if map.len() != shape.n() || map.assignment.iter().any(|&y| y >= reference.n()) {
            return Err(user(format!("{} does not fit {}", map_path.display(), query_path.display())));
        }
        let basis = manifest.time("bases", || pre.descriptor_basis(&shape))?;
        let result = manifest
            .time("refine", || {
                refine_functional_map(&map, &basis, &reference_basis, config.refinement.threshold, config.refinement.k)
            })
            .with_context(|| format!("refining {}", map_path.display()))?;
        let stem = map_path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let refined = maps_dir(config).join(format!("{stem}.refined.map"));
        let meta = MapMeta {
            producer: "refine".into(),
            config_hash: Some(hex::encode(config.hash())),
            query_mesh: shape.hash_hex(),
            reference_mesh: reference.hash_hex(),
        };
        write_point_map(&refined, &result.map, &meta)?;
        write(&refined.with_extension("fmap"), format_matrix(&result.functional_map))?;
        manifest.output(&refined)?;
        log::info!("{} -> {} ({} confident points)", map_path.display(), refined.display(), result.selected);
        reports.push(RefineReport {
            map: map_path.clone(),
            refined,
            selected: result.selected,
        });
    }
    manifest.note("reports", &reports);
    finish(manifest, config, Some(&cache))?;
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct EvalJob {
    pub map: PathBuf,
    pub ground_truth: PathBuf,
    pub query: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub map: PathBuf,
    pub curve: PathBuf,
    pub vertices: usize,
    pub fraction_exact: f64,
    /// Mean geodesic error as a fraction of the reference diameter.
    pub mean_error: f64,
    pub diameter: f64,
    pub symmetric: bool,
}

/// Test-set jobs for maps with the given suffix (`""` or `".refined"`).
pub fn default_eval_jobs(config: &PipelineConfig, suffix: &str) -> Result<Vec<EvalJob>> {
    config
        .data
        .test
        .iter()
        .map(|e| {
            let query = config.resolve(&e.mesh);
            let ground_truth = e
                .ground_truth
                .as_ref()
                .map(|p| config.resolve(p))
                .ok_or_else(|| user(format!("test shape {} has no ground_truth", query.display())))?;
            let stem = query.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(EvalJob {
                map: maps_dir(config).join(format!("{stem}{suffix}.map")),
                ground_truth,
                query,
            })
        })
        .collect()
}

/// Princeton curves and summaries, written to `eval/<map stem>.curve.csv`
/// and `eval/<map stem>.summary.json`.
pub fn eval(config: &PipelineConfig, jobs: &[EvalJob]) -> Result<Vec<EvalSummary>> {
    let mut manifest = manifest_for("eval", config);
    let reference_path = config.resolve(&config.data.reference);
    let reference = Shape::load(&reference_path)?;
    manifest.input(&reference_path)?;
    let jobs = if jobs.is_empty() { default_eval_jobs(config, "")? } else { jobs.to_vec() };
    if jobs.is_empty() {
        return Err(user("nothing to evaluate: no maps given and data.test is empty"));
    }
    let symmetry = match (&config.data.symmetry, config.evaluation.symmetric) {
        (Some(p), true) => {
            let p = config.resolve(p);
            manifest.input(&p)?;
            Some(read_map(&p)?)
        }
        _ => None,
    };
    let graph = EdgeGraph::from_mesh(&reference.mesh);
    let diameter = manifest.time("diameter", || graph.diameter(DIAMETER_SOURCES));
    let radii = default_radii(config.evaluation.max_radius, config.evaluation.radii);
    let mut summaries = Vec::new();
    for job in &jobs {
        let shape = Shape::load(&job.query)?;
        for p in [&job.query, &job.map, &job.ground_truth] {
            manifest.input(p)?;
        }
        check_sidecar(&job.map, &shape, &reference)?;
        check_sidecar(&job.ground_truth, &shape, &reference)?;
        let pred = read_map(&job.map)?;
        let truth = read_map(&job.ground_truth)?;
        if pred.len() != shape.n() || truth.len() != shape.n() {
            return Err(user(format!(
                "{} and {} must both have one entry per vertex of {}",
                job.map.display(),
                job.ground_truth.display(),
                job.query.display()
            )));
        }
        let errors = manifest
            .time("geodesics", || geodesic_errors(&graph, &pred, &truth, symmetry.as_deref()))
            .map_err(|e| user(format!("{}: {e}", job.map.display())))?;
        let curve = princeton_curve(&errors, &radii, diameter)?;
        let stem = job.map.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let curve_path = config.output_path("eval").join(format!("{stem}.curve.csv"));
        write(&curve_path, format_curve(&radii, &curve))?;
        let summary = EvalSummary {
            map: job.map.clone(),
            curve: curve_path.clone(),
            vertices: errors.len(),
            fraction_exact: errors.iter().filter(|&&e| e == 0.0).count() as f64 / errors.len() as f64,
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64 / diameter,
            diameter,
            symmetric: symmetry.is_some(),
        };
        let summary_path = config.output_path("eval").join(format!("{stem}.summary.json"));
        write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
        manifest.output(&curve_path)?;
        manifest.output(&summary_path)?;
        log::info!(
            "{}: {:.2}% exact, mean error {:.4} of the diameter",
            job.map.display(),
            100.0 * summary.fraction_exact,
            summary.mean_error
        );
        summaries.push(summary);
    }
    manifest.note("summaries", &summaries);
    finish(manifest, config, None)?;
    Ok(summaries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralDescriptor {
    Hks,
    Wks,
}

/// HKS or WKS of a single mesh from its isotropic spectrum.
pub fn descriptors(
    mesh: &Path,
    kind: SpectralDescriptor,
    count: usize,
    eigen_count: usize,
    output: &Path,
    format: MatrixFormat,
) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(user("descriptor count must be positive"));
    }
    let mut manifest = Manifest::new("descriptors");
    let shape = Shape::load(mesh)?;
    manifest.input(mesh)?;
    let op = acnn::Operator {
        stiffness: acnn::laplacian::cotangent_stiffness(&shape.mesh, &shape.topology)?,
        mass: shape.mass.clone(),
        params: acnn::laplacian::AnisoParams::isotropic(),
    };
    let basis = manifest.time("eigen", || generalized_eig(&op, eigen_count.min(shape.n())))?;
    let m = match kind {
        SpectralDescriptor::Hks => hks(&basis, &hks_time_grid(&basis, count)),
        SpectralDescriptor::Wks => {
            let (energies, variance) = wks_energy_grid(&basis, count);
            wks(&basis, &energies, variance)
        }
    };
    if let Some(dir) = output.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_matrix(output, &m, format)?;
    manifest.output(output)?;
    manifest.write(output.parent().unwrap_or(Path::new(".")))?;
    Ok(m)
}

/// Files written by [`synth`], relative to its output directory.
pub const SYNTH_CONFIG: &str = "acnn.toml";

/// Writes the synthetic pair, its ground truth and an example config.
pub fn synth(seed: u64, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let pair = generate::synthetic_pair::<f64>(seed);
    let reference_path = dir.join("reference.off");
    let query_path = dir.join("query.off");
    save_off(&pair.reference, &reference_path)?;
    save_off(&pair.query, &query_path)?;
    let reference = Shape::load(&reference_path)?;
    let query = Shape::load(&query_path)?;
    let identity: Vec<usize> = (0..reference.n()).collect();
    for (name, map, shape) in [
        ("query.gt.map", &pair.ground_truth, &query),
        ("reference.gt.map", &identity, &reference),
    ] {
        let path = dir.join(name);
        write(&path, format_map(map))?;
        write_sidecar(
            &path,
            &MapMeta {
                producer: "synth".into(),
                config_hash: None,
                query_mesh: shape.hash_hex(),
                reference_mesh: reference.hash_hex(),
            },
        )?;
    }
    let config = format!(
        "\
seed = {seed}
cache_dir = \"cache\"
output_dir = \"out\"

[data]
reference = \"reference.off\"

[[data.train]]
mesh = \"query.off\"
ground_truth = \"query.gt.map\"

[[data.test]]
mesh = \"query.off\"
ground_truth = \"query.gt.map\"

[operators]
alpha = 100.0
orientations = 8

[descriptors]
kind = \"hks\"
count = 16

[network]
architecture = \"IC16+FC64+Softmax\"

[training]
steps = 500
batch_size = 500
learning_rate = 0.01
final_lr_fraction = 0.1
"
    );
    let config_path = dir.join(SYNTH_CONFIG);
    write(&config_path, config)?;
    Ok(config_path)
}
