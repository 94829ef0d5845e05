use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dua_core::analysis::{
    dimension_sweep, kde_1d, kde_csv, kde_grid, noise_robustness_sweep, scott_bandwidth,
    uncertainty_split, Group, SweepConfig, SweepResult, DEFAULT_DIMS, DEFAULT_ETAS,
    DEFAULT_GRID_POINTS,
};
use dua_core::data::{
    generate_synthetic, inject_noise, load_labels, load_manifest, save_dataset, write_matrix_csv,
    zscore_normalize, MultiViewDataset, NoiseSpec, SplitRatio, SyntheticSpec,
};
use dua_core::eval::{evaluate_classification, evaluate_clustering, MetricReport};
use dua_core::model::{extract_sigma, Objective};
use dua_core::numerics::Rng;
use dua_core::trainer::{
    checkpoint_load, checkpoint_save, write_loss_csv, TrainConfig, TrainState,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{env_seed, resolve, Overrides};
use crate::output::{RunDir, MANIFEST_FILE};
use crate::{
    ClassifyArgs, CliError, ClusterArgs, DimSweepArgs, KdeArgs, ModelFlags, NoiseStudyArgs,
    SweepData,
};
use crate::{SynthArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn model_flags(flags: &mut Overrides, m: &ModelFlags, prefix: &'static str) {
    // Paths must be 'static; spell out both prefixes.
    macro_rules! set {
        ($field:literal, $value:expr) => {
            match prefix {
                "train" => flags.set(concat!("train.", $field), $value),
                _ => flags.set(concat!("sweep.train.", $field), $value),
            }
        };
    }
    set!("latent_dim", m.latent_dim);
    set!("epochs", m.epochs);
    set!("lr", m.lr);
    set!("latent_lr", m.latent_lr);
    set!("warm_up_epochs", m.warm_up);
    set!("window", m.window);
    set!("tolerance", m.tolerance);
    set!("init_scale", m.init_scale);
    set!("regularizer", m.regularizer.clone());
}

fn seed_fallback(path: &'static str) -> Result<Option<(&'static str, Value)>> {
    Ok(env_seed()?.map(|s| (path, Value::from(s))))
}

fn prepare(data: MultiViewDataset, normalize: bool) -> Result<MultiViewDataset> {
    Ok(if normalize {
        zscore_normalize(&data)?
    } else {
        data
    })
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthRun {
    spec: SyntheticSpec,
}

pub fn synth(a: SynthArgs) -> Result<PathBuf> {
    let mut flags = Overrides::default();
    flags.set("spec.seed", a.seed);
    flags.set("spec.n", a.n);
    flags.set("spec.clusters", a.clusters);
    flags.set("spec.latent_dim", a.latent_dim);
    flags.set("spec.view_widths", a.widths);
    flags.set("spec.separation", a.separation);
    flags.set("spec.nonlinearity", a.nonlinearity);
    flags.set("spec.feature_noise", a.feature_noise);
    let run: SynthRun = resolve(
        a.common.config.as_deref(),
        flags,
        seed_fallback("spec.seed")?,
    )?;

    let mut out = RunDir::create(&a.common.out, "synth")?;
    if let Some(c) = &a.common.config {
        out.hash_input(c)?;
    }
    let data = generate_synthetic(&run.spec, &mut Rng::new(run.spec.seed))?;
    save_dataset(&data, &a.common.out)?;
    for name in data.names() {
        out.record(&format!("{name}.csv"));
    }
    out.record("labels.csv");
    out.record("dataset.json");
    out.finish(Value::from(run.spec.seed), &run)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainRun {
    train: TrainConfig,
    /// Z-score every feature before training.
    normalize: bool,
    noise: Option<NoiseSpec>,
}

impl Default for TrainRun {
    fn default() -> Self {
        TrainRun {
            train: TrainConfig::default(),
            normalize: true,
            noise: None,
        }
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

pub fn train(a: TrainArgs) -> Result<PathBuf> {
    let mut flags = Overrides::default();
    flags.set("train.seed", a.seed);
    flags.set("train.objective", a.objective.clone());
    model_flags(&mut flags, &a.model, "train");
    if a.no_normalize {
        flags.set("normalize", Some(false));
    }
    flags.set("noise.eta", a.noise_eta);
    flags.set("noise.view", a.noise_view);
    flags.set("noise.fraction", a.noise_fraction);
    flags.set("noise.seed", a.noise_seed);
    let mut run: TrainRun = resolve(
        a.common.config.as_deref(),
        flags,
        seed_fallback("train.seed")?,
    )?;
    run.train = run.train.resolved();
    run.train.validate()?;

    let mut out = RunDir::create(&a.common.out, "train")?;
    if let Some(c) = &a.common.config {
        out.hash_input(c)?;
    }
    out.hash_dataset(&a.data)?;
    let mut data = prepare(load_manifest(&a.data)?, run.normalize)?;
    if let Some(spec) = &run.noise {
        let (noisy, polluted) = inject_noise(&data, spec)?;
        data = noisy;
        let mut csv = String::new();
        for i in &polluted {
            let _ = writeln!(csv, "{i}");
        }
        out.write("polluted.csv", &csv)?;
    }

    let state = dua_core::trainer::train(&data, &run.train)?;
    log::info!(
        "trained {} epochs, final loss {:?}",
        state.epoch,
        state.final_loss()
    );
    checkpoint_save(&state, &out.path(CHECKPOINT_FILE))?;
    out.record(CHECKPOINT_FILE);
    write_loss_csv(&out.path("loss.csv"), &state.history)?;
    out.record("loss.csv");
    write_matrix_csv(&out.path("latent.csv"), &state.latent.h)?;
    out.record("latent.csv");
    out.finish(Value::from(run.train.seed), &run)
}

// ---------------------------------------------------------------- evaluation

/// Labels from `--labels`, else from the `--data` manifest; either way the
/// count must match the checkpoint.
fn eval_labels(
    out: &mut RunDir,
    labels: Option<&Path>,
    data: Option<&Path>,
    n: usize,
) -> Result<Vec<usize>> {
    let labels = match (labels, data) {
        (Some(path), _) => {
            out.hash_input(path)?;
            load_labels(path)?
        }
        (None, Some(manifest)) => {
            out.hash_dataset(manifest)?;
            load_manifest(manifest)?
                .labels()
                .map(<[usize]>::to_vec)
                .ok_or_else(|| {
                    CliError::data(format!("{} lists no labels file", manifest.display()))
                })?
        }
        (None, None) => return Err(CliError::data(
            "ground-truth labels are required: pass --labels FILE or a --data manifest with labels",
        )),
    };
    if labels.len() != n {
        return Err(CliError::data(format!(
            "{} labels for a checkpoint with {n} samples",
            labels.len()
        )));
    }
    Ok(labels)
}

fn load_checkpoint(out: &mut RunDir, path: &Path) -> Result<TrainState> {
    out.hash_input(path)?;
    Ok(checkpoint_load(path)?)
}

/// The feature policy of the training run, read from the manifest `train`
/// leaves next to its checkpoint.
fn training_normalization(checkpoint: &Path) -> String {
    let manifest = checkpoint.with_file_name(MANIFEST_FILE);
    fs::read_to_string(manifest)
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v.pointer("/config/normalize").and_then(Value::as_bool))
        .map_or("unknown", |z| if z { "zscore_population" } else { "none" })
        .to_string()
}

fn write_report(out: &mut RunDir, stem: &str, report: &MetricReport) -> Result<()> {
    out.write(&format!("{stem}_report.csv"), &report.to_csv())?;
    out.write(&format!("{stem}_runs.csv"), &report.raw_csv())?;
    out.write(&format!("{stem}_report.json"), &report.to_json())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClusterRun {
    seed: u64,
    runs: usize,
    restarts: usize,
}

impl Default for ClusterRun {
    fn default() -> Self {
        ClusterRun {
            seed: 0,
            runs: dua_core::eval::DEFAULT_RUNS,
            restarts: 10,
        }
    }
}

pub fn cluster(a: ClusterArgs) -> Result<PathBuf> {
    let mut flags = Overrides::default();
    flags.set("seed", a.seed);
    flags.set("runs", a.runs);
    flags.set("restarts", a.restarts);
    let run: ClusterRun = resolve(a.common.config.as_deref(), flags, seed_fallback("seed")?)?;

    let mut out = RunDir::create(&a.common.out, "cluster")?;
    if let Some(c) = &a.common.config {
        out.hash_input(c)?;
    }
    let state = load_checkpoint(&mut out, &a.inputs.checkpoint)?;
    let labels = eval_labels(
        &mut out,
        a.inputs.labels.as_deref(),
        a.inputs.data.as_deref(),
        state.latent.n_samples(),
    )?;
    let mut report =
        evaluate_clustering(&state.latent.h, &labels, run.runs, run.restarts, run.seed)?;
    report.settings.insert(
        "feature_normalization".into(),
        training_normalization(&a.inputs.checkpoint),
    );
    write_report(&mut out, "cluster", &report)?;
    out.finish(Value::from(run.seed), &run)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClassifyRun {
    seed: u64,
    runs: usize,
    k: usize,
    splits: Vec<String>,
}

impl Default for ClassifyRun {
    fn default() -> Self {
        ClassifyRun {
            seed: 0,
            runs: dua_core::eval::DEFAULT_RUNS,
            k: 1,
            splits: SplitRatio::STANDARD_RATIOS
                .iter()
                .map(ToString::to_string)
                .collect(),
        }
    }
}

pub fn classify(a: ClassifyArgs) -> Result<PathBuf> {
    let mut flags = Overrides::default();
    flags.set("seed", a.seed);
    flags.set("runs", a.runs);
    flags.set("k", a.k);
    flags.set("splits", a.splits.clone());
    let run: ClassifyRun = resolve(a.common.config.as_deref(), flags, seed_fallback("seed")?)?;
    let ratios = run
        .splits
        .iter()
        .map(|s| s.parse::<SplitRatio>().map_err(CliError::from))
        .collect::<Result<Vec<_>>>()?;

    let mut out = RunDir::create(&a.common.out, "classify")?;
    if let Some(c) = &a.common.config {
        out.hash_input(c)?;
    }
    let state = load_checkpoint(&mut out, &a.inputs.checkpoint)?;
    let labels = eval_labels(
        &mut out,
        a.inputs.labels.as_deref(),
        a.inputs.data.as_deref(),
        state.latent.n_samples(),
    )?;
    let mut report =
        evaluate_classification(&state.latent.h, &labels, &ratios, run.runs, run.k, run.seed)?;
    report.settings.insert(
        "feature_normalization".into(),
        training_normalization(&a.inputs.checkpoint),
    );
    write_report(&mut out, "classify", &report)?;
    out.finish(Value::from(run.seed), &run)
}

// ---------------------------------------------------------------- kde

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct KdeRun {
    view: usize,
    log_scale: bool,
}

#[derive(Serialize)]
struct KdeSummary {
    view: usize,
    log_scale: bool,
    groups: BTreeMap<&'static str, GroupSummary>,
}

#[derive(Serialize)]
struct GroupSummary {
    count: usize,
    mean: f64,
    bandwidth: f64,
}

pub fn kde(a: KdeArgs) -> Result<PathBuf> {
    let mut flags = Overrides::default();
    flags.set("view", a.view);
    if a.log_scale {
        flags.set("log_scale", Some(true));
    }
    let run: KdeRun = resolve(a.common.config.as_deref(), flags, None)?;

    let mut out = RunDir::create(&a.common.out, "kde")?;
    if let Some(c) = &a.common.config {
        out.hash_input(c)?;
    }
    let state = load_checkpoint(&mut out, &a.checkpoint)?;
    let sigma = extract_sigma(&state.predictions()?);
    if run.view >= sigma.cols() {
        return Err(CliError::config(format!(
            "view {} does not exist; the checkpoint has {} views",
            run.view,
            sigma.cols()
        )));
    }

    let mut groups = BTreeMap::new();
    let curves = match &a.polluted {
        Some(path) => {
            out.hash_input(path)?;
            let polluted = load_labels(path)?;
            let study = uncertainty_split(&sigma, &polluted, run.view, run.log_scale)?;
            for c in [&study.clean, &study.noisy] {
                let (count, mean) = match c.group {
                    Group::Clean => (study.n_clean, study.mean_clean),
                    _ => (study.n_noisy, study.mean_noisy),
                };
                groups.insert(
                    c.group.name(),
                    GroupSummary {
                        count,
                        mean,
                        bandwidth: c.bandwidth,
                    },
                );
            }
            vec![study.clean, study.noisy]
        }
        None => {
            let values: Vec<f64> = sigma
                .column_values(run.view)
                .into_iter()
                .map(|s| if run.log_scale { s.ln() } else { s })
                .collect();
            let h = scott_bandwidth(&values)?;
            let curve = kde_1d(
                &values,
                &kde_grid(&values, h, DEFAULT_GRID_POINTS),
                Group::All,
            )?;
            groups.insert(
                "all",
                GroupSummary {
                    count: values.len(),
                    mean: values.iter().sum::<f64>() / values.len() as f64,
                    bandwidth: h,
                },
            );
            vec![curve]
        }
    };
    out.write("kde.csv", &kde_csv(&curves))?;
    let summary = KdeSummary {
        view: run.view,
        log_scale: run.log_scale,
        groups,
    };
    out.write(
        "kde_summary.json",
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    out.finish(Value::Null, &run)
}

// ---------------------------------------------------------------- sweeps

fn sweep_flags(flags: &mut Overrides, s: &SweepData, m: &ModelFlags) {
    flags.set("sweep.seeds", s.seeds.clone());
    flags.set("sweep.eval_runs", s.eval_runs);
    flags.set("sweep.kmeans_restarts", s.restarts);
    if s.no_normalize {
        flags.set("normalize", Some(false));
    }
    model_flags(flags, m, "sweep");
}

fn sweep_seeds() -> Result<Option<(&'static str, Value)>> {
    Ok(env_seed()?.map(|s| ("sweep.seeds", Value::from(vec![s, s + 1, s + 2]))))
}

fn sweep_data(
    out: &mut RunDir,
    source: &SweepData,
    synthetic: &mut Option<SyntheticSpec>,
    normalize: bool,
) -> Result<MultiViewDataset> {
    let raw =
        match (&source.data, source.synthetic || synthetic.is_some()) {
            (Some(path), _) => {
                *synthetic = None;
                out.hash_dataset(path)?;
                load_manifest(path)?
            }
            (None, true) => {
                let spec = synthetic.get_or_insert_with(SyntheticSpec::default);
                generate_synthetic(spec, &mut Rng::new(spec.seed))?
            }
            (None, false) => return Err(CliError::config(
                "no data: pass --data FILE, --synthetic, or a \"synthetic\" section in --config",
            )),
        };
    prepare(raw, normalize)
}

fn write_sweep(out: &mut RunDir, result: &SweepResult) -> Result<()> {
    out.write("sweep.csv", &result.to_csv())?;
    out.write(
        "sweep.json",
        &serde_json::to_string_pretty(result).expect("sweep serializes"),
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct NoiseStudyRun {
    sweep: SweepConfig,
    etas: Vec<f64>,
    variants: Vec<Objective>,
    normalize: bool,
    synthetic: Option<SyntheticSpec>,
}

impl Default for NoiseStudyRun {
    fn default() -> Self {
        NoiseStudyRun {
            sweep: SweepConfig::default(),
            etas: DEFAULT_ETAS.to_vec(),
            variants: vec![Objective::Dua, Objective::Rnets],
            normalize: true,
            synthetic: None,
        }
    }
}

pub fn noise_study(a: NoiseStudyArgs) -> Result<PathBuf> {
    let mut flags = Overrides::default();
    sweep_flags(&mut flags, &a.source, &a.model);
    flags.set("etas", a.eta.clone());
    flags.set("variants", a.variants.clone());
    flags.set("sweep.noise_view", a.noise_view);
    flags.set("sweep.noise_fraction", a.fraction);
    let mut run: NoiseStudyRun = resolve(a.common.config.as_deref(), flags, sweep_seeds()?)?;
    // The robustness comparison is relative to the noise-free model.
    if !run.etas.contains(&0.0) {
        run.etas.insert(0, 0.0);
    }
    run.sweep.train = run.sweep.train.resolved();

    let mut out = RunDir::create(&a.common.out, "noise-study")?;
    if let Some(c) = &a.common.config {
        out.hash_input(c)?;
    }
    let data = sweep_data(&mut out, &a.source, &mut run.synthetic, run.normalize)?;
    let result = noise_robustness_sweep(&data, &run.etas, &run.variants, &run.sweep)?;
    write_sweep(&mut out, &result)?;
    out.write("sigma.csv", &result.sigma_csv())?;
    for cell in result.cells.iter().filter(|c| c.value > 0.0) {
        if let Some(study) = cell.sigma_studies.first() {
            let curves = [study.clean.clone(), study.noisy.clone()];
            out.write(&format!("kde_eta_{}.csv", cell.value), &kde_csv(&curves))?;
        }
    }
    out.finish(Value::from(run.sweep.seeds.clone()), &run)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DimSweepRun {
    sweep: SweepConfig,
    dims: Vec<usize>,
    normalize: bool,
    synthetic: Option<SyntheticSpec>,
}

impl Default for DimSweepRun {
    fn default() -> Self {
        DimSweepRun {
            sweep: SweepConfig::default(),
            dims: DEFAULT_DIMS.to_vec(),
            normalize: true,
            synthetic: None,
        }
    }
}

pub fn dim_sweep(a: DimSweepArgs) -> Result<PathBuf> {
    let mut flags = Overrides::default();
    sweep_flags(&mut flags, &a.source, &a.model);
    flags.set("dims", a.dims.clone());
    let mut run: DimSweepRun = resolve(a.common.config.as_deref(), flags, sweep_seeds()?)?;
    run.sweep.train = run.sweep.train.resolved();

    let mut out = RunDir::create(&a.common.out, "dim-sweep")?;
    if let Some(c) = &a.common.config {
        out.hash_input(c)?;
    }
    let data = sweep_data(&mut out, &a.source, &mut run.synthetic, run.normalize)?;
    let result = dimension_sweep(&data, &run.dims, &run.sweep)?;
    write_sweep(&mut out, &result)?;
    out.finish(Value::from(run.sweep.seeds.clone()), &run)
}
