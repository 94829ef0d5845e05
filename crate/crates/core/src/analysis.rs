//! Uncertainty analytics: Gaussian KDE of learned σ split by clean and
//! polluted samples, noise-intensity sweeps comparing both objectives, and
//! latent-dimension sweeps.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{inject_noise, MultiViewDataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate_clustering, MetricReport, MetricSummary};
use crate::model::{extract_sigma, Objective};
use crate::numerics::Matrix;
use crate::trainer::{train, TrainConfig, TrainState};

/// Evaluation points per KDE curve.
pub const DEFAULT_GRID_POINTS: usize = 256;

/// Intensities of the σ-separation study.
pub const DEFAULT_ETAS: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

/// Latent widths of the dimension sweep.
pub const DEFAULT_DIMS: [usize; 5] = [10, 20, 50, 100, 200];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Clean,
    Noisy,
    All,
}

impl Group {
    pub fn name(&self) -> &'static str {
        match self {
            Group::Clean => "clean",
            Group::Noisy => "noisy",
            Group::All => "all",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub group: Group,
}

impl KdeCurve {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1]))
            .sum()
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scott's rule for one dimension, `h = std · n^(-1/5)` with the
/// population standard deviation.
pub fn scott_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Data(format!(
            "density estimation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data(
            "density estimation samples must be finite".into(),
        ));
    }
    let (_, std) = mean_std(samples);
    if std == 0.0 {
        return Err(Error::Data(
            "degenerate distribution: all samples are equal".into(),
        ));
    }
    Ok(std * (samples.len() as f64).powf(-0.2))
}

/// `points` evenly spaced values over `[min − 3h, max + 3h]`.
pub fn kde_grid(samples: &[f64], bandwidth: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    if points < 2 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// Gaussian kernel density estimate of `samples` at each `grid` point,
/// bandwidth by Scott's rule.
pub fn kde_1d(samples: &[f64], grid: &[f64], group: Group) -> Result<KdeCurve> {
    let h = scott_bandwidth(samples)?;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    let density = grid
        .iter()
        .map(|g| {
            norm * samples
                .iter()
                .map(|s| (-(g - s) * (g - s) / (2.0 * h * h)).exp())
                .sum::<f64>()
        })
        .collect();
    Ok(KdeCurve {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
        group,
    })
}

/// `grid,density,group`
pub fn kde_csv(curves: &[KdeCurve]) -> String {
    let mut out = String::from("grid,density,group\n");
    for c in curves {
        for (g, d) in c.grid.iter().zip(&c.density) {
            let _ = writeln!(out, "{g:?},{d:?},{}", c.group.name());
        }
    }
    out
}

/// σ statistics of one view, split into polluted and untouched samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyStudy {
    pub view: usize,
    /// Whether densities were estimated on `ln σ` instead of `σ`.
    pub log_scale: bool,
    pub clean: KdeCurve,
    pub noisy: KdeCurve,
    pub mean_clean: f64,
    pub mean_noisy: f64,
    pub std_clean: f64,
    pub std_noisy: f64,
    pub n_clean: usize,
    pub n_noisy: usize,
}

impl UncertaintyStudy {
    /// `mean σ(noisy) − mean σ(clean)`.
    pub fn gap(&self) -> f64 {
        self.mean_noisy - self.mean_clean
    }

    /// Standard error of the gap from the two group variances.
    pub fn pooled_standard_error(&self) -> f64 {
        (self.std_clean.powi(2) / self.n_clean as f64
            + self.std_noisy.powi(2) / self.n_noisy as f64)
            .sqrt()
    }
}

/// Splits one view's σ column (from [`extract_sigma`]) by membership in
/// `polluted` and estimates both densities on a shared grid.
pub fn uncertainty_split(
    sigma: &Matrix,
    polluted: &[usize],
    view: usize,
    log_scale: bool,
) -> Result<UncertaintyStudy> {
    if view >= sigma.cols() {
        return Err(Error::Config(format!(
            "view {view} does not exist ({} views)",
            sigma.cols()
        )));
    }
    let n = sigma.rows();
    let mut is_noisy = vec![false; n];
    for &i in polluted {
        if i >= n {
            return Err(Error::Data(format!(
                "polluted index {i} out of range for {n} samples"
            )));
        }
        is_noisy[i] = true;
    }
    let value = |i: usize| {
        let s = sigma[(i, view)];
        if log_scale {
            s.ln()
        } else {
            s
        }
    };
    let noisy: Vec<f64> = (0..n).filter(|&i| is_noisy[i]).map(value).collect();
    let clean: Vec<f64> = (0..n).filter(|&i| !is_noisy[i]).map(value).collect();
    if noisy.is_empty() || clean.is_empty() {
        return Err(Error::Data(format!(
            "both groups need samples (clean {}, noisy {})",
            clean.len(),
            noisy.len()
        )));
    }
    let h_clean = scott_bandwidth(&clean)?;
    let h_noisy = scott_bandwidth(&noisy)?;
    let all: Vec<f64> = clean.iter().chain(&noisy).copied().collect();
    let grid = kde_grid(&all, h_clean.max(h_noisy), DEFAULT_GRID_POINTS);
    let (mean_clean, std_clean) = mean_std(&clean);
    let (mean_noisy, std_noisy) = mean_std(&noisy);
    Ok(UncertaintyStudy {
        view,
        log_scale,
        clean: kde_1d(&clean, &grid, Group::Clean)?,
        noisy: kde_1d(&noisy, &grid, Group::Noisy)?,
        mean_clean,
        mean_noisy,
        std_clean,
        std_noisy,
        n_clean: clean.len(),
        n_noisy: noisy.len(),
    })
}

/// [`uncertainty_split`] on the σ values predicted by a trained state.
pub fn uncertainty_split_study(
    state: &TrainState,
    polluted: &[usize],
    view: usize,
    log_scale: bool,
) -> Result<UncertaintyStudy> {
    let sigma = extract_sigma(&state.predictions()?);
    uncertainty_split(&sigma, polluted, view, log_scale)
}

/// Shared settings for the sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub train: TrainConfig,
    /// One training run per seed in every cell.
    pub seeds: Vec<u64>,
    pub noise_view: usize,
    pub noise_fraction: f64,
    /// k-means repetitions per trained model.
    pub eval_runs: usize,
    pub kmeans_restarts: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2],
            noise_view: 0,
            noise_fraction: 0.5,
            eval_runs: 10,
            kmeans_restarts: 10,
        }
    }
}

impl SweepConfig {
    /// Settings for the noise study on the default synthetic family
    /// ([`crate::data::SyntheticSpec::default`]). The latent is twice the
    /// true dimension and starts near the origin; a unit-scale start leaves
    /// the decoders chasing random codes and clusters poorly for both
    /// objectives.
    pub fn synthetic_study() -> Self {
        SweepConfig {
            train: TrainConfig {
                latent_dim: 16,
                epochs: 1000,
                lr: 1e-2,
                init_scale: 0.01,
                tolerance: 0.0,
                ..TrainConfig::default()
            },
            eval_runs: 3,
            ..SweepConfig::default()
        }
    }
}

/// One (parameter value, objective) cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub variant: Objective,
    /// Clustering report of each seed's model.
    pub per_seed: Vec<MetricReport>,
    /// All runs of all seeds pooled.
    pub report: MetricReport,
    /// σ statistics of the polluted view, one per seed; noise sweeps with
    /// the uncertainty-aware objective only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma_studies: Vec<UncertaintyStudy>,
}

impl SweepCell {
    /// Median over seeds of each seed's mean `metric`.
    pub fn seed_median(&self, metric: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .per_seed
            .iter()
            .filter_map(|r| r.mean(metric))
            .collect();
        median(&values)
    }

    /// Median over seeds of `mean σ(noisy) − mean σ(clean)`.
    pub fn median_sigma_gap(&self) -> Option<f64> {
        let gaps: Vec<f64> = self
            .sigma_studies
            .iter()
            .map(UncertaintyStudy::gap)
            .collect();
        median(&gaps)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: String,
    pub values: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, value: f64, variant: Objective) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.value == value && c.variant == variant)
    }

    /// `param,value,variant,metric,mean,std`, one row per cell and metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,value,variant,metric,mean,std\n");
        for c in &self.cells {
            for m in &c.report.metrics {
                let _ = writeln!(
                    out,
                    "{},{:?},{},{},{:?},{:?}",
                    self.param, c.value, c.variant, m.name, m.mean, m.std
                );
            }
        }
        out
    }

    /// Per-seed σ summaries of noise sweeps:
    /// `value,seed,mean_clean,mean_noisy,gap,pooled_se`.
    pub fn sigma_csv(&self) -> String {
        let mut out = String::from("value,seed,mean_clean,mean_noisy,gap,pooled_se\n");
        for c in self.cells.iter().filter(|c| !c.sigma_studies.is_empty()) {
            for (seed, s) in c.sigma_studies.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:?},{seed},{:?},{:?},{:?},{:?}",
                    c.value,
                    s.mean_clean,
                    s.mean_noisy,
                    s.gap(),
                    s.pooled_standard_error()
                );
            }
        }
        out
    }
}

fn pooled(per_seed: &[MetricReport]) -> MetricReport {
    let first = &per_seed[0];
    let metrics = first
        .metrics
        .iter()
        .map(|m| {
            let values = per_seed
                .iter()
                .flat_map(|r| r.get(&m.name).map(|x| x.values.clone()).unwrap_or_default())
                .collect();
            MetricSummary::from_values(m.name.clone(), values)
        })
        .collect();
    MetricReport {
        runs: per_seed.iter().map(|r| r.runs).sum(),
        metrics,
        settings: first.settings.clone(),
    }
}

fn labels_of(data: &MultiViewDataset) -> Result<&[usize]> {
    data.labels().ok_or_else(|| {
        Error::Data("sweeps evaluate clustering and need ground-truth labels".into())
    })
}

fn check_sweep(cfg: &SweepConfig) -> Result<()> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    cfg.train.validate()
}

/// Trains every objective in `variants` on data with half (by default) of
/// one view polluted at each intensity, and clusters the learned latents.
/// For a given (η, seed) all variants see the same polluted data.
pub fn noise_robustness_sweep(
    base: &MultiViewDataset,
    etas: &[f64],
    variants: &[Objective],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    check_sweep(cfg)?;
    if !etas.contains(&0.0) {
        return Err(Error::Config(
            "the noise sweep needs the noise-free intensity 0 as its baseline".into(),
        ));
    }
    let labels = labels_of(base)?;
    let mut cells = Vec::with_capacity(etas.len() * variants.len());
    for &eta in etas {
        let mut per_variant: Vec<(Vec<MetricReport>, Vec<UncertaintyStudy>)> =
            vec![Default::default(); variants.len()];
        for &seed in &cfg.seeds {
            let spec = NoiseSpec {
                view: cfg.noise_view,
                eta,
                fraction: cfg.noise_fraction,
                seed: seed.wrapping_mul(0x9e37_79b9).wrapping_add(17),
            };
            let (noisy, polluted) = inject_noise(base, &spec)?;
            for (slot, &variant) in per_variant.iter_mut().zip(variants) {
                let train_cfg = TrainConfig {
                    objective: variant,
                    seed,
                    ..cfg.train.clone()
                };
                let state = train(&noisy, &train_cfg)?;
                slot.0.push(evaluate_clustering(
                    &state.latent.h,
                    labels,
                    cfg.eval_runs,
                    cfg.kmeans_restarts,
                    seed,
                )?);
                if variant == Objective::Dua
                    && !polluted.is_empty()
                    && polluted.len() < base.n_samples()
                {
                    slot.1.push(uncertainty_split_study(
                        &state,
                        &polluted,
                        cfg.noise_view,
                        false,
                    )?);
                }
            }
        }
        for ((per_seed, sigma_studies), &variant) in per_variant.into_iter().zip(variants) {
            cells.push(SweepCell {
                value: eta,
                variant,
                report: pooled(&per_seed),
                per_seed,
                sigma_studies,
            });
        }
    }
    Ok(SweepResult {
        param: "eta".into(),
        values: etas.to_vec(),
        cells,
    })
}

/// Clustering quality of the uncertainty-aware objective at each latent
/// dimension.
pub fn dimension_sweep(
    data: &MultiViewDataset,
    dims: &[usize],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    check_sweep(cfg)?;
    if dims.is_empty() {
        return Err(Error::Config(
            "the dimension sweep needs at least one dimension".into(),
        ));
    }
    let labels = labels_of(data)?;
    let mut cells = Vec::with_capacity(dims.len());
    for &d in dims {
        let mut per_seed = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let train_cfg = TrainConfig {
                latent_dim: d,
                hidden: None,
                objective: Objective::Dua,
                seed,
                ..cfg.train.clone()
            };
            let state = train(data, &train_cfg)?;
            per_seed.push(evaluate_clustering(
                &state.latent.h,
                labels,
                cfg.eval_runs,
                cfg.kmeans_restarts,
                seed,
            )?);
        }
        cells.push(SweepCell {
            value: d as f64,
            variant: Objective::Dua,
            report: pooled(&per_seed),
            per_seed,
            sigma_studies: Vec::new(),
        });
    }
    Ok(SweepResult {
        param: "latent_dim".into(),
        values: dims.iter().map(|&d| d as f64).collect(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_is_rejected() {
        assert!(matches!(
            kde_1d(&[0.0, 0.0], &[0.0], Group::All),
            Err(Error::Data(_))
        ));
        assert!(kde_1d(&[1.0], &[0.0], Group::All).is_err());
    }

    #[test]
    fn two_point_density_at_midpoint() {
        let h = 0.5 * 2f64.powf(-0.2);
        let c = kde_1d(&[0.0, 1.0], &[0.5], Group::All).unwrap();
        let expected = 1.0 / (2.0 * h * (2.0 * PI).sqrt()) * 2.0 * (-0.125 / (h * h)).exp();
        assert!((c.density[0] - expected).abs() < 1e-15);
        assert_eq!(c.bandwidth, h);
    }

    #[test]
    fn translation_equivariance() {
        let s = [0.3, 1.7, -0.4, 2.2, 0.9];
        let grid: Vec<f64> = (0..20).map(|i| -2.0 + 0.3 * i as f64).collect();
        let a = kde_1d(&s, &grid, Group::All).unwrap();
        let shift = 3.25;
        let s2: Vec<f64> = s.iter().map(|x| x + shift).collect();
        let g2: Vec<f64> = grid.iter().map(|x| x + shift).collect();
        let b = kde_1d(&s2, &g2, Group::All).unwrap();
        for (x, y) in a.density.iter().zip(&b.density) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn default_grid_integrates_to_one() {
        let s = [0.1, 0.4, 0.35, 2.0, 1.1, 0.9, 0.2];
        let h = scott_bandwidth(&s).unwrap();
        let c = kde_1d(&s, &kde_grid(&s, h, DEFAULT_GRID_POINTS), Group::All).unwrap();
        assert!((0.95..=1.05).contains(&c.integral()), "{}", c.integral());
        assert!(c.density.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn split_partitions_samples() {
        let sigma = Matrix::from_fn(10, 2, |i, v| 1.0 + i as f64 * 0.1 + v as f64);
        let study = uncertainty_split(&sigma, &[1, 3, 5, 7, 9], 1, false).unwrap();
        assert_eq!(study.n_clean + study.n_noisy, 10);
        assert_eq!(study.clean.grid, study.noisy.grid);
        assert!((study.gap() - 0.1).abs() < 1e-12);
        assert!(uncertainty_split(&sigma, &[], 0, false).is_err());
        assert!(uncertainty_split(&sigma, &[10], 0, false).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
