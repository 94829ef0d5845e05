//! Multi-view datasets: CSV ingestion, z-scoring, synthetic generation,
//! noise injection, and gallery/probe splits.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Per-feature statistics used by [`zscore_normalize`]. Stored so the
/// transform can be undone: `x = mean + std * z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub means: Vec<f64>,
    /// Population (1/N) standard deviations; zero marks a constant feature.
    pub stds: Vec<f64>,
}

/// `N` samples observed as `V` views with possibly different widths.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Matrix>,
    labels: Option<Vec<usize>>,
    names: Vec<String>,
    normalization: Vec<Option<Normalization>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<Matrix>, labels: Option<Vec<usize>>) -> Result<Self> {
        let names = (0..views.len()).map(|v| format!("view{v}")).collect();
        Self::with_names(views, labels, names)
    }

    pub fn with_names(
        views: Vec<Matrix>,
        labels: Option<Vec<usize>>,
        names: Vec<String>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Data("a dataset needs at least one view".into()));
        }
        if names.len() != views.len() {
            return Err(Error::Data(format!(
                "{} names for {} views",
                names.len(),
                views.len()
            )));
        }
        let n = views[0].rows();
        if n == 0 {
            return Err(Error::Data("a dataset needs at least one sample".into()));
        }
        for (v, m) in views.iter().enumerate() {
            if m.rows() != n {
                return Err(Error::Data(format!(
                    "view {v} ({}) has {} rows, view 0 has {n}",
                    names[v],
                    m.rows()
                )));
            }
            if m.cols() == 0 {
                return Err(Error::Data(format!(
                    "view {v} ({}) has no features",
                    names[v]
                )));
            }
            if let Some(pos) = m.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "view {v} ({}) has a non-finite value at row {}, column {}",
                    names[v],
                    pos / m.cols(),
                    pos % m.cols()
                )));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Data(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
        }
        let normalization = vec![None; views.len()];
        Ok(MultiViewDataset {
            views,
            labels,
            names,
            normalization,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].rows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view(&self, v: usize) -> &Matrix {
        &self.views[v]
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn view_widths(&self) -> Vec<usize> {
        self.views.iter().map(Matrix::cols).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn normalization(&self, v: usize) -> Option<&Normalization> {
        self.normalization[v].as_ref()
    }

    /// Number of distinct classes, `max(label) + 1`.
    pub fn class_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    pub fn set_labels(&mut self, labels: Option<Vec<usize>>) -> Result<()> {
        if let Some(l) = &labels {
            if l.len() != self.n_samples() {
                return Err(Error::Data(format!(
                    "{} labels for {} samples",
                    l.len(),
                    self.n_samples()
                )));
            }
        }
        self.labels = labels;
        Ok(())
    }

    /// All views concatenated feature-wise.
    pub fn concatenated(&self) -> Matrix {
        let parts: Vec<&Matrix> = self.views.iter().collect();
        Matrix::hstack(&parts).expect("views share a row count")
    }

    /// Undoes z-scoring on view `v`; constant features come back as their mean.
    pub fn denormalized_view(&self, v: usize) -> Matrix {
        let m = &self.views[v];
        match &self.normalization[v] {
            None => m.clone(),
            Some(norm) => Matrix::from_fn(m.rows(), m.cols(), |r, c| {
                norm.means[c] + norm.stds[c] * m[(r, c)]
            }),
        }
    }
}

fn read_csv_matrix(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let mut row = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let x: f64 = cell.parse().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                row: r + 1,
                col: c + 1,
                cell: cell.to_string(),
            })?;
            if !x.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {}, column {}: non-finite value {cell}",
                    path.display(),
                    r + 1,
                    c + 1
                )));
            }
            row.push(x);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: file is empty", path.display())));
    }
    Matrix::from_rows(&rows)
        .map_err(|_| Error::Data(format!("{}: rows have unequal lengths", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => Error::Data(format!(
            "{}: row {} has {len} fields, expected {expected_len}",
            path.display(),
            pos.map_or(0, |p| p.line())
        )),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Reads a single-column integer CSV of class ids.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        // Accept integral floats such as "3.0", which some exporters write.
        let value = cell.parse::<usize>().ok().or_else(|| {
            cell.parse::<f64>()
                .ok()
                .filter(|x| *x >= 0.0 && x.fract() == 0.0)
                .map(|x| x as usize)
        });
        labels.push(value.ok_or_else(|| Error::Parse {
            file: path.to_path_buf(),
            row: r + 1,
            col: 1,
            cell: cell.to_string(),
        })?);
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{}: file is empty", path.display())));
    }
    Ok(labels)
}

/// Loads one headerless CSV per view plus an optional labels file.
pub fn load_views<P: AsRef<Path>>(paths: &[P], labels: Option<&Path>) -> Result<MultiViewDataset> {
    let mut views = Vec::with_capacity(paths.len());
    let mut names = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        let m = read_csv_matrix(p)?;
        if let Some(first) = views.first().map(Matrix::rows) {
            if m.rows() != first {
                return Err(Error::Data(format!(
                    "{} has {} rows but {} has {first}",
                    p.display(),
                    m.rows(),
                    paths[0].as_ref().display()
                )));
            }
        }
        names.push(p.file_stem().map_or_else(
            || format!("view{}", views.len()),
            |s| s.to_string_lossy().into_owned(),
        ));
        views.push(m);
    }
    let labels = labels.map(load_labels).transpose()?;
    MultiViewDataset::with_names(views, labels, names)
}

/// Writes a matrix as headerless CSV using shortest round-trip decimals.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::with_capacity(m.data().len() * 12);
    for row in m.row_iter() {
        for (c, x) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{x:?}"));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// On-disk description of a dataset: `dataset.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub name: String,
    pub file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    /// Loads the dataset; relative file paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<MultiViewDataset> {
        let paths: Vec<PathBuf> = self.views.iter().map(|v| base.join(&v.file)).collect();
        let labels = self.labels.as_ref().map(|l| base.join(l));
        let mut data = load_views(&paths, labels.as_deref())?;
        data.names = self.views.iter().map(|v| v.name.clone()).collect();
        data.normalization = self.views.iter().map(|v| v.normalization.clone()).collect();
        Ok(data)
    }
}

/// Reads `dataset.json` and the files it references.
pub fn load_manifest(path: &Path) -> Result<MultiViewDataset> {
    let manifest = DatasetManifest::read(path)?;
    manifest.load(path.parent().unwrap_or(Path::new(".")))
}

/// Writes every view, the labels, and `dataset.json` into `dir`.
pub fn save_dataset(data: &MultiViewDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (v, m) in data.views.iter().enumerate() {
        let file = PathBuf::from(format!("{}.csv", data.names[v]));
        write_matrix_csv(&dir.join(&file), m)?;
        entries.push(ViewEntry {
            name: data.names[v].clone(),
            file,
            normalization: data.normalization[v].clone(),
        });
    }
    let labels = match &data.labels {
        Some(l) => {
            let file = PathBuf::from("labels.csv");
            write_labels_csv(&dir.join(&file), l)?;
            Some(file)
        }
        None => None,
    };
    let manifest = DatasetManifest {
        views: entries,
        labels,
    };
    let path = dir.join("dataset.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, json.as_bytes())?;
    Ok(path)
}

/// Z-scores every feature of every view with population statistics.
/// Constant features become zero. Applying it again composes the stored
/// statistics so the original data stays recoverable.
pub fn zscore_normalize(data: &MultiViewDataset) -> Result<MultiViewDataset> {
    let n = data.n_samples();
    if n < 2 {
        return Err(Error::Config(format!(
            "z-scoring needs at least 2 samples, got {n}"
        )));
    }
    let mut out = data.clone();
    for (v, m) in out.views.iter_mut().enumerate() {
        let cols = m.cols();
        let mut means = vec![0.0; cols];
        for row in m.row_iter() {
            for (mu, x) in means.iter_mut().zip(row) {
                *mu += x;
            }
        }
        means.iter_mut().for_each(|mu| *mu /= n as f64);
        let mut stds = vec![0.0; cols];
        for row in m.row_iter() {
            for ((s, x), mu) in stds.iter_mut().zip(row).zip(&means) {
                *s += (x - mu) * (x - mu);
            }
        }
        stds.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());

        for r in 0..m.rows() {
            for ((x, mu), s) in m.row_mut(r).iter_mut().zip(&means).zip(&stds) {
                *x = if *s > 0.0 { (*x - mu) / s } else { 0.0 };
            }
        }

        let composed = match &data.normalization[v] {
            None => Normalization { means, stds },
            Some(prev) => Normalization {
                means: prev
                    .means
                    .iter()
                    .zip(&prev.stds)
                    .zip(&means)
                    .map(|((m0, s0), m1)| m0 + s0 * m1)
                    .collect(),
                stds: prev
                    .stds
                    .iter()
                    .zip(&stds)
                    .map(|(s0, s1)| s0 * s1)
                    .collect(),
            },
        };
        out.normalization[v] = Some(composed);
    }
    Ok(out)
}

/// Which samples of which view to pollute, and how strongly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub view: usize,
    /// Intensity η; the perturbation is `η · ε` with `ε ~ N(0, I)`.
    pub eta: f64,
    /// Fraction ρ of samples polluted.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    /// Half of the first view, noise-free until `eta` is raised.
    fn default() -> Self {
        NoiseSpec {
            view: 0,
            eta: 0.0,
            fraction: 0.5,
            seed: 0,
        }
    }
}

/// Adds `η · ε` to a random `round(ρ·N)` subset of rows of one view.
/// Returns the new dataset and the sorted polluted row indices.
pub fn inject_noise(
    data: &MultiViewDataset,
    spec: &NoiseSpec,
) -> Result<(MultiViewDataset, Vec<usize>)> {
    if spec.view >= data.n_views() {
        return Err(Error::Config(format!(
            "noise target view {} does not exist ({} views)",
            spec.view,
            data.n_views()
        )));
    }
    if !(0.0..=1.0).contains(&spec.fraction) {
        return Err(Error::Config(format!(
            "noise fraction {} outside [0, 1]",
            spec.fraction
        )));
    }
    if !(spec.eta >= 0.0 && spec.eta.is_finite()) {
        return Err(Error::Config(format!(
            "noise intensity {} must be finite and nonnegative",
            spec.eta
        )));
    }
    let n = data.n_samples();
    let count = (spec.fraction * n as f64).round() as usize;
    if count == 0 && spec.fraction > 0.0 {
        log::warn!(
            "noise fraction {} of {n} samples rounds to zero polluted rows",
            spec.fraction
        );
    }
    let mut rng = Rng::new(spec.seed);
    let mut polluted = rng.sample_indices(n, count);
    polluted.sort_unstable();

    let mut out = data.clone();
    let view = &mut out.views[spec.view];
    for &i in &polluted {
        for x in view.row_mut(i) {
            *x += spec.eta * rng.normal();
        }
    }
    Ok((out, polluted))
}

/// Parameters for the synthetic clustered multi-view family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub clusters: usize,
    pub latent_dim: usize,
    pub view_widths: Vec<usize>,
    /// Scale of the cluster centers; latents scatter with unit variance
    /// around them.
    pub separation: f64,
    /// Weight of the ReLU term added to each view's linear map.
    pub nonlinearity: f64,
    /// Standard deviation of i.i.d. Gaussian noise added to every feature.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 400,
            clusters: 4,
            latent_dim: 8,
            view_widths: vec![20, 20],
            separation: 3.0,
            nonlinearity: 0.1,
            feature_noise: 0.0,
            seed: 0,
        }
    }
}

/// Clustered latents pushed through independent random maps per view:
/// `x = A z + α·relu(B z) + ν·ε`. Labels are the cluster ids, balanced within one.
pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut Rng) -> Result<MultiViewDataset> {
    if spec.clusters == 0 || spec.n < spec.clusters {
        return Err(Error::Config(format!(
            "{} samples cannot fill {} nonempty clusters",
            spec.n, spec.clusters
        )));
    }
    if spec.latent_dim == 0 || spec.view_widths.is_empty() || spec.view_widths.contains(&0) {
        return Err(Error::Config(
            "synthetic latent and view widths must be positive".into(),
        ));
    }
    let d = spec.latent_dim;
    let centers = Matrix::from_fn(spec.clusters, d, |_, _| spec.separation * rng.normal());
    let mut labels: Vec<usize> = (0..spec.n).map(|i| i % spec.clusters).collect();
    rng.shuffle(&mut labels);
    let latent = Matrix::from_fn(spec.n, d, |i, j| centers[(labels[i], j)] + rng.normal());

    let scale = 1.0 / (d as f64).sqrt();
    let mut views = Vec::with_capacity(spec.view_widths.len());
    for &width in &spec.view_widths {
        let linear = Matrix::from_fn(d, width, |_, _| scale * rng.normal());
        let bent = Matrix::from_fn(d, width, |_, _| scale * rng.normal());
        let mut x = latent.mul(&linear);
        if spec.nonlinearity != 0.0 {
            let kink = latent.mul(&bent);
            for (xv, kv) in x.data_mut().iter_mut().zip(kink.data()) {
                *xv += spec.nonlinearity * kv.max(0.0);
            }
        }
        if spec.feature_noise != 0.0 {
            x.data_mut()
                .iter_mut()
                .for_each(|xv| *xv += spec.feature_noise * rng.normal());
        }
        views.push(x);
    }
    MultiViewDataset::new(views, Some(labels))
}

/// Gallery/probe proportions, e.g. `8:2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub gallery: u32,
    pub probe: u32,
}

impl SplitRatio {
    pub const STANDARD_RATIOS: [SplitRatio; 4] = [
        SplitRatio {
            gallery: 8,
            probe: 2,
        },
        SplitRatio {
            gallery: 7,
            probe: 3,
        },
        SplitRatio {
            gallery: 5,
            probe: 5,
        },
        SplitRatio {
            gallery: 2,
            probe: 8,
        },
    ];

    pub fn gallery_fraction(&self) -> f64 {
        self.gallery as f64 / (self.gallery + self.probe) as f64
    }
}

impl std::str::FromStr for SplitRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("split ratio {s:?} is not of the form G:P"));
        let (g, p) = s.split_once(':').ok_or_else(bad)?;
        let gallery: u32 = g.trim().parse().map_err(|_| bad())?;
        let probe: u32 = p.trim().parse().map_err(|_| bad())?;
        if gallery == 0 || probe == 0 {
            return Err(Error::Config(format!(
                "split ratio {s:?} needs both parts positive"
            )));
        }
        Ok(SplitRatio { gallery, probe })
    }
}

impl std::fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.gallery, self.probe)
    }
}

/// Random gallery/probe partition of `0..n`, stratified by label when
/// labels are given. Both index lists come back sorted.
pub fn gallery_probe_split(
    n: usize,
    labels: Option<&[usize]>,
    ratio: SplitRatio,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = Rng::new(seed);
    let frac = ratio.gallery_fraction();
    let strata: Vec<Vec<usize>> = match labels {
        Some(l) => {
            if l.len() != n {
                return Err(Error::Data(format!("{} labels for {n} samples", l.len())));
            }
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &c) in l.iter().enumerate() {
                by_class.entry(c).or_default().push(i);
            }
            by_class.into_values().collect()
        }
        None => vec![(0..n).collect()],
    };

    let mut gallery = Vec::new();
    let mut probe = Vec::new();
    for mut members in strata {
        let take = (frac * members.len() as f64).round() as usize;
        if take == 0 {
            let class = labels.map(|l| l[members[0]]);
            return Err(Error::Config(match class {
                Some(c) => format!(
                    "class {c} has {} samples, too few for a gallery at ratio {ratio}",
                    members.len()
                ),
                None => format!("{n} samples leave an empty gallery at ratio {ratio}"),
            }));
        }
        rng.shuffle(&mut members);
        gallery.extend_from_slice(&members[..take]);
        probe.extend_from_slice(&members[take..]);
    }
    gallery.sort_unstable();
    probe.sort_unstable();
    Ok((gallery, probe))
}
