use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{clustering_accuracy, kmeans, knn_classify, nmi, pairwise_f, rand_index};
use crate::data::{gallery_probe_split, SplitRatio};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Repetitions per evaluation protocol.
pub const DEFAULT_RUNS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub values: Vec<f64>,
}

impl MetricSummary {
    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        MetricSummary {
            name: name.into(),
            mean,
            std,
            values,
        }
    }
}

/// Mean and spread of each metric over repeated runs, plus the protocol
/// settings that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub runs: usize,
    pub metrics: Vec<MetricSummary>,
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.get(name).map(|m| m.mean)
    }

    /// `metric,mean,std,runs`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,std,runs\n");
        for m in &self.metrics {
            let _ = writeln!(out, "{},{:?},{:?},{}", m.name, m.mean, m.std, self.runs);
        }
        out
    }

    /// Per-run values: `run,metric,value`.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from("run,metric,value\n");
        for m in &self.metrics {
            for (run, v) in m.values.iter().enumerate() {
                let _ = writeln!(out, "{run},{},{v:?}", m.name);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check_labels(points: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != points.rows() {
        return Err(Error::Data(format!(
            "{} labels for {} points",
            labels.len(),
            points.rows()
        )));
    }
    Ok(())
}

/// k-means with `k` equal to the number of classes, repeated `runs` times
/// with seeds `seed, seed + 1, …`, scored by ACC, NMI, F-score and RI.
pub fn evaluate_clustering(
    points: &Matrix,
    labels: &[usize],
    runs: usize,
    restarts: usize,
    seed: u64,
) -> Result<MetricReport> {
    check_labels(points, labels)?;
    if runs == 0 {
        return Err(Error::Config(
            "at least one evaluation run is required".into(),
        ));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();

    let mut acc = Vec::with_capacity(runs);
    let mut nmis = Vec::with_capacity(runs);
    let mut f = Vec::with_capacity(runs);
    let mut ri = Vec::with_capacity(runs);
    for run in 0..runs {
        let result = kmeans(points, k, restarts, seed.wrapping_add(run as u64))?;
        let pred = &result.partition.assignments;
        acc.push(clustering_accuracy(labels, pred)?);
        nmis.push(nmi(labels, pred)?);
        f.push(pairwise_f(labels, pred)?);
        ri.push(rand_index(labels, pred)?);
    }
    let settings = BTreeMap::from([
        ("protocol".into(), "kmeans".into()),
        ("k".into(), k.to_string()),
        ("restarts".into(), restarts.to_string()),
        ("seed".into(), seed.to_string()),
        ("nmi_normalization".into(), "geometric_mean".into()),
        ("std".into(), "population".into()),
    ]);
    Ok(MetricReport {
        runs,
        metrics: vec![
            MetricSummary::from_values("acc", acc),
            MetricSummary::from_values("nmi", nmis),
            MetricSummary::from_values("f_score", f),
            MetricSummary::from_values("rand_index", ri),
        ],
        settings,
    })
}

/// KNN accuracy over `runs` stratified gallery/probe splits per ratio.
/// Metrics are named `acc@G:P`.
pub fn evaluate_classification(
    points: &Matrix,
    labels: &[usize],
    ratios: &[SplitRatio],
    runs: usize,
    k: usize,
    seed: u64,
) -> Result<MetricReport> {
    check_labels(points, labels)?;
    if runs == 0 || ratios.is_empty() {
        return Err(Error::Config(
            "classification needs at least one run and one split ratio".into(),
        ));
    }
    let mut metrics = Vec::with_capacity(ratios.len());
    for ratio in ratios {
        let mut accs = Vec::with_capacity(runs);
        for run in 0..runs {
            let (gallery, probe) = gallery_probe_split(
                points.rows(),
                Some(labels),
                *ratio,
                seed.wrapping_add(run as u64),
            )?;
            if probe.is_empty() {
                return Err(Error::Config(format!(
                    "ratio {ratio} leaves no probe samples"
                )));
            }
            let g_labels: Vec<usize> = gallery.iter().map(|&i| labels[i]).collect();
            let pred = knn_classify(
                &points.select_rows(&gallery),
                &g_labels,
                &points.select_rows(&probe),
                k,
            )?;
            let correct = pred
                .iter()
                .zip(&probe)
                .filter(|(p, &i)| **p == labels[i])
                .count();
            accs.push(correct as f64 / probe.len() as f64);
        }
        metrics.push(MetricSummary::from_values(format!("acc@{ratio}"), accs));
    }
    let settings = BTreeMap::from([
        ("protocol".into(), "knn".into()),
        ("knn_k".into(), k.to_string()),
        ("distance".into(), "euclidean".into()),
        ("stratified".into(), "true".into()),
        ("seed".into(), seed.to_string()),
        ("std".into(), "population".into()),
    ]);
    Ok(MetricReport {
        runs,
        metrics,
        settings,
    })
}
