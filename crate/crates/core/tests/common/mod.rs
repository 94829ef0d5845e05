//! Independent reference implementations shared by the integration tests
//! and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use dua_core::data::MultiViewDataset;
use dua_core::model::{
    dua_loss, init_model, loss_gradients, predict_all, rnets_loss, HiddenWidths, LatentTable,
    Objective, RNet, Regularizer,
};
use dua_core::numerics::{gaussian_draw, AdamConfig, AdamState, Matrix, MlpParams, Rng};

pub const FD_STEP: f64 = 1e-5;

/// A random two-view problem with `N ≤ 8`, `d ≤ 5`.
pub fn random_problem(seed: u64) -> (MultiViewDataset, Vec<RNet>, LatentTable) {
    let mut rng = Rng::new(seed);
    let n = 2 + rng.below(7);
    let d = 1 + rng.below(5);
    let widths = [1 + rng.below(4), 1 + rng.below(4)];
    let views = widths
        .iter()
        .map(|&w| gaussian_draw(&mut rng, n, w))
        .collect();
    let data = MultiViewDataset::new(views, None).unwrap();
    let hidden = HiddenWidths {
        first: 2 + rng.below(5),
        second: 2 + rng.below(5),
    };
    let (mut nets, latent) = init_model(&widths, d, n, &mut rng, 1.0, hidden).unwrap();
    for net in &mut nets {
        randomize_biases(&mut net.mean_head, &mut rng);
        randomize_biases(&mut net.sigma_head, &mut rng);
        // Keep ln σ of order one. A raw He-initialized head can sit near
        // the clamp, where 1/σ² ~ e^12 inflates the loss until the
        // round-off of a 1e-5 central difference swamps small gradients.
        for t in [4, 5] {
            net.sigma_head.tensors_mut()[t]
                .iter_mut()
                .for_each(|w| *w *= 0.2);
        }
    }
    (data, nets, latent)
}

/// Zero biases put whole rows exactly on a ReLU kink (a dead first layer
/// feeds the second layer exact zeros), where central differences see a
/// one-sided slope. Random biases keep test points differentiable.
pub fn randomize_biases(p: &mut MlpParams, rng: &mut Rng) {
    for t in [1, 3, 5] {
        p.tensors_mut()[t]
            .iter_mut()
            .for_each(|b| *b = 0.5 * rng.normal());
    }
}

pub fn objective_value(
    data: &MultiViewDataset,
    nets: &[RNet],
    latent: &LatentTable,
    objective: Objective,
) -> f64 {
    let preds = predict_all(nets, latent).unwrap();
    match objective {
        Objective::Dua => dua_loss(data, &preds).unwrap().total,
        Objective::Rnets => rnets_loss(data, &preds).unwrap().total,
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

fn head_mut(net: &mut RNet, sigma: bool) -> &mut MlpParams {
    if sigma {
        &mut net.sigma_head
    } else {
        &mut net.mean_head
    }
}

/// Largest relative disagreement between the analytic gradient and central
/// differences, over every weight, bias and latent entry.
pub fn max_gradient_error(
    data: &MultiViewDataset,
    nets: &[RNet],
    latent: &LatentTable,
    objective: Objective,
) -> f64 {
    let grads = loss_gradients(data, nets, latent, objective, Regularizer::PerObservation).unwrap();
    let mut worst = 0.0f64;

    for v in 0..nets.len() {
        for sigma in [false, true] {
            let analytic = match (sigma, &grads.nets[v].sigma) {
                (false, _) => &grads.nets[v].mean,
                (true, Some(g)) => g,
                // The uncertainty-free objective has no sigma gradient;
                // check the loss is flat in those parameters instead.
                (true, None) => &MlpParams::zeros(nets[v].sigma_head.widths()),
            };
            for t in 0..6 {
                for k in 0..analytic.tensors()[t].len() {
                    let mut plus = nets.to_vec();
                    head_mut(&mut plus[v], sigma).tensors_mut()[t][k] += FD_STEP;
                    let mut minus = nets.to_vec();
                    head_mut(&mut minus[v], sigma).tensors_mut()[t][k] -= FD_STEP;
                    let numeric = (objective_value(data, &plus, latent, objective)
                        - objective_value(data, &minus, latent, objective))
                        / (2.0 * FD_STEP);
                    worst = worst.max(rel_err(analytic.tensors()[t][k], numeric));
                }
            }
        }
    }

    for k in 0..latent.h.data().len() {
        let mut plus = latent.clone();
        plus.h.data_mut()[k] += FD_STEP;
        let mut minus = latent.clone();
        minus.h.data_mut()[k] -= FD_STEP;
        let numeric = (objective_value(data, nets, &plus, objective)
            - objective_value(data, nets, &minus, objective))
            / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grads.latent.data()[k], numeric));
    }
    worst
}

/// Fits `ln σ` alone for one observation whose residual has norm `r`; the
/// mean head is frozen at zero and the sigma head is a bare output bias.
pub fn fit_sigma_for_residual(r: f64, width: usize, steps: usize) -> f64 {
    let mut x = vec![0.0; width];
    x[0] = r * 0.6;
    x[width - 1] += r * 0.8;
    if width == 1 {
        x[0] = r;
    }
    let data = MultiViewDataset::new(vec![Matrix::from_rows(&[x]).unwrap()], None).unwrap();
    let latent = LatentTable {
        h: Matrix::from_rows(&[[0.3, -0.2]]).unwrap(),
    };
    let mut net = RNet {
        mean_head: MlpParams::zeros([2, 4, 4, width]),
        sigma_head: MlpParams::zeros([2, 4, 4, 1]),
    };
    let mut adam = AdamState::new(
        AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        1,
    );
    for _ in 0..steps {
        let g = loss_gradients(
            &data,
            std::slice::from_ref(&net),
            &latent,
            Objective::Dua,
            Regularizer::PerObservation,
        )
        .unwrap();
        let bias_grad = g.nets[0].sigma.as_ref().unwrap().tensors()[5][0];
        adam.step_flat(net.sigma_head.tensors_mut()[5], &[bias_grad])
            .unwrap();
    }
    net.sigma_head.tensors()[5][0].exp()
}

/// Every labeling of `n` items into at most `k` blocks, in canonical
/// (restricted growth) form.
pub fn set_partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for label in 0..=next.min(k - 1) {
            prefix.push(label);
            grow(prefix, n, k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::with_capacity(n), n, k, &mut out);
    out
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Best accuracy over every relabeling of the predicted clusters.
pub fn brute_accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let labels = truth.iter().chain(pred).max().map_or(0, |m| m + 1);
    let ids: Vec<usize> = (0..labels).collect();
    permutations(&ids)
        .iter()
        .map(|perm| {
            truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| perm[**p] == **t)
                .count()
        })
        .max()
        .unwrap() as f64
        / truth.len() as f64
}

fn distinct(labels: &[usize]) -> BTreeSet<usize> {
    labels.iter().copied().collect()
}

fn plain_entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    distinct(labels)
        .iter()
        .map(|&a| {
            let p = labels.iter().filter(|&&l| l == a).count() as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn brute_nmi(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len() as f64;
    let (ht, hp) = (plain_entropy(truth), plain_entropy(pred));
    if ht == 0.0 && hp == 0.0 {
        return 1.0;
    }
    if ht == 0.0 || hp == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for &a in &distinct(truth) {
        for &b in &distinct(pred) {
            let joint = truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| **t == a && **p == b)
                .count() as f64
                / n;
            if joint > 0.0 {
                let pa = truth.iter().filter(|&&t| t == a).count() as f64 / n;
                let pb = pred.iter().filter(|&&p| p == b).count() as f64 / n;
                mi += joint * (joint / (pa * pb)).ln();
            }
        }
    }
    mi / (ht * hp).sqrt()
}

/// (both together, together only in pred, together only in truth, total)
fn brute_pairs(truth: &[usize], pred: &[usize]) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp, mut fn_, mut total) = (0, 0, 0, 0);
    for i in 0..truth.len() {
        for j in i + 1..truth.len() {
            total += 1;
            match (truth[i] == truth[j], pred[i] == pred[j]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    (tp, fp, fn_, total)
}

pub fn brute_rand_index(truth: &[usize], pred: &[usize]) -> f64 {
    let (_, fp, fn_, total) = brute_pairs(truth, pred);
    (total - fp - fn_) as f64 / total as f64
}

pub fn brute_pairwise_f(truth: &[usize], pred: &[usize]) -> f64 {
    let (tp, fp, fn_, _) = brute_pairs(truth, pred);
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    if tp + fn_ == 0 || tp + fp == 0 || tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Direct double-loop Gaussian KDE with Scott's bandwidth.
pub fn reference_kde(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let h = var.sqrt() * n.powf(-0.2);
    grid.iter()
        .map(|&g| {
            let mut acc = 0.0;
            for &s in samples {
                let u = (g - s) / h;
                acc += (-0.5 * u * u).exp();
            }
            acc / (n * h * (2.0 * PI).sqrt())
        })
        .collect()
}
