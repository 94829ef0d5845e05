//! Per-view reversal networks, the latent table, and the two training
//! objectives with their exact gradients.
//!
//! A reversal network decodes a latent code `h` into a view: its mean head
//! predicts the reconstruction `μ = f(h)`, its sigma head predicts
//! `ln σ = g(h)`. The uncertainty-aware objective sums, over samples and
//! views,
//!
//! ```text
//! ‖x − μ‖² / (2σ²) + ln σ
//! ```
//!
//! while the uncertainty-free ablation uses `½‖x − μ‖²` and never touches
//! the sigma head.

use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::numerics::{gaussian_draw, mlp_backward, mlp_forward, Matrix, MlpCache, MlpParams, Rng};

/// Predicted `ln σ` is clamped into `[-LOG_SIGMA_LIMIT, LOG_SIGMA_LIMIT]`.
pub const LOG_SIGMA_LIMIT: f64 = 6.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Heteroscedastic Gaussian objective with learned σ.
    #[default]
    Dua,
    /// Plain squared-error reconstruction; σ ignored.
    Rnets,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Dua => "dua",
            Objective::Rnets => "rnets",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dua" => Ok(Objective::Dua),
            "rnets" | "r-nets" => Ok(Objective::Rnets),
            other => Err(Error::Config(format!(
                "unknown objective {other:?} (expected dua or rnets)"
            ))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Coefficient on the `ln σ` term of each (sample, view) pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// `ln σ` once per observation.
    #[default]
    PerObservation,
    /// `D_v · ln σ`, the exact isotropic Gaussian likelihood of a
    /// `D_v`-dimensional observation.
    PerFeature,
}

impl Regularizer {
    fn coefficient(&self, width: usize) -> f64 {
        match self {
            Regularizer::PerObservation => 1.0,
            Regularizer::PerFeature => width as f64,
        }
    }
}

/// Hidden widths for both heads of every view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenWidths {
    pub first: usize,
    pub second: usize,
}

impl HiddenWidths {
    /// `max(d, 16)` and `max(2d, 32)`.
    pub fn for_latent_dim(d: usize) -> Self {
        HiddenWidths {
            first: d.max(16),
            second: (2 * d).max(32),
        }
    }
}

/// One decoder per view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RNet {
    /// `d → D_v`
    pub mean_head: MlpParams,
    /// `d → 1`, predicting `ln σ`.
    pub sigma_head: MlpParams,
}

impl RNet {
    pub fn latent_dim(&self) -> usize {
        self.mean_head.input_width()
    }

    pub fn view_width(&self) -> usize {
        self.mean_head.output_width()
    }
}

/// The `N × d` matrix of per-sample representations, trained directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTable {
    pub h: Matrix,
}

impl LatentTable {
    pub fn n_samples(&self) -> usize {
        self.h.rows()
    }

    pub fn dim(&self) -> usize {
        self.h.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewPrediction {
    /// `N × D_v` reconstructions.
    pub mu: Matrix,
    /// Clamped `ln σ`, one per sample.
    pub log_sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Per view, `Σᵢ ‖x − μ‖² / (2σ²)`.
    pub data_terms: Vec<f64>,
    /// Per view, `Σᵢ c·ln σ`.
    pub reg_terms: Vec<f64>,
}

impl LossBreakdown {
    fn from_terms(data_terms: Vec<f64>, reg_terms: Vec<f64>) -> Self {
        let total = data_terms.iter().sum::<f64>() + reg_terms.iter().sum::<f64>();
        LossBreakdown {
            total,
            data_terms,
            reg_terms,
        }
    }
}

/// Random decoders and latent table. Latents are `N(0, init_scale²)`;
/// weights are He-initialized and biases zero.
pub fn init_model(
    view_widths: &[usize],
    latent_dim: usize,
    n_samples: usize,
    rng: &mut Rng,
    init_scale: f64,
    hidden: HiddenWidths,
) -> Result<(Vec<RNet>, LatentTable)> {
    if latent_dim == 0 || n_samples == 0 {
        return Err(Error::Config(format!(
            "latent dimension ({latent_dim}) and sample count ({n_samples}) must be positive"
        )));
    }
    if view_widths.is_empty() || view_widths.contains(&0) {
        return Err(Error::Config(format!(
            "view widths {view_widths:?} must be nonempty and positive"
        )));
    }
    if hidden.first == 0 || hidden.second == 0 {
        return Err(Error::Config("hidden widths must be positive".into()));
    }
    if !(init_scale >= 0.0 && init_scale.is_finite()) {
        return Err(Error::Config(format!(
            "latent init scale {init_scale} must be finite and nonnegative"
        )));
    }
    let mut h = gaussian_draw(rng, n_samples, latent_dim);
    h.data_mut().iter_mut().for_each(|x| *x *= init_scale);
    let nets = view_widths
        .iter()
        .map(|&width| RNet {
            mean_head: MlpParams::gaussian([latent_dim, hidden.first, hidden.second, width], rng),
            sigma_head: MlpParams::gaussian([latent_dim, hidden.first, hidden.second, 1], rng),
        })
        .collect();
    Ok((nets, LatentTable { h }))
}

fn clamp_log_sigma(raw: f64) -> f64 {
    raw.clamp(-LOG_SIGMA_LIMIT, LOG_SIGMA_LIMIT)
}

/// Runs both heads of `net` on every latent row.
pub fn predict_view(net: &RNet, latent: &LatentTable) -> Result<ViewPrediction> {
    let (mu, _) = mlp_forward(&net.mean_head, &latent.h)?;
    let (raw, _) = mlp_forward(&net.sigma_head, &latent.h)?;
    Ok(ViewPrediction {
        mu,
        log_sigma: raw.data().iter().map(|&s| clamp_log_sigma(s)).collect(),
    })
}

pub fn predict_all(nets: &[RNet], latent: &LatentTable) -> Result<Vec<ViewPrediction>> {
    nets.iter().map(|net| predict_view(net, latent)).collect()
}

fn check_alignment(data: &MultiViewDataset, preds: &[ViewPrediction]) -> Result<()> {
    if preds.len() != data.n_views() {
        return Err(Error::shape(
            "loss",
            format!("{} predictions for {} views", preds.len(), data.n_views()),
        ));
    }
    for (v, (x, p)) in data.views().iter().zip(preds).enumerate() {
        if x.shape() != p.mu.shape() || p.log_sigma.len() != x.rows() {
            return Err(Error::shape(
                "loss",
                format!(
                    "view {v}: data {}x{}, prediction {}x{} with {} sigmas",
                    x.rows(),
                    x.cols(),
                    p.mu.rows(),
                    p.mu.cols(),
                    p.log_sigma.len()
                ),
            ));
        }
        if !p.mu.is_finite() || p.log_sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data(format!(
                "view {v}: prediction contains non-finite values"
            )));
        }
    }
    Ok(())
}

fn squared_residuals(x: &Matrix, mu: &Matrix) -> Vec<f64> {
    x.row_iter()
        .zip(mu.row_iter())
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
        .collect()
}

/// The uncertainty-aware objective with one `ln σ` per observation.
pub fn dua_loss(data: &MultiViewDataset, preds: &[ViewPrediction]) -> Result<LossBreakdown> {
    dua_loss_with(data, preds, Regularizer::PerObservation)
}

pub fn dua_loss_with(
    data: &MultiViewDataset,
    preds: &[ViewPrediction],
    reg: Regularizer,
) -> Result<LossBreakdown> {
    check_alignment(data, preds)?;
    let mut data_terms = Vec::with_capacity(preds.len());
    let mut reg_terms = Vec::with_capacity(preds.len());
    for (x, p) in data.views().iter().zip(preds) {
        let c = reg.coefficient(x.cols());
        let r2 = squared_residuals(x, &p.mu);
        data_terms.push(
            r2.iter()
                .zip(&p.log_sigma)
                .map(|(r, ls)| 0.5 * r * (-2.0 * ls).exp())
                .sum(),
        );
        reg_terms.push(c * p.log_sigma.iter().sum::<f64>());
    }
    Ok(LossBreakdown::from_terms(data_terms, reg_terms))
}

/// The uncertainty-free ablation: `Σ ½‖x − μ‖²`.
pub fn rnets_loss(data: &MultiViewDataset, preds: &[ViewPrediction]) -> Result<LossBreakdown> {
    check_alignment(data, preds)?;
    let data_terms = data
        .views()
        .iter()
        .zip(preds)
        .map(|(x, p)| 0.5 * squared_residuals(x, &p.mu).iter().sum::<f64>())
        .collect();
    Ok(LossBreakdown::from_terms(
        data_terms,
        vec![0.0; preds.len()],
    ))
}

/// `σ = exp(ln σ)` for every sample (rows) and view (columns).
pub fn extract_sigma(preds: &[ViewPrediction]) -> Matrix {
    let n = preds.first().map_or(0, |p| p.log_sigma.len());
    Matrix::from_fn(n, preds.len(), |i, v| preds[v].log_sigma[i].exp())
}

/// Gradients of one view's decoder. `sigma` is `None` under the
/// uncertainty-free objective, which never evaluates the sigma head.
#[derive(Clone, Debug)]
pub struct RNetGrads {
    pub mean: MlpParams,
    pub sigma: Option<MlpParams>,
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub nets: Vec<RNetGrads>,
    pub latent: Matrix,
    pub loss: LossBreakdown,
}

/// Loss and exact gradients of the selected objective with respect to
/// every decoder parameter and every latent entry. The clamp on `ln σ`
/// passes gradient only inside `[-6, 6]`.
pub fn loss_gradients(
    data: &MultiViewDataset,
    nets: &[RNet],
    latent: &LatentTable,
    objective: Objective,
    reg: Regularizer,
) -> Result<Gradients> {
    if nets.len() != data.n_views() {
        return Err(Error::shape(
            "loss_gradients",
            format!("{} networks for {} views", nets.len(), data.n_views()),
        ));
    }
    if latent.n_samples() != data.n_samples() {
        return Err(Error::shape(
            "loss_gradients",
            format!(
                "{} latent rows for {} samples",
                latent.n_samples(),
                data.n_samples()
            ),
        ));
    }

    let mut latent_grad = Matrix::zeros(latent.n_samples(), latent.dim());
    let mut grads = Vec::with_capacity(nets.len());
    let mut data_terms = Vec::with_capacity(nets.len());
    let mut reg_terms = Vec::with_capacity(nets.len());

    for (v, (net, x)) in nets.iter().zip(data.views()).enumerate() {
        let (mu, mean_cache) = mlp_forward(&net.mean_head, &latent.h)?;
        if mu.shape() != x.shape() {
            return Err(Error::shape(
                "loss_gradients",
                format!(
                    "view {v}: network outputs {} features, data has {}",
                    mu.cols(),
                    x.cols()
                ),
            ));
        }
        if !mu.is_finite() {
            return Err(Error::Data(format!(
                "view {v}: reconstruction is not finite"
            )));
        }
        let r2 = squared_residuals(x, &mu);

        let (weights, sigma_part) = match objective {
            Objective::Rnets => {
                data_terms.push(0.5 * r2.iter().sum::<f64>());
                reg_terms.push(0.0);
                (vec![1.0; x.rows()], None)
            }
            Objective::Dua => {
                let (raw, sigma_cache) = mlp_forward(&net.sigma_head, &latent.h)?;
                if !raw.is_finite() {
                    return Err(Error::Data(format!(
                        "view {v}: sigma head output is not finite"
                    )));
                }
                let c = reg.coefficient(x.cols());
                let mut data_term = 0.0;
                let mut reg_term = 0.0;
                let mut weights = Vec::with_capacity(x.rows());
                let mut raw_grad = Vec::with_capacity(x.rows());
                for (&s, &r) in raw.data().iter().zip(&r2) {
                    let ls = clamp_log_sigma(s);
                    let inv_var = (-2.0 * ls).exp();
                    data_term += 0.5 * r * inv_var;
                    reg_term += c * ls;
                    weights.push(inv_var);
                    let inside = (-LOG_SIGMA_LIMIT..=LOG_SIGMA_LIMIT).contains(&s);
                    raw_grad.push(if inside { c - r * inv_var } else { 0.0 });
                }
                data_terms.push(data_term);
                reg_terms.push(reg_term);
                (weights, Some((sigma_cache, Matrix::column(raw_grad))))
            }
        };

        let mut mu_grad = mu;
        for (i, w) in weights.iter().enumerate() {
            for (g, xv) in mu_grad.row_mut(i).iter_mut().zip(x.row(i)) {
                *g = w * (*g - xv);
            }
        }
        let (mean_grad, dh) = mlp_backward(&net.mean_head, &mean_cache, &mu_grad)?;
        accumulate(&mut latent_grad, &dh);

        let sigma_grad = match sigma_part {
            Some((cache, raw_grad)) => {
                Some(backprop_sigma(net, &cache, &raw_grad, &mut latent_grad)?)
            }
            None => None,
        };
        grads.push(RNetGrads {
            mean: mean_grad,
            sigma: sigma_grad,
        });
    }

    Ok(Gradients {
        nets: grads,
        latent: latent_grad,
        loss: LossBreakdown::from_terms(data_terms, reg_terms),
    })
}

fn backprop_sigma(
    net: &RNet,
    cache: &MlpCache,
    raw_grad: &Matrix,
    latent_grad: &mut Matrix,
) -> Result<MlpParams> {
    let (g, dh) = mlp_backward(&net.sigma_head, cache, raw_grad)?;
    accumulate(latent_grad, &dh);
    Ok(g)
}

fn accumulate(into: &mut Matrix, add: &Matrix) {
    for (a, b) in into.data_mut().iter_mut().zip(add.data()) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: &[f64]) -> MultiViewDataset {
        MultiViewDataset::new(vec![Matrix::from_rows(&[x]).unwrap()], None).unwrap()
    }

    fn pred(mu: &[f64], log_sigma: f64) -> ViewPrediction {
        ViewPrediction {
            mu: Matrix::from_rows(&[mu]).unwrap(),
            log_sigma: vec![log_sigma],
        }
    }

    #[test]
    fn init_shapes_and_determinism() {
        let hidden = HiddenWidths::for_latent_dim(3);
        let (nets, latent) = init_model(&[6, 4], 3, 10, &mut Rng::new(1), 1.0, hidden).unwrap();
        assert_eq!(nets[0].mean_head.widths(), [3, 16, 32, 6]);
        assert_eq!(nets[1].mean_head.widths(), [3, 16, 32, 4]);
        assert!(nets
            .iter()
            .all(|n| n.sigma_head.output_width() == 1 && n.sigma_head.input_width() == 3));
        assert_eq!(latent.h.shape(), (10, 3));
        let again = init_model(&[6, 4], 3, 10, &mut Rng::new(1), 1.0, hidden).unwrap();
        assert_eq!((nets, latent), again);
    }

    #[test]
    fn zero_init_scale_gives_zero_latents() {
        let (_, latent) = init_model(
            &[2],
            2,
            5,
            &mut Rng::new(0),
            0.0,
            HiddenWidths::for_latent_dim(2),
        )
        .unwrap();
        assert!(latent.h.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_rejects_degenerate_dimensions() {
        let hw = HiddenWidths::for_latent_dim(2);
        assert!(matches!(
            init_model(&[2], 0, 5, &mut Rng::new(0), 1.0, hw),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_model(&[2, 0], 2, 5, &mut Rng::new(0), 1.0, hw),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_model(&[2], 2, 0, &mut Rng::new(0), 1.0, hw),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_sigma_head_means_unit_sigma() {
        let (mut nets, latent) = init_model(
            &[3],
            2,
            4,
            &mut Rng::new(2),
            1.0,
            HiddenWidths::for_latent_dim(2),
        )
        .unwrap();
        nets[0].sigma_head = MlpParams::zeros(nets[0].sigma_head.widths());
        let p = predict_view(&nets[0], &latent).unwrap();
        assert_eq!(p.log_sigma, vec![0.0; 4]);
        assert!(extract_sigma(&[p]).data().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn log_sigma_is_clamped() {
        let (mut nets, latent) = init_model(
            &[3],
            2,
            4,
            &mut Rng::new(2),
            1.0,
            HiddenWidths::for_latent_dim(2),
        )
        .unwrap();
        let mut head = MlpParams::zeros(nets[0].sigma_head.widths());
        head.layers[2].b[0] = 10.0;
        nets[0].sigma_head = head;
        assert_eq!(
            predict_view(&nets[0], &latent).unwrap().log_sigma,
            vec![6.0; 4]
        );
    }

    #[test]
    fn sigma_extraction() {
        let preds = [ViewPrediction {
            mu: Matrix::zeros(3, 1),
            log_sigma: vec![0.0, -6.0, 1.0],
        }];
        let s = extract_sigma(&preds);
        assert_eq!(s[(0, 0)], 1.0);
        assert!((s[(1, 0)] - 0.002_478_75).abs() < 1e-8);
        assert!(s[(2, 0)] > s[(0, 0)]);
    }

    #[test]
    fn scalar_loss_values() {
        assert_eq!(
            dua_loss(&single(&[1.0, 0.0]), &[pred(&[1.0, 0.0], 0.0)])
                .unwrap()
                .total,
            0.0
        );
        assert_eq!(
            dua_loss(&single(&[1.0, 0.0]), &[pred(&[0.0, 0.0], 0.0)])
                .unwrap()
                .total,
            0.5
        );
        let l = dua_loss(&single(&[3.0, 4.0]), &[pred(&[0.0, 0.0], 5f64.ln())]).unwrap();
        assert!((l.total - (0.5 + 5f64.ln())).abs() < 1e-12);
        assert!((l.total - 2.10944).abs() < 1e-5);
        assert!((l.data_terms[0] + l.reg_terms[0] - l.total).abs() < 1e-15);
    }

    #[test]
    fn per_feature_regularizer_scales_log_sigma() {
        let l = dua_loss_with(
            &single(&[3.0, 4.0]),
            &[pred(&[0.0, 0.0], 5f64.ln())],
            Regularizer::PerFeature,
        )
        .unwrap();
        assert!((l.reg_terms[0] - 2.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rnets_loss_values() {
        assert_eq!(
            rnets_loss(&single(&[1.0, 0.0]), &[pred(&[1.0, 0.0], 3.0)])
                .unwrap()
                .total,
            0.0
        );
        let l = rnets_loss(&single(&[1.0, 0.0]), &[pred(&[0.0, 0.0], 3.0)]).unwrap();
        assert_eq!(l.total, 0.5);
        assert_eq!(l.reg_terms, vec![0.0]);
        let unit = dua_loss(&single(&[1.0, 0.0]), &[pred(&[0.0, 0.0], 0.0)]).unwrap();
        assert_eq!(unit, l);
    }

    #[test]
    fn misaligned_predictions_are_rejected() {
        let d = single(&[1.0, 2.0]);
        assert!(matches!(
            dua_loss(&d, &[pred(&[1.0], 0.0)]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            dua_loss(&d, &[pred(&[f64::NAN, 0.0], 0.0)]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn zero_residual_zeroes_mean_output_gradients() {
        let (mut nets, latent) = init_model(
            &[3],
            2,
            4,
            &mut Rng::new(5),
            1.0,
            HiddenWidths::for_latent_dim(2),
        )
        .unwrap();
        nets[0].sigma_head = MlpParams::zeros(nets[0].sigma_head.widths());
        let mu = predict_view(&nets[0], &latent).unwrap().mu;
        let data = MultiViewDataset::new(vec![mu], None).unwrap();
        let g = loss_gradients(
            &data,
            &nets,
            &latent,
            Objective::Dua,
            Regularizer::PerObservation,
        )
        .unwrap();
        let out = &g.nets[0].mean.layers[2];
        assert!(out.w.data().iter().chain(&out.b).all(|&x| x == 0.0));
        assert_eq!(g.loss.total, 0.0);
    }

    #[test]
    fn rnets_gradients_skip_sigma_head() {
        let (nets, latent) = init_model(
            &[3, 2],
            2,
            4,
            &mut Rng::new(6),
            1.0,
            HiddenWidths::for_latent_dim(2),
        )
        .unwrap();
        let data =
            MultiViewDataset::new(vec![Matrix::zeros(4, 3), Matrix::zeros(4, 2)], None).unwrap();
        let g = loss_gradients(
            &data,
            &nets,
            &latent,
            Objective::Rnets,
            Regularizer::PerObservation,
        )
        .unwrap();
        assert!(g.nets.iter().all(|n| n.sigma.is_none()));
        let preds = predict_all(&nets, &latent).unwrap();
        assert!((g.loss.total - rnets_loss(&data, &preds).unwrap().total).abs() < 1e-12);
    }
}
