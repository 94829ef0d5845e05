//! Full-batch joint optimization of the latent table and every decoder.

mod checkpoint;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_load, checkpoint_save, CHECKPOINT_SCHEMA_VERSION};

use crate::data::{write_atomic, MultiViewDataset};
use crate::error::{Error, Result};
use crate::model::{
    init_model, loss_gradients, predict_all, HiddenWidths, LatentTable, LossBreakdown, Objective,
    RNet, Regularizer, ViewPrediction,
};
use crate::numerics::{AdamConfig, AdamState, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Separate Adam rate for the latent table; `None` shares `lr`.
    pub latent_lr: Option<f64>,
    pub seed: u64,
    pub objective: Objective,
    /// Epochs trained with σ frozen at 1 before the sigma heads are released.
    pub warm_up_epochs: usize,
    /// Early stopping compares the total loss with its value this many
    /// epochs earlier.
    pub window: usize,
    /// Relative change below which training stops. Zero disables it.
    pub tolerance: f64,
    /// Hidden widths of both heads; derived from `latent_dim` when absent.
    pub hidden: Option<HiddenWidths>,
    /// Standard deviation of the initial latent entries.
    pub init_scale: f64,
    pub regularizer: Regularizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 50,
            epochs: 2000,
            lr: 1e-3,
            latent_lr: None,
            seed: 0,
            objective: Objective::Dua,
            warm_up_epochs: 0,
            window: 20,
            tolerance: 1e-6,
            hidden: None,
            init_scale: 1.0,
            regularizer: Regularizer::PerObservation,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !positive(self.lr) || self.latent_lr.is_some_and(|lr| !positive(lr)) {
            return Err(Error::Config(
                "learning rates must be positive and finite".into(),
            ));
        }
        if self.window == 0 {
            return Err(Error::Config(
                "the early-stopping window must be at least 1".into(),
            ));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(
                "tolerance must be finite and nonnegative".into(),
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(
                "init_scale must be finite and nonnegative".into(),
            ));
        }
        if let Some(h) = self.hidden {
            if h.first == 0 || h.second == 0 {
                return Err(Error::Config("hidden widths must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn hidden_widths(&self) -> HiddenWidths {
        self.hidden
            .unwrap_or_else(|| HiddenWidths::for_latent_dim(self.latent_dim))
    }

    /// Fills every optional field with its effective value.
    pub fn resolved(&self) -> TrainConfig {
        TrainConfig {
            latent_lr: Some(self.latent_lr.unwrap_or(self.lr)),
            hidden: Some(self.hidden_widths()),
            ..self.clone()
        }
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// Everything a run needs to continue: parameters, latents, optimizer
/// moments, and the per-epoch loss history.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub nets: Vec<RNet>,
    pub latent: LatentTable,
    pub latent_adam: AdamState,
    pub mean_adams: Vec<AdamState>,
    pub sigma_adams: Vec<AdamState>,
    /// Epochs completed; equals `history.len()`.
    pub epoch: usize,
    /// Loss at the start of each completed epoch.
    pub history: Vec<LossBreakdown>,
    pub stopped_early: bool,
}

impl TrainState {
    pub fn new(data: &MultiViewDataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let (nets, latent) = init_model(
            &data.view_widths(),
            config.latent_dim,
            data.n_samples(),
            &mut rng,
            config.init_scale,
            config.hidden_widths(),
        )?;
        let latent_adam = AdamState::new(
            config.adam(config.latent_lr.unwrap_or(config.lr)),
            latent.h.data().len(),
        );
        let mean_adams = nets
            .iter()
            .map(|n| AdamState::new(config.adam(config.lr), n.mean_head.param_count()))
            .collect();
        let sigma_adams = nets
            .iter()
            .map(|n| AdamState::new(config.adam(config.lr), n.sigma_head.param_count()))
            .collect();
        Ok(TrainState {
            config: config.clone(),
            nets,
            latent,
            latent_adam,
            mean_adams,
            sigma_adams,
            epoch: 0,
            history: Vec::new(),
            stopped_early: false,
        })
    }

    pub fn predictions(&self) -> Result<Vec<ViewPrediction>> {
        predict_all(&self.nets, &self.latent)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|l| l.total)
    }

    pub fn loss_totals(&self) -> Vec<f64> {
        self.history.iter().map(|l| l.total).collect()
    }

    fn check_compatible(&self, data: &MultiViewDataset) -> Result<()> {
        if self.latent.n_samples() != data.n_samples() || self.nets.len() != data.n_views() {
            return Err(Error::Data(format!(
                "model covers {} samples and {} views, dataset has {} and {}",
                self.latent.n_samples(),
                self.nets.len(),
                data.n_samples(),
                data.n_views()
            )));
        }
        for (v, (net, w)) in self.nets.iter().zip(data.view_widths()).enumerate() {
            if net.view_width() != w {
                return Err(Error::Data(format!(
                    "view {v}: model reconstructs {} features, dataset has {w}",
                    net.view_width()
                )));
            }
        }
        Ok(())
    }
}

/// Steps a [`TrainState`] on one dataset.
pub struct Trainer<'a> {
    data: &'a MultiViewDataset,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a MultiViewDataset, config: &TrainConfig) -> Result<Self> {
        Ok(Trainer {
            data,
            state: TrainState::new(data, config)?,
        })
    }

    /// Resumes from a saved state.
    pub fn resume(data: &'a MultiViewDataset, state: TrainState) -> Result<Self> {
        state.config.validate()?;
        state.check_compatible(data)?;
        Ok(Trainer { data, state })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.stopped_early || self.state.epoch >= self.state.config.epochs
    }

    /// The objective in force at the current epoch. During warm-up the
    /// uncertainty-aware objective runs with σ ≡ 1, which is exactly the
    /// squared-error objective.
    pub fn current_objective(&self) -> Objective {
        let cfg = &self.state.config;
        if cfg.objective == Objective::Dua && self.state.epoch < cfg.warm_up_epochs {
            Objective::Rnets
        } else {
            cfg.objective
        }
    }

    /// One full-batch Adam update of every latent and parameter. Returns
    /// the loss measured before the update.
    pub fn step(&mut self) -> Result<&LossBreakdown> {
        let epoch = self.state.epoch;
        let objective = self.current_objective();
        let state = &mut self.state;
        let grads = loss_gradients(
            self.data,
            &state.nets,
            &state.latent,
            objective,
            state.config.regularizer,
        )
        .map_err(|e| match e {
            Error::Data(detail) => Error::Divergence { epoch, detail },
            other => other,
        })?;
        if !grads.loss.total.is_finite() {
            let mut detail = format!("total loss {}", grads.loss.total);
            for (v, (d, r)) in grads
                .loss
                .data_terms
                .iter()
                .zip(&grads.loss.reg_terms)
                .enumerate()
            {
                if !(d.is_finite() && r.is_finite()) {
                    let _ = write!(detail, "; view {v}: data term {d}, regularizer {r}");
                }
            }
            return Err(Error::Divergence { epoch, detail });
        }

        state
            .latent_adam
            .step_flat(state.latent.h.data_mut(), grads.latent.data())?;
        for (v, (net, g)) in state.nets.iter_mut().zip(&grads.nets).enumerate() {
            let mut params = net.mean_head.tensors_mut();
            state.mean_adams[v].step(&mut params, &g.mean.tensors())?;
            if let Some(sigma) = &g.sigma {
                let mut params = net.sigma_head.tensors_mut();
                state.sigma_adams[v].step(&mut params, &sigma.tensors())?;
            }
        }

        state.history.push(grads.loss);
        state.epoch += 1;
        state.stopped_early =
            should_stop(&state.history, state.config.window, state.config.tolerance);
        Ok(state.history.last().expect("just pushed"))
    }

    /// Steps until the epoch budget is spent or early stopping fires.
    pub fn run(mut self) -> Result<TrainState> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.state)
    }
}

fn should_stop(history: &[LossBreakdown], window: usize, tolerance: f64) -> bool {
    if tolerance == 0.0 || history.len() <= window {
        return false;
    }
    let now = history[history.len() - 1].total;
    let then = history[history.len() - 1 - window].total;
    (now - then).abs() <= tolerance * then.abs().max(f64::MIN_POSITIVE)
}

/// Trains a fresh model on `data`.
pub fn train(data: &MultiViewDataset, config: &TrainConfig) -> Result<TrainState> {
    Trainer::new(data, config)?.run()
}

/// Rescales the loss history to `[0, 1]`; a constant history maps to zeros.
pub fn normalized_loss_curve(history: &[f64]) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(Error::Contract(
            "cannot normalize an empty loss history".into(),
        ));
    }
    let lo = history.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.0; history.len()]);
    }
    Ok(history.iter().map(|x| (x - lo) / (hi - lo)).collect())
}

/// Long-format loss CSV: `epoch,total,view,data_term,reg_term`, one row
/// per epoch and view.
pub fn loss_csv(history: &[LossBreakdown]) -> String {
    let mut out = String::from("epoch,total,view,data_term,reg_term\n");
    for (epoch, l) in history.iter().enumerate() {
        for (v, (d, r)) in l.data_terms.iter().zip(&l.reg_terms).enumerate() {
            let _ = writeln!(out, "{epoch},{:?},{v},{d:?},{r:?}", l.total);
        }
    }
    out
}

pub fn write_loss_csv(path: &Path, history: &[LossBreakdown]) -> Result<()> {
    write_atomic(path, loss_csv(history).as_bytes())
}
