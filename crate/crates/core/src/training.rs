//! Full-batch Adam training of the contrastive objective with early
//! stopping and best-snapshot retention.

use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::data::CitationGraph;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, Objective};
use crate::numerics::{adam_step, AdamState, Rng};

/// Stream ids for [`Rng::derived`], so that initialization, training draws
/// and probe seeds never share a sequence.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const TRAIN: u64 = 1;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping. 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            max_epochs: 500,
            patience: 20,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) exceeds max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub epoch: usize,
    pub best_loss: f64,
    pub best_epoch: Option<usize>,
    pub best_params: ModelParams,
    pub epochs_since_best: usize,
    pub loss_history: Vec<f64>,
}

impl TrainState {
    pub fn new(params: ModelParams) -> Self {
        Self {
            adam: AdamState::new(params.param_count()),
            best_params: params.clone(),
            params,
            epoch: 0,
            best_loss: f64::INFINITY,
            best_epoch: None,
            epochs_since_best: 0,
            loss_history: Vec::new(),
        }
    }

    /// Records a loss for the current parameters, updating the snapshot.
    fn record(&mut self, loss: f64) {
        self.epoch += 1;
        self.loss_history.push(loss);
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = Some(self.epoch);
            self.best_params = self.params.clone();
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    /// Loss of the parameters at the start of each epoch.
    pub losses: Vec<f64>,
    /// 1-based epoch whose parameters were kept, if any epoch ran.
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
    pub stopped_early: bool,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    /// Copy with timing zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_seconds: 0.0,
            ..self.clone()
        }
    }
}

/// Trains from a fresh seeded initialization. When the variant has
/// contrastive training switched off, no epoch runs and the initialization
/// is returned.
pub fn train(graph: &CitationGraph, config: &TrainConfig) -> Result<(ModelParams, RunReport)> {
    config.validate()?;
    let mut init_rng = Rng::derived(config.seed, streams::INIT);
    let params = ModelParams::init(&config.model, graph.feature_count(), &mut init_rng)?;
    train_from(graph, config, params)
}

pub fn train_from(
    graph: &CitationGraph,
    config: &TrainConfig,
    params: ModelParams,
) -> Result<(ModelParams, RunReport)> {
    config.validate()?;
    let started = Instant::now();
    let mut rng = Rng::derived(config.seed, streams::TRAIN);
    let mut objective = Objective::new(graph, config.model.clone())?;
    let mut state = TrainState::new(params);
    let epochs = if config.model.components.mutual_information {
        config.max_epochs
    } else {
        0
    };

    let mut stopped_early = false;
    let mut flat = state.params.flatten();
    while state.epoch < epochs {
        let (loss, grads) = objective.loss_and_grad(&state.params, &mut rng)?;
        if !loss.is_finite() {
            let norms = state
                .params
                .group_norms()
                .iter()
                .map(|(k, v)| format!("{k}={v:.6e}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::NonFiniteLoss {
                epoch: state.epoch + 1,
                norms,
            });
        }
        state.record(loss);
        debug!("epoch {:>4}  loss {loss:.6}", state.epoch);
        if config.patience > 0 && state.epochs_since_best >= config.patience {
            stopped_early = true;
            break;
        }
        adam_step(&mut flat, &grads.flatten(), &mut state.adam, config.lr)?;
        state.params.assign_flat(&flat)?;
    }

    let report = RunReport {
        config: config.clone(),
        best_epoch: state.best_epoch,
        best_loss: state.best_epoch.map(|_| state.best_loss),
        losses: state.loss_history,
        stopped_early,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    if let (Some(e), Some(l)) = (report.best_epoch, report.best_loss) {
        info!(
            "trained {} epochs, best loss {l:.6} at epoch {e}",
            report.losses.len()
        );
    }
    Ok((state.best_params, report))
}
