//! Adam optimisation with validation-based early stopping.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{check_dims, Error, Result};
use crate::losses::{combined_loss, combined_loss_value, LossKind, LossRecipe};
use crate::model::ModelBundle;
use crate::sampling::{SamplerConfig, TupleBatch, TupleSampler};
use crate::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl AdamState {
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dims(self.first_moment.len(), params.len())?;
        check_dims(params.len(), grads.len())?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Which loss drives early stopping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationCriterion {
    /// Triplet term only, whatever the training recipe.
    Triplet,
    /// The full training recipe.
    Composite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub max_retries: usize,
    pub validate_on: ValidationCriterion,
    /// Tuples per term in the fixed validation batch.
    pub val_tuples: usize,
    /// Stop once this many training triplets have been drawn.
    pub max_triplets: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batches_per_epoch: 50,
            batch_size: 128,
            patience: 10,
            learning_rate: 1e-3,
            seed: 0,
            max_retries: 100,
            validate_on: ValidationCriterion::Triplet,
            val_tuples: 512,
            max_triplets: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.batches_per_epoch == 0
            || self.batch_size == 0
            || self.patience == 0
            || self.val_tuples == 0
        {
            return Err(Error::Config(
                "epochs, batches_per_epoch, batch_size, patience and val_tuples must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.max_triplets == Some(0) {
            return Err(Error::Config("max_triplets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean of each active term over the epoch's batches.
    pub terms: BTreeMap<LossKind, f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub triplets_seen: usize,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// `epoch,train_loss,val_loss,<one column per term>`.
    pub fn to_csv(&self) -> String {
        let kinds: Vec<LossKind> = self
            .epochs
            .first()
            .map(|e| e.terms.keys().copied().collect())
            .unwrap_or_default();
        let mut s = String::from("epoch,train_loss,val_loss");
        for k in &kinds {
            write!(s, ",{}", k.as_str().to_ascii_lowercase()).unwrap();
        }
        s.push('\n');
        for e in &self.epochs {
            write!(s, "{},{:.12e},{:.12e}", e.epoch, e.train_loss, e.val_loss).unwrap();
            for k in &kinds {
                write!(s, ",{:.12e}", e.terms.get(k).copied().unwrap_or(f64::NAN)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Patience-based stopping on a minimised metric.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if !(value < best) => {
                let since = epoch - self.best.unwrap().0;
                if since >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, value));
                StopDecision::Improved
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: ModelBundle,
    pub log: TrainLog,
}

const SAMPLER_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;

pub fn train(
    init: ModelBundle,
    recipe: &LossRecipe,
    train_ds: &Dataset,
    val_ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let mut rng = root.derive(SAMPLER_STREAM);
    let sampler = TupleSampler::new(train_ds);
    let sampler_cfg = SamplerConfig {
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        max_retries: cfg.max_retries,
    };

    let val_recipe = match cfg.validate_on {
        ValidationCriterion::Triplet => recipe.triplet_only(),
        ValidationCriterion::Composite => recipe.clone(),
    };
    let val_batch: TupleBatch = TupleSampler::new(val_ds).sample(
        &val_recipe,
        &SamplerConfig {
            batch_size: cfg.val_tuples,
            ..sampler_cfg
        },
        &mut root.derive(VALIDATION_STREAM),
    )?;

    let mut model = init;
    let mut params = model.params_flat();
    let mut adam = AdamState::new(params.len(), cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut log = TrainLog::default();

    'epochs: for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut term_sums: BTreeMap<LossKind, f64> = BTreeMap::new();
        let mut batches = 0usize;
        let mut capped = false;
        for b in 0..cfg.batches_per_epoch {
            if let Some(cap) = cfg.max_triplets {
                if log.triplets_seen >= cap {
                    capped = true;
                    break;
                }
            }
            let batch = sampler.sample(recipe, &sampler_cfg, &mut rng)?;
            log.triplets_seen += batch.triplets.len();
            let loss = combined_loss(recipe, &batch, train_ds, &model)?;
            if !loss.value.is_finite() || !crate::math::all_finite(&loss.grads) {
                return Err(Error::NonFinite {
                    context: format!("training loss at epoch {epoch}, batch {b}"),
                });
            }
            loss_sum += loss.value;
            for (k, v) in loss.terms {
                *term_sums.entry(k).or_insert(0.0) += v;
            }
            batches += 1;
            adam.step(&mut params, &loss.grads)?;
            model.set_params_flat(&params)?;
        }
        if batches == 0 {
            break 'epochs;
        }
        let val_loss = combined_loss_value(&val_recipe, &val_batch, val_ds, &model)?.value;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                context: format!("validation loss at epoch {epoch}"),
            });
        }
        let n = batches as f64;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            val_loss,
            terms: term_sums.into_iter().map(|(k, v)| (k, v / n)).collect(),
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best_params.clone_from(&params),
            StopDecision::Continue => {}
            StopDecision::Stop => break 'epochs,
        }
        if capped {
            break 'epochs;
        }
    }

    log.best_epoch = stopper.best_epoch().ok_or_else(|| {
        Error::Config("training finished without completing an epoch".into())
    })?;
    model.set_params_flat(&best_params)?;
    Ok(TrainOutcome { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        let mut adam = AdamState::new(1, 1e-3);
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        // m̂ = 1, v̂ = 1  ⇒  Δ = −0.001 / (1 + 1e-8)
        let want = -0.001 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-18, "{}", p[0]);
        assert!((p[0] + 0.000999999990).abs() < 1e-15);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut adam = AdamState::new(1, 1e-3);
        let mut theta = vec![1.0];
        let mut prev = 1.0f64;
        let mut crossed = false;
        for _ in 0..10_000 {
            let g = 2.0 * theta[0];
            adam.step(&mut theta, &[g]).unwrap();
            crossed |= theta[0] <= 0.0;
            if !crossed {
                assert!(theta[0] < prev);
                prev = theta[0];
            }
        }
        assert!(crossed);
        assert!(theta[0].abs() < 1e-2, "{}", theta[0]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut adam = AdamState::new(2, 1e-3);
        assert!(adam.step(&mut [0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn early_stopping_with_rising_validation_loss() {
        let mut s = EarlyStopping::new(1);
        assert_eq!(s.observe(1, 1.0), StopDecision::Improved);
        assert_eq!(s.observe(2, 2.0), StopDecision::Stop);
        assert_eq!(s.best_epoch(), Some(1));

        let mut s = EarlyStopping::new(3);
        let seq = [5.0, 4.0, 4.5, 4.2, 3.9, 4.0, 4.0, 4.0];
        let decisions: Vec<_> = seq.iter().enumerate().map(|(i, &v)| s.observe(i + 1, v)).collect();
        assert_eq!(decisions[4], StopDecision::Improved);
        assert_eq!(decisions[7], StopDecision::Stop);
        assert_eq!(s.best_epoch(), Some(5));
    }

    #[test]
    fn rejects_zero_config_values() {
        let cfg = TrainConfig { patience: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
