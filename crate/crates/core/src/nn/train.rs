use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::adam::{AdamConfig, AdamState};
use super::layers::{multinomial_loss, multinomial_loss_gradient, Mode};
use super::network::{Network, ShapeInput};

/// Labeled vertices `(x, y*(x))` of one query shape.
#[derive(Debug, Clone)]
pub struct TrainingShape<'a, T: Real> {
    pub input: ShapeInput<'a, T>,
    pub labels: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct TrainingSet<'a, T: Real> {
    pub shapes: Vec<TrainingShape<'a, T>>,
    /// Number `m` of reference vertices.
    pub reference_size: usize,
}

impl<'a, T: Real> TrainingSet<'a, T> {
    pub fn validate(&self) -> Result<()> {
        if self.shapes.iter().all(|s| s.labels.is_empty()) {
            return Err(Error::InvalidArgument("training set has no labeled vertices".into()));
        }
        for (i, shape) in self.shapes.iter().enumerate() {
            let n = shape.input.n();
            for &(x, y) in &shape.labels {
                if x >= n || y >= self.reference_size {
                    return Err(Error::InvalidArgument(format!(
                        "shape {i}: label ({x}, {y}) outside {n} query and {} reference vertices",
                        self.reference_size
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Learning rate on the last step as a fraction of the initial one;
    /// the rate decays geometrically in between. 1 keeps it constant.
    pub final_lr_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 256,
            adam: AdamConfig::default(),
            final_lr_fraction: 1.0,
            seed: 0,
        }
    }
}

fn learning_rate(config: &TrainConfig, step: usize) -> f64 {
    if config.final_lr_fraction == 1.0 || config.steps < 2 {
        return config.adam.learning_rate;
    }
    let progress = step as f64 / (config.steps - 1) as f64;
    config.adam.learning_rate * config.final_lr_fraction.powf(progress)
}

/// Minimizes the multinomial loss with ADAM. Each step draws one shape and a
/// uniform sample of its labeled vertices. Returns the per-step batch losses.
pub fn train<T: Real>(
    network: &mut Network<T>,
    set: &TrainingSet<'_, T>,
    config: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    set.validate()?;
    if !network.ends_in_softmax() {
        return Err(Error::Architecture("training needs an architecture ending in Softmax".into()));
    }
    if network.output_dim() != set.reference_size {
        return Err(Error::Dimension(format!(
            "network has {} outputs for {} reference vertices",
            network.output_dim(),
            set.reference_size
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if !(config.final_lr_fraction > 0.0 && config.final_lr_fraction <= 1.0) {
        return Err(Error::InvalidArgument("final learning-rate fraction must lie in (0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labeled: Vec<usize> = (0..set.shapes.len()).filter(|&i| !set.shapes[i].labels.is_empty()).collect();
    let sizes: Vec<usize> = network.trainable_mut().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(config.adam, sizes);
    let mut history = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let shape = &set.shapes[labeled[rng.random_range(0..labeled.len())]];
        let picked = sample(&mut rng, shape.labels.len(), config.batch_size.min(shape.labels.len()));
        let (rows, targets): (Vec<usize>, Vec<usize>) = picked.iter().map(|i| shape.labels[i]).unzip();

        let trace = network.forward(&shape.input, &rows, Mode::Train, &mut rng)?;
        let loss = multinomial_loss(&trace.output, &targets)?;
        if !loss.as_f64().is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let grad_out = multinomial_loss_gradient(&trace.output, &targets)?;
        let grads = network.backward(&shape.input, &trace, &grad_out)?;
        if !grads.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        network.update_running_statistics(&trace);
        adam.config.learning_rate = learning_rate(config, step);
        adam.update(network.trainable_mut(), &grads)?;
        history.push(loss.as_f64());
        on_step(step, loss.as_f64());
    }
    Ok(history)
}
