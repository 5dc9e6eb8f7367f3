//! Forward and backward rules of the individual layer kinds on row-per-vertex
//! feature matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const BATCHNORM_MOMENTUM: f64 = 0.9;
pub const BATCHNORM_EPSILON: f64 = 1e-5;
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `eta(f_in w^T)` with `eta` the ReLU when `relu` is set.
pub fn fc_forward<T: Real>(f_in: &DMatrix<T>, weights: &DMatrix<T>, relu: bool) -> Result<DMatrix<T>> {
    if f_in.ncols() != weights.ncols() {
        return Err(Error::Dimension(format!(
            "FC layer expects {} input features, got {}",
            weights.ncols(),
            f_in.ncols()
        )));
    }
    let mut out = f_in * weights.transpose();
    if relu {
        out.apply(|v| *v = v.max(T::zero()));
    }
    Ok(out)
}

/// Zeroes the upstream gradient wherever the ReLU was inactive.
pub fn relu_backward<T: Real>(output: &DMatrix<T>, grad_out: &DMatrix<T>) -> DMatrix<T> {
    grad_out.zip_map(output, |g, o| if o > T::zero() { g } else { T::zero() })
}

/// Returns `(dL/dw, dL/df_in)`.
pub fn fc_backward<T: Real>(
    f_in: &DMatrix<T>,
    weights: &DMatrix<T>,
    output: &DMatrix<T>,
    grad_out: &DMatrix<T>,
    relu: bool,
) -> (DMatrix<T>, DMatrix<T>) {
    let delta = if relu {
        relu_backward(output, grad_out)
    } else {
        grad_out.clone()
    };
    (delta.transpose() * f_in, delta * weights)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_forward<T: Real>(f_in: &DMatrix<T>) -> DMatrix<T> {
    let mut out = f_in.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().fold(T::lit(f64::NEG_INFINITY), |a, &b| a.max(b));
        row.apply(|v| *v = (*v - max).exp());
        let total = row.iter().fold(T::zero(), |a, &b| a + b);
        row /= total;
    }
    out
}

pub fn softmax_backward<T: Real>(output: &DMatrix<T>, grad_out: &DMatrix<T>) -> DMatrix<T> {
    let mut grad = grad_out.component_mul(output);
    for (mut g, p) in grad.row_iter_mut().zip(output.row_iter()) {
        let dot = g.iter().fold(T::zero(), |a, &b| a + b);
        for (gi, &pi) in g.iter_mut().zip(p.iter()) {
            *gi -= pi * dot;
        }
    }
    grad
}

/// Binary mask with each entry kept (set to one) with probability `1 - rate`.
pub fn dropout_mask<T: Real>(rows: usize, cols: usize, rate: f64, rng: &mut (impl Rng + ?Sized)) -> DMatrix<T> {
    let keep = 1.0 - rate;
    DMatrix::from_fn(rows, cols, |_, _| {
        if rng.random_bool(keep) {
            T::one()
        } else {
            T::zero()
        }
    })
}

/// Train mode applies a fresh mask, which is returned for the backward pass;
/// eval mode scales by the keep probability.
pub fn dropout_forward<T: Real>(
    f_in: &DMatrix<T>,
    rate: f64,
    mode: Mode,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(DMatrix<T>, Option<DMatrix<T>>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1]")));
    }
    Ok(match mode {
        Mode::Train => {
            let mask = dropout_mask(f_in.nrows(), f_in.ncols(), rate, rng);
            (f_in.component_mul(&mask), Some(mask))
        }
        Mode::Eval => (f_in * T::lit(1.0 - rate), None),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T: Real> {
    pub gamma: DVector<T>,
    pub beta: DVector<T>,
    pub running_mean: DVector<T>,
    pub running_var: DVector<T>,
}

impl<T: Real> BatchNormParams<T> {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: DVector::from_element(features, T::one()),
            beta: DVector::zeros(features),
            running_mean: DVector::zeros(features),
            running_var: DVector::from_element(features, T::one()),
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Exponential moving average with momentum 0.9.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let m = T::lit(BATCHNORM_MOMENTUM);
        let one_minus = T::one() - m;
        self.running_mean = &self.running_mean * m + &cache.mean * one_minus;
        self.running_var = &self.running_var * m + &cache.var * one_minus;
    }
}

/// Quantities saved by a batch-statistics forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache<T: Real> {
    pub mean: DVector<T>,
    /// Biased (population) variance over the batch.
    pub var: DVector<T>,
    pub normalized: DMatrix<T>,
    pub batch_statistics: bool,
}

/// Normalizes each column with batch statistics (train) or running statistics
/// (eval) and applies the affine map. Running statistics are left untouched;
/// see [`BatchNormParams::update_running`].
pub fn batchnorm_forward<T: Real>(
    f_in: &DMatrix<T>,
    params: &BatchNormParams<T>,
    mode: Mode,
) -> Result<(DMatrix<T>, BatchNormCache<T>)> {
    let (rows, cols) = f_in.shape();
    if cols != params.features() {
        return Err(Error::Dimension(format!(
            "batch norm over {} features applied to {cols}",
            params.features()
        )));
    }
    let batch_statistics = mode == Mode::Train;
    let (mean, var) = if batch_statistics {
        if rows < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch normalization needs a batch of at least 2, got {rows}"
            )));
        }
        column_statistics(f_in)
    } else {
        (params.running_mean.clone(), params.running_var.clone())
    };
    let eps = T::lit(BATCHNORM_EPSILON);
    let normalized = DMatrix::from_fn(rows, cols, |i, j| (f_in[(i, j)] - mean[j]) / (var[j] + eps).sqrt());
    let out = DMatrix::from_fn(rows, cols, |i, j| normalized[(i, j)] * params.gamma[j] + params.beta[j]);
    Ok((
        out,
        BatchNormCache {
            mean,
            var,
            normalized,
            batch_statistics,
        },
    ))
}

pub(crate) fn column_statistics<T: Real>(f: &DMatrix<T>) -> (DVector<T>, DVector<T>) {
    let rows = T::count(f.nrows());
    let mean = DVector::from_iterator(f.ncols(), f.column_iter().map(|c| c.sum() / rows));
    let var = DVector::from_iterator(
        f.ncols(),
        f.column_iter()
            .zip(mean.iter())
            .map(|(c, &m)| c.iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m)) / rows),
    );
    (mean, var)
}

/// Returns `(dL/df_in, dL/dgamma, dL/dbeta)`.
pub fn batchnorm_backward<T: Real>(
    params: &BatchNormParams<T>,
    cache: &BatchNormCache<T>,
    grad_out: &DMatrix<T>,
) -> (DMatrix<T>, DVector<T>, DVector<T>) {
    let (rows, cols) = grad_out.shape();
    let eps = T::lit(BATCHNORM_EPSILON);
    let grad_beta = DVector::from_iterator(cols, grad_out.column_iter().map(|c| c.sum()));
    let grad_gamma = DVector::from_iterator(
        cols,
        grad_out
            .column_iter()
            .zip(cache.normalized.column_iter())
            .map(|(g, x)| g.dot(&x)),
    );
    let mut grad_in = DMatrix::zeros(rows, cols);
    let n = T::count(rows);
    for j in 0..cols {
        let scale = params.gamma[j] / (cache.var[j] + eps).sqrt();
        for i in 0..rows {
            grad_in[(i, j)] = if cache.batch_statistics {
                scale * (grad_out[(i, j)] - grad_beta[j] / n - cache.normalized[(i, j)] * grad_gamma[j] / n)
            } else {
                scale * grad_out[(i, j)]
            };
        }
    }
    (grad_in, grad_gamma, grad_beta)
}

fn check_targets<T: Real>(pred: &DMatrix<T>, targets: &[usize]) -> Result<()> {
    if pred.nrows() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            pred.nrows(),
            targets.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&y| y >= pred.ncols()) {
        return Err(Error::InvalidArgument(format!(
            "target {bad} outside [0, {})",
            pred.ncols()
        )));
    }
    Ok(())
}

/// `-sum_x log max(pred(x, y*(x)), 1e-12)`.
pub fn multinomial_loss<T: Real>(pred: &DMatrix<T>, targets: &[usize]) -> Result<T> {
    check_targets(pred, targets)?;
    let floor = T::lit(PROBABILITY_FLOOR);
    Ok(targets
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &y)| acc - pred[(i, y)].max(floor).ln()))
}

pub fn multinomial_loss_gradient<T: Real>(pred: &DMatrix<T>, targets: &[usize]) -> Result<DMatrix<T>> {
    check_targets(pred, targets)?;
    let floor = T::lit(PROBABILITY_FLOOR);
    let mut grad = DMatrix::zeros(pred.nrows(), pred.ncols());
    for (i, &y) in targets.iter().enumerate() {
        let p = pred[(i, y)];
        if p > floor {
            grad[(i, y)] = -T::one() / p;
        }
    }
    Ok(grad)
}
