use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{Architecture, LayerSpec};
use super::layers::{
    batchnorm_backward, batchnorm_forward, dropout_forward, fc_backward, fc_forward, relu_backward, softmax_backward,
    softmax_forward, BatchNormCache, BatchNormParams, Mode,
};
use crate::error::{Error, Result};
use crate::patch::{
    apply_patch_operator_rows, apply_patch_operator_transpose, intrinsic_convolution, FilterBank, PatchOperatorSet,
};
use crate::scalar::Real;

/// A layer together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T: Real> {
    Fc { weights: DMatrix<T>, relu: bool },
    Ic { bank: FilterBank<T>, relu: bool },
    Softmax,
    Dropout { rate: f64 },
    BatchNorm(BatchNormParams<T>),
}

/// Per-vertex inputs of one shape.
#[derive(Debug, Clone, Copy)]
pub struct ShapeInput<'a, T: Real> {
    /// `n x P` input descriptors.
    pub features: &'a DMatrix<T>,
    /// Required when the network has IC layers.
    pub patches: Option<&'a PatchOperatorSet<T>>,
    /// Optional precomputed patch tensor of `features`, used when the first
    /// layer is IC.
    pub input_patches: Option<&'a DMatrix<T>>,
}

impl<'a, T: Real> ShapeInput<'a, T> {
    pub fn new(features: &'a DMatrix<T>, patches: Option<&'a PatchOperatorSet<T>>) -> Self {
        Self {
            features,
            patches,
            input_patches: None,
        }
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }
}

/// How batch normalization obtains its statistics outside training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchNormStatistics {
    /// Running averages accumulated during training.
    #[default]
    Training,
    /// Statistics of the shape being evaluated.
    Test,
}

#[derive(Debug, Clone)]
enum Step<T: Real> {
    Fc { input: DMatrix<T>, output: DMatrix<T> },
    Ic { patches: DMatrix<T>, output: DMatrix<T>, rows: Vec<usize> },
    Softmax { output: DMatrix<T> },
    Dropout { mask: Option<DMatrix<T>>, scale: T },
    BatchNorm(BatchNormCache<T>),
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T: Real> {
    steps: Vec<Step<T>>,
    /// Output rows, i.e. the requested vertices.
    pub output: DMatrix<T>,
}

/// The network `f_Theta`. Layers up to the last IC layer act on every vertex
/// of the shape; the remaining ones only on the requested rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Real> {
    architecture: Architecture,
    input_dim: usize,
    output_dim: usize,
    orientations: usize,
    scales: usize,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Network<T> {
    /// Builds the layers with uniform `+-sqrt(6 / (fan_in + fan_out))`
    /// weights. A `Softmax` is preceded by a linear FC layer onto the
    /// `output_dim` reference vertices.
    pub fn new(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        orientations: usize,
        scales: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::build(architecture, input_dim, output_dim, orientations, scales, Some(rng))
    }

    /// Same shapes as [`Network::new`], all weights zero.
    pub fn zeros(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        orientations: usize,
        scales: usize,
    ) -> Result<Self> {
        Self::build::<ChaCha8Rng>(architecture, input_dim, output_dim, orientations, scales, None)
    }

    fn build<R: Rng>(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        orientations: usize,
        scales: usize,
        mut rng: Option<&mut R>,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Architecture("input and output dimensions must be positive".into()));
        }
        if architecture.has_ic() && (orientations == 0 || scales == 0) {
            return Err(Error::Architecture("IC layers need at least one orientation and scale".into()));
        }
        let fc = |outputs: usize, inputs: usize, rng: &mut Option<&mut R>| {
            let limit = (6.0 / (inputs + outputs) as f64).sqrt();
            match rng {
                Some(r) => DMatrix::from_fn(outputs, inputs, |_, _| T::lit(r.random_range(-limit..limit))),
                None => DMatrix::zeros(outputs, inputs),
            }
        };
        let mut layers = Vec::new();
        let mut width = input_dim;
        for spec in architecture.layers() {
            match *spec {
                LayerSpec::Fc { outputs, relu } => {
                    layers.push(Layer::Fc {
                        weights: fc(outputs, width, &mut rng),
                        relu,
                    });
                    width = outputs;
                }
                LayerSpec::Ic { outputs, relu } => {
                    let bank = match rng.as_deref_mut() {
                        Some(r) => FilterBank::glorot(outputs, width, orientations, scales, r),
                        None => FilterBank::zeros(outputs, width, orientations, scales),
                    };
                    layers.push(Layer::Ic { bank, relu });
                    width = outputs;
                }
                LayerSpec::Softmax => {
                    layers.push(Layer::Fc {
                        weights: fc(output_dim, width, &mut rng),
                        relu: false,
                    });
                    layers.push(Layer::Softmax);
                    width = output_dim;
                }
                LayerSpec::Dropout { rate } => layers.push(Layer::Dropout { rate }),
                LayerSpec::BatchNorm => layers.push(Layer::BatchNorm(BatchNormParams::new(width))),
            }
        }
        Ok(Self {
            architecture,
            input_dim,
            output_dim: width,
            orientations,
            scales,
            layers,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn ends_in_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Softmax))
    }

    /// Every parameter tensor in declaration order, including batch-norm
    /// running statistics.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Fc { weights, .. } => out.push(weights.as_slice()),
                Layer::Ic { bank, .. } => out.push(bank.coeffs.as_slice()),
                Layer::BatchNorm(p) => {
                    out.extend([p.gamma.as_slice(), p.beta.as_slice()]);
                    out.extend([p.running_mean.as_slice(), p.running_var.as_slice()]);
                }
                Layer::Softmax | Layer::Dropout { .. } => {}
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Fc { weights, .. } => out.push(weights.as_mut_slice()),
                Layer::Ic { bank, .. } => out.push(bank.coeffs.as_mut_slice()),
                Layer::BatchNorm(p) => {
                    out.extend([p.gamma.as_mut_slice(), p.beta.as_mut_slice()]);
                    out.extend([p.running_mean.as_mut_slice(), p.running_var.as_mut_slice()]);
                }
                Layer::Softmax | Layer::Dropout { .. } => {}
            }
        }
        out
    }

    /// Learnable tensors in declaration order; the order of [`Gradients`].
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Fc { weights, .. } => out.push(weights.as_mut_slice()),
                Layer::Ic { bank, .. } => out.push(bank.coeffs.as_mut_slice()),
                Layer::BatchNorm(p) => out.extend([p.gamma.as_mut_slice(), p.beta.as_mut_slice()]),
                Layer::Softmax | Layer::Dropout { .. } => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn last_ic(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| matches!(l, Layer::Ic { .. }))
    }

    /// Forward pass producing the outputs at `rows`.
    pub fn forward(
        &self,
        input: &ShapeInput<'_, T>,
        rows: &[usize],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Trace<T>> {
        self.forward_impl(input, rows, mode, mode == Mode::Train, rng)
    }

    fn forward_impl(
        &self,
        input: &ShapeInput<'_, T>,
        rows: &[usize],
        mode: Mode,
        batch_statistics: bool,
        rng: &mut impl Rng,
    ) -> Result<Trace<T>> {
        let n = input.n();
        if input.features.ncols() != self.input_dim {
            return Err(Error::Dimension(format!(
                "network expects {} input features, got {}",
                self.input_dim,
                input.features.ncols()
            )));
        }
        if let Some(&bad) = rows.iter().find(|&&x| x >= n) {
            return Err(Error::Dimension(format!("vertex {bad} out of range for {n} vertices")));
        }
        let last_ic = self.last_ic();
        let all: Vec<usize> = (0..n).collect();
        let mut x = match last_ic {
            Some(_) => input.features.clone(),
            None => input.features.select_rows(rows),
        };
        let mut steps = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let step = match layer {
                Layer::Fc { weights, relu } => {
                    let output = fc_forward(&x, weights, *relu)?;
                    let input = std::mem::replace(&mut x, output.clone());
                    Step::Fc { input, output }
                }
                Layer::Ic { bank, relu } => {
                    let ops = input
                        .patches
                        .ok_or_else(|| Error::InvalidArgument("IC layer without patch operators".into()))?;
                    if ops.orientations() != bank.orientations || ops.scales() != bank.scales || ops.n() != n {
                        return Err(Error::Dimension("patch operators do not match the filter bank".into()));
                    }
                    let out_rows = if Some(i) == last_ic { rows } else { &all[..] };
                    let patches = match input.input_patches {
                        Some(pre) if i == 0 => {
                            if pre.nrows() != n || pre.ncols() != ops.bins() * self.input_dim {
                                return Err(Error::Dimension("precomputed patch tensor has the wrong shape".into()));
                            }
                            pre.select_rows(out_rows)
                        }
                        _ => apply_patch_operator_rows(ops, &x, out_rows)?,
                    };
                    let mut output = intrinsic_convolution(&patches, bank)?;
                    if *relu {
                        output.apply(|v| *v = v.max(T::zero()));
                    }
                    x = output.clone();
                    Step::Ic {
                        patches,
                        output,
                        rows: out_rows.to_vec(),
                    }
                }
                Layer::Softmax => {
                    x = softmax_forward(&x);
                    Step::Softmax { output: x.clone() }
                }
                Layer::Dropout { rate } => {
                    let (output, mask) = dropout_forward(&x, *rate, mode, rng)?;
                    x = output;
                    Step::Dropout {
                        mask,
                        scale: T::lit(1.0 - rate),
                    }
                }
                Layer::BatchNorm(params) => {
                    let bn_mode = if batch_statistics { Mode::Train } else { Mode::Eval };
                    let (output, cache) = batchnorm_forward(&x, params, bn_mode)?;
                    x = output;
                    Step::BatchNorm(cache)
                }
            };
            steps.push(step);
        }
        Ok(Trace { steps, output: x })
    }

    /// Gradients of a scalar loss with respect to every trainable tensor,
    /// given the loss gradient with respect to the trace output.
    pub fn backward(&self, input: &ShapeInput<'_, T>, trace: &Trace<T>, grad_output: &DMatrix<T>) -> Result<Gradients<T>> {
        if grad_output.shape() != trace.output.shape() {
            return Err(Error::Dimension("output gradient does not match the forward output".into()));
        }
        let mut grads: Vec<Vec<T>> = Vec::new();
        let mut g = grad_output.clone();
        for (i, (layer, step)) in self.layers.iter().zip(&trace.steps).enumerate().rev() {
            match (layer, step) {
                (Layer::Fc { weights, relu }, Step::Fc { input, output }) => {
                    let (gw, gi) = fc_backward(input, weights, output, &g, *relu);
                    grads.push(gw.as_slice().to_vec());
                    g = gi;
                }
                (Layer::Ic { bank, relu }, Step::Ic { patches, output, rows }) => {
                    let delta = if *relu { relu_backward(output, &g) } else { g.clone() };
                    grads.push((delta.transpose() * patches).as_slice().to_vec());
                    if i > 0 {
                        let ops = input.patches.expect("checked in forward");
                        g = apply_patch_operator_transpose(ops, &(delta * &bank.coeffs), rows, bank.inputs)?;
                    }
                }
                (Layer::Softmax, Step::Softmax { output }) => g = softmax_backward(output, &g),
                (Layer::Dropout { .. }, Step::Dropout { mask, scale }) => {
                    g = match mask {
                        Some(m) => g.component_mul(m),
                        None => g * *scale,
                    };
                }
                (Layer::BatchNorm(params), Step::BatchNorm(cache)) => {
                    let (gi, gg, gb) = batchnorm_backward(params, cache, &g);
                    grads.push(gb.as_slice().to_vec());
                    grads.push(gg.as_slice().to_vec());
                    g = gi;
                }
                _ => return Err(Error::InvalidArgument("trace does not belong to this network".into())),
            }
        }
        grads.reverse();
        Ok(Gradients(grads))
    }

    /// Folds the batch statistics of a training pass into the running averages.
    pub fn update_running_statistics(&mut self, trace: &Trace<T>) {
        for (layer, step) in self.layers.iter_mut().zip(&trace.steps) {
            if let (Layer::BatchNorm(params), Step::BatchNorm(cache)) = (layer, step) {
                if cache.batch_statistics {
                    params.update_running(cache);
                }
            }
        }
    }

    /// Evaluation-mode output at every vertex, `n x output_dim`.
    pub fn predict(&self, input: &ShapeInput<'_, T>, statistics: BatchNormStatistics) -> Result<DMatrix<T>> {
        let rows: Vec<usize> = (0..input.n()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch_statistics = statistics == BatchNormStatistics::Test;
        Ok(self
            .forward_impl(input, &rows, Mode::Eval, batch_statistics, &mut rng)?
            .output)
    }
}

/// Gradients of the trainable tensors, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Real>(pub Vec<Vec<T>>);

impl<T: Real> Gradients<T> {
    pub fn norm(&self) -> T {
        self.0
            .iter()
            .flatten()
            .fold(T::zero(), |a, &g| a + g * g)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.as_f64().is_finite())
    }
}
