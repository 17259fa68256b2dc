use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{objective_with_gradient, total_objective, LossBreakdown, ObjectiveConfig, ObjectiveInputs};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation value. ReLU uses 0 at the kink.
    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu if z > T::zero() => T::one(),
            Activation::Relu => T::zero(),
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// Builds `input -> hidden... -> n_classes` with ReLU hidden layers.
pub fn mlp_arch(input_dim: usize, hidden: &[usize], n_classes: usize) -> Vec<LayerSpec> {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(n_classes);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

pub fn validate_arch(arch: &[LayerSpec]) -> Result<()> {
    if arch.is_empty() {
        return Err(Error::config("architecture has no layers"));
    }
    for (i, l) in arch.iter().enumerate() {
        if l.input_dim == 0 || l.output_dim == 0 {
            return Err(Error::config(format!("layer {i} has a zero dimension")));
        }
    }
    for (i, w) in arch.windows(2).enumerate() {
        if w[0].output_dim != w[1].input_dim {
            return Err(Error::config(format!(
                "layer {i} outputs {} but layer {} expects {}",
                w[0].output_dim,
                i + 1,
                w[1].input_dim
            )));
        }
    }
    if arch.last().map(|l| l.activation) != Some(Activation::Identity) {
        return Err(Error::config("final layer must use the identity activation"));
    }
    Ok(())
}

/// Fully connected layer; `weights` is `(output_dim, input_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub(crate) spec: LayerSpec,
    pub(crate) weights: Array2<T>,
    pub(crate) bias: Array1<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    pub fn weights(&self) -> &Array2<T> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    fn pre_activation(&self, input: &[T]) -> Vec<T> {
        let x = ndarray::ArrayView1::from(input);
        self.weights
            .outer_iter()
            .zip(self.bias.iter())
            .map(|(row, &b)| row.dot(&x) + b)
            .collect()
    }
}

fn glorot_scale(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_rows<T: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| T::of((2.0 * rng.random::<f64>() - 1.0) * scale))
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

/// A labelled mini-batch; labels are output-unit indices.
#[derive(Debug, Clone, Copy)]
pub struct MiniBatch<'a, T> {
    pub features: ArrayView2<'a, T>,
    pub labels: &'a [usize],
}

/// Feed-forward classifier with a single output head over all seen classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel<T> {
    pub(crate) layers: Vec<DenseLayer<T>>,
    pub(crate) rng_seed: u64,
}

/// Weights uniform in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`; zero biases.
pub fn init_model<T: Scalar>(arch: &[LayerSpec], seed: u64) -> Result<ClassifierModel<T>> {
    validate_arch(arch)?;
    let mut rng = rng_from_seed(seed);
    let layers = arch
        .iter()
        .map(|&spec| DenseLayer {
            spec,
            weights: uniform_rows(
                &mut rng,
                spec.output_dim,
                spec.input_dim,
                glorot_scale(spec.input_dim, spec.output_dim),
            ),
            bias: Array1::zeros(spec.output_dim),
        })
        .collect();
    Ok(ClassifierModel {
        layers,
        rng_seed: seed,
    })
}

struct Trace<T> {
    /// Inputs to each layer (`activations[0]` is the batch itself).
    activations: Vec<Array2<T>>,
    pre_activations: Vec<Array2<T>>,
}

impl<T: Scalar> ClassifierModel<T> {
    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn arch(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.output_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn n_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, features: &ArrayView2<'_, T>) -> Result<()> {
        if features.ncols() != self.input_dim() {
            return Err(Error::input(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite feature value"));
        }
        Ok(())
    }

    /// Logits, one row per input row. Rows are computed independently.
    pub fn forward(&self, features: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_input(&features)?;
        let mut out = Array2::zeros((features.nrows(), self.n_classes()));
        for (i, x) in features.outer_iter().enumerate() {
            let mut h = x.to_vec();
            for layer in &self.layers {
                h = layer
                    .pre_activation(&h)
                    .into_iter()
                    .map(|z| layer.spec.activation.apply(z))
                    .collect();
            }
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&h[..]));
        }
        Ok(out)
    }

    /// Argmax output unit per row (lowest index wins ties).
    pub fn predict(&self, features: ArrayView2<'_, T>) -> Result<Vec<usize>> {
        let logits = self.forward(features)?;
        Ok(logits
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |best, (j, &v)| {
                        if v > best.1 {
                            (j, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }

    fn forward_trace(&self, features: ArrayView2<'_, T>) -> Trace<T> {
        let mut activations = vec![features.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = activations.last().expect("non-empty");
            let mut z = Array2::zeros((input.nrows(), layer.spec.output_dim));
            for (i, x) in input.outer_iter().enumerate() {
                let row = layer.pre_activation(x.as_slice().expect("standard layout"));
                z.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
            }
            let a = z.mapv(|v| layer.spec.activation.apply(v));
            pre_activations.push(z);
            activations.push(a);
        }
        Trace {
            activations,
            pre_activations,
        }
    }

    fn teacher_logits(
        &self,
        batch: &MiniBatch<'_, T>,
        teacher: Option<&TeacherSnapshot<T>>,
        past_groups: &[Vec<usize>],
    ) -> Result<Option<Array2<T>>> {
        if past_groups.is_empty() {
            return Ok(None);
        }
        let teacher = teacher.ok_or_else(|| {
            Error::config("old classes exist but no teacher snapshot was provided")
        })?;
        Ok(Some(teacher.forward(batch.features)?))
    }

    /// Objective value for a batch, without gradients.
    pub fn loss(
        &self,
        batch: &MiniBatch<'_, T>,
        cfg: &ObjectiveConfig<T>,
        teacher: Option<&TeacherSnapshot<T>>,
        past_groups: &[Vec<usize>],
    ) -> Result<LossBreakdown<T>> {
        let logits = self.forward(batch.features)?;
        let t = self.teacher_logits(batch, teacher, past_groups)?;
        total_objective(
            ObjectiveInputs {
                labels: batch.labels,
                student_logits: logits.view(),
                teacher_logits: t.as_ref().map(|t| t.view()),
                past_groups,
            },
            cfg,
        )
    }

    /// Objective value and exact parameter gradients by backpropagation.
    pub fn gradients(
        &self,
        batch: &MiniBatch<'_, T>,
        cfg: &ObjectiveConfig<T>,
        teacher: Option<&TeacherSnapshot<T>>,
        past_groups: &[Vec<usize>],
    ) -> Result<(LossBreakdown<T>, Gradients<T>)> {
        self.check_input(&batch.features)?;
        let t = self.teacher_logits(batch, teacher, past_groups)?;
        let trace = self.forward_trace(batch.features);
        let logits = trace.activations.last().expect("non-empty");
        let (breakdown, mut delta) = objective_with_gradient(
            ObjectiveInputs {
                labels: batch.labels,
                student_logits: logits.view(),
                teacher_logits: t.as_ref().map(|t| t.view()),
                past_groups,
            },
            cfg,
        )?;

        let n_layers = self.layers.len();
        let mut grad_w = Vec::with_capacity(n_layers);
        let mut grad_b = Vec::with_capacity(n_layers);
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            // delta currently holds dL/d(output of layer l); fold in the activation.
            let z = &trace.pre_activations[l];
            delta.zip_mut_with(z, |d, &zv| *d *= layer.spec.activation.derivative(zv));
            let input = &trace.activations[l];
            grad_w.push(delta.t().dot(input));
            grad_b.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                delta = delta.dot(&layer.weights);
            }
        }
        grad_w.reverse();
        grad_b.reverse();
        Ok((
            breakdown,
            Gradients {
                weights: grad_w,
                biases: grad_b,
            },
        ))
    }

    /// Adds `n_new_classes` output units. Existing rows of the final layer are
    /// copied untouched, so old-class logits are bit-identical afterwards.
    pub fn expand_head(&self, n_new_classes: usize, seed: u64) -> Result<ClassifierModel<T>> {
        if n_new_classes == 0 {
            return Err(Error::input("expand_head needs at least one new class"));
        }
        let mut model = self.clone();
        let last = model.layers.last_mut().expect("validated non-empty");
        let fan_in = last.spec.input_dim;
        let new_total = last.spec.output_dim + n_new_classes;
        let mut rng = rng_from_seed(seed);
        let fresh = uniform_rows::<T>(&mut rng, n_new_classes, fan_in, glorot_scale(fan_in, new_total));
        let mut weights = Array2::zeros((new_total, fan_in));
        weights
            .slice_mut(ndarray::s![..last.spec.output_dim, ..])
            .assign(&last.weights);
        weights
            .slice_mut(ndarray::s![last.spec.output_dim.., ..])
            .assign(&fresh);
        let mut bias = Array1::zeros(new_total);
        bias.slice_mut(ndarray::s![..last.spec.output_dim])
            .assign(&last.bias);
        last.weights = weights;
        last.bias = bias;
        last.spec.output_dim = new_total;
        Ok(model)
    }

    /// Freezes the current parameters as a distillation teacher.
    pub fn snapshot(&self, step_index: usize) -> TeacherSnapshot<T> {
        TeacherSnapshot {
            model: self.clone(),
            step_index,
        }
    }

    /// Visits every parameter in a fixed order (layer, weights row-major, then bias).
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn parameters(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

impl<T: Scalar> Gradients<T> {
    /// Same order as [`ClassifierModel::parameters`].
    pub fn flatten(&self) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Frozen copy of a model used to produce soft labels for old classes.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSnapshot<T> {
    model: ClassifierModel<T>,
    step_index: usize,
}

impl<T: Scalar> TeacherSnapshot<T> {
    pub fn forward(&self, features: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.model.forward(features)
    }

    /// Task index whose trained model this snapshot holds.
    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn n_classes(&self) -> usize {
        self.model.n_classes()
    }

    pub fn model(&self) -> &ClassifierModel<T> {
        &self.model
    }
}
