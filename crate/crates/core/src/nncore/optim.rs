use ndarray::{Array1, Array2};

use super::model::{ClassifierModel, MiniBatch, TeacherSnapshot};
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, ObjectiveConfig};
use crate::scalar::Scalar;

/// SGD with heavy-ball momentum: `v <- momentum * v + g`, `theta <- theta - lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub learning_rate: T,
    pub momentum: T,
    velocity_w: Vec<Array2<T>>,
    velocity_b: Vec<Array1<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(model: &ClassifierModel<T>, learning_rate: T, momentum: T) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= T::zero()) {
            return Err(Error::config(format!(
                "learning rate must be >= 0, got {learning_rate}"
            )));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(Error::config(format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity_w: model
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.dim()))
                .collect(),
            velocity_b: model
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.len()))
                .collect(),
        })
    }

    pub fn matches(&self, model: &ClassifierModel<T>) -> bool {
        self.velocity_w.len() == model.layers.len()
            && model
                .layers
                .iter()
                .zip(&self.velocity_w)
                .zip(&self.velocity_b)
                .all(|((l, w), b)| l.weights.dim() == w.dim() && l.bias.len() == b.len())
    }

    /// Grows velocity buffers after [`ClassifierModel::expand_head`]; new
    /// output rows start at zero velocity.
    pub fn resize_for(&mut self, model: &ClassifierModel<T>) -> Result<()> {
        if self.velocity_w.len() != model.layers.len() {
            return Err(Error::config("optimizer and model have different depths"));
        }
        for ((l, w), b) in model
            .layers
            .iter()
            .zip(self.velocity_w.iter_mut())
            .zip(self.velocity_b.iter_mut())
        {
            let (rows, cols) = l.weights.dim();
            if w.dim() == (rows, cols) {
                continue;
            }
            if w.ncols() != cols || w.nrows() > rows {
                return Err(Error::config("optimizer buffers cannot be grown to this model"));
            }
            let mut grown = Array2::zeros((rows, cols));
            grown.slice_mut(ndarray::s![..w.nrows(), ..]).assign(w);
            *w = grown;
            let mut grown_b = Array1::zeros(rows);
            grown_b.slice_mut(ndarray::s![..b.len()]).assign(b);
            *b = grown_b;
        }
        Ok(())
    }
}

/// One SGD-with-momentum update on the full objective. Returns the loss
/// breakdown evaluated before the update. The model is left untouched when
/// the update would produce non-finite parameters.
pub fn train_step<T: Scalar>(
    model: &mut ClassifierModel<T>,
    batch: &MiniBatch<'_, T>,
    cfg: &ObjectiveConfig<T>,
    teacher: Option<&TeacherSnapshot<T>>,
    past_groups: &[Vec<usize>],
    opt: &mut OptimizerState<T>,
) -> Result<LossBreakdown<T>> {
    if batch.labels.is_empty() {
        return Err(Error::input("empty mini-batch"));
    }
    if !opt.matches(model) {
        return Err(Error::config("optimizer buffers do not match model parameters"));
    }
    let (breakdown, grads) = model.gradients(batch, cfg, teacher, past_groups)?;

    let mut new_vw = opt.velocity_w.clone();
    let mut new_vb = opt.velocity_b.clone();
    for (v, g) in new_vw.iter_mut().zip(&grads.weights) {
        v.zip_mut_with(g, |v, &g| *v = opt.momentum * *v + g);
    }
    for (v, g) in new_vb.iter_mut().zip(&grads.biases) {
        v.zip_mut_with(g, |v, &g| *v = opt.momentum * *v + g);
    }
    let lr = opt.learning_rate;
    let finite = model.layers.iter().zip(&new_vw).zip(&new_vb).all(|((l, vw), vb)| {
        l.weights.iter().zip(vw).all(|(&p, &v)| (p - lr * v).is_finite())
            && l.bias.iter().zip(vb).all(|(&p, &v)| (p - lr * v).is_finite())
    });
    if !finite {
        return Err(Error::input("update would produce non-finite parameters"));
    }
    if lr != T::zero() {
        for ((l, vw), vb) in model.layers.iter_mut().zip(&new_vw).zip(&new_vb) {
            l.weights.zip_mut_with(vw, |p, &v| *p -= lr * v);
            l.bias.zip_mut_with(vb, |p, &v| *p -= lr * v);
        }
    }
    opt.velocity_w = new_vw;
    opt.velocity_b = new_vb;
    Ok(breakdown)
}
