//! Feed-forward classifier with analytic gradients, momentum SGD, frozen
//! teacher snapshots and a growable output head.

mod checkpoint;
mod model;
mod optim;
pub(crate) mod softmax;

pub use checkpoint::CHECKPOINT_VERSION;
pub use model::{
    init_model, mlp_arch, validate_arch, Activation, ClassifierModel, DenseLayer, Gradients,
    LayerSpec, MiniBatch, TeacherSnapshot,
};
pub use optim::{train_step, OptimizerState};
pub use softmax::{log_softmax, softmax};
