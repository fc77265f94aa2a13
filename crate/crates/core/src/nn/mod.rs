//! From-scratch neural networks: forward/backward computation, optimizers,
//! parameter accounting and persistence for the three classifier
//! architectures.

mod backward;
mod forward;
mod optim;
mod spec;
mod store;
mod train;

pub use backward::forward_backward;
pub use forward::{
    batch_loss, ccnn_forward, cross_entropy_loss, forward_batch, forward_loss, mlp_forward,
    one_hot, softmax_rows, BatchInput, DropoutPlan, DropoutSites, ForwardCache, ForwardMode,
    SiteDims, PROB_FLOOR,
};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, OptimizerKind};
pub use spec::{ModelKind, ModelSpec};
pub use store::{load_params, save_params, Gradients, ParamStore};
pub use train::{predict, prepare_dataset, train, PreparedDataset, PreparedInputs, TrainConfig};
