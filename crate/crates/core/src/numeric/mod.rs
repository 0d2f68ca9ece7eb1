//! Dense kernels, explicit backward passes and the Adagrad optimizer.
//!
//! All math runs in `f64`. Kernels are pure functions; the optimizer mutates
//! parameter arrays in place.

pub mod attention;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod params;

pub use attention::{
    attend, attention_backward, project_history, target_attention, AttentionCache,
    AttentionGradBufs, AttentionParams, ProjectedHistory,
};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use matrix::{axpy, dot, sigmoid, softmax_in_place, softmax_rows, DenseMatrix};
pub use mlp::{mlp_backward, mlp_forward, Activation, LayerRef, MlpCache};
pub use optim::{adagrad_update, adagrad_update_rows, Adagrad, AdagradState, EmbeddingTable};
pub use params::{GradArray, Gradients, ModelParams, ParamArray, ParamId, ParamKind};
