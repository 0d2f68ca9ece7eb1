//! DNN, DIN and IU-Boosted rankers with hand-written backward passes.

mod network;
mod train;

pub use network::{
    nll_from_logit, nll_loss, nll_term, param_layout, ModelKind, Network, NetworkConfig,
    UserEncoding, PROB_CLAMP,
};
pub use train::{batch_gradient, train, LossCurve, TrainConfig};

#[cfg(test)]
mod tests;
