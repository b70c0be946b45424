//! Neural approximation of the transport map.

pub mod gan;
pub mod mlp;
pub mod rmsprop;

pub use gan::{
    critic_loss, critic_loss_and_grad, generator_loss, generator_loss_and_grad, map_points, train,
    train_observed, Critic, Generator, GeneratorFile, StepStats, TrainConfig,
};
pub use mlp::{Dense, Gradients, Mlp, MlpFile};
pub use rmsprop::RmsPropState;
