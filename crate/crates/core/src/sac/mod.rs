//! Soft actor-critic with an adversarial co-policy.

pub mod agent;
pub mod buffer;
pub mod losses;
pub mod train;

pub use agent::{AgentBundle, SacConfig};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use losses::{
    actor_loss, adversary_loss, critic_loss, policy_losses, soft_update, target_value, target_values, temperature_loss,
    CriticLoss, LossNoise, PolicyLoss, PolicyLosses,
};
pub use train::{
    collect_step, evaluate_policy, train, EpsilonMode, Snapshot, TraceRow, TrainConfig, TrainOutcome, Trainer,
};
