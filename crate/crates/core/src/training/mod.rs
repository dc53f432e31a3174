//! Spectrogram and electrodogram losses and the joint training loop that
//! optimizes the enhancer through the frozen channel-selection network.

mod joint;
mod losses;

pub use joint::{joint_train, log_csv, train_spec_only, JointConfig, JointHistory, SpecDomain, StepLog, TrainOutcome};
pub use losses::{elec_loss, spec_loss, total_loss, total_loss_graph, Bridge, LossWeights};
