//! Shared recurrent policy: network, observations, optimizer, replay buffer,
//! checkpoints and the training loop.

pub mod buffer;
pub mod checkpoint;
pub mod network;
pub mod observation;
pub mod optim;
pub mod train;

pub use buffer::ReplayBuffer;
pub use checkpoint::Checkpoint;
pub use network::{PolicyNet, StepOutput};
pub use observation::{LsfcStats, ObservationSpec};
pub use optim::{clip_recurrent_grad, RmsProp};
pub use train::{sample_action, Agent, EpisodeRecord};
