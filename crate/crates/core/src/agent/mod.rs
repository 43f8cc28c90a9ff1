//! Tabular agent: Q-table storage, derived policies and state values,
//! Q-learning, and the value-iteration oracle.

mod oracle;
mod policy;
mod qtable;
mod train;

pub use oracle::{bellman_residual, value_iteration_oracle};
pub use policy::{PolicySnapshot, ValueView};
pub use qtable::QTable;
pub use train::{train, Checkpoint, TrainOutput};
