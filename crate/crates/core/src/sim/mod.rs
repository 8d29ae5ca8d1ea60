//! Discrete-event simulation of a mesh on the three advertising channels.
mod engine;
mod queue;
mod radio;

pub use engine::{run, Delivery, RunOutput, RunStats};
pub use queue::{EventQueue, Scheduled};
pub use radio::{link_rssi, reception_outcome, RadioError, RadioModel};
