//! A small trainable dual-branch fusion network with hand-rolled
//! reverse-mode differentiation, its parameter container, and a
//! deterministic training loop.

pub mod layers;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use model::{MicroNet, MicroNetConfig, MicroOutput};
pub use params::ParameterStore;
pub use train::{train, train_new, AdamW, TrainConfig, TrainSample};
