//! Gaussian-state simulation and compilation for reconfigurable photonic circuits.

pub mod analysis;
pub mod circuit;
pub mod compiler;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod linalg;
pub mod mesh;

pub use circuit::{
    apply_loss_model, build_two_mode_chip, simulate, simulate_with_oracle, CircuitElement,
    CircuitProgram, ElementKind, LossModel, VoltageFrame,
};
pub use error::{Error, Result};
pub use gaussian::{fidelity, loss_channel, GaussianState, SymplecticOp};
pub use linalg::{CMat, RMat, RVec};
