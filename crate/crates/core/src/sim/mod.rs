//! Dense statevector simulation.

pub mod gates;
pub mod state;

pub use gates::{gate_matrix, Elements, GateKind, GateMatrix};
pub use state::{MeasurementOutcome, StateVector, MAX_QUBITS};
