//! Trainable ansatz and the swap-test circuit around it.
//!
//! Register layout for `n` data qubits: qubit 0 is the ancilla, qubits
//! `1..=n` hold the encoded data and qubits `n+1..=2n` hold the trained state.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_angles, EncodingPlan, FeatureVector};
use crate::error::{Error, Result};
use crate::sim::{gate_matrix, GateKind, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// RY then RZ on every register qubit.
    #[serde(alias = "s", alias = "SINGLE")]
    Single,
    /// RYY then RZZ on every adjacent pair.
    #[serde(alias = "d", alias = "DUAL")]
    Dual,
    /// CRY then CRZ on every adjacent (control, target) pair.
    #[serde(alias = "e", alias = "ENTANGLE")]
    Entangle,
}

impl LayerKind {
    pub fn parameter_count(self, qubits: usize) -> usize {
        match self {
            LayerKind::Single => 2 * qubits,
            LayerKind::Dual | LayerKind::Entangle => 2 * qubits.saturating_sub(1),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Single => "single",
            LayerKind::Dual => "dual",
            LayerKind::Entangle => "entangle",
        })
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" | "s" => Ok(LayerKind::Single),
            "dual" | "d" => Ok(LayerKind::Dual),
            "entangle" | "e" => Ok(LayerKind::Entangle),
            other => Err(Error::Config(format!("unknown layer kind {other:?}"))),
        }
    }
}

/// One rotation of the ansatz. Qubit indices are relative to the trained register.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnsatzGate {
    pub kind: GateKind,
    pub qubits: (usize, Option<usize>),
    pub param: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub data_qubits: usize,
    pub layers: Vec<LayerKind>,
}

impl CircuitSpec {
    pub fn new(data_qubits: usize, layers: Vec<LayerKind>) -> Result<Self> {
        if data_qubits == 0 {
            return Err(Error::Layout("circuit needs at least one data qubit".into()));
        }
        let spec = Self {
            data_qubits,
            layers,
        };
        StateVector::new(spec.total_qubits())
            .map_err(|e| Error::Layout(format!("circuit too large: {e}")))?;
        Ok(spec)
    }

    pub fn trained_qubits(&self) -> usize {
        self.data_qubits
    }

    pub fn total_qubits(&self) -> usize {
        1 + self.data_qubits + self.trained_qubits()
    }

    pub fn feature_dimension(&self) -> usize {
        2 * self.data_qubits
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.parameter_count(self.trained_qubits()))
            .sum()
    }

    /// Gate list in application order, parameters numbered consecutively.
    pub fn ansatz(&self) -> Vec<AnsatzGate> {
        let n = self.trained_qubits();
        let mut gates = Vec::with_capacity(self.parameter_count());
        let mut push = |kind, qubits| {
            let param = gates.len();
            gates.push(AnsatzGate {
                kind,
                qubits,
                param,
            });
        };
        for layer in &self.layers {
            match layer {
                LayerKind::Single => {
                    for q in 0..n {
                        push(GateKind::Ry, (q, None));
                        push(GateKind::Rz, (q, None));
                    }
                }
                LayerKind::Dual => {
                    for q in 0..n.saturating_sub(1) {
                        push(GateKind::Ryy, (q, Some(q + 1)));
                        push(GateKind::Rzz, (q, Some(q + 1)));
                    }
                }
                LayerKind::Entangle => {
                    for q in 0..n.saturating_sub(1) {
                        push(GateKind::Cry, (q, Some(q + 1)));
                        push(GateKind::Crz, (q, Some(q + 1)));
                    }
                }
            }
        }
        gates
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    /// Uniform draws from `[0, π)`.
    pub fn random<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Self {
        ParameterVector(
            (0..count)
                .map(|_| rng.random::<f64>() * std::f64::consts::PI)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_params(spec: &CircuitSpec, params: &[f64]) -> Result<()> {
    let expected = spec.parameter_count();
    if params.len() != expected {
        return Err(Error::Parameter(format!(
            "circuit takes {expected} parameters, got {}",
            params.len()
        )));
    }
    Ok(())
}

/// Applies the ansatz to the register starting at `first_qubit`.
pub fn prepare_trained_state(
    spec: &CircuitSpec,
    params: &[f64],
    state: &mut StateVector,
    first_qubit: usize,
) -> Result<()> {
    check_params(spec, params)?;
    if first_qubit + spec.trained_qubits() > state.num_qubits() {
        return Err(Error::Layout(format!(
            "trained register {first_qubit}..{} does not fit {} qubits",
            first_qubit + spec.trained_qubits(),
            state.num_qubits()
        )));
    }
    for gate in spec.ansatz() {
        let m = gate_matrix(gate.kind, Some(params[gate.param]))?;
        match gate.qubits {
            (q, None) => state.apply_1q(&m, first_qubit + q)?,
            (a, Some(b)) => state.apply_2q(&m, first_qubit + a, first_qubit + b)?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Readout {
    Exact,
    Shots { shots: u64, seed: u64 },
}

/// Swap test between the encoded features and the trained state; returns the
/// ancilla's probability of reading 0, i.e. `(1 + F) / 2`.
pub fn swap_test(
    spec: &CircuitSpec,
    params: &[f64],
    features: &FeatureVector,
    plan: &EncodingPlan,
    readout: Readout,
) -> Result<f64> {
    if plan.dimension != spec.feature_dimension() {
        return Err(Error::Layout(format!(
            "circuit encodes {} features, plan has {}",
            spec.feature_dimension(),
            plan.dimension
        )));
    }
    let angles = plan.angles(features)?;
    swap_test_angles(spec, params, &angles, readout)
}

/// Swap test with the data register prepared from explicit `[ry_0, rz_0, …]` angles.
pub fn swap_test_angles(
    spec: &CircuitSpec,
    params: &[f64],
    angles: &[f64],
    readout: Readout,
) -> Result<f64> {
    if angles.len() != spec.feature_dimension() {
        return Err(Error::Layout(format!(
            "circuit encodes {} angles, got {}",
            spec.feature_dimension(),
            angles.len()
        )));
    }
    check_params(spec, params)?;

    let n = spec.data_qubits;
    let mut state = StateVector::new(spec.total_qubits())?;
    let hadamard = gate_matrix(GateKind::H, None)?;
    state.apply_1q(&hadamard, 0)?;
    encode_angles(&mut state, angles, 1)?;
    prepare_trained_state(spec, params, &mut state, 1 + n)?;
    for i in 0..n {
        state.apply_cswap(0, 1 + i, 1 + n + i)?;
    }
    state.apply_1q(&hadamard, 0)?;

    match readout {
        Readout::Exact => state.zero_probability(0),
        Readout::Shots { shots, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(state.sample(0, shots, &mut rng)?.estimate())
        }
    }
}

/// Maps the swap-test range `[0.5, 1]` onto `[0, 1]`, clamping shot noise below 0.5 to 0.
pub fn mapped_fidelity(raw: f64) -> f64 {
    ((raw - 0.5) * 2.0).max(0.0)
}

/// Derivative of [`mapped_fidelity`] with respect to the raw output.
pub fn mapped_fidelity_slope(raw: f64) -> f64 {
    if raw > 0.5 {
        2.0
    } else {
        0.0
    }
}
