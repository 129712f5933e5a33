//! Classical → quantum data translation.
//!
//! Each qubit carries two feature dimensions: an RY rotation for dimension
//! `2k` followed by an RZ rotation for dimension `2k + 1`. Raw features in
//! `[0, 1]` use the angle `2·asin(√x)`, which makes the qubit's excited-state
//! probability equal to `x` after the RY. Unbounded tensor-network outputs use
//! `atan(y)` directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{gate_matrix, GateKind, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// Features in `[0, 1]`, angle `2·asin(√x)`.
    UnitInterval,
    /// Unbounded features, angle `atan(y)`.
    Arctan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingPlan {
    pub mode: EncodingMode,
    pub dimension: usize,
}

impl EncodingPlan {
    pub fn new(mode: EncodingMode, dimension: usize) -> Result<Self> {
        if dimension == 0 || !dimension.is_multiple_of(2) {
            return Err(Error::Layout(format!(
                "feature dimension must be even and positive, got {dimension}"
            )));
        }
        Ok(Self { mode, dimension })
    }

    pub fn qubits_used(&self) -> usize {
        self.dimension.div_ceil(2)
    }

    /// Rotation angles in gate order: `[ry_0, rz_0, ry_1, rz_1, …]`.
    pub fn angles(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        if features.dim() != self.dimension {
            return Err(Error::Layout(format!(
                "expected {} features, got {}",
                self.dimension,
                features.dim()
            )));
        }
        match self.mode {
            EncodingMode::UnitInterval => features.0.iter().map(|&x| angle_from_value(x)).collect(),
            EncodingMode::Arctan => features
                .0
                .iter()
                .map(|&y| {
                    if y.is_nan() {
                        Err(Error::Domain("NaN feature in arctan encoding".into()))
                    } else {
                        Ok(y.atan())
                    }
                })
                .collect(),
        }
    }
}

/// `2·asin(√x)` for `x ∈ [0, 1]`.
pub fn angle_from_value(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("value {x} outside [0, 1]")));
    }
    Ok(2.0 * x.sqrt().asin())
}

/// Applies precomputed encoding angles (`[ry_0, rz_0, …]`) starting at `first_qubit`.
pub fn encode_angles(state: &mut StateVector, angles: &[f64], first_qubit: usize) -> Result<()> {
    if !angles.len().is_multiple_of(2) {
        return Err(Error::Layout(format!("odd angle count {}", angles.len())));
    }
    let qubits = angles.len() / 2;
    if first_qubit + qubits > state.num_qubits() {
        return Err(Error::Layout(format!(
            "encoding needs qubits {first_qubit}..{} but state has {}",
            first_qubit + qubits,
            state.num_qubits()
        )));
    }
    for (k, pair) in angles.chunks_exact(2).enumerate() {
        let q = first_qubit + k;
        state.apply_1q(&gate_matrix(GateKind::Ry, Some(pair[0]))?, q)?;
        state.apply_1q(&gate_matrix(GateKind::Rz, Some(pair[1]))?, q)?;
    }
    Ok(())
}

pub fn encode_features(
    state: &mut StateVector,
    features: &FeatureVector,
    first_qubit: usize,
    plan: &EncodingPlan,
) -> Result<()> {
    let angles = plan.angles(features)?;
    encode_angles(state, &angles, first_qubit)
}

/// Per-dimension min-max statistics, fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit(raw: &[Vec<f64>]) -> Result<Self> {
        let first = raw
            .first()
            .ok_or_else(|| Error::Argument("cannot normalize an empty dataset".into()))?;
        let dim = first.len();
        let mut min = first.clone();
        let mut max = first.clone();
        for (i, row) in raw.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Layout(format!(
                    "row {i} has {} dimensions, expected {dim}",
                    row.len()
                )));
            }
            for (d, &v) in row.iter().enumerate() {
                min[d] = min[d].min(v);
                max[d] = max[d].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Scales into `[0, 1]`. Constant dimensions map to 0; values outside the
    /// fitted range (unseen data) are clamped.
    pub fn apply(&self, raw: &[f64]) -> Result<FeatureVector> {
        if raw.len() != self.dim() {
            return Err(Error::Layout(format!(
                "expected {} dimensions, got {}",
                self.dim(),
                raw.len()
            )));
        }
        let values = raw
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(FeatureVector(values))
    }
}

/// Fits min-max statistics on `raw` and applies them to every row.
pub fn normalize_dataset(raw: &[Vec<f64>]) -> Result<Vec<FeatureVector>> {
    let norm = Normalizer::fit(raw)?;
    raw.iter().map(|r| norm.apply(r)).collect()
}
