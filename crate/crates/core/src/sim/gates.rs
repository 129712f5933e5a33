//! Gate matrices used by the ansatz, the data encoding and the swap test.
//!
//! Two-qubit matrices are written in the basis `|q_a q_b⟩` with `q_a` as the
//! more significant bit, so for controlled gates `q_a` is the control.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    H,
    Cnot,
    Rxx,
    Ryy,
    Rzz,
    Crx,
    Cry,
    Crz,
}

impl GateKind {
    pub const ALL: [GateKind; 11] = [
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::H,
        GateKind::Cnot,
        GateKind::Rxx,
        GateKind::Ryy,
        GateKind::Rzz,
        GateKind::Crx,
        GateKind::Cry,
        GateKind::Crz,
    ];

    pub fn is_parameterized(self) -> bool {
        !matches!(self, GateKind::H | GateKind::Cnot)
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::H => 1,
            _ => 2,
        }
    }

    /// Controlled rotations: generator spectrum {0, ±1/2}, so the plain
    /// two-term shift rule is not exact for them.
    pub fn is_controlled_rotation(self) -> bool {
        matches!(self, GateKind::Crx | GateKind::Cry | GateKind::Crz)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::H => "H",
            GateKind::Cnot => "CNOT",
            GateKind::Rxx => "RXX",
            GateKind::Ryy => "RYY",
            GateKind::Rzz => "RZZ",
            GateKind::Crx => "CRX",
            GateKind::Cry => "CRY",
            GateKind::Crz => "CRZ",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Elements {
    One([[Complex64; 2]; 2]),
    Two([[Complex64; 4]; 4]),
}

impl Elements {
    pub fn dim(&self) -> usize {
        match self {
            Elements::One(_) => 2,
            Elements::Two(_) => 4,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        match self {
            Elements::One(m) => m[row][col],
            Elements::Two(m) => m[row][col],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    pub kind: GateKind,
    pub angle: Option<f64>,
    pub elements: Elements,
}

impl GateMatrix {
    pub fn dim(&self) -> usize {
        self.elements.dim()
    }

    /// Largest entry of |U†U − I|.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += self.elements.get(k, i).conj() * self.elements.get(k, j);
                }
                let expected = if i == j { ONE } else { ZERO };
                worst = worst.max((acc - expected).norm());
            }
        }
        worst
    }
}

/// Builds the matrix for `kind`. `angle` must be present exactly when the gate is parameterized.
pub fn gate_matrix(kind: GateKind, angle: Option<f64>) -> Result<GateMatrix> {
    let theta = match (kind.is_parameterized(), angle) {
        (true, Some(t)) if t.is_finite() => t,
        (true, Some(t)) => {
            return Err(Error::Construction(format!("{kind} angle must be finite, got {t}")))
        }
        (true, None) => return Err(Error::Construction(format!("{kind} requires an angle"))),
        (false, Some(_)) => {
            return Err(Error::Construction(format!("{kind} takes no angle")))
        }
        (false, None) => 0.0,
    };

    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let real_s = Complex64::new(s, 0.0);
    let imag_s = Complex64::new(0.0, s);
    let phase_minus = Complex64::from_polar(1.0, -theta / 2.0);
    let phase_plus = Complex64::from_polar(1.0, theta / 2.0);

    let elements = match kind {
        GateKind::Rx => Elements::One([[c, -imag_s], [-imag_s, c]]),
        GateKind::Ry => Elements::One([[c, -real_s], [real_s, c]]),
        GateKind::Rz => Elements::One([[phase_minus, ZERO], [ZERO, phase_plus]]),
        GateKind::H => {
            let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
            Elements::One([[h, h], [h, -h]])
        }
        GateKind::Cnot => Elements::Two([
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, ONE, ZERO, ZERO],
            [ZERO, ZERO, ZERO, ONE],
            [ZERO, ZERO, ONE, ZERO],
        ]),
        GateKind::Rxx => Elements::Two([
            [c, ZERO, ZERO, -imag_s],
            [ZERO, c, -imag_s, ZERO],
            [ZERO, -imag_s, c, ZERO],
            [-imag_s, ZERO, ZERO, c],
        ]),
        GateKind::Ryy => Elements::Two([
            [c, ZERO, ZERO, imag_s],
            [ZERO, c, -imag_s, ZERO],
            [ZERO, -imag_s, c, ZERO],
            [imag_s, ZERO, ZERO, c],
        ]),
        GateKind::Rzz => Elements::Two([
            [phase_minus, ZERO, ZERO, ZERO],
            [ZERO, phase_plus, ZERO, ZERO],
            [ZERO, ZERO, phase_plus, ZERO],
            [ZERO, ZERO, ZERO, phase_minus],
        ]),
        GateKind::Crx => controlled([[c, -imag_s], [-imag_s, c]]),
        GateKind::Cry => controlled([[c, -real_s], [real_s, c]]),
        GateKind::Crz => controlled([[phase_minus, ZERO], [ZERO, phase_plus]]),
    };

    Ok(GateMatrix {
        kind,
        angle: kind.is_parameterized().then_some(theta),
        elements,
    })
}

fn controlled(u: [[Complex64; 2]; 2]) -> Elements {
    Elements::Two([
        [ONE, ZERO, ZERO, ZERO],
        [ZERO, ONE, ZERO, ZERO],
        [ZERO, ZERO, u[0][0], u[0][1]],
        [ZERO, ZERO, u[1][0], u[1][1]],
    ])
}
