//! Dense statevector with in-place gate kernels.
//!
//! Qubit 0 is the most significant bit of the basis index, so the amplitude of
//! `|q0 q1 … q_{n-1}⟩` lives at index `q0·2^{n-1} + … + q_{n-1}`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::gates::{Elements, GateMatrix};
use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// Result of reading out a single qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub zero_probability: f64,
    /// `[count of 0, count of 1]` when shot-sampled.
    pub counts: Option<[u64; 2]>,
    pub shots: u64,
}

impl MeasurementOutcome {
    /// Shot estimate of P(0) when sampled, the exact value otherwise.
    pub fn estimate(&self) -> f64 {
        match self.counts {
            Some([zeros, _]) if self.shots > 0 => zeros as f64 / self.shots as f64,
            _ => self.zero_probability,
        }
    }
}

impl StateVector {
    /// All-|0⟩ state on `num_qubits` qubits.
    pub fn new(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Size(format!(
                "num_qubits must be in 1..={MAX_QUBITS}, got {num_qubits}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps explicit amplitudes. The length must be a power of two; normalization is not checked.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Size(format!(
                "amplitude count must be a power of two ≥ 2, got {len}"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(Error::Size(format!("{num_qubits} qubits exceeds {MAX_QUBITS}")));
        }
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn check_index(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::Index(format!(
                "qubit {qubit} out of range for {} qubits",
                self.num_qubits
            )));
        }
        Ok(())
    }

    pub fn apply_1q(&mut self, gate: &GateMatrix, target: usize) -> Result<()> {
        let Elements::One(u) = &gate.elements else {
            return Err(Error::Argument(format!("{} is not a single-qubit gate", gate.kind)));
        };
        self.check_index(target)?;
        let stride = self.mask(target);
        let amps = &mut self.amplitudes;
        // Blocks of 2·stride: the first half has the target bit clear.
        for block in (0..amps.len()).step_by(stride << 1) {
            for i in block..block + stride {
                let a0 = amps[i];
                let a1 = amps[i + stride];
                amps[i] = u[0][0] * a0 + u[0][1] * a1;
                amps[i + stride] = u[1][0] * a0 + u[1][1] * a1;
            }
        }
        Ok(())
    }

    /// Applies a 4×4 gate with `q_a` as the high bit of the local two-qubit index.
    pub fn apply_2q(&mut self, gate: &GateMatrix, q_a: usize, q_b: usize) -> Result<()> {
        let Elements::Two(u) = &gate.elements else {
            return Err(Error::Argument(format!("{} is not a two-qubit gate", gate.kind)));
        };
        self.check_index(q_a)?;
        self.check_index(q_b)?;
        if q_a == q_b {
            return Err(Error::Index(format!("two-qubit gate on duplicate qubit {q_a}")));
        }
        let ma = self.mask(q_a);
        let mb = self.mask(q_b);
        let amps = &mut self.amplitudes;
        for base in 0..amps.len() {
            if base & (ma | mb) != 0 {
                continue;
            }
            let idx = [base, base | mb, base | ma, base | ma | mb];
            let v = idx.map(|i| amps[i]);
            for (r, &i) in idx.iter().enumerate() {
                amps[i] = u[r][0] * v[0] + u[r][1] * v[1] + u[r][2] * v[2] + u[r][3] * v[3];
            }
        }
        Ok(())
    }

    /// Fredkin gate: swaps wires `a` and `b` on the subspace where `control` is 1.
    pub fn apply_cswap(&mut self, control: usize, a: usize, b: usize) -> Result<()> {
        for q in [control, a, b] {
            self.check_index(q)?;
        }
        if control == a || control == b || a == b {
            return Err(Error::Index(format!(
                "CSWAP needs distinct qubits, got ({control}, {a}, {b})"
            )));
        }
        let mc = self.mask(control);
        let ma = self.mask(a);
        let mb = self.mask(b);
        for i in 0..self.amplitudes.len() {
            // Visit each swapped pair once: control set, a set, b clear.
            if i & mc != 0 && i & ma != 0 && i & mb == 0 {
                let j = (i & !ma) | mb;
                self.amplitudes.swap(i, j);
            }
        }
        Ok(())
    }

    /// Probability that measuring `qubit` in the Z basis yields 0.
    pub fn zero_probability(&self, qubit: usize) -> Result<f64> {
        self.check_index(qubit)?;
        let m = self.mask(qubit);
        let p: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        Ok(p.clamp(0.0, 1.0))
    }

    /// Draws `shots` Z-basis outcomes of `qubit` from the caller's generator.
    /// The state is left untouched.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        qubit: usize,
        shots: u64,
        rng: &mut R,
    ) -> Result<MeasurementOutcome> {
        if shots == 0 {
            return Err(Error::Argument("shots must be at least 1".into()));
        }
        let p0 = self.zero_probability(qubit)?;
        let zeros = Binomial::new(shots, p0)
            .map_err(|e| Error::Argument(format!("invalid probability {p0}: {e}")))?
            .sample(rng);
        Ok(MeasurementOutcome {
            zero_probability: p0,
            counts: Some([zeros, shots - zeros]),
            shots,
        })
    }
}
