//! Cross-entropy head, parameter-shift gradients and the joint training loop.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    mapped_fidelity, mapped_fidelity_slope, swap_test_angles, CircuitSpec, ParameterVector, Readout,
};
use crate::encoding::FeatureVector;
use crate::error::{Error, Result};
use crate::mps::{feature_map, MappedInput, MpsConfig, MpsGradient, MpsModel};
use crate::sim::GateKind;

/// Probability clamp applied before taking logarithms.
pub const CLAMP_DELTA: f64 = 1e-12;

/// Binary cross-entropy with `p` clamped to `[δ, 1−δ]`.
pub fn binary_cost(p: f64, y: f64) -> f64 {
    let p = p.clamp(CLAMP_DELTA, 1.0 - CLAMP_DELTA);
    -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
}

/// `d binary_cost / dp`, zero where the clamp is active.
pub fn binary_cost_slope(p: f64, y: f64) -> f64 {
    if p <= CLAMP_DELTA || p >= 1.0 - CLAMP_DELTA {
        0.0
    } else {
        -y / p + (1.0 - y) / (1.0 - p)
    }
}

/// `π / (2√ε)` for the 1-based epoch `ε`.
pub fn epoch_shift(epoch: usize) -> Result<f64> {
    if epoch == 0 {
        return Err(Error::Argument("epochs are numbered from 1".into()));
    }
    Ok(FRAC_PI_2 / (epoch as f64).sqrt())
}

fn shifted<F: FnMut(&[f64]) -> f64>(f: &mut F, params: &[f64], index: usize, delta: f64) -> f64 {
    let mut p = params.to_vec();
    p[index] += delta;
    f(&p)
}

/// `0.5·(f(θ+s) − f(θ−s))` in coordinate `index`.
pub fn shift_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, params: &[f64], index: usize, shift: f64) -> f64 {
    0.5 * (shifted(&mut f, params, index, shift) - shifted(&mut f, params, index, -shift))
}

/// Central difference `(f(θ+s) − f(θ−s)) / 2s`.
pub fn finite_difference_gradient<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    params: &[f64],
    index: usize,
    step: f64,
) -> Result<f64> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {step}")));
    }
    Ok((shifted(&mut f, params, index, step) - shifted(&mut f, params, index, -step)) / (2.0 * step))
}

/// Four-term rule for gates whose generator has eigenvalues {0, ±1/2}
/// (controlled rotations). Exact for the resulting two-frequency dependence.
pub fn four_term_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, params: &[f64], index: usize) -> f64 {
    let d1 = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
    let d2 = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
    let a = shifted(&mut f, params, index, FRAC_PI_2) - shifted(&mut f, params, index, -FRAC_PI_2);
    let b = shifted(&mut f, params, index, 3.0 * FRAC_PI_2)
        - shifted(&mut f, params, index, -3.0 * FRAC_PI_2);
    d1 * a - d2 * b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Exact shift rules: two-term at π/2, four-term for controlled rotations.
    FixedHalfPi,
    /// Two-term rule with the shrinking shift `π/(2√ε)`.
    EpochDecay,
}

/// Derivative of `f` with respect to the parameter of a gate of type `kind`.
pub fn gate_gradient<F: FnMut(&[f64]) -> f64>(
    f: F,
    params: &[f64],
    index: usize,
    kind: GateKind,
    mode: ShiftMode,
    epoch: usize,
) -> Result<f64> {
    match mode {
        ShiftMode::FixedHalfPi if kind.is_controlled_rotation() => Ok(four_term_gradient(f, params, index)),
        ShiftMode::FixedHalfPi => Ok(shift_gradient(f, params, index, FRAC_PI_2)),
        ShiftMode::EpochDecay => Ok(shift_gradient(f, params, index, epoch_shift(epoch)?)),
    }
}

/// Exp-normalization with max subtraction.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|x| x / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MulticlassUpdate {
    /// Every class circuit is trained on every sample (label → 1, others → 0).
    All,
    /// Only the sample's own class circuit is trained, toward 1.
    LabelOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub shift_mode: ShiftMode,
    pub seed: u64,
    pub readout: Readout,
    pub multiclass_update: MulticlassUpdate,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 40,
            shift_mode: ShiftMode::FixedHalfPi,
            seed: 0,
            readout: Readout::Exact,
            multiclass_update: MulticlassUpdate::All,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Readout::Shots { shots: 0, .. } = self.readout {
            return Err(Error::Config("shot count must be positive".into()));
        }
        Ok(())
    }
}

/// One preprocessed training or evaluation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: MappedInput,
    pub class: usize,
}

impl Example {
    /// `features` are normalized pixels in `[0, 1]`.
    pub fn new(features: &FeatureVector, class: usize) -> Result<Self> {
        Ok(Self {
            input: feature_map(features.values())?,
            class,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub mean_cost: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    /// Mapped fidelity of each class circuit (one entry in binary mode).
    pub fidelities: Vec<f64>,
    /// Class probabilities: `(1−F, F)` in binary mode, softmax otherwise.
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn from_fidelities(fidelities: Vec<f64>) -> Self {
        if let [f] = fidelities[..] {
            Prediction {
                class: usize::from(f >= 0.5),
                probabilities: vec![1.0 - f, f],
                fidelities,
            }
        } else {
            let probabilities = softmax(&fidelities);
            Prediction {
                class: argmax(&probabilities),
                fidelities,
                probabilities,
            }
        }
    }
}

/// Per-sample gradients of the summed cross-entropy, all at one parameter snapshot.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub cost: f64,
    pub circuits: Vec<Option<Vec<f64>>>,
    pub mps: MpsGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub mps: MpsModel,
    pub circuit: CircuitSpec,
    pub params: Vec<ParameterVector>,
    /// Original labels, ascending; class index `c` is `classes[c]`.
    pub classes: Vec<u8>,
}

fn mix(seed: u64, a: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ModelState {
    pub fn new(circuit: CircuitSpec, mps_config: &MpsConfig, classes: Vec<u8>, seed: u64) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::Argument(format!(
                "need at least two classes, got {}",
                classes.len()
            )));
        }
        if mps_config.n_out != circuit.feature_dimension() {
            return Err(Error::Layout(format!(
                "tensor network outputs {} values but the circuit encodes {}",
                mps_config.n_out,
                circuit.feature_dimension()
            )));
        }
        let mps = MpsModel::new(mps_config, mix(seed, 1))?;
        let circuits = if classes.len() == 2 { 1 } else { classes.len() };
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 2));
        let params = (0..circuits)
            .map(|_| ParameterVector::random(circuit.parameter_count(), &mut rng))
            .collect();
        let model = Self {
            mps,
            circuit,
            params,
            classes,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.classes.len();
        let expected = if k == 2 { 1 } else { k };
        if k < 2 || self.params.len() != expected {
            return Err(Error::Layout(format!(
                "{k} classes need {expected} circuits, model has {}",
                self.params.len()
            )));
        }
        if self.mps.n_out() != self.circuit.feature_dimension() {
            return Err(Error::Layout(format!(
                "tensor network outputs {} values but the circuit encodes {}",
                self.mps.n_out(),
                self.circuit.feature_dimension()
            )));
        }
        let count = self.circuit.parameter_count();
        if let Some(p) = self.params.iter().find(|p| p.len() != count) {
            return Err(Error::Parameter(format!(
                "circuit takes {count} parameters, found a vector of {}",
                p.len()
            )));
        }
        Ok(())
    }

    pub fn is_binary(&self) -> bool {
        self.params.len() == 1
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn quantum_parameter_count(&self) -> usize {
        self.params.iter().map(ParameterVector::len).sum()
    }

    /// Tensor-network outputs mapped to encoding angles.
    fn angles(&self, input: &MappedInput) -> Result<(Vec<f64>, Vec<f64>)> {
        let y = self.mps.forward(input)?;
        let angles = y.iter().map(|v| v.atan()).collect();
        Ok((y, angles))
    }

    /// Mapped fidelity of every class circuit.
    pub fn fidelities(&self, input: &MappedInput, readout: Readout) -> Result<Vec<f64>> {
        let (_, angles) = self.angles(input)?;
        self.params
            .iter()
            .enumerate()
            .map(|(c, p)| {
                let r = salted(readout, c as u64);
                swap_test_angles(&self.circuit, &p.0, &angles, r).map(mapped_fidelity)
            })
            .collect()
    }

    pub fn predict(&self, input: &MappedInput, readout: Readout) -> Result<Prediction> {
        Ok(Prediction::from_fidelities(self.fidelities(input, readout)?))
    }

    /// Circuits trained on a sample of class `class`, with their targets.
    fn targets(&self, class: usize, update: MulticlassUpdate) -> Vec<(usize, f64)> {
        if self.is_binary() {
            vec![(0, class as f64)]
        } else {
            match update {
                MulticlassUpdate::All => (0..self.params.len())
                    .map(|c| (c, if c == class { 1.0 } else { 0.0 }))
                    .collect(),
                MulticlassUpdate::LabelOnly => vec![(class, 1.0)],
            }
        }
    }

    /// Summed cross-entropy for one sample.
    pub fn cost(&self, example: &Example, config: &TrainConfig) -> Result<f64> {
        let (_, angles) = self.angles(&example.input)?;
        self.targets(example.class, config.multiclass_update)
            .into_iter()
            .map(|(c, y)| {
                let r = salted(config.readout, c as u64);
                swap_test_angles(&self.circuit, &self.params[c].0, &angles, r)
                    .map(|p| binary_cost(mapped_fidelity(p), y))
            })
            .sum()
    }

    /// Gradients of [`ModelState::cost`] for one sample. `epoch` is 1-based and
    /// only matters for [`ShiftMode::EpochDecay`]; `salt` decorrelates shot seeds.
    pub fn gradients(&self, example: &Example, config: &TrainConfig, epoch: usize, salt: u64) -> Result<Gradients> {
        let (y, angles) = self.angles(&example.input)?;
        let ansatz = self.circuit.ansatz();
        let mut circuits = vec![None; self.params.len()];
        let mut d_angles = vec![0.0; angles.len()];
        let mut cost = 0.0;
        let mut evals = 0u64;
        let mut err = None;

        for (c, target) in self.targets(example.class, config.multiclass_update) {
            let theta = &self.params[c].0;
            let mut run = |params: &[f64], angles: &[f64]| -> f64 {
                evals += 1;
                let r = salted(config.readout, mix(salt, evals));
                match swap_test_angles(&self.circuit, params, angles, r) {
                    Ok(p) => p,
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                }
            };
            let p = run(theta, &angles);
            let fidelity = mapped_fidelity(p);
            cost += binary_cost(fidelity, target);
            let slope = binary_cost_slope(fidelity, target) * mapped_fidelity_slope(p);

            let mut grad = vec![0.0; theta.len()];
            if slope != 0.0 {
                for gate in &ansatz {
                    let g = gate_gradient(
                        |t| run(t, &angles),
                        theta,
                        gate.param,
                        gate.kind,
                        config.shift_mode,
                        epoch,
                    )?;
                    grad[gate.param] = slope * g;
                }
                // Encoding gates are RY/RZ: the π/2 rule is exact.
                for (k, d) in d_angles.iter_mut().enumerate() {
                    *d += slope * shift_gradient(|a| run(theta, a), &angles, k, FRAC_PI_2);
                }
            }
            circuits[c] = Some(grad);
        }
        if let Some(e) = err {
            return Err(e);
        }
        let upstream: Vec<f64> = d_angles
            .iter()
            .zip(&y)
            .map(|(d, v)| d / (1.0 + v * v))
            .collect();
        let mps = self.mps.backward(&example.input, &upstream)?;
        Ok(Gradients { cost, circuits, mps })
    }

    /// Plain SGD step on every parameter.
    pub fn apply(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        for (p, g) in self.params.iter_mut().zip(&grads.circuits) {
            if let Some(g) = g {
                for (t, d) in p.0.iter_mut().zip(g) {
                    *t -= lr * d;
                }
            }
        }
        self.mps.apply_gradient(&grads.mps, lr)
    }

    /// Fraction of correctly classified examples.
    pub fn accuracy(&self, data: &[Example], readout: Readout) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let correct = data
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                self.predict(&ex.input, salted(readout, i as u64))
                    .map(|p| usize::from(p.class == ex.class))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        Ok(correct as f64 / data.len() as f64)
    }

    /// `matrix[true][predicted]` counts.
    pub fn confusion(&self, data: &[Example], readout: Readout) -> Result<Vec<Vec<usize>>> {
        let k = self.num_classes();
        let preds = data
            .par_iter()
            .enumerate()
            .map(|(i, ex)| self.predict(&ex.input, salted(readout, i as u64)).map(|p| p.class))
            .collect::<Result<Vec<_>>>()?;
        let mut m = vec![vec![0; k]; k];
        for (ex, p) in data.iter().zip(preds) {
            if ex.class < k {
                m[ex.class][p] += 1;
            }
        }
        Ok(m)
    }
}

fn salted(readout: Readout, salt: u64) -> Readout {
    match readout {
        Readout::Exact => Readout::Exact,
        Readout::Shots { shots, seed } => Readout::Shots {
            shots,
            seed: mix(seed, salt),
        },
    }
}

/// Trains for `config.epochs` epochs; see [`train_with`].
pub fn train(
    model: ModelState,
    train_set: &[Example],
    test_set: Option<&[Example]>,
    config: &TrainConfig,
) -> Result<(ModelState, Vec<LossRecord>)> {
    train_with(model, train_set, test_set, config, |_| {})
}

/// Per-sample SGD over seeded epoch shuffles. For every sample the quantum and
/// tensor-network gradients are taken at the same parameter snapshot, then
/// applied. `on_epoch` sees each record as it is produced.
pub fn train_with(
    mut model: ModelState,
    train_set: &[Example],
    test_set: Option<&[Example]>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&LossRecord),
) -> Result<(ModelState, Vec<LossRecord>)> {
    config.validate()?;
    model.validate()?;
    if train_set.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let k = model.num_classes();
    if let Some(ex) = train_set.iter().chain(test_set.unwrap_or(&[])).find(|ex| ex.class >= k) {
        return Err(Error::Argument(format!("class index {} for a {k}-class model", ex.class)));
    }

    let mut records = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let salt = mix(mix(config.seed, epoch as u64), step as u64);
            let diverged = |message: String| Error::Training {
                epoch,
                sample: i,
                message,
            };
            let grads = model
                .gradients(&train_set[i], config, epoch, salt)
                .map_err(|e| diverged(e.to_string()))?;
            if !grads.cost.is_finite() {
                return Err(diverged(format!("cost is {}", grads.cost)));
            }
            let finite = grads.mps.is_finite()
                && grads.circuits.iter().flatten().flatten().all(|g| g.is_finite());
            if !finite {
                return Err(diverged("non-finite gradient".into()));
            }
            model.apply(&grads, config.learning_rate)?;
            total += grads.cost;
        }
        let eval = salted(config.readout, mix(config.seed, u64::MAX - epoch as u64));
        let record = LossRecord {
            epoch,
            mean_cost: total / train_set.len() as f64,
            train_accuracy: model.accuracy(train_set, eval)?,
            test_accuracy: test_set.map(|t| model.accuracy(t, eval)).transpose()?,
        };
        log::debug!(
            "epoch {epoch}: cost {:.6} train {:.4} test {:?}",
            record.mean_cost,
            record.train_accuracy,
            record.test_accuracy
        );
        on_epoch(&record);
        records.push(record);
    }
    Ok((model, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::LayerKind;
    use crate::mps::Contraction;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn cost_examples() {
        assert!(binary_cost(1.0 - CLAMP_DELTA, 1.0) < 1e-11);
        assert!((binary_cost(0.5, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((binary_cost(0.9, 0.0) - 2.302_585_092_994_046).abs() < 1e-12);
        assert!(binary_cost(0.0, 1.0).is_finite());
        assert!(binary_cost(1.0, 0.0).is_finite());
    }

    #[test]
    fn cost_slope_matches_difference() {
        for &(p, y) in &[(0.3, 1.0), (0.7, 0.0), (0.5, 1.0), (0.01, 0.0)] {
            let fd = finite_difference_gradient(|v| binary_cost(v[0], y), &[p], 0, 1e-6).unwrap();
            assert!((binary_cost_slope(p, y) - fd).abs() < 1e-6 * fd.abs().max(1.0));
        }
        assert_eq!(binary_cost_slope(0.0, 1.0), 0.0);
    }

    #[test]
    fn epoch_shift_examples() {
        assert_eq!(epoch_shift(1).unwrap(), FRAC_PI_2);
        assert!((epoch_shift(4).unwrap() - PI / 4.0).abs() < 1e-15);
        assert!((epoch_shift(40).unwrap() - 0.248_364_706_6).abs() < 1e-9);
        assert!(matches!(epoch_shift(0), Err(Error::Argument(_))));
    }

    #[test]
    fn shift_and_difference_examples() {
        assert_eq!(shift_gradient(|_| 3.0, &[0.4], 0, FRAC_PI_2), 0.0);
        for t in [-2.0, 0.0, 0.3, 1.7] {
            let g = shift_gradient(|v| v[0].sin(), &[t], 0, FRAC_PI_2);
            assert!((g - f64::cos(t)).abs() < 1e-15);
        }
        let g = finite_difference_gradient(|v| v[0] * v[0], &[1.0], 0, 1e-5).unwrap();
        assert!((g - 2.0).abs() < 1e-8);
        assert_eq!(finite_difference_gradient(|_| 1.0, &[1.0], 0, 1e-5).unwrap(), 0.0);
        assert!(matches!(
            finite_difference_gradient(|v| v[0], &[1.0], 0, 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn four_term_rule_is_exact_on_two_frequencies() {
        // a + b·cos(θ/2) + c·sin(θ/2) + d·cos θ + e·sin θ
        let f = |v: &[f64]| 0.2 + 0.7 * (v[0] / 2.0).cos() - 0.4 * (v[0] / 2.0).sin() + 0.3 * v[0].cos() + 0.9 * v[0].sin();
        let df = |t: f64| -0.35 * (t / 2.0).sin() - 0.2 * (t / 2.0).cos() - 0.3 * t.sin() + 0.9 * t.cos();
        for t in [-1.0, 0.0, 0.8, 2.5] {
            assert!((four_term_gradient(f, &[t], 0) - df(t)).abs() < 1e-13);
        }
    }

    fn raw_swap(spec: &CircuitSpec, params: &[f64], angles: &[f64]) -> f64 {
        swap_test_angles(spec, params, angles, Readout::Exact).unwrap()
    }

    #[test]
    fn exact_gate_gradients_on_every_layer_kind() {
        let spec = CircuitSpec::new(
            2,
            vec![LayerKind::Single, LayerKind::Dual, LayerKind::Entangle],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta = ParameterVector::random(spec.parameter_count(), &mut rng).0;
        let angles = [0.4, 1.1, 2.0, -0.6];
        for gate in spec.ansatz() {
            let f = |t: &[f64]| raw_swap(&spec, t, &angles);
            let exact = gate_gradient(f, &theta, gate.param, gate.kind, ShiftMode::FixedHalfPi, 1).unwrap();
            let fd = finite_difference_gradient(f, &theta, gate.param, 1e-5).unwrap();
            assert!((exact - fd).abs() < 1e-8, "{:?}: {exact} vs {fd}", gate.kind);
        }
    }

    #[test]
    fn two_term_rule_misses_controlled_rotations() {
        let spec = CircuitSpec::new(2, vec![LayerKind::Single, LayerKind::Entangle]).unwrap();
        let theta = vec![0.3, 1.2, 2.2, 0.5, 0.9, 1.9];
        let angles = [1.0, 0.2, 0.7, 0.4];
        let f = |t: &[f64]| raw_swap(&spec, t, &angles);
        let fd = finite_difference_gradient(f, &theta, 4, 1e-5).unwrap();
        let two = shift_gradient(f, &theta, 4, FRAC_PI_2);
        assert!((two - fd).abs() > 1e-4);
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&[0.0, 0.0, 0.0]);
        assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let s = softmax(&[1000.0, 0.0, 0.0]);
        assert!((s[0] - 1.0).abs() < 1e-12 && s.iter().all(|v| v.is_finite()));
        let s = softmax(&[2f64.ln(), 0.0, 0.0]);
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn prediction_rules() {
        assert_eq!(Prediction::from_fidelities(vec![0.49]).class, 0);
        assert_eq!(Prediction::from_fidelities(vec![0.51]).class, 1);
        assert_eq!(Prediction::from_fidelities(vec![0.5]).class, 1);
        let p = Prediction::from_fidelities(vec![0.9, 0.9, 0.1]);
        assert_eq!(p.class, 0);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(Prediction::from_fidelities(vec![0.1, 0.2, 0.9]).class, 2);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 1..8),
            c in -100.0f64..100.0,
        ) {
            let a = softmax(&v);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert_eq!(argmax(&a), argmax(&b));
        }

        #[test]
        fn shift_rule_exact_for_single_parameter(
            theta in prop::collection::vec(0.0f64..std::f64::consts::TAU, 8),
            angles in prop::collection::vec(-1.5f64..1.5, 4),
            index in 0usize..8,
        ) {
            let spec = CircuitSpec::new(2, vec![LayerKind::Single, LayerKind::Dual, LayerKind::Single]).unwrap();
            let theta: Vec<f64> = theta.into_iter().chain(std::iter::repeat(0.3)).take(spec.parameter_count()).collect();
            let index = index % spec.parameter_count();
            let f = |t: &[f64]| raw_swap(&spec, t, &angles);
            // Analytic derivative of a·cos θ + b·sin θ + c from three samples.
            let t0 = theta[index];
            let at = |x: f64| { let mut t = theta.clone(); t[index] = x; f(&t) };
            let (f0, f1, f2) = (at(0.0), at(FRAC_PI_2), at(PI));
            let a = (f0 - f2) / 2.0;
            let c = (f0 + f2) / 2.0;
            let b = f1 - c;
            let analytic = -a * t0.sin() + b * t0.cos();
            let g = shift_gradient(f, &theta, index, FRAC_PI_2);
            prop_assert!((g - analytic).abs() < 1e-10);
        }
    }

    fn toy_model(seed: u64) -> (ModelState, Vec<Example>) {
        let circuit = CircuitSpec::new(2, vec![LayerKind::Single, LayerKind::Dual, LayerKind::Entangle]).unwrap();
        let cfg = MpsConfig {
            contraction: Contraction::Normalized,
            ..MpsConfig::new(4, 2, 4)
        };
        let model = ModelState::new(circuit, &cfg, vec![0, 1], seed).unwrap();
        let data = vec![
            Example::new(&FeatureVector(vec![0.0, 0.0, 0.0, 0.0]), 0).unwrap(),
            Example::new(&FeatureVector(vec![1.0, 1.0, 1.0, 1.0]), 1).unwrap(),
        ];
        (model, data)
    }

    fn toy_config() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.4,
            epochs: 50,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn toy_set_converges_and_cost_decreases() {
        let (model, data) = toy_model(11);
        let (_, records) = train(model, &data, None, &toy_config()).unwrap();
        assert_eq!(records.len(), 50);
        let last = records.last().unwrap();
        assert!(last.mean_cost < 0.05, "final cost {} {records:?}", last.mean_cost);
        assert_eq!(last.train_accuracy, 1.0);
        for w in records[..10].windows(2) {
            assert!(w[1].mean_cost <= w[0].mean_cost + 1e-6, "{records:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (model, data) = toy_model(4);
        let cfg = TrainConfig { epochs: 5, ..toy_config() };
        let (a, ra) = train(model.clone(), &data, Some(&data), &cfg).unwrap();
        let (b, rb) = train(model, &data, Some(&data), &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (model, data) = toy_model(4);
        let cfg = TrainConfig { epochs: 0, ..toy_config() };
        let (after, records) = train(model.clone(), &data, None, &cfg).unwrap();
        assert!(records.is_empty());
        assert_eq!(after, model);
    }

    #[test]
    fn full_cost_gradient_matches_finite_differences() {
        let (model, data) = toy_model(21);
        let cfg = TrainConfig::default();
        for ex in &data {
            let g = model.gradients(ex, &cfg, 1, 0).unwrap();
            let theta = model.params[0].0.clone();
            let grad = g.circuits[0].as_ref().unwrap();
            for i in 0..theta.len() {
                let f = |t: &[f64]| {
                    let mut m = model.clone();
                    m.params[0].0 = t.to_vec();
                    m.cost(ex, &cfg).unwrap()
                };
                let fd = finite_difference_gradient(f, &theta, i, 1e-5).unwrap();
                assert!((grad[i] - fd).abs() < 1e-4 * fd.abs().max(1e-2), "θ{i}: {} vs {fd}", grad[i]);
            }
            for (s, site) in model.mps.sites().iter().enumerate() {
                for v in 0..site.values.len() {
                    let base = site.values[v];
                    let f = |t: &[f64]| {
                        let mut m = model.clone();
                        m.mps.sites_mut()[s].values[v] = t[0];
                        m.cost(ex, &cfg).unwrap()
                    };
                    let fd = finite_difference_gradient(f, &[base], 0, 1e-5).unwrap();
                    let an = g.mps.sites[s][v];
                    assert!((an - fd).abs() < 1e-4 * fd.abs().max(1e-2), "site {s}[{v}]: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn multiclass_targets_and_shapes() {
        let circuit = CircuitSpec::new(1, vec![LayerKind::Single]).unwrap();
        let cfg = MpsConfig::new(3, 2, 2);
        let model = ModelState::new(circuit.clone(), &cfg, vec![0, 3, 6], 1).unwrap();
        assert_eq!(model.params.len(), 3);
        assert_eq!(model.targets(1, MulticlassUpdate::All), vec![(0, 0.0), (1, 1.0), (2, 0.0)]);
        assert_eq!(model.targets(2, MulticlassUpdate::LabelOnly), vec![(2, 1.0)]);
        let ex = Example::new(&FeatureVector(vec![0.2, 0.5, 0.9]), 2).unwrap();
        let p = model.predict(&ex.input, Readout::Exact).unwrap();
        assert_eq!(p.fidelities.len(), 3);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let tc = TrainConfig { multiclass_update: MulticlassUpdate::LabelOnly, ..TrainConfig::default() };
        let g = model.gradients(&ex, &tc, 1, 0).unwrap();
        assert!(g.circuits[0].is_none() && g.circuits[2].is_some());

        assert!(matches!(ModelState::new(circuit.clone(), &cfg, vec![4], 1), Err(Error::Argument(_))));
        let bad = MpsConfig::new(3, 2, 4);
        assert!(matches!(ModelState::new(circuit, &bad, vec![0, 1], 1), Err(Error::Layout(_))));
    }

    #[test]
    fn divergence_reports_epoch_and_sample() {
        let (mut model, data) = toy_model(2);
        model.params[0].0[0] = f64::NAN;
        let err = train(model, &data, None, &TrainConfig { epochs: 2, ..toy_config() }).unwrap_err();
        assert!(matches!(err, Error::Training { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn shot_readout_training_runs_and_is_seeded() {
        let (model, data) = toy_model(5);
        let cfg = TrainConfig {
            epochs: 2,
            readout: Readout::Shots { shots: 2000, seed: 8 },
            ..toy_config()
        };
        let (a, ra) = train(model.clone(), &data, None, &cfg).unwrap();
        let (b, rb) = train(model, &data, None, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig { readout: Readout::Shots { shots: 0, seed: 0 }, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
