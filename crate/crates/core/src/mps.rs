//! Matrix-product-state feature extractor.
//!
//! A chain of `N` order-3 site tensors `T_i[l, p, r]` (physical leg `p` of
//! size 2) with one site carrying an extra output leg of size `n_out`. Each
//! pixel is embedded as `(cos(πx/2), sin(πx/2))`, contracted into its site to
//! give a bond matrix, and the matrices are multiplied along the chain.
//!
//! Products of hundreds of matrices leave double-precision range, so every
//! environment vector is kept max-abs normalized with its log magnitude
//! carried alongside; the magnitude is folded back only in the final outputs
//! and gradients.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Site tensor with layout `[left][physical][out][right]`; `out == 1` except on the output site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTensor {
    pub left: usize,
    pub out: usize,
    pub right: usize,
    pub values: Vec<f64>,
}

impl SiteTensor {
    pub fn zeros(left: usize, out: usize, right: usize) -> Self {
        Self {
            left,
            out,
            right,
            values: vec![0.0; left * 2 * out * right],
        }
    }

    #[inline]
    pub fn index(&self, l: usize, p: usize, o: usize, r: usize) -> usize {
        ((l * 2 + p) * self.out + o) * self.right + r
    }

    #[inline]
    pub fn get(&self, l: usize, p: usize, o: usize, r: usize) -> f64 {
        self.values[self.index(l, p, o, r)]
    }

    #[inline]
    pub fn set(&mut self, l: usize, p: usize, o: usize, r: usize, v: f64) {
        let i = self.index(l, p, o, r);
        self.values[i] = v;
    }

    /// Contracts the physical leg with `v`, returning the `left × right` matrix for output `o`.
    fn contract(&self, v: [f64; 2], o: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.left * self.right];
        for l in 0..self.left {
            for p in 0..2 {
                let base = self.index(l, p, o, 0);
                let row = &self.values[base..base + self.right];
                for (dst, &t) in m[l * self.right..(l + 1) * self.right].iter_mut().zip(row) {
                    *dst += v[p] * t;
                }
            }
        }
        m
    }
}

/// Per-site embedded input vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedInput(pub Vec<[f64; 2]>);

impl MappedInput {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `x_i ↦ (cos(π x_i / 2), sin(π x_i / 2))`.
pub fn feature_map(x: &[f64]) -> Result<MappedInput> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("feature {i} = {v} outside [0, 1]")));
            }
            let a = FRAC_PI_2 * v;
            Ok([a.cos(), a.sin()])
        })
        .collect::<Result<Vec<_>>>()
        .map(MappedInput)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contraction {
    /// The plain chain product.
    #[default]
    Raw,
    /// Outputs divided by the Euclidean norms of the output site's left and
    /// right environments, so they do not depend on the scale of other sites.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpsConfig {
    pub num_sites: usize,
    pub bond_dim: usize,
    pub n_out: usize,
    /// Defaults to the central site `⌊N/2⌋`.
    pub output_site: Option<usize>,
    pub init_noise: f64,
    pub contraction: Contraction,
}

impl MpsConfig {
    pub fn new(num_sites: usize, bond_dim: usize, n_out: usize) -> Self {
        Self {
            num_sites,
            bond_dim,
            n_out,
            output_site: None,
            init_noise: 0.01,
            contraction: Contraction::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MpsRepr", into = "MpsRepr")]
pub struct MpsModel {
    sites: Vec<SiteTensor>,
    output_site: usize,
    bond_dim: usize,
    n_out: usize,
    contraction: Contraction,
}

#[derive(Serialize, Deserialize)]
struct MpsRepr {
    bond_dim: usize,
    n_out: usize,
    output_site: usize,
    #[serde(default)]
    contraction: Contraction,
    sites: Vec<SiteTensor>,
}

impl TryFrom<MpsRepr> for MpsModel {
    type Error = Error;

    fn try_from(r: MpsRepr) -> Result<Self> {
        let model = MpsModel::from_sites(r.sites, r.output_site)?.with_contraction(r.contraction);
        if model.bond_dim != r.bond_dim || model.n_out != r.n_out {
            return Err(Error::Shape(format!(
                "declared χ={} n_out={} but tensors give χ={} n_out={}",
                r.bond_dim, r.n_out, model.bond_dim, model.n_out
            )));
        }
        Ok(model)
    }
}

impl From<MpsModel> for MpsRepr {
    fn from(m: MpsModel) -> Self {
        MpsRepr {
            bond_dim: m.bond_dim,
            n_out: m.n_out,
            output_site: m.output_site,
            contraction: m.contraction,
            sites: m.sites,
        }
    }
}

/// `dLoss/dT` for every site, same layout as [`SiteTensor::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct MpsGradient {
    pub sites: Vec<Vec<f64>>,
}

impl MpsGradient {
    pub fn max_abs(&self) -> f64 {
        self.sites
            .iter()
            .flatten()
            .fold(0.0f64, |m, &g| m.max(g.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.sites.iter().flatten().all(|g| g.is_finite())
    }
}

/// A vector stored as `values · exp(log_scale)`, with `max|values| == 1` unless it is zero.
#[derive(Debug, Clone)]
struct ScaledVec {
    values: Vec<f64>,
    log_scale: f64,
}

impl ScaledVec {
    fn unit() -> Self {
        Self {
            values: vec![1.0],
            log_scale: 0.0,
        }
    }

    /// `ln ‖values · exp(log_scale)‖₂`.
    fn log_norm(&self) -> f64 {
        self.log_scale + self.values.iter().map(|v| v * v).sum::<f64>().sqrt().ln()
    }

    /// The same direction with unit Euclidean norm and zero log-scale.
    fn unit_direction(&self) -> Self {
        let norm = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let values = if norm > 0.0 {
            self.values.iter().map(|v| v / norm).collect()
        } else {
            self.values.clone()
        };
        Self {
            values,
            log_scale: 0.0,
        }
    }

    fn renormalized(mut values: Vec<f64>, log_scale: f64) -> Self {
        let peak = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if peak > 0.0 && peak.is_finite() {
            values.iter_mut().for_each(|v| *v /= peak);
            Self {
                values,
                log_scale: log_scale + peak.ln(),
            }
        } else {
            Self { values, log_scale }
        }
    }
}

/// Row vector times `rows × cols` matrix.
fn vec_mat(v: &[f64], m: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
            *o += vi * mij;
        }
    }
    out
}

/// `rows × cols` matrix times column vector.
fn mat_vec(m: &[f64], cols: usize, v: &[f64]) -> Vec<f64> {
    m.chunks_exact(cols)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// `v − (v·u)u` for a unit vector `u`.
fn reject(mut v: Vec<f64>, u: &[f64]) -> Vec<f64> {
    let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
    v
}

struct Environments {
    /// `left[i]`: product of sites `0..i` (for `i ≤ output_site`).
    left: Vec<ScaledVec>,
    /// `right[k]`: product of sites `output_site + 1 + k .. N`; the last entry is the empty product.
    right: Vec<ScaledVec>,
}

impl MpsModel {
    /// Near-identity initialization: the identity on the bond block for both
    /// physical indices plus seeded Gaussian noise with standard deviation
    /// `config.init_noise` on every entry. Boundary tensors take the first row
    /// or column. Unperturbed, every site contracts to `(cos + sin)·I`, so
    /// normalized outputs start close to a linear function of the pixels.
    pub fn new(config: &MpsConfig, seed: u64) -> Result<Self> {
        let MpsConfig {
            num_sites,
            bond_dim,
            n_out,
            output_site,
            init_noise,
            contraction,
        } = *config;
        if num_sites == 0 || bond_dim == 0 || n_out == 0 {
            return Err(Error::Shape(format!(
                "need N ≥ 1, χ ≥ 1, n_out ≥ 1; got N={num_sites} χ={bond_dim} n_out={n_out}"
            )));
        }
        let output_site = output_site.unwrap_or(num_sites / 2);
        if output_site >= num_sites {
            return Err(Error::Shape(format!(
                "output site {output_site} outside chain of {num_sites}"
            )));
        }
        if !(init_noise >= 0.0 && init_noise.is_finite()) {
            return Err(Error::Argument(format!("init noise {init_noise} must be ≥ 0")));
        }
        let noise = Normal::new(0.0, init_noise).map_err(|e| Error::Argument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let identity = |l: usize, r: usize| if l == r { 1.0 } else { 0.0 };

        let sites = (0..num_sites)
            .map(|i| {
                let left = if i == 0 { 1 } else { bond_dim };
                let right = if i + 1 == num_sites { 1 } else { bond_dim };
                let out = if i == output_site { n_out } else { 1 };
                let mut t = SiteTensor::zeros(left, out, right);
                for l in 0..left {
                    for o in 0..out {
                        for r in 0..right {
                            t.set(l, 0, o, r, identity(l, r) + noise.sample(&mut rng));
                            t.set(l, 1, o, r, identity(l, r) + noise.sample(&mut rng));
                        }
                    }
                }
                t
            })
            .collect();

        Ok(Self {
            sites,
            output_site,
            bond_dim,
            n_out,
            contraction,
        })
    }

    /// Builds a model from explicit tensors, checking that the bonds chain.
    pub fn from_sites(sites: Vec<SiteTensor>, output_site: usize) -> Result<Self> {
        let n = sites.len();
        if n == 0 {
            return Err(Error::Shape("empty chain".into()));
        }
        if output_site >= n {
            return Err(Error::Shape(format!("output site {output_site} outside chain of {n}")));
        }
        if sites[0].left != 1 || sites[n - 1].right != 1 {
            return Err(Error::Shape("boundary bonds must have size 1".into()));
        }
        for (i, t) in sites.iter().enumerate() {
            if t.values.len() != t.left * 2 * t.out * t.right {
                return Err(Error::Shape(format!(
                    "site {i}: {} values for shape ({}, 2, {}, {})",
                    t.values.len(),
                    t.left,
                    t.out,
                    t.right
                )));
            }
            if t.left == 0 || t.right == 0 || t.out == 0 {
                return Err(Error::Shape(format!("site {i} has an empty leg")));
            }
            if i != output_site && t.out != 1 {
                return Err(Error::Shape(format!(
                    "site {i} carries an output leg but the output site is {output_site}"
                )));
            }
            if i + 1 < n && t.right != sites[i + 1].left {
                return Err(Error::Shape(format!(
                    "bond mismatch between sites {i} and {}: {} vs {}",
                    i + 1,
                    t.right,
                    sites[i + 1].left
                )));
            }
        }
        let bond_dim = sites
            .iter()
            .flat_map(|t| [t.left, t.right])
            .max()
            .unwrap_or(1);
        let n_out = sites[output_site].out;
        Ok(Self {
            sites,
            output_site,
            bond_dim,
            n_out,
            contraction: Contraction::Raw,
        })
    }

    pub fn with_contraction(mut self, contraction: Contraction) -> Self {
        self.contraction = contraction;
        self
    }

    pub fn contraction(&self) -> Contraction {
        self.contraction
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn output_site(&self) -> usize {
        self.output_site
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    pub fn sites_mut(&mut self) -> &mut [SiteTensor] {
        &mut self.sites
    }

    pub fn parameter_count(&self) -> usize {
        self.sites.iter().map(|t| t.values.len()).sum()
    }

    fn check_input(&self, input: &MappedInput) -> Result<()> {
        if input.len() != self.num_sites() {
            return Err(Error::Shape(format!(
                "input has {} sites, model has {}",
                input.len(),
                self.num_sites()
            )));
        }
        Ok(())
    }

    /// Left and right environments of the output site as used by the outputs.
    fn boundary(&self, env: &Environments) -> (ScaledVec, ScaledVec) {
        let l = env.left.last().expect("left environment");
        let r = &env.right[0];
        match self.contraction {
            Contraction::Raw => (l.clone(), r.clone()),
            Contraction::Normalized => (l.unit_direction(), r.unit_direction()),
        }
    }

    fn environments(&self, input: &MappedInput) -> Environments {
        let o = self.output_site;
        let n = self.num_sites();
        let mut left = Vec::with_capacity(o + 1);
        left.push(ScaledVec::unit());
        for i in 0..o {
            let t = &self.sites[i];
            let a = t.contract(input.0[i], 0);
            let prev = left.last().expect("seeded");
            let next = vec_mat(&prev.values, &a, t.right);
            left.push(ScaledVec::renormalized(next, prev.log_scale));
        }
        let mut right = vec![ScaledVec::unit(); n - o];
        for i in (o + 1..n).rev() {
            let t = &self.sites[i];
            let a = t.contract(input.0[i], 0);
            let next = &right[i - o];
            let v = mat_vec(&a, t.right, &next.values);
            right[i - o - 1] = ScaledVec::renormalized(v, next.log_scale);
        }
        Environments { left, right }
    }

    /// Contracts the chain, returning the `n_out` unbounded outputs.
    pub fn forward(&self, input: &MappedInput) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let env = self.environments(input);
        Ok(self.outputs(input, &env))
    }

    fn outputs(&self, input: &MappedInput, env: &Environments) -> Vec<f64> {
        let o = self.output_site;
        let t = &self.sites[o];
        let (l, r) = self.boundary(env);
        let scale = (l.log_scale + r.log_scale).exp();
        (0..self.n_out)
            .map(|j| {
                let m = t.contract(input.0[o], j);
                let mr = mat_vec(&m, t.right, &r.values);
                scale * l.values.iter().zip(&mr).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Forward outputs plus `Σ_j upstream_j · ∂y_j/∂T` for every site.
    pub fn forward_backward(
        &self,
        input: &MappedInput,
        upstream: &[f64],
    ) -> Result<(Vec<f64>, MpsGradient)> {
        self.check_input(input)?;
        if upstream.len() != self.n_out {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, model outputs {}",
                upstream.len(),
                self.n_out
            )));
        }
        let env = self.environments(input);
        let outputs = self.outputs(input, &env);
        Ok((outputs, self.gradients(input, upstream, &env)))
    }

    pub fn backward(&self, input: &MappedInput, upstream: &[f64]) -> Result<MpsGradient> {
        self.forward_backward(input, upstream).map(|(_, g)| g)
    }

    fn gradients(&self, input: &MappedInput, upstream: &[f64], env: &Environments) -> MpsGradient {
        let o = self.output_site;
        let n = self.num_sites();
        let out_site = &self.sites[o];
        let v_o = input.0[o];
        let (l_env, r_env) = self.boundary(env);
        let (l_env, r_env) = (&l_env, &r_env);

        // K = Σ_j u_j M_j (left_o × right_o).
        let mut k = vec![0.0; out_site.left * out_site.right];
        for (j, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            for (dst, m) in k.iter_mut().zip(out_site.contract(v_o, j)) {
                *dst += u * m;
            }
        }

        let mut grads: Vec<Vec<f64>> = self.sites.iter().map(|t| vec![0.0; t.values.len()]).collect();

        let outer = |t: &SiteTensor, lv: &ScaledVec, v: [f64; 2], rv: &ScaledVec, o_idx: usize, weight: f64, g: &mut [f64]| {
            let scale = weight * (lv.log_scale + rv.log_scale).exp();
            for (l, &a) in lv.values.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (p, &vp) in v.iter().enumerate() {
                    let base = t.index(l, p, o_idx, 0);
                    let f = scale * a * vp;
                    for (dst, &b) in g[base..base + t.right].iter_mut().zip(&rv.values) {
                        *dst += f * b;
                    }
                }
            }
        };

        // Output site: ∂y_j/∂T_o[l,p,j,r] = L[l] v_p R[r].
        for (j, &u) in upstream.iter().enumerate() {
            if u != 0.0 {
                outer(out_site, l_env, v_o, r_env, j, u, &mut grads[o]);
            }
        }

        // Cotangents of the left and right environments.
        let (mut w, mut z) = {
            let kr = mat_vec(&k, out_site.right, &r_env.values);
            let lk = vec_mat(&l_env.values, &k, out_site.right);
            match self.contraction {
                Contraction::Raw => (
                    ScaledVec::renormalized(kr, r_env.log_scale),
                    ScaledVec::renormalized(lk, l_env.log_scale),
                ),
                Contraction::Normalized => {
                    let l_norm = env.left.last().expect("left environment").log_norm();
                    let r_norm = env.right[0].log_norm();
                    (
                        ScaledVec::renormalized(reject(kr, &l_env.values), -l_norm),
                        ScaledVec::renormalized(reject(lk, &r_env.values), -r_norm),
                    )
                }
            }
        };

        // Sites left of the output: sweep leftwards carrying A_{i+1}…A_{o-1} w.
        for i in (0..o).rev() {
            let t = &self.sites[i];
            outer(t, &env.left[i], input.0[i], &w, 0, 1.0, &mut grads[i]);
            let a = t.contract(input.0[i], 0);
            w = ScaledVec::renormalized(mat_vec(&a, t.right, &w.values), w.log_scale);
        }

        // Sites right of the output: sweep rightwards carrying z A_{o+1}…A_{i-1}.
        for i in o + 1..n {
            let t = &self.sites[i];
            outer(t, &z, input.0[i], &env.right[i - o], 0, 1.0, &mut grads[i]);
            let a = t.contract(input.0[i], 0);
            z = ScaledVec::renormalized(vec_mat(&z.values, &a, t.right), z.log_scale);
        }

        MpsGradient { sites: grads }
    }

    /// Plain SGD step `T ← T − lr·g`.
    pub fn apply_gradient(&mut self, grad: &MpsGradient, lr: f64) -> Result<()> {
        if grad.sites.len() != self.sites.len() {
            return Err(Error::Shape(format!(
                "gradient has {} sites, model has {}",
                grad.sites.len(),
                self.sites.len()
            )));
        }
        for (i, (t, g)) in self.sites.iter_mut().zip(&grad.sites).enumerate() {
            if g.len() != t.values.len() {
                return Err(Error::Shape(format!("gradient shape mismatch at site {i}")));
            }
            for (v, d) in t.values.iter_mut().zip(g) {
                *v -= lr * d;
            }
        }
        Ok(())
    }
}
