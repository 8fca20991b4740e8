//! Finite conditional-product probability spaces and functionals on them.
//!
//! A [`ProductModel`] is the exact representation of a latent variable `Z`
//! on a finite state space together with finitely many coordinates `X_a`
//! that are conditionally independent given `Z`, each with a finite set of
//! real outcomes. Everything downstream (operators, concentration checks,
//! chaos decompositions) is computed by exact enumeration over the
//! `|latent| x prod_a |values_a|` cells of this space.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of `(z, x)` cells touched by enumeration.
pub const DEFAULT_CELL_CAP: u64 = 10_000_000;

const PROB_TOL: f64 = 1e-12;
const JOINT_TOL: f64 = 1e-10;

/// One latent state: an opaque label plus an optional numeric payload
/// (e.g. a Bernoulli parameter). The calculus only ever looks at the index.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub label: String,
    pub value: Option<f64>,
}

/// Finite latent space for `Z`.
#[derive(Debug, Clone)]
pub struct LatentSpace {
    pub states: Vec<LatentState>,
    pub probs: Vec<f64>,
}

impl LatentSpace {
    pub fn new(states: Vec<LatentState>, probs: Vec<f64>) -> Result<Self> {
        let space = LatentSpace { states, probs };
        space.validate("latent")?;
        Ok(space)
    }

    /// Single latent state with probability one; models plain independence.
    pub fn trivial() -> Self {
        LatentSpace {
            states: vec![LatentState { label: "*".into(), value: None }],
            probs: vec![1.0],
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::InvalidModel {
                path: format!("{path}.states"),
                reason: "must be non-empty".into(),
            });
        }
        if self.states.len() != self.probs.len() {
            return Err(Error::InvalidModel {
                path: format!("{path}.probs"),
                reason: format!(
                    "{} probabilities for {} states",
                    self.probs.len(),
                    self.states.len()
                ),
            });
        }
        for (i, s) in self.states.iter().enumerate() {
            if self.states[..i].iter().any(|t| t.label == s.label) {
                return Err(Error::InvalidModel {
                    path: format!("{path}.states[{i}]"),
                    reason: format!("duplicate label {:?}", s.label),
                });
            }
        }
        check_pmf(&self.probs, &format!("{path}.probs"))
    }
}

/// One coordinate `X_a`: its finite outcome list and the conditional law
/// `P(X_a = v | Z = z)`, one row per latent state.
#[derive(Debug, Clone)]
pub struct ComponentSpace {
    pub values: Vec<f64>,
    /// `cond_pmf[z][v]`, rows indexed by latent state.
    pub cond_pmf: Vec<Vec<f64>>,
}

impl ComponentSpace {
    /// Bernoulli coordinate with values {0, 1} and `P(X=1|Z=z) = params[z]`.
    pub fn bernoulli(params: &[f64]) -> Self {
        ComponentSpace {
            values: vec![0.0, 1.0],
            cond_pmf: params.iter().map(|&p| vec![1.0 - p, p]).collect(),
        }
    }

    /// Symmetric two-point coordinate with values {-1, +1}, same law for
    /// every latent state.
    pub fn rademacher(n_latent: usize) -> Self {
        ComponentSpace {
            values: vec![-1.0, 1.0],
            cond_pmf: vec![vec![0.5, 0.5]; n_latent],
        }
    }

    fn validate(&self, n_latent: usize, path: &str) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidModel {
                path: format!("{path}.values"),
                reason: "must be non-empty".into(),
            });
        }
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidModel {
                    path: format!("{path}.values[{i}]"),
                    reason: "not finite".into(),
                });
            }
            if self.values[..i].contains(v) {
                return Err(Error::InvalidModel {
                    path: format!("{path}.values[{i}]"),
                    reason: format!("duplicate value {v}"),
                });
            }
        }
        if self.cond_pmf.len() != n_latent {
            return Err(Error::InvalidModel {
                path: format!("{path}.cond_pmf"),
                reason: format!("{} rows for {} latent states", self.cond_pmf.len(), n_latent),
            });
        }
        for (z, row) in self.cond_pmf.iter().enumerate() {
            let row_path = format!("{path}.cond_pmf[{z}]");
            if row.len() != self.values.len() {
                return Err(Error::InvalidModel {
                    path: row_path,
                    reason: format!("{} entries for {} values", row.len(), self.values.len()),
                });
            }
            check_pmf(row, &row_path)?;
        }
        Ok(())
    }
}

fn check_pmf(probs: &[f64], path: &str) -> Result<()> {
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::InvalidModel {
                path: format!("{path}[{i}]"),
                reason: format!("probability {p} out of range"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel {
            path: path.into(),
            reason: format!("sums to {sum}, not 1"),
        });
    }
    Ok(())
}

/// The exact finite model `E_0 x prod_a E_a` with the joint law
/// `P(Z=z) prod_a P(X_a = x_a | Z=z)`.
#[derive(Debug, Clone)]
pub struct ProductModel {
    latent: LatentSpace,
    components: Vec<ComponentSpace>,
    /// Mixed-radix strides; component 0 varies fastest. Empty when the
    /// configuration count overflows `u64`.
    strides: Vec<u64>,
    config_count: Option<u64>,
    cell_cap: u64,
}

impl ProductModel {
    pub fn new(latent: LatentSpace, components: Vec<ComponentSpace>) -> Result<Self> {
        Self::with_cell_cap(latent, components, DEFAULT_CELL_CAP)
    }

    pub fn with_cell_cap(
        latent: LatentSpace,
        components: Vec<ComponentSpace>,
        cell_cap: u64,
    ) -> Result<Self> {
        latent.validate("latent")?;
        if components.is_empty() {
            return Err(Error::InvalidModel {
                path: "components".into(),
                reason: "must contain at least one component".into(),
            });
        }
        for (a, comp) in components.iter().enumerate() {
            comp.validate(latent.states.len(), &format!("components[{a}]"))?;
        }
        let mut strides = Vec::with_capacity(components.len());
        let mut count: Option<u64> = Some(1);
        for comp in &components {
            if let Some(c) = count {
                strides.push(c);
                count = c.checked_mul(comp.values.len() as u64);
            }
        }
        if count.is_none() {
            strides.clear();
        }
        let model = ProductModel { latent, components, strides, config_count: count, cell_cap };
        // Exact sanity check of the joint law whenever enumeration is affordable.
        if model.cell_count().is_some_and(|c| c <= cell_cap) {
            let mut total = 0.0;
            model.visit_cells(|_, _, _, p| total += p)?;
            if (total - 1.0).abs() > JOINT_TOL {
                return Err(Error::InvalidModel {
                    path: "joint law".into(),
                    reason: format!("enumerated mass {total} differs from 1"),
                });
            }
        }
        Ok(model)
    }

    /// Conditionally i.i.d. Bernoulli coordinates: `Z` ranges over `params`
    /// with probabilities `latent_probs` and `X_a | Z=z ~ Bernoulli(z)`.
    pub fn conditional_bernoulli(params: &[f64], latent_probs: &[f64], n: usize) -> Result<Self> {
        let states = params
            .iter()
            .map(|&z| LatentState { label: format!("z={z}"), value: Some(z) })
            .collect();
        let latent = LatentSpace::new(states, latent_probs.to_vec())?;
        let comp = ComponentSpace::bernoulli(params);
        ProductModel::new(latent, vec![comp; n])
    }

    pub fn n_latent(&self) -> usize {
        self.latent.states.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn latent(&self) -> &LatentSpace {
        &self.latent
    }

    pub fn component(&self, a: usize) -> Result<&ComponentSpace> {
        self.components.get(a).ok_or(Error::UnknownIndex(a))
    }

    pub fn components(&self) -> &[ComponentSpace] {
        &self.components
    }

    pub fn latent_prob(&self, z: usize) -> f64 {
        self.latent.probs[z]
    }

    /// Numeric payload of latent state `z`; panics if the state has none.
    pub fn latent_value(&self, z: usize) -> f64 {
        self.latent.states[z].value.expect("latent state has no numeric payload")
    }

    pub fn cell_cap(&self) -> u64 {
        self.cell_cap
    }

    /// Total number of joint configurations, or an error when it exceeds
    /// the enumeration cap.
    pub fn config_count(&self) -> Result<u64> {
        let cells = self.cell_count_u128();
        match self.config_count {
            Some(c) if cells <= self.cell_cap as u128 => Ok(c),
            _ => Err(Error::SizeCapExceeded { cells, cap: self.cell_cap }),
        }
    }

    fn cell_count(&self) -> Option<u64> {
        self.config_count.and_then(|c| c.checked_mul(self.n_latent() as u64))
    }

    fn cell_count_u128(&self) -> u128 {
        self.components
            .iter()
            .fold(self.n_latent() as u128, |acc, c| acc.saturating_mul(c.values.len() as u128))
    }

    pub fn n_cells(&self) -> Result<u64> {
        Ok(self.config_count()? * self.n_latent() as u64)
    }

    /// Decode a mixed-radix configuration index (component 0 fastest).
    pub fn config_of(&self, mut ci: u64) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.components.len());
        for comp in &self.components {
            let r = comp.values.len() as u64;
            out.push((ci % r) as usize);
            ci /= r;
        }
        out
    }

    pub fn config_index(&self, config: &[usize]) -> u64 {
        config
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| v as u64 * s)
            .sum()
    }

    pub fn stride(&self, a: usize) -> u64 {
        self.strides[a]
    }

    /// Outcome value of component `a` at value index `vi`.
    pub fn value(&self, a: usize, vi: usize) -> f64 {
        self.components[a].values[vi]
    }

    /// Joint probability of cell `(z, config)`.
    pub fn cell_prob(&self, z: usize, config: &[usize]) -> f64 {
        let mut p = self.latent.probs[z];
        for (a, &vi) in config.iter().enumerate() {
            p *= self.components[a].cond_pmf[z][vi];
        }
        p
    }

    /// Enumerate every cell in deterministic mixed-radix order, calling
    /// `f(z, config_index, config, joint_prob)`.
    pub fn visit_cells(&self, mut f: impl FnMut(usize, u64, &[usize], f64)) -> Result<()> {
        let n_configs = self.config_count()?;
        let m = self.components.len();
        for z in 0..self.n_latent() {
            let pz = self.latent.probs[z];
            let mut config = vec![0usize; m];
            for ci in 0..n_configs {
                let mut p = pz;
                for (a, &vi) in config.iter().enumerate() {
                    p *= self.components[a].cond_pmf[z][vi];
                }
                f(z, ci, &config, p);
                // odometer increment, component 0 fastest
                for (slot, comp) in config.iter_mut().zip(&self.components) {
                    *slot += 1;
                    if *slot < comp.values.len() {
                        break;
                    }
                    *slot = 0;
                }
            }
        }
        Ok(())
    }

    /// Draw `(z, configuration)`: `Z` from the latent law, then each `X_a`
    /// independently from its conditional law. Bit-exact reproducible for a
    /// fixed RNG stream.
    pub fn sample(&self, rng: &mut impl Rng) -> (usize, Vec<usize>) {
        let z = sample_index(&self.latent.probs, rng);
        let config = self
            .components
            .iter()
            .map(|c| sample_index(&c.cond_pmf[z], rng))
            .collect();
        (z, config)
    }

    /// Resample only component `a` given latent state `z`.
    pub fn resample_component(&self, z: usize, a: usize, rng: &mut impl Rng) -> usize {
        sample_index(&self.components[a].cond_pmf[z], rng)
    }
}

pub(crate) fn sample_index(pmf: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.len() - 1
}

/// A real-valued table over `(latent state, configuration)` cells; the exact
/// representation of a functional `F(Z, X)`.
#[derive(Debug, Clone)]
pub struct Functional {
    model: Arc<ProductModel>,
    table: Vec<f64>,
    z_free: bool,
}

impl Functional {
    pub fn from_fn(
        model: &Arc<ProductModel>,
        f: impl FnMut(usize, &[usize]) -> f64,
    ) -> Result<Self> {
        Self::build(model, false, f)
    }

    /// A functional of the configuration only (no direct `Z` dependence).
    pub fn from_config_fn(
        model: &Arc<ProductModel>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        Self::build(model, true, |_, config| f(config))
    }

    fn build(
        model: &Arc<ProductModel>,
        z_free: bool,
        mut f: impl FnMut(usize, &[usize]) -> f64,
    ) -> Result<Self> {
        let n_configs = model.config_count()?;
        let mut table = vec![0.0; (n_configs * model.n_latent() as u64) as usize];
        model.visit_cells(|z, ci, config, _| {
            table[z * n_configs as usize + ci as usize] = f(z, config);
        })?;
        let func = Functional { model: Arc::clone(model), table, z_free };
        func.check_finite()?;
        Ok(func)
    }

    pub fn constant(model: &Arc<ProductModel>, c: f64) -> Result<Self> {
        Self::build(model, true, |_, _| c)
    }

    /// The coordinate functional `F = X_a`.
    pub fn coordinate(model: &Arc<ProductModel>, a: usize) -> Result<Self> {
        model.component(a)?;
        Self::build(model, true, |_, config| model.value(a, config[a]))
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(v) = self.table.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidModel {
                path: "functional.table".into(),
                reason: format!("non-finite entry {v}"),
            });
        }
        Ok(())
    }

    pub fn model(&self) -> &Arc<ProductModel> {
        &self.model
    }

    pub fn same_model(&self, other: &Functional) -> bool {
        Arc::ptr_eq(&self.model, &other.model)
    }

    pub fn z_free(&self) -> bool {
        self.z_free
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub(crate) fn from_table(model: &Arc<ProductModel>, table: Vec<f64>, z_free: bool) -> Self {
        debug_assert_eq!(
            table.len() as u64,
            model.config_count().unwrap() * model.n_latent() as u64
        );
        Functional { model: Arc::clone(model), table, z_free }
    }

    #[inline]
    pub fn at(&self, z: usize, ci: u64) -> f64 {
        let n = self.table.len() / self.model.n_latent();
        self.table[z * n + ci as usize]
    }

    pub(crate) fn n_configs(&self) -> u64 {
        (self.table.len() / self.model.n_latent()) as u64
    }

    /// `E[F]`.
    pub fn expectation(&self) -> f64 {
        let mut s = 0.0;
        self.model
            .visit_cells(|z, ci, _, p| s += p * self.at(z, ci))
            .expect("functional exists, model is enumerable");
        s
    }

    /// `E[F | Z = z]` for every latent state.
    pub fn cond_expectation_z(&self) -> Vec<f64> {
        self.cond_moment_z(|v| v)
    }

    /// `Var[F]`.
    pub fn variance(&self) -> f64 {
        let m = self.expectation();
        let mut s = 0.0;
        self.model
            .visit_cells(|z, ci, _, p| {
                let d = self.at(z, ci) - m;
                s += p * d * d;
            })
            .expect("enumerable");
        s
    }

    /// `Var[F | Z = z]` for every latent state.
    pub fn cond_variance_z(&self) -> Vec<f64> {
        let means = self.cond_expectation_z();
        let mut out = vec![0.0; self.model.n_latent()];
        let mut mass = vec![0.0; self.model.n_latent()];
        self.model
            .visit_cells(|z, ci, _, p| {
                let d = self.at(z, ci) - means[z];
                out[z] += p * d * d;
                mass[z] += p;
            })
            .expect("enumerable");
        for z in 0..out.len() {
            if mass[z] > 0.0 {
                out[z] /= mass[z];
            }
        }
        out
    }

    fn cond_moment_z(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.model.n_latent()];
        let mut mass = vec![0.0; self.model.n_latent()];
        self.model
            .visit_cells(|z, ci, _, p| {
                out[z] += p * g(self.at(z, ci));
                mass[z] += p;
            })
            .expect("enumerable");
        for z in 0..out.len() {
            if mass[z] > 0.0 {
                out[z] /= mass[z];
            }
        }
        out
    }

    /// `E[F^k]` for integer `k`.
    pub fn moment(&self, k: u32) -> f64 {
        let mut s = 0.0;
        self.model
            .visit_cells(|z, ci, _, p| s += p * self.at(z, ci).powi(k as i32))
            .expect("enumerable");
        s
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Functional {
        Functional {
            model: Arc::clone(&self.model),
            table: self.table.iter().map(|&v| g(v)).collect(),
            z_free: self.z_free,
        }
    }

    pub fn zip(&self, other: &Functional, g: impl Fn(f64, f64) -> f64) -> Functional {
        assert!(self.same_model(other), "functionals from different models");
        Functional {
            model: Arc::clone(&self.model),
            table: self
                .table
                .iter()
                .zip(&other.table)
                .map(|(&a, &b)| g(a, b))
                .collect(),
            z_free: self.z_free && other.z_free,
        }
    }

    pub fn scale(&self, c: f64) -> Functional {
        self.map(|v| c * v)
    }

    pub fn shift(&self, c: f64) -> Functional {
        self.map(|v| v + c)
    }

    pub fn max_abs(&self) -> f64 {
        self.table.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Functional) -> f64 {
        assert!(self.same_model(other), "functionals from different models");
        self.table
            .iter()
            .zip(&other.table)
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// The exact law of `F` as sorted `(value, probability)` atoms.
    pub fn law(&self) -> Vec<(f64, f64)> {
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        self.model
            .visit_cells(|z, ci, _, p| atoms.push((self.at(z, ci), p)))
            .expect("enumerable");
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        // merge identical values to keep the atom list small
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        merged
    }
}

impl std::ops::Add for &Functional {
    type Output = Functional;
    fn add(self, rhs: &Functional) -> Functional {
        self.zip(rhs, |a, b| a + b)
    }
}

impl std::ops::Sub for &Functional {
    type Output = Functional;
    fn sub(self, rhs: &Functional) -> Functional {
        self.zip(rhs, |a, b| a - b)
    }
}

impl std::ops::Mul for &Functional {
    type Output = Functional;
    fn mul(self, rhs: &Functional) -> Functional {
        self.zip(rhs, |a, b| a * b)
    }
}

impl std::ops::Neg for &Functional {
    type Output = Functional;
    fn neg(self) -> Functional {
        self.map(|v| -v)
    }
}

/// A simple process `U = sum_a U_a 1_a`: one functional per component index.
#[derive(Debug, Clone)]
pub struct SimpleProcess {
    pub entries: Vec<Functional>,
}

impl SimpleProcess {
    pub fn new(entries: Vec<Functional>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidModel {
                path: "simple process".into(),
                reason: "must have one entry per component".into(),
            });
        }
        if let Some(first) = entries.first() {
            if entries.len() != first.model().n_components() {
                return Err(Error::InvalidModel {
                    path: "simple process".into(),
                    reason: format!(
                        "{} entries for {} components",
                        entries.len(),
                        first.model().n_components()
                    ),
                });
            }
            if entries.iter().any(|e| !e.same_model(first)) {
                return Err(Error::MismatchedModel);
            }
        }
        Ok(SimpleProcess { entries })
    }
}

// ---------------------------------------------------------------------------
// JSON descriptor
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LatentDescriptor {
    probs: Vec<f64>,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ComponentDescriptor {
    values: Vec<f64>,
    cond_pmf: Vec<Vec<f64>>,
}

/// On-disk model descriptor:
/// `{"latent": {"probs": [...], "labels": [...]}, "components": [...]}`.
#[derive(Serialize, Deserialize)]
pub struct ModelDescriptor {
    latent: LatentDescriptor,
    components: Vec<ComponentDescriptor>,
}

impl ModelDescriptor {
    pub fn from_model(model: &ProductModel) -> Self {
        let values: Vec<Option<f64>> = model.latent.states.iter().map(|s| s.value).collect();
        ModelDescriptor {
            latent: LatentDescriptor {
                probs: model.latent.probs.clone(),
                labels: model.latent.states.iter().map(|s| s.label.clone()).collect(),
                values: values.iter().all(Option::is_some).then(|| {
                    values.into_iter().map(Option::unwrap).collect()
                }),
            },
            components: model
                .components
                .iter()
                .map(|c| ComponentDescriptor {
                    values: c.values.clone(),
                    cond_pmf: c.cond_pmf.clone(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<ProductModel> {
        if self.latent.labels.len() != self.latent.probs.len() {
            return Err(Error::InvalidModel {
                path: "latent.labels".into(),
                reason: format!(
                    "{} labels for {} probabilities",
                    self.latent.labels.len(),
                    self.latent.probs.len()
                ),
            });
        }
        let payloads = match &self.latent.values {
            Some(vs) => {
                if vs.len() != self.latent.labels.len() {
                    return Err(Error::InvalidModel {
                        path: "latent.values".into(),
                        reason: "length mismatch with labels".into(),
                    });
                }
                vs.iter().map(|&v| Some(v)).collect()
            }
            None => vec![None; self.latent.labels.len()],
        };
        let states = self
            .latent
            .labels
            .into_iter()
            .zip(payloads)
            .map(|(label, value)| LatentState { label, value })
            .collect();
        let latent = LatentSpace::new(states, self.latent.probs)?;
        let components = self
            .components
            .into_iter()
            .map(|c| ComponentSpace { values: c.values, cond_pmf: c.cond_pmf })
            .collect();
        ProductModel::new(latent, components)
    }
}

pub fn model_from_json(json: &str) -> Result<ProductModel> {
    let desc: ModelDescriptor = serde_json::from_str(json)?;
    desc.into_model()
}

pub fn model_to_json(model: &ProductModel) -> String {
    serde_json::to_string_pretty(&ModelDescriptor::from_model(model)).expect("serializable")
}

/// Functional golden-file descriptor `{"z_free": bool, "table": [...]}`.
#[derive(Serialize, Deserialize)]
pub struct FunctionalDescriptor {
    pub z_free: bool,
    pub table: Vec<f64>,
}

impl Functional {
    pub fn to_descriptor(&self) -> FunctionalDescriptor {
        FunctionalDescriptor { z_free: self.z_free, table: self.table.clone() }
    }

    pub fn from_descriptor(model: &Arc<ProductModel>, desc: FunctionalDescriptor) -> Result<Self> {
        let expect = model.n_cells()?;
        if desc.table.len() as u64 != expect {
            return Err(Error::InvalidModel {
                path: "functional.table".into(),
                reason: format!("{} entries, expected {expect}", desc.table.len()),
            });
        }
        let f = Functional::from_table(model, desc.table, desc.z_free);
        f.check_finite()?;
        Ok(f)
    }
}

// ---------------------------------------------------------------------------
// Seeded random models and functionals for verification suites
// ---------------------------------------------------------------------------

/// Draw a random model with up to `max_components` components, up to
/// `max_values` outcomes per component and up to `max_latent` latent states.
/// Outcomes are drawn in [-1, 1], laws from a flat Dirichlet.
pub fn random_model(
    rng: &mut impl Rng,
    max_components: usize,
    max_values: usize,
    max_latent: usize,
) -> ProductModel {
    let n_latent = rng.random_range(1..=max_latent);
    let m = rng.random_range(1..=max_components);
    let states = (0..n_latent)
        .map(|i| LatentState { label: format!("s{i}"), value: None })
        .collect();
    let latent = LatentSpace::new(states, random_pmf(rng, n_latent)).expect("valid latent");
    let components = (0..m)
        .map(|_| {
            let k = rng.random_range(2..=max_values.max(2));
            let mut values: Vec<f64> = Vec::with_capacity(k);
            while values.len() < k {
                let v = rng.random_range(-1.0..1.0);
                if !values.contains(&v) {
                    values.push(v);
                }
            }
            let cond_pmf = (0..n_latent).map(|_| random_pmf(rng, k)).collect();
            ComponentSpace { values, cond_pmf }
        })
        .collect();
    ProductModel::new(latent, components).expect("valid random model")
}

fn random_pmf(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    // Exponential spacings give a flat Dirichlet; keep every atom charged.
    let mut w: Vec<f64> = (0..k)
        .map(|_| -((1.0 - rng.random::<f64>()).ln()) + 1e-3)
        .collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    // force an exact unit sum so validation at 1e-12 never flakes
    let s: f64 = w.iter().sum();
    w[k - 1] += 1.0 - s;
    w
}

/// Random functional with i.i.d. uniform [-1, 1] entries.
pub fn random_functional(rng: &mut impl Rng, model: &Arc<ProductModel>) -> Functional {
    Functional::from_fn(model, |_, _| rng.random_range(-1.0..1.0)).expect("enumerable model")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    pub fn cm1() -> Arc<ProductModel> {
        Arc::new(
            ProductModel::conditional_bernoulli(&[0.3, 0.7], &[0.5, 0.5], 3).unwrap(),
        )
    }

    #[test]
    fn two_point_space_enumerates_uniformly() {
        let model = Arc::new(
            ProductModel::new(
                LatentSpace::trivial(),
                vec![ComponentSpace::bernoulli(&[0.5])],
            )
            .unwrap(),
        );
        let mut rows = Vec::new();
        model.visit_cells(|z, ci, _, p| rows.push((z, ci, p))).unwrap();
        assert_eq!(rows, vec![(0, 0, 0.5), (0, 1, 0.5)]);
    }

    #[test]
    fn cm1_enumeration_matches_direct_arithmetic() {
        let model = cm1();
        let mut n_rows = 0;
        let mut p111_z03 = None;
        let mut total = 0.0;
        model
            .visit_cells(|z, _, config, p| {
                n_rows += 1;
                total += p;
                if z == 0 && config == [1, 1, 1] {
                    p111_z03 = Some(p);
                }
            })
            .unwrap();
        assert_eq!(n_rows, 16);
        assert!((total - 1.0).abs() < 1e-12);
        assert!((p111_z03.unwrap() - 0.5 * 0.3f64.powi(3)).abs() < 1e-15);
        assert!((p111_z03.unwrap() - 0.0135).abs() < 1e-15);
    }

    #[test]
    fn empty_value_list_is_a_construction_error() {
        let comp = ComponentSpace { values: vec![], cond_pmf: vec![vec![]] };
        let err = ProductModel::new(LatentSpace::trivial(), vec![comp]).unwrap_err();
        assert!(matches!(err, Error::InvalidModel { .. }));
    }

    #[test]
    fn constant_functional_moments() {
        let model = cm1();
        let f = Functional::constant(&model, 3.25).unwrap();
        assert_eq!(f.expectation(), 3.25);
        assert_eq!(f.variance(), 0.0);
        assert!(f.cond_expectation_z().iter().all(|&v| (v - 3.25).abs() < 1e-14));
    }

    #[test]
    fn cm1_coordinate_moments() {
        let model = cm1();
        let x1 = Functional::coordinate(&model, 0).unwrap();
        let ce = x1.cond_expectation_z();
        assert!((ce[0] - 0.3).abs() < 1e-14);
        assert!((ce[1] - 0.7).abs() < 1e-14);
        assert!((x1.expectation() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cm1_sum_product_conditional_mean_is_z_plus_z_squared() {
        let model = cm1();
        let f = Functional::from_config_fn(&model, |c| {
            c[0] as f64 + (c[1] * c[2]) as f64
        })
        .unwrap();
        let ce = f.cond_expectation_z();
        for (z, val) in [(0.3, ce[0]), (0.7, ce[1])] {
            assert!((val - (z + z * z)).abs() < 1e-12);
        }
    }

    #[test]
    fn law_of_total_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            let cond_var = f.cond_variance_z();
            let cond_mean = f.cond_expectation_z();
            let e_cond_var: f64 = (0..model.n_latent())
                .map(|z| model.latent_prob(z) * cond_var[z])
                .sum();
            let mean: f64 = (0..model.n_latent())
                .map(|z| model.latent_prob(z) * cond_mean[z])
                .sum();
            let var_cond_mean: f64 = (0..model.n_latent())
                .map(|z| model.latent_prob(z) * (cond_mean[z] - mean).powi(2))
                .sum();
            assert!((f.variance() - (e_cond_var + var_cond_mean)).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_model_samples_unique_configuration() {
        let comp = ComponentSpace { values: vec![2.0, 5.0], cond_pmf: vec![vec![0.0, 1.0]] };
        let model =
            Arc::new(ProductModel::new(LatentSpace::trivial(), vec![comp; 2]).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(model.sample(&mut rng), (0, vec![1, 1]));
        }
    }

    #[test]
    fn sampling_is_reproducible_and_consistent_with_enumeration() {
        let model = cm1();
        let mut a = ChaCha12Rng::seed_from_u64(7);
        let mut b = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(model.sample(&mut a), model.sample(&mut b));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 1_000_000;
        let mut ones = 0u64;
        for _ in 0..n {
            let (_, c) = model.sample(&mut rng);
            ones += c[0] as u64;
        }
        let p_hat = ones as f64 / n as f64;
        assert!((p_hat - 0.5).abs() < 4.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn json_descriptor_round_trip_and_validation() {
        let model = cm1();
        let json = model_to_json(&model);
        let back = model_from_json(&json).unwrap();
        assert_eq!(back.n_components(), 3);
        assert_eq!(back.n_latent(), 2);
        assert!((back.latent_value(0) - 0.3).abs() < 1e-15);

        let bad = r#"{"latent":{"probs":[0.6,0.6],"labels":["a","b"]},
                      "components":[{"values":[0,1],"cond_pmf":[[0.5,0.5],[0.5,0.5]]}]}"#;
        let err = model_from_json(bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("latent.probs"), "unexpected message: {msg}");
    }

    #[test]
    fn size_cap_is_enforced() {
        let latent = LatentSpace::trivial();
        let comp = ComponentSpace::bernoulli(&[0.5]);
        let model =
            ProductModel::with_cell_cap(latent, vec![comp; 30], 1 << 20).unwrap();
        assert!(matches!(
            model.config_count(),
            Err(Error::SizeCapExceeded { .. })
        ));
    }
}
