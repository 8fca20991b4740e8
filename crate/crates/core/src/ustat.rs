//! Homogeneous sums, degenerate U-statistics and the fourth-moment
//! machinery.
//!
//! A homogeneous sum `W = Σ_I a_I(Z) ∏_{i∈I} X_i` decomposes through the
//! substitution `X_i = Y_i + μ_i(Z)`, `Y_i = X_i - E[X_i|Z]`, into
//! `E[W|Z] + Σ_{∅≠S} w_S(Z) ∏_{i∈S} Y_i`. Each summand is a degenerate
//! U-statistic: it vanishes under conditioning on any σ-field that misses
//! one of its coordinates, and the order-`n` summands aggregate to the
//! chaos projection `π_n W`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Functional, ProductModel};
use crate::ops::{carre_du_champ, chaos_decompose, chaos_projector, delta4_sum, generator_l};

/// A coefficient that is either constant or σ(Z)-measurable.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Const(f64),
    PerLatent(Vec<f64>),
}

impl Coefficient {
    pub fn at(&self, z: usize) -> f64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::PerLatent(v) => v[z],
        }
    }

    fn validate(&self, n_latent: usize) -> Result<()> {
        let ok = match self {
            Coefficient::Const(c) => c.is_finite(),
            Coefficient::PerLatent(v) => {
                v.len() == n_latent && v.iter().all(|c| c.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ConditionFailed(
                "finite coefficient per latent state",
                format!("{self:?}"),
            ))
        }
    }
}

/// Specification of `W = Σ_I a_I(Z) ∏_{i∈I} X_i` with `1 ≤ |I| ≤ degree`.
#[derive(Debug, Clone)]
pub struct HomogeneousSumSpec {
    pub degree: usize,
    pub terms: Vec<(Vec<usize>, Coefficient)>,
}

/// A functional together with (optionally) the homogeneous-sum structure it
/// was built from; the structure is what makes the Hoeffding decomposition
/// computable in closed form.
#[derive(Debug, Clone)]
pub struct HomogeneousSum {
    functional: Functional,
    spec: Option<HomogeneousSumSpec>,
}

impl HomogeneousSum {
    pub fn build(model: &Arc<ProductModel>, spec: HomogeneousSumSpec) -> Result<Self> {
        let m = model.n_components();
        for (support, coeff) in &spec.terms {
            if support.is_empty() || support.len() > spec.degree {
                return Err(Error::ConditionFailed(
                    "1 <= |I| <= degree",
                    format!("support {support:?}"),
                ));
            }
            if let Some(&i) = support.iter().find(|&&i| i >= m) {
                return Err(Error::UnknownIndex(i));
            }
            if support.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::ConditionFailed(
                    "support sorted and duplicate-free",
                    format!("{support:?}"),
                ));
            }
            coeff.validate(model.n_latent())?;
        }
        let terms = spec.terms.clone();
        let functional = Functional::from_fn(model, |z, config| {
            terms
                .iter()
                .map(|(support, coeff)| {
                    coeff.at(z)
                        * support
                            .iter()
                            .map(|&i| model.value(i, config[i]))
                            .product::<f64>()
                })
                .sum()
        })?;
        Ok(HomogeneousSum { functional, spec: Some(spec) })
    }

    /// Wrap a bare functional; decomposition will fail with
    /// `NotHomogeneous` because no structure is attached.
    pub fn from_functional(functional: Functional) -> Self {
        HomogeneousSum { functional, spec: None }
    }

    pub fn functional(&self) -> &Functional {
        &self.functional
    }

    pub fn spec(&self) -> Option<&HomogeneousSumSpec> {
        self.spec.as_ref()
    }
}

/// One Hoeffding summand `W_I = w_I(Z) ∏_{i∈I} Y_i`. `weight` carries the
/// per-latent-state `w_I` when the kernel has this product form.
#[derive(Debug, Clone)]
pub struct DegenerateUStat {
    pub support: Vec<usize>,
    pub kernel: Functional,
    pub weight: Option<Vec<f64>>,
}

impl DegenerateUStat {
    pub fn order(&self) -> usize {
        self.support.len()
    }

    pub fn support_mask(&self) -> u64 {
        self.support.iter().fold(0, |m, &i| m | (1 << i))
    }
}

/// `W = E[W|Z] + Σ_I W_I` with every `W_I` degenerate.
#[derive(Debug, Clone)]
pub struct HoeffdingDecomposition {
    /// `E[W|Z]` as a functional.
    pub conditional_mean: Functional,
    /// summands sorted by (order, support)
    pub components: Vec<DegenerateUStat>,
}

impl HoeffdingDecomposition {
    pub fn reconstruct(&self) -> Functional {
        let mut acc = self.conditional_mean.clone();
        for c in &self.components {
            acc = &acc + &c.kernel;
        }
        acc
    }
}

/// Conditional means `μ_i(z) = E[X_i | Z = z]` for every component.
pub fn component_cond_means(model: &ProductModel) -> Vec<Vec<f64>> {
    model
        .components()
        .iter()
        .map(|comp| {
            comp.cond_pmf
                .iter()
                .map(|pmf| comp.values.iter().zip(pmf).map(|(&v, &p)| v * p).sum())
                .collect()
        })
        .collect()
}

/// Conditional variances `E[Y_i² | Z = z]`.
pub fn component_cond_vars(model: &ProductModel) -> Vec<Vec<f64>> {
    let means = component_cond_means(model);
    model
        .components()
        .iter()
        .zip(&means)
        .map(|(comp, mu)| {
            comp.cond_pmf
                .iter()
                .zip(mu)
                .map(|(pmf, &m)| {
                    comp.values
                        .iter()
                        .zip(pmf)
                        .map(|(&v, &p)| p * (v - m) * (v - m))
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn kernel_from_weight(
    model: &Arc<ProductModel>,
    support: &[usize],
    weight: &[f64],
    means: &[Vec<f64>],
) -> Result<Functional> {
    Functional::from_fn(model, |z, config| {
        weight[z]
            * support
                .iter()
                .map(|&i| model.value(i, config[i]) - means[i][z])
                .product::<f64>()
    })
}

/// Hoeffding decomposition through the `∏(Y_i + μ_i(Z))` expansion. Each
/// order-`n` layer aggregates to `π_n W`; summands with identically zero
/// weight are dropped.
pub fn hoeffding_decompose(w: &HomogeneousSum) -> Result<HoeffdingDecomposition> {
    let spec = w.spec.as_ref().ok_or(Error::NotHomogeneous)?;
    let model = w.functional.model().clone();
    let n_latent = model.n_latent();
    let means = component_cond_means(&model);
    // weights[S][z], S encoded as a sorted index vector
    let mut weights: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    let mut mean_weight = vec![0.0; n_latent];
    for (support, coeff) in &spec.terms {
        let k = support.len();
        for bits in 0u32..(1 << k) {
            let subset: Vec<usize> = (0..k)
                .filter(|&j| bits & (1 << j) != 0)
                .map(|j| support[j])
                .collect();
            let slot: &mut Vec<f64> = if subset.is_empty() {
                &mut mean_weight
            } else {
                weights.entry(subset.clone()).or_insert_with(|| vec![0.0; n_latent])
            };
            for (z, s) in slot.iter_mut().enumerate() {
                let mu_prod: f64 = (0..k)
                    .filter(|&j| bits & (1 << j) == 0)
                    .map(|j| means[support[j]][z])
                    .product();
                *s += coeff.at(z) * mu_prod;
            }
        }
    }
    let conditional_mean = Functional::from_fn(&model, |z, _| mean_weight[z])?;
    let mut components = Vec::new();
    for (support, weight) in weights {
        if weight.iter().all(|&v| v.abs() < 1e-300) {
            continue;
        }
        let kernel = kernel_from_weight(&model, &support, &weight, &means)?;
        components.push(DegenerateUStat { support, kernel, weight: Some(weight) });
    }
    components.sort_by(|a, b| (a.order(), &a.support).cmp(&(b.order(), &b.support)));
    Ok(HoeffdingDecomposition { conditional_mean, components })
}

/// Build `F = Σ_I w_I(Z) ∏_{i∈I} Y_i` directly from centered factors,
/// returning the functional and its summands. The natural constructor for
/// pure-chaos inputs to the fourth-moment checks.
pub fn build_degenerate_sum(
    model: &Arc<ProductModel>,
    terms: &[(Vec<usize>, Coefficient)],
) -> Result<(Functional, Vec<DegenerateUStat>)> {
    let means = component_cond_means(model);
    let mut components = Vec::new();
    for (support, coeff) in terms {
        if support.is_empty() {
            return Err(Error::ConditionFailed("non-empty support", "got {}".into()));
        }
        if let Some(&i) = support.iter().find(|&&i| i >= model.n_components()) {
            return Err(Error::UnknownIndex(i));
        }
        coeff.validate(model.n_latent())?;
        let weight: Vec<f64> = (0..model.n_latent()).map(|z| coeff.at(z)).collect();
        let kernel = kernel_from_weight(model, support, &weight, &means)?;
        components.push(DegenerateUStat {
            support: support.clone(),
            kernel,
            weight: Some(weight),
        });
    }
    let mut f = Functional::constant(model, 0.0)?;
    for c in &components {
        f = &f + &c.kernel;
    }
    Ok((f, components))
}

/// Like [`build_degenerate_sum`] but rescaled so that `E[F²] = 1`.
pub fn standardized_degenerate_sum(
    model: &Arc<ProductModel>,
    terms: &[(Vec<usize>, Coefficient)],
) -> Result<(Functional, Vec<DegenerateUStat>)> {
    let (f, _) = build_degenerate_sum(model, terms)?;
    let sd = f.moment(2).sqrt();
    if sd <= 0.0 {
        return Err(Error::DegenerateVariance { label: "all".into() });
    }
    let scaled: Vec<(Vec<usize>, Coefficient)> = terms
        .iter()
        .map(|(s, c)| {
            let c = match c {
                Coefficient::Const(v) => Coefficient::Const(v / sd),
                Coefficient::PerLatent(v) => {
                    Coefficient::PerLatent(v.iter().map(|x| x / sd).collect())
                }
            };
            (s.clone(), c)
        })
        .collect();
    build_degenerate_sum(model, &scaled)
}

/// Chaos-eigenfunction check: for `F ∈ 𝔉_p`, is `F² ∈ ⊕_{k≤2p} 𝔉_k`?
/// Always true for homogeneous sums.
pub fn check_egf(f: &Functional, p: usize) -> Result<bool> {
    let pi = chaos_projector(f, p)?;
    let residual = pi.max_abs_diff(f);
    if residual > 1e-10 {
        return Err(Error::NotPureChaos { order: p, residual });
    }
    let m = f.model().n_components();
    if 2 * p >= m {
        return Ok(true);
    }
    let dec = chaos_decompose(&(f * f))?;
    Ok((2 * p + 1..=m).all(|k| dec.components()[k].max_abs() <= 1e-10))
}

/// Ordered quadruples `(I, J, K, L)` of support indices whose slot
/// intersection graph is connected. Slots holding equal sets always share
/// an edge (a set intersects itself).
pub fn connected_quadruples(supports: &[Vec<usize>]) -> Result<Vec<[usize; 4]>> {
    if supports.len() > 200 {
        return Err(Error::TooManySupports(supports.len()));
    }
    let masks: Vec<u64> = supports
        .iter()
        .map(|s| s.iter().fold(0u64, |m, &i| m | (1 << (i % 64))))
        .collect();
    let n = masks.len();
    let meets = |i: usize, j: usize| masks[i] & masks[j] != 0;
    let out: Vec<Vec<[usize; 4]>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut local = Vec::new();
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        if quadruple_connected(&[i, j, k, l], &meets) {
                            local.push([i, j, k, l]);
                        }
                    }
                }
            }
            local
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn quadruple_connected(slots: &[usize; 4], meets: &impl Fn(usize, usize) -> bool) -> bool {
    // BFS over the 4-slot graph, edges where the supports intersect
    let mut adj = [0u8; 4];
    for s in 0..4 {
        for t in 0..4 {
            if s != t && meets(slots[s], slots[t]) {
                adj[s] |= 1 << t;
            }
        }
    }
    let mut seen: u8 = 1;
    loop {
        let mut next = seen;
        for (s, &reach) in adj.iter().enumerate() {
            if seen & (1 << s) != 0 {
                next |= reach;
            }
        }
        if next == seen {
            return seen == 0b1111;
        }
        seen = next;
    }
}

/// `Σ_{(I,J,K,L) connected} |E[W_I W_J W_K W_L]|`.
pub fn connected_sum(components: &[DegenerateUStat]) -> Result<f64> {
    if components.is_empty() {
        return Ok(0.0);
    }
    let supports: Vec<Vec<usize>> = components.iter().map(|c| c.support.clone()).collect();
    let quads = connected_quadruples(&supports)?;
    let sum: f64 = quads
        .par_iter()
        .map(|&[i, j, k, l]| {
            let prod = &(&components[i].kernel * &components[j].kernel)
                * &(&components[k].kernel * &components[l].kernel);
            prod.expectation().abs()
        })
        .sum();
    Ok(sum)
}

/// All the fourth-moment and De Jong quantities for a standardized
/// pure-chaos functional given with its degenerate summands.
#[derive(Debug, Clone, Serialize)]
pub struct FourthMomentReport {
    pub p: usize,
    pub fourth_moment: f64,
    /// `|E[F⁴] - 3 E[F²]²|`
    pub fourth_moment_gap: f64,
    pub var_gamma: f64,
    /// `Σ_a E|Δ^{a}F|⁴`
    pub delta4: f64,
    /// maximal influence `ρ² = max_i Σ_{I∋i} E[W_I²]`
    pub rho2: f64,
    /// hypercontractivity ratio `sup_J E[W_J⁴] / E[W_J²]²`
    pub hc_ratio: f64,
    /// `κ = sup_{I,J} E[W_I²] E[W_J²] / E[W_I² W_J²]`
    pub kappa: f64,
    pub connected_sum: f64,
}

impl FourthMomentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

pub fn fourth_moment_report(
    f: &Functional,
    components: &[DegenerateUStat],
) -> Result<FourthMomentReport> {
    let second = f.moment(2);
    if (second - 1.0).abs() > 1e-8 {
        return Err(Error::NotStandardized(format!("E[F^2] = {second}")));
    }
    let p = components
        .first()
        .map(|c| c.order())
        .ok_or(Error::ConditionFailed("non-empty component map", "empty".into()))?;
    if components.iter().any(|c| c.order() != p) {
        return Err(Error::ConditionFailed(
            "all components share one order",
            "mixed orders".into(),
        ));
    }
    let fourth = f.moment(4);
    let gamma = carre_du_champ(f, f)?;
    let seconds: Vec<f64> = components.iter().map(|c| c.kernel.moment(2)).collect();
    let fourths: Vec<f64> = components.iter().map(|c| c.kernel.moment(4)).collect();
    let m = f.model().n_components();
    let rho2 = (0..m)
        .map(|i| {
            components
                .iter()
                .zip(&seconds)
                .filter(|(c, _)| c.support.contains(&i))
                .map(|(_, &s)| s)
                .sum::<f64>()
        })
        .fold(0.0f64, f64::max);
    let hc_ratio = seconds
        .iter()
        .zip(&fourths)
        .filter(|(&s, _)| s > 0.0)
        .map(|(&s, &q)| q / (s * s))
        .fold(0.0f64, f64::max);
    let mut kappa = 0.0f64;
    for (i, ci) in components.iter().enumerate() {
        let sq_i = &ci.kernel * &ci.kernel;
        for (j, cj) in components.iter().enumerate() {
            let cross = (&sq_i * &(&cj.kernel * &cj.kernel)).expectation();
            if cross > 0.0 {
                kappa = kappa.max(seconds[i] * seconds[j] / cross);
            }
        }
    }
    Ok(FourthMomentReport {
        p,
        fourth_moment: fourth,
        fourth_moment_gap: (fourth - 3.0 * second * second).abs(),
        var_gamma: gamma.variance(),
        delta4: delta4_sum(f),
        rho2,
        hc_ratio,
        kappa,
        connected_sum: connected_sum(components)?,
    })
}

/// Boundedness constant of hypothesis (H1) at coordinate `a`:
/// `E[W_I W_J | 𝒢^a] = C_{I,J,a} W_{I∖a} W_{J∖a}` with
/// `C_{I,J,a}(z) = (w_I w_J / (w_{I∖a} w_{J∖a}))(z) · E[Y_a²|Z=z]`.
/// Requires product-form kernels; returns whether every applicable ratio is
/// finite and the largest `|C|`.
pub fn check_h1(components: &[DegenerateUStat], a: usize) -> Result<(bool, f64)> {
    let Some(first) = components.first() else {
        return Ok((true, 0.0));
    };
    let model = first.kernel.model().clone();
    model.component(a)?;
    let vars = component_cond_vars(&model);
    let weight_of = |support: &[usize]| -> Option<&Vec<f64>> {
        components
            .iter()
            .find(|c| c.support == support)
            .and_then(|c| c.weight.as_ref())
    };
    let mut max_c = 0.0f64;
    for ci in components {
        let wi = ci.weight.as_ref().ok_or_else(|| {
            Error::NonProductForm(format!("kernel on {:?} has no weight", ci.support))
        })?;
        if !ci.support.contains(&a) {
            continue;
        }
        for cj in components {
            let wj = cj.weight.as_ref().ok_or_else(|| {
                Error::NonProductForm(format!("kernel on {:?} has no weight", cj.support))
            })?;
            if !cj.support.contains(&a) {
                continue;
            }
            let reduced_i: Vec<usize> =
                ci.support.iter().copied().filter(|&i| i != a).collect();
            let reduced_j: Vec<usize> =
                cj.support.iter().copied().filter(|&i| i != a).collect();
            // a reduced support outside the family means the bare product
            // kernel ∏ Y_i, i.e. unit weight
            let ones = vec![1.0; model.n_latent()];
            let wi_red = weight_of(&reduced_i).unwrap_or(&ones);
            let wj_red = weight_of(&reduced_j).unwrap_or(&ones);
            if wi_red.iter().all(|&v| v == 0.0) || wj_red.iter().all(|&v| v == 0.0) {
                return Err(Error::NonProductForm(
                    "reduced weight identically zero".into(),
                ));
            }
            for z in 0..model.n_latent() {
                let den = wi_red[z] * wj_red[z];
                if den != 0.0 {
                    let c = wi[z] * wj[z] / den * vars[a][z];
                    max_c = max_c.max(c.abs());
                }
            }
        }
    }
    Ok((max_c.is_finite(), max_c))
}

/// Explicit-constant parts of the De Jong bounds. Constants that are not
/// known explicitly are reported as symbolic multipliers, never as numbers.
#[derive(Debug, Clone, Serialize)]
pub struct DejongQuantities {
    pub p: usize,
    /// `√(2/(3π)) · √|E[F⁴] - 3|`, the explicit part of De Jong I
    pub dejong1_explicit: f64,
    /// maximal influence `ρ = √ρ²`, multiplied by the symbolic constant
    pub rho: f64,
    pub dejong1_symbolic: &'static str,
    /// radicand of De Jong II, `Σ_connected |E[W_I W_J W_K W_L]|`
    pub dejong2_radicand: f64,
    pub dejong2_symbolic: &'static str,
}

impl DejongQuantities {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Compute the De Jong quantities after validating EGF, HC, H1 and H2.
pub fn dejong_quantities(
    f: &Functional,
    components: &[DegenerateUStat],
) -> Result<DejongQuantities> {
    if components.is_empty() {
        return Ok(DejongQuantities {
            p: 0,
            dejong1_explicit: 0.0,
            rho: 0.0,
            dejong1_symbolic: "C~_p * rho",
            dejong2_radicand: 0.0,
            dejong2_symbolic: "C_m * sqrt(radicand)",
        });
    }
    let report = fourth_moment_report(f, components)?;
    if !check_egf(f, report.p)? {
        return Err(Error::ConditionFailed("EGF", "F^2 has chaos above 2p".into()));
    }
    if !report.hc_ratio.is_finite() || report.hc_ratio == 0.0 {
        return Err(Error::ConditionFailed(
            "HC",
            format!("ratio {}", report.hc_ratio),
        ));
    }
    for a in 0..f.model().n_components() {
        let (bounded, _) = check_h1(components, a)?;
        if !bounded {
            return Err(Error::ConditionFailed("H1", format!("unbounded at a = {a}")));
        }
    }
    if !report.kappa.is_finite() {
        return Err(Error::ConditionFailed("H2", "kappa not finite".into()));
    }
    Ok(DejongQuantities {
        p: report.p,
        dejong1_explicit: (2.0 / (3.0 * std::f64::consts::PI)).sqrt()
            * report.fourth_moment_gap.sqrt(),
        rho: report.rho2.sqrt(),
        dejong1_symbolic: "C~_p * rho",
        dejong2_radicand: report.connected_sum,
        dejong2_symbolic: "C_m * sqrt(radicand)",
    })
}

/// Residual of the Hermite second-moment identity for `F ∈ 𝔉_p`:
///
///   E[H₂(F)(L + 2p·Id)H₂(F)]
///     = p·E[2(F²-1)² - (4/3)F⁴] + (1/6)·Σ_a E|Δ^{a}F|⁴
///
/// with `H₂(F) = F² - 1`. The stated remainder constant is pinned
/// numerically; see the tests.
pub fn hermite_identity_gap(f: &Functional, p: usize) -> Result<f64> {
    let pi = chaos_projector(f, p)?;
    let residual = pi.max_abs_diff(f);
    if residual > 1e-10 {
        return Err(Error::NotPureChaos { order: p, residual });
    }
    let h2 = f.map(|v| v * v - 1.0);
    let lh2 = generator_l(&h2);
    let lhs = (&h2 * &lh2.zip(&h2, |l, h| l + 2.0 * p as f64 * h)).expectation();
    let rhs = p as f64
        * f.map(|v| 2.0 * (v * v - 1.0).powi(2) - 4.0 / 3.0 * v.powi(4)).expectation()
        + delta4_sum(f) / 6.0;
    Ok((lhs - rhs).abs())
}
