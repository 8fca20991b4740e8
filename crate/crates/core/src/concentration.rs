//! Exact concentration checks: the conditional covariance identity, the
//! conditional Efron-Stein inequality and the conditional McDiarmid bound.
//!
//! Every left-hand side here is computed by full enumeration, so the
//! inequalities are verified as numbers, not estimated.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Functional;
use crate::ops::{
    carre_du_champ, chaos_decompose, chaos_projector, cond_exp_z, gradient, inverse_l,
};

/// One latent-state row of an inequality check: `lhs ≤ rhs` with
/// `slack = rhs - lhs`.
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationRecord {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Result of checking one inequality across all latent states.
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub functional: String,
    pub inequality: String,
    pub records: Vec<ConcentrationRecord>,
    pub pass: bool,
}

pub const SLACK_TOL: f64 = 1e-10;

impl ConcentrationReport {
    fn new(functional: &str, inequality: &str, records: Vec<ConcentrationRecord>) -> Self {
        let pass = records.iter().all(|r| r.slack >= -SLACK_TOL);
        ConcentrationReport {
            functional: functional.into(),
            inequality: inequality.into(),
            records,
            pass,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} for {}: {}\n{:<24} {:>14} {:>14} {:>14}\n",
            self.inequality,
            self.functional,
            if self.pass { "PASS" } else { "FAIL" },
            "state",
            "lhs",
            "rhs",
            "slack"
        );
        for r in &self.records {
            out.push_str(&format!(
                "{:<24} {:>14.6e} {:>14.6e} {:>14.6e}\n",
                r.label, r.lhs, r.rhs, r.slack
            ));
        }
        out
    }
}

/// Direct enumeration oracle `Cov(F, G | Z = z)` for every latent state.
pub fn conditional_covariance(f: &Functional, g: &Functional) -> Result<Vec<f64>> {
    if !f.same_model(g) {
        return Err(Error::MismatchedModel);
    }
    let fg = f * g;
    let ef = f.cond_expectation_z();
    let eg = g.cond_expectation_z();
    let efg = fg.cond_expectation_z();
    Ok(efg
        .iter()
        .zip(ef.iter().zip(&eg))
        .map(|(&ab, (&a, &b))| ab - a * b)
        .collect())
}

/// The Malliavin covariance representation
/// `Cov(F, G | Z = z) = Σ_a E[(D_a F) · D_a(-L⁻¹ G°) | Z = z]` with
/// `G° = G - E[G|Z]`. Returns the right-hand side.
pub fn covariance_malliavin(f: &Functional, g: &Functional) -> Result<Vec<f64>> {
    if !f.same_model(g) {
        return Err(Error::MismatchedModel);
    }
    let g0 = g - &cond_exp_z(g);
    let h = inverse_l(&g0)?.scale(-1.0);
    let mut out = vec![0.0; f.model().n_latent()];
    for a in 0..f.model().n_components() {
        let prod = &gradient(f, a)? * &gradient(&h, a)?;
        for (acc, v) in out.iter_mut().zip(prod.cond_expectation_z()) {
            *acc += v;
        }
    }
    Ok(out)
}

/// Time-integral form of the same identity,
/// `Cov(F, G | Z) = ∫₀^∞ Σ_a E[(D_a F)(D_a P_t G) | Z] dt`, evaluated with
/// adaptive quadrature on [0, 40] through the spectral semigroup. Validation
/// path only; [`covariance_malliavin`] is the production route.
pub fn covariance_quadrature(f: &Functional, g: &Functional) -> Result<Vec<f64>> {
    if !f.same_model(g) {
        return Err(Error::MismatchedModel);
    }
    let n_latent = f.model().n_latent();
    let m = f.model().n_components();
    let g0 = g - &cond_exp_z(g);
    let dec = chaos_decompose(&g0)?;
    let df: Vec<Functional> = (0..m).map(|a| gradient(f, a).unwrap()).collect();
    // c[n][z] = Σ_a E[(D_aF)(D_a π_n G) | Z=z], so the integrand at time t
    // is Σ_n e^{-nt} c[n][z]
    let mut coeffs: Vec<Vec<f64>> = Vec::new();
    for pi in dec.components().iter().skip(1) {
        let mut per_z = vec![0.0; n_latent];
        for (a, dfa) in df.iter().enumerate() {
            let prod = dfa * &gradient(pi, a)?;
            for (acc, v) in per_z.iter_mut().zip(prod.cond_expectation_z()) {
                *acc += v;
            }
        }
        coeffs.push(per_z);
    }
    let mut out = vec![0.0; n_latent];
    for (z, slot) in out.iter_mut().enumerate() {
        let integrand = |t: f64| {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| (-((i + 1) as f64) * t).exp() * c[z])
                .sum::<f64>()
        };
        *slot = adaptive_simpson(&integrand, 0.0, 40.0, 1e-10);
    }
    Ok(out)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `Var[F | Z = z] ≤ E[Γ(F, F) | Z = z]` per latent state.
pub fn efron_stein_check(f: &Functional, name: &str) -> ConcentrationReport {
    let lhs = f.cond_variance_z();
    let gamma = carre_du_champ(f, f).expect("same model");
    let rhs = gamma.cond_expectation_z();
    let records = lhs
        .iter()
        .zip(&rhs)
        .enumerate()
        .map(|(z, (&l, &r))| ConcentrationRecord {
            label: f.model().latent().states[z].label.clone(),
            lhs: l,
            rhs: r,
            slack: r - l,
        })
        .collect();
    ConcentrationReport::new(name, "conditional Efron-Stein", records)
}

/// Sharp form on a pure chaos: if `π_p F = F` then
/// `Var[F] = (1/p) E[Γ(F, F)]`. Returns `(Var[F], E[Γ(F,F)]/p)` or
/// `NotPureChaos` when `F` has mass outside order `p`.
pub fn efron_stein_equality(f: &Functional, p: usize) -> Result<(f64, f64)> {
    let pi = chaos_projector(f, p)?;
    let residual = pi.max_abs_diff(f);
    if residual > 1e-10 {
        return Err(Error::NotPureChaos { order: p, residual });
    }
    let gamma = carre_du_champ(f, f)?;
    Ok((f.variance(), gamma.expectation() / p as f64))
}

/// Worst-case single-coordinate deviations
/// `d_a = max_{z, x, x'_a} |F(z, x) - F(z, x^{a}, x'_a)|` by enumeration.
pub fn mcdiarmid_deviations(f: &Functional) -> Vec<f64> {
    let model = f.model();
    let n_configs = f.n_configs() as usize;
    (0..model.n_components())
        .map(|a| {
            let stride = model.stride(a) as usize;
            let k = model.components()[a].values.len();
            let mut d = 0.0f64;
            for z in 0..model.n_latent() {
                let zoff = z * n_configs;
                let mut block = 0;
                while block < n_configs {
                    for lo in 0..stride {
                        let base = zoff + block + lo;
                        let mut lo_v = f64::INFINITY;
                        let mut hi_v = f64::NEG_INFINITY;
                        for v in 0..k {
                            let x = f.table()[base + v * stride];
                            lo_v = lo_v.min(x);
                            hi_v = hi_v.max(x);
                        }
                        d = d.max(hi_v - lo_v);
                    }
                    block += stride * k;
                }
            }
            d
        })
        .collect()
}

/// Conditional McDiarmid check: for each latent state and threshold `x > 0`,
/// the exact tail `P(F - E[F|Z] ≥ x | Z = z)` against
/// `exp(-x² / (2 Σ_a d_a²))`.
pub fn mcdiarmid_check(
    f: &Functional,
    thresholds: &[f64],
    name: &str,
) -> Result<ConcentrationReport> {
    if let Some(&x) = thresholds.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::ConditionFailed(
            "threshold > 0",
            format!("got {x}"),
        ));
    }
    let model = f.model().clone();
    let d = mcdiarmid_deviations(f);
    let k2: f64 = d.iter().map(|v| v * v).sum();
    let means = f.cond_expectation_z();
    // conditional tail mass by direct enumeration
    let mut records = Vec::new();
    for (z, &mean_z) in means.iter().enumerate() {
        let pz = model.latent_prob(z);
        if pz == 0.0 {
            continue;
        }
        for &x in thresholds {
            let mut tail = 0.0;
            model.visit_cells(|zz, ci, _, p| {
                if zz == z && f.at(zz, ci) - mean_z >= x {
                    tail += p;
                }
            })?;
            tail /= pz;
            let bound = if k2 > 0.0 {
                (-x * x / (2.0 * k2)).exp()
            } else {
                // constant-in-x functional: the tail is exactly zero
                0.0
            };
            records.push(ConcentrationRecord {
                label: format!("{} x={x}", model.latent().states[z].label),
                lhs: tail,
                rhs: bound,
                slack: bound - tail,
            });
        }
    }
    Ok(ConcentrationReport::new(name, "conditional McDiarmid", records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{mixed_bernoulli, sum_and_pair};
    use crate::model::{random_functional, random_model, Functional};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::sync::Arc;

    #[test]
    fn covariance_identity_on_coordinates() {
        let model = mixed_bernoulli(3);
        let x0 = Functional::coordinate(&model, 0).unwrap();
        let x1 = Functional::coordinate(&model, 1).unwrap();
        // Var(X_0 | Z=z) = z(1-z)
        let same = covariance_malliavin(&x0, &x0).unwrap();
        for (z, &v) in same.iter().enumerate() {
            let zv = model.latent_value(z);
            assert!((v - zv * (1.0 - zv)).abs() < 1e-13);
        }
        // conditional independence kills the cross term
        let cross = covariance_malliavin(&x0, &x1).unwrap();
        assert!(cross.iter().all(|v| v.abs() < 1e-13));
        // constant G
        let c = Functional::constant(&model, 4.0).unwrap();
        assert!(covariance_malliavin(&x0, &c)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn covariance_identity_on_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(101);
        for _ in 0..100 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            let g = random_functional(&mut rng, &model);
            let lhs = conditional_covariance(&f, &g).unwrap();
            let rhs = covariance_malliavin(&f, &g).unwrap();
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn covariance_quadrature_agrees() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..10 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            let g = random_functional(&mut rng, &model);
            let direct = conditional_covariance(&f, &g).unwrap();
            let quad = covariance_quadrature(&f, &g).unwrap();
            for (a, b) in direct.iter().zip(&quad) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn efron_stein_on_fixture() {
        let model = mixed_bernoulli(3);
        // σ(Z)-measurable: both sides vanish
        let zf = Functional::from_fn(&model, |z, _| model.latent_value(z)).unwrap();
        let rep = efron_stein_check(&zf, "sigma-Z functional");
        assert!(rep.pass);
        assert!(rep.records.iter().all(|r| r.lhs.abs() < 1e-14 && r.rhs.abs() < 1e-14));

        // first chaos: equality with p = 1
        let f1 = Functional::from_fn(&model, |z, c| c[0] as f64 - model.latent_value(z))
            .unwrap();
        let (var, scaled) = efron_stein_equality(&f1, 1).unwrap();
        assert!((var - scaled).abs() < 1e-12);

        // second chaos: equality with p = 2
        let f2 = Functional::from_fn(&model, |z, c| {
            let zv = model.latent_value(z);
            (c[0] as f64 - zv) * (c[1] as f64 - zv)
        })
        .unwrap();
        let (var, scaled) = efron_stein_equality(&f2, 2).unwrap();
        assert!((var - scaled).abs() < 1e-12);
        assert!(matches!(
            efron_stein_equality(&f2, 1),
            Err(Error::NotPureChaos { order: 1, .. })
        ));

        // mixed functional: nonnegative slack everywhere
        let rep = efron_stein_check(&sum_and_pair(&model), "sum and pair");
        assert!(rep.pass);
        assert!(rep.records.iter().all(|r| r.slack >= 0.0));
    }

    #[test]
    fn efron_stein_random_models() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..50 {
            let model = Arc::new(random_model(&mut rng, 5, 3, 3));
            let f = random_functional(&mut rng, &model);
            assert!(efron_stein_check(&f, "random").pass);
        }
    }

    #[test]
    fn mcdiarmid_fixture_tail() {
        let model = mixed_bernoulli(3);
        let sum = Functional::from_config_fn(&model, |c| {
            c.iter().map(|&v| v as f64).sum()
        })
        .unwrap();
        let d = mcdiarmid_deviations(&sum);
        assert_eq!(d, vec![1.0, 1.0, 1.0]);
        let rep = mcdiarmid_check(&sum, &[2.0], "bernoulli sum").unwrap();
        assert!(rep.pass);
        // at z = 0.3: P(Σ - 0.9 ≥ 2) = P(Σ = 3) = 0.027, bound exp(-4/6)
        let r = &rep.records[0];
        assert!((r.lhs - 0.027).abs() < 1e-12);
        assert!((r.rhs - (-4.0f64 / 6.0).exp()).abs() < 1e-12);
        // far beyond the support the exact tail is zero while the bound is not
        let far = mcdiarmid_check(&sum, &[50.0], "bernoulli sum").unwrap();
        assert!(far.records.iter().all(|r| r.lhs == 0.0 && r.rhs > 0.0));
        // constant functional
        let c = Functional::constant(&model, 1.0).unwrap();
        assert!(mcdiarmid_check(&c, &[0.5], "constant").unwrap().pass);
        assert!(matches!(
            mcdiarmid_check(&sum, &[0.0], "bad"),
            Err(Error::ConditionFailed(_, _))
        ));
    }

    #[test]
    fn mcdiarmid_random_models_monotone() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        for _ in 0..25 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            let xs = [0.1, 0.25, 0.5, 1.0, 2.0];
            let rep = mcdiarmid_check(&f, &xs, "random").unwrap();
            assert!(rep.pass);
            // exact tails are monotone nonincreasing in x per latent state
            for chunk in rep.records.chunks(xs.len()) {
                for w in chunk.windows(2) {
                    assert!(w[1].lhs <= w[0].lhs + 1e-15);
                }
            }
        }
    }

    #[test]
    fn report_serializes() {
        let model = mixed_bernoulli(2);
        let f = Functional::coordinate(&model, 0).unwrap();
        let rep = efron_stein_check(&f, "coordinate");
        let json = rep.to_json();
        assert!(json.contains("\"pass\""));
        assert!(rep.to_text().contains("Efron-Stein"));
    }
}
