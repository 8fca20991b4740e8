//! The Malliavin operators on a finite conditional product space.
//!
//! With `E_a F = E[F | 𝒢^a]` (condition on `Z` and every coordinate except
//! `a`) the operators are
//!
//!   D_a F   = F - E_a F
//!   δU      = Σ_a D_a U_a
//!   LF      = -Σ_a D_a F
//!   Γ(F,G)  = ½ { L(FG) - F·LG - G·LF }
//!   π_n     = orthogonal projector onto ker(L + n·Id)
//!   L⁻¹F    = -Σ_{n≥1} π_n F / n        (on E[F|Z] = 0)
//!   P_t F   = E[F|Z] + Σ_{n≥1} e^{-nt} π_n F
//!
//! Everything is materialized as a dense cell table, so operator identities
//! can be asserted cellwise rather than in distribution.

use crate::error::{Error, Result};
use crate::model::{Functional, SimpleProcess};

/// Cap on `2^m * cells` table entries for the chaos decomposition DP.
pub const CHAOS_ENTRY_CAP: u64 = 50_000_000;

/// Tolerance on `max_z |E[F|Z=z]|` for the pseudo-inverse domain check.
pub const CENTERING_TOL: f64 = 1e-10;

/// `E[F | 𝒢^a]`: integrate coordinate `a` out against its conditional law.
pub fn cond_exp_excluding(f: &Functional, a: usize) -> Result<Functional> {
    f.model().component(a)?;
    Ok(integrate_coord(f, a))
}

fn integrate_coord(f: &Functional, a: usize) -> Functional {
    let model = f.model().clone();
    let comp = &model.components()[a];
    let k = comp.values.len() as u64;
    let stride = model.stride(a);
    let n_configs = f.n_configs();
    let src = f.table();
    let mut table = vec![0.0; src.len()];
    for z in 0..model.n_latent() {
        let pmf = &comp.cond_pmf[z];
        let zoff = z * n_configs as usize;
        let mut block = 0u64;
        while block < n_configs {
            for lo in 0..stride {
                let base = zoff + (block + lo) as usize;
                let mut s = 0.0;
                for (v, &p) in pmf.iter().enumerate() {
                    s += p * src[base + v * stride as usize];
                }
                for v in 0..k as usize {
                    table[base + v * stride as usize] = s;
                }
            }
            block += stride * k;
        }
    }
    Functional::from_table(&model, table, false)
}

/// `E[F | 𝒢_J]` for `J` given as a bitmask over components: integrate out
/// every coordinate not in `J`.
pub fn cond_exp_given_set(f: &Functional, mask: u64) -> Functional {
    let m = f.model().n_components();
    let mut g = f.clone();
    for b in 0..m {
        if mask & (1 << b) == 0 {
            g = integrate_coord(&g, b);
        }
    }
    g
}

/// `E[F | Z]` as a functional constant in the configuration.
pub fn cond_exp_z(f: &Functional) -> Functional {
    cond_exp_given_set(f, 0)
}

/// The discrete gradient `D_a F = F - E[F | 𝒢^a]`.
pub fn gradient(f: &Functional, a: usize) -> Result<Functional> {
    Ok(f - &cond_exp_excluding(f, a)?)
}

/// `∏_{a∈J} D_a F`; the factors commute so the order is immaterial.
pub fn iterated_gradient(f: &Functional, mask: u64) -> Result<Functional> {
    let m = f.model().n_components();
    if mask >> m != 0 {
        return Err(Error::UnknownIndex(63 - mask.leading_zeros() as usize));
    }
    let mut g = f.clone();
    for b in 0..m {
        if mask & (1 << b) != 0 {
            g = gradient(&g, b)?;
        }
    }
    Ok(g)
}

/// Möbius expansion `∏_{a∈J} D_a F = Σ_{S⊆J} (-1)^{|S|} E[F | 𝒢^S]`, where
/// `𝒢^S` conditions on everything except the coordinates in `S`. Kept as an
/// independent cross-check of [`iterated_gradient`].
pub fn iterated_gradient_moebius(f: &Functional, mask: u64) -> Result<Functional> {
    let m = f.model().n_components();
    if mask >> m != 0 {
        return Err(Error::UnknownIndex(63 - mask.leading_zeros() as usize));
    }
    let full = (1u64 << m) - 1;
    let mut acc = Functional::constant(f.model(), 0.0)?;
    // iterate over submasks S of mask, including S = 0
    let mut s = mask;
    loop {
        let term = cond_exp_given_set(f, full & !s);
        let sign = if s.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        acc = acc.zip(&term, |x, y| x + sign * y);
        if s == 0 {
            break;
        }
        s = (s - 1) & mask;
    }
    Ok(acc)
}

/// The divergence `δU = Σ_a D_a U_a`, adjoint to `D` by integration by parts.
pub fn divergence(u: &SimpleProcess) -> Result<Functional> {
    let first = u.entries.first().ok_or(Error::MismatchedModel)?;
    let mut acc = Functional::constant(first.model(), 0.0)?;
    for (a, entry) in u.entries.iter().enumerate() {
        if !entry.same_model(first) {
            return Err(Error::MismatchedModel);
        }
        acc = &acc + &gradient(entry, a)?;
    }
    Ok(acc)
}

/// The Ornstein-Uhlenbeck generator `LF = -Σ_a D_a F`.
pub fn generator_l(f: &Functional) -> Functional {
    let m = f.model().n_components();
    let mut acc = Functional::constant(f.model(), 0.0).expect("same model");
    for a in 0..m {
        acc = &acc + &gradient(f, a).expect("a < m");
    }
    -&acc
}

/// `Γ(F,G) = ½{L(FG) - F·LG - G·LF}`.
pub fn carre_du_champ(f: &Functional, g: &Functional) -> Result<Functional> {
    if !f.same_model(g) {
        return Err(Error::MismatchedModel);
    }
    let fg = f * g;
    let t = &(&generator_l(&fg) - &(f * &generator_l(g))) - &(g * &generator_l(f));
    Ok(t.scale(0.5))
}

/// The same bilinear form through the resampling differences:
/// `Γ(F,G) = ½ Σ_a E[Δ^{a}F · Δ^{a}G | X, Z]`. Agrees with
/// [`carre_du_champ`] cellwise; kept separate as an oracle and because it
/// makes `Γ(F,F) ≥ 0` manifest.
pub fn carre_du_champ_difference(f: &Functional, g: &Functional) -> Result<Functional> {
    if !f.same_model(g) {
        return Err(Error::MismatchedModel);
    }
    let model = f.model().clone();
    let n_configs = f.n_configs();
    let mut table = vec![0.0; f.table().len()];
    for a in 0..model.n_components() {
        let comp = &model.components()[a];
        let stride = model.stride(a) as usize;
        let k = comp.values.len();
        for z in 0..model.n_latent() {
            let pmf = &comp.cond_pmf[z];
            for ci in 0..n_configs {
                let idx = z * n_configs as usize + ci as usize;
                let digit = (ci as usize / stride) % k;
                let base = idx - digit * stride;
                let mut s = 0.0;
                for (v, &p) in pmf.iter().enumerate() {
                    let j = base + v * stride;
                    s += p * (f.table()[idx] - f.table()[j]) * (g.table()[idx] - g.table()[j]);
                }
                table[idx] += 0.5 * s;
            }
        }
    }
    Ok(Functional::from_table(&model, table, false))
}

/// `E[g(Δ^{a}F)^k | X, Z]` with `Δ^{a}F = F(x) - F(x^{a}, x'_a)` and the
/// refresh `x'_a` drawn from the conditional law. `absolute` applies `|·|`
/// before the power; `k = 1` without it reproduces the gradient.
pub fn difference_moment(f: &Functional, a: usize, k: u32, absolute: bool) -> Result<Functional> {
    f.model().component(a)?;
    if k == 0 {
        return Err(Error::ConditionFailed("k >= 1", format!("got k = {k}")));
    }
    difference_map(f, a, |d| {
        let b = if absolute { d.abs() } else { d };
        b.powi(k as i32)
    })
}

/// Mixed third-order term `E[|Δ^{a}G| · (Δ^{a}F)² | X, Z]` used by the
/// Stein remainder bounds.
pub fn difference_mixed(g: &Functional, f: &Functional, a: usize) -> Result<Functional> {
    if !f.same_model(g) {
        return Err(Error::MismatchedModel);
    }
    f.model().component(a)?;
    let model = f.model().clone();
    let comp = &model.components()[a];
    let stride = model.stride(a) as usize;
    let k = comp.values.len();
    let n_configs = f.n_configs() as usize;
    let mut table = vec![0.0; f.table().len()];
    for z in 0..model.n_latent() {
        let pmf = &comp.cond_pmf[z];
        for ci in 0..n_configs {
            let idx = z * n_configs + ci;
            let digit = (ci / stride) % k;
            let base = idx - digit * stride;
            let mut s = 0.0;
            for (v, &p) in pmf.iter().enumerate() {
                let j = base + v * stride;
                let df = f.table()[idx] - f.table()[j];
                let dg = g.table()[idx] - g.table()[j];
                s += p * dg.abs() * df * df;
            }
            table[idx] = s;
        }
    }
    Ok(Functional::from_table(&model, table, false))
}

fn difference_map(f: &Functional, a: usize, g: impl Fn(f64) -> f64) -> Result<Functional> {
    let model = f.model().clone();
    let comp = &model.components()[a];
    let stride = model.stride(a) as usize;
    let k = comp.values.len();
    let n_configs = f.n_configs() as usize;
    let mut table = vec![0.0; f.table().len()];
    for z in 0..model.n_latent() {
        let pmf = &comp.cond_pmf[z];
        for ci in 0..n_configs {
            let idx = z * n_configs + ci;
            let digit = (ci / stride) % k;
            let base = idx - digit * stride;
            let mut s = 0.0;
            for (v, &p) in pmf.iter().enumerate() {
                s += p * g(f.table()[idx] - f.table()[base + v * stride]);
            }
            table[idx] = s;
        }
    }
    Ok(Functional::from_table(&model, table, false))
}

/// `Σ_a E[|Δ^{a}F|^k]`, the influence-style sums in the fourth-moment and
/// Wasserstein bounds.
pub fn difference_abs_moment_sum(f: &Functional, k: u32) -> Result<f64> {
    let mut s = 0.0;
    for a in 0..f.model().n_components() {
        s += difference_moment(f, a, k, true)?.expectation();
    }
    Ok(s)
}

/// `Σ_a E[|Δ^{a}F|⁴]`.
pub fn delta4_sum(f: &Functional) -> f64 {
    difference_abs_moment_sum(f, 4).expect("k = 4 and all indices valid")
}

// ---------------------------------------------------------------------------
// Chaos decomposition
// ---------------------------------------------------------------------------

/// The orthogonal decomposition `F = Σ_{n=0}^{m} π_n F` with
/// `π_n F ∈ ker(L + n·Id)` and `π_0 F = E[F|Z]`.
#[derive(Debug, Clone)]
pub struct ChaosDecomposition {
    source: Functional,
    components: Vec<Functional>,
}

impl ChaosDecomposition {
    pub fn source(&self) -> &Functional {
        &self.source
    }

    pub fn components(&self) -> &[Functional] {
        &self.components
    }

    /// Highest possible chaos order (the number of components `m`).
    pub fn max_order(&self) -> usize {
        self.components.len() - 1
    }

    pub fn projection(&self, n: usize) -> Result<&Functional> {
        self.components.get(n).ok_or(Error::IndexOutOfRange {
            order: n,
            components: self.max_order(),
        })
    }

    /// `Σ_n π_n F`; equals the source up to rounding.
    pub fn reconstruct(&self) -> Functional {
        let mut acc = Functional::constant(self.source.model(), 0.0).expect("same model");
        for c in &self.components {
            acc = &acc + c;
        }
        acc
    }
}

/// Decompose `F` into chaoses with the aggregated Möbius formula
/// `π_n F = Σ_{l=0}^{n} (-1)^{n-l} C(m-l, n-l) Σ_{|L|=l} E[F | 𝒢_L]`,
/// computed from a DP over all `2^m` conditional tables: each table drops
/// one coordinate from its successor.
pub fn chaos_decompose(f: &Functional) -> Result<ChaosDecomposition> {
    let m = f.model().n_components();
    let cells = f.table().len() as u128;
    let terms = (1u128 << m.min(127)) * cells;
    if m >= 40 || terms > CHAOS_ENTRY_CAP as u128 {
        return Err(Error::DecompositionTooLarge { terms, cap: CHAOS_ENTRY_CAP });
    }
    let full = (1usize << m) - 1;
    let mut cond: Vec<Option<Functional>> = vec![None; full + 1];
    cond[full] = Some(f.clone());
    // level sums Σ_{|L|=l} E[F|𝒢_L]
    let mut level_sums: Vec<Functional> =
        vec![Functional::constant(f.model(), 0.0)?; m + 1];
    level_sums[m] = f.clone();
    for mask in (0..full).rev() {
        let missing = (!mask & full).trailing_zeros() as usize;
        let parent = cond[mask | (1 << missing)]
            .as_ref()
            .expect("parent mask has higher value, already computed");
        let table = integrate_coord(parent, missing);
        level_sums[mask.count_ones() as usize] =
            &level_sums[mask.count_ones() as usize] + &table;
        cond[mask] = Some(table);
    }
    drop(cond);
    let choose = pascal(m);
    let mut components = Vec::with_capacity(m + 1);
    for n in 0..=m {
        let mut pi = Functional::constant(f.model(), 0.0)?;
        for (l, sum) in level_sums.iter().enumerate().take(n + 1) {
            let sign = if (n - l) % 2 == 0 { 1.0 } else { -1.0 };
            let coeff = sign * choose[m - l][n - l];
            pi = pi.zip(sum, |x, y| x + coeff * y);
        }
        components.push(pi);
    }
    Ok(ChaosDecomposition { source: f.clone(), components })
}

fn pascal(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = 1.0;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + if j < i { c[i - 1][j] } else { 0.0 };
        }
    }
    c
}

/// `π_n F` through the full decomposition.
pub fn chaos_projector(f: &Functional, n: usize) -> Result<Functional> {
    let m = f.model().n_components();
    if n > m {
        return Err(Error::IndexOutOfRange { order: n, components: m });
    }
    Ok(chaos_decompose(f)?.components[n].clone())
}

/// Operator-composition form `π_n F = Σ_{|J|=n} (∏_{b∈J} D_b) E[F | 𝒢_J]`.
/// Exponentially slower than the DP; used to cross-check it.
pub fn chaos_projector_composed(f: &Functional, n: usize) -> Result<Functional> {
    let m = f.model().n_components();
    if n > m {
        return Err(Error::IndexOutOfRange { order: n, components: m });
    }
    let mut acc = Functional::constant(f.model(), 0.0)?;
    for mask in 0u64..(1 << m) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let g = cond_exp_given_set(f, mask);
        acc = &acc + &iterated_gradient(&g, mask)?;
    }
    Ok(acc)
}

/// Pseudo-inverse of the generator: `L⁻¹F = -Σ_{n≥1} π_n F / n`, defined on
/// conditionally centered functionals.
pub fn inverse_l(f: &Functional) -> Result<Functional> {
    let worst = f
        .cond_expectation_z()
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    if worst > CENTERING_TOL {
        return Err(Error::NotCentered(worst));
    }
    let dec = chaos_decompose(f)?;
    let mut acc = Functional::constant(f.model(), 0.0)?;
    for (n, pi) in dec.components.iter().enumerate().skip(1) {
        acc = acc.zip(pi, |x, y| x - y / n as f64);
    }
    Ok(acc)
}

/// The Ornstein-Uhlenbeck semigroup `P_t F = E[F|Z] + Σ_{n≥1} e^{-nt} π_n F`.
pub fn semigroup_pt(f: &Functional, t: f64) -> Result<Functional> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let dec = chaos_decompose(f)?;
    let mut acc = dec.components[0].clone();
    for (n, pi) in dec.components.iter().enumerate().skip(1) {
        let w = (-(n as f64) * t).exp();
        acc = acc.zip(pi, |x, y| x + w * y);
    }
    Ok(acc)
}

/// Product form of the same semigroup: since the single-site pieces
/// `E_a - Id` commute and each `E_a` is idempotent,
/// `P_t = ∏_a (e^{-t} Id + (1 - e^{-t}) E_a)`. Independent of the spectral
/// route, so it serves as an exact oracle for it.
pub fn semigroup_pt_product(f: &Functional, t: f64) -> Result<Functional> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let w = (-t).exp();
    let mut g = f.clone();
    for a in 0..f.model().n_components() {
        let ea = integrate_coord(&g, a);
        g = g.zip(&ea, |x, y| w * x + (1.0 - w) * y);
    }
    Ok(g)
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
    fn cond_exp_excluding_oracles() {
        let model = mixed_bernoulli(3);
        let c = Functional::constant(&model, 2.5).unwrap();
        assert_eq!(cond_exp_excluding(&c, 0).unwrap().max_abs_diff(&c), 0.0);

        // E[X_0 | 𝒢^0] = E[X_0 | Z] = z
        let x0 = Functional::coordinate(&model, 0).unwrap();
        let e = cond_exp_excluding(&x0, 0).unwrap();
        let zf = Functional::from_fn(&model, |z, _| model.latent_value(z)).unwrap();
        assert!(e.max_abs_diff(&zf) < 1e-15);

        // X_1 is 𝒢^0-measurable
        let x1 = Functional::coordinate(&model, 1).unwrap();
        assert!(cond_exp_excluding(&x1, 0).unwrap().max_abs_diff(&x1) < 1e-15);

        assert!(matches!(
            cond_exp_excluding(&x1, 9),
            Err(Error::UnknownIndex(9))
        ));
    }

    #[test]
    fn gradient_oracles_and_idempotence() {
        let model = mixed_bernoulli(3);
        let x0 = Functional::coordinate(&model, 0).unwrap();
        let d = gradient(&x0, 0).unwrap();
        let oracle =
            Functional::from_fn(&model, |z, c| c[0] as f64 - model.latent_value(z)).unwrap();
        assert!(d.max_abs_diff(&oracle) < 1e-15);
        assert!(gradient(&x0, 1).unwrap().max_abs() < 1e-15);
        // D_a D_a = D_a and E[D_aF | 𝒢^a] = 0 cellwise
        let f = sum_and_pair(&model);
        for a in 0..3 {
            let da = gradient(&f, a).unwrap();
            assert!(gradient(&da, a).unwrap().max_abs_diff(&da) < 1e-14);
            assert!(cond_exp_excluding(&da, a).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_commute() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..10 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            let m = model.n_components();
            for a in 0..m {
                for b in 0..m {
                    let ab = gradient(&gradient(&f, a).unwrap(), b).unwrap();
                    let ba = gradient(&gradient(&f, b).unwrap(), a).unwrap();
                    assert!(ab.max_abs_diff(&ba) < 1e-13);
                }
            }
        }
    }

    #[test]
    fn integration_by_parts_duality() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..25 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            let u = SimpleProcess::new(
                (0..model.n_components())
                    .map(|_| random_functional(&mut rng, &model))
                    .collect(),
            )
            .unwrap();
            // E[Σ_a D_aF · U_a] = E[F · δU]
            let mut lhs = 0.0;
            for (a, ua) in u.entries.iter().enumerate() {
                lhs += (&gradient(&f, a).unwrap() * ua).expectation();
            }
            let rhs = (&f * &divergence(&u).unwrap()).expectation();
            assert!((lhs - rhs).abs() < 1e-12, "duality residual {}", lhs - rhs);
        }
    }

    #[test]
    fn generator_oracles() {
        let model = mixed_bernoulli(3);
        let x0 = Functional::coordinate(&model, 0).unwrap();
        let lx0 = generator_l(&x0);
        let oracle =
            Functional::from_fn(&model, |z, c| model.latent_value(z) - c[0] as f64).unwrap();
        assert!(lx0.max_abs_diff(&oracle) < 1e-14);

        // (X_0 - Z)(X_1 - Z) is a pure second chaos: LF = -2F
        let f = Functional::from_fn(&model, |z, c| {
            let zv = model.latent_value(z);
            (c[0] as f64 - zv) * (c[1] as f64 - zv)
        })
        .unwrap();
        assert!(generator_l(&f).max_abs_diff(&f.scale(-2.0)) < 1e-14);

        // σ(Z)-measurable functionals are in the kernel
        let zf = Functional::from_fn(&model, |z, _| model.latent_value(z).powi(2)).unwrap();
        assert!(generator_l(&zf).max_abs() < 1e-15);

        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..10 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            assert!(generator_l(&f).expectation().abs() < 1e-12);
        }
    }

    #[test]
    fn chaos_decomposition_invariants() {
        let model = mixed_bernoulli(3);
        let f = sum_and_pair(&model);
        let dec = chaos_decompose(&f).unwrap();
        assert_eq!(dec.components().len(), 4);
        // reconstruction
        assert!(dec.reconstruct().max_abs_diff(&f) < 1e-10);
        // π_0 = E[F|Z] = z + z²
        let pi0 = dec.projection(0).unwrap();
        let oracle = Functional::from_fn(&model, |z, _| {
            let zv = model.latent_value(z);
            zv + zv * zv
        })
        .unwrap();
        assert!(pi0.max_abs_diff(&oracle) < 1e-13);
        // π_1 = (X_0 - Z) + Z(X_1 - Z) + Z(X_2 - Z)
        let pi1_oracle = Functional::from_fn(&model, |z, c| {
            let zv = model.latent_value(z);
            (c[0] as f64 - zv) + zv * (c[1] as f64 - zv) + zv * (c[2] as f64 - zv)
        })
        .unwrap();
        assert!(dec.projection(1).unwrap().max_abs_diff(&pi1_oracle) < 1e-13);
        // no triple interaction
        assert!(dec.projection(3).unwrap().max_abs() < 1e-12);
        // eigen-relation and orthogonality
        for n in 0..=3 {
            let pin = dec.projection(n).unwrap();
            assert!(
                generator_l(pin).max_abs_diff(&pin.scale(-(n as f64))) < 1e-10
            );
            for k in 0..n {
                let pik = dec.projection(k).unwrap();
                assert!((pin * pik).expectation().abs() < 1e-10);
            }
            // idempotence
            let again = chaos_projector(pin, n).unwrap();
            assert!(again.max_abs_diff(pin) < 1e-10);
        }
        assert!(matches!(
            dec.projection(7),
            Err(Error::IndexOutOfRange { order: 7, components: 3 })
        ));
    }

    #[test]
    fn chaos_forms_agree_on_random_models() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..8 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            let dec = chaos_decompose(&f).unwrap();
            for n in 0..=model.n_components() {
                let composed = chaos_projector_composed(&f, n).unwrap();
                assert!(
                    dec.projection(n).unwrap().max_abs_diff(&composed) < 1e-12,
                    "order {n} disagrees"
                );
            }
            // Möbius iterated gradient vs sequential application
            let full = (1u64 << model.n_components()) - 1;
            for mask in 0..=full {
                let seq = iterated_gradient(&f, mask).unwrap();
                let moe = iterated_gradient_moebius(&f, mask).unwrap();
                assert!(seq.max_abs_diff(&moe) < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_l_oracles() {
        let model = mixed_bernoulli(3);
        // first chaos: L⁻¹F = -F
        let f1 = Functional::from_fn(&model, |z, c| c[0] as f64 - model.latent_value(z))
            .unwrap();
        assert!(inverse_l(&f1).unwrap().max_abs_diff(&f1.scale(-1.0)) < 1e-13);
        // second chaos: L⁻¹F = -F/2
        let f2 = Functional::from_fn(&model, |z, c| {
            let zv = model.latent_value(z);
            (c[0] as f64 - zv) * (c[1] as f64 - zv)
        })
        .unwrap();
        assert!(inverse_l(&f2).unwrap().max_abs_diff(&f2.scale(-0.5)) < 1e-13);
        // centered mixed functional: L(L⁻¹F) = F
        let f = sum_and_pair(&model);
        let centered = &f - &cond_exp_z(&f);
        let linv = inverse_l(&centered).unwrap();
        assert!(generator_l(&linv).max_abs_diff(&centered) < 1e-12);
        assert!(
            linv.cond_expectation_z().iter().all(|v| v.abs() < 1e-12)
        );
        // uncentered input is rejected
        assert!(matches!(inverse_l(&f), Err(Error::NotCentered(_))));
    }

    #[test]
    fn carre_du_champ_forms_agree_and_satisfy_dirichlet_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..15 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            let g = random_functional(&mut rng, &model);
            let gamma = carre_du_champ(&f, &g).unwrap();
            let gamma_diff = carre_du_champ_difference(&f, &g).unwrap();
            assert!(gamma.max_abs_diff(&gamma_diff) < 1e-12);
            // symmetry
            assert!(gamma.max_abs_diff(&carre_du_champ(&g, &f).unwrap()) < 1e-13);
            // E[Γ(F,G)] = -E[F·LG]
            let lhs = gamma.expectation();
            let rhs = -(&f * &generator_l(&g)).expectation();
            assert!((lhs - rhs).abs() < 1e-12);
            // Γ(F,F) ≥ 0 cellwise
            let gff = carre_du_champ(&f, &f).unwrap();
            assert!(gff.table().iter().all(|&v| v > -1e-12));
        }
        let model = mixed_bernoulli(2);
        let f = Functional::coordinate(&model, 0).unwrap();
        let other_model = mixed_bernoulli(2);
        let g = Functional::coordinate(&other_model, 0).unwrap();
        assert!(matches!(
            carre_du_champ(&f, &g),
            Err(Error::MismatchedModel)
        ));
    }

    #[test]
    fn difference_moments() {
        let model = mixed_bernoulli(3);
        let f = sum_and_pair(&model);
        // k=1 without absolute value is the gradient
        for a in 0..3 {
            let d1 = difference_moment(&f, a, 1, false).unwrap();
            assert!(d1.max_abs_diff(&gradient(&f, a).unwrap()) < 1e-14);
        }
        // 𝒢^a-measurable functional has zero differences
        let x1 = Functional::coordinate(&model, 1).unwrap();
        for k in 1..=4 {
            assert!(difference_moment(&x1, 0, k, true).unwrap().max_abs() < 1e-15);
        }
        // brute-force oracle for F = X_0, a = 0, k = 2:
        // value at (z, x_0) is E[(x_0 - X'_0)²] = resampling variance terms
        let x0 = Functional::coordinate(&model, 0).unwrap();
        let d2 = difference_moment(&x0, 0, 2, false).unwrap();
        let oracle = Functional::from_fn(&model, |z, c| {
            let zv = model.latent_value(z);
            let x = c[0] as f64;
            (1.0 - zv) * x * x + zv * (x - 1.0) * (x - 1.0)
        })
        .unwrap();
        assert!(d2.max_abs_diff(&oracle) < 1e-15);
        assert!(matches!(
            difference_moment(&f, 0, 0, false),
            Err(Error::ConditionFailed(_, _))
        ));
    }

    #[test]
    fn semigroup_properties() {
        let model = mixed_bernoulli(3);
        let f = sum_and_pair(&model);
        // P_0 = Id
        assert!(semigroup_pt(&f, 0.0).unwrap().max_abs_diff(&f) < 1e-13);
        // first chaos halves at t = ln 2
        let f1 = Functional::from_fn(&model, |z, c| c[0] as f64 - model.latent_value(z))
            .unwrap();
        assert!(
            semigroup_pt(&f1, 2f64.ln())
                .unwrap()
                .max_abs_diff(&f1.scale(0.5))
                < 1e-13
        );
        // semigroup property and conditional-mean preservation
        let p_s = semigroup_pt(&f, 0.4).unwrap();
        let p_st = semigroup_pt(&p_s, 0.9).unwrap();
        assert!(p_st.max_abs_diff(&semigroup_pt(&f, 1.3).unwrap()) < 1e-12);
        let ez_f = f.cond_expectation_z();
        let ez_p = semigroup_pt(&f, 1.0).unwrap().cond_expectation_z();
        for (a, b) in ez_f.iter().zip(&ez_p) {
            assert!((a - b).abs() < 1e-12);
        }
        // long-time limit is E[F|Z]
        let p_inf = semigroup_pt(&f, 40.0).unwrap();
        assert!(p_inf.max_abs_diff(&cond_exp_z(&f)) < 1e-12);
        assert!(matches!(semigroup_pt(&f, -0.1), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn spectral_and_product_semigroups_agree() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            for &t in &[0.0, 0.3, 1.0, 2.5] {
                let a = semigroup_pt(&f, t).unwrap();
                let b = semigroup_pt_product(&f, t).unwrap();
                assert!(a.max_abs_diff(&b) < 1e-12, "t = {t}");
            }
        }
    }

    #[test]
    fn semigroup_commutation_with_gradient() {
        // D_a P_t F = e^{-t} · ∏_{b≠a}(e^{-t}Id + (1-e^{-t})E_b) D_a F,
        // the spectral form of the gradient-semigroup commutation relation.
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        for _ in 0..6 {
            let model = Arc::new(random_model(&mut rng, 4, 3, 3));
            let f = random_functional(&mut rng, &model);
            for a in 0..model.n_components() {
                for &t in &[0.2, 1.0] {
                    let lhs = gradient(&semigroup_pt(&f, t).unwrap(), a).unwrap();
                    let w = (-t).exp();
                    let mut rhs = gradient(&f, a).unwrap();
                    for b in 0..model.n_components() {
                        if b != a {
                            let eb = cond_exp_excluding(&rhs, b).unwrap();
                            rhs = rhs.zip(&eb, |x, y| w * x + (1.0 - w) * y);
                        }
                    }
                    assert!(lhs.max_abs_diff(&rhs.scale(w)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inverse_l_matches_semigroup_quadrature() {
        // L⁻¹F = -∫₀^∞ P_t F dt, integrated cellwise to t = 40 with
        // adaptive Simpson through the product-form semigroup.
        let model = mixed_bernoulli(3);
        let f = sum_and_pair(&model);
        let centered = &f - &cond_exp_z(&f);
        let linv = inverse_l(&centered).unwrap();
        let n_cells = centered.table().len();
        for idx in 0..n_cells {
            let h = |t: f64| {
                semigroup_pt_product(&centered, t).unwrap().table()[idx]
            };
            let integral = crate::concentration::adaptive_simpson(&h, 0.0, 40.0, 1e-11);
            assert!(
                (-integral - linv.table()[idx]).abs() < 1e-8,
                "cell {idx}: quadrature {integral} vs spectral {}",
                linv.table()[idx]
            );
        }
    }
}
