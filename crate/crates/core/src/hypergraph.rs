//! Exchangeable 3-uniform hypergraphs: generators, motif counting, the
//! Hoeffding decompositions of subgraph counts, rate formulas and CLT
//! experiments.
//!
//! Two generators: the plain model draws every vertex triple independently
//! with probability `p`; the latent model first draws an Erdos-Renyi graph
//! `Z` with edge probability `q` and keeps a triple only when all three of
//! its 2-subsets are present in `Z` and an independent `p`-coin succeeds.
//! With `q = 1` the two laws coincide.

use std::collections::{BTreeMap, HashSet};

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::EmpiricalDistribution;
use crate::rngutil::{par_map_streams, stream_rng};

/// Injection-enumeration ceiling for motif placement.
const INJECTION_CAP: u64 = 10_000_000;
/// Subset-enumeration ceiling for the Hoeffding decomposition.
const DECOMPOSITION_CAP: u64 = 1_000_000;
/// Work ceiling (placements x samples) for experiments.
const EXPERIMENT_CAP: u64 = 2_000_000_000;

/// Combinadic index of the pair `{i, j}`, `i < j`.
pub fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    i + j * (j - 1) / 2
}

/// Combinadic index of the triple `{i, j, k}`, `i < j < k`.
pub fn triple_index(i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i < j && j < k);
    i + j * (j - 1) / 2 + k * (k - 1) * (k - 2) / 6
}

pub fn n_pairs(n: usize) -> usize {
    n * (n - 1) / 2
}

pub fn n_triples(n: usize) -> usize {
    n * (n - 1) * (n - 2) / 6
}

/// fixed-size bitset over pair or triple indices
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSet {
    words: Vec<u64>,
    len: usize,
}

impl BitSet {
    pub fn new(len: usize) -> Self {
        BitSet { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn full(len: usize) -> Self {
        let mut s = BitSet::new(len);
        for i in 0..len {
            s.set(i);
        }
        s
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// A small 3-uniform motif: vertex labels `0..vertices`, hyperedges as
/// sorted 3-subsets. Every vertex must lie in a hyperedge.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MotifDescriptor", into = "MotifDescriptor")]
pub struct Motif {
    vertices: usize,
    hyperedges: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MotifDescriptor {
    vertices: usize,
    hyperedges: Vec<[usize; 3]>,
}

impl TryFrom<MotifDescriptor> for Motif {
    type Error = Error;
    fn try_from(d: MotifDescriptor) -> Result<Motif> {
        Motif::new(d.vertices, d.hyperedges)
    }
}

impl From<Motif> for MotifDescriptor {
    fn from(m: Motif) -> MotifDescriptor {
        MotifDescriptor { vertices: m.vertices, hyperedges: m.hyperedges }
    }
}

impl Motif {
    pub fn new(vertices: usize, mut hyperedges: Vec<[usize; 3]>) -> Result<Motif> {
        let bad = |reason: String| Error::InvalidModel { path: "motif".into(), reason };
        if hyperedges.is_empty() {
            return Err(bad("no hyperedges".into()));
        }
        for e in &mut hyperedges {
            e.sort_unstable();
            if e[0] == e[1] || e[1] == e[2] || e[2] >= vertices {
                return Err(bad(format!("bad hyperedge {e:?}")));
            }
        }
        hyperedges.sort_unstable();
        if hyperedges.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("duplicate hyperedge".into()));
        }
        let mut touched = vec![false; vertices];
        for e in &hyperedges {
            for &v in e {
                touched[v] = true;
            }
        }
        if let Some(v) = touched.iter().position(|&t| !t) {
            return Err(bad(format!("isolated vertex {v}")));
        }
        Ok(Motif { vertices, hyperedges })
    }

    pub fn v(&self) -> usize {
        self.vertices
    }

    pub fn e(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[[usize; 3]] {
        &self.hyperedges
    }

    /// distinct 2-subsets contained in hyperedges
    pub fn pair_set(&self) -> Vec<[usize; 2]> {
        let mut pairs: Vec<[usize; 2]> = self
            .hyperedges
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [a, c], [b, c]])
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    pub fn e2(&self) -> usize {
        self.pair_set().len()
    }

    /// automorphism count by brute force over vertex permutations
    pub fn aut(&self) -> usize {
        let edges: HashSet<[usize; 3]> = self.hyperedges.iter().copied().collect();
        (0..self.vertices)
            .permutations(self.vertices)
            .filter(|perm| {
                self.hyperedges.iter().all(|&[a, b, c]| {
                    let mut img = [perm[a], perm[b], perm[c]];
                    img.sort_unstable();
                    edges.contains(&img)
                })
            })
            .count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn from_json(json: &str) -> Result<Motif> {
        Ok(serde_json::from_str(json)?)
    }

    // the library: smallest motifs with distinct (v, e, e2) triples

    pub fn single_hyperedge() -> Motif {
        Motif::new(3, vec![[0, 1, 2]]).expect("valid")
    }

    pub fn two_sharing_vertex() -> Motif {
        Motif::new(5, vec![[0, 1, 2], [0, 3, 4]]).expect("valid")
    }

    pub fn two_sharing_pair() -> Motif {
        Motif::new(4, vec![[0, 1, 2], [0, 1, 3]]).expect("valid")
    }

    pub fn triangle() -> Motif {
        Motif::new(4, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3]]).expect("valid")
    }

    pub fn by_name(name: &str) -> Result<Motif> {
        match name {
            "single-hyperedge" => Ok(Motif::single_hyperedge()),
            "two-sharing-vertex" => Ok(Motif::two_sharing_vertex()),
            "two-sharing-pair" => Ok(Motif::two_sharing_pair()),
            "triangle" => Ok(Motif::triangle()),
            other => Err(Error::InvalidModel {
                path: "motif".into(),
                reason: format!("unknown motif {other:?}"),
            }),
        }
    }
}

/// generation model tag
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelTag {
    G3,
    T3,
}

/// One sampled hypergraph: latent 2-subset indicators `Z` and hyperedge
/// indicators `X` over combinadic indices.
#[derive(Debug, Clone)]
pub struct HypergraphSample {
    pub n: usize,
    pub tag: ModelTag,
    pub z: BitSet,
    pub x: BitSet,
    pub p: f64,
    pub q: f64,
}

impl HypergraphSample {
    pub fn triple_present(&self, t: usize) -> bool {
        self.x.get(t)
    }

    /// all three 2-subsets of the triple `{i,j,k}` lie in Z
    pub fn pairs_in_z(&self, i: usize, j: usize, k: usize) -> bool {
        self.z.get(pair_index(i, j)) && self.z.get(pair_index(i, k)) && self.z.get(pair_index(j, k))
    }

    pub fn hyperedge_count(&self) -> usize {
        self.x.count()
    }
}

fn check_gen_params(n: usize, p: f64, q: f64) -> Result<()> {
    if n < 3 || !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidModel {
            path: "generator".into(),
            reason: format!("n = {n}, p = {p}, q = {q}"),
        });
    }
    Ok(())
}

pub fn gen_g3(n: usize, p: f64, rng: &mut impl Rng) -> Result<HypergraphSample> {
    check_gen_params(n, p, 1.0)?;
    let mut x = BitSet::new(n_triples(n));
    for t in 0..n_triples(n) {
        if rng.random::<f64>() < p {
            x.set(t);
        }
    }
    Ok(HypergraphSample { n, tag: ModelTag::G3, z: BitSet::full(n_pairs(n)), x, p, q: 1.0 })
}

pub fn gen_t3(n: usize, q: f64, p: f64, rng: &mut impl Rng) -> Result<HypergraphSample> {
    check_gen_params(n, p, q)?;
    let mut z = BitSet::new(n_pairs(n));
    for e in 0..n_pairs(n) {
        if rng.random::<f64>() < q {
            z.set(e);
        }
    }
    let mut x = BitSet::new(n_triples(n));
    // the p-coin is drawn for every triple so the RNG consumption does
    // not depend on Z
    for k in 2..n {
        for j in 1..k {
            for i in 0..j {
                let coin = rng.random::<f64>() < p;
                if coin
                    && z.get(pair_index(i, j))
                    && z.get(pair_index(i, k))
                    && z.get(pair_index(j, k))
                {
                    x.set(triple_index(i, j, k));
                }
            }
        }
    }
    Ok(HypergraphSample { n, tag: ModelTag::T3, z, x, p, q })
}

/// All distinct copies of a motif in `[n]`: each copy is the sorted list of
/// its hyperedge triple indices, with the corresponding pair-index list.
#[derive(Debug, Clone)]
pub struct Placements {
    pub copies: Vec<Vec<u32>>,
    pub copy_pairs: Vec<Vec<u32>>,
}

pub fn placements(motif: &Motif, n: usize) -> Result<Placements> {
    let v = motif.v();
    if v > n {
        return Err(Error::MotifTooLarge { motif: v, sample: n });
    }
    if (n as u64).pow(v as u32) > INJECTION_CAP {
        return Err(Error::BudgetExceeded(format!(
            "{n}^{v} injections exceed the placement cap"
        )));
    }
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut copies = Vec::new();
    let mut copy_pairs = Vec::new();
    let mut image = vec![0usize; v];
    let mut used = vec![false; n];
    enumerate_injections(motif, n, 0, &mut image, &mut used, &mut |image| {
        let mut triples: Vec<u32> = motif
            .hyperedges()
            .iter()
            .map(|&[a, b, c]| {
                let mut t = [image[a], image[b], image[c]];
                t.sort_unstable();
                triple_index(t[0], t[1], t[2]) as u32
            })
            .collect();
        triples.sort_unstable();
        if seen.insert(triples.clone()) {
            let mut pairs: Vec<u32> = motif
                .pair_set()
                .iter()
                .map(|&[a, b]| {
                    let (x, y) = (image[a].min(image[b]), image[a].max(image[b]));
                    pair_index(x, y) as u32
                })
                .collect();
            pairs.sort_unstable();
            copies.push(triples);
            copy_pairs.push(pairs);
        }
    });
    Ok(Placements { copies, copy_pairs })
}

fn enumerate_injections(
    motif: &Motif,
    n: usize,
    depth: usize,
    image: &mut Vec<usize>,
    used: &mut Vec<bool>,
    f: &mut impl FnMut(&[usize]),
) {
    if depth == motif.v() {
        f(image);
        return;
    }
    for target in 0..n {
        if !used[target] {
            used[target] = true;
            image[depth] = target;
            enumerate_injections(motif, n, depth + 1, image, used, f);
            used[target] = false;
        }
    }
}

fn copy_present(sample: &HypergraphSample, copy: &[u32]) -> bool {
    copy.iter().all(|&t| sample.x.get(t as usize))
}

fn copy_pairs_in_z(sample: &HypergraphSample, pairs: &[u32]) -> bool {
    pairs.iter().all(|&e| sample.z.get(e as usize))
}

/// `N_G`: injections of the motif whose image hyperedges are all present,
/// divided by the automorphism count.
pub fn count_motif(sample: &HypergraphSample, motif: &Motif) -> Result<u64> {
    let pl = placements(motif, sample.n)?;
    Ok(pl.copies.iter().filter(|c| copy_present(sample, c)).count() as u64)
}

/// `E[N_G | Z] = Σ_copies p^{e_G} 1{copy 2-subsets ⊆ Z}`.
pub fn conditional_mean_count(sample: &HypergraphSample, motif: &Motif, p: f64) -> Result<f64> {
    let pl = placements(motif, sample.n)?;
    let pe = p.powi(motif.e() as i32);
    Ok(pl
        .copy_pairs
        .iter()
        .filter(|pairs| copy_pairs_in_z(sample, pairs))
        .count() as f64
        * pe)
}

/// closed-form unconditional mean `(#placements)·p^{e_G}·q^{e2_G}`
pub fn mean_count(motif: &Motif, n: usize, p: f64, q: f64) -> Result<f64> {
    let pl = placements(motif, n)?;
    Ok(pl.copies.len() as f64 * p.powi(motif.e() as i32) * q.powi(motif.e2() as i32))
}

/// The Hoeffding decomposition of a motif count, per sample, plus the
/// totals of the three modified families.
#[derive(Debug, Clone)]
pub struct HoeffdingTerms {
    /// `J ↦ W_J` with `W_J = (Σ_{copies ⊇ J} p^{e-|J|} 1{(H∖J)⁽²⁾⊆Z}) ∏_{α∈J} Y_α`
    pub plain: BTreeMap<Vec<u32>, f64>,
    /// `Σ_J W_J^{[1]}`, the pure-Y family with deterministic `q`-weights
    pub modified_y: f64,
    /// `Σ_J W_J^{[2]} = E[N_G|Z] - E[N_G]`, the latent-only family
    pub modified_latent: f64,
    /// `Σ_J W_J^{[3]}`, the mixed family
    pub modified_mixed: f64,
    pub count: f64,
    pub conditional_mean: f64,
    pub mean: f64,
}

impl HoeffdingTerms {
    pub fn plain_sum(&self) -> f64 {
        self.plain.values().sum()
    }

    pub fn modified_sum(&self) -> f64 {
        self.modified_y + self.modified_latent + self.modified_mixed
    }
}

/// Both decompositions of `N_G`. The plain identity
/// `Σ_J W_J = N_G - E[N_G|Z]` is exact per sample; the modified identity
/// `Σ (W^[1] + W^[2] + W^[3]) = N_G - E[N_G]` follows by expanding the
/// latent indicators `1{...⊆Z}` over centered edge variables, which
/// telescopes: summing the mixed family over the latent subsets of a copy
/// gives `p^{e-|J|}(1{(H∖J)⁽²⁾⊆Z} - q^{|(H∖J)⁽²⁾|})∏Y_α` in closed form.
pub fn hoeffding_terms(sample: &HypergraphSample, motif: &Motif) -> Result<HoeffdingTerms> {
    let pl = placements(motif, sample.n)?;
    let e = motif.e();
    let terms = pl.copies.len() as u64 * (1u64 << e);
    if terms > DECOMPOSITION_CAP {
        return Err(Error::DecompositionTooLarge { terms: terms as u128, cap: DECOMPOSITION_CAP });
    }
    let p = sample.p;
    let q = sample.q;
    // per-triple centered value Y_α = X_α - p·1{α⁽²⁾ ⊆ Z}
    let y = |t: u32| -> f64 {
        let present = if sample.x.get(t as usize) { 1.0 } else { 0.0 };
        present - p * if triple_supported(sample, t) { 1.0 } else { 0.0 }
    };
    let mut weights: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut modified_y = 0.0;
    let mut modified_latent = 0.0;
    let mut modified_mixed = 0.0;
    for (copy, pairs) in pl.copies.iter().zip(&pl.copy_pairs) {
        // latent-only family: p^e (1{H⁽²⁾⊆Z} - q^{e2}) per copy
        let all_in_z = copy_pairs_in_z(sample, pairs);
        modified_latent += p.powi(e as i32)
            * ((if all_in_z { 1.0 } else { 0.0 }) - q.powi(pairs.len() as i32));
        for bits in 1u32..(1 << e) {
            let j = bits.count_ones() as usize;
            let sub: Vec<u32> = (0..e)
                .filter(|&i| bits & (1 << i) != 0)
                .map(|i| copy[i])
                .collect();
            // 2-subsets of the remaining hyperedges H∖J
            let mut rest_pairs: Vec<u32> = (0..e)
                .filter(|&i| bits & (1 << i) == 0)
                .flat_map(|i| triple_pairs(copy[i]))
                .collect();
            rest_pairs.sort_unstable();
            rest_pairs.dedup();
            let rest_in_z = rest_pairs.iter().all(|&pr| sample.z.get(pr as usize));
            let y_prod: f64 = sub.iter().map(|&t| y(t)).product();
            let base = p.powi((e - j) as i32);
            *weights.entry(sub).or_insert(0.0) +=
                base * if rest_in_z { 1.0 } else { 0.0 };
            let q_pow = q.powi(rest_pairs.len() as i32);
            modified_y += base * q_pow * y_prod;
            modified_mixed +=
                base * ((if rest_in_z { 1.0 } else { 0.0 }) - q_pow) * y_prod;
        }
    }
    let plain: BTreeMap<Vec<u32>, f64> = weights
        .into_iter()
        .map(|(sub, w)| {
            let y_prod: f64 = sub.iter().map(|&t| y(t)).product();
            (sub, w * y_prod)
        })
        .collect();
    Ok(HoeffdingTerms {
        plain,
        modified_y,
        modified_latent,
        modified_mixed,
        count: pl.copies.iter().filter(|c| copy_present(sample, c)).count() as f64,
        conditional_mean: p.powi(e as i32)
            * pl.copy_pairs.iter().filter(|pr| copy_pairs_in_z(sample, pr)).count() as f64,
        mean: pl.copies.len() as f64 * p.powi(e as i32) * q.powi(motif.e2() as i32),
    })
}

fn triple_supported(sample: &HypergraphSample, t: u32) -> bool {
    triple_pairs(t).iter().all(|&pr| sample.z.get(pr as usize))
}

/// decode a combinadic triple index into its three pair indices
fn triple_pairs(t: u32) -> [u32; 3] {
    let (i, j, k) = triple_vertices(t as usize);
    [pair_index(i, j) as u32, pair_index(i, k) as u32, pair_index(j, k) as u32]
}

fn triple_vertices(t: usize) -> (usize, usize, usize) {
    let mut k = 2;
    while (k + 1) * k * (k - 1) / 6 <= t {
        k += 1;
    }
    let rem = t - k * (k - 1) * (k - 2) / 6;
    let mut j = 1;
    while (j + 1) * j / 2 <= rem {
        j += 1;
    }
    (rem - j * (j - 1) / 2, j, k)
}

/// Convergence rate of the standardized motif count.
#[derive(Debug, Clone, Serialize)]
pub struct RateInfo {
    pub rate: f64,
    /// minimizing subhypergraph profile (v, e, e2)
    pub minimizer: (usize, usize, usize),
    /// true when the minimization family was relaxed to `e_H ≥ 1` because
    /// the motif has a single hyperedge
    pub relaxed_family: bool,
}

/// `(min over admissible H ⊆ G of n^{v_H} p^{e_H} q^{e2_H})^{-1/2}`. The
/// family is the hyperedge subsets with `e_H > 1` (including `G` itself);
/// for single-hyperedge motifs it is relaxed to `e_H ≥ 1`.
pub fn rate(motif: &Motif, n: usize, p: f64, q: f64) -> Result<RateInfo> {
    if n < motif.v() {
        return Err(Error::MotifTooLarge { motif: motif.v(), sample: n });
    }
    if !(p > 0.0 && p <= 1.0 && q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidModel {
            path: "rate".into(),
            reason: format!("p = {p}, q = {q} outside (0, 1]"),
        });
    }
    let relaxed = motif.e() == 1;
    let mut best: Option<(f64, (usize, usize, usize))> = None;
    for bits in 1u32..(1 << motif.e()) {
        let e_h = bits.count_ones() as usize;
        if e_h <= 1 && !relaxed {
            continue;
        }
        let edges: Vec<[usize; 3]> = (0..motif.e())
            .filter(|&i| bits & (1 << i) != 0)
            .map(|i| motif.hyperedges()[i])
            .collect();
        let sub = Motif::new(motif.v(), edges.clone());
        // relabel to drop vertices outside the subset
        let mut verts: Vec<usize> = edges.iter().flatten().copied().collect();
        verts.sort_unstable();
        verts.dedup();
        let v_h = verts.len();
        let mut pairs: Vec<[usize; 2]> = edges
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [a, c], [b, c]])
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let e2_h = pairs.len();
        drop(sub);
        let value = (n as f64).powi(v_h as i32) * p.powi(e_h as i32) * q.powi(e2_h as i32);
        if best.is_none_or(|(b, _)| value < b) {
            best = Some((value, (v_h, e_h, e2_h)));
        }
    }
    let (value, minimizer) = best.ok_or(Error::EmptyFamily)?;
    Ok(RateInfo { rate: value.powf(-0.5), minimizer, relaxed_family: relaxed })
}

/// One row of a CLT experiment table; maps onto the CSV schema
/// `motif_id,n,p,q,samples,seed,mean,var,dw_empirical,rate,ratio`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub motif_id: String,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub samples: usize,
    pub seed: u64,
    pub mean: f64,
    pub var: f64,
    pub dw_empirical: f64,
    pub rate: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    pub relaxed_rate_family: bool,
}

/// Sample the centered statistic `N_G - E[N_G|Z]` at each schedule point,
/// standardize by the Monte Carlo variance, and report the empirical
/// 1-Wasserstein distance to the standard normal next to the rate formula.
pub fn clt_experiment(
    motif: &Motif,
    motif_id: &str,
    schedule: &[(usize, f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<ExperimentTable> {
    if samples < 10_000 {
        return Err(Error::ConditionFailed(
            "at least 10^4 samples for the variance estimate",
            format!("{samples}"),
        ));
    }
    let mut rows = Vec::new();
    let mut relaxed = false;
    for (row_idx, &(n, p, q)) in schedule.iter().enumerate() {
        let pl = placements(motif, n)?;
        if pl.copies.len() as u64 * samples as u64 > EXPERIMENT_CAP {
            return Err(Error::BudgetExceeded(format!(
                "{} placements x {samples} samples",
                pl.copies.len()
            )));
        }
        let e = motif.e() as i32;
        let pe = p.powi(e);
        // one RNG stream per sample, keyed off the row, so results do not
        // depend on the worker count
        let values: Vec<f64> = par_map_streams(seed, samples as u64, |s, _| {
            let mut rng = stream_rng(seed, ((row_idx as u64) << 32) | s);
            let sample = if q >= 1.0 {
                gen_g3(n, p, &mut rng).expect("params validated")
            } else {
                gen_t3(n, q, p, &mut rng).expect("params validated")
            };
            let mut count = 0u64;
            let mut supported = 0u64;
            for (copy, pairs) in pl.copies.iter().zip(&pl.copy_pairs) {
                if copy_present(&sample, copy) {
                    count += 1;
                }
                if copy_pairs_in_z(&sample, pairs) {
                    supported += 1;
                }
            }
            count as f64 - pe * supported as f64
        });
        let mean = values.iter().sum::<f64>() / samples as f64;
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / samples as f64;
        if var <= 0.0 {
            return Err(Error::DegenerateVariance {
                label: format!("centered count at n = {n}, p = {p}, q = {q}"),
            });
        }
        let sd = var.sqrt();
        let standardized: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
        let dw = EmpiricalDistribution::new(standardized)?.w1_to_std_normal();
        let info = rate(motif, n, p, q)?;
        relaxed = info.relaxed_family;
        rows.push(ExperimentRow {
            motif_id: motif_id.to_string(),
            n,
            p,
            q,
            samples,
            seed,
            mean,
            var,
            dw_empirical: dw,
            rate: info.rate,
            ratio: dw / info.rate,
        });
    }
    Ok(ExperimentTable { rows, relaxed_rate_family: relaxed })
}
