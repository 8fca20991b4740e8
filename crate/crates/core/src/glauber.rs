//! Continuous-time Glauber refresh dynamics whose generator is `L`.
//!
//! Jumps arrive as a Poisson process at rate `m + 1` where `m` is the
//! number of components. At each jump an index is drawn uniformly from the
//! components plus a cemetery symbol `∂`; a component index refreshes that
//! coordinate from its conditional law given `Z`, a `∂` event changes
//! nothing. The latent state never moves, so each path explores a single
//! fiber. Endpoint averages estimate `P_t F` and are cross-validated
//! against the exact spectral semigroup.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Functional, ProductModel};
use crate::rngutil;

/// One jump of the dynamics. `index = None` encodes the `∂` event, which
/// leaves the state untouched; otherwise `value` is the refreshed value
/// index of the chosen coordinate.
#[derive(Debug, Clone, Serialize)]
pub struct GlauberEvent {
    pub time: f64,
    pub index: Option<usize>,
    pub value: Option<usize>,
}

/// A full event history on `[0, horizon]`.
#[derive(Debug, Clone, Serialize)]
pub struct GlauberPath {
    pub latent: usize,
    pub start: Vec<usize>,
    pub horizon: f64,
    pub events: Vec<GlauberEvent>,
}

impl GlauberPath {
    /// Configuration at the horizon.
    pub fn endpoint(&self) -> Vec<usize> {
        let mut state = self.start.clone();
        for e in &self.events {
            if let (Some(a), Some(v)) = (e.index, e.value) {
                state[a] = v;
            }
        }
        state
    }
}

/// Simulate one path started from `(latent, start)` up to time `horizon`,
/// recording every event including the no-op `∂` jumps.
pub fn simulate_path(
    model: &ProductModel,
    latent: usize,
    start: &[usize],
    horizon: f64,
    rng: &mut impl Rng,
) -> Result<GlauberPath> {
    if !(horizon >= 0.0) {
        return Err(Error::NegativeTime(horizon));
    }
    let m = model.n_components();
    let rate = (m + 1) as f64;
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp_draw(rate, rng);
        if t > horizon {
            break;
        }
        let idx = rng.random_range(0..=m);
        if idx < m {
            let v = model.resample_component(latent, idx, rng);
            events.push(GlauberEvent { time: t, index: Some(idx), value: Some(v) });
        } else {
            events.push(GlauberEvent { time: t, index: None, value: None });
        }
    }
    Ok(GlauberPath { latent, start: start.to_vec(), horizon, events })
}

fn exp_draw(rate: f64, rng: &mut impl Rng) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Evolve only the endpoint, without materializing the event list.
fn evolve_endpoint(
    model: &ProductModel,
    latent: usize,
    state: &mut [usize],
    horizon: f64,
    rng: &mut impl Rng,
) {
    let m = model.n_components();
    let rate = (m + 1) as f64;
    let mut t = exp_draw(rate, rng);
    while t <= horizon {
        let idx = rng.random_range(0..=m);
        if idx < m {
            state[idx] = model.resample_component(latent, idx, rng);
        }
        t += exp_draw(rate, rng);
    }
}

/// Monte Carlo estimate of `P_t F` at one start state.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PtEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Estimate `P_t F` for every start cell `(z, configuration)` from `paths`
/// independent paths per cell. Cell `(z, ci)` uses RNG stream
/// `z * n_configs + ci`, so results are bit-exact for a fixed seed
/// regardless of the worker count. Returned in cell order.
pub fn estimate_pt(f: &Functional, t: f64, paths: u64, seed: u64) -> Result<Vec<PtEstimate>> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if paths == 0 {
        return Err(Error::ConditionFailed("paths >= 1", "got 0".into()));
    }
    let model = f.model().clone();
    let n_configs = model.config_count()?;
    let n_cells = n_configs * model.n_latent() as u64;
    let out = rngutil::par_map_streams(seed, n_cells, |cell, mut rng| {
        let z = (cell / n_configs) as usize;
        let ci = cell % n_configs;
        let start = model.config_of(ci);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut state = vec![0usize; start.len()];
        for _ in 0..paths {
            state.copy_from_slice(&start);
            evolve_endpoint(&model, z, &mut state, t, &mut rng);
            let v = f.at(z, model.config_index(&state));
            sum += v;
            sumsq += v * v;
        }
        let n = paths as f64;
        let mean = sum / n;
        let var = ((sumsq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        PtEstimate { estimate: mean, std_error: (var / n).sqrt() }
    });
    Ok(out)
}
