//! Command-line harness: one subcommand per verification suite or
//! experiment, with seeded reproducibility and JSON/CSV emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use condcalc::concentration::{
    conditional_covariance, covariance_malliavin, efron_stein_check, mcdiarmid_check,
};
use condcalc::glauber::estimate_pt;
use condcalc::hypergraph::{clt_experiment, Motif};
use condcalc::model::{random_functional, random_model, Functional, SimpleProcess};
use condcalc::normal::{clt_bernoulli_experiment, general_w1_bound, standardize};
use condcalc::ops::{
    chaos_decompose, chaos_projector, chaos_projector_composed, cond_exp_excluding, cond_exp_z,
    divergence, generator_l, gradient, inverse_l,
};
use condcalc::rngutil::{pool, stream_rng};
use condcalc::ustat::{
    dejong_quantities, fourth_moment_report, hermite_identity_gap, standardized_degenerate_sum,
    Coefficient,
};
use condcalc::{fixtures, ops};

#[derive(Parser)]
#[command(name = "condcalc", version, about = "verification suites and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// RNG seed
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// output path (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// JSON file providing defaults for the numeric flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Operator identities on random models
    VerifyOperators {
        #[arg(long)]
        models: Option<usize>,
    },
    /// Chaos decomposition invariants
    Chaos {
        #[arg(long)]
        models: Option<usize>,
    },
    /// Monte Carlo Glauber dynamics against the spectral semigroup
    Glauber {
        #[arg(long)]
        paths: Option<u64>,
        /// comma-separated time grid
        #[arg(long)]
        times: Option<String>,
    },
    /// Covariance identities and concentration inequalities
    Concentration {
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        functionals: Option<usize>,
    },
    /// Conditional Bernoulli CLT with the explicit Berry-Esseen-type bound
    CltBernoulli {
        /// comma-separated sample sizes
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Wasserstein bound dominance on random standardized functionals
    WassBounds {
        #[arg(long)]
        models: Option<usize>,
    },
    /// Fourth-moment and influence inequalities on homogeneous-sum chaoses
    FourthMoment {
        #[arg(long)]
        models: Option<usize>,
    },
    /// De Jong quantities for homogeneous-sum chaoses
    Dejong {
        #[arg(long)]
        models: Option<usize>,
    },
    /// Motif-count CLT experiment on random hypergraphs
    HypergraphMotif {
        /// library name or path to a motif JSON file
        #[arg(long)]
        motif: Option<String>,
        /// comma-separated vertex counts
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Serialize)]
struct Metadata {
    version: String,
    seed: u64,
    workers: usize,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct Check {
    label: String,
    value: f64,
    bound: f64,
    pass: bool,
}

impl Check {
    /// `value` must not exceed `bound`
    fn at_most(label: impl Into<String>, value: f64, bound: f64) -> Check {
        Check { label: label.into(), value, bound, pass: value <= bound }
    }

    fn holds(label: impl Into<String>, ok: bool) -> Check {
        Check { label: label.into(), value: f64::from(u8::from(ok)), bound: 1.0, pass: ok }
    }
}

#[derive(Serialize)]
struct Report {
    command: String,
    metadata: Metadata,
    pass: bool,
    checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<Vec<String>>,
}

fn main() -> ExitCode {
    // usage errors exit 1; code 2 is reserved for assertion failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let started = Instant::now();
    let seed = cli.seed;
    let outcome = pool(cli.workers).install(|| run(&cli.cmd, &config, seed));
    let (command, checks, rows, notes) = match outcome {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let pass = checks.iter().all(|c| c.pass);
    let report = Report {
        command,
        metadata: Metadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            workers: cli.workers,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        pass,
        checks,
        rows,
        notes,
    };
    let rendered = match cli.format {
        Format::Json => serde_json::to_string_pretty(&report).expect("serializable"),
        Format::Csv => render_csv(&report),
    };
    let emitted = match &cli.out {
        Some(path) => std::fs::write(path, rendered + "\n").map_err(|e| format!("{path:?}: {e}")),
        None => {
            println!("{rendered}");
            Ok(())
        }
    };
    if let Err(msg) = emitted {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        // failure report always lands on stdout as JSON for machine use
        if cli.out.is_some() || matches!(cli.format, Format::Csv) {
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
        ExitCode::from(2)
    }
}

fn load_config(path: Option<&Path>) -> Result<serde_json::Value, String> {
    match path {
        None => Ok(serde_json::Value::Null),
        Some(p) => {
            let raw = std::fs::read_to_string(p)
                .map_err(|e| format!("config {}: {e}", p.display()))?;
            serde_json::from_str(&raw).map_err(|e| format!("config {}: {e}", p.display()))
        }
    }
}

fn cfg_u64(config: &serde_json::Value, key: &str) -> Option<u64> {
    config.get(key).and_then(|v| v.as_u64())
}

fn cfg_f64(config: &serde_json::Value, key: &str) -> Option<f64> {
    config.get(key).and_then(|v| v.as_f64())
}

fn cfg_str(config: &serde_json::Value, key: &str) -> Option<String> {
    config.get(key).and_then(|v| v.as_str()).map(str::to_string)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|tok| tok.trim().parse::<T>().map_err(|_| format!("bad {what}: {tok:?}")))
        .collect()
}

type Suite = (String, Vec<Check>, Option<serde_json::Value>, Option<Vec<String>>);

fn run(cmd: &Cmd, config: &serde_json::Value, seed: u64) -> Result<Suite, String> {
    match cmd {
        Cmd::VerifyOperators { models } => {
            let models = models
                .or(cfg_u64(config, "models").map(|v| v as usize))
                .unwrap_or(100);
            Ok(verify_operators(models, seed))
        }
        Cmd::Chaos { models } => {
            let models =
                models.or(cfg_u64(config, "models").map(|v| v as usize)).unwrap_or(25);
            Ok(chaos_suite(models, seed))
        }
        Cmd::Glauber { paths, times } => {
            let paths = paths.or(cfg_u64(config, "paths")).unwrap_or(20_000);
            let times = times
                .clone()
                .or(cfg_str(config, "times"))
                .unwrap_or_else(|| "0.5,1,2".into());
            let times: Vec<f64> = parse_list(&times, "time")?;
            Ok(glauber_suite(paths, &times, seed))
        }
        Cmd::Concentration { pairs, functionals } => {
            let pairs =
                pairs.or(cfg_u64(config, "pairs").map(|v| v as usize)).unwrap_or(100);
            let functionals = functionals
                .or(cfg_u64(config, "functionals").map(|v| v as usize))
                .unwrap_or(20);
            Ok(concentration_suite(pairs, functionals, seed))
        }
        Cmd::CltBernoulli { n, samples } => {
            let ns = n
                .clone()
                .or(cfg_str(config, "n"))
                .unwrap_or_else(|| "64,256,1024".into());
            let ns: Vec<u64> = parse_list(&ns, "sample size")?;
            let samples = samples.or(cfg_u64(config, "samples")).unwrap_or(200_000);
            clt_bernoulli_suite(&ns, samples, seed)
        }
        Cmd::WassBounds { models } => {
            let models =
                models.or(cfg_u64(config, "models").map(|v| v as usize)).unwrap_or(50);
            Ok(wass_bounds_suite(models, seed))
        }
        Cmd::FourthMoment { models } => {
            let models =
                models.or(cfg_u64(config, "models").map(|v| v as usize)).unwrap_or(50);
            fourth_moment_suite(models, seed)
        }
        Cmd::Dejong { models } => {
            let models =
                models.or(cfg_u64(config, "models").map(|v| v as usize)).unwrap_or(10);
            dejong_suite(models, seed)
        }
        Cmd::HypergraphMotif { motif, n, p, q, samples } => {
            let motif_arg = motif
                .clone()
                .or(cfg_str(config, "motif"))
                .unwrap_or_else(|| "single-hyperedge".into());
            let ns =
                n.clone().or(cfg_str(config, "n")).unwrap_or_else(|| "10,20,40".into());
            let ns: Vec<usize> = parse_list(&ns, "vertex count")?;
            let p = p.or(cfg_f64(config, "p")).unwrap_or(0.3);
            let q = q.or(cfg_f64(config, "q")).unwrap_or(1.0);
            let samples = samples
                .or(cfg_u64(config, "samples").map(|v| v as usize))
                .unwrap_or(20_000);
            hypergraph_suite(&motif_arg, &ns, p, q, samples, seed)
        }
    }
}

fn verify_operators(models: usize, seed: u64) -> Suite {
    let mut worst = [0.0f64; 4];
    for i in 0..models {
        let mut rng = stream_rng(seed, i as u64);
        let model = Arc::new(random_model(&mut rng, 6, 3, 3));
        let f = random_functional(&mut rng, &model);
        for a in 0..model.n_components() {
            let da = gradient(&f, a).expect("index in range");
            worst[0] = worst[0].max(gradient(&da, a).expect("valid").max_abs_diff(&da));
            worst[1] = worst[1].max(cond_exp_excluding(&da, a).expect("valid").max_abs());
            for b in a + 1..model.n_components() {
                let ab = gradient(&gradient(&f, b).expect("valid"), a).expect("valid");
                let ba = gradient(&da, b).expect("valid");
                worst[2] = worst[2].max(ab.max_abs_diff(&ba));
            }
        }
        // integration by parts: E[F δu] = Σ_a E[(D_a F) u_a]
        let entries: Vec<Functional> = (0..model.n_components())
            .map(|_| random_functional(&mut rng, &model))
            .collect();
        let u = SimpleProcess::new(entries.clone()).expect("one entry per component");
        let lhs = (&f * &divergence(&u).expect("valid")).expectation();
        let rhs: f64 = entries
            .iter()
            .enumerate()
            .map(|(a, ua)| (&gradient(&f, a).expect("valid") * ua).expectation())
            .sum();
        worst[3] = worst[3].max((lhs - rhs).abs());
    }
    let labels = [
        "gradient idempotence",
        "E[D_a F | G^a] = 0",
        "gradient commutation",
        "integration by parts",
    ];
    let checks = labels
        .iter()
        .zip(worst)
        .map(|(l, w)| Check::at_most(format!("{l} (max residual, {models} models)"), w, 1e-12))
        .collect();
    ("verify-operators".into(), checks, None, None)
}

fn chaos_suite(models: usize, seed: u64) -> Suite {
    let mut worst = [0.0f64; 6];
    for i in 0..models {
        let mut rng = stream_rng(seed, i as u64);
        let model = Arc::new(random_model(&mut rng, 5, 3, 3));
        let f = random_functional(&mut rng, &model);
        let dec = chaos_decompose(&f).expect("within cap");
        worst[0] = worst[0].max(dec.reconstruct().max_abs_diff(&f));
        for n in 0..=dec.max_order() {
            let pin = dec.projection(n).expect("order in range");
            worst[1] = worst[1]
                .max(chaos_projector(pin, n).expect("valid").max_abs_diff(pin));
            worst[2] = worst[2]
                .max(generator_l(pin).max_abs_diff(&pin.scale(-(n as f64))));
            for m in 0..n {
                let pm = dec.projection(m).expect("order in range");
                worst[3] = worst[3].max((pin * pm).expectation().abs());
            }
            worst[5] = worst[5].max(
                chaos_projector_composed(&f, n)
                    .expect("valid")
                    .max_abs_diff(chaos_projector(&f, n).as_ref().expect("valid")),
            );
        }
        let centered = &f - &cond_exp_z(&f);
        let linv = inverse_l(&centered).expect("centered");
        worst[4] = worst[4].max(generator_l(&linv).max_abs_diff(&centered));
    }
    let specs = [
        ("reconstruction", 1e-10),
        ("projector idempotence", 1e-10),
        ("eigen relation", 1e-10),
        ("orthogonality", 1e-10),
        ("L o L^-1 = Id", 1e-10),
        ("aggregated vs composed projector", 1e-12),
    ];
    let checks = specs
        .iter()
        .zip(worst)
        .map(|((l, tol), w)| {
            Check::at_most(format!("{l} (max residual, {models} models)"), w, *tol)
        })
        .collect();
    ("chaos".into(), checks, None, None)
}

fn glauber_suite(paths: u64, times: &[f64], seed: u64) -> Suite {
    let model = fixtures::mixed_bernoulli(3);
    let f = fixtures::sum_and_pair(&model);
    let mut checks = Vec::new();
    let n_configs = model.config_count().expect("small model") as usize;
    for &t in times {
        let est = estimate_pt(&f, t, paths, seed).expect("valid time");
        let exact = ops::semigroup_pt(&f, t).expect("valid time");
        let mut worst = 0.0f64;
        for (cell, e) in est.iter().enumerate() {
            let z = cell / n_configs;
            let ci = cell % n_configs;
            let diff = (e.estimate - exact.at(z, ci as u64)).abs();
            worst = worst.max(diff / e.std_error.max(1e-12));
        }
        checks.push(Check::at_most(
            format!("P_t at t = {t}: max |MC - spectral| in std errors"),
            worst,
            4.0,
        ));
    }
    // ergodic limit: at t = 20 every start relaxes to E[F | Z]
    let est = estimate_pt(&f, 20.0, paths, seed).expect("valid time");
    let limit = cond_exp_z(&f);
    let mut worst = 0.0f64;
    for (cell, e) in est.iter().enumerate() {
        let z = cell / n_configs;
        let ci = cell % n_configs;
        let diff = (e.estimate - limit.at(z, ci as u64)).abs();
        worst = worst.max(diff / e.std_error.max(1e-12));
    }
    checks.push(Check::at_most(
        "ergodic limit at t = 20 in std errors",
        worst,
        4.0,
    ));
    ("glauber".into(), checks, None, None)
}

fn concentration_suite(pairs: usize, functionals: usize, seed: u64) -> Suite {
    let mut worst_cov = 0.0f64;
    for i in 0..pairs {
        let mut rng = stream_rng(seed, i as u64);
        let model = Arc::new(random_model(&mut rng, 5, 3, 3));
        let f = random_functional(&mut rng, &model);
        let g = random_functional(&mut rng, &model);
        let direct = conditional_covariance(&f, &g).expect("same model");
        let malliavin = covariance_malliavin(&f, &g).expect("same model");
        for (a, b) in direct.iter().zip(&malliavin) {
            worst_cov = worst_cov.max((a - b).abs());
        }
    }
    let mut min_slack = f64::INFINITY;
    let mut mcdiarmid_ok = true;
    for i in 0..functionals {
        let mut rng = stream_rng(seed, 1_000 + i as u64);
        let model = Arc::new(random_model(&mut rng, 5, 3, 3));
        let f = random_functional(&mut rng, &model);
        for rec in efron_stein_check(&f, "random").records {
            min_slack = min_slack.min(rec.slack);
        }
        let report = mcdiarmid_check(&f, &[0.5, 1.0, 2.0, 3.0], "random")
            .expect("positive thresholds");
        mcdiarmid_ok &= report.pass;
    }
    let checks = vec![
        Check::at_most(
            format!("covariance representation (max residual, {pairs} pairs)"),
            worst_cov,
            1e-10,
        ),
        Check::at_most(
            format!("Efron-Stein (negated min slack, {functionals} functionals)"),
            -min_slack,
            1e-10,
        ),
        Check::holds(
            format!("McDiarmid tails at x in {{0.5,1,2,3}} ({functionals} functionals)"),
            mcdiarmid_ok,
        ),
    ];
    ("concentration".into(), checks, None, None)
}

fn clt_bernoulli_suite(ns: &[u64], samples: u64, seed: u64) -> Result<Suite, String> {
    let zs = [0.3, 0.5, 0.7];
    let probs = [1.0 / 3.0; 3];
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for &n in ns {
        let row = clt_bernoulli_experiment(&zs, &probs, n, samples, seed)
            .map_err(|e| e.to_string())?;
        checks.push(Check::at_most(
            format!("empirical d_W vs explicit bound at n = {n}"),
            row.empirical_dw,
            row.bound,
        ));
        rows.push(row);
    }
    let rows_json = serde_json::to_value(&rows).expect("serializable");
    Ok(("clt-bernoulli".into(), checks, Some(rows_json), None))
}

fn wass_bounds_suite(models: usize, seed: u64) -> Suite {
    let mut min_margin = f64::INFINITY;
    let mut min_margin_var = f64::INFINITY;
    for i in 0..models {
        let mut rng = stream_rng(seed, i as u64);
        let model = Arc::new(random_model(&mut rng, 8, 3, 3));
        let raw = random_functional(&mut rng, &model);
        let centered = &raw - &cond_exp_z(&raw);
        let Ok(f) = standardize(&centered) else {
            continue; // degenerate draw
        };
        let b = general_w1_bound(&f).expect("standardized");
        min_margin = min_margin.min(b.total - b.exact_dw);
        min_margin_var = min_margin_var.min(b.variance_variant - b.exact_dw);
    }
    let checks = vec![
        Check::at_most(
            format!("bound total vs exact d_W (negated min margin, {models} models)"),
            -min_margin,
            1e-9,
        ),
        Check::at_most(
            format!("variance variant vs exact d_W (negated min margin, {models} models)"),
            -min_margin_var,
            1e-9,
        ),
    ];
    ("wass-bounds".into(), checks, None, None)
}

/// Random pure-chaos homogeneous sum on a conditional Bernoulli model.
fn random_chaos(
    seed: u64,
    index: u64,
) -> Result<(Functional, Vec<condcalc::ustat::DegenerateUStat>, usize), String> {
    use condcalc::model::{ComponentSpace, LatentSpace, LatentState, ProductModel};
    use itertools::Itertools;
    use rand::Rng;
    let mut rng = stream_rng(seed, index);
    let m = rng.random_range(4..=6);
    let p = rng.random_range(1..=2usize);
    let params = [rng.random_range(0.2..0.5), rng.random_range(0.5..0.8)];
    let states = params
        .iter()
        .map(|&z| LatentState { label: format!("z={z}"), value: Some(z) })
        .collect();
    let latent = LatentSpace::new(states, vec![0.5, 0.5]).map_err(|e| e.to_string())?;
    let model = Arc::new(
        ProductModel::new(latent, vec![ComponentSpace::bernoulli(&params); m])
            .map_err(|e| e.to_string())?,
    );
    let supports: Vec<Vec<usize>> = (0..m).combinations(p).collect();
    let count = rng.random_range(2..=4.min(supports.len()));
    let mut terms = Vec::new();
    while terms.len() < count {
        let s = supports[rng.random_range(0..supports.len())].clone();
        if !terms.iter().any(|(t, _): &(Vec<usize>, Coefficient)| *t == s) {
            let c = rng.random_range(0.2..1.5)
                * if rng.random::<bool>() { 1.0 } else { -1.0 };
            terms.push((s, Coefficient::Const(c)));
        }
    }
    let (f, comps) = standardized_degenerate_sum(&model, &terms).map_err(|e| e.to_string())?;
    Ok((f, comps, p))
}

fn fourth_moment_suite(models: usize, seed: u64) -> Result<Suite, String> {
    let mut worst_prop = f64::NEG_INFINITY;
    let mut worst_infl = f64::NEG_INFINITY;
    let mut worst_hermite = 0.0f64;
    for i in 0..models {
        let (f, comps, p) = random_chaos(seed, i as u64)?;
        let r = fourth_moment_report(&f, &comps).map_err(|e| e.to_string())?;
        let prop_bound =
            (p * p) as f64 / 3.0 * r.fourth_moment_gap + p as f64 / 12.0 * r.delta4;
        worst_prop = worst_prop.max(r.var_gamma - prop_bound);
        worst_infl = worst_infl.max(r.delta4 - 16.0 * p as f64 * r.connected_sum);
        worst_hermite =
            worst_hermite.max(hermite_identity_gap(&f, p).map_err(|e| e.to_string())?);
    }
    let checks = vec![
        Check::at_most(
            format!("fourth-moment inequality (max excess, {models} chaoses)"),
            worst_prop,
            1e-10,
        ),
        Check::at_most(
            format!("influence inequality (max excess, {models} chaoses)"),
            worst_infl,
            1e-10,
        ),
        Check::at_most(
            format!("Hermite second-moment identity (max residual, {models} chaoses)"),
            worst_hermite,
            1e-9,
        ),
    ];
    Ok(("fourth-moment".into(), checks, None, None))
}

fn dejong_suite(models: usize, seed: u64) -> Result<Suite, String> {
    let mut rows = Vec::new();
    let mut all_finite = true;
    for i in 0..models {
        let (f, comps, _) = random_chaos(seed, i as u64)?;
        let d = dejong_quantities(&f, &comps).map_err(|e| e.to_string())?;
        all_finite &= d.dejong1_explicit.is_finite()
            && d.rho.is_finite()
            && d.dejong2_radicand.is_finite()
            && d.dejong2_radicand >= 0.0;
        rows.push(d);
    }
    let checks = vec![Check::holds(
        format!("De Jong quantities finite and admissible ({models} chaoses)"),
        all_finite,
    )];
    let rows_json = serde_json::to_value(&rows).expect("serializable");
    Ok(("dejong".into(), checks, Some(rows_json), None))
}

fn hypergraph_suite(
    motif_arg: &str,
    ns: &[usize],
    p: f64,
    q: f64,
    samples: usize,
    seed: u64,
) -> Result<Suite, String> {
    let motif = if motif_arg.ends_with(".json") {
        if !Path::new(motif_arg).exists() {
            return Err(format!("motif file not found: {motif_arg}"));
        }
        let raw = std::fs::read_to_string(motif_arg).map_err(|e| format!("{motif_arg}: {e}"))?;
        Motif::from_json(&raw).map_err(|e| e.to_string())?
    } else {
        Motif::by_name(motif_arg).map_err(|e| e.to_string())?
    };
    let schedule: Vec<(usize, f64, f64)> = ns.iter().map(|&n| (n, p, q)).collect();
    let table =
        clt_experiment(&motif, motif_arg, &schedule, samples, seed).map_err(|e| e.to_string())?;
    let decreasing = table
        .rows
        .windows(2)
        .all(|w| w[1].dw_empirical < w[0].dw_empirical);
    let ratios: Vec<f64> = table.rows.iter().map(|r| r.ratio).collect();
    let spread = ratios.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        / ratios.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let checks = vec![
        Check::holds("empirical d_W strictly decreasing along n", decreasing),
        Check::at_most("empirical/rate ratio spread across schedule", spread, 3.0),
    ];
    let notes = vec![format!(
        "rate family: e_H > 1{}",
        if table.relaxed_rate_family { ", relaxed to e_H >= 1 (single hyperedge)" } else { "" }
    )];
    let rows_json = serde_json::to_value(&table.rows).expect("serializable");
    Ok(("hypergraph-motif".into(), checks, Some(rows_json), Some(notes)))
}

/// CSV: metadata as `#`-prefixed header lines, then the data rows (the
/// experiment rows when present, the checks otherwise).
fn render_csv(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# command={} version={} seed={} workers={} wall_time_s={:.3} pass={}",
        report.command,
        report.metadata.version,
        report.metadata.seed,
        report.metadata.workers,
        report.metadata.wall_time_s,
        report.pass
    );
    if let Some(notes) = &report.notes {
        for n in notes {
            let _ = writeln!(out, "# {n}");
        }
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    match &report.rows {
        Some(serde_json::Value::Array(rows)) if !rows.is_empty() => {
            if let Some(serde_json::Value::Object(first)) = rows.first() {
                let headers: Vec<&String> = first.keys().collect();
                wtr.write_record(&headers).expect("csv record");
                for row in rows {
                    if let serde_json::Value::Object(map) = row {
                        let rec: Vec<String> = headers
                            .iter()
                            .map(|h| match &map[h.as_str()] {
                                serde_json::Value::String(s) => s.clone(),
                                v => v.to_string(),
                            })
                            .collect();
                        wtr.write_record(&rec).expect("csv record");
                    }
                }
            }
        }
        _ => {
            wtr.write_record(["label", "value", "bound", "pass"]).expect("csv record");
            for c in &report.checks {
                wtr.write_record([
                    c.label.clone(),
                    c.value.to_string(),
                    c.bound.to_string(),
                    c.pass.to_string(),
                ])
                .expect("csv record");
            }
        }
    }
    out + &String::from_utf8(wtr.into_inner().expect("csv buffer")).expect("utf8")
}
