use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use fractal_zrp::analysis::{Channel, Ensemble, FieldSeries, ReplicaSeries, TestFunction};
use fractal_zrp::energy::GridFunction;
use fractal_zrp::gasket::MAX_GRAPH_LEVEL;
use fractal_zrp::ou::simulate;
use fractal_zrp::rng::{replica_rng, RNG_NAME};
use fractal_zrp::spectrum::{cache_path, MAX_SPECTRAL_LEVEL};
use fractal_zrp::zrp::solve_fugacity;
use fractal_zrp::{build_gasket, Ou, OuState, RateModel};

use crate::{config, load_basis, output, require, usage_error, CacheDir};

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ZrpSimArgs {
    #[arg(long, default_value_t = 3)]
    level: u32,
    /// Density ρ of the stationary product measure.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// linear[:slope], constant[:rate], affine:slope,offset, table:h1,h2,...
    /// or custom:<file>.
    #[arg(long, default_value = "linear")]
    rate_model: String,
    /// Macroscopic horizon T.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Sampling intervals: the path is recorded at i T / samples, i = 0..=samples.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    replicas: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Eigenmodes v_1..v_K recorded as test functions (reads the eigen cache).
    #[arg(long, default_value_t = 2)]
    modes: usize,
    /// Also record the coordinate functions x and y.
    #[arg(long)]
    coords: bool,
    /// Also record the block Boltzmann-Gibbs statistic at this scale.
    #[arg(long)]
    block_scale: Option<u32>,
    /// Trajectory CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    cache: CacheDir,
}

pub fn zrp_sim(args: ZrpSimArgs) -> Result<()> {
    require(args.level <= MAX_GRAPH_LEVEL, "level", &format!("must be at most {MAX_GRAPH_LEVEL}"));
    require(
        args.modes == 0 || args.level <= MAX_SPECTRAL_LEVEL,
        "level",
        &format!("eigenmodes exist up to level {MAX_SPECTRAL_LEVEL}; use --modes 0 --coords"),
    );
    require(args.rho.is_finite() && args.rho >= 0.0, "rho", "must be finite and non-negative");
    require(args.horizon.is_finite() && args.horizon > 0.0, "horizon", "must be positive");
    require(args.samples >= 1, "samples", "must be at least 1");
    require(args.replicas >= 1, "replicas", "must be at least 1");
    require(args.modes > 0 || args.coords, "modes", "no test functions: give --modes K or --coords");
    if let Some(k) = args.block_scale {
        require(k <= args.level, "block-scale", "must not exceed the level");
    }
    let model = RateModel::parse(&args.rate_model).unwrap_or_else(|e| usage_error("rate-model", e));
    let profile = solve_fugacity(&model, args.rho).unwrap_or_else(|e| usage_error("rho", e));

    let g = build_gasket(args.level)?;
    let mut functions = Vec::new();
    let mut lambdas = Vec::new();
    if args.modes > 0 {
        let path = cache_path(&args.cache.resolve(), args.level);
        let basis = load_basis(&path, args.level)?;
        require(
            args.modes < basis.modes(),
            "modes",
            &format!("level {} has {} non-constant modes", args.level, basis.modes() - 1),
        );
        for k in 1..=args.modes {
            functions.push(TestFunction::new(format!("v{k}"), basis.mode(k)));
            lambdas.push((format!("v{k}"), basis.eigenvalue(k)));
        }
    }
    if args.coords {
        functions.push(TestFunction::new("x", GridFunction::from_fn(&g, |x, _| x)));
        functions.push(TestFunction::new("y", GridFunction::from_fn(&g, |_, y| y)));
    }
    let times: Vec<f64> = (0..=args.samples)
        .map(|i| args.horizon * i as f64 / args.samples as f64)
        .collect();
    let mut series = Ensemble {
        graph: &g,
        model: &model,
        profile: &profile,
        functions: &functions,
        block_scale: args.block_scale,
        horizon: args.horizon,
        sample_times: &times,
        seed: args.seed,
        replicas: args.replicas,
    }
    .simulate()?;
    for (label, l) in lambdas {
        series.set_meta(&format!("lambda.{label}"), l);
    }
    let settings = ZrpSimArgs {
        cache: args.cache.resolved(),
        ..args
    };
    for (k, v) in config::resolved("zrp-sim", &settings)? {
        series.set_meta(&format!("config.{k}"), v);
    }
    let mut out = output(settings.out.as_deref())?;
    series.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OuSimArgs {
    /// Eigen cache file; defaults to the cache entry for --level.
    #[arg(long)]
    basis: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    level: u32,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Number K of non-constant modes.
    #[arg(long, default_value_t = 2)]
    modes: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 16)]
    replicas: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Start every mode at 0 instead of drawing from the stationary law.
    #[arg(long)]
    from_zero: bool,
    /// Trajectory CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    cache: CacheDir,
}

pub fn ou_sim(args: OuSimArgs) -> Result<()> {
    require(args.beta.is_finite() && args.beta > 0.0, "beta", "must be positive");
    require(args.gamma.is_finite() && args.gamma > 0.0, "gamma", "must be positive");
    require(args.modes >= 1, "modes", "must be at least 1");
    require(args.horizon.is_finite() && args.horizon > 0.0, "horizon", "must be positive");
    require(
        args.dt.is_finite() && args.dt > 0.0 && args.dt <= args.horizon,
        "dt",
        "must be positive and at most the horizon",
    );
    require(args.replicas >= 1, "replicas", "must be at least 1");
    let steps = (args.horizon / args.dt).round() as usize;
    require(
        ((steps as f64) * args.dt - args.horizon).abs() <= 1e-9 * args.horizon,
        "dt",
        "must divide the horizon",
    );
    let path = args
        .basis
        .clone()
        .unwrap_or_else(|| cache_path(&args.cache.resolve(), args.level));
    let level = match &args.basis {
        Some(p) if p.exists() => fractal_zrp::Basis::load(p)?.level(),
        _ => args.level,
    };
    let basis = load_basis(&path, level)?;
    require(
        args.modes < basis.modes(),
        "modes",
        &format!("level {level} has {} non-constant modes", basis.modes() - 1),
    );
    let params = Ou::from_basis(args.beta, args.gamma, &basis, args.modes)?;

    let labels: Vec<String> = (1..=args.modes).map(|k| format!("v{k}")).collect();
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * args.dt).collect();
    let mut series = FieldSeries::new(labels.clone(), vec![Channel::Field, Channel::Integrand], times);
    series.set_meta("source", "ou");
    series.set_meta("level", level);
    series.set_meta("beta", args.beta);
    series.set_meta("gamma", args.gamma);
    series.set_meta("horizon", args.horizon);
    series.set_meta("dt", args.dt);
    series.set_meta("seed", args.seed);
    series.set_meta("replicas", args.replicas);
    series.set_meta("rng", RNG_NAME);
    for (k, label) in labels.iter().enumerate() {
        series.set_meta(&format!("lambda.{label}"), params.lambdas[k + 1]);
    }
    let sd = params.stationary_variance().sqrt();
    for r in 0..args.replicas {
        let mut rng = replica_rng(args.seed, r);
        let y0: Vec<f64> = (0..params.modes())
            .map(|k| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if k == 0 || args.from_zero {
                    0.0
                } else {
                    sd * z
                }
            })
            .collect();
        let path = simulate(OuState::new(y0), &params, args.dt, steps, &mut rng)?;
        let values = path
            .iter()
            .map(|s| {
                (1..params.modes())
                    .flat_map(|k| [s.y[k], -params.beta * params.lambdas[k] * s.y[k]])
                    .collect()
            })
            .collect();
        series.push(ReplicaSeries {
            replica: r,
            seed: args.seed,
            values,
        })?;
    }
    let settings = OuSimArgs {
        basis: Some(path),
        level,
        cache: args.cache.resolved(),
        ..args
    };
    for (k, v) in config::resolved("ou-sim", &settings)? {
        series.set_meta(&format!("config.{k}"), v);
    }
    let mut out = output(settings.out.as_deref())?;
    series.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}
