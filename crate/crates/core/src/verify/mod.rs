//! The acceptance suite: eleven criteria, each a self-contained run with a
//! pass/fail verdict and a JSON record of what was measured.

pub mod oracle;

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analysis::{
    autocovariance, bg_statistic, dynkin_decomposition, fluctuation_field, max_jump, Channel, Ensemble,
    MaxJumpReport, TestFunction,
};
use crate::energy::{energy_form, harmonic_extension, holder_ratio, GridFunction, SobolevCoefficients};
use crate::error::Result;
use crate::gasket::{block_size, build_gasket, GasketGraph};
use crate::ou::{martingale_residual, ou_step, simulate, OuParams, OuState};
use crate::rng::replica_rng;
use crate::spectrum::{eigendecompose, renormalized_eigenvalue_table, SpectralBasis};
use crate::stats::{chi_square_gof, Estimate};
use crate::zrp::{run, sample_equilibrium, solve_fugacity, RateModel, SnapshotObserver};

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    /// Level for the dynamical criteria.
    pub level: u32,
    /// Reduced replica counts.
    pub quick: bool,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            level: 4,
            quick: false,
            seed: 2718,
        }
    }
}

impl VerifyConfig {
    fn replicas(&self, full: u64, quick: u64) -> u64 {
        if self.quick {
            quick
        } else {
            full
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub summary: String,
    pub elapsed_secs: f64,
    pub time_limit_secs: f64,
    pub details: Value,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {}  {} [{:.1}s]",
            self.id,
            self.title,
            if self.passed { "PASS" } else { "FAIL" },
            self.summary,
            self.elapsed_secs
        )
    }
}

/// Two-sided tail mass outside `±3σ`.
fn three_sigma_tail() -> f64 {
    2.0 * Normal::standard().sf(3.0)
}

/// Simultaneous band: the per-point half-width `z` such that `m` independent
/// comparisons all fall inside with the probability a single `3σ` has.
pub fn simultaneous_z(m: usize) -> f64 {
    let per_point = 1.0 - (1.0 - three_sigma_tail()).powf(1.0 / m.max(1) as f64);
    Normal::standard().inverse_cdf(1.0 - per_point / 2.0)
}

#[derive(Clone, Debug, Serialize)]
struct BandCheck {
    comparisons: usize,
    band_z: f64,
    worst_z: f64,
    outside_band: usize,
    outside_3sigma: usize,
}

impl BandCheck {
    fn new(z: &[f64], band_z: f64) -> Self {
        Self {
            comparisons: z.len(),
            band_z,
            worst_z: z.iter().map(|v| v.abs()).fold(0.0, f64::max),
            outside_band: z.iter().filter(|v| v.abs() > band_z).count(),
            outside_3sigma: z.iter().filter(|v| v.abs() > 3.0).count(),
        }
    }

    fn passed(&self) -> bool {
        self.outside_band == 0
    }
}

struct Timer(Instant);

impl Timer {
    fn start() -> Self {
        Timer(Instant::now())
    }

    fn secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Shared state across criteria: max-jump records from every ZRP run feed
/// criterion 10.
#[derive(Default)]
pub struct Suite {
    pub config: VerifyConfig,
    pub jump_records: Vec<MaxJumpReport>,
}

impl Suite {
    pub fn new(config: VerifyConfig) -> Self {
        Self {
            config,
            jump_records: Vec::new(),
        }
    }

    pub fn run(&mut self, id: u32) -> Result<CriterionReport> {
        match id {
            1 => criterion_1(),
            2 => criterion_2(&self.config),
            3 => criterion_3(&self.config),
            4 => criterion_4(),
            5 => criterion_5(&self.config),
            6 => criterion_6(self),
            7 => criterion_7(&self.config),
            8 => criterion_8(self),
            9 => criterion_9(self),
            10 => criterion_10(self),
            11 => criterion_11(self),
            _ => Err(crate::error::domain(format!("no criterion {id}"))),
        }
    }

    /// Runs 1..=11 in order, turning errors into failed reports.
    pub fn run_all(&mut self, mut progress: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
        (1..=11)
            .map(|id| {
                let t = Timer::start();
                let report = self.run(id).unwrap_or_else(|e| CriterionReport {
                    id,
                    title: TITLES[id as usize - 1],
                    passed: false,
                    summary: format!("error: {e}"),
                    elapsed_secs: t.secs(),
                    time_limit_secs: f64::INFINITY,
                    details: Value::Null,
                });
                progress(&report);
                report
            })
            .collect()
    }

    fn record_jumps(&mut self, series: &crate::analysis::FieldSeries) -> Result<()> {
        for label in &series.labels {
            self.jump_records.push(max_jump(series, label)?);
        }
        Ok(())
    }
}

pub const TITLES: [&str; 11] = [
    "structure",
    "energy form",
    "holder bound",
    "spectrum",
    "ou oracle",
    "zrp equilibrium",
    "static fluctuation variance",
    "fluctuation dynamics",
    "boltzmann-gibbs",
    "jump bound",
    "dynkin qv constant",
];

fn report(id: u32, passed: bool, summary: String, timer: &Timer, limit: f64, details: Value) -> CriterionReport {
    let elapsed = timer.secs();
    let in_time = elapsed <= limit;
    CriterionReport {
        id,
        title: TITLES[id as usize - 1],
        passed: passed && in_time,
        summary: if in_time {
            summary
        } else {
            format!("{summary}; exceeded {limit}s")
        },
        elapsed_secs: elapsed,
        time_limit_secs: limit,
        details,
    }
}

fn connected(g: &GasketGraph) -> bool {
    let mut seen = vec![false; g.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(x) = queue.pop_front() {
        for &y in g.neighbors(x) {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Vertex and edge counts for `n <= 10`.
pub fn criterion_1() -> Result<CriterionReport> {
    let t = Timer::start();
    let mut rows = Vec::new();
    let mut ok = true;
    for n in 0..=10u32 {
        let g = build_gasket(n)?;
        let v = block_size(n);
        let e = 3usize.pow(n + 1);
        let deg2 = (0..g.len()).filter(|&x| g.degree(x) == 2).count();
        let deg_ok = deg2 == 3 && (0..g.len()).all(|x| matches!(g.degree(x), 2 | 4));
        let conn = connected(&g);
        let good = g.len() == v && g.edges().len() == e && deg_ok && conn;
        ok &= good;
        rows.push(json!({"level": n, "vertices": g.len(), "edges": g.edges().len(),
            "expected_vertices": v, "expected_edges": e, "degrees_ok": deg_ok, "connected": conn}));
    }
    Ok(report(
        1,
        ok,
        "counts exact for n = 0..10".into(),
        &t,
        10.0,
        json!({ "levels": rows }),
    ))
}

fn random_values<R: Rng>(g: &GasketGraph, rng: &mut R) -> GridFunction<f64> {
    GridFunction::new(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Energy monotonicity under refinement and preservation by `ℍ`.
pub fn criterion_2(cfg: &VerifyConfig) -> Result<CriterionReport> {
    let t = Timer::start();
    let graphs = (0..=6).map(build_gasket).collect::<Result<Vec<_>>>()?;
    let mut rng = replica_rng(cfg.seed, 2);
    let mut worst_extension = 0f64;
    let mut worst_oracle = 0f64;
    let mut monotone_violations = 0;
    for n in 0..=5usize {
        for trial in 0..100 {
            let f = random_values(&graphs[n], &mut rng);
            let e = energy_form(&f, &f, &graphs[n])?;
            let h = harmonic_extension(&f, &graphs[n + 1])?;
            let eh = energy_form(&h, &h, &graphs[n + 1])?;
            worst_extension = worst_extension.max((eh - e).abs() / e.max(1.0));
            if trial < 5 && n <= 4 {
                let direct = oracle::harmonic_extension_direct(&f, &graphs[n], &graphs[n + 1])?;
                let diff = direct
                    .iter()
                    .zip(h.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst_oracle = worst_oracle.max(diff);
            }
        }
    }
    for _ in 0..100 {
        // Random cubic in the embedded coordinates.
        let c: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = |x: f64, y: f64| {
            let mut s = 0.0;
            let mut i = 0;
            for dx in 0..=3 {
                for dy in 0..=(3 - dx) {
                    s += c[i] * x.powi(dx) * y.powi(dy);
                    i += 1;
                }
            }
            s
        };
        let energies: Vec<f64> = graphs
            .iter()
            .map(|g| {
                let f = GridFunction::from_fn(g, p);
                energy_form(&f, &f, g)
            })
            .collect::<Result<_>>()?;
        monotone_violations += energies
            .windows(2)
            .filter(|w| w[0] > w[1] * (1.0 + 1e-12))
            .count();
    }
    let ok = worst_extension <= 1e-10 && worst_oracle <= 1e-10 && monotone_violations == 0;
    Ok(report(
        2,
        ok,
        format!(
            "max |E(Hf)-E(f)|/max(1,E) = {worst_extension:.1e}, local rule vs solve {worst_oracle:.1e}, {monotone_violations} monotonicity violations"
        ),
        &t,
        60.0,
        json!({"max_extension_error": worst_extension, "max_oracle_difference": worst_oracle,
            "monotonicity_violations": monotone_violations, "functions_per_level": 100}),
    ))
}

/// `sup |f(x)-f(y)|/|x-y|^α <= 6 sqrt(E_n(f,f))`.
pub fn criterion_3(cfg: &VerifyConfig) -> Result<CriterionReport> {
    let t = Timer::start();
    let mut rng = replica_rng(cfg.seed, 3);
    let mut violations = 0;
    let mut worst = 0f64;
    let mut levels = Vec::new();
    for n in 0..=4 {
        let g = build_gasket(n)?;
        let coarse = if n > 0 { Some(build_gasket(n - 1)?) } else { None };
        let mut level_worst = 0f64;
        for i in 0..1000 {
            // Alternate rough functions with harmonic extensions.
            let f = match (&coarse, i % 2) {
                (Some(c), 1) => harmonic_extension(&random_values(c, &mut rng), &g)?,
                _ => random_values(&g, &mut rng),
            };
            let e = energy_form(&f, &f, &g)?;
            let ratio = holder_ratio(&f, &g)?;
            let bound = 6.0 * e.sqrt();
            if ratio > bound {
                violations += 1;
            }
            if bound > 0.0 {
                level_worst = level_worst.max(ratio / bound);
            }
        }
        worst = worst.max(level_worst);
        levels.push(json!({"level": n, "max_ratio_over_bound": level_worst}));
    }
    Ok(report(
        3,
        violations == 0,
        format!("{violations} violations in 5000 functions, max ratio/bound {worst:.3}"),
        &t,
        60.0,
        json!({"violations": violations, "levels": levels}),
    ))
}

/// Spectral invariants for `n <= 6` and low-mode convergence.
pub fn criterion_4() -> Result<CriterionReport> {
    let t = Timer::start();
    let mut ok = true;
    let mut rows = Vec::new();
    let mut solve_n6 = 0.0;
    for n in 0..=6u32 {
        let g = build_gasket(n)?;
        let ts = Instant::now();
        let basis: SpectralBasis<f64> = eigendecompose(&g)?;
        if n == 6 {
            solve_n6 = ts.elapsed().as_secs_f64();
        }
        let lam = basis.eigenvalues();
        let top = lam[lam.len() - 1];
        let single_zero = lam[0] == 0.0 && lam[1] > 1e-8 * top;
        let m = basis.modes();
        let v = DMatrix::from_fn(g.len(), m, |x, k| basis.vector(k)[x]);
        let gram = v.transpose() * &v / 3f64.powi(n as i32);
        let ortho = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        let mut rayleigh = 0f64;
        for (k, &l) in lam.iter().enumerate().take(m) {
            let vk = basis.mode(k);
            let e = energy_form(&vk, &vk, &g)?;
            rayleigh = rayleigh.max((e - l).abs() / (1.0 + l));
        }
        let good = single_zero && ortho <= 1e-10 && rayleigh <= 1e-8;
        ok &= good;
        rows.push(json!({"level": n, "lambda_1": lam[1], "single_zero": single_zero,
            "orthonormality_error": ortho, "rayleigh_relative_error": rayleigh}));
    }
    let table = renormalized_eigenvalue_table::<f64>(&[4, 5, 6], 11)?;
    let gaps = table.relative_gaps();
    let max_gap = gaps.iter().flatten().copied().fold(0.0, f64::max);
    ok &= max_gap < 0.10 && solve_n6 < 300.0;
    Ok(report(
        4,
        ok,
        format!(
            "orthonormality and Rayleigh hold to n=6; max gap k<=10: 4->5 {:.2}%, 5->6 {:.2}% ({} 5%)",
            100.0 * gaps[0].iter().copied().fold(0.0, f64::max),
            100.0 * gaps[1].iter().copied().fold(0.0, f64::max),
            if max_gap < 0.05 { "all below" } else { "not all below" }
        ),
        &t,
        300.0,
        json!({"levels": rows, "cauchy_levels": [4, 5, 6], "eigenvalues": table.rows,
            "relative_gaps": gaps, "max_relative_gap": max_gap, "eigensolve_n6_secs": solve_n6}),
    ))
}

/// Monte Carlo moments of the OU process against the closed forms, and the
/// martingale quadratic variation.
pub fn criterion_5(cfg: &VerifyConfig) -> Result<CriterionReport> {
    let t = Timer::start();
    let g = build_gasket(4)?;
    let basis: SpectralBasis<f64> = eigendecompose(&g)?;
    let k = 4;
    let params = OuParams::from_basis(0.5, 1.5, &basis, k)?;
    let modes = k + 1;
    // Correlated, non-stationary start.
    let a = DMatrix::from_row_slice(
        modes,
        modes,
        &[
            0.9, 0.0, 0.0, 0.0, 0.0, //
            0.3, 1.2, 0.0, 0.0, 0.0, //
            -0.2, 0.5, 0.4, 0.0, 0.0, //
            0.1, -0.4, 0.3, 2.0, 0.0, //
            0.0, 0.2, -0.1, 0.6, 0.7,
        ],
    );
    let psi0 = &a * a.transpose();

    let replicas = cfg.replicas(10_000, 2_000) as usize;
    let dt = 0.1;
    let steps = 20;
    let pairs: Vec<(usize, usize)> = (0..modes).flat_map(|i| (i..modes).map(move |j| (i, j))).collect();
    let mut sum = vec![vec![0.0; pairs.len()]; steps + 1];
    let mut sum_sq = vec![vec![0.0; pairs.len()]; steps + 1];
    for r in 0..replicas {
        let mut rng = replica_rng(cfg.seed, 5_000_000 + r as u64);
        let mut state = OuState::gaussian(&psi0, &mut rng)?;
        for s in 0..=steps {
            if s > 0 {
                state = ou_step(&state, &params, dt, &mut rng)?;
            }
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let v = state.y[i] * state.y[j];
                sum[s][p] += v;
                sum_sq[s][p] += v * v;
            }
        }
    }
    let nr = replicas as f64;
    let mut z = Vec::new();
    for (s, (row, row_sq)) in sum.iter().zip(&sum_sq).enumerate() {
        let exact = crate::ou::moment_oracle(&params, &psi0, s as f64 * dt)?;
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let mean = row[p] / nr;
            let var = (row_sq[p] / nr - mean * mean) * nr / (nr - 1.0);
            let se = (var / nr).sqrt();
            if se > 0.0 {
                z.push((mean - exact[(i, j)]) / se);
            } else if mean != exact[(i, j)] {
                z.push(f64::INFINITY);
            }
        }
    }
    let band = BandCheck::new(&z, simultaneous_z(z.len()));

    // Quadratic variation of M_t(f) on [0, 1].
    let qv_replicas = cfg.replicas(1_000, 200) as usize;
    let qv_dt = 1e-3;
    let f = SobolevCoefficients {
        level: 4,
        coefficients: vec![0.3, 0.8, -0.5, 0.25, 0.2],
    };
    let stationary_sd = params.stationary_variance().sqrt();
    let mut qv = Vec::with_capacity(qv_replicas);
    let mut m1 = Vec::with_capacity(qv_replicas);
    for r in 0..qv_replicas {
        let mut rng = replica_rng(cfg.seed, 6_000_000 + r as u64);
        let y = (0..modes)
            .map(|i| {
                if i == 0 {
                    0.5
                } else {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    stationary_sd * z
                }
            })
            .collect();
        let path = simulate(OuState::new(y), &params, qv_dt, 1000, &mut rng)?;
        let res = martingale_residual(&path, &f, &params)?;
        qv.push(*res.quadratic_variation.last().unwrap());
        m1.push(*res.martingale.last().unwrap());
    }
    let qv_target: f64 = params.gamma
        * f.coefficients
            .iter()
            .zip(&params.lambdas)
            .map(|(c, l)| l * c * c)
            .sum::<f64>();
    let qv_est = Estimate::of(&qv)?;
    let m_est = Estimate::of(&m1)?;
    let ok = band.passed() && qv_est.within(qv_target, 3.0) && m_est.within(0.0, 3.0);
    Ok(report(
        5,
        ok,
        format!(
            "moments: {} comparisons, worst |z| {:.2} (band {:.2}); QV {:.4} vs {:.4} (z={:.2}); E[M_1] z={:.2}",
            band.comparisons,
            band.worst_z,
            band.band_z,
            qv_est.mean,
            qv_target,
            qv_est.z_score(qv_target),
            m_est.z_score(0.0)
        ),
        &t,
        300.0,
        json!({"replicas": replicas, "beta": params.beta, "gamma": params.gamma,
            "eigenvalues": params.lambdas, "moment_band": band, "qv_replicas": qv_replicas,
            "qv_dt": qv_dt, "qv": qv_est, "qv_target": qv_target, "martingale_at_1": m_est}),
    ))
}

/// Poisson marginals after time 1 and the brute-force stationary law.
pub fn criterion_6(suite: &mut Suite) -> Result<CriterionReport> {
    let cfg = suite.config.clone();
    let t = Timer::start();
    let g = build_gasket(cfg.level)?;
    let model = RateModel::linear();
    let replicas = cfg.replicas(100, 20);
    let mut ok = true;
    let mut gof = Vec::new();
    for (i, rho) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let profile = solve_fugacity(&model, rho)?;
        let mut counts = vec![0u64; profile.pmf.len() + 32];
        for r in 0..replicas {
            let mut rng = replica_rng(cfg.seed, 60_000 * (i as u64 + 1) + r);
            let mut config = sample_equilibrium(&profile, &g, &model, &mut rng)?;
            let mut obs = SnapshotObserver::default();
            run(&mut config, &g, &model, 1.0, &[1.0], &mut obs, &mut rng)?;
            for &k in &obs.snapshots[0] {
                let k = k as usize;
                if k >= counts.len() {
                    counts.resize(k + 1, 0);
                }
                counts[k] += 1;
            }
        }
        let test = chi_square_gof(&counts, &profile.pmf)?;
        ok &= test.passes(1e-3);
        gof.push(json!({"rho": rho, "statistic": test.statistic, "dof": test.dof, "p_value": test.p_value}));
    }

    let g1 = build_gasket(1)?;
    let mut worst = 0f64;
    let models = [
        RateModel::linear(),
        RateModel::constant(),
        RateModel::Affine { slope: 1.0, offset: 0.5 },
    ];
    for m in &models {
        for particles in 1..=3 {
            let (states, pi) = oracle::stationary_bruteforce(&g1, m, particles)?;
            let product = oracle::conditioned_product_measure(m, &states);
            let diff = pi.iter().zip(&product).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff);
        }
    }
    ok &= worst <= 1e-10;
    let p_summary: Vec<String> = gof
        .iter()
        .map(|v| format!("{:.3}", v["p_value"].as_f64().unwrap_or(f64::NAN)))
        .collect();
    Ok(report(
        6,
        ok,
        format!(
            "chi-square p-values [{}] at n={}; brute-force max deviation {worst:.1e}",
            p_summary.join(", "),
            cfg.level
        ),
        &t,
        600.0,
        json!({"level": cfg.level, "replicas": replicas, "goodness_of_fit": gof,
            "bruteforce_max_deviation": worst}),
    ))
}

/// `Var(Z_0(v_k)) = χ(ρ)` under `ν_ρ`.
pub fn criterion_7(cfg: &VerifyConfig) -> Result<CriterionReport> {
    let t = Timer::start();
    let g = build_gasket(4)?;
    let basis: SpectralBasis<f64> = eigendecompose(&g)?;
    let draws = cfg.replicas(10_000, 2_000);
    let cases = [
        (RateModel::linear(), 1.0),
        (RateModel::Affine { slope: 1.0, offset: 0.5 }, 1.0),
    ];
    let mut ok = true;
    let mut rows = Vec::new();
    let mut worst = 0f64;
    for (c, (model, rho)) in cases.iter().enumerate() {
        let profile = solve_fugacity(model, *rho)?;
        let modes: Vec<GridFunction<f64>> = (1..=5).map(|k| basis.mode(k)).collect();
        let mut squares: Vec<Vec<f64>> = (0..5).map(|_| Vec::with_capacity(draws as usize)).collect();
        let mut rng = replica_rng(cfg.seed, 70 + c as u64);
        for _ in 0..draws {
            let config = sample_equilibrium(&profile, &g, model, &mut rng)?;
            for (k, v) in modes.iter().enumerate() {
                squares[k].push(fluctuation_field(&config, v, *rho)?.powi(2));
            }
        }
        for (k, sq) in squares.iter().enumerate() {
            let e = Estimate::of(sq)?;
            let z = e.z_score(profile.chi);
            worst = worst.max(z.abs());
            ok &= z.abs() <= 3.0;
            rows.push(json!({"rate_model": model.to_string(), "rho": rho, "mode": k + 1,
                "variance": e.mean, "std_error": e.std_error, "chi": profile.chi, "z": z}));
        }
    }
    Ok(report(
        7,
        ok,
        format!("{} comparisons, worst |z| {worst:.2}", rows.len()),
        &t,
        300.0,
        json!({"level": 4, "draws": draws, "comparisons": rows}),
    ))
}

fn eigen_functions(basis: &SpectralBasis<f64>, ks: &[usize]) -> Vec<TestFunction> {
    ks.iter()
        .map(|&k| TestFunction::new(format!("v{k}"), basis.mode(k)))
        .collect()
}

fn grid(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = (horizon / dt).round() as usize;
    (0..=steps).map(|i| i as f64 * dt).collect()
}

/// Autocovariance decay of `Z_t(v_k)` for independent walkers.
pub fn criterion_8(suite: &mut Suite) -> Result<CriterionReport> {
    let cfg = suite.config.clone();
    let t = Timer::start();
    let g = build_gasket(cfg.level)?;
    let basis: SpectralBasis<f64> = eigendecompose(&g)?;
    let model = RateModel::linear();
    let rho = 1.0;
    let profile = solve_fugacity(&model, rho)?;
    let functions = eigen_functions(&basis, &[1, 2]);
    let lambda1 = basis.eigenvalue(1);
    let window = 2.0 / (profile.dphi * lambda1);
    let dt = window / 24.0;
    let horizon = 40.0 * window;
    let times = grid(horizon, dt);
    let replicas = cfg.replicas(256, 64);
    let series = Ensemble {
        graph: &g,
        model: &model,
        profile: &profile,
        functions: &functions,
        block_scale: None,
        horizon: times[times.len() - 1],
        sample_times: &times,
        seed: cfg.seed.wrapping_add(8),
        replicas,
    }
    .simulate()?;
    suite.record_jumps(&series)?;

    let mut ok = true;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, f) in functions.iter().enumerate() {
        let k = i + 1;
        let lambda = basis.eigenvalue(k);
        let ac = autocovariance(&series, &f.label, 24, Some(0.0))?;
        let fit = ac.fit_decay(window)?;
        let rate_error = fit.rate / (profile.dphi * lambda) - 1.0;
        let energy = energy_form(&f.values, &f.values, &g)?;
        let qv = dynkin_decomposition(&series, &f.label)?.qv_rate()?;
        let gamma = qv.mean / energy;
        let beta = fit.rate / lambda;
        let consistency = gamma / (2.0 * beta) / profile.chi - 1.0;
        ok &= rate_error.abs() <= 0.15 && consistency.abs() <= 0.15;
        summary.push(format!("k={k}: rate {:+.1}%, γ/2β vs χ {:+.1}%", 100.0 * rate_error, 100.0 * consistency));
        rows.push(json!({"mode": k, "lambda": lambda, "fitted_rate": fit.rate, "rate_std_error": fit.rate_error,
            "fit_points": fit.points, "relative_rate_error": rate_error, "c0_fit": fit.c0,
            "variance_lag0": ac.values[0], "chi": profile.chi, "gamma_measured": gamma,
            "beta_fitted": beta, "self_consistency_error": consistency,
            "autocovariance": {"lags": ac.lags, "values": ac.values, "std_errors": ac.std_errors}}));
    }
    Ok(report(
        8,
        ok,
        summary.join("; "),
        &t,
        7200.0,
        json!({"level": cfg.level, "rho": rho, "replicas": replicas, "horizon": horizon, "dt": dt,
            "window": window, "modes": rows}),
    ))
}

/// Embedded first coordinate, a fixed continuous test function.
fn coordinate_function(g: &GasketGraph) -> TestFunction {
    TestFunction::new("x", GridFunction::from_fn(g, |x, _| x))
}

/// Variance of the time-integrated Boltzmann-Gibbs statistic across levels.
pub fn criterion_9(suite: &mut Suite) -> Result<CriterionReport> {
    let cfg = suite.config.clone();
    let t = Timer::start();
    let rho = 1.0;
    let horizon = 0.1;
    let nonlinear = RateModel::Affine { slope: 1.0, offset: 0.5 };
    let replicas = cfg.replicas(400, 100);
    let mut reports = Vec::new();
    for n in 3..=5u32 {
        let g = build_gasket(n)?;
        let profile = solve_fugacity(&nonlinear, rho)?;
        let functions = [coordinate_function(&g)];
        let series = Ensemble {
            graph: &g,
            model: &nonlinear,
            profile: &profile,
            functions: &functions,
            block_scale: Some(1),
            horizon,
            sample_times: &[0.0, horizon],
            seed: cfg.seed.wrapping_add(90 + n as u64),
            replicas,
        }
        .simulate()?;
        suite.record_jumps(&series)?;
        reports.push(bg_statistic(&series, "x", None)?);
    }
    let mut decreasing = true;
    for w in reports.windows(2) {
        let (a, b) = (&w[0].variance, &w[1].variance);
        decreasing &= b.variance < a.lower && a.variance > b.upper;
    }

    // Linear rates: the bracket vanishes identically.
    let linear = RateModel::linear();
    let mut nonzero = 0usize;
    for n in [3u32, 4] {
        let g = build_gasket(n)?;
        let profile = solve_fugacity(&linear, rho)?;
        let functions = [coordinate_function(&g)];
        let times = grid(horizon, horizon / 10.0);
        let series = Ensemble {
            graph: &g,
            model: &linear,
            profile: &profile,
            functions: &functions,
            block_scale: Some(1),
            horizon,
            sample_times: &times,
            seed: cfg.seed.wrapping_add(99 + n as u64),
            replicas: cfg.replicas(50, 10),
        }
        .simulate()?;
        suite.record_jumps(&series)?;
        for ch in [Channel::Bg, Channel::BgBlock] {
            nonzero += series.channel("x", ch)?.iter().flatten().filter(|v| **v != 0.0).count();
        }
    }
    let ok = decreasing && nonzero == 0;
    let vars: Vec<String> = reports
        .iter()
        .map(|r| format!("n={}: {:.3e}", r.level, r.variance.variance))
        .collect();
    Ok(report(
        9,
        ok,
        format!(
            "variance {} ({}); linear-h nonzero values: {nonzero}",
            vars.join(", "),
            if decreasing { "strictly decreasing" } else { "not separated" }
        ),
        &t,
        3600.0,
        json!({"rate_model": nonlinear.to_string(), "rho": rho, "time": horizon, "replicas": replicas,
            "reports": reports, "linear_nonzero_values": nonzero}),
    ))
}

/// `|ΔZ(f)| <= 2 ‖f‖_∞ 3^{-n/2}` over every recorded run.
pub fn criterion_10(suite: &mut Suite) -> Result<CriterionReport> {
    let cfg = suite.config.clone();
    let t = Timer::start();
    let models = [
        RateModel::linear(),
        RateModel::constant(),
        RateModel::Affine { slope: 1.0, offset: 0.5 },
    ];
    for n in 2..=cfg.level.max(2) {
        let g = build_gasket(n)?;
        let basis: SpectralBasis<f64> = eigendecompose(&g)?;
        let mut functions = eigen_functions(&basis, &[1]);
        functions.push(coordinate_function(&g));
        for (i, model) in models.iter().enumerate() {
            let profile = solve_fugacity(model, 1.0)?;
            let series = Ensemble {
                graph: &g,
                model,
                profile: &profile,
                functions: &functions,
                block_scale: None,
                horizon: 0.5,
                sample_times: &[0.0, 0.25, 0.5],
                seed: cfg.seed.wrapping_add(1000 + 10 * n as u64 + i as u64),
                replicas: cfg.replicas(20, 5),
            }
            .simulate()?;
            suite.record_jumps(&series)?;
        }
    }
    let records = &suite.jump_records;
    let violations: usize = records.iter().map(|r| r.violations).sum();
    let tightest = records
        .iter()
        .map(|r| r.max_jump / r.bound)
        .fold(0.0, f64::max);
    Ok(report(
        10,
        violations == 0 && !records.is_empty(),
        format!(
            "{violations} violations over {} recorded runs; max jump / bound = {tightest:.4}",
            records.len()
        ),
        &t,
        3600.0,
        json!({"records": records.len(), "violations": violations, "max_jump_over_bound": tightest}),
    ))
}

/// Mean realized QV rate of `M_t(v_1)` against `2 φ 𝓔_n(v_1, v_1)`.
pub fn criterion_11(suite: &mut Suite) -> Result<CriterionReport> {
    let cfg = suite.config.clone();
    let t = Timer::start();
    let g = build_gasket(cfg.level)?;
    let basis: SpectralBasis<f64> = eigendecompose(&g)?;
    let functions = eigen_functions(&basis, &[1]);
    let energy = energy_form(&functions[0].values, &functions[0].values, &g)?;
    let cases = [RateModel::linear(), RateModel::Affine { slope: 1.0, offset: 0.5 }];
    let mut ok = true;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, model) in cases.iter().enumerate() {
        let profile = solve_fugacity(model, 1.0)?;
        let times = grid(1.0, 0.05);
        let series = Ensemble {
            graph: &g,
            model,
            profile: &profile,
            functions: &functions,
            block_scale: None,
            horizon: 1.0,
            sample_times: &times,
            seed: cfg.seed.wrapping_add(1100 + i as u64),
            replicas: cfg.replicas(200, 50),
        }
        .simulate()?;
        suite.record_jumps(&series)?;
        let dynkin = dynkin_decomposition(&series, "v1")?;
        let qv = dynkin.qv_rate()?;
        let target = 2.0 * profile.phi * energy;
        let z = qv.z_score(target);
        let stated = profile.phi * energy;
        let m_end = dynkin.martingale_at(times.len() - 1)?;
        ok &= z.abs() <= 3.0;
        summary.push(format!(
            "{model}: z={z:+.2}, measured/stated γ = {:.3}",
            qv.mean / stated
        ));
        rows.push(json!({"rate_model": model.to_string(), "phi": profile.phi, "energy": energy,
            "qv_rate": qv, "target": target, "z": z, "stated_gamma_qv_rate": stated,
            "measured_over_stated": qv.mean / stated, "martingale_at_1": m_end}));
    }
    Ok(report(
        11,
        ok,
        summary.join("; "),
        &t,
        1800.0,
        json!({"level": cfg.level, "cases": rows}),
    ))
}
