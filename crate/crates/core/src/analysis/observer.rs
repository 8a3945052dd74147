//! Event-driven accumulation of field observables along a ZRP path.

use rayon::prelude::*;

use crate::energy::{discrete_laplacian, energy_form, GridFunction};
use crate::error::{check_level, domain, Result};
use crate::gasket::{block_size, GasketGraph};
use crate::rng::{replica_rng, RNG_NAME};
use crate::zrp::{run, sample_equilibrium, EquilibriumProfile, Jump, Observer, RateModel, ZrpConfiguration};

use super::series::{Channel, FieldSeries, ReplicaSeries};

#[derive(Clone, Debug)]
pub struct TestFunction {
    pub label: String,
    pub values: GridFunction<f64>,
}

impl TestFunction {
    pub fn new(label: impl Into<String>, values: GridFunction<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

struct Tracked {
    f: Vec<f64>,
    lap: Vec<f64>,
    block: Option<Vec<f64>>,
    field: f64,
    integrand: f64,
    bg_rate: f64,
    block_rate: f64,
    compensator: f64,
    qv: f64,
    bg: f64,
    bg_block: f64,
    max_jump: f64,
}

/// Keeps `Z(f)`, the compensator integrand and the Boltzmann-Gibbs
/// integrands current in O(1) per event, integrates them exactly between
/// events and records every channel at sample times. Running sums are
/// recomputed from scratch at each sample.
pub struct FieldObserver {
    model: RateModel,
    scale: f64,
    rho: f64,
    phi: f64,
    dphi: f64,
    offset: f64,
    tracked: Vec<Tracked>,
    channels: Vec<Channel>,
    pub rows: Vec<Vec<f64>>,
    pub events: u64,
}

impl FieldObserver {
    /// `block_scale = Some(k)` also tracks the block statistic at scale `k`.
    pub fn new(
        graph: &GasketGraph,
        model: &RateModel,
        profile: &EquilibriumProfile,
        functions: &[TestFunction],
        block_scale: Option<u32>,
        initial: &ZrpConfiguration,
    ) -> Result<Self> {
        check_level(graph.level(), initial.level())?;
        let block_weights = match block_scale {
            Some(k) => Some(block_weights(graph, k)?),
            None => None,
        };
        let mut tracked = Vec::with_capacity(functions.len());
        for tf in functions {
            check_level(graph.level(), tf.values.level())?;
            let f = tf.values.values().to_vec();
            let lap = discrete_laplacian(&tf.values, graph)?.into_values();
            let block = block_weights.as_ref().map(|w| w(&f));
            tracked.push(Tracked {
                f,
                lap,
                block,
                field: 0.0,
                integrand: 0.0,
                bg_rate: 0.0,
                block_rate: 0.0,
                compensator: 0.0,
                qv: 0.0,
                bg: 0.0,
                bg_block: 0.0,
                max_jump: 0.0,
            });
        }
        let mut channels = vec![
            Channel::Field,
            Channel::Integrand,
            Channel::Compensator,
            Channel::Qv,
            Channel::Bg,
        ];
        if block_scale.is_some() {
            channels.push(Channel::BgBlock);
        }
        channels.push(Channel::MaxJump);
        let mut obs = Self {
            model: model.clone(),
            scale: 3f64.powf(-(graph.level() as f64) / 2.0),
            rho: profile.rho,
            phi: profile.phi,
            dphi: profile.dphi,
            offset: profile.phi - profile.dphi * profile.rho,
            tracked,
            channels,
            rows: Vec::new(),
            events: 0,
        };
        obs.resync(initial);
        Ok(obs)
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// `h(k) - φ - φ'(k - ρ)`, arranged to vanish exactly when `h` is linear
    /// and the profile is the closed-form Poisson one.
    #[inline]
    fn bracket(&self, k: u32) -> f64 {
        (self.model.rate(k) - self.dphi * k as f64) - self.offset
    }

    fn resync(&mut self, config: &ZrpConfiguration) {
        let occ = config.occupancy();
        let s = self.scale;
        let excess: Vec<f64> = occ.iter().map(|&k| k as f64 - self.rho).collect();
        let h: Vec<f64> = occ.iter().map(|&k| self.model.rate(k) - self.phi).collect();
        let b: Vec<f64> = occ.iter().map(|&k| self.bracket(k)).collect();
        for t in &mut self.tracked {
            t.field = s * dot(&excess, &t.f);
            t.integrand = s * dot(&h, &t.lap);
            t.bg_rate = s * dot(&b, &t.f);
            if let Some(w) = &t.block {
                t.block_rate = s * dot(&b, w);
            }
        }
    }

    fn record(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.tracked.len() * self.channels.len());
        for t in &self.tracked {
            for c in &self.channels {
                row.push(match c {
                    Channel::Field => t.field,
                    Channel::Integrand => t.integrand,
                    Channel::Compensator => t.compensator,
                    Channel::Qv => t.qv,
                    Channel::Bg => t.bg,
                    Channel::BgBlock => t.bg_block,
                    Channel::MaxJump => t.max_jump,
                });
            }
        }
        row
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-site weights `w(y) = Σ_{i : y ∈ Δ_n^k(x_i)} f(x_i) / b_k`, so that
/// `Σ_i V_{n,k}(x_i, η) f(x_i) = Σ_y w(y) [h(η(y)) - φ - φ'(η(y) - ρ)]`.
#[allow(clippy::type_complexity)]
fn block_weights(graph: &GasketGraph, k: u32) -> Result<impl Fn(&[f64]) -> Vec<f64> + '_> {
    let reps = graph.block_representatives(k)?;
    let blocks = reps
        .iter()
        .map(|&x| Ok((x, graph.block_triangle(x, k)?)))
        .collect::<Result<Vec<_>>>()?;
    let bk = block_size(k) as f64;
    let n = graph.len();
    Ok(move |f: &[f64]| {
        let mut w = vec![0.0; n];
        for (x, members) in &blocks {
            for &y in members {
                w[y] += f[*x] / bk;
            }
        }
        w
    })
}

impl Observer for FieldObserver {
    fn hold(&mut self, _config: &ZrpConfiguration, macro_dt: f64) {
        for t in &mut self.tracked {
            t.compensator += t.integrand * macro_dt;
            t.bg += t.bg_rate * macro_dt;
            t.bg_block += t.block_rate * macro_dt;
        }
    }

    fn jump(&mut self, config: &ZrpConfiguration, jump: &Jump) {
        self.events += 1;
        let (x, y) = (jump.from, jump.to);
        let occ = config.occupancy();
        let (x_new, y_new) = (occ[x], occ[y]);
        let (x_old, y_old) = (x_new + 1, y_new - 1);
        let dh_x = self.model.rate(x_new) - self.model.rate(x_old);
        let dh_y = self.model.rate(y_new) - self.model.rate(y_old);
        let db_x = self.bracket(x_new) - self.bracket(x_old);
        let db_y = self.bracket(y_new) - self.bracket(y_old);
        let s = self.scale;
        for t in &mut self.tracked {
            let dz = s * (t.f[y] - t.f[x]);
            t.field += dz;
            t.qv += dz * dz;
            t.max_jump = t.max_jump.max(dz.abs());
            t.integrand += s * (dh_x * t.lap[x] + dh_y * t.lap[y]);
            t.bg_rate += s * (db_x * t.f[x] + db_y * t.f[y]);
            if let Some(w) = &t.block {
                t.block_rate += s * (db_x * w[x] + db_y * w[y]);
            }
        }
    }

    fn sample(&mut self, _index: usize, _macro_time: f64, config: &ZrpConfiguration) {
        self.resync(config);
        let row = self.record();
        self.rows.push(row);
    }
}

/// Stationary ensemble: each replica starts from `ν_ρ` and runs to `horizon`.
#[derive(Clone, Debug)]
pub struct Ensemble<'a> {
    pub graph: &'a GasketGraph,
    pub model: &'a RateModel,
    pub profile: &'a EquilibriumProfile,
    pub functions: &'a [TestFunction],
    pub block_scale: Option<u32>,
    pub horizon: f64,
    pub sample_times: &'a [f64],
    pub seed: u64,
    pub replicas: u64,
}

impl Ensemble<'_> {
    pub fn replica(&self, replica: u64) -> Result<(ReplicaSeries, u64)> {
        let mut rng = replica_rng(self.seed, replica);
        let mut config = sample_equilibrium(self.profile, self.graph, self.model, &mut rng)?;
        let mut obs = FieldObserver::new(
            self.graph,
            self.model,
            self.profile,
            self.functions,
            self.block_scale,
            &config,
        )?;
        let summary = run(
            &mut config,
            self.graph,
            self.model,
            self.horizon,
            self.sample_times,
            &mut obs,
            &mut rng,
        )?;
        Ok((
            ReplicaSeries {
                replica,
                seed: self.seed,
                values: obs.rows,
            },
            summary.events,
        ))
    }

    /// Runs all replicas in parallel; output order is by replica index.
    pub fn simulate(&self) -> Result<FieldSeries> {
        if self.functions.is_empty() {
            return Err(domain("no test functions"));
        }
        let probe = FieldObserver::new(
            self.graph,
            self.model,
            self.profile,
            self.functions,
            self.block_scale,
            &ZrpConfiguration::new(self.graph, self.model, vec![0; self.graph.len()])?,
        )?;
        let mut series = FieldSeries::new(
            self.functions.iter().map(|f| f.label.clone()).collect(),
            probe.channels().to_vec(),
            self.sample_times.to_vec(),
        );
        self.describe(&mut series)?;
        let runs = (0..self.replicas)
            .into_par_iter()
            .map(|r| self.replica(r))
            .collect::<Result<Vec<_>>>()?;
        let mut events = 0;
        for (rep, ev) in runs {
            events += ev;
            series.push(rep)?;
        }
        series.set_meta("events", events);
        Ok(series)
    }

    fn describe(&self, s: &mut FieldSeries) -> Result<()> {
        s.set_meta("source", "zrp");
        s.set_meta("level", self.graph.level());
        s.set_meta("rate_model", self.model);
        s.set_meta("rho", self.profile.rho);
        s.set_meta("phi", self.profile.phi);
        s.set_meta("chi", self.profile.chi);
        s.set_meta("dphi", self.profile.dphi);
        s.set_meta("linear_growth", self.profile.linear_growth);
        s.set_meta("horizon", self.horizon);
        s.set_meta("seed", self.seed);
        s.set_meta("replicas", self.replicas);
        s.set_meta("rng", RNG_NAME);
        if let Some(k) = self.block_scale {
            s.set_meta("block_scale", k);
        }
        for f in self.functions {
            s.set_meta(&format!("sup.{}", f.label), f.values.sup_norm());
            s.set_meta(
                &format!("energy.{}", f.label),
                energy_form(&f.values, &f.values, self.graph)?,
            );
        }
        Ok(())
    }
}
