//! Rejection-free continuous-time simulation of the zero-range process.
//!
//! Every unordered edge carries jumps in both directions: a particle leaves
//! `x` for each neighbour at rate `h(η(x))`, so site `x` fires at
//! `deg(x) h(η(x))` and the destination is a uniform neighbour.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{domain, Error, Result};
use crate::gasket::GasketGraph;

use super::rates::RateModel;
use super::sumtree::SumTree;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub from: usize,
    pub to: usize,
    /// Microscopic holding time before the jump.
    pub dt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Jump(Jump),
    /// Every site is empty; nothing can ever move.
    Absorbed,
}

#[derive(Clone, Debug)]
pub struct ZrpConfiguration {
    level: u32,
    occupancy: Vec<u32>,
    rates: SumTree,
    /// Microscopic time.
    clock: f64,
    particles: u64,
    events: u64,
}

impl ZrpConfiguration {
    pub fn new(graph: &GasketGraph, model: &RateModel, occupancy: Vec<u32>) -> Result<Self> {
        if occupancy.len() != graph.len() {
            return Err(domain(format!(
                "configuration has {} sites, level {} has {}",
                occupancy.len(),
                graph.level(),
                graph.len()
            )));
        }
        let weights: Vec<f64> = occupancy
            .iter()
            .enumerate()
            .map(|(x, &k)| graph.degree(x) as f64 * model.rate(k))
            .collect();
        let particles = occupancy.iter().map(|&k| k as u64).sum();
        Ok(Self {
            level: graph.level(),
            occupancy,
            rates: SumTree::new(&weights),
            clock: 0.0,
            particles,
            events: 0,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn particles(&self) -> u64 {
        self.particles
    }

    /// Microscopic time.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.total()
    }

    pub fn site_rate(&self, x: usize) -> f64 {
        self.rates.weight(x)
    }

    /// Whether the cached site rates equal `deg(x) h(η(x))` bit for bit and
    /// the cached particle count matches.
    pub fn rates_consistent(&self, graph: &GasketGraph, model: &RateModel) -> bool {
        let fresh = Self::new(graph, model, self.occupancy.clone()).expect("same level");
        (0..self.occupancy.len()).all(|x| fresh.rates.weight(x) == self.rates.weight(x))
            && fresh.rates.total() == self.rates.total()
            && fresh.particles == self.particles
    }

    /// Draws the next event without applying it.
    pub fn next_event<R: Rng + ?Sized>(&self, graph: &GasketGraph, rng: &mut R) -> Option<Jump> {
        let total = self.rates.total();
        if total <= 0.0 {
            return None;
        }
        let e: f64 = Exp1.sample(rng);
        let dt = e / total;
        let target = rng.random::<f64>() * total;
        let from = self.rates.find(target);
        let nbrs = graph.neighbors(from);
        let to = nbrs[rng.random_range(0..nbrs.len())];
        Some(Jump { from, to, dt })
    }

    /// Advances the clock by `jump.dt` and moves one particle.
    pub fn apply(&mut self, graph: &GasketGraph, model: &RateModel, jump: &Jump) {
        let Jump { from, to, dt } = *jump;
        debug_assert!(self.occupancy[from] > 0);
        self.clock += dt;
        self.occupancy[from] -= 1;
        self.occupancy[to] += 1;
        self.rates
            .set(from, graph.degree(from) as f64 * model.rate(self.occupancy[from]));
        self.rates
            .set(to, graph.degree(to) as f64 * model.rate(self.occupancy[to]));
        self.events += 1;
    }

    /// Sets the clock without moving particles (used when a run stops
    /// between events).
    fn advance_clock(&mut self, to: f64) {
        self.clock = to;
    }
}

/// One exact CTMC step.
pub fn step<R: Rng + ?Sized>(
    config: &mut ZrpConfiguration,
    graph: &GasketGraph,
    model: &RateModel,
    rng: &mut R,
) -> StepOutcome {
    match config.next_event(graph, rng) {
        Some(jump) => {
            config.apply(graph, model, &jump);
            StepOutcome::Jump(jump)
        }
        None => StepOutcome::Absorbed,
    }
}

/// Callbacks driven by [`run`]. Times passed here are macroscopic.
pub trait Observer {
    /// The configuration stays as it is for `macro_dt`.
    fn hold(&mut self, _config: &ZrpConfiguration, _macro_dt: f64) {}

    /// `config` is the state after `jump`.
    fn jump(&mut self, _config: &ZrpConfiguration, _jump: &Jump) {}

    /// State at the `index`-th requested sample time.
    fn sample(&mut self, _index: usize, _macro_time: f64, _config: &ZrpConfiguration) {}
}

impl Observer for () {}

/// Records the full occupancy vector at each sample time.
#[derive(Debug, Default)]
pub struct SnapshotObserver {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<u32>>,
}

impl Observer for SnapshotObserver {
    fn sample(&mut self, _index: usize, macro_time: f64, config: &ZrpConfiguration) {
        self.times.push(macro_time);
        self.snapshots.push(config.occupancy().to_vec());
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    /// Final macroscopic time.
    pub horizon: f64,
}

/// `5^n`: microscopic time per unit of macroscopic time.
pub fn time_scale(level: u32) -> f64 {
    5f64.powi(level as i32)
}

/// Runs the process sped up by `5^n` over the macroscopic interval
/// `[0, horizon]`, sampling the right-continuous path at `sample_times`.
pub fn run<R: Rng + ?Sized, O: Observer + ?Sized>(
    config: &mut ZrpConfiguration,
    graph: &GasketGraph,
    model: &RateModel,
    horizon: f64,
    sample_times: &[f64],
    observer: &mut O,
    rng: &mut R,
) -> Result<RunSummary> {
    if config.level != graph.level() {
        return Err(Error::LevelMismatch {
            expected: graph.level(),
            got: config.level,
        });
    }
    if !(horizon >= 0.0) {
        return Err(domain(format!("horizon must be non-negative, got {horizon}")));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0])
        || sample_times.iter().any(|&t| !(0.0..=horizon).contains(&t))
    {
        return Err(domain("sample times must be ascending within [0, horizon]"));
    }

    let scale = time_scale(graph.level());
    let start = config.clock;
    let end = start + horizon * scale;
    let micro = |s: f64| start + s * scale;
    let mut next_sample = 0;
    let mut now = start;
    let events_before = config.events;

    loop {
        let event = config.next_event(graph, rng);
        let t_next = event.map_or(f64::INFINITY, |j| now + j.dt);
        let stop = t_next > end;
        // Samples strictly before the next event see the current state; at
        // the end of the run every remaining sample time equals the horizon.
        while next_sample < sample_times.len()
            && (stop || micro(sample_times[next_sample]) < t_next)
        {
            let ts = micro(sample_times[next_sample]).min(end);
            observer.hold(config, (ts - now) / scale);
            now = ts;
            observer.sample(next_sample, sample_times[next_sample], config);
            next_sample += 1;
        }
        match event {
            Some(jump) if !stop => {
                observer.hold(config, (t_next - now) / scale);
                config.apply(graph, model, &jump);
                now = config.clock;
                observer.jump(config, &jump);
            }
            _ => {
                observer.hold(config, (end - now) / scale);
                config.advance_clock(end);
                break;
            }
        }
    }
    Ok(RunSummary {
        events: config.events - events_before,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::build_gasket;
    use crate::rng::replica_rng;
    use crate::zrp::equilibrium::{sample_equilibrium, solve_fugacity};

    #[test]
    fn empty_system_is_absorbing() {
        let g = build_gasket(2).unwrap();
        let m = RateModel::linear();
        let mut c = ZrpConfiguration::new(&g, &m, vec![0; g.len()]).unwrap();
        assert_eq!(step(&mut c, &g, &m, &mut replica_rng(1, 0)), StepOutcome::Absorbed);
        let mut obs = SnapshotObserver::default();
        run(&mut c, &g, &m, 1.0, &[0.0, 0.5, 1.0], &mut obs, &mut replica_rng(1, 0)).unwrap();
        assert_eq!(obs.times, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn single_corner_particle() {
        // A lone particle at a degree-2 corner leaves at rate 2 to either neighbour.
        let g = build_gasket(2).unwrap();
        let m = RateModel::linear();
        let a0 = g.corners()[0];
        let mut occ = vec![0; g.len()];
        occ[a0] = 1;
        let base = ZrpConfiguration::new(&g, &m, occ).unwrap();
        assert_eq!(base.total_rate(), 2.0);
        let mut rng = replica_rng(3, 0);
        let trials = 20_000;
        let mut dt_sum = 0.0;
        let mut first = 0;
        for _ in 0..trials {
            let mut c = base.clone();
            match step(&mut c, &g, &m, &mut rng) {
                StepOutcome::Jump(j) => {
                    assert_eq!(j.from, a0);
                    assert!(g.neighbors(a0).contains(&j.to));
                    dt_sum += j.dt;
                    if j.to == g.neighbors(a0)[0] {
                        first += 1;
                    }
                }
                StepOutcome::Absorbed => unreachable!(),
            }
        }
        let mean = dt_sum / trials as f64;
        // Exp(2): mean 0.5, sd 0.5.
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (trials as f64).sqrt());
        let frac = first as f64 / trials as f64;
        assert!((frac - 0.5).abs() < 3.0 * 0.5 / (trials as f64).sqrt());
    }

    #[test]
    fn conservation_and_rate_consistency() {
        let g = build_gasket(3).unwrap();
        let m = RateModel::Affine { slope: 1.0, offset: 0.5 };
        let p = solve_fugacity(&m, 1.3).unwrap();
        let mut rng = replica_rng(11, 0);
        let mut c = sample_equilibrium(&p, &g, &m, &mut rng).unwrap();
        let n0 = c.particles();
        for i in 0..200_000 {
            step(&mut c, &g, &m, &mut rng);
            if i % 50_000 == 0 {
                assert!(c.rates_consistent(&g, &m));
                assert_eq!(c.occupancy().iter().map(|&k| k as u64).sum::<u64>(), n0);
            }
        }
        assert!(c.rates_consistent(&g, &m));
        assert_eq!(c.events(), 200_000);
    }

    #[test]
    fn zero_horizon_sees_initial_state() {
        let g = build_gasket(2).unwrap();
        let m = RateModel::linear();
        let p = solve_fugacity(&m, 1.0).unwrap();
        let mut rng = replica_rng(2, 0);
        let mut c = sample_equilibrium(&p, &g, &m, &mut rng).unwrap();
        let init = c.occupancy().to_vec();
        let mut obs = SnapshotObserver::default();
        let summary = run(&mut c, &g, &m, 0.0, &[0.0], &mut obs, &mut rng).unwrap();
        assert_eq!(summary.events, 0);
        assert_eq!(obs.snapshots, vec![init]);
    }

    #[test]
    fn run_validates_sample_times() {
        let g = build_gasket(1).unwrap();
        let m = RateModel::linear();
        let mut c = ZrpConfiguration::new(&g, &m, vec![1; g.len()]).unwrap();
        let mut rng = replica_rng(0, 0);
        assert!(run(&mut c, &g, &m, 1.0, &[0.5, 0.2], &mut (), &mut rng).is_err());
        assert!(run(&mut c, &g, &m, 1.0, &[2.0], &mut (), &mut rng).is_err());
    }

    #[test]
    fn holds_cover_the_horizon_and_samples_conserve_mass() {
        struct Clock {
            held: f64,
            samples: Vec<(f64, u64)>,
        }
        impl Observer for Clock {
            fn hold(&mut self, _c: &ZrpConfiguration, dt: f64) {
                assert!(dt >= 0.0);
                self.held += dt;
            }
            fn sample(&mut self, _i: usize, t: f64, c: &ZrpConfiguration) {
                assert!((self.held - t).abs() < 1e-9);
                self.samples.push((t, c.occupancy().iter().map(|&k| k as u64).sum()));
            }
        }
        let g = build_gasket(2).unwrap();
        let m = RateModel::linear();
        let p = solve_fugacity(&m, 2.0).unwrap();
        let mut rng = replica_rng(9, 1);
        let mut c = sample_equilibrium(&p, &g, &m, &mut rng).unwrap();
        let n0 = c.particles();
        let mut obs = Clock { held: 0.0, samples: vec![] };
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        run(&mut c, &g, &m, 1.0, &times, &mut obs, &mut rng).unwrap();
        assert!((obs.held - 1.0).abs() < 1e-9);
        assert_eq!(obs.samples.len(), 11);
        assert!(obs.samples.iter().all(|&(_, n)| n == n0));
        assert!((c.clock() - 25.0).abs() < 1e-9);
    }
}
