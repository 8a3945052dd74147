use fractal_zrp::analysis::{
    autocovariance, bg_statistic, dynkin_decomposition, empirical_measure, fluctuation_field,
    initial_field_covariance, max_jump, Channel, Ensemble, FieldObserver, FieldSeries, ReplicaSeries,
    TestFunction,
};
use fractal_zrp::energy::{discrete_laplacian, GridFunction};
use fractal_zrp::gasket::GasketGraph;
use fractal_zrp::ou::simulate;
use fractal_zrp::rng::replica_rng;
use fractal_zrp::stats::Estimate;
use fractal_zrp::zrp::{run, sample_equilibrium, solve_fugacity, EquilibriumProfile, Jump, Observer};
use fractal_zrp::{build_gasket, Error, Grid, Ou, OuState, RateModel, ZrpConfiguration};
use rand_distr::{Distribution, StandardNormal};

fn bump(g: &GasketGraph) -> Grid {
    GridFunction::from_fn(g, |x, y| (2.0 * x).sin() + y * y)
}

#[test]
fn static_covariance_matches_product_measure() {
    let g = build_gasket(3).unwrap();
    let model = RateModel::Affine { slope: 1.0, offset: 0.5 };
    let profile = solve_fugacity(&model, 1.3).unwrap();
    let fs = [bump(&g), GridFunction::from_fn(&g, |x, _| x)];
    let cov = initial_field_covariance(&profile, &fs).unwrap();
    assert!((cov.exact.clone() - cov.stated.clone() * profile.chi).abs().max() < 1e-15);
    let samples: Vec<[f64; 2]> = (0..20_000u64)
        .map(|r| {
            let mut rng = replica_rng(41, r);
            let c = sample_equilibrium(&profile, &g, &model, &mut rng).unwrap();
            [
                fluctuation_field(&c, &fs[0], profile.rho).unwrap(),
                fluctuation_field(&c, &fs[1], profile.rho).unwrap(),
            ]
        })
        .collect();
    for i in 0..2 {
        let mean = Estimate::of(&samples.iter().map(|s| s[i]).collect::<Vec<_>>()).unwrap();
        assert!(mean.within(0.0, 4.0));
        for j in i..2 {
            let prods: Vec<f64> = samples.iter().map(|s| s[i] * s[j]).collect();
            let e = Estimate::of(&prods).unwrap();
            assert!(e.within(cov.exact[(i, j)], 4.0), "({i},{j}) {} vs {}", e.mean, cov.exact[(i, j)]);
        }
    }
}

#[test]
fn empirical_measure_concentrates() {
    let model = RateModel::linear();
    let profile = solve_fugacity(&model, 2.0).unwrap();
    let mut spreads = Vec::new();
    for n in [2u32, 4, 6] {
        let g = build_gasket(n).unwrap();
        let f = bump(&g);
        let target = 2.0 * f.inner(&GridFunction::constant(&g, 1.0)).unwrap();
        let vals: Vec<f64> = (0..200u64)
            .map(|r| {
                let mut rng = replica_rng(n as u64, r);
                let c = sample_equilibrium(&profile, &g, &model, &mut rng).unwrap();
                empirical_measure(&c, &f).unwrap()
            })
            .collect();
        let e = Estimate::of(&vals).unwrap();
        assert!(e.within(target, 4.0));
        spreads.push(e.variance.sqrt());
    }
    assert!(spreads[1] < spreads[0] && spreads[2] < spreads[1]);
    // Each level shrinks the spread by about 3 = sqrt(9).
    assert!(spreads[2] < spreads[0] / 5.0);
}

/// Recomputes every integrand from the full configuration between events and
/// compares with the incremental observer.
struct BruteForce<'a> {
    inner: FieldObserver,
    graph: &'a GasketGraph,
    model: RateModel,
    profile: EquilibriumProfile,
    f: Vec<f64>,
    lap: Vec<f64>,
    compensator: f64,
    bg: f64,
    qv: f64,
    max_jump: f64,
    last: Vec<u32>,
    checked: Vec<[f64; 5]>,
}

impl Observer for BruteForce<'_> {
    fn hold(&mut self, config: &ZrpConfiguration, dt: f64) {
        self.inner.hold(config, dt);
        let s = 3f64.powf(-(self.graph.level() as f64) / 2.0);
        let p = &self.profile;
        let (mut comp, mut bg) = (0.0, 0.0);
        for (x, &k) in config.occupancy().iter().enumerate() {
            let h = self.model.rate(k);
            comp += (h - p.phi) * self.lap[x];
            bg += (h - p.phi - p.dphi * (k as f64 - p.rho)) * self.f[x];
        }
        self.compensator += s * comp * dt;
        self.bg += s * bg * dt;
    }

    fn jump(&mut self, config: &ZrpConfiguration, jump: &Jump) {
        self.inner.jump(config, jump);
        let s = 3f64.powf(-(self.graph.level() as f64) / 2.0);
        let before: f64 = self.last.iter().zip(&self.f).map(|(&k, f)| k as f64 * f).sum();
        let after: f64 = config.occupancy().iter().zip(&self.f).map(|(&k, f)| k as f64 * f).sum();
        let dz = s * (after - before);
        self.qv += dz * dz;
        self.max_jump = self.max_jump.max(dz.abs());
        self.last = config.occupancy().to_vec();
    }

    fn sample(&mut self, index: usize, t: f64, config: &ZrpConfiguration) {
        self.inner.sample(index, t, config);
        let field = fluctuation_field(
            config,
            &GridFunction::new(self.graph, self.f.clone()).unwrap(),
            self.profile.rho,
        )
        .unwrap();
        self.checked.push([field, self.compensator, self.qv, self.bg, self.max_jump]);
    }
}

#[test]
fn incremental_observer_matches_brute_force() {
    let g = build_gasket(3).unwrap();
    for model in [
        RateModel::linear(),
        RateModel::constant(),
        RateModel::Affine { slope: 1.0, offset: 0.5 },
    ] {
        let profile = solve_fugacity(&model, 1.0).unwrap();
        let f = bump(&g);
        let tf = [TestFunction::new("f", f.clone())];
        let mut rng = replica_rng(8, 0);
        let mut config = sample_equilibrium(&profile, &g, &model, &mut rng).unwrap();
        let inner = FieldObserver::new(&g, &model, &profile, &tf, None, &config).unwrap();
        let channels = inner.channels().to_vec();
        let mut obs = BruteForce {
            inner,
            graph: &g,
            model: model.clone(),
            profile: profile.clone(),
            lap: discrete_laplacian(&f, &g).unwrap().into_values(),
            f: f.into_values(),
            compensator: 0.0,
            bg: 0.0,
            qv: 0.0,
            max_jump: 0.0,
            last: config.occupancy().to_vec(),
            checked: Vec::new(),
        };
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.01).collect();
        run(&mut config, &g, &model, 0.1, &times, &mut obs, &mut rng).unwrap();
        let col = |c: Channel| channels.iter().position(|&x| x == c).unwrap();
        for (row, brute) in obs.inner.rows.iter().zip(&obs.checked) {
            let got = [
                row[col(Channel::Field)],
                row[col(Channel::Compensator)],
                row[col(Channel::Qv)],
                row[col(Channel::Bg)],
                row[col(Channel::MaxJump)],
            ];
            for (a, b) in got.iter().zip(brute) {
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{model:?}: {got:?} vs {brute:?}");
            }
        }
        assert!(obs.inner.events > 1000);
    }
}

fn small_ensemble(model: &RateModel, block: Option<u32>, replicas: u64) -> (FieldSeries, GasketGraph) {
    let g = build_gasket(3).unwrap();
    let profile = solve_fugacity(model, 1.0).unwrap();
    let f = bump(&g);
    let lap = discrete_laplacian(&f, &g).unwrap();
    let functions = [TestFunction::new("f", f), TestFunction::new("lap", lap)];
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.005).collect();
    let series = Ensemble {
        graph: &g,
        model,
        profile: &profile,
        functions: &functions,
        block_scale: block,
        horizon: 0.1,
        sample_times: &times,
        seed: 12,
        replicas,
    }
    .simulate()
    .unwrap();
    (series, g)
}

#[test]
fn linear_rates_give_closed_compensator_and_no_bg_term() {
    let model = RateModel::Linear { slope: 2.0 };
    let (series, _) = small_ensemble(&model, Some(1), 8);
    let dphi: f64 = series.meta_parse("dphi").unwrap();
    assert_eq!(dphi, 2.0);
    let integrand = series.channel("f", Channel::Integrand).unwrap();
    let lap_field = series.channel("lap", Channel::Field).unwrap();
    for (a, b) in integrand.iter().flatten().zip(lap_field.iter().flatten()) {
        assert!((a - dphi * b).abs() < 1e-9 * (1.0 + b.abs()));
    }
    for ch in [Channel::Bg, Channel::BgBlock] {
        assert!(series.channel("f", ch).unwrap().iter().flatten().all(|&v| v == 0.0));
    }
    let report = bg_statistic(&series, "f", None).unwrap();
    assert_eq!(report.variance.variance, 0.0);
    assert_eq!(report.block_scale, Some(1));
}

#[test]
fn dynkin_martingale_is_centered_and_jumps_are_bounded() {
    let model = RateModel::Affine { slope: 1.0, offset: 0.5 };
    let (series, g) = small_ensemble(&model, None, 200);
    assert_eq!(series.replicas.len(), 200);
    let d = dynkin_decomposition(&series, "f").unwrap();
    assert!(d.exact_compensator && d.event_qv);
    let last = series.times.len() - 1;
    assert!(d.martingale_at(last).unwrap().within(0.0, 4.0));
    // E[QV rate] = 2 φ 𝓔_n(f).
    let phi: f64 = series.meta_parse("phi").unwrap();
    let energy: f64 = series.meta_parse("energy.f").unwrap();
    assert!(d.qv_rate().unwrap().within(2.0 * phi * energy, 4.0));
    let mj = max_jump(&series, "f").unwrap();
    assert!(mj.holds());
    assert!(mj.max_jump > 0.0 && mj.max_jump <= mj.bound);
    let sup = bump(&g).sup_norm();
    assert!((mj.bound - 2.0 * sup / 27f64.sqrt()).abs() < 1e-12);
}

fn series_from(values: Vec<Vec<f64>>, dt: f64) -> FieldSeries {
    let t = values[0].len();
    let mut s = FieldSeries::new(
        vec!["f".into()],
        vec![Channel::Field],
        (0..t).map(|i| i as f64 * dt).collect(),
    );
    s.set_meta("level", 0);
    for (r, v) in values.into_iter().enumerate() {
        s.push(ReplicaSeries {
            replica: r as u64,
            seed: 0,
            values: v.into_iter().map(|x| vec![x]).collect(),
        })
        .unwrap();
    }
    s
}

#[test]
fn white_noise_has_no_memory() {
    let mut rng = replica_rng(3, 0);
    let values: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..200).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let ac = autocovariance(&series_from(values, 0.1), "f", 10, Some(0.0)).unwrap();
    assert_eq!(ac.samples, 10_000);
    assert!((ac.values[0] - 1.0).abs() < 4.0 * ac.std_errors[0]);
    for (c, se) in ac.values[1..].iter().zip(&ac.std_errors[1..]) {
        assert!(c.abs() < 4.0 * se);
    }
    assert!((ac.lags[3] - 0.3).abs() < 1e-12);
}

#[test]
fn ou_input_recovers_decay_rate() {
    let p = Ou::new(0.5, 1.5, vec![0.0, 4.0]).unwrap();
    let kappa = p.beta * p.lambdas[1];
    let window = 2.0 / kappa;
    let dt = window / 24.0;
    let values: Vec<Vec<f64>> = (0..200u64)
        .map(|r| {
            let mut rng = replica_rng(77, r);
            let y0: f64 = StandardNormal.sample(&mut rng);
            let y0 = y0 * p.stationary_variance().sqrt();
            simulate(OuState::new(vec![0.0, y0]), &p, dt, 24 * 40, &mut rng)
                .unwrap()
                .iter()
                .map(|s| s.y[1])
                .collect()
        })
        .collect();
    let ac = autocovariance(&series_from(values, dt), "f", 24, Some(0.0)).unwrap();
    let fit = ac.fit_decay(window).unwrap();
    assert!((fit.rate / kappa - 1.0).abs() < 0.1, "{} vs {kappa}", fit.rate);
    assert!((fit.c0 / p.stationary_variance() - 1.0).abs() < 0.1);
}

#[test]
fn too_little_data_is_reported() {
    let s = series_from(vec![vec![0.0; 40]; 2], 0.1);
    assert!(matches!(
        autocovariance(&s, "f", 3, None),
        Err(Error::InsufficientData { .. })
    ));
    let s = series_from(vec![vec![0.0; 200]; 1], 0.1);
    assert!(matches!(
        autocovariance(&s, "f", 3, None),
        Err(Error::InsufficientData { .. })
    ));
    // No integrand channel, no Dynkin decomposition.
    assert!(dynkin_decomposition(&s, "f").is_err());
}

#[test]
fn csv_round_trip() {
    let (series, _) = small_ensemble(&RateModel::constant(), Some(1), 3);
    let mut buf = Vec::new();
    series.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# format=field-series\n# version=1\n"));
    let back = FieldSeries::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.labels, series.labels);
    assert_eq!(back.channels, series.channels);
    assert_eq!(back.times, series.times);
    assert_eq!(back.meta, series.meta);
    assert_eq!(back.replicas.len(), 3);
    for (a, b) in back.replicas.iter().zip(&series.replicas) {
        assert_eq!(a.values, b.values);
        assert_eq!((a.replica, a.seed), (b.replica, b.seed));
    }
    assert!(FieldSeries::read_csv("replica,seed,time\n".as_bytes()).is_err());
}

#[test]
fn ensembles_are_reproducible() {
    let model = RateModel::constant();
    let (a, _) = small_ensemble(&model, None, 4);
    let (b, _) = small_ensemble(&model, None, 4);
    for (x, y) in a.replicas.iter().zip(&b.replicas) {
        assert_eq!(x.values, y.values);
    }
    assert_eq!(a.meta_str("events").unwrap(), b.meta_str("events").unwrap());
}

#[test]
fn compensator_integrand_variance_stays_bounded() {
    // For an eigenmode, Var(3^{-n/2} Σ (h - φ) Δv) = Var h(η) λ² ‖v‖² = Var h(η) λ².
    let model = RateModel::Affine { slope: 1.0, offset: 0.5 };
    let profile = solve_fugacity(&model, 1.0).unwrap();
    let var_h = profile.expect(|k| (model.rate(k) - profile.phi).powi(2));
    let mut closed = Vec::new();
    for n in 3..=5u32 {
        let g = build_gasket(n).unwrap();
        let basis: fractal_zrp::Basis = fractal_zrp::spectrum::eigendecompose(&g).unwrap();
        let v = basis.mode(1);
        let lap = discrete_laplacian(&v, &g).unwrap();
        let s = 3f64.powf(-(n as f64) / 2.0);
        let exact = var_h * lap.values().iter().map(|x| x * x).sum::<f64>() * s * s;
        assert!((exact / (var_h * basis.eigenvalue(1).powi(2)) - 1.0).abs() < 1e-8);
        if n == 3 {
            let draws: Vec<f64> = (0..4000u64)
                .map(|r| {
                    let mut rng = replica_rng(61, r);
                    let c = sample_equilibrium(&profile, &g, &model, &mut rng).unwrap();
                    let sum: f64 = c
                        .occupancy()
                        .iter()
                        .zip(lap.values())
                        .map(|(&k, l)| (model.rate(k) - profile.phi) * l)
                        .sum();
                    (s * sum).powi(2)
                })
                .collect();
            assert!(Estimate::of(&draws).unwrap().within(exact, 4.0));
        }
        closed.push(exact);
    }
    for w in closed.windows(2) {
        assert!(w[1] <= 2.0 * w[0], "{closed:?}");
    }
}

#[test]
fn carre_du_champ_is_bounded_for_harmonic_extensions() {
    // E[(5/3)^n Σ_{x→y} h(η(x)) (f(y) - f(x))²] = φ 𝓔_n(f) = φ 𝓔_2(f) along harmonic extension.
    let model = RateModel::Affine { slope: 1.0, offset: 0.5 };
    let profile = solve_fugacity(&model, 1.5).unwrap();
    let graphs: Vec<GasketGraph> = (0..=5).map(|n| build_gasket(n).unwrap()).collect();
    let mut f = GridFunction::from_fn(&graphs[2], |x, y| x * x - (3.0 * y).cos());
    let e2 = fractal_zrp::energy::energy_form(&f, &f, &graphs[2]).unwrap();
    for (n, g) in graphs.iter().enumerate().skip(3) {
        f = fractal_zrp::energy::harmonic_extension(&f, g).unwrap();
        let scale = (5.0f64 / 3.0).powi(n as i32);
        let en = fractal_zrp::energy::energy_form(&f, &f, g).unwrap();
        assert!((en - e2).abs() < 1e-10 * e2);
        let draws: Vec<f64> = (0..400u64)
            .map(|r| {
                let mut rng = replica_rng(71 + n as u64, r);
                let c = sample_equilibrium(&profile, g, &model, &mut rng).unwrap();
                let occ = c.occupancy();
                let fv = f.values();
                // Each unordered edge carries both directions; the energy form
                // counts it once, so halve the directed sum.
                let directed: f64 = (0..g.len())
                    .flat_map(|x| g.neighbors(x).iter().map(move |&y| (x, y)))
                    .map(|(x, y)| model.rate(occ[x]) * (fv[y] - fv[x]).powi(2))
                    .sum();
                0.5 * scale * directed
            })
            .collect();
        let e = Estimate::of(&draws).unwrap();
        assert!(e.within(profile.phi * e2, 4.0), "n={n}: {} vs {}", e.mean, profile.phi * e2);
        assert!(e.mean <= profile.phi * e2 + 4.0 * e.std_error);
    }
}
