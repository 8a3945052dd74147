use fractal_zrp::energy::{
    discrete_laplacian, energy_form, harmonic_extension, holder_ratio, local_energy_sup, sobolev_norm,
    GridFunction,
};
use fractal_zrp::gasket::{block_size, build_gasket, cells, Symmetry};
use fractal_zrp::spectrum::{eigendecompose, project, reconstruct, renormalized_eigenvalue_table};
use fractal_zrp::verify::oracle::harmonic_extension_direct;
use fractal_zrp::{Basis, Exact, ExactGrid, Grid};
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn grid(n: u32, values: &[f64]) -> Grid {
    let g = build_gasket(n).unwrap();
    GridFunction::new(&g, values[..g.len()].to_vec()).unwrap()
}

#[test]
fn counts_up_to_level_ten() {
    for n in 0..=10 {
        let g = build_gasket(n).unwrap();
        assert_eq!(g.len(), 3 * (3usize.pow(n) + 1) / 2);
        assert_eq!(g.edges().len(), 3usize.pow(n + 1));
        let deg2 = (0..g.len()).filter(|&x| g.degree(x) == 2).count();
        assert_eq!(deg2, 3);
        assert!((0..g.len()).all(|x| matches!(g.degree(x), 2 | 4)));
    }
    assert_eq!(build_gasket(1).unwrap().edges().len(), 9);
    assert!(build_gasket(13).is_err());
}

#[test]
fn edges_have_length_two_to_minus_n() {
    for n in 0..=5 {
        let g = build_gasket(n).unwrap();
        let h = 0.5f64.powi(n as i32);
        for &(x, y) in g.edges() {
            assert!((g.vertex(x).distance(&g.vertex(y)) - h).abs() < 1e-12);
        }
    }
}

#[test]
fn contractions_map_into_next_level() {
    for n in 0..=8u32 {
        let g = build_gasket(n).unwrap();
        let fine = build_gasket(n + 1).unwrap();
        let s = 1u32 << n;
        for v in g.vertices() {
            for (da, db) in [(0, 0), (s, 0), (0, s)] {
                assert!(fine.index_of(v.a + da, v.b + db).is_some());
            }
        }
    }
}

#[test]
fn blocks_partition_edges() {
    for (n, k) in [(3u32, 1u32), (4, 2), (5, 2), (4, 0), (3, 3)] {
        let g = build_gasket(n).unwrap();
        let reps = g.block_representatives(k).unwrap();
        assert_eq!(reps.len(), 3usize.pow(n - k));
        let blocks: Vec<Vec<usize>> = reps.iter().map(|&x| g.block_triangle(x, k).unwrap()).collect();
        for b in &blocks {
            assert_eq!(b.len(), block_size(k));
        }
        for &(x, y) in g.edges() {
            let owners = blocks
                .iter()
                .filter(|b| b.binary_search(&x).is_ok() && b.binary_search(&y).is_ok())
                .count();
            assert_eq!(owners, 1, "edge ({x},{y}) at n={n}, k={k}");
        }
        // Every vertex's own block is one of the representatives' blocks.
        for x in 0..g.len() {
            let own = g.block_triangle(x, k).unwrap();
            assert!(blocks.contains(&own));
        }
    }
    let g = build_gasket(3).unwrap();
    assert!(g.block_triangle(0, 4).is_err());
    let corner = g.block_triangle(g.corners()[0], 1).unwrap();
    assert_eq!(corner.len(), 6);
    assert_eq!(build_gasket(2).unwrap().block_representatives(1).unwrap().len(), 3);
    assert_eq!(cells(3).len(), 27);
}

#[test]
fn exact_energy_examples() {
    let g0 = build_gasket(0).unwrap();
    let g1 = build_gasket(1).unwrap();
    let one = Exact::one();
    let f = ExactGrid::new(&g0, vec![one.clone(), Exact::zero(), Exact::zero()]).unwrap();
    assert_eq!(energy_form(&f, &f, &g0).unwrap(), BigRational::from_integer(2.into()));
    let h = harmonic_extension(&f, &g1).unwrap();
    assert_eq!(energy_form(&h, &h, &g1).unwrap(), BigRational::from_integer(2.into()));
    let lap = discrete_laplacian(&f, &g0).unwrap();
    let ints: Vec<Exact> = [-2, 1, 1].iter().map(|&v: &i64| BigRational::from_integer(v.into())).collect();
    assert_eq!(lap.values(), &ints[..]);
}

#[test]
fn extension_matches_direct_solve() {
    for n in 0..=4u32 {
        let coarse = build_gasket(n).unwrap();
        let fine = build_gasket(n + 1).unwrap();
        let f = GridFunction::from_fn(&coarse, |x, y| (3.0 * x).sin() + y * y - x * y);
        let local = harmonic_extension(&f, &fine).unwrap();
        let direct = harmonic_extension_direct(&f, &coarse, &fine).unwrap();
        for (a, b) in local.values().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn repeated_extension_preserves_energy() {
    let graphs: Vec<_> = (0..=6).map(|n| build_gasket(n).unwrap()).collect();
    let f = GridFunction::from_fn(&graphs[2], |x, y| x.exp() - 2.0 * y);
    let e = energy_form(&f, &f, &graphs[2]).unwrap();
    let mut h = f;
    for j in 1..=3 {
        h = harmonic_extension(&h, &graphs[2 + j]).unwrap();
        let ej = energy_form(&h, &h, &graphs[2 + j]).unwrap();
        assert!((ej - e).abs() < 1e-10 * e);
        // Restriction undoes extension.
        let back = h.restrict(&graphs[2 + j], &graphs[2 + j - 1]).unwrap();
        assert_eq!(back.len(), graphs[2 + j - 1].len());
    }
}

#[test]
fn local_energy_decreases_under_extension() {
    let graphs: Vec<_> = (0..=6).map(|n| build_gasket(n).unwrap()).collect();
    let f0 = GridFunction::from_fn(&graphs[2], |x, y| (x - 0.3).powi(2) + y);
    let mut h = f0;
    let mut prev = local_energy_sup(&h, &graphs[2]).unwrap();
    for j in 1..=4 {
        h = harmonic_extension(&h, &graphs[2 + j]).unwrap();
        let cur = local_energy_sup(&h, &graphs[2 + j]).unwrap();
        assert!(cur < prev, "j={j}: {cur} >= {prev}");
        prev = cur;
    }
}

#[test]
fn energy_is_monotone_for_polynomial_restrictions() {
    let graphs: Vec<_> = (0..=7).map(|n| build_gasket(n).unwrap()).collect();
    let mut seed = 7u64;
    let mut next = || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    for _ in 0..100 {
        let c: Vec<f64> = (0..6).map(|_| next()).collect();
        let p = |x: f64, y: f64| c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y;
        let mut prev = 0.0;
        for g in graphs.iter().take(7) {
            let f = GridFunction::from_fn(g, p);
            let e = energy_form(&f, &f, g).unwrap();
            assert!(e >= prev * (1.0 - 1e-12));
            prev = e;
        }
    }
}

#[test]
fn holder_examples() {
    let g0 = build_gasket(0).unwrap();
    let f = grid(0, &[1.0, 0.0, 0.0]);
    assert!((holder_ratio(&f, &g0).unwrap() - 1.0).abs() < 1e-15);
    let g3 = build_gasket(3).unwrap();
    assert_eq!(holder_ratio(&GridFunction::constant(&g3, 4.0), &g3).unwrap(), 0.0);
}

#[test]
fn sobolev_norm_examples() {
    let g = build_gasket(3).unwrap();
    let basis: Basis = eigendecompose(&g).unwrap();
    let v1 = project(&basis.mode(1), &basis).unwrap();
    for m in [0.0, 0.5, 1.0, 2.0] {
        let expect = basis.eigenvalue(1).powf(m / 2.0);
        assert!((sobolev_norm(&v1, m, &basis).unwrap() - expect).abs() < 1e-9 * expect);
    }
    let f = GridFunction::from_fn(&g, |x, y| x * x + y.sin());
    let c = project(&f, &basis).unwrap();
    let l2 = f.l2_norm();
    assert!((sobolev_norm(&c, 0.0, &basis).unwrap() - l2).abs() < 1e-12 * l2.max(1.0));
    let e = energy_form(&f, &f, &g).unwrap().sqrt();
    assert!((sobolev_norm(&c, 1.0, &basis).unwrap() - e).abs() < 1e-9 * e);
    let constant = project(&GridFunction::constant(&g, 2.0), &basis).unwrap();
    assert!(sobolev_norm(&constant, 1.0, &basis).unwrap() < 1e-6);
}

#[test]
fn spectrum_is_symmetry_invariant() {
    for n in 2..=4 {
        let g = build_gasket(n).unwrap();
        let basis: Basis = eigendecompose(&g).unwrap();
        for op in [Symmetry::Reflect, Symmetry::Rotate] {
            let perm = g.symmetry_permutation(op);
            // The permuted graph has the same edge set, hence the same spectrum;
            // check each eigenvector maps into its own eigenspace.
            for k in 1..basis.modes().min(30) {
                let v = basis.vector(k);
                let pv: Vec<f64> = (0..g.len()).map(|x| v[perm[x]]).collect();
                let f = GridFunction::new(&g, pv).unwrap();
                let lap = discrete_laplacian(&f, &g).unwrap();
                let lam = basis.eigenvalue(k);
                let resid = lap
                    .values()
                    .iter()
                    .zip(f.values())
                    .map(|(a, b)| (a + lam * b).abs())
                    .fold(0.0, f64::max);
                assert!(resid < 1e-8 * (1.0 + lam), "n={n} k={k} {op:?}: {resid}");
            }
        }
    }
}

/// Characteristic polynomial by Faddeev-LeVerrier in exact arithmetic.
fn char_poly(m: &[Vec<Exact>]) -> Vec<Exact> {
    let n = m.len();
    let mul = |a: &[Vec<Exact>], b: &[Vec<Exact>]| -> Vec<Vec<Exact>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).fold(Exact::zero(), |acc, k| acc + &a[i][k] * &b[k][j]))
                    .collect()
            })
            .collect()
    };
    // c[k] is the coefficient of λ^(n-k).
    let mut c = vec![Exact::one()];
    let mut mk: Vec<Vec<Exact>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Exact::one() } else { Exact::zero() }).collect())
        .collect();
    for k in 1..=n {
        let am = mul(m, &mk);
        let trace = (0..n).fold(Exact::zero(), |acc, i| acc + &am[i][i]);
        let ck = -trace / BigRational::from_integer((k as i64).into());
        mk = am;
        for (i, row) in mk.iter_mut().enumerate() {
            row[i] += &ck;
        }
        c.push(ck);
    }
    c
}

#[test]
fn level_one_spectrum_matches_characteristic_polynomial() {
    let g = build_gasket(1).unwrap();
    let n = g.len();
    let five = BigRational::from_integer(5.into());
    let mut m = vec![vec![Exact::zero(); n]; n];
    for (x, row) in m.iter_mut().enumerate() {
        row[x] = &five * BigRational::from_integer((g.degree(x) as i64).into());
        for &y in g.neighbors(x) {
            row[y] = -five.clone();
        }
    }
    let c: Vec<f64> = char_poly(&m)
        .iter()
        .map(|q| q.numer().to_string().parse::<f64>().unwrap() / q.denom().to_string().parse::<f64>().unwrap())
        .collect();
    let basis: Basis = eigendecompose(&g).unwrap();
    for &lam in basis.eigenvalues() {
        let (mut p, mut scale) = (0.0, 0.0);
        for (k, ck) in c.iter().enumerate() {
            let term = ck * lam.powi((n - k) as i32);
            p += term;
            scale += term.abs();
        }
        assert!(p.abs() <= 1e-10 * scale, "λ={lam}: p={p}");
    }
    // Trace identity.
    let sum: f64 = basis.eigenvalues().iter().sum();
    assert!((sum + c[1]).abs() < 1e-9 * sum);
    assert_eq!(basis.eigenvalues()[0], 0.0);
}

#[test]
fn low_modes_converge_across_levels() {
    let table = renormalized_eigenvalue_table::<f64>(&[2, 3, 4, 5, 6], 11).unwrap();
    let gaps = table.relative_gaps();
    // k = 1 differences shrink with n.
    for w in gaps.windows(2) {
        assert!(w[1][0] < w[0][0]);
    }
    // Between the two finest levels every low mode moves by less than 5%.
    assert!(gaps.last().unwrap().iter().all(|&g| g < 0.05));
    assert!(table.rows.iter().all(|r| r[0] == 0.0));
}

#[test]
fn projection_round_trip_and_constants() {
    let g = build_gasket(3).unwrap();
    let basis: Basis = eigendecompose(&g).unwrap();
    let c = project(&GridFunction::constant(&g, 2.0), &basis).unwrap();
    let mass: f64 = g.total_mass();
    assert!((c.coefficients[0] - 2.0 * mass.sqrt()).abs() < 1e-12);
    assert!(c.coefficients[1..].iter().all(|v| v.abs() < 1e-12));
    let v3 = project(&basis.mode(3), &basis).unwrap();
    for (k, v) in v3.coefficients.iter().enumerate() {
        assert!((v - if k == 3 { 1.0 } else { 0.0 }).abs() < 1e-12);
    }
    let f = GridFunction::from_fn(&g, |x, y| (5.0 * x * y).cos());
    let back = reconstruct(&project(&f, &basis).unwrap(), &basis).unwrap();
    for (a, b) in back.values().iter().zip(f.values()) {
        assert!((a - b).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_symmetric_bilinear(
        f in prop::collection::vec(-1.0f64..1.0, 42),
        g in prop::collection::vec(-1.0f64..1.0, 42),
        a in -3.0f64..3.0,
    ) {
        let gr = build_gasket(3).unwrap();
        let (f, g) = (grid(3, &f), grid(3, &g));
        let efg = energy_form(&f, &g, &gr).unwrap();
        prop_assert!((efg - energy_form(&g, &f, &gr).unwrap()).abs() < 1e-12 * (1.0 + efg.abs()));
        let af_g = f.axpby(a, &g, 1.0).unwrap();
        let lhs = energy_form(&af_g, &g, &gr).unwrap();
        let rhs = a * efg + energy_form(&g, &g, &gr).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        prop_assert!(energy_form(&f, &f, &gr).unwrap() >= 0.0);
    }

    #[test]
    fn green_identity_and_self_adjointness(
        f in prop::collection::vec(-1.0f64..1.0, 42),
        g in prop::collection::vec(-1.0f64..1.0, 42),
    ) {
        let gr = build_gasket(3).unwrap();
        let (f, g) = (grid(3, &f), grid(3, &g));
        let lf = discrete_laplacian(&f, &gr).unwrap();
        let lg = discrete_laplacian(&g, &gr).unwrap();
        let e = energy_form(&f, &g, &gr).unwrap();
        let green = -f.inner(&lg).unwrap();
        prop_assert!((e - green).abs() < 1e-12 * (1.0 + e.abs()) * 1e3);
        let l = f.inner(&lg).unwrap();
        let r = lf.inner(&g).unwrap();
        prop_assert!((l - r).abs() < 1e-12 * (1.0 + l.abs()) * 1e3);
    }

    #[test]
    fn extension_preserves_energy(f in prop::collection::vec(-1.0f64..1.0, 123)) {
        let coarse = build_gasket(4).unwrap();
        let fine = build_gasket(5).unwrap();
        let f = grid(4, &f);
        let e = energy_form(&f, &f, &coarse).unwrap();
        let h = harmonic_extension(&f, &fine).unwrap();
        prop_assert!((energy_form(&h, &h, &fine).unwrap() - e).abs() < 1e-10 * e.max(1.0));
    }

    #[test]
    fn holder_bound_holds(f in prop::collection::vec(-1.0f64..1.0, 42)) {
        let gr = build_gasket(3).unwrap();
        let f = grid(3, &f);
        let e = energy_form(&f, &f, &gr).unwrap();
        prop_assert!(holder_ratio(&f, &gr).unwrap() <= 6.0 * e.sqrt());
    }
}
