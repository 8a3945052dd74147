//! Independent reference computations.

use nalgebra::{DMatrix, DVector};

use crate::energy::GridFunction;
use crate::error::{check_level, domain, Result};
use crate::gasket::GasketGraph;
use crate::zrp::RateModel;

/// All occupancy vectors on `sites` sites holding `particles` particles, in
/// lexicographic order.
pub fn enumerate_states(sites: usize, particles: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: u32, sites: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == sites {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(prefix, left - k, sites, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if sites > 0 {
        rec(&mut Vec::with_capacity(sites), particles, sites, &mut out);
    }
    out
}

/// Stationary law of the ZRP with a fixed particle number, from a direct
/// solve of `π Q = 0, Σ π = 1` on the enumerated state space.
pub fn stationary_bruteforce(
    graph: &GasketGraph,
    model: &RateModel,
    particles: u32,
) -> Result<(Vec<Vec<u32>>, Vec<f64>)> {
    let states = enumerate_states(graph.len(), particles);
    let m = states.len();
    if m > 5000 {
        return Err(domain(format!("{m} states is too many for a dense solve")));
    }
    let index: std::collections::HashMap<&[u32], usize> =
        states.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    // Columns of Qᵀ are rows of Q.
    let mut qt = DMatrix::<f64>::zeros(m, m);
    for (i, s) in states.iter().enumerate() {
        for x in 0..graph.len() {
            if s[x] == 0 {
                continue;
            }
            let r = model.rate(s[x]);
            for &y in graph.neighbors(x) {
                let mut t = s.clone();
                t[x] -= 1;
                t[y] += 1;
                let j = index[t.as_slice()];
                qt[(j, i)] += r;
                qt[(i, i)] -= r;
            }
        }
    }
    for j in 0..m {
        qt[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(m);
    rhs[m - 1] = 1.0;
    let pi = qt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| domain("singular balance equations"))?;
    Ok((states, pi.iter().copied().collect()))
}

/// `ν_ρ` conditioned on the particle number: `∝ Π_x 1 / h(η(x))!`.
pub fn conditioned_product_measure(model: &RateModel, states: &[Vec<u32>]) -> Vec<f64> {
    let log_fact = |k: u32| (1..=k).map(|j| model.rate(j).ln()).sum::<f64>();
    let w: Vec<f64> = states
        .iter()
        .map(|s| (-s.iter().map(|&k| log_fact(k)).sum::<f64>()).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Minimizer of `𝓔_{n+1}` with `f` fixed on `V_n`, by a dense solve of the
/// normal equations `Σ_{y~u} (g(u) - g(y)) = 0` at every new vertex `u`.
pub fn harmonic_extension_direct(f: &GridFunction<f64>, coarse: &GasketGraph, fine: &GasketGraph) -> Result<Vec<f64>> {
    check_level(coarse.level(), f.level())?;
    check_level(coarse.level() + 1, fine.level())?;
    let mut fixed: Vec<Option<f64>> = vec![None; fine.len()];
    for (i, v) in coarse.vertices().iter().enumerate() {
        let j = fine
            .index_of(2 * v.a, 2 * v.b)
            .ok_or_else(|| domain("coarse vertex missing from fine graph"))?;
        fixed[j] = Some(f.values()[i]);
    }
    let free: Vec<usize> = (0..fine.len()).filter(|&i| fixed[i].is_none()).collect();
    let mut slot = vec![usize::MAX; fine.len()];
    for (k, &u) in free.iter().enumerate() {
        slot[u] = k;
    }
    let m = free.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (k, &u) in free.iter().enumerate() {
        a[(k, k)] = fine.degree(u) as f64;
        for &y in fine.neighbors(u) {
            match fixed[y] {
                Some(v) => b[k] += v,
                None => a[(k, slot[y])] -= 1.0,
            }
        }
    }
    let g = a
        .lu()
        .solve(&b)
        .ok_or_else(|| domain("singular harmonic system"))?;
    Ok((0..fine.len())
        .map(|i| fixed[i].unwrap_or_else(|| g[slot[i]]))
        .collect())
}
