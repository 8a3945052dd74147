//! Product invariant measures `ν_ρ` and their fugacity.
//!
//! The one-site marginal is `p(k) = φ^k / (Z h(k)!)`. `φ ↦ mean(φ)` is
//! strictly increasing (its log-derivative is the variance), so the fugacity
//! for a target density is found by bisection.

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::gasket::GasketGraph;

use super::rates::RateModel;
use super::sim::ZrpConfiguration;

/// Tail mass allowed beyond the truncation point.
pub const TAIL_MASS: f64 = 1e-12;
/// Relative tail bound actually used; far inside `TAIL_MASS` so that the
/// truncated mean is exact to rounding.
const TRUNCATION: f64 = 1e-18;
const MAX_TERMS: usize = 50_000_000;

#[derive(Clone, Debug)]
pub struct EquilibriumProfile {
    pub rho: f64,
    /// `φ(ρ)`.
    pub phi: f64,
    /// `Z(ρ)` at `φ`.
    pub z: f64,
    pub log_z: f64,
    /// `Var_{ν_ρ}(η(x))`.
    pub chi: f64,
    /// `φ'(ρ) = φ / χ`.
    pub dphi: f64,
    /// `p(k)` for `k <= k_max`.
    pub pmf: Vec<f64>,
    cdf: Vec<f64>,
    pub linear_growth: bool,
}

impl EquilibriumProfile {
    pub fn k_max(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `E_{ν_ρ}[g(η(x))]` over the truncated marginal.
    pub fn expect(&self, g: impl Fn(u32) -> f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, p)| p * g(k as u32))
            .sum()
    }

    /// Inverse-CDF draw from `p`.
    pub fn sample_site<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u);
        k.min(self.pmf.len() - 1) as u32
    }
}

/// Truncated marginal at fugacity `phi`, as unnormalized log-terms.
struct Series {
    log_terms: Vec<f64>,
    log_z: f64,
}

impl Series {
    fn at(model: &RateModel, phi: f64) -> Result<Series> {
        let sup = model.rate_supremum();
        if phi >= sup {
            return Err(Error::NonConvergent {
                fugacity: phi,
                reason: format!("fugacity reaches sup h = {sup}"),
            });
        }
        let log_phi = phi.ln();
        let regular = model.regular_from() as usize;
        let mut log_terms = vec![0.0];
        let mut log_fact = 0.0;
        // Running Σ exp(l - max_log).
        let mut max_log = 0.0f64;
        let mut scaled_sum = 1.0;
        let mut k = 0usize;
        loop {
            k += 1;
            if k > MAX_TERMS {
                return Err(Error::NonConvergent {
                    fugacity: phi,
                    reason: format!("tail mass still above {TAIL_MASS} after {MAX_TERMS} terms"),
                });
            }
            log_fact += model.rate(k as u32).ln();
            let t = k as f64 * log_phi - log_fact;
            log_terms.push(t);
            if t > max_log {
                scaled_sum = scaled_sum * (max_log - t).exp() + 1.0;
                max_log = t;
            } else {
                scaled_sum += (t - max_log).exp();
            }
            // Once h is non-decreasing the term ratios φ/h(j+1) are
            // non-increasing and the tail is dominated by a geometric series.
            if k >= regular {
                let ratio = phi / model.rate(k as u32 + 1);
                if ratio < 1.0 {
                    let tail = (t - max_log).exp() * ratio / (1.0 - ratio);
                    if tail < TRUNCATION * scaled_sum {
                        let log_z = max_log + scaled_sum.ln();
                        return Ok(Series { log_terms, log_z });
                    }
                }
            }
        }
    }

    fn pmf(&self) -> Vec<f64> {
        self.log_terms
            .iter()
            .map(|l| (l - self.log_z).exp())
            .collect()
    }

    fn mean(&self) -> f64 {
        self.pmf()
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }
}

/// Finds `φ` with `E_{ν_ρ}[η(x)] = ρ` and the derived characteristics.
pub fn solve_fugacity(model: &RateModel, rho: f64) -> Result<EquilibriumProfile> {
    model.validate()?;
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(domain(format!("density must be finite and non-negative, got {rho}")));
    }
    if rho == 0.0 {
        return Ok(EquilibriumProfile {
            rho,
            phi: 0.0,
            z: 1.0,
            log_z: 0.0,
            chi: 0.0,
            // lim φ/χ as ρ → 0
            dphi: model.rate(1),
            pmf: vec![1.0],
            cdf: vec![1.0],
            linear_growth: model.linear_growth(),
        });
    }

    if let RateModel::Linear { slope } = *model {
        // Poisson(ρ): φ = slope·ρ, χ = ρ, φ' = slope.
        let phi = slope * rho;
        let series = Series::at(model, phi)?;
        return Ok(profile_from(model, rho, phi, series, Some((rho, slope))));
    }
    let phi = bisect_fugacity(model, rho)?;
    let series = Series::at(model, phi)?;
    Ok(profile_from(model, rho, phi, series, None))
}

fn bisect_fugacity(model: &RateModel, rho: f64) -> Result<f64> {
    let sup = model.rate_supremum();
    let mean_at = |phi: f64| Series::at(model, phi).map(|s| s.mean());

    // Bracket.
    let mut lo = 0.0;
    let mut hi = if sup.is_finite() {
        0.5 * sup
    } else {
        rho.max(1.0) * model.rate(1).max(1.0)
    };
    let mut step = 0;
    while mean_at(hi)? < rho {
        lo = hi;
        hi = if sup.is_finite() { 0.5 * (hi + sup) } else { 2.0 * hi };
        step += 1;
        if step > 2000 || (sup.is_finite() && hi >= sup) {
            return Err(Error::NonConvergent {
                fugacity: hi,
                reason: format!("cannot bracket density {rho}"),
            });
        }
    }

    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mean_at(mid)? < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick the bracket end whose mean is closer.
    let (m_lo, m_hi) = (if lo > 0.0 { mean_at(lo)? } else { 0.0 }, mean_at(hi)?);
    Ok(if (m_lo - rho).abs() < (m_hi - rho).abs() && lo > 0.0 {
        lo
    } else {
        hi
    })
}

fn profile_from(
    model: &RateModel,
    rho: f64,
    phi: f64,
    series: Series,
    closed: Option<(f64, f64)>,
) -> EquilibriumProfile {
    let pmf = series.pmf();
    let (chi, dphi) = closed.unwrap_or_else(|| {
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let chi: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - mean).powi(2) * p)
            .sum();
        (chi, phi / chi)
    });
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for p in &pmf {
        acc += p;
        cdf.push(acc);
    }
    EquilibriumProfile {
        rho,
        phi,
        z: series.log_z.exp(),
        log_z: series.log_z,
        chi,
        dphi,
        pmf,
        cdf,
        linear_growth: model.linear_growth(),
    }
}

/// I.i.d. draws from the marginal at every site.
pub fn sample_equilibrium<R: Rng + ?Sized>(
    profile: &EquilibriumProfile,
    graph: &GasketGraph,
    model: &RateModel,
    rng: &mut R,
) -> Result<ZrpConfiguration> {
    let occupancy = (0..graph.len()).map(|_| profile.sample_site(rng)).collect();
    ZrpConfiguration::new(graph, model, occupancy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::build_gasket;
    use crate::rng::replica_rng;

    #[test]
    fn poisson_closed_form() {
        let p = solve_fugacity(&RateModel::linear(), 2.0).unwrap();
        assert!((p.phi - 2.0).abs() < 1e-12);
        assert!((p.z - 2f64.exp()).abs() < 1e-9);
        assert!((p.chi - 2.0).abs() < 1e-9);
        assert!((p.dphi - 1.0).abs() < 1e-9);
        let mut fact = 1.0;
        for (k, pk) in p.pmf.iter().enumerate().take(15) {
            if k > 0 {
                fact *= k as f64;
            }
            let expect = (-2f64).exp() * 2f64.powi(k as i32) / fact;
            assert!((pk - expect).abs() < 1e-14);
        }
        let total: f64 = p.pmf.iter().sum();
        assert!((1.0 - 1e-12..=1.0 + 1e-15).contains(&total));
    }

    #[test]
    fn bisection_reproduces_poisson() {
        let model = RateModel::Table { values: vec![1.0, 2.0] };
        for rho in [0.5, 2.0, 6.0] {
            let linear = solve_fugacity(&RateModel::linear(), rho).unwrap();
            let table = solve_fugacity(&model, rho).unwrap();
            assert!((table.phi - linear.phi).abs() < 1e-12 * (1.0 + rho));
            assert!((table.chi - linear.chi).abs() < 1e-9);
        }
        let p = solve_fugacity(&RateModel::Linear { slope: 3.0 }, 2.0).unwrap();
        assert_eq!((p.phi, p.chi, p.dphi), (6.0, 2.0, 3.0));
    }

    #[test]
    fn geometric_closed_form() {
        let p = solve_fugacity(&RateModel::constant(), 1.0).unwrap();
        assert!((p.phi - 0.5).abs() < 1e-12);
        assert!((p.chi - 2.0).abs() < 1e-9);
        assert!((p.dphi - 0.25).abs() < 1e-9);
        assert!(!p.linear_growth);
        assert!((p.pmf[3] - 0.5f64.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn zero_density() {
        let p = solve_fugacity(&RateModel::linear(), 0.0).unwrap();
        assert_eq!(p.phi, 0.0);
        assert_eq!(p.pmf, vec![1.0]);
        assert_eq!(p.chi, 0.0);
        let g = build_gasket(2).unwrap();
        let c = sample_equilibrium(&p, &g, &RateModel::linear(), &mut replica_rng(1, 0)).unwrap();
        assert_eq!(c.particles(), 0);
    }

    #[test]
    fn rejects_negative_density() {
        assert!(solve_fugacity(&RateModel::linear(), -1.0).is_err());
        assert!(solve_fugacity(&RateModel::linear(), f64::NAN).is_err());
    }

    #[test]
    fn mean_matches_and_derivative_is_phi_over_chi() {
        let models = [
            RateModel::linear(),
            RateModel::constant(),
            RateModel::Affine { slope: 1.0, offset: 0.5 },
            RateModel::Table { values: vec![0.5, 2.0, 2.5, 4.0] },
        ];
        for model in &models {
            for rho in [0.3, 1.0, 2.5, 7.0] {
                let p = solve_fugacity(model, rho).unwrap();
                let mass: f64 = p.pmf.iter().sum();
                assert!((1.0 - 1e-12..=1.0 + 1e-12).contains(&mass), "{model} {rho}");
                let mean = p.expect(|k| k as f64);
                assert!((mean - rho).abs() < 1e-9, "{model} rho={rho} mean={mean}");
                assert!((p.expect(|k| model.rate(k)) - p.phi).abs() < 1e-9 * (1.0 + p.phi));
                let h = 1e-5 * rho;
                let up = solve_fugacity(model, rho + h).unwrap().phi;
                let down = solve_fugacity(model, rho - h).unwrap().phi;
                let numeric = (up - down) / (2.0 * h);
                assert!(
                    (numeric - p.dphi).abs() < 1e-6 * (1.0 + p.dphi),
                    "{model} rho={rho}: {numeric} vs {}",
                    p.dphi
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = build_gasket(3).unwrap();
        let m = RateModel::linear();
        let p = solve_fugacity(&m, 1.5).unwrap();
        let a = sample_equilibrium(&p, &g, &m, &mut replica_rng(42, 3)).unwrap();
        let b = sample_equilibrium(&p, &g, &m, &mut replica_rng(42, 3)).unwrap();
        assert_eq!(a.occupancy(), b.occupancy());
    }

    #[test]
    fn poisson_sample_mean() {
        let g = build_gasket(4).unwrap();
        let m = RateModel::linear();
        let p = solve_fugacity(&m, 3.0).unwrap();
        let mut rng = replica_rng(5, 0);
        let mut sum = 0u64;
        let mut count = 0u64;
        while count < 10_000 {
            let c = sample_equilibrium(&p, &g, &m, &mut rng).unwrap();
            sum += c.occupancy().iter().map(|&k| k as u64).sum::<u64>();
            count += g.len() as u64;
        }
        let mean = sum as f64 / count as f64;
        let sigma = (3.0 / count as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * sigma, "mean {mean}");
    }
}
