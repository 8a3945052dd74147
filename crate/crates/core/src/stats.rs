//! Small estimators and goodness-of-fit tests used by the analysis layer.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{domain, Error, Result};

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Estimate {
    pub fn of(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InsufficientData { have: n, need: 2 });
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            variance,
            std_error: (variance / n as f64).sqrt(),
            count: n,
        })
    }

    /// `|mean - target| <= k * SE`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }

    /// `(mean - target) / SE`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.std_error
    }

    /// Two-sided normal interval at `level` (e.g. 0.95).
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let z = normal_quantile(0.5 + level / 2.0);
        (self.mean - z * self.std_error, self.mean + z * self.std_error)
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Exact chi-square interval for a normal-population variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceInterval {
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl VarianceInterval {
    pub fn of(samples: &[f64], level: f64) -> Result<Self> {
        let est = Estimate::of(samples)?;
        let dof = (est.count - 1) as f64;
        let chi = ChiSquared::new(dof).map_err(|e| domain(e.to_string()))?;
        let alpha = 1.0 - level;
        Ok(Self {
            variance: est.variance,
            lower: dof * est.variance / chi.inverse_cdf(1.0 - alpha / 2.0),
            upper: dof * est.variance / chi.inverse_cdf(alpha / 2.0),
            count: est.count,
        })
    }

    pub fn disjoint_above(&self, other: &Self) -> bool {
        self.lower > other.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

impl GoodnessOfFit {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Pearson chi-square test of counts against probabilities.
///
/// Cells are merged left to right until each expected count is at least 5;
/// the leftover tail (including mass beyond `probs`) joins the last cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<GoodnessOfFit> {
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientData { have: 0, need: 1 });
    }
    let n = total as f64;
    let len = observed.len().max(probs.len());
    let obs = |i: usize| observed.get(i).copied().unwrap_or(0) as f64;
    let prob = |i: usize| probs.get(i).copied().unwrap_or(0.0);
    let tail_prob = (1.0 - probs.iter().sum::<f64>()).max(0.0);

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for i in 0..len {
        o += obs(i);
        e += n * prob(i);
        if e >= 5.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    e += n * tail_prob;
    match bins.last_mut() {
        Some(last) if e < 5.0 => {
            last.0 += o;
            last.1 += e;
        }
        _ => bins.push((o, e)),
    }
    if bins.len() < 2 {
        return Err(domain("chi-square test needs at least two bins with expected count >= 5"));
    }
    let statistic = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| domain(e.to_string()))?;
    Ok(GoodnessOfFit {
        statistic,
        dof,
        p_value: chi.sf(statistic),
        bins: bins.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovSmirnov {
    pub statistic: f64,
    pub p_value: f64,
    pub count: usize,
}

/// One-sample KS test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KolmogorovSmirnov> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientData { have: 0, need: 1 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sq = nf.sqrt();
    Ok(KolmogorovSmirnov {
        statistic: d,
        p_value: kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d),
        count: n,
    })
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Weighted least-squares line `y = a + b x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_error: f64,
    pub points: usize,
}

pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(domain("fit inputs differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData { have: x.len(), need: 2 });
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(domain("fit abscissae are degenerate"));
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(LineFit {
        intercept: my - slope * mx,
        slope,
        // Weights are inverse variances.
        slope_error: (1.0 / sxx).sqrt(),
        points: x.len(),
    })
}
