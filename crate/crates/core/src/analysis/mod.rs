//! Fluctuation-field observables and their estimators.

mod observer;
mod series;

pub use observer::{Ensemble, FieldObserver, TestFunction};
pub use series::{Channel, FieldSeries, ReplicaSeries, SERIES_FORMAT, SERIES_VERSION};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::energy::GridFunction;
use crate::error::{check_level, domain, Error, Result};
use crate::stats::{weighted_line_fit, Estimate, LineFit, VarianceInterval};
use crate::zrp::{EquilibriumProfile, ZrpConfiguration};

/// `π^n(f) = 3^{-n} Σ η(x) f(x)`.
pub fn empirical_measure(config: &ZrpConfiguration, f: &GridFunction<f64>) -> Result<f64> {
    check_level(f.level(), config.level())?;
    let sum: f64 = config
        .occupancy()
        .iter()
        .zip(f.values())
        .map(|(&k, fx)| k as f64 * fx)
        .sum();
    Ok(sum / 3f64.powi(config.level() as i32))
}

/// `Z^n(f) = 3^{-n/2} Σ (η(x) - ρ) f(x)`.
pub fn fluctuation_field(config: &ZrpConfiguration, f: &GridFunction<f64>, rho: f64) -> Result<f64> {
    check_level(f.level(), config.level())?;
    let sum: f64 = config
        .occupancy()
        .iter()
        .zip(f.values())
        .map(|(&k, fx)| (k as f64 - rho) * fx)
        .sum();
    Ok(sum * 3f64.powf(-(config.level() as f64) / 2.0))
}

#[derive(Clone, Debug)]
pub struct FieldCovariance {
    /// `χ(ρ) 3^{-n} Σ f g`, exact under `ν_ρ`.
    pub exact: DMatrix<f64>,
    /// `∫ f g dμ_n`, the normalization stated for the limit field.
    pub stated: DMatrix<f64>,
    pub chi: f64,
}

pub fn initial_field_covariance(
    profile: &EquilibriumProfile,
    functions: &[GridFunction<f64>],
) -> Result<FieldCovariance> {
    let m = functions.len();
    let mut stated = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = functions[i].inner(&functions[j])?;
            stated[(i, j)] = v;
            stated[(j, i)] = v;
        }
    }
    Ok(FieldCovariance {
        exact: &stated * profile.chi,
        stated,
        chi: profile.chi,
    })
}

/// `M_t(f) = Z_t(f) - Z_0(f) - ∫_0^t integrand ds` per replica.
#[derive(Clone, Debug)]
pub struct Dynkin {
    pub label: String,
    pub times: Vec<f64>,
    pub compensator: Vec<Vec<f64>>,
    pub martingale: Vec<Vec<f64>>,
    pub quadratic_variation: Vec<Vec<f64>>,
    /// Compensator integrated event by event rather than by quadrature.
    pub exact_compensator: bool,
    /// Quadratic variation summed over events rather than sample increments.
    pub event_qv: bool,
}

impl Dynkin {
    /// Per-replica `QV(T)/T`.
    pub fn qv_rate(&self) -> Result<Estimate> {
        let span = self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0);
        if !(span > 0.0) {
            return Err(domain("series spans no time"));
        }
        let rates: Vec<f64> = self
            .quadratic_variation
            .iter()
            .map(|q| q.last().copied().unwrap_or(0.0) / span)
            .collect();
        Estimate::of(&rates)
    }

    /// `M_t` across replicas at sample index `t`.
    pub fn martingale_at(&self, t: usize) -> Result<Estimate> {
        let v: Vec<f64> = self.martingale.iter().map(|m| m[t]).collect();
        Estimate::of(&v)
    }
}

pub fn dynkin_decomposition(series: &FieldSeries, label: &str) -> Result<Dynkin> {
    if !series.has_channel(Channel::Integrand) {
        return Err(domain("series has no compensator integrand channel"));
    }
    let field = series.channel(label, Channel::Field)?;
    let exact_compensator = series.has_channel(Channel::Compensator);
    let compensator = if exact_compensator {
        series.channel(label, Channel::Compensator)?
    } else {
        let dt = series
            .spacing()
            .ok_or_else(|| domain("quadrature needs a uniform sampling grid"))?;
        series
            .channel(label, Channel::Integrand)?
            .iter()
            .map(|g| {
                let mut acc = 0.0;
                let mut out = vec![0.0];
                for w in g.windows(2) {
                    acc += 0.5 * dt * (w[0] + w[1]);
                    out.push(acc);
                }
                out
            })
            .collect()
    };
    let martingale: Vec<Vec<f64>> = field
        .iter()
        .zip(&compensator)
        .map(|(z, c)| z.iter().zip(c).map(|(zt, ct)| zt - z[0] - ct).collect())
        .collect();
    let event_qv = series.has_channel(Channel::Qv);
    let quadratic_variation = if event_qv {
        series.channel(label, Channel::Qv)?
    } else {
        martingale
            .iter()
            .map(|m| {
                let mut acc = 0.0;
                let mut out = vec![0.0];
                for w in m.windows(2) {
                    acc += (w[1] - w[0]).powi(2);
                    out.push(acc);
                }
                out
            })
            .collect()
    };
    Ok(Dynkin {
        label: label.to_string(),
        times: series.times.clone(),
        compensator,
        martingale,
        quadratic_variation,
        exact_compensator,
        event_qv,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Autocovariance {
    pub label: String,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `replicas × sample times` contributing to lag 0.
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted `κ` in `C(τ) ≈ C(0) e^{-κ τ}`.
    pub rate: f64,
    pub rate_error: f64,
    pub c0: f64,
    pub window: f64,
    pub points: usize,
}

pub const MIN_EFFECTIVE_SAMPLES: usize = 100;

/// `C(τ)` pooled over start times within each replica, with standard errors
/// from the spread across replicas. `mean = None` estimates the mean.
pub fn autocovariance(
    series: &FieldSeries,
    label: &str,
    max_lag: usize,
    mean: Option<f64>,
) -> Result<Autocovariance> {
    let dt = series
        .spacing()
        .ok_or_else(|| domain("autocovariance needs a uniform sampling grid"))?;
    let z = series.channel(label, Channel::Field)?;
    let (r, t) = (z.len(), series.times.len());
    let samples = r * t;
    if samples < MIN_EFFECTIVE_SAMPLES || r < 2 {
        return Err(Error::InsufficientData {
            have: samples,
            need: MIN_EFFECTIVE_SAMPLES,
        });
    }
    if max_lag >= t {
        return Err(domain(format!("lag {max_lag} exceeds the {t} sample times")));
    }
    let m = mean.unwrap_or_else(|| z.iter().flatten().sum::<f64>() / samples as f64);
    let mut lags = Vec::with_capacity(max_lag + 1);
    let mut values = Vec::with_capacity(max_lag + 1);
    let mut std_errors = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let per_replica: Vec<f64> = z
            .iter()
            .map(|zr| {
                let n = t - lag;
                (0..n).map(|i| (zr[i] - m) * (zr[i + lag] - m)).sum::<f64>() / n as f64
            })
            .collect();
        let e = Estimate::of(&per_replica)?;
        lags.push(lag as f64 * dt);
        values.push(e.mean);
        std_errors.push(e.std_error);
    }
    Ok(Autocovariance {
        label: label.to_string(),
        lags,
        values,
        std_errors,
        samples,
    })
}

impl Autocovariance {
    /// Weighted least squares on `log C(τ)` over `τ <= window`, stopping at the
    /// first lag with `C <= 2 SE`.
    pub fn fit_decay(&self, window: f64) -> Result<DecayFit> {
        let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for ((&tau, &c), &se) in self.lags.iter().zip(&self.values).zip(&self.std_errors) {
            if tau > window * (1.0 + 1e-12) || c <= 2.0 * se {
                break;
            }
            x.push(tau);
            y.push(c.ln());
            w.push(if se > 0.0 { (c / se).powi(2) } else { 1e12 });
        }
        if x.len() < 2 {
            return Err(Error::InsufficientData { have: x.len(), need: 2 });
        }
        let LineFit {
            intercept,
            slope,
            slope_error,
            points,
        } = weighted_line_fit(&x, &y, &w)?;
        Ok(DecayFit {
            rate: -slope,
            rate_error: slope_error,
            c0: intercept.exp(),
            window,
            points,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BgReport {
    pub level: u32,
    pub block_scale: Option<u32>,
    pub label: String,
    pub time: f64,
    pub replicas: usize,
    pub mean: Estimate,
    pub variance: VarianceInterval,
    pub block_variance: Option<VarianceInterval>,
}

/// Across-replica spread of `∫_0^t 3^{-n/2} Σ [h - φ - φ'(η - ρ)] f ds` at
/// sample index `time_index` (the last one by default).
pub fn bg_statistic(series: &FieldSeries, label: &str, time_index: Option<usize>) -> Result<BgReport> {
    let level: u32 = series.meta_parse("level")?;
    let idx = time_index.unwrap_or(series.times.len().saturating_sub(1));
    if idx >= series.times.len() {
        return Err(domain(format!("no sample time with index {idx}")));
    }
    let at = |ch: Channel| -> Result<Vec<f64>> {
        Ok(series.channel(label, ch)?.iter().map(|v| v[idx]).collect())
    };
    let bg = at(Channel::Bg)?;
    let block_scale = series.meta_parse::<u32>("block_scale").ok();
    if let Some(k) = block_scale {
        if k > level {
            return Err(domain(format!("block scale {k} exceeds level {level}")));
        }
    }
    let block_variance = if series.has_channel(Channel::BgBlock) {
        Some(VarianceInterval::of(&at(Channel::BgBlock)?, 0.95)?)
    } else {
        None
    };
    Ok(BgReport {
        level,
        block_scale,
        label: label.to_string(),
        time: series.times[idx],
        replicas: bg.len(),
        mean: Estimate::of(&bg)?,
        variance: VarianceInterval::of(&bg, 0.95)?,
        block_variance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Event,
    Sampled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxJumpReport {
    pub label: String,
    pub max_jump: f64,
    /// `2 ‖f‖_∞ 3^{-n/2}`.
    pub bound: f64,
    pub violations: usize,
    pub resolution: Resolution,
}

impl MaxJumpReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Largest `|ΔZ(f)|` over recorded events, or over consecutive samples when
/// only sampled resolution is available.
pub fn max_jump(series: &FieldSeries, label: &str) -> Result<MaxJumpReport> {
    let level: u32 = series.meta_parse("level")?;
    let sup: f64 = series.meta_parse(&format!("sup.{label}"))?;
    let bound = 3f64.powf(-(level as f64) / 2.0) * (2.0 * sup);
    let (per_replica, resolution) = if series.has_channel(Channel::MaxJump) {
        let m = series.channel(label, Channel::MaxJump)?;
        (
            m.iter().map(|v| v.iter().copied().fold(0.0, f64::max)).collect::<Vec<_>>(),
            Resolution::Event,
        )
    } else {
        let z = series.channel(label, Channel::Field)?;
        (
            z.iter()
                .map(|v| v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max))
                .collect(),
            Resolution::Sampled,
        )
    };
    Ok(MaxJumpReport {
        label: label.to_string(),
        max_jump: per_replica.iter().copied().fold(0.0, f64::max),
        bound,
        violations: if resolution == Resolution::Event {
            per_replica.iter().filter(|&&m| m > bound).count()
        } else {
            0
        },
        resolution,
    })
}
