//! Jump-rate functions `h: ℕ₀ → ℝ₊` with `h(0) = 0`.

use std::fmt;
use std::path::Path;

use crate::error::{domain, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum RateModel {
    /// `h(k) = slope * k`.
    Linear { slope: f64 },
    /// `h(k) = rate` for `k >= 1`.
    Constant { rate: f64 },
    /// `h(k) = slope * k + offset` for `k >= 1`.
    Affine { slope: f64, offset: f64 },
    /// `h(k) = values[k-1]` for `1 <= k <= len`, continued linearly with the
    /// last increment.
    Table { values: Vec<f64> },
}

impl RateModel {
    pub fn linear() -> Self {
        RateModel::Linear { slope: 1.0 }
    }

    pub fn constant() -> Self {
        RateModel::Constant { rate: 1.0 }
    }

    /// Parses `linear[:slope]`, `constant[:rate]`, `affine:slope,offset`,
    /// `table:h1,h2,...` or `custom:<file>` (whitespace separated `h(1), h(2), ...`,
    /// `#` starts a comment).
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (spec.trim(), None),
        };
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| domain(format!("rate model {spec:?}: {e}")))
        };
        let model = match (name, arg) {
            ("linear", None) => Self::linear(),
            ("linear", Some(a)) => RateModel::Linear { slope: num(a)? },
            ("constant", None) => Self::constant(),
            ("constant", Some(a)) => RateModel::Constant { rate: num(a)? },
            ("affine", Some(a)) => {
                let (s, o) = a
                    .split_once(',')
                    .ok_or_else(|| domain(format!("rate model {spec:?}: expected affine:slope,offset")))?;
                RateModel::Affine {
                    slope: num(s)?,
                    offset: num(o)?,
                }
            }
            ("table", Some(a)) => RateModel::Table {
                values: a.split(',').map(num).collect::<Result<_>>()?,
            },
            ("custom", Some(path)) => Self::read_table(Path::new(path))?,
            _ => return Err(domain(format!("unknown rate model {spec:?}"))),
        };
        model.validate()?;
        Ok(model)
    }

    fn read_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let values = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Format {
                    what: "rate table",
                    reason: format!("{t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RateModel::Table { values })
    }

    /// Rejects models with `h(k) <= 0` for some `k >= 1`.
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RateModel::Linear { slope } => *slope > 0.0 && slope.is_finite(),
            RateModel::Constant { rate } => *rate > 0.0 && rate.is_finite(),
            RateModel::Affine { slope, offset } => {
                slope.is_finite() && offset.is_finite() && *slope >= 0.0 && slope + offset > 0.0
            }
            RateModel::Table { values } => {
                !values.is_empty()
                    && values.iter().all(|v| v.is_finite() && *v > 0.0)
                    && self.asymptotic_slope() >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("rate model {self} is not positive on k >= 1")))
        }
    }

    #[inline]
    pub fn rate(&self, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            RateModel::Linear { slope } => slope * k as f64,
            RateModel::Constant { rate } => *rate,
            RateModel::Affine { slope, offset } => slope * k as f64 + offset,
            RateModel::Table { values } => {
                let len = values.len();
                if (k as usize) <= len {
                    values[k as usize - 1]
                } else {
                    let last = values[len - 1];
                    last + (k as usize - len) as f64 * self.asymptotic_slope()
                }
            }
        }
    }

    /// `lim h(k)/k`.
    pub fn asymptotic_slope(&self) -> f64 {
        match self {
            RateModel::Linear { slope } | RateModel::Affine { slope, .. } => *slope,
            RateModel::Constant { .. } => 0.0,
            RateModel::Table { values } => match values.len() {
                0 | 1 => 0.0,
                n => values[n - 1] - values[n - 2],
            },
        }
    }

    /// Index past which `h` is affine and non-decreasing.
    pub(crate) fn regular_from(&self) -> u32 {
        match self {
            RateModel::Table { values } => values.len() as u32,
            _ => 1,
        }
    }

    /// `sup_k h(k)`, the radius of convergence of the partition function.
    pub fn rate_supremum(&self) -> f64 {
        if self.asymptotic_slope() > 0.0 {
            return f64::INFINITY;
        }
        (1..=self.regular_from())
            .map(|k| self.rate(k))
            .fold(0.0, f64::max)
    }

    /// Largest `ε₀` with `ε₀ k <= h(k) <= k / ε₀` for all `k >= 1`; zero if
    /// `h` does not grow linearly.
    pub fn epsilon0(&self) -> f64 {
        let slope = self.asymptotic_slope();
        if slope <= 0.0 {
            return 0.0;
        }
        // Past `regular_from`, h(k)/k is monotone towards the slope.
        let mut eps = slope.min(1.0 / slope);
        for k in 1..=self.regular_from() + 1 {
            let r = self.rate(k) / k as f64;
            eps = eps.min(r).min(1.0 / r);
        }
        eps
    }

    /// Whether `h` has linear growth. Models failing this still run; limit
    /// theorems are only claimed for compliant rates.
    pub fn linear_growth(&self) -> bool {
        self.epsilon0() > 0.0
    }

    /// `sup_k |h(k+1) - h(k)|`.
    pub fn lipschitz(&self) -> f64 {
        (0..=self.regular_from() + 1)
            .map(|k| (self.rate(k + 1) - self.rate(k)).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_linear(&self) -> bool {
        match self {
            RateModel::Linear { .. } => true,
            RateModel::Affine { offset, .. } => *offset == 0.0,
            RateModel::Constant { .. } => false,
            RateModel::Table { values } => values
                .iter()
                .enumerate()
                .all(|(i, v)| *v == values[0] * (i + 1) as f64),
        }
    }
}

impl fmt::Display for RateModel {
    /// Round-trips through [`RateModel::parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateModel::Linear { slope } => write!(f, "linear:{slope}"),
            RateModel::Constant { rate } => write!(f, "constant:{rate}"),
            RateModel::Affine { slope, offset } => write!(f, "affine:{slope},{offset}"),
            RateModel::Table { values } => {
                write!(f, "table:")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}
