//! Renormalized energy forms, the discrete Laplacian and harmonic extension.

use std::io::{Read, Write};

use crate::error::{check_level, domain, Error, Result};
use crate::gasket::{cells, GasketGraph};
use crate::scalar::{powu, Real, Scalar};
use crate::spectrum::SpectralBasis;

/// A real function on `V_n`, indexed like the graph's vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    level: u32,
    values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(graph: &GasketGraph, values: Vec<T>) -> Result<Self> {
        if values.len() != graph.len() {
            return Err(domain(format!(
                "grid function has {} values, level {} has {} vertices",
                values.len(),
                graph.level(),
                graph.len()
            )));
        }
        Ok(Self {
            level: graph.level(),
            values,
        })
    }

    pub(crate) fn from_parts(level: u32, values: Vec<T>) -> Self {
        Self { level, values }
    }

    pub fn constant(graph: &GasketGraph, c: T) -> Self {
        Self {
            level: graph.level(),
            values: vec![c; graph.len()],
        }
    }

    pub fn zeros(graph: &GasketGraph) -> Self {
        Self::constant(graph, T::zero())
    }

    /// Samples `f(x, y)` at the Euclidean embedding of every vertex.
    pub fn from_fn(graph: &GasketGraph, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let values = graph
            .vertices()
            .iter()
            .map(|v| {
                let (x, y) = v.embed();
                f(x, y)
            })
            .collect();
        Self {
            level: graph.level(),
            values,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(&T) -> T) -> Self {
        Self {
            level: self.level,
            values: self.values.iter().map(f).collect(),
        }
    }

    /// `a*self + b*other`.
    pub fn axpby(&self, a: T, other: &Self, b: T) -> Result<Self> {
        check_level(self.level, other.level)?;
        Ok(Self {
            level: self.level,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a.clone() * x.clone() + b.clone() * y.clone())
                .collect(),
        })
    }

    /// `Σ_x 3^-n f(x) g(x)`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        check_level(self.level, other.level)?;
        let sum = self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone());
        Ok(sum / T::from_u64_exact(3u64.pow(self.level)))
    }

    /// Restriction from `V_n` to `V_{n-1}` (coarse vertices have doubled
    /// coordinates on the fine lattice).
    pub fn restrict(&self, fine: &GasketGraph, coarse: &GasketGraph) -> Result<Self> {
        check_level(self.level, fine.level())?;
        if coarse.level() + 1 != fine.level() {
            return Err(domain("restriction goes down exactly one level"));
        }
        let values = coarse
            .vertices()
            .iter()
            .map(|v| self.values[fine.index_of(2 * v.a, 2 * v.b).unwrap()].clone())
            .collect();
        Ok(Self {
            level: coarse.level(),
            values,
        })
    }
}

impl<T: Real> GridFunction<T> {
    pub fn sup_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| num_traits::Float::max(m, num_traits::Float::abs(*v)))
    }

    /// `L²(μ_n)` norm.
    pub fn l2_norm(&self) -> T {
        num_traits::Float::sqrt(self.inner(self).unwrap())
    }

    /// Writes `vertex,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vertex", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([i.to_string(), format!("{:e}", v.to_f64_lossy())])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(graph: &GasketGraph, input: R) -> Result<Self> {
        let mut values: Vec<Option<T>> = vec![None; graph.len()];
        let mut r = csv::Reader::from_reader(input);
        for row in r.records() {
            let row = row?;
            let bad = |reason: String| Error::Format {
                what: "grid function",
                reason,
            };
            let id: usize = row
                .get(0)
                .ok_or_else(|| bad("missing vertex".into()))?
                .trim()
                .parse()
                .map_err(|e| bad(format!("vertex id: {e}")))?;
            let value: f64 = row
                .get(1)
                .ok_or_else(|| bad("missing value".into()))?
                .trim()
                .parse()
                .map_err(|e| bad(format!("value: {e}")))?;
            let slot = values
                .get_mut(id)
                .ok_or_else(|| bad(format!("vertex {id} out of range")))?;
            *slot = Some(T::from_f64_lossy(value));
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::Format {
                    what: "grid function",
                    reason: format!("vertex {i} has no value"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        GridFunction::new(graph, values)
    }
}

/// Coefficients `f_k = ∫ f v_k dμ_n` in a spectral basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SobolevCoefficients<T> {
    pub level: u32,
    pub coefficients: Vec<T>,
}

impl<T: Scalar> SobolevCoefficients<T> {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// The unit vector on mode `k` among `modes` coefficients.
    pub fn unit(level: u32, modes: usize, k: usize) -> Self {
        let mut coefficients = vec![T::zero(); modes];
        coefficients[k] = T::one();
        Self {
            level,
            coefficients,
        }
    }
}

fn energy_scale<T: Scalar>(n: u32) -> T {
    powu(T::from_u64_exact(5), n) / powu(T::from_u64_exact(3), n)
}

/// `𝓔_n(f, g) = (5/3)^n Σ_{<xy>} (f(y) - f(x)) (g(y) - g(x))`.
pub fn energy_form<T: Scalar>(
    f: &GridFunction<T>,
    g: &GridFunction<T>,
    graph: &GasketGraph,
) -> Result<T> {
    check_level(graph.level(), f.level)?;
    check_level(graph.level(), g.level)?;
    let (fv, gv) = (&f.values, &g.values);
    let sum = graph.edges().iter().fold(T::zero(), |acc, &(x, y)| {
        acc + (fv[y].clone() - fv[x].clone()) * (gv[y].clone() - gv[x].clone())
    });
    Ok(energy_scale::<T>(graph.level()) * sum)
}

/// `Δ_n g(x) = 5^n Σ_{y ~ x} (g(y) - g(x))`.
pub fn discrete_laplacian<T: Scalar>(
    g: &GridFunction<T>,
    graph: &GasketGraph,
) -> Result<GridFunction<T>> {
    check_level(graph.level(), g.level)?;
    let scale = powu(T::from_u64_exact(5), graph.level());
    let values = (0..graph.len())
        .map(|x| {
            let gx = g.values[x].clone();
            let s = graph
                .neighbors(x)
                .iter()
                .fold(T::zero(), |acc, &y| acc + g.values[y].clone() - gx.clone());
            scale.clone() * s
        })
        .collect();
    Ok(GridFunction {
        level: g.level,
        values,
    })
}

/// Energy-minimizing extension of `f` from `V_n` to `V_{n+1}`.
///
/// In every level-n cell with corners `p, q, r`, the midpoint of `pq` gets
/// `(2f(p) + 2f(q) + f(r)) / 5`.
pub fn harmonic_extension<T: Scalar>(
    f: &GridFunction<T>,
    fine: &GasketGraph,
) -> Result<GridFunction<T>> {
    let n = f.level;
    check_level(n + 1, fine.level())?;
    let mut values: Vec<Option<T>> = vec![None; fine.len()];
    let coarse_index = |a: u32, b: u32| -> usize { fine.index_of(2 * a, 2 * b).unwrap() };
    // The coarse vertex order is the fine order restricted to even coordinates.
    let mut coarse_rank = 0usize;
    for (i, v) in fine.vertices().iter().enumerate() {
        if v.a % 2 == 0 && v.b % 2 == 0 {
            values[i] = Some(f.values[coarse_rank].clone());
            coarse_rank += 1;
        }
    }
    if coarse_rank != f.values.len() {
        return Err(domain("grid function does not match the coarse level"));
    }
    let two = T::from_u64_exact(2);
    let five = T::from_u64_exact(5);
    for cell in cells(n) {
        let corners = cell.corners_at(n);
        let fc: Vec<T> = corners
            .iter()
            .map(|&(a, b)| values[coarse_index(a, b)].clone().unwrap())
            .collect();
        for (p, q, r) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)] {
            let (pa, pb) = corners[p];
            let (qa, qb) = corners[q];
            let mid = fine.index_of(pa + qa, pb + qb).unwrap();
            let v = (two.clone() * fc[p].clone() + two.clone() * fc[q].clone() + fc[r].clone())
                / five.clone();
            values[mid] = Some(v);
        }
    }
    Ok(GridFunction {
        level: n + 1,
        values: values.into_iter().map(Option::unwrap).collect(),
    })
}

/// Exponent `log(5/3) / log 4` of the Hölder estimate.
pub fn holder_exponent() -> f64 {
    (5f64 / 3.0).ln() / 4f64.ln()
}

/// `sup_{x≠y} |f(x) - f(y)| / |x - y|^α` over embedded distances.
pub fn holder_ratio<T: Real>(f: &GridFunction<T>, graph: &GasketGraph) -> Result<T> {
    check_level(graph.level(), f.level)?;
    if graph.len() < 2 {
        return Err(domain("Hölder ratio needs at least two vertices"));
    }
    let alpha = holder_exponent();
    let verts = graph.vertices();
    let mut best = 0f64;
    for i in 0..verts.len() {
        let fi = f.values[i].to_f64_lossy();
        for j in (i + 1)..verts.len() {
            let d = verts[i].distance(&verts[j]).powf(alpha);
            let r = (fi - f.values[j].to_f64_lossy()).abs() / d;
            if r > best {
                best = r;
            }
        }
    }
    Ok(T::from_f64_lossy(best))
}

/// `sup_x (5/3)^n Σ_{y~x} (f(y) - f(x))²`.
pub fn local_energy_sup<T: Real>(f: &GridFunction<T>, graph: &GasketGraph) -> Result<T> {
    check_level(graph.level(), f.level)?;
    let scale: T = energy_scale(graph.level());
    let mut best = T::zero();
    for x in 0..graph.len() {
        let fx = f.values[x];
        let s = graph
            .neighbors(x)
            .iter()
            .fold(T::zero(), |acc, &y| acc + (f.values[y] - fx) * (f.values[y] - fx));
        best = num_traits::Float::max(best, scale * s);
    }
    Ok(best)
}

/// `(Σ_k λ_k^m f_k²)^{1/2}` with `0^m = 0` for `m ≠ 0` and `0^0 = 1`.
///
/// For `m > 0` this is a seminorm that ignores constants.
pub fn sobolev_norm<T: Real>(
    c: &SobolevCoefficients<T>,
    m: T,
    basis: &SpectralBasis<T>,
) -> Result<T> {
    check_level(basis.level(), c.level)?;
    let lambdas = basis.eigenvalues();
    if c.coefficients.len() > lambdas.len() {
        return Err(domain(format!(
            "{} coefficients but only {} modes",
            c.coefficients.len(),
            lambdas.len()
        )));
    }
    let mut sum = T::zero();
    for (k, fk) in c.coefficients.iter().enumerate() {
        let lambda = lambdas[k];
        let weight = if lambda == T::zero() || k == 0 {
            if m == T::zero() {
                T::one()
            } else {
                T::zero()
            }
        } else {
            num_traits::Float::powf(lambda, m)
        };
        sum += weight * *fk * *fk;
    }
    Ok(num_traits::Float::sqrt(sum))
}
