//! Eigendecomposition of the finite-level Neumann Laplacian `-Δ_n`.
//!
//! `μ_n` is uniform, so `-Δ_n = 5^n (D - A)` is symmetric in both `ℓ²` and
//! `L²(μ_n)`; a dense symmetric solve gives `ℓ²`-orthonormal vectors which
//! are rescaled by `3^{n/2}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::energy::{GridFunction, SobolevCoefficients};
use crate::error::{check_level, domain, Error, Result};
use crate::gasket::{build_gasket, GasketGraph};
use crate::scalar::Real;

/// Largest level the dense eigensolver accepts (`|V_7| = 3282`).
pub const MAX_SPECTRAL_LEVEL: u32 = 7;

const CACHE_MAGIC: &[u8; 8] = b"SGNEIGEN";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct SpectralBasis<T> {
    level: u32,
    vertices: usize,
    eigenvalues: Vec<T>,
    /// Row `k` holds `v_k`.
    vectors: Vec<T>,
}

impl<T: Real> SpectralBasis<T> {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> T {
        self.eigenvalues[k]
    }

    pub fn vector(&self, k: usize) -> &[T] {
        &self.vectors[k * self.vertices..(k + 1) * self.vertices]
    }

    pub fn mode(&self, k: usize) -> GridFunction<T> {
        GridFunction::from_parts(self.level, self.vector(k).to_vec())
    }

    /// Keeps the first `modes` eigenpairs.
    pub fn truncate(mut self, modes: usize) -> Self {
        let modes = modes.min(self.modes());
        self.eigenvalues.truncate(modes);
        self.vectors.truncate(modes * self.vertices);
        self
    }
}

/// Full eigendecomposition of `-Δ_n`, eigenvalues ascending.
///
/// `λ_0` is set to exactly zero with the exact constant eigenvector; every
/// other vector is signed so that its first non-negligible entry is positive.
pub fn eigendecompose<T: Real>(graph: &GasketGraph) -> Result<SpectralBasis<T>> {
    let n = graph.level();
    if n > MAX_SPECTRAL_LEVEL {
        return Err(Error::Capacity {
            what: "dense eigensolve",
            level: n,
            cap: MAX_SPECTRAL_LEVEL,
        });
    }
    let size = graph.len();
    let scale = T::from_u64_exact(5u64.pow(n));
    let mut m = DMatrix::<T>::zeros(size, size);
    for &(x, y) in graph.edges() {
        m[(x, y)] -= scale;
        m[(y, x)] -= scale;
        m[(x, x)] += scale;
        m[(y, y)] += scale;
    }
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let to_mu = num_traits::Float::sqrt(T::from_u64_exact(graph.mass_denominator()));
    let eps = num_traits::Float::sqrt(T::default_epsilon());
    let mut eigenvalues = Vec::with_capacity(size);
    let mut vectors = Vec::with_capacity(size * size);
    for (rank, &col) in order.iter().enumerate() {
        let column = eig.eigenvectors.column(col);
        if rank == 0 {
            let c = T::one() / num_traits::Float::sqrt(graph.total_mass::<T>());
            eigenvalues.push(T::zero());
            vectors.extend(std::iter::repeat_n(c, size));
            continue;
        }
        let peak = column.iter().fold(T::zero(), |a, v| num_traits::Float::max(a, num_traits::Float::abs(*v)));
        let sign = column
            .iter()
            .find(|v| num_traits::Float::abs(**v) > eps * peak)
            .map(|v| if *v < T::zero() { -T::one() } else { T::one() })
            .unwrap_or(T::one());
        eigenvalues.push(eig.eigenvalues[col]);
        vectors.extend(column.iter().map(|v| *v * sign * to_mu));
    }
    Ok(SpectralBasis {
        level: n,
        vertices: size,
        eigenvalues,
        vectors,
    })
}

/// `f_k = Σ_x 3^-n f(x) v_k(x)` for every mode in the basis.
pub fn project<T: Real>(f: &GridFunction<T>, basis: &SpectralBasis<T>) -> Result<SobolevCoefficients<T>> {
    check_level(basis.level, f.level())?;
    let mass = T::one() / T::from_u64_exact(3u64.pow(basis.level));
    let coefficients = (0..basis.modes())
        .map(|k| {
            let dot = basis
                .vector(k)
                .iter()
                .zip(f.values())
                .fold(T::zero(), |acc, (v, x)| acc + *v * *x);
            dot * mass
        })
        .collect();
    Ok(SobolevCoefficients {
        level: basis.level,
        coefficients,
    })
}

/// `Σ_k f_k v_k`.
pub fn reconstruct<T: Real>(c: &SobolevCoefficients<T>, basis: &SpectralBasis<T>) -> Result<GridFunction<T>> {
    check_level(basis.level, c.level)?;
    if c.len() > basis.modes() {
        return Err(domain("more coefficients than modes"));
    }
    let mut values = vec![T::zero(); basis.vertices];
    for (k, fk) in c.coefficients.iter().enumerate() {
        for (out, v) in values.iter_mut().zip(basis.vector(k)) {
            *out += *fk * *v;
        }
    }
    Ok(GridFunction::from_parts(basis.level, values))
}

/// Renormalized eigenvalues `λ_k^{(n)}`, `k < k_max`, for each requested level.
#[derive(Clone, Debug)]
pub struct EigenvalueTable<T> {
    pub levels: Vec<u32>,
    /// `rows[i][k]` is `λ_k` at `levels[i]`.
    pub rows: Vec<Vec<T>>,
}

impl<T: Real> EigenvalueTable<T> {
    /// `|λ_k^{(m)} - λ_k^{(n)}| / λ_k^{(n)}` between consecutive rows, `k ≥ 1`.
    pub fn relative_gaps(&self) -> Vec<Vec<T>> {
        self.rows
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .skip(1)
                    .map(|(a, b)| num_traits::Float::abs(*b - *a) / *a)
                    .collect()
            })
            .collect()
    }
}

pub fn renormalized_eigenvalue_table<T: Real>(levels: &[u32], k_max: usize) -> Result<EigenvalueTable<T>> {
    let mut rows = Vec::with_capacity(levels.len());
    for &n in levels {
        let basis: SpectralBasis<T> = eigendecompose(&build_gasket(n)?)?;
        if basis.modes() < k_max {
            return Err(domain(format!("level {n} has only {} modes", basis.modes())));
        }
        rows.push(basis.eigenvalues()[..k_max].to_vec());
    }
    Ok(EigenvalueTable {
        levels: levels.to_vec(),
        rows,
    })
}

impl SpectralBasis<f64> {
    /// Binary cache: magic, version, level, count, then `count` eigenvalues
    /// and `count` eigenvectors (row-major), all little-endian.
    pub fn write_cache<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&CACHE_VERSION.to_le_bytes())?;
        out.write_all(&self.level.to_le_bytes())?;
        out.write_all(&(self.modes() as u64).to_le_bytes())?;
        for v in self.eigenvalues.iter().chain(&self.vectors) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_cache<R: Read>(input: R) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "eigen cache",
            reason,
        };
        let mut input = BufReader::new(input);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CACHE_VERSION {
            return Err(bad(format!("version {version}, expected {CACHE_VERSION}")));
        }
        input.read_exact(&mut word)?;
        let level = u32::from_le_bytes(word);
        if level > MAX_SPECTRAL_LEVEL {
            return Err(bad(format!("level {level}")));
        }
        let mut dword = [0u8; 8];
        input.read_exact(&mut dword)?;
        let count = u64::from_le_bytes(dword) as usize;
        let vertices = 3 * (3usize.pow(level) + 1) / 2;
        if count > vertices {
            return Err(bad(format!("{count} modes for {vertices} vertices")));
        }
        let mut read_f64 = || -> Result<f64> {
            input.read_exact(&mut dword)?;
            Ok(f64::from_le_bytes(dword))
        };
        let eigenvalues = (0..count).map(|_| read_f64()).collect::<Result<Vec<_>>>()?;
        let vectors = (0..count * vertices)
            .map(|_| read_f64())
            .collect::<Result<Vec<_>>>()?;
        if input.read(&mut [0u8; 1])? != 0 {
            return Err(bad("trailing bytes".into()));
        }
        Ok(Self {
            level,
            vertices,
            eigenvalues,
            vectors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_cache(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_cache(File::open(path)?)
    }
}

/// Cache file name for a level, keyed by format version.
pub fn cache_path(dir: &Path, level: u32) -> PathBuf {
    dir.join(format!("eigen-level{level}-v{CACHE_VERSION}.bin"))
}

/// Loads the cached basis for `graph`'s level or computes and stores it.
pub fn load_or_compute(dir: &Path, graph: &GasketGraph) -> Result<SpectralBasis<f64>> {
    let path = cache_path(dir, graph.level());
    if path.exists() {
        let basis = SpectralBasis::load(&path)?;
        if basis.vertices == graph.len() {
            return Ok(basis);
        }
    }
    let basis = eigendecompose(graph)?;
    std::fs::create_dir_all(dir)?;
    basis.save(&path)?;
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::energy_form;

    fn basis(n: u32) -> (GasketGraph, SpectralBasis<f64>) {
        let g = build_gasket(n).unwrap();
        let b = eigendecompose(&g).unwrap();
        (g, b)
    }

    #[test]
    fn triangle_spectrum() {
        let (_, b) = basis(0);
        let ev = b.eigenvalues();
        assert_eq!(ev[0], 0.0);
        assert!((ev[1] - 3.0).abs() < 1e-12);
        assert!((ev[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mode_is_unique_and_constant() {
        for n in 0..5 {
            let (g, b) = basis(n);
            assert_eq!(b.eigenvalue(0), 0.0);
            assert!(b.eigenvalue(1) > 1e-6);
            let c = 1.0 / g.total_mass::<f64>().sqrt();
            assert!(b.vector(0).iter().all(|&v| v == c));
        }
    }

    #[test]
    fn residuals_and_orthonormality() {
        let (g, b) = basis(3);
        for k in 0..b.modes() {
            let v = b.mode(k);
            let lap = crate::energy::discrete_laplacian(&v, &g).unwrap();
            let lambda = b.eigenvalue(k);
            let resid = lap.axpby(-1.0, &v, -lambda).unwrap().l2_norm();
            assert!(resid <= 1e-8 * lambda + 1e-8, "k={k} resid={resid}");
            for j in 0..=k {
                let ip = b.mode(j).inner(&v).unwrap();
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rayleigh_identity() {
        let (g, b) = basis(3);
        for k in 0..b.modes() {
            let v = b.mode(k);
            let e = energy_form(&v, &v, &g).unwrap();
            assert!((e - b.eigenvalue(k)).abs() < 1e-8 * (1.0 + b.eigenvalue(k)));
        }
    }

    #[test]
    fn projection_round_trip() {
        let (g, b) = basis(3);
        let f = GridFunction::from_fn(&g, |x, y| (3.0 * x).sin() + y * y - 0.2);
        let c = project(&f, &b).unwrap();
        let back = reconstruct(&c, &b).unwrap();
        let err = f
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);

        let e3 = project(&b.mode(3), &b).unwrap();
        for (k, ck) in e3.coefficients.iter().enumerate() {
            assert!((ck - if k == 3 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }

        let constant = project(&GridFunction::constant(&g, 2.0), &b).unwrap();
        let expected0 = 2.0 * g.total_mass::<f64>().sqrt();
        assert!((constant.coefficients[0] - expected0).abs() < 1e-12);
        assert!(constant.coefficients[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn cache_round_trip_and_truncation() {
        let (_, b) = basis(2);
        let b = b.truncate(5);
        let mut buf = Vec::new();
        b.write_cache(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + 8 + 8 * (5 + 5 * 15));
        let back = SpectralBasis::read_cache(buf.as_slice()).unwrap();
        assert_eq!(back.eigenvalues(), b.eigenvalues());
        assert_eq!(back.vector(4), b.vector(4));

        let mut corrupt = buf.clone();
        corrupt[0] = b'X';
        assert!(SpectralBasis::read_cache(corrupt.as_slice()).is_err());
        let mut long = buf;
        long.push(0);
        assert!(SpectralBasis::read_cache(long.as_slice()).is_err());
    }

    #[test]
    fn load_or_compute_writes_cache() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_gasket(2).unwrap();
        let a = load_or_compute(dir.path(), &g).unwrap();
        assert!(cache_path(dir.path(), 2).exists());
        let b = load_or_compute(dir.path(), &g).unwrap();
        assert_eq!(a.eigenvalues(), b.eigenvalues());
    }

    #[test]
    fn level_cap() {
        let g = build_gasket(8).unwrap();
        assert!(matches!(
            eigendecompose::<f64>(&g),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let g = build_gasket(2).unwrap();
        let b: SpectralBasis<f32> = eigendecompose(&g).unwrap();
        let b64: SpectralBasis<f64> = eigendecompose(&g).unwrap();
        for k in 0..b.modes() {
            assert!((b.eigenvalue(k) as f64 - b64.eigenvalue(k)).abs() < 1e-3 * (1.0 + b64.eigenvalue(k)));
        }
    }
}
