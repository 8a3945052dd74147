//! Finite-mode generalized Ornstein-Uhlenbeck process.
//!
//! In the eigenbasis of `-Δ`, mode `i` solves
//! `dY_i = -β λ_i Y_i dt + sqrt(γ λ_i) dB_i` independently of the others,
//! so transitions are sampled exactly and second moments have closed forms.

use nalgebra::DMatrix;
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::energy::SobolevCoefficients;
use crate::error::{domain, Result};
use crate::scalar::Real;
use crate::spectrum::SpectralBasis;

#[derive(Clone, Debug, PartialEq)]
pub struct OuParams<T> {
    pub beta: T,
    pub gamma: T,
    /// `λ_0 = 0 <= λ_1 <= ... <= λ_K`.
    pub lambdas: Vec<T>,
}

impl<T: Real> OuParams<T> {
    pub fn new(beta: T, gamma: T, lambdas: Vec<T>) -> Result<Self> {
        if !(beta > T::zero()) || !(gamma > T::zero()) {
            return Err(domain("β and γ must be positive"));
        }
        if lambdas.first() != Some(&T::zero()) {
            return Err(domain("λ_0 must be 0"));
        }
        if lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(domain("eigenvalues must be ascending"));
        }
        Ok(Self {
            beta,
            gamma,
            lambdas,
        })
    }

    /// Modes `0..=k` of a spectral basis.
    pub fn from_basis(beta: T, gamma: T, basis: &SpectralBasis<T>, k: usize) -> Result<Self> {
        if k >= basis.modes() {
            return Err(domain(format!("basis has {} modes, asked for K={k}", basis.modes())));
        }
        Self::new(beta, gamma, basis.eigenvalues()[..=k].to_vec())
    }

    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }

    /// `γ / 2β`, the stationary variance of every mode with `λ > 0`.
    pub fn stationary_variance(&self) -> T {
        self.gamma / (T::from_u64_exact(2) * self.beta)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuState<T> {
    pub t: T,
    pub y: Vec<T>,
}

impl<T: Real> OuState<T> {
    pub fn new(y: Vec<T>) -> Self {
        Self { t: T::zero(), y }
    }

    /// Centered Gaussian start with covariance `Ψ_k`.
    pub fn gaussian<R: Rng + ?Sized>(covariance: &DMatrix<T>, rng: &mut R) -> Result<Self>
    where
        StandardNormal: Distribution<T>,
    {
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| domain("initial covariance is not positive definite"))?;
        let z: Vec<T> = (0..covariance.nrows())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let y = chol.l() * nalgebra::DVector::from_vec(z);
        Ok(Self::new(y.iter().copied().collect()))
    }
}

/// Exact transition over `dt`.
pub fn ou_step<T: Real, R: Rng + ?Sized>(
    state: &OuState<T>,
    params: &OuParams<T>,
    dt: T,
    rng: &mut R,
) -> Result<OuState<T>>
where
    StandardNormal: Distribution<T>,
{
    if !(dt >= T::zero()) {
        return Err(domain("time step must be non-negative"));
    }
    if state.y.len() != params.modes() {
        return Err(domain(format!(
            "state has {} modes, parameters have {}",
            state.y.len(),
            params.modes()
        )));
    }
    let two = T::from_u64_exact(2);
    let var = params.stationary_variance();
    let y = state
        .y
        .iter()
        .zip(&params.lambdas)
        .map(|(&y, &lambda)| {
            if lambda == T::zero() || dt == T::zero() {
                return y;
            }
            let rate = params.beta * lambda;
            let decay = Float::exp(-rate * dt);
            let sd = Float::sqrt(var * -Float::exp_m1(-two * rate * dt));
            let z: T = StandardNormal.sample(rng);
            y * decay + sd * z
        })
        .collect();
    Ok(OuState { t: state.t + dt, y })
}

/// Exact path on the grid `0, dt, ..., steps*dt`.
pub fn simulate<T: Real, R: Rng + ?Sized>(
    initial: OuState<T>,
    params: &OuParams<T>,
    dt: T,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<OuState<T>>>
where
    StandardNormal: Distribution<T>,
{
    let mut path = Vec::with_capacity(steps + 1);
    path.push(initial);
    for _ in 0..steps {
        let next = ou_step(path.last().unwrap(), params, dt, rng)?;
        path.push(next);
    }
    Ok(path)
}

/// Second moments `E[Y_i(t) Y_j(t)]` from initial moments `Ψ`:
/// `ψ_i(t) = γ/2β (1 - e^{-2βλ_i t}) + ψ_i(0) e^{-2βλ_i t}` on the diagonal and
/// `ψ_ij(t) = ψ_ij(0) e^{-β(λ_i+λ_j)t}` off it.
pub fn moment_oracle<T: Real>(params: &OuParams<T>, initial: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
    let k = params.modes();
    if initial.nrows() != k || initial.ncols() != k {
        return Err(domain("initial moment matrix must be (K+1)x(K+1)"));
    }
    if !(t >= T::zero()) {
        return Err(domain("time must be non-negative"));
    }
    let two = T::from_u64_exact(2);
    let var = params.stationary_variance();
    Ok(DMatrix::from_fn(k, k, |i, j| {
        let (li, lj) = (params.lambdas[i], params.lambdas[j]);
        let decay = Float::exp(-params.beta * (li + lj) * t);
        if i == j {
            var * (T::one() - Float::exp(-two * params.beta * li * t)) + initial[(i, i)] * decay
        } else {
            initial[(i, j)] * decay
        }
    }))
}

/// `Σ_i f_i y_i`.
pub fn field_evaluate<T: Real>(state: &OuState<T>, f: &SobolevCoefficients<T>) -> Result<T> {
    if f.len() > state.y.len() {
        return Err(domain(format!(
            "test function has {} modes, state has {}",
            f.len(),
            state.y.len()
        )));
    }
    Ok(f.coefficients
        .iter()
        .zip(&state.y)
        .fold(T::zero(), |acc, (fi, yi)| acc + *fi * *yi))
}

#[derive(Clone, Debug)]
pub struct MartingaleSeries<T> {
    pub times: Vec<T>,
    /// `M_t(f)` at each grid time.
    pub martingale: Vec<T>,
    /// Running `Σ (ΔM)²`.
    pub quadratic_variation: Vec<T>,
}

/// `M_t(f) = Y_t(f) - Y_0(f) - β ∫_0^t Y_s(Δf) ds` on a uniform grid, with
/// `(Δf)_k = -λ_k f_k` and trapezoidal quadrature.
pub fn martingale_residual<T: Real>(
    trajectory: &[OuState<T>],
    f: &SobolevCoefficients<T>,
    params: &OuParams<T>,
) -> Result<MartingaleSeries<T>> {
    if trajectory.len() < 2 {
        return Err(domain("need at least two grid points"));
    }
    let dt = trajectory[1].t - trajectory[0].t;
    let tol = Float::sqrt(T::epsilon()) * Float::abs(dt) * T::from_u64_exact(16);
    for w in trajectory.windows(2) {
        if Float::abs((w[1].t - w[0].t) - dt) > tol {
            return Err(domain("trajectory grid is not uniform"));
        }
    }
    let lap_f = SobolevCoefficients {
        level: f.level,
        coefficients: f
            .coefficients
            .iter()
            .zip(&params.lambdas)
            .map(|(fk, lk)| -*fk * *lk)
            .collect(),
    };
    let half = T::one() / T::from_u64_exact(2);
    let y0 = field_evaluate(&trajectory[0], f)?;
    let mut integral = T::zero();
    let mut prev_lap = field_evaluate(&trajectory[0], &lap_f)?;
    let mut prev_m = T::zero();
    let mut qv = T::zero();
    let mut out = MartingaleSeries {
        times: vec![trajectory[0].t],
        martingale: vec![T::zero()],
        quadratic_variation: vec![T::zero()],
    };
    for state in &trajectory[1..] {
        let lap = field_evaluate(state, &lap_f)?;
        integral += half * dt * (prev_lap + lap);
        prev_lap = lap;
        let m = field_evaluate(state, f)? - y0 - params.beta * integral;
        qv += (m - prev_m) * (m - prev_m);
        prev_m = m;
        out.times.push(state.t);
        out.martingale.push(m);
        out.quadratic_variation.push(qv);
    }
    Ok(out)
}
