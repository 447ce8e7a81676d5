//! Independent checks of the spectral solution.
//!
//! Three routes that share no code with [`crate::spectral`]:
//!
//! * the continuous Lyapunov equation `Ω C + C Ωᵀ = Σ_η` solved as one dense
//!   linear system over `vec(C)`;
//! * classical fourth-order Runge–Kutta integration of the covariance flow
//!   `dC/dt = −Ω C − C Ωᵀ + Σ_η`;
//! * seeded Monte-Carlo integration of the Langevin equations.
//!
//! `Σ_η` is zero except for the momentum diagonal, which holds the noise
//! strengths `D_i`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::BathProfile;
use crate::chain::CouplingMatrix;
use crate::error::{Error, Result};
use crate::spectral::{temperature_of, DriftMatrix, SecondMoments, TemperatureProfile};

/// Largest chain handled by the Kronecker-product Lyapunov solve.
pub const MAX_LYAPUNOV_IONS: usize = 20;
/// Relative pivot size below which the Lyapunov system counts as singular.
const SINGULAR_PIVOT: f64 = 1e-14;
/// Step count above which small systems switch to repeated squaring of the
/// one-step Runge–Kutta map.
const DIRECT_STEP_LIMIT: u64 = 20_000;
/// Largest state dimension for which the one-step map is formed explicitly.
const MAX_POWERED_DIM: usize = 16;

/// Full `2N×2N` covariance over `(x_1..x_N, p_1..p_N)`.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    c: Mat<f64>,
}

impl CovarianceMatrix {
    pub fn new(c: Mat<f64>) -> Result<Self> {
        if c.nrows() != c.ncols() || c.nrows() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "covariance must be square with even dimension, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(CovarianceMatrix { c })
    }

    /// Uncorrelated covariance with the given diagonal moments.
    pub fn diagonal(x2: &[f64], p2: &[f64]) -> Result<Self> {
        if x2.len() != p2.len() {
            return Err(Error::InvalidArgument("x² and p² lengths differ".into()));
        }
        let n = x2.len();
        let c = Mat::<f64>::from_fn(2 * n, 2 * n, |i, j| match (i == j, i < n) {
            (true, true) => x2[i],
            (true, false) => p2[i - n],
            _ => 0.0,
        });
        Ok(CovarianceMatrix { c })
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.c.nrows() / 2
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }

    pub fn moments(&self, time: f64) -> SecondMoments {
        let n = self.n();
        SecondMoments {
            x2: (0..n).map(|i| self.c[(i, i)]).collect(),
            p2: (0..n).map(|i| self.c[(i + n, i + n)]).collect(),
            time,
        }
    }

    pub fn temperatures(&self, coupling: &CouplingMatrix, time: f64) -> Result<TemperatureProfile> {
        temperature_of(&self.moments(time), coupling)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.c.nrows();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..i {
                worst = worst.max((self.c[(i, j)] - self.c[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let sym = Mat::<f64>::from_fn(self.c.nrows(), self.c.ncols(), |i, j| {
            0.5 * (self.c[(i, j)] + self.c[(j, i)])
        });
        let ev = sym
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::NumericalFailure(format!("{e:?}")))?;
        Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn trace(&self) -> f64 {
        (0..self.c.nrows()).map(|i| self.c[(i, i)]).sum()
    }

    fn symmetrized(mut self) -> Self {
        let d = self.c.nrows();
        for i in 0..d {
            for j in 0..i {
                let m = 0.5 * (self.c[(i, j)] + self.c[(j, i)]);
                self.c[(i, j)] = m;
                self.c[(j, i)] = m;
            }
        }
        self
    }
}

fn check_strengths(drift: &DriftMatrix, strengths: &[f64]) -> Result<()> {
    if strengths.len() != drift.n() {
        return Err(Error::InvalidArgument(format!(
            "{} noise strengths for a {}-ion chain",
            strengths.len(),
            drift.n()
        )));
    }
    Ok(())
}

/// Column-major `vec` index of entry `(i, j)` of a `d×d` matrix.
#[inline]
fn vec_index(i: usize, j: usize, d: usize) -> usize {
    i + d * j
}

/// Kronecker sum `I⊗Ω + Ω⊗I`, the matrix of `C ↦ Ω C + C Ωᵀ` on `vec(C)`.
fn kronecker_sum(omega: &Mat<f64>) -> Mat<f64> {
    let d = omega.nrows();
    let mut k = Mat::<f64>::zeros(d * d, d * d);
    for j in 0..d {
        for i in 0..d {
            let row = vec_index(i, j, d);
            for m in 0..d {
                // (Ω C)_ij = Σ_m Ω_im C_mj
                k[(row, vec_index(m, j, d))] += omega[(i, m)];
                // (C Ωᵀ)_ij = Σ_m C_im Ω_jm
                k[(row, vec_index(i, m, d))] += omega[(j, m)];
            }
        }
    }
    k
}

fn noise_vec(strengths: &[f64]) -> Vec<f64> {
    let n = strengths.len();
    let d = 2 * n;
    let mut s = vec![0.0; d * d];
    for (i, &di) in strengths.iter().enumerate() {
        s[vec_index(n + i, n + i, d)] = di;
    }
    s
}

/// Steady covariance from `Ω C + C Ωᵀ = Σ_η`, for chains of at most
/// [`MAX_LYAPUNOV_IONS`] ions.
pub fn lyapunov_steady_covariance(drift: &DriftMatrix, strengths: &[f64]) -> Result<CovarianceMatrix> {
    check_strengths(drift, strengths)?;
    if drift.n() > MAX_LYAPUNOV_IONS {
        return Err(Error::InvalidArgument(format!(
            "Lyapunov oracle is limited to {MAX_LYAPUNOV_IONS} ions, got {}",
            drift.n()
        )));
    }
    let d = 2 * drift.n();
    let k = kronecker_sum(drift.matrix());
    let lu = k.partial_piv_lu();
    let pivots: Vec<f64> = (0..d * d).map(|i| lu.U()[(i, i)].abs()).collect();
    let largest = pivots.iter().copied().fold(0.0, f64::max);
    let smallest = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > SINGULAR_PIVOT * largest) {
        return Err(Error::NoSteadyState);
    }
    let s = noise_vec(strengths);
    let rhs = Mat::<f64>::from_fn(d * d, 1, |i, _| s[i]);
    let sol = lu.solve(&rhs);
    if (0..d * d).any(|i| !sol[(i, 0)].is_finite()) {
        return Err(Error::NoSteadyState);
    }
    let c = Mat::<f64>::from_fn(d, d, |i, j| sol[(vec_index(i, j, d), 0)]);
    Ok(CovarianceMatrix { c }.symmetrized())
}

/// Step size used by [`covariance_ode_at`] for a given cap.
pub fn ode_step_cap(drift: &DriftMatrix, dt_max: f64) -> f64 {
    let gamma_max = drift.gammas().iter().copied().fold(0.0, f64::max);
    let scale = drift.max_local_freq().max(gamma_max);
    dt_max.min(0.05 / scale)
}

fn flow(omega: &Mat<f64>, sigma: &Mat<f64>, c: &Mat<f64>) -> Mat<f64> {
    let oc = omega * c;
    let mut out = sigma.clone();
    let d = c.nrows();
    for j in 0..d {
        for i in 0..d {
            out[(i, j)] -= oc[(i, j)] + oc[(j, i)];
        }
    }
    out
}

fn rk4_step(omega: &Mat<f64>, sigma: &Mat<f64>, c: &Mat<f64>, h: f64) -> Mat<f64> {
    let k1 = flow(omega, sigma, c);
    let k2 = flow(omega, sigma, &(c + &k1 * (0.5 * h)));
    let k3 = flow(omega, sigma, &(c + &k2 * (0.5 * h)));
    let k4 = flow(omega, sigma, &(c + &k3 * h));
    c + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0)
}

/// Affine map `v ↦ P v + q` on `vec(C)`.
struct AffineMap {
    p: Mat<f64>,
    q: Mat<f64>,
}

impl AffineMap {
    fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            p: &next.p * &self.p,
            q: &next.p * &self.q + &next.q,
        }
    }
}

/// Exact one-step map of classical Runge–Kutta applied to `v' = L v + s`:
/// `v ↦ R(hL) v + h (I + hL/2 + (hL)²/6 + (hL)³/24) s`.
fn rk4_one_step_map(omega: &Mat<f64>, strengths: &[f64], h: f64) -> AffineMap {
    let d = omega.nrows();
    let dim = d * d;
    let hl = kronecker_sum(omega) * (-h);
    let id = Mat::<f64>::identity(dim, dim);
    // Horner: R = I + hL(I + hL/2(I + hL/3(I + hL/4)))
    let mut r = &id + &hl * 0.25;
    r = &id + (&hl * &r) * (1.0 / 3.0);
    r = &id + (&hl * &r) * 0.5;
    let r = &id + &hl * &r;
    // Φ = I + hL/2 + (hL)²/6 + (hL)³/24 = I + hL(1/2 + hL(1/6 + hL/24))
    let mut phi = &id * (1.0 / 6.0) + &hl * (1.0 / 24.0);
    phi = &id * 0.5 + &hl * &phi;
    let phi = &id + &hl * &phi;
    let s = noise_vec(strengths);
    let s = Mat::<f64>::from_fn(dim, 1, |i, _| s[i] * h);
    AffineMap { p: r, q: &phi * &s }
}

/// Covariance at time `t` by fourth-order Runge–Kutta from `c0`.
///
/// The step is at most `dt_max` and at most `0.05 / max(ω, γ_max)`. Very
/// long horizons on small systems compose the exact one-step map by
/// repeated squaring, which reproduces plain stepping up to rounding.
pub fn covariance_ode_at(
    drift: &DriftMatrix,
    strengths: &[f64],
    c0: &CovarianceMatrix,
    t: f64,
    dt_max: f64,
) -> Result<CovarianceMatrix> {
    check_strengths(drift, strengths)?;
    if c0.n() != drift.n() {
        return Err(Error::InvalidArgument("initial covariance does not match the chain".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be finite and nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(c0.clone());
    }
    let cap = ode_step_cap(drift, dt_max);
    if !(cap > 1e-300) {
        return Err(Error::InvalidArgument(format!("step size underflow (dt_max = {dt_max})")));
    }
    let steps_f = (t / cap).ceil();
    if !(steps_f < 1e18) {
        return Err(Error::InvalidArgument(format!(
            "horizon {t} needs too many steps of size {cap}"
        )));
    }
    let steps = (steps_f as u64).max(1);
    let h = t / steps as f64;
    let omega = drift.matrix();
    let d = omega.nrows();

    if steps > DIRECT_STEP_LIMIT && d <= MAX_POWERED_DIM {
        let mut power = rk4_one_step_map(omega, strengths, h);
        let mut acc: Option<AffineMap> = None;
        let mut k = steps;
        while k > 0 {
            if k & 1 == 1 {
                acc = Some(match acc {
                    None => AffineMap {
                        p: power.p.clone(),
                        q: power.q.clone(),
                    },
                    Some(a) => a.then(&power),
                });
            }
            k >>= 1;
            if k > 0 {
                power = power.then(&power);
            }
        }
        let map = acc.expect("at least one step");
        let v0 = Mat::<f64>::from_fn(d * d, 1, |i, _| c0.c[(i % d, i / d)]);
        let v = &map.p * &v0 + &map.q;
        let c = Mat::<f64>::from_fn(d, d, |i, j| v[(vec_index(i, j, d), 0)]);
        return Ok(CovarianceMatrix { c }.symmetrized());
    }

    let n = drift.n();
    let sigma = Mat::<f64>::from_fn(d, d, |i, j| {
        if i == j && i >= n {
            strengths[i - n]
        } else {
            0.0
        }
    });
    let mut c = c0.c.clone();
    for _ in 0..steps {
        c = rk4_step(omega, &sigma, &c, h);
    }
    Ok(CovarianceMatrix { c }.symmetrized())
}

/// Ensemble means of the per-ion phonon-number estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub times: Vec<f64>,
    /// `mean_temps[k][i]`: ion `i + 1` at `times[k]`.
    pub mean_temps: Vec<Vec<f64>>,
    pub std_errs: Vec<Vec<f64>>,
    /// Chain-averaged temperature per time and its standard error.
    pub chain_mean: Vec<f64>,
    pub chain_mean_err: Vec<f64>,
    pub n_traj: usize,
    pub seed: u64,
    pub dt: f64,
}

/// Sum by recursive halving; the result depends only on the slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

fn mean_and_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Largest admissible Monte-Carlo step, `0.02 / max(ω_x, γ_max)`.
pub fn max_monte_carlo_dt(coupling: &CouplingMatrix, profile: &BathProfile) -> f64 {
    0.02 / coupling.omega_x().max(profile.max_gamma())
}

/// Seeded Monte-Carlo integration of the Langevin equations.
///
/// Each step applies a Gaussian momentum kick of variance `D_i dt` and a
/// semi-implicit Euler–Maruyama update (momenta first, positions with the new
/// momenta). Initial states are drawn from the thermal product distribution
/// with per-ion temperatures `t0`. Trajectory `k` uses its own ChaCha stream
/// `k` under `seed`, so results do not depend on scheduling.
pub fn monte_carlo_temperatures(
    coupling: &CouplingMatrix,
    profile: &BathProfile,
    t0: &[f64],
    times: &[f64],
    n_traj: usize,
    seed: u64,
    dt: f64,
) -> Result<EnsembleEstimate> {
    let n = coupling.dim();
    if profile.len() != n || t0.len() != n {
        return Err(Error::InvalidArgument("profile or initial temperatures do not match the chain".into()));
    }
    if n_traj < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 trajectories, got {n_traj}")));
    }
    let dt_cap = max_monte_carlo_dt(coupling, profile);
    if !(dt > 0.0 && dt <= dt_cap * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("dt must lie in (0, {dt_cap:.3e}], got {dt}")));
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "time grid must be nonempty, nonnegative and strictly increasing".into(),
        ));
    }
    if t0.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidArgument("initial temperatures must be nonnegative".into()));
    }

    let w = coupling.local_freqs().to_vec();
    let a: Vec<f64> = (0..n * n).map(|k| coupling.get(k / n, k % n)).collect();
    let gammas = profile.gammas().to_vec();
    let d = crate::bath::noise_strengths(profile, coupling)?;
    let x_sd: Vec<f64> = t0.iter().zip(&w).map(|(t, w)| ((t + 0.5) / w).sqrt()).collect();
    let p_sd: Vec<f64> = t0.iter().zip(&w).map(|(t, w)| ((t + 0.5) * w).sqrt()).collect();

    // Interval lengths and step counts between consecutive sample times.
    let mut plan = Vec::with_capacity(times.len());
    let mut prev = 0.0;
    for &t in times {
        let span = t - prev;
        let steps = (span / dt).ceil() as u64;
        let h = if steps == 0 { 0.0 } else { span / steps as f64 };
        plan.push((steps, h, d.iter().map(|di| (di * h).sqrt()).collect::<Vec<f64>>()));
        prev = t;
    }

    let n_times = times.len();
    let samples: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|traj| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(traj as u64);
            let mut x: Vec<f64> = x_sd.iter().map(|s| s * gauss(&mut rng)).collect();
            let mut p: Vec<f64> = p_sd.iter().map(|s| s * gauss(&mut rng)).collect();
            let mut out = Vec::with_capacity(n_times * n);
            for (steps, h, kick) in &plan {
                for _ in 0..*steps {
                    for i in 0..n {
                        let row = &a[i * n..(i + 1) * n];
                        let force: f64 = row.iter().zip(&x).map(|(aij, xj)| aij * xj).sum();
                        let noise = if kick[i] > 0.0 { kick[i] * gauss(&mut rng) } else { 0.0 };
                        p[i] += -(force + gammas[i] * p[i]) * h + noise;
                    }
                    for i in 0..n {
                        x[i] += p[i] * h;
                    }
                }
                for i in 0..n {
                    out.push(0.5 * (w[i] * x[i] * x[i] + p[i] * p[i] / w[i] - 1.0));
                }
            }
            out
        })
        .collect();

    let mut mean_temps = Vec::with_capacity(n_times);
    let mut std_errs = Vec::with_capacity(n_times);
    let mut chain_mean = Vec::with_capacity(n_times);
    let mut chain_mean_err = Vec::with_capacity(n_times);
    let mut column = vec![0.0; n_traj];
    for k in 0..n_times {
        let mut means = Vec::with_capacity(n);
        let mut errs = Vec::with_capacity(n);
        for i in 0..n {
            for (slot, s) in column.iter_mut().zip(&samples) {
                *slot = s[k * n + i];
            }
            let (m, e) = mean_and_err(&column);
            means.push(m);
            errs.push(e);
        }
        for (slot, s) in column.iter_mut().zip(&samples) {
            *slot = pairwise_sum(&s[k * n..(k + 1) * n]) / n as f64;
        }
        let (m, e) = mean_and_err(&column);
        mean_temps.push(means);
        std_errs.push(errs);
        chain_mean.push(m);
        chain_mean_err.push(e);
    }

    Ok(EnsembleEstimate {
        times: times.to_vec(),
        mean_temps,
        std_errs,
        chain_mean,
        chain_mean_err,
        n_traj,
        seed,
        dt,
    })
}

#[inline]
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{assemble_profile, noise_strengths, BathAttachment};
    use crate::chain::{build_coupling_matrix, uniform_positions};
    use crate::spectral::{build_drift_matrix, decompose, steady_state_temperatures, thermal_initial, variance_at};
    use approx::assert_relative_eq;

    fn setup(n: usize, atts: &[BathAttachment]) -> (CouplingMatrix, BathProfile, DriftMatrix, Vec<f64>) {
        let c = build_coupling_matrix(&uniform_positions(n).unwrap(), 10.0).unwrap();
        let p = assemble_profile(n, atts, None).unwrap();
        let d = build_drift_matrix(&c, &p).unwrap();
        let s = noise_strengths(&p, &c).unwrap();
        (c, p, d, s)
    }

    #[test]
    fn kronecker_sum_applies_lyapunov_operator() {
        let (_, _, drift, _) = setup(2, &[BathAttachment::new(1, 0.3, 1.0)]);
        let om = drift.matrix();
        let d = om.nrows();
        let c = Mat::<f64>::from_fn(d, d, |i, j| (1 + i + 2 * j) as f64 * 0.1);
        let k = kronecker_sum(om);
        let v = Mat::<f64>::from_fn(d * d, 1, |r, _| c[(r % d, r / d)]);
        let kv = &k * &v;
        let direct = om * &c + &c * om.transpose();
        for i in 0..d {
            for j in 0..d {
                assert_relative_eq!(kv[(vec_index(i, j, d), 0)], direct[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lyapunov_single_oscillator() {
        let (c, _, drift, s) = setup(1, &[BathAttachment::new(1, 0.1, 2.0)]);
        let cov = lyapunov_steady_covariance(&drift, &s).unwrap();
        assert_relative_eq!(cov.get(0, 0), 0.25, epsilon = 1e-12);
        assert_relative_eq!(cov.get(1, 1), 25.0, epsilon = 1e-10);
        assert!(cov.get(0, 1).abs() < 1e-12);
        assert_relative_eq!(cov.temperatures(&c, f64::INFINITY).unwrap().temps[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn lyapunov_without_noise_is_zero() {
        let (_, _, drift, _) = setup(3, &[BathAttachment::new(1, 0.5, 3.0)]);
        let cov = lyapunov_steady_covariance(&drift, &[0.0; 3]).unwrap();
        assert!(cov.matrix().norm_max() == 0.0);
    }

    #[test]
    fn lyapunov_detects_dark_mode() {
        // Damping only the middle of a symmetric 3-ion chain leaves the
        // antisymmetric mode undamped.
        let (_, _, drift, s) = setup(3, &[BathAttachment::new(2, 0.5, 3.0)]);
        assert!(matches!(lyapunov_steady_covariance(&drift, &s), Err(Error::NoSteadyState)));
    }

    #[test]
    fn lyapunov_matches_spectral_steady_state() {
        let atts = [
            BathAttachment::new(1, 0.37, 1.5),
            BathAttachment::new(3, 0.05, 8.0),
            BathAttachment::new(5, 0.81, 4.2),
        ];
        let (c, _, drift, s) = setup(5, &atts);
        let lyap = lyapunov_steady_covariance(&drift, &s).unwrap();
        let spec = steady_state_temperatures(&decompose(&drift).unwrap(), &s, &c).unwrap();
        let from_lyap = lyap.temperatures(&c, f64::INFINITY).unwrap();
        for (a, b) in from_lyap.temps.iter().zip(&spec.temps) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(lyap.min_eigenvalue().unwrap() >= -1e-10 * lyap.trace());
    }

    #[test]
    fn ode_matches_spectral_transient() {
        let atts = [BathAttachment::new(1, 0.2, 2.0), BathAttachment::new(3, 0.2, 10.0)];
        let (c, _, drift, s) = setup(3, &atts);
        let init = thermal_initial(&[5.0; 3], &c).unwrap();
        let c0 = CovarianceMatrix::diagonal(&init.x2, &init.p2).unwrap();
        assert_eq!(covariance_ode_at(&drift, &s, &c0, 0.0, 0.01).unwrap().matrix(), c0.matrix());
        let ode = covariance_ode_at(&drift, &s, &c0, 7.3, 0.002).unwrap();
        assert!(ode.max_asymmetry() <= 1e-10);
        let spec = variance_at(&decompose(&drift).unwrap(), &init, &s, 7.3).unwrap();
        for i in 0..3 {
            let (dx, dp) = (ode.get(i, i) - spec.x2[i], ode.get(i + 3, i + 3) - spec.p2[i]);
            assert!(dx.abs() < 1e-6 && dp.abs() < 1e-6, "ion {i}: {dx:.3e} {dp:.3e}");
        }
    }

    #[test]
    fn powered_map_matches_direct_stepping() {
        let atts = [BathAttachment::new(1, 0.4, 2.0), BathAttachment::new(2, 0.1, 6.0)];
        let (_, _, drift, s) = setup(2, &atts);
        let c0 = CovarianceMatrix::diagonal(&[0.3, 0.2], &[30.0, 20.0]).unwrap();
        let h = 0.004;
        let steps = DIRECT_STEP_LIMIT + 37;
        let t = h * steps as f64;
        let powered = covariance_ode_at(&drift, &s, &c0, t, h).unwrap();

        let n = 2;
        let sigma = Mat::<f64>::from_fn(4, 4, |i, j| if i == j && i >= n { s[i - n] } else { 0.0 });
        let mut c = c0.matrix().clone();
        for _ in 0..steps {
            c = rk4_step(drift.matrix(), &sigma, &c, h);
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(powered.get(i, j), c[(i, j)], max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ode_converges_to_lyapunov_fixed_point() {
        let atts = [BathAttachment::new(1, 0.5, 1.0), BathAttachment::new(2, 0.3, 7.0)];
        let (_, _, drift, s) = setup(2, &atts);
        let lyap = lyapunov_steady_covariance(&drift, &s).unwrap();
        let c0 = CovarianceMatrix::diagonal(&[0.1, 0.1], &[10.0, 10.0]).unwrap();
        let late = covariance_ode_at(&drift, &s, &c0, 1e5, 0.005).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((late.get(i, j) - lyap.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rk4_error_shrinks_fourth_order() {
        // Pre-asymptotic regime: compare against the Lyapunov-consistent
        // spectral transient at a fixed time with two step sizes.
        let atts = [BathAttachment::new(1, 0.5, 1.0)];
        let (c, _, drift, s) = setup(2, &atts);
        let init = thermal_initial(&[3.0, 3.0], &c).unwrap();
        let c0 = CovarianceMatrix::diagonal(&init.x2, &init.p2).unwrap();
        let exact = variance_at(&decompose(&drift).unwrap(), &init, &s, 2.0).unwrap();
        let err = |dt: f64| {
            let ode = covariance_ode_at(&drift, &s, &c0, 2.0, dt).unwrap();
            (0..2).map(|i| (ode.get(i + 2, i + 2) - exact.p2[i]).abs()).fold(0.0, f64::max)
        };
        let coarse = err(0.004);
        let fine = err(0.002);
        let ratio = coarse / fine;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio} ({coarse:e} / {fine:e})");
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let (c, p, _, _) = setup(2, &[BathAttachment::new(1, 0.5, 3.0)]);
        let dt = max_monte_carlo_dt(&c, &p);
        let a = monte_carlo_temperatures(&c, &p, &[1.0, 1.0], &[0.1, 0.5], 200, 7, dt).unwrap();
        let b = monte_carlo_temperatures(&c, &p, &[1.0, 1.0], &[0.1, 0.5], 200, 7, dt).unwrap();
        assert_eq!(a, b);
        assert!(a.std_errs.iter().flatten().all(|e| *e > 0.0));
        let other = monte_carlo_temperatures(&c, &p, &[1.0, 1.0], &[0.1, 0.5], 200, 8, dt).unwrap();
        assert_ne!(a.mean_temps, other.mean_temps);
    }

    #[test]
    fn monte_carlo_argument_checks() {
        let (c, p, _, _) = setup(2, &[BathAttachment::new(1, 0.5, 3.0)]);
        assert!(monte_carlo_temperatures(&c, &p, &[1.0, 1.0], &[1.0], 10, 1, 0.001).is_err());
        assert!(monte_carlo_temperatures(&c, &p, &[1.0, 1.0], &[1.0], 100, 1, 0.01).is_err());
        assert!(monte_carlo_temperatures(&c, &p, &[1.0, 1.0], &[1.0, 0.5], 100, 1, 0.001).is_err());
    }

    #[test]
    fn monte_carlo_single_ion_equilibrium() {
        let (c, p, _, _) = setup(1, &[BathAttachment::new(1, 0.1, 2.0)]);
        // Start at the bath temperature; after 50/γ any memory is gone anyway.
        let est = monte_carlo_temperatures(&c, &p, &[2.0], &[20.0, 40.0], 400, 42, 0.002).unwrap();
        for k in 0..2 {
            let z = (est.mean_temps[k][0] - 2.0) / est.std_errs[k][0];
            assert!(z.abs() < 3.0, "z = {z}");
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_exact_values() {
        let v: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
