//! Exact second moments of the linear Langevin chain by eigendecomposition
//! of the drift matrix.
//!
//! The state is `q = (x_1..x_N, p_1..p_N)` and evolves as
//! `dq = −Ω q dt + η`, with `Ω = [[0, −I], [A, diag(γ)]]`. Writing
//! `Ω = U Λ U⁻¹`, the covariance at time `t` is
//!
//! ```text
//! C(t) = U [ e^{−Lt} ∘ K₀ + φ(L, t) ∘ S ] Uᵀ,   L_αβ = λ_α + λ_β,
//! K₀ = U⁻¹ C(0) U⁻ᵀ,   S = W diag(D) Wᵀ,   W = U⁻¹[:, N..2N],
//! φ(L, t) = (1 − e^{−Lt}) / L,
//! ```
//!
//! where `∘` is the elementwise product and `D_i` the momentum-noise
//! strengths. Only the diagonal of `C` is formed. Transposes are plain
//! (not conjugate) transposes.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::bath::BathProfile;
use crate::chain::CouplingMatrix;
use crate::error::{Error, Result};

/// Refuse decompositions whose eigenvector matrix is worse conditioned.
pub const MAX_EIGENVECTOR_CONDITION: f64 = 1e12;
/// Relative Frobenius tolerance on `U Λ U⁻¹ − Ω`.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-10;
/// Smallest admissible `|λ_α + λ_β|` for the steady-state limit.
pub const MIN_STEADY_SUM: f64 = 1e-13;
/// Relative imaginary residue tolerated before taking real parts.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;
/// Negative temperatures above this magnitude are a hard error.
pub const NEGATIVE_TEMPERATURE_LIMIT: f64 = 1e-6;

/// The `2N×2N` drift matrix `[[0, −I], [A, diag(γ)]]`.
#[derive(Debug, Clone)]
pub struct DriftMatrix {
    omega: Mat<f64>,
    n: usize,
    gammas: Vec<f64>,
    max_local_freq: f64,
}

impl DriftMatrix {
    /// Assemble from a coupling matrix and per-ion damping rates.
    pub fn new(coupling: &CouplingMatrix, gammas: &[f64]) -> Result<Self> {
        let n = coupling.dim();
        if gammas.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} damping rates for a {n}-ion chain",
                gammas.len()
            )));
        }
        let a = coupling.matrix();
        let omega = Mat::<f64>::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
            (true, true) => 0.0,
            (true, false) => {
                if c - n == r {
                    -1.0
                } else {
                    0.0
                }
            }
            (false, true) => a[(r - n, c)],
            (false, false) => {
                if r == c {
                    gammas[r - n]
                } else {
                    0.0
                }
            }
        });
        let max_local_freq = coupling.local_freqs().iter().copied().fold(0.0, f64::max);
        Ok(DriftMatrix {
            omega,
            n,
            gammas: gammas.to_vec(),
            max_local_freq,
        })
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.omega
    }

    /// Number of ions.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Largest local transverse frequency, used to size integration steps.
    pub fn max_local_freq(&self) -> f64 {
        self.max_local_freq
    }
}

pub fn build_drift_matrix(coupling: &CouplingMatrix, profile: &BathProfile) -> Result<DriftMatrix> {
    DriftMatrix::new(coupling, profile.gammas())
}

/// Eigendecomposition `Ω = U diag(λ) U⁻¹`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<c64>,
    u: Mat<c64>,
    u_inv: Mat<c64>,
    min_sum_real: f64,
    u_condition: f64,
    n: usize,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    pub fn u(&self) -> &Mat<c64> {
        &self.u
    }

    pub fn u_inv(&self) -> &Mat<c64> {
        &self.u_inv
    }

    /// `min_{α,β} Re(λ_α + λ_β)`.
    pub fn min_sum_real(&self) -> f64 {
        self.min_sum_real
    }

    /// 1-norm condition number of `U`.
    pub fn u_condition(&self) -> f64 {
        self.u_condition
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn norm_one(m: &Mat<c64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn decompose(drift: &DriftMatrix) -> Result<SpectralDecomposition> {
    let omega = drift.matrix();
    let dim = omega.nrows();
    let evd = omega
        .eigen()
        .map_err(|e| Error::NumericalFailure(format!("eigensolver failed: {e:?}")))?;
    let eigenvalues: Vec<c64> = evd.S().column_vector().iter().copied().collect();
    let u: Mat<c64> = evd.U().to_owned();
    if eigenvalues.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(Error::NumericalFailure("non-finite eigenvalue".into()));
    }

    let u_inv = u.partial_piv_lu().inverse();
    let u_condition = norm_one(&u) * norm_one(&u_inv);
    if !(u_condition <= MAX_EIGENVECTOR_CONDITION) {
        return Err(Error::DefectiveSpectrum {
            condition: u_condition,
        });
    }

    let scaled = Mat::<c64>::from_fn(dim, dim, |i, j| u[(i, j)] * eigenvalues[j]);
    let rebuilt = &scaled * &u_inv;
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    for j in 0..dim {
        for i in 0..dim {
            let o = omega[(i, j)];
            err2 += (rebuilt[(i, j)] - c64::new(o, 0.0)).norm_sqr();
            ref2 += o * o;
        }
    }
    let rel = (err2 / ref2).sqrt();
    if !(rel <= RECONSTRUCTION_TOLERANCE) {
        return Err(Error::NumericalFailure(format!(
            "eigendecomposition reconstruction error {rel:.3e}"
        )));
    }

    let min_re = eigenvalues.iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    if drift.gammas().iter().any(|&g| g > 0.0) && min_re < -1e-12 {
        return Err(Error::NumericalFailure(format!(
            "damped drift matrix has eigenvalue with Re = {min_re:.3e}"
        )));
    }

    Ok(SpectralDecomposition {
        eigenvalues,
        u,
        u_inv,
        min_sum_real: 2.0 * min_re,
        u_condition,
        n: drift.n(),
    })
}

/// Diagonal initial second moments `⟨x_i²(0)⟩`, `⟨p_i²(0)⟩`; cross moments vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialMoments {
    pub x2: Vec<f64>,
    pub p2: Vec<f64>,
}

/// Thermal product state with per-ion mean phonon numbers `t0`.
pub fn thermal_initial(t0: &[f64], coupling: &CouplingMatrix) -> Result<InitialMoments> {
    let w = coupling.local_freqs();
    if t0.len() != w.len() {
        return Err(Error::InvalidArgument(format!(
            "{} initial temperatures for a {}-ion chain",
            t0.len(),
            w.len()
        )));
    }
    if let Some((i, t)) = t0.iter().enumerate().find(|(_, t)| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "initial temperature of ion {} must be nonnegative, got {t}",
            i + 1
        )));
    }
    Ok(InitialMoments {
        x2: t0.iter().zip(w).map(|(t, w)| (t + 0.5) / w).collect(),
        p2: t0.iter().zip(w).map(|(t, w)| (t + 0.5) * w).collect(),
    })
}

/// Diagonal second moments at `time` (`f64::INFINITY` for the steady state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMoments {
    pub x2: Vec<f64>,
    pub p2: Vec<f64>,
    #[serde(with = "finite_or_null")]
    pub time: f64,
}

/// Per-ion mean phonon numbers at `time` (`f64::INFINITY` for the steady state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureProfile {
    pub temps: Vec<f64>,
    #[serde(with = "finite_or_null")]
    pub time: f64,
}

impl TemperatureProfile {
    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }

    /// Temperature of ion `index` (1-based).
    pub fn ion(&self, index: usize) -> f64 {
        self.temps[index - 1]
    }

    pub fn mean(&self) -> f64 {
        self.temps.iter().sum::<f64>() / self.temps.len() as f64
    }

    /// Population standard deviation over ions.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        (self.temps.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / self.temps.len() as f64).sqrt()
    }
}

/// Temperature profiles on an increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSeries {
    pub profiles: Vec<TemperatureProfile>,
}

impl TemperatureSeries {
    pub fn times(&self) -> Vec<f64> {
        self.profiles.iter().map(|p| p.time).collect()
    }

    /// Time trace of ion `index` (1-based).
    pub fn trace(&self, index: usize) -> Vec<f64> {
        self.profiles.iter().map(|p| p.ion(index)).collect()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Profile at the first grid time `≥ t`.
    pub fn at_or_after(&self, t: f64) -> Option<&TemperatureProfile> {
        self.profiles.iter().find(|p| p.time >= t)
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `(1 − e^{−z t}) / z`, stable as `z t → 0`.
fn relaxed_weight(z: c64, t: f64) -> c64 {
    let x = z * t;
    if x.norm() < 1e-3 {
        // Taylor series of (1 − e^{−x})/x up to x⁴; truncation error < 1e-17.
        let series = c64::new(1.0, 0.0)
            - x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x * (1.0 / 120.0))));
        series * t
    } else {
        (c64::new(1.0, 0.0) - (-x).exp()) / z
    }
}

/// Precontracted kernels of the variance formula for one decomposition.
///
/// Building the kernels costs `O((2N)³)`; every later time point costs one
/// `2N×2N` product.
#[derive(Debug, Clone)]
pub struct MomentPropagator<'a> {
    decomp: &'a SpectralDecomposition,
    initial: Option<Mat<c64>>,
    noise: Mat<c64>,
    initial_moments: Option<InitialMoments>,
}

impl<'a> MomentPropagator<'a> {
    pub fn new(
        decomp: &'a SpectralDecomposition,
        initial: Option<&InitialMoments>,
        strengths: &[f64],
    ) -> Result<Self> {
        let n = decomp.n();
        let dim = 2 * n;
        if strengths.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} noise strengths for a {n}-ion chain",
                strengths.len()
            )));
        }
        let v = decomp.u_inv();

        let initial_kernel = match initial {
            Some(m) => {
                if m.x2.len() != n || m.p2.len() != n {
                    return Err(Error::InvalidArgument(
                        "initial moments do not match the chain size".into(),
                    ));
                }
                let c0: Vec<f64> = m.x2.iter().chain(&m.p2).copied().collect();
                let scaled = Mat::<c64>::from_fn(dim, dim, |a, k| v[(a, k)] * c0[k]);
                Some(&scaled * v.transpose())
            }
            None => None,
        };

        let w = v.subcols(n, n);
        let scaled = Mat::<c64>::from_fn(dim, n, |a, i| w[(a, i)] * strengths[i]);
        let noise = &scaled * w.transpose();

        Ok(MomentPropagator {
            decomp,
            initial: initial_kernel,
            noise,
            initial_moments: initial.cloned(),
        })
    }

    fn diagonal_moments(&self, m: &Mat<c64>, time: f64) -> Result<SecondMoments> {
        let n = self.decomp.n();
        let u = self.decomp.u();
        let y = u * m;
        let mut real = Vec::with_capacity(2 * n);
        for mu in 0..2 * n {
            let mut acc = c64::new(0.0, 0.0);
            for b in 0..2 * n {
                acc += y[(mu, b)] * u[(mu, b)];
            }
            let scale = acc.re.abs().max(f64::MIN_POSITIVE);
            if acc.im.abs() > IMAGINARY_TOLERANCE * scale && acc.im.abs() > 1e-300 {
                return Err(Error::NumericalFailure(format!(
                    "variance of state {} has relative imaginary residue {:.3e}",
                    mu + 1,
                    acc.im.abs() / scale
                )));
            }
            real.push(acc.re);
        }
        let p2 = real.split_off(n);
        Ok(SecondMoments {
            x2: real,
            p2,
            time,
        })
    }

    /// Second moments at time `t ≥ 0`.
    pub fn at(&self, t: f64) -> Result<SecondMoments> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("time must be finite and nonnegative, got {t}")));
        }
        let Some(k0) = &self.initial else {
            return Err(Error::InvalidArgument(
                "finite-time moments require initial moments".into(),
            ));
        };
        if t == 0.0 {
            if let Some(m) = &self.initial_moments {
                return Ok(SecondMoments {
                    x2: m.x2.clone(),
                    p2: m.p2.clone(),
                    time: 0.0,
                });
            }
        }
        let lam = self.decomp.eigenvalues();
        let dim = lam.len();
        let m = Mat::<c64>::from_fn(dim, dim, |a, b| {
            let z = lam[a] + lam[b];
            (-z * t).exp() * k0[(a, b)] + relaxed_weight(z, t) * self.noise[(a, b)]
        });
        self.diagonal_moments(&m, t)
    }

    /// The `t → ∞` limit; independent of the initial moments.
    pub fn steady(&self) -> Result<SecondMoments> {
        let lam = self.decomp.eigenvalues();
        let dim = lam.len();
        let mut smallest = f64::INFINITY;
        for a in 0..dim {
            for b in 0..dim {
                if self.noise[(a, b)] != c64::new(0.0, 0.0) {
                    smallest = smallest.min((lam[a] + lam[b]).norm());
                }
            }
        }
        if smallest < MIN_STEADY_SUM || self.decomp.min_sum_real() < MIN_STEADY_SUM {
            return Err(Error::IllConditionedSteadyState {
                min_sum_real: self.decomp.min_sum_real(),
            });
        }
        let m = Mat::<c64>::from_fn(dim, dim, |a, b| self.noise[(a, b)] / (lam[a] + lam[b]));
        self.diagonal_moments(&m, f64::INFINITY)
    }
}

/// Second moments at time `t`.
pub fn variance_at(
    decomp: &SpectralDecomposition,
    initial: &InitialMoments,
    strengths: &[f64],
    t: f64,
) -> Result<SecondMoments> {
    MomentPropagator::new(decomp, Some(initial), strengths)?.at(t)
}

/// Mean phonon numbers `T_i = ½(ω_i⟨x_i²⟩ + ⟨p_i²⟩/ω_i − 1)`.
///
/// Negative values down to `−1e-6` are rounding noise and are clamped to 0.
pub fn temperature_of(moments: &SecondMoments, coupling: &CouplingMatrix) -> Result<TemperatureProfile> {
    let w = coupling.local_freqs();
    if moments.x2.len() != w.len() || moments.p2.len() != w.len() {
        return Err(Error::InvalidArgument(
            "moments do not match the chain size".into(),
        ));
    }
    let mut temps = Vec::with_capacity(w.len());
    for (i, ((x2, p2), w)) in moments.x2.iter().zip(&moments.p2).zip(w).enumerate() {
        let t = 0.5 * (w * x2 + p2 / w - 1.0);
        if t < -NEGATIVE_TEMPERATURE_LIMIT || !t.is_finite() {
            return Err(Error::NegativeTemperature { ion: i + 1, value: t });
        }
        if t < 0.0 {
            if t < -1e-9 {
                log::warn!("clamping temperature {t:.3e} of ion {} to zero", i + 1);
            }
            temps.push(0.0);
        } else {
            temps.push(t);
        }
    }
    Ok(TemperatureProfile {
        temps,
        time: moments.time,
    })
}

/// Steady-state temperatures `T_i^s`.
pub fn steady_state_temperatures(
    decomp: &SpectralDecomposition,
    strengths: &[f64],
    coupling: &CouplingMatrix,
) -> Result<TemperatureProfile> {
    let moments = MomentPropagator::new(decomp, None, strengths)?.steady()?;
    temperature_of(&moments, coupling)
}

/// Temperatures on a nonnegative, strictly increasing time grid.
pub fn evolve_temperatures(
    decomp: &SpectralDecomposition,
    initial: &InitialMoments,
    strengths: &[f64],
    coupling: &CouplingMatrix,
    times: &[f64],
) -> Result<TemperatureSeries> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "time grid must be nonnegative and strictly increasing".into(),
        ));
    }
    let propagator = MomentPropagator::new(decomp, Some(initial), strengths)?;
    let profiles = times
        .iter()
        .map(|&t| propagator.at(t).and_then(|m| temperature_of(&m, coupling)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TemperatureSeries { profiles })
}

/// Log-spaced grid `t = 0, t_min, …, t_max` with `points` positive entries.
pub fn log_time_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend(log_space(t_min, t_max, points));
    grid
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|k| {
                    if k == 0 {
                        lo
                    } else if k == points - 1 {
                        hi
                    } else {
                        (a + (b - a) * k as f64 / (points - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// First grid time of a driven ion after which it stays near its bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonCrossing {
    pub ion_index: usize,
    pub target: f64,
    /// `None` when the threshold is not reached on the grid.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationTimes {
    pub epsilon: f64,
    pub t1: Vec<IonCrossing>,
    /// `None` when global convergence is not reached on the grid.
    pub t2: Option<f64>,
}

/// First grid time after which `ok` holds for every later grid point.
fn settled_from(times: &[f64], ok: impl Fn(usize) -> bool) -> Option<f64> {
    let n = times.len();
    match (0..n).rev().find(|&k| !ok(k)) {
        None => times.first().copied(),
        Some(k) if k + 1 < n => Some(times[k + 1]),
        Some(_) => None,
    }
}

/// Fast (per driven ion) and slow (global) thermalization times.
///
/// `bath_targets` lists `(ion_index, bath temperature)` of the driven ions.
/// Crossings need not be monotone; each time reported is the first grid time
/// after which the condition holds at every later grid point.
/// Settling time of each driven ion relative to its own bath temperature.
///
/// Indices must be valid 1-based ion indices of the series.
pub fn settled_crossings(
    series: &TemperatureSeries,
    bath_targets: &[(usize, f64)],
    epsilon: f64,
) -> Vec<IonCrossing> {
    let times = series.times();
    bath_targets
        .iter()
        .map(|&(ion, target)| IonCrossing {
            ion_index: ion,
            target,
            time: settled_from(&times, |k| (series.profiles[k].ion(ion) - target).abs() < epsilon),
        })
        .collect()
}

pub fn relaxation_times(
    series: &TemperatureSeries,
    steady: &TemperatureProfile,
    bath_targets: &[(usize, f64)],
    epsilon: f64,
) -> Result<RelaxationTimes> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("empty temperature series".into()));
    }
    let n = steady.len();
    if series.profiles.iter().any(|p| p.len() != n) {
        return Err(Error::InvalidArgument("series and steady profile sizes differ".into()));
    }
    if let Some(&(bad, _)) = bath_targets.iter().find(|(i, _)| *i == 0 || *i > n) {
        return Err(Error::InvalidArgument(format!("ion index {bad} out of range [1,{n}]")));
    }
    let times = series.times();
    let t1 = settled_crossings(series, bath_targets, epsilon);
    let t2 = settled_from(&times, |k| {
        series.profiles[k]
            .temps
            .iter()
            .zip(&steady.temps)
            .all(|(t, s)| (t - s).abs() < epsilon)
    });
    Ok(RelaxationTimes { epsilon, t1, t2 })
}
