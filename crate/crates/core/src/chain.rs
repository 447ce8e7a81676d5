//! Ion-chain geometry and the transverse coupling matrix.
//!
//! Lengths are measured in units of the spacing `d0`, energies in `e²/d0` and
//! frequencies in `√(e²/(m d0³))`. For a harmonic axial trap `d0` is the
//! largest nearest-neighbour gap, which [`calibrate_axial_frequency`] pins to 1.
//!
//! Ions are numbered `1..=N` in every public interface; storage is 0-based.

use faer::prelude::*;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Force tolerance (max-norm) for the axial equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrapKind {
    /// Idealised anharmonic trap with exactly unit spacing.
    Uniform,
    Harmonic,
}

/// Trap parameters of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    pub kind: TrapKind,
    pub n: usize,
    pub omega_x: f64,
    /// Axial frequency of a harmonic trap. `None` selects the value that makes
    /// the largest gap exactly one length unit.
    pub omega_z: Option<f64>,
}

impl TrapSpec {
    pub fn uniform(n: usize, omega_x: f64) -> Self {
        TrapSpec {
            kind: TrapKind::Uniform,
            n,
            omega_x,
            omega_z: None,
        }
    }

    pub fn harmonic(n: usize, omega_x: f64, omega_z: Option<f64>) -> Self {
        TrapSpec {
            kind: TrapKind::Harmonic,
            n,
            omega_x,
            omega_z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("ion count must be at least 1".into()));
        }
        if !(self.omega_x > 0.0 && self.omega_x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "omega_x must be positive, got {}",
                self.omega_x
            )));
        }
        if let Some(wz) = self.omega_z {
            if !(wz > 0.0 && wz.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "omega_z must be positive, got {wz}"
                )));
            }
        }
        Ok(())
    }

    /// Equilibrium chain for this trap.
    pub fn build_chain(&self) -> Result<IonChain> {
        self.validate()?;
        match self.kind {
            TrapKind::Uniform => uniform_positions(self.n),
            TrapKind::Harmonic => {
                if self.n == 1 {
                    return Ok(IonChain::single(TrapKind::Harmonic, self.omega_z));
                }
                let omega_z = match self.omega_z {
                    Some(wz) => wz,
                    None => calibrate_axial_frequency(self.n)?,
                };
                solve_equilibrium(self.n, omega_z)
            }
        }
    }

    /// Equilibrium chain together with its coupling matrix.
    pub fn build(&self) -> Result<(IonChain, CouplingMatrix)> {
        let chain = self.build_chain()?;
        let coupling = build_coupling_matrix(&chain, self.omega_x)?;
        Ok((chain, coupling))
    }
}

/// Axial equilibrium positions of the ions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonChain {
    positions: Vec<f64>,
    max_gap: f64,
    kind: TrapKind,
    omega_z: Option<f64>,
}

impl IonChain {
    fn single(kind: TrapKind, omega_z: Option<f64>) -> Self {
        IonChain {
            positions: vec![0.0],
            max_gap: 0.0,
            kind,
            omega_z,
        }
    }

    fn from_positions(positions: Vec<f64>, kind: TrapKind, omega_z: Option<f64>) -> Self {
        let max_gap = positions
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        IonChain {
            positions,
            max_gap,
            kind,
            omega_z,
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn max_gap(&self) -> f64 {
        self.max_gap
    }

    pub fn kind(&self) -> TrapKind {
        self.kind
    }

    pub fn omega_z(&self) -> Option<f64> {
        self.omega_z
    }
}

/// Transverse coupling matrix `A` and the local frequencies `ω_i = √A_ii`.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    a: Mat<f64>,
    local_freqs: Vec<f64>,
    omega_x: f64,
}

impl CouplingMatrix {
    pub fn matrix(&self) -> &Mat<f64> {
        &self.a
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i, j)]
    }

    pub fn local_freqs(&self) -> &[f64] {
        &self.local_freqs
    }

    pub fn omega_x(&self) -> f64 {
        self.omega_x
    }

    pub fn dim(&self) -> usize {
        self.local_freqs.len()
    }
}

/// Exactly uniform chain `0, 1, …, n−1`.
pub fn uniform_positions(n: usize) -> Result<IonChain> {
    if n == 0 {
        return Err(Error::InvalidArgument("ion count must be at least 1".into()));
    }
    let positions = (0..n).map(|i| i as f64).collect();
    Ok(IonChain::from_positions(positions, TrapKind::Uniform, None))
}

/// Axial potential `Σ ω_z² z_i²/2 + Σ_{i<j} 1/|z_i − z_j|`.
pub fn axial_potential(positions: &[f64], omega_z: f64) -> f64 {
    let w2 = omega_z * omega_z;
    let mut v = 0.0;
    for (i, &zi) in positions.iter().enumerate() {
        v += 0.5 * w2 * zi * zi;
        for &zj in &positions[i + 1..] {
            v += 1.0 / (zi - zj).abs();
        }
    }
    v
}

/// Net axial force `−∂V/∂z_i` on every ion.
pub fn axial_forces(positions: &[f64], omega_z: f64) -> Vec<f64> {
    let w2 = omega_z * omega_z;
    positions
        .iter()
        .enumerate()
        .map(|(i, &zi)| {
            let coulomb: f64 = positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &zj)| {
                    let d = zi - zj;
                    d.signum() / (d * d)
                })
                .sum();
            coulomb - w2 * zi
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn axial_hessian(positions: &[f64], omega_z: f64) -> Mat<f64> {
    let n = positions.len();
    let w2 = omega_z * omega_z;
    let mut h = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let mut diag = w2;
        for j in 0..n {
            if i != j {
                let k = 2.0 / (positions[i] - positions[j]).abs().powi(3);
                h[(i, j)] = -k;
                diag += k;
            }
        }
        h[(i, i)] = diag;
    }
    h
}

fn strictly_increasing(z: &[f64]) -> bool {
    z.windows(2).all(|w| w[1] > w[0])
}

/// Equilibrium of a harmonic axial trap by damped Newton iteration.
///
/// The potential is strictly convex on the ordered region, so Newton steps
/// with backtracking on `V` converge from any ordered starting point. The
/// result is projected onto the antisymmetric subspace `z_i = −z_{N+1−i}`.
pub fn solve_equilibrium(n: usize, omega_z: f64) -> Result<IonChain> {
    if n == 0 {
        return Err(Error::InvalidArgument("ion count must be at least 1".into()));
    }
    if !(omega_z > 0.0 && omega_z.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "omega_z must be positive, got {omega_z}"
        )));
    }
    if n == 1 {
        return Ok(IonChain::single(TrapKind::Harmonic, Some(omega_z)));
    }

    // Uniform start; exact for two ions.
    let spacing = (2.0 / (omega_z * omega_z * (n - 1) as f64)).cbrt();
    let mut z: Vec<f64> = (0..n)
        .map(|i| (i as f64 - 0.5 * (n - 1) as f64) * spacing)
        .collect();

    let mut forces = axial_forces(&z, omega_z);
    let mut residual = max_abs(&forces);
    let mut iterations = 0;
    while residual > EQUILIBRIUM_TOLERANCE {
        if iterations == MAX_NEWTON_ITERATIONS {
            return Err(Error::SolverFailure {
                iterations,
                residual,
            });
        }
        iterations += 1;

        let hessian = axial_hessian(&z, omega_z);
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| forces[i]);
        let step = hessian
            .llt(Side::Lower)
            .map_err(|e| Error::NumericalFailure(format!("axial Hessian not positive definite: {e:?}")))?
            .solve(&rhs);

        let v0 = axial_potential(&z, omega_z);
        let mut alpha = 1.0;
        let candidate = loop {
            let trial: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(i, zi)| zi + alpha * step[(i, 0)])
                .collect();
            if strictly_increasing(&trial) {
                // Near convergence V is flat to rounding; accept any step that
                // reduces the force instead.
                let accept = axial_potential(&trial, omega_z) <= v0
                    || max_abs(&axial_forces(&trial, omega_z)) < residual;
                if accept {
                    break Some(trial);
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break None;
            }
        };
        let Some(next) = candidate else {
            return Err(Error::SolverFailure {
                iterations,
                residual,
            });
        };
        z = next;
        forces = axial_forces(&z, omega_z);
        residual = max_abs(&forces);
    }

    let symmetric: Vec<f64> = (0..n).map(|i| 0.5 * (z[i] - z[n - 1 - i])).collect();
    let symmetric_residual = max_abs(&axial_forces(&symmetric, omega_z));
    if symmetric_residual <= EQUILIBRIUM_TOLERANCE {
        z = symmetric;
    } else {
        log::debug!(
            "antisymmetric projection raised residual to {symmetric_residual:.3e}; keeping raw solution"
        );
    }
    Ok(IonChain::from_positions(z, TrapKind::Harmonic, Some(omega_z)))
}

/// Axial frequency for which the largest gap of an `n`-ion harmonic chain is 1.
///
/// Positions scale exactly as `ω_z^{−2/3}`, so one solve at `ω_z = 1` with
/// largest gap `g` gives `ω_z = g^{3/2}`.
pub fn calibrate_axial_frequency(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "axial calibration needs at least two ions".into(),
        ));
    }
    let reference = solve_equilibrium(n, 1.0)?;
    Ok(reference.max_gap().powf(1.5))
}

/// Transverse coupling matrix for a chain in a trap of frequency `omega_x`.
pub fn build_coupling_matrix(chain: &IonChain, omega_x: f64) -> Result<CouplingMatrix> {
    if !(omega_x > 0.0 && omega_x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "omega_x must be positive, got {omega_x}"
        )));
    }
    let z = chain.positions();
    let n = z.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    let mut a = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let k = 1.0 / (z[j] - z[i]).abs().powi(3);
            a[(i, j)] = k;
            a[(j, i)] = k;
        }
    }
    let w2 = omega_x * omega_x;
    let mut local_freqs = Vec::with_capacity(n);
    for i in 0..n {
        let coulomb: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        let diag = w2 - coulomb;
        if diag <= 0.0 {
            return Err(Error::TrapTooWeak {
                ion: i + 1,
                diagonal: diag,
            });
        }
        a[(i, i)] = diag;
        local_freqs.push(diag.sqrt());
    }

    let eigenvalues = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("symmetric eigensolver failed: {e:?}")))?;
    let min_eigenvalue = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eigenvalue <= 0.0 {
        return Err(Error::UnstableChain { min_eigenvalue });
    }

    Ok(CouplingMatrix {
        a,
        local_freqs,
        omega_x,
    })
}
