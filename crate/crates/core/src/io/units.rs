//! Conversion from dimensionless to SI units.
//!
//! Lengths are measured in `d0`, frequencies in `√(k_C e²/(m d0³))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COULOMB_CONSTANT: f64 = 8.987_551_792_3e9;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub mass_amu: f64,
    pub d0_meters: f64,
    pub frequency_unit_rad_per_s: f64,
    pub frequency_unit_hz: f64,
    /// `1 / frequency_unit_rad_per_s`.
    pub time_unit_s: f64,
    /// `k_C e² / d0`, the Coulomb energy at one length unit.
    pub energy_unit_joule: f64,
}

pub fn to_physical_units(mass_amu: f64, d0_meters: f64) -> Result<UnitSystem> {
    if !(mass_amu > 0.0 && mass_amu.is_finite() && d0_meters > 0.0 && d0_meters.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "mass and length scale must be positive, got {mass_amu} amu and {d0_meters} m"
        )));
    }
    let mass = mass_amu * ATOMIC_MASS_UNIT;
    let ke2 = COULOMB_CONSTANT * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
    let w = (ke2 / (mass * d0_meters.powi(3))).sqrt();
    Ok(UnitSystem {
        mass_amu,
        d0_meters,
        frequency_unit_rad_per_s: w,
        frequency_unit_hz: w / std::f64::consts::TAU,
        time_unit_s: 1.0 / w,
        energy_unit_joule: ke2 / d0_meters,
    })
}

impl UnitSystem {
    /// Dimensionless frequency as an ordinary frequency `ω·ω0/2π` in Hz.
    pub fn frequency_hz(&self, omega: f64) -> f64 {
        omega * self.frequency_unit_hz
    }

    /// Dimensionless time in seconds, reading dimensionless frequencies as
    /// angular (`t / ω0`).
    pub fn time_s_angular(&self, t: f64) -> f64 {
        t * self.time_unit_s
    }

    /// Dimensionless time in seconds, reading dimensionless frequencies as
    /// ordinary frequencies (`t / f0`, larger by 2π).
    pub fn time_s_ordinary(&self, t: f64) -> f64 {
        t / self.frequency_unit_hz
    }
}
