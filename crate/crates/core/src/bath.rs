//! Per-ion thermal baths.
//!
//! Bath temperatures are mean phonon numbers throughout.

use serde::{Deserialize, Serialize};

use crate::chain::CouplingMatrix;
use crate::error::{Error, Result};

/// One bath attached to one ion (`ion_index` is 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathAttachment {
    pub ion_index: usize,
    pub gamma: f64,
    pub temperature: f64,
}

impl BathAttachment {
    pub fn new(ion_index: usize, gamma: f64, temperature: f64) -> Self {
        BathAttachment {
            ion_index,
            gamma,
            temperature,
        }
    }
}

/// Background bath applied to every ion without an explicit attachment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub gamma: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathProfile {
    gammas: Vec<f64>,
    temperatures: Vec<f64>,
}

impl BathProfile {
    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn max_gamma(&self) -> f64 {
        self.gammas.iter().copied().fold(0.0, f64::max)
    }

    /// Temperature range over ions with nonzero coupling.
    pub fn driven_temperature_range(&self) -> (f64, f64) {
        self.gammas
            .iter()
            .zip(&self.temperatures)
            .filter(|(g, _)| **g > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &t)| {
                (lo.min(t), hi.max(t))
            })
    }
}

fn check_rate(what: &str, gamma: f64, temperature: f64, errors: &mut Vec<String>) {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        errors.push(format!("{what}: gamma must be a nonnegative number, got {gamma}"));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        errors.push(format!(
            "{what}: temperature must be a nonnegative number, got {temperature}"
        ));
    }
}

/// Build the per-ion bath profile of an `n`-ion chain.
///
/// Explicit attachments override the background; ions with neither get
/// `(γ, T) = (0, 0)`. All violations are reported together.
pub fn assemble_profile(
    n: usize,
    attachments: &[BathAttachment],
    background: Option<Background>,
) -> Result<BathProfile> {
    if n == 0 {
        return Err(Error::InvalidArgument("ion count must be at least 1".into()));
    }
    let mut errors = Vec::new();
    let (bg_gamma, bg_temp) = match background {
        Some(bg) => {
            check_rate("background", bg.gamma, bg.temperature, &mut errors);
            (bg.gamma, bg.temperature)
        }
        None => (0.0, 0.0),
    };
    let mut gammas = vec![bg_gamma; n];
    let mut temperatures = vec![bg_temp; n];
    let mut seen = vec![false; n];
    for att in attachments {
        let what = format!("bath on ion {}", att.ion_index);
        if att.ion_index == 0 || att.ion_index > n {
            errors.push(format!("{what}: ion out of range [1,{n}]"));
            continue;
        }
        check_rate(&what, att.gamma, att.temperature, &mut errors);
        let k = att.ion_index - 1;
        if seen[k] {
            errors.push(format!("{what}: duplicate attachment"));
            continue;
        }
        seen[k] = true;
        gammas[k] = att.gamma;
        temperatures[k] = att.temperature;
    }
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    if gammas.iter().all(|&g| g == 0.0) {
        return Err(Error::NoDamping);
    }
    // Undriven ions carry no bath temperature.
    for (g, t) in gammas.iter().zip(temperatures.iter_mut()) {
        if *g == 0.0 {
            *t = 0.0;
        }
    }
    Ok(BathProfile {
        gammas,
        temperatures,
    })
}

/// Momentum-noise strengths `D_i = 2 γ_i ω_i (T_i + ½)`.
pub fn noise_strengths(profile: &BathProfile, coupling: &CouplingMatrix) -> Result<Vec<f64>> {
    if profile.len() != coupling.dim() {
        return Err(Error::InvalidArgument(format!(
            "bath profile has {} ions but the chain has {}",
            profile.len(),
            coupling.dim()
        )));
    }
    Ok(profile
        .gammas
        .iter()
        .zip(&profile.temperatures)
        .zip(coupling.local_freqs())
        .map(|((&g, &t), &w)| if g == 0.0 { 0.0 } else { 2.0 * g * w * (t + 0.5) })
        .collect())
}
