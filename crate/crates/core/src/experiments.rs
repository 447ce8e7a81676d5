//! Scenario builders, parameter sweeps and profile diagnostics.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{assemble_profile, noise_strengths, Background, BathAttachment, BathProfile};
use crate::chain::{CouplingMatrix, IonChain, TrapSpec};
use crate::error::{Error, Result};
use crate::spectral::{
    build_drift_matrix, decompose, evolve_temperatures, log_space, log_time_grid, relaxation_times,
    settled_crossings, steady_state_temperatures, thermal_initial, RelaxationTimes,
    TemperatureProfile, TemperatureSeries,
};

/// Transverse trap frequency used by all presets.
pub const PRESET_OMEGA_X: f64 = 10.0;
pub const COLD_BATH: f64 = 2.0;
pub const HOT_BATH: f64 = 10.0;
pub const BACKGROUND_BATH: f64 = 4.0;
pub const PRESET_GAMMA: f64 = 0.1;
pub const PRESET_INITIAL_TEMPERATURE: f64 = 5.0;
/// Convergence threshold (phonons) for relaxation times.
pub const RELAXATION_EPSILON: f64 = 0.05;

/// Parameters that a sweep axis may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Common rate of every explicit attachment.
    Gamma,
    /// Rate of the first attachment.
    Gamma1,
    /// Rate of the second attachment.
    Gamma2,
    GammaBg,
    /// 1-based ion carrying the second attachment.
    HotIonIndex,
    Time,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Gamma => "gamma",
            SweepParameter::Gamma1 => "gamma1",
            SweepParameter::Gamma2 => "gamma2",
            SweepParameter::GammaBg => "gamma_bg",
            SweepParameter::HotIonIndex => "hot_ion_index",
            SweepParameter::Time => "time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn new(parameter: SweepParameter, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "{} grid must be nonempty and strictly increasing",
                parameter.name()
            )));
        }
        Ok(SweepAxis { parameter, values })
    }
}

/// Default rate grid: 40 log-spaced points in `[1e-3, 1e2]`.
pub fn default_gamma_grid() -> Vec<f64> {
    log_space(1e-3, 1e2, 40)
}

/// Default map grid: 30 log-spaced points in `[1e-3, 1e2]` per axis.
pub fn default_map_grid() -> Vec<f64> {
    log_space(1e-3, 1e2, 30)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub chain: TrapSpec,
    pub attachments: Vec<BathAttachment>,
    pub background: Option<Background>,
    pub initial_temp: f64,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

impl ScenarioConfig {
    /// Cold bath on ion 1 and hot bath on `hot_ion`, both at rate `gamma`.
    pub fn two_bath(chain: TrapSpec, hot_ion: usize, gamma: f64) -> Self {
        ScenarioConfig {
            chain,
            attachments: vec![
                BathAttachment::new(1, gamma, COLD_BATH),
                BathAttachment::new(hot_ion, gamma, HOT_BATH),
            ],
            background: None,
            initial_temp: PRESET_INITIAL_TEMPERATURE,
            sweep: Vec::new(),
        }
    }

    /// Uniform chain with edge baths at 2 and 10 phonons.
    pub fn edge_driven(n: usize, gamma: f64) -> Self {
        Self::two_bath(TrapSpec::uniform(n, PRESET_OMEGA_X), n, gamma)
    }

    pub fn with_background(mut self, gamma: f64, temperature: f64) -> Self {
        self.background = Some(Background { gamma, temperature });
        self
    }

    pub fn profile(&self) -> Result<BathProfile> {
        assemble_profile(self.chain.n, &self.attachments, self.background)
    }

    /// Copy with one sweep parameter set to `value`.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        let need = |k: usize| {
            if cfg.attachments.len() <= k {
                Err(Error::InvalidArgument(format!(
                    "sweeping {} needs at least {} bath attachments",
                    parameter.name(),
                    k + 1
                )))
            } else {
                Ok(())
            }
        };
        match parameter {
            SweepParameter::Gamma => {
                need(0)?;
                for att in &mut cfg.attachments {
                    att.gamma = value;
                }
            }
            SweepParameter::Gamma1 => {
                need(0)?;
                cfg.attachments[0].gamma = value;
            }
            SweepParameter::Gamma2 => {
                need(1)?;
                cfg.attachments[1].gamma = value;
            }
            SweepParameter::GammaBg => match &mut cfg.background {
                Some(bg) => bg.gamma = value,
                None => {
                    return Err(Error::InvalidArgument(
                        "sweeping gamma_bg needs a background bath".into(),
                    ))
                }
            },
            SweepParameter::HotIonIndex => {
                need(1)?;
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "hot_ion_index must be a positive integer, got {value}"
                    )));
                }
                cfg.attachments[1].ion_index = value as usize;
            }
            SweepParameter::Time => {
                return Err(Error::InvalidArgument(
                    "time is not a steady-state sweep parameter".into(),
                ))
            }
        }
        Ok(cfg)
    }

    pub fn build(&self) -> Result<(IonChain, CouplingMatrix)> {
        self.chain.build()
    }
}

/// Steady profile of `config` on an already built coupling matrix.
pub fn steady_profile(config: &ScenarioConfig, coupling: &CouplingMatrix) -> Result<TemperatureProfile> {
    let profile = config.profile()?;
    let drift = build_drift_matrix(coupling, &profile)?;
    let decomp = decompose(&drift)?;
    let strengths = noise_strengths(&profile, coupling)?;
    steady_state_temperatures(&decomp, &strengths, coupling)
}

/// Steady profile of `config`, building the chain first.
pub fn run_steady(config: &ScenarioConfig) -> Result<(IonChain, CouplingMatrix, TemperatureProfile)> {
    let (chain, coupling) = config.build()?;
    let profile = steady_profile(config, &coupling)?;
    Ok((chain, coupling, profile))
}

/// Temperature series of `config` on `times`.
pub fn run_evolution(
    config: &ScenarioConfig,
    coupling: &CouplingMatrix,
    times: &[f64],
) -> Result<TemperatureSeries> {
    let profile = config.profile()?;
    let drift = build_drift_matrix(coupling, &profile)?;
    let decomp = decompose(&drift)?;
    let strengths = noise_strengths(&profile, coupling)?;
    let initial = thermal_initial(&vec![config.initial_temp; coupling.dim()], coupling)?;
    evolve_temperatures(&decomp, &initial, &strengths, coupling, times)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "values")]
pub enum SweepPayload {
    /// One profile per grid point, row-major over the axes.
    Profiles(Vec<TemperatureProfile>),
    /// One middle-ion temperature per grid point, row-major over the axes.
    Scalars(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<SweepAxis>,
    pub payload: SweepPayload,
    pub scenario: ScenarioConfig,
}

impl SweepResult {
    pub fn profiles(&self) -> Option<&[TemperatureProfile]> {
        match &self.payload {
            SweepPayload::Profiles(p) => Some(p),
            SweepPayload::Scalars(_) => None,
        }
    }

    pub fn scalars(&self) -> Option<&[f64]> {
        match &self.payload {
            SweepPayload::Scalars(s) => Some(s),
            SweepPayload::Profiles(_) => None,
        }
    }
}

/// 1-based index of the middle ion, `⌈N/2⌉`.
pub fn middle_ion(n: usize) -> usize {
    n.div_ceil(2)
}

fn require_two_attachments(base: &ScenarioConfig) -> Result<()> {
    if base.attachments.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "scenario needs exactly two bath attachments, got {}",
            base.attachments.len()
        )));
    }
    Ok(())
}

/// Steady profiles along one sweep axis.
pub fn run_sweep(base: &ScenarioConfig, axis: SweepAxis) -> Result<SweepResult> {
    let (_, coupling) = base.build()?;
    let profiles = axis
        .values
        .par_iter()
        .map(|&v| steady_profile(&base.with_parameter(axis.parameter, v)?, &coupling))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axes: vec![axis],
        payload: SweepPayload::Profiles(profiles),
        scenario: base.clone(),
    })
}

/// Steady profiles with both attachments sharing each rate in `gammas`.
pub fn run_gamma_sweep(base: &ScenarioConfig, gammas: &[f64]) -> Result<SweepResult> {
    require_two_attachments(base)?;
    run_sweep(base, SweepAxis::new(SweepParameter::Gamma, gammas.to_vec())?)
}

/// Middle-ion steady temperature over a `γ1 × γ2` grid (γ1 outer).
pub fn run_gamma_map(base: &ScenarioConfig, gamma1: &[f64], gamma2: &[f64]) -> Result<SweepResult> {
    require_two_attachments(base)?;
    let axis1 = SweepAxis::new(SweepParameter::Gamma1, gamma1.to_vec())?;
    let axis2 = SweepAxis::new(SweepParameter::Gamma2, gamma2.to_vec())?;
    let (_, coupling) = base.build()?;
    let mid = middle_ion(coupling.dim());
    let points: Vec<(f64, f64)> = gamma1
        .iter()
        .flat_map(|&g1| gamma2.iter().map(move |&g2| (g1, g2)))
        .collect();
    let scalars = points
        .par_iter()
        .map(|&(g1, g2)| {
            let cfg = base
                .with_parameter(SweepParameter::Gamma1, g1)?
                .with_parameter(SweepParameter::Gamma2, g2)?;
            Ok(steady_profile(&cfg, &coupling)?.ion(mid))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axes: vec![axis1, axis2],
        payload: SweepPayload::Scalars(scalars),
        scenario: base.clone(),
    })
}

/// Steady profiles over background coupling rates.
pub fn run_background_sweep(base: &ScenarioConfig, gamma_bg: &[f64]) -> Result<SweepResult> {
    if base.background.is_none() {
        return Err(Error::InvalidArgument("background sweep needs a background bath".into()));
    }
    run_sweep(base, SweepAxis::new(SweepParameter::GammaBg, gamma_bg.to_vec())?)
}

/// Relaxation presets for a 20-ion chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsPreset {
    Uniform,
    Harmonic,
    HarmonicBg,
}

impl DynamicsPreset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "uniform" => Some(DynamicsPreset::Uniform),
            "harmonic" => Some(DynamicsPreset::Harmonic),
            "harmonic-bg" | "harmonic_bg" => Some(DynamicsPreset::HarmonicBg),
            _ => None,
        }
    }

    /// Edge baths (2, 10) at γ = 0.1, initial temperature 5; the background
    /// variant adds `γ_bg = 1e-3·γ` at temperature 4.
    pub fn config(self, n: usize) -> ScenarioConfig {
        let trap = match self {
            DynamicsPreset::Uniform => TrapSpec::uniform(n, PRESET_OMEGA_X),
            DynamicsPreset::Harmonic | DynamicsPreset::HarmonicBg => {
                TrapSpec::harmonic(n, PRESET_OMEGA_X, None)
            }
        };
        let cfg = ScenarioConfig::two_bath(trap, n, PRESET_GAMMA);
        match self {
            DynamicsPreset::HarmonicBg => cfg.with_background(1e-3 * PRESET_GAMMA, BACKGROUND_BATH),
            _ => cfg,
        }
    }

    /// Horizon in units of `1/γ`. The slowest band-edge modes of a 20-ion
    /// chain decay at rates near `1e-4·γ`, so global convergence needs
    /// `t ≳ 1e4/γ` even with the background bath.
    pub fn horizon(self) -> f64 {
        match self {
            DynamicsPreset::Uniform | DynamicsPreset::HarmonicBg => 1e5,
            DynamicsPreset::Harmonic => 1e9,
        }
    }

    /// Positive log-spaced grid points (plus `t = 0`), 100 per decade.
    pub fn grid_points(self) -> usize {
        match self {
            DynamicsPreset::Uniform | DynamicsPreset::HarmonicBg => 701,
            DynamicsPreset::Harmonic => 1101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsResult {
    pub preset: DynamicsPreset,
    pub scenario: ScenarioConfig,
    pub gamma: f64,
    pub series: TemperatureSeries,
    pub steady: Option<TemperatureProfile>,
    pub relaxation: RelaxationTimes,
    /// `min Re(λα + λβ)` of the drift spectrum.
    pub min_sum_real: f64,
    /// Set when the steady state could not be evaluated.
    pub diagnostic: Option<String>,
}

impl DynamicsResult {
    /// Largest change of ion `index` over the final decade of the grid.
    pub fn final_decade_drift(&self, index: usize) -> f64 {
        let times = self.series.times();
        let t_end = *times.last().expect("nonempty series");
        let trace = self.series.trace(index);
        let end = *trace.last().expect("nonempty series");
        times
            .iter()
            .zip(&trace)
            .filter(|(t, _)| **t >= 0.1 * t_end)
            .map(|(_, v)| (v - end).abs())
            .fold(0.0, f64::max)
    }
}

/// Temperature relaxation of an `n`-ion chain under one of the presets.
pub fn run_dynamics_scenario(preset: DynamicsPreset, n: usize) -> Result<DynamicsResult> {
    if n < 2 {
        return Err(Error::InvalidArgument("dynamics presets need at least two ions".into()));
    }
    let scenario = preset.config(n);
    let (_, coupling) = scenario.build()?;
    let profile = scenario.profile()?;
    let drift = build_drift_matrix(&coupling, &profile)?;
    let decomp = decompose(&drift)?;
    let strengths = noise_strengths(&profile, &coupling)?;
    let initial = thermal_initial(&vec![scenario.initial_temp; n], &coupling)?;

    let t_max = preset.horizon() / PRESET_GAMMA;
    let times = log_time_grid(0.01 / PRESET_GAMMA, t_max, preset.grid_points());
    let series = evolve_temperatures(&decomp, &initial, &strengths, &coupling, &times)?;

    let targets: Vec<(usize, f64)> = scenario
        .attachments
        .iter()
        .map(|a| (a.ion_index, a.temperature))
        .collect();
    let (steady, relaxation, diagnostic) =
        match steady_state_temperatures(&decomp, &strengths, &coupling) {
            Ok(steady) => {
                let r = relaxation_times(&series, &steady, &targets, RELAXATION_EPSILON)?;
                (Some(steady), r, None)
            }
            Err(e @ Error::IllConditionedSteadyState { .. }) => {
                let r = RelaxationTimes {
                    epsilon: RELAXATION_EPSILON,
                    t1: settled_crossings(&series, &targets, RELAXATION_EPSILON),
                    t2: None,
                };
                (None, r, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };

    Ok(DynamicsResult {
        preset,
        scenario,
        gamma: PRESET_GAMMA,
        series,
        steady,
        relaxation,
        min_sum_real: decomp.min_sum_real(),
        diagnostic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `T_i` against the 1-based index `i` over `range`.
///
/// A profile without variance has `r_squared = 1` by convention.
pub fn linear_fit(profile: &TemperatureProfile, range: RangeInclusive<usize>) -> Result<LinearFit> {
    let (lo, hi) = (*range.start(), *range.end());
    if lo < 1 || hi > profile.len() || hi < lo + 2 {
        return Err(Error::InvalidArgument(format!(
            "fit range {lo}..={hi} must lie in [1, {}] and hold at least 3 ions",
            profile.len()
        )));
    }
    let xs: Vec<f64> = (lo..=hi).map(|i| i as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|i| profile.ion(i)).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// `max_i |T_i − T_{N+1−i}|`.
pub fn mirror_symmetry_score(profile: &TemperatureProfile) -> f64 {
    let t = &profile.temps;
    let n = t.len();
    (0..n / 2).map(|i| (t[i] - t[n - 1 - i]).abs()).fold(0.0, f64::max)
}
