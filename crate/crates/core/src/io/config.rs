//! JSON run configuration.

use serde::{Deserialize, Serialize};

use crate::bath::{assemble_profile, Background, BathAttachment};
use crate::chain::{TrapKind, TrapSpec};
use crate::error::{Error, Result};
use crate::experiments::{ScenarioConfig, SweepAxis, SweepParameter};
use crate::spectral::{log_space, log_time_grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrapDoc {
    kind: TrapKind,
    omega_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BathDoc {
    ion: usize,
    gamma: f64,
    temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackgroundDoc {
    gamma: f64,
    temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimesDoc {
    t_max: f64,
    points: usize,
    #[serde(default)]
    spacing: Spacing,
    /// First positive time of a log grid; start of a linear grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_min: Option<f64>,
}

/// Either explicit values or a generated grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisDoc {
    parameter: SweepParameter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spacing: Option<Spacing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    axes: Vec<AxisDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(default)]
    format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    n: usize,
    trap: TrapDoc,
    baths: Vec<BathDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background: Option<BackgroundDoc>,
    #[serde(default)]
    initial_temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    times: Option<TimesDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputDoc>,
}

/// Validated time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl TimeGrid {
    /// Default log grid: `t = 0` plus 200 points on `[1e-5·t_max, t_max]`.
    pub fn log(t_max: f64) -> Self {
        TimeGrid {
            t_min: 1e-5 * t_max,
            t_max,
            points: 200,
            spacing: Spacing::Log,
        }
    }

    /// Grid times. A log grid is prefixed with `t = 0`.
    pub fn times(&self) -> Vec<f64> {
        match self.spacing {
            Spacing::Log => log_time_grid(self.t_min, self.t_max, self.points),
            Spacing::Linear => linear_space(self.t_min, self.t_max, self.points),
        }
    }
}

fn linear_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => (0..points)
            .map(|k| {
                if k == points - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: Option<String>,
    pub format: OutputFormat,
}

/// A fully validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub times: Option<TimeGrid>,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_scenario(scenario: ScenarioConfig) -> Self {
        RunConfig {
            scenario,
            times: None,
            output: OutputSpec::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.scenario.chain.n
    }

    pub fn axis(&self, parameter: SweepParameter) -> Option<&SweepAxis> {
        self.scenario.sweep.iter().find(|a| a.parameter == parameter)
    }

    /// Config document in the file schema, with sweep axes as explicit
    /// value lists. Parsing the result yields an equal `RunConfig`.
    pub fn to_json(&self) -> Result<String> {
        let s = &self.scenario;
        let doc = ConfigDoc {
            n: s.chain.n,
            trap: TrapDoc {
                kind: s.chain.kind,
                omega_x: s.chain.omega_x,
                omega_z: s.chain.omega_z,
            },
            baths: s
                .attachments
                .iter()
                .map(|a| BathDoc {
                    ion: a.ion_index,
                    gamma: a.gamma,
                    temperature: a.temperature,
                })
                .collect(),
            background: s.background.map(|b| BackgroundDoc {
                gamma: b.gamma,
                temperature: b.temperature,
            }),
            initial_temperature: s.initial_temp,
            times: self.times.map(|t| TimesDoc {
                t_max: t.t_max,
                points: t.points,
                spacing: t.spacing,
                t_min: Some(t.t_min),
            }),
            sweep: (!s.sweep.is_empty()).then(|| SweepDoc {
                axes: s
                    .sweep
                    .iter()
                    .map(|a| AxisDoc {
                        parameter: a.parameter,
                        values: Some(a.values.clone()),
                        min: None,
                        max: None,
                        points: None,
                        spacing: None,
                    })
                    .collect(),
            }),
            output: Some(OutputDoc {
                path: self.output.path.clone(),
                format: self.output.format,
            }),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn validate_times(doc: &TimesDoc, errors: &mut Vec<String>) -> Option<TimeGrid> {
    let before = errors.len();
    if !positive(doc.t_max) {
        errors.push(format!("times.t_max must be positive, got {}", doc.t_max));
    }
    if doc.points < 2 {
        errors.push(format!("times.points must be at least 2, got {}", doc.points));
    }
    let t_min = match (doc.spacing, doc.t_min) {
        (Spacing::Log, Some(t)) if !positive(t) => {
            errors.push(format!("times.t_min must be positive on a log grid, got {t}"));
            t
        }
        (Spacing::Linear, Some(t)) if !(t >= 0.0 && t.is_finite()) => {
            errors.push(format!("times.t_min must be nonnegative, got {t}"));
            t
        }
        (_, Some(t)) => t,
        (Spacing::Log, None) => 1e-5 * doc.t_max,
        (Spacing::Linear, None) => 0.0,
    };
    if errors.len() == before && t_min >= doc.t_max {
        errors.push(format!("times.t_min ({t_min}) must be below times.t_max ({})", doc.t_max));
    }
    (errors.len() == before).then_some(TimeGrid {
        t_min,
        t_max: doc.t_max,
        points: doc.points,
        spacing: doc.spacing,
    })
}

fn validate_axis(k: usize, doc: &AxisDoc, errors: &mut Vec<String>) -> Option<SweepAxis> {
    let what = format!("sweep axis {} ({})", k + 1, doc.parameter.name());
    if doc.parameter == SweepParameter::Time {
        errors.push(format!("{what}: time grids belong in `times`"));
        return None;
    }
    let grid = (doc.min, doc.max, doc.points);
    let values = match (&doc.values, grid) {
        (Some(v), (None, None, None)) if doc.spacing.is_none() => v.clone(),
        (None, (Some(lo), Some(hi), Some(points))) => {
            let spacing = doc.spacing.unwrap_or_default();
            if points < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                errors.push(format!("{what}: need min < max and at least 2 points"));
                return None;
            }
            if spacing == Spacing::Log && lo <= 0.0 {
                errors.push(format!("{what}: log grids need min > 0"));
                return None;
            }
            match spacing {
                Spacing::Log => log_space(lo, hi, points),
                Spacing::Linear => linear_space(lo, hi, points),
            }
        }
        _ => {
            errors.push(format!(
                "{what}: give either `values` or all of `min`, `max`, `points`"
            ));
            return None;
        }
    };
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        errors.push(format!("{what}: values must be nonnegative numbers"));
        return None;
    }
    match SweepAxis::new(doc.parameter, values) {
        Ok(axis) => Some(axis),
        Err(e) => {
            errors.push(format!("{what}: {e}"));
            None
        }
    }
}

fn validate(doc: ConfigDoc) -> Result<RunConfig> {
    let mut errors = Vec::new();
    let n = doc.n;
    if n == 0 {
        errors.push("n must be at least 1".to_string());
    }
    let chain = TrapSpec {
        kind: doc.trap.kind,
        n,
        omega_x: doc.trap.omega_x,
        omega_z: doc.trap.omega_z,
    };
    if !positive(chain.omega_x) {
        errors.push(format!("trap.omega_x must be positive, got {}", chain.omega_x));
    }
    match (chain.kind, chain.omega_z) {
        (TrapKind::Uniform, Some(_)) => {
            errors.push("trap.omega_z only applies to harmonic traps".to_string())
        }
        (TrapKind::Harmonic, Some(wz)) if !positive(wz) => {
            errors.push(format!("trap.omega_z must be positive, got {wz}"))
        }
        _ => {}
    }

    let attachments: Vec<BathAttachment> = doc
        .baths
        .iter()
        .map(|b| BathAttachment::new(b.ion, b.gamma, b.temperature))
        .collect();
    let background = doc.background.map(|b| Background {
        gamma: b.gamma,
        temperature: b.temperature,
    });
    if n > 0 {
        match assemble_profile(n, &attachments, background) {
            Ok(_) => {}
            Err(Error::InvalidConfig(errs)) => errors.extend(errs),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if !(doc.initial_temperature >= 0.0 && doc.initial_temperature.is_finite()) {
        errors.push(format!(
            "initial_temperature must be nonnegative, got {}",
            doc.initial_temperature
        ));
    }
    let times = doc.times.as_ref().and_then(|t| validate_times(t, &mut errors));

    let mut sweep = Vec::new();
    if let Some(s) = &doc.sweep {
        for (k, axis) in s.axes.iter().enumerate() {
            if s.axes[..k].iter().any(|a| a.parameter == axis.parameter) {
                errors.push(format!("sweep axis {}: duplicate parameter {}", k + 1, axis.parameter.name()));
                continue;
            }
            if let Some(a) = validate_axis(k, axis, &mut errors) {
                if a.parameter == SweepParameter::HotIonIndex
                    && a.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0 || *v > n as f64)
                {
                    errors.push(format!("sweep axis {}: hot_ion_index values must be integers in [1,{n}]", k + 1));
                }
                sweep.push(a);
            }
        }
    }

    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    let output = doc
        .output
        .map(|o| OutputSpec {
            path: o.path,
            format: o.format,
        })
        .unwrap_or_default();
    Ok(RunConfig {
        scenario: ScenarioConfig {
            chain,
            attachments,
            background,
            initial_temp: doc.initial_temperature,
            sweep,
        },
        times,
        output,
    })
}

/// Parse and validate a JSON configuration document.
///
/// Syntax and schema errors carry the line and column of the offending token;
/// semantic violations are collected and returned together.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc: ConfigDoc = serde_json::from_str(text).map_err(|e| Error::ConfigSyntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(doc)
}

/// Read and parse a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
