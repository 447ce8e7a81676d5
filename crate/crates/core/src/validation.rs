//! Cross-validation of the spectral solution against the independent oracles
//! on seeded random chains, plus exact properties of the steady state.

use faer::linalg::solvers::DenseSolveCore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bath::{noise_strengths, BathAttachment};
use crate::chain::{TrapKind, TrapSpec};
use crate::error::{Error, Result};
use crate::experiments::{mirror_symmetry_score, run_steady, ScenarioConfig, PRESET_OMEGA_X};
use crate::oracle::{covariance_ode_at, lyapunov_steady_covariance, monte_carlo_temperatures, CovarianceMatrix};
use crate::spectral::{
    build_drift_matrix, decompose, steady_state_temperatures, thermal_initial, MomentPropagator,
};

/// Instances whose slowest covariance mode decays slower than this are
/// redrawn: their steady state cannot be reached by the ODE oracle.
pub const MIN_RESOLVABLE_RATE: f64 = 2e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub seed: u64,
    pub instances: usize,
    pub max_ions: usize,
    /// Pairwise tolerance between the three steady-state routes.
    pub tolerance: f64,
    pub ode_horizon: f64,
    pub ode_dt_max: f64,
    pub n_traj: usize,
    pub mc_dt: f64,
    pub mc_times: Vec<f64>,
    /// Allowed deviation in standard errors.
    pub mc_sigmas: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            seed: 42,
            instances: 20,
            max_ions: 8,
            tolerance: 1e-6,
            ode_horizon: 1e7,
            ode_dt_max: 0.01,
            n_traj: 2000,
            mc_dt: 0.002,
            mc_times: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            mc_sigmas: 3.0,
        }
    }
}

/// Outcome of one random instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub index: usize,
    pub scenario: ScenarioConfig,
    pub min_sum_real: f64,
    pub spectral_vs_lyapunov: f64,
    pub spectral_vs_ode: f64,
    pub lyapunov_vs_ode: f64,
    /// Largest `|MC − exact| / SE` of the chain-mean temperature over the
    /// sampled times.
    pub mc_chain_z: f64,
    /// Same for individual ions (diagnostic only).
    pub mc_ion_z: f64,
    pub passed: bool,
}

impl InstanceReport {
    pub fn max_pairwise(&self) -> f64 {
        self.spectral_vs_lyapunov
            .max(self.spectral_vs_ode)
            .max(self.lyapunov_vs_ode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PropertyCheck {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        PropertyCheck {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub options: ValidationOptions,
    pub instances: Vec<InstanceReport>,
    /// Draws rejected for an unresolvably slow mode.
    pub redrawn: usize,
    pub properties: Vec<PropertyCheck>,
    pub max_pairwise: f64,
    pub max_mc_chain_z: f64,
    pub max_mc_ion_z: f64,
    pub passed: bool,
}

impl ValidationReport {
    /// Plain-text summary, one line per instance and property.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "oracle suite: seed {} | {} instances ({} redrawn) | tolerance {:.1e} | MC {} trajectories, dt {}\n",
            self.options.seed,
            self.instances.len(),
            self.redrawn,
            self.options.tolerance,
            self.options.n_traj,
            self.options.mc_dt
        );
        for r in &self.instances {
            s.push_str(&format!(
                "  #{:02} n={} {:<8} spec-lyap {:.3e}  spec-ode {:.3e}  lyap-ode {:.3e}  mc chain z {:.2}  mc ion z {:.2}  {}\n",
                r.index,
                r.scenario.chain.n,
                format!("{:?}", r.scenario.chain.kind).to_lowercase(),
                r.spectral_vs_lyapunov,
                r.spectral_vs_ode,
                r.lyapunov_vs_ode,
                r.mc_chain_z,
                r.mc_ion_z,
                if r.passed { "ok" } else { "FAIL" }
            ));
        }
        for p in &self.properties {
            s.push_str(&format!(
                "  {:<40} {:.3e} (tol {:.1e})  {}\n",
                p.name,
                p.value,
                p.tolerance,
                if p.passed { "ok" } else { "FAIL" }
            ));
        }
        s.push_str(&format!(
            "max pairwise deviation {:.3e}; max MC chain z {:.2}; max MC ion z {:.2}; {}\n",
            self.max_pairwise,
            self.max_mc_chain_z,
            self.max_mc_ion_z,
            if self.passed { "PASSED" } else { "FAILED" }
        ));
        s
    }
}

fn draw_instance(rng: &mut ChaCha8Rng, max_ions: usize) -> ScenarioConfig {
    let n = rng.random_range(1..=max_ions);
    let kind = if rng.random_bool(0.5) {
        TrapKind::Uniform
    } else {
        TrapKind::Harmonic
    };
    let mut attachments: Vec<BathAttachment> = (1..=n)
        .map(|i| {
            let gamma = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) };
            BathAttachment::new(i, gamma, rng.random_range(0.0..10.0))
        })
        .collect();
    if attachments.iter().all(|a| a.gamma == 0.0) {
        let k = rng.random_range(0..n);
        attachments[k].gamma = rng.random_range(0.05..1.0);
    }
    let initial_temp = rng.random_range(0.0..10.0);
    ScenarioConfig {
        chain: TrapSpec {
            kind,
            n,
            omega_x: PRESET_OMEGA_X,
            omega_z: None,
        },
        attachments,
        background: None,
        initial_temp,
        sweep: Vec::new(),
    }
}

/// Seeded random instances whose slowest mode is resolvable, with the number
/// of redrawn candidates.
pub fn random_instances(seed: u64, count: usize, max_ions: usize) -> Result<(Vec<ScenarioConfig>, usize)> {
    if max_ions == 0 || max_ions > crate::oracle::MAX_LYAPUNOV_IONS {
        return Err(Error::InvalidArgument(format!("max_ions must lie in [1, {}]", crate::oracle::MAX_LYAPUNOV_IONS)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut redrawn = 0;
    while out.len() < count {
        let cfg = draw_instance(&mut rng, max_ions);
        let (_, coupling) = cfg.build()?;
        let drift = build_drift_matrix(&coupling, &cfg.profile()?)?;
        match decompose(&drift) {
            Ok(d) if d.min_sum_real() >= MIN_RESOLVABLE_RATE => out.push(cfg),
            Ok(_) | Err(Error::DefectiveSpectrum { .. }) => redrawn += 1,
            Err(e) => return Err(e),
        }
        if redrawn > 100 * count.max(1) {
            return Err(Error::NumericalFailure("could not draw resolvable instances".into()));
        }
    }
    Ok((out, redrawn))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Compare all routes on one instance.
pub fn check_instance(index: usize, cfg: &ScenarioConfig, opts: &ValidationOptions) -> Result<InstanceReport> {
    let (_, coupling) = cfg.build()?;
    let profile = cfg.profile()?;
    let drift = build_drift_matrix(&coupling, &profile)?;
    let decomp = decompose(&drift)?;
    let strengths = noise_strengths(&profile, &coupling)?;
    let n = coupling.dim();

    let spectral = steady_state_temperatures(&decomp, &strengths, &coupling)?;
    let lyap = lyapunov_steady_covariance(&drift, &strengths)?.temperatures(&coupling, f64::INFINITY)?;
    let init = thermal_initial(&vec![cfg.initial_temp; n], &coupling)?;
    let c0 = CovarianceMatrix::diagonal(&init.x2, &init.p2)?;
    let ode = covariance_ode_at(&drift, &strengths, &c0, opts.ode_horizon, opts.ode_dt_max)?
        .temperatures(&coupling, opts.ode_horizon)?;

    let spectral_vs_lyapunov = max_abs_diff(&spectral.temps, &lyap.temps);
    let spectral_vs_ode = max_abs_diff(&spectral.temps, &ode.temps);
    let lyapunov_vs_ode = max_abs_diff(&lyap.temps, &ode.temps);

    let mc_seed = opts.seed.wrapping_add(index as u64);
    let mc = monte_carlo_temperatures(
        &coupling,
        &profile,
        &vec![cfg.initial_temp; n],
        &opts.mc_times,
        opts.n_traj,
        mc_seed,
        opts.mc_dt,
    )?;
    let propagator = MomentPropagator::new(&decomp, Some(&init), &strengths)?;
    let mut mc_chain_z = 0.0f64;
    let mut mc_ion_z = 0.0f64;
    for (k, &t) in opts.mc_times.iter().enumerate() {
        let exact = crate::spectral::temperature_of(&propagator.at(t)?, &coupling)?;
        let mean = exact.mean();
        mc_chain_z = mc_chain_z.max((mc.chain_mean[k] - mean).abs() / mc.chain_mean_err[k]);
        for i in 0..n {
            mc_ion_z = mc_ion_z.max((mc.mean_temps[k][i] - exact.temps[i]).abs() / mc.std_errs[k][i]);
        }
    }

    let pairwise_ok = spectral_vs_lyapunov.max(spectral_vs_ode).max(lyapunov_vs_ode) <= opts.tolerance;
    Ok(InstanceReport {
        index,
        scenario: cfg.clone(),
        min_sum_real: decomp.min_sum_real(),
        spectral_vs_lyapunov,
        spectral_vs_ode,
        lyapunov_vs_ode,
        mc_chain_z,
        mc_ion_z,
        passed: pairwise_ok && mc_chain_z <= opts.mc_sigmas,
    })
}

/// Exact steady-state properties on small reference chains.
pub fn property_checks() -> Result<Vec<PropertyCheck>> {
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for (gamma, temp) in [(0.1, 2.0), (10.0, 10.0), (1e-3, 0.0), (0.5, 7.25)] {
        let cfg = ScenarioConfig {
            chain: TrapSpec::uniform(1, PRESET_OMEGA_X),
            attachments: vec![BathAttachment::new(1, gamma, temp)],
            background: None,
            initial_temp: 5.0,
            sweep: Vec::new(),
        };
        worst = worst.max((run_steady(&cfg)?.2.temps[0] - temp).abs());
    }
    checks.push(PropertyCheck::new("single ion reaches its bath", worst, 1e-12));

    // Baths sharing `ω_i (T_i + ½) = θ` hold the chain in the classical Gibbs
    // state `⟨x x⟩ = θ A⁻¹`, `⟨p p⟩ = θ I`.
    checks.push(PropertyCheck::new("matched baths give the Gibbs state", gibbs_deviation(40.0)?, 1e-8));

    let mut symmetric = ScenarioConfig::edge_driven(12, 0.7);
    symmetric.chain = TrapSpec::harmonic(12, PRESET_OMEGA_X, None);
    for a in &mut symmetric.attachments {
        a.temperature = 6.0;
    }
    symmetric.attachments.push(BathAttachment::new(4, 0.2, 1.0));
    symmetric.attachments.push(BathAttachment::new(9, 0.2, 1.0));
    let (_, _, sym) = run_steady(&symmetric)?;
    checks.push(PropertyCheck::new("mirror-symmetric configuration", mirror_symmetry_score(&sym), 1e-8));

    let cold = ScenarioConfig {
        initial_temp: 0.0,
        ..ScenarioConfig::edge_driven(10, 0.2)
    };
    let hot = ScenarioConfig {
        initial_temp: 50.0,
        ..cold.clone()
    };
    let a = run_steady(&cold)?.2;
    let b = run_steady(&hot)?.2;
    checks.push(PropertyCheck::new("steady state ignores initial state", max_abs_diff(&a.temps, &b.temps), 1e-10));
    Ok(checks)
}

/// Largest deviation of the steady moments from the Gibbs form for a 12-ion
/// chain whose edge baths share `θ`.
pub fn gibbs_deviation(theta: f64) -> Result<f64> {
    let (_, coupling) = TrapSpec::uniform(12, PRESET_OMEGA_X).build()?;
    let w = coupling.local_freqs();
    let attachments = [1, 12, 5]
        .iter()
        .zip([0.3, 0.9, 0.05])
        .map(|(&i, g)| BathAttachment::new(i, g, theta / w[i - 1] - 0.5))
        .collect::<Vec<_>>();
    let profile = crate::bath::assemble_profile(12, &attachments, None)?;
    let drift = build_drift_matrix(&coupling, &profile)?;
    let decomp = decompose(&drift)?;
    let strengths = noise_strengths(&profile, &coupling)?;
    let steady = MomentPropagator::new(&decomp, None, &strengths)?.steady()?;
    let a_inv = coupling.matrix().partial_piv_lu().inverse();
    let mut worst = 0.0f64;
    for i in 0..12 {
        worst = worst
            .max((steady.x2[i] - theta * a_inv[(i, i)]).abs() / (theta * a_inv[(i, i)]))
            .max((steady.p2[i] - theta).abs() / theta);
    }
    Ok(worst)
}

/// Run the full oracle suite.
pub fn run_validation(opts: &ValidationOptions) -> Result<ValidationReport> {
    let (instances, redrawn) = random_instances(opts.seed, opts.instances, opts.max_ions)?;
    let reports = instances
        .iter()
        .enumerate()
        .map(|(k, cfg)| check_instance(k + 1, cfg, opts))
        .collect::<Result<Vec<_>>>()?;
    let properties = property_checks()?;
    let max_pairwise = reports.iter().map(InstanceReport::max_pairwise).fold(0.0, f64::max);
    let max_mc_chain_z = reports.iter().map(|r| r.mc_chain_z).fold(0.0, f64::max);
    let max_mc_ion_z = reports.iter().map(|r| r.mc_ion_z).fold(0.0, f64::max);
    let passed = reports.iter().all(|r| r.passed) && properties.iter().all(|p| p.passed);
    Ok(ValidationReport {
        options: opts.clone(),
        instances: reports,
        redrawn,
        properties,
        max_pairwise,
        max_mc_chain_z,
        max_mc_ion_z,
        passed,
    })
}
