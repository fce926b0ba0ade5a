//! Experiment configuration, one JSON document per run.
//!
//! The document carries a schema `version`, the `task`, an optional seed, a
//! system source (`family` or `system`) and exactly one parameter section,
//! named after the task. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use dominant::averaging::{dominance_check, FourierHamiltonian, HermitianPolicy, LoadOptions};
use dominant::family::{generate_family, pendulum_rotator, sheared_pendulum_rotator, FamilyMember, FamilyRule, PotentialRule};
use dominant::lattice::{IntVector, OrderedBasis};
use dominant::nhic::{IsolatingBlockSpec, StrongSaddle, WitnessOptions};
use dominant::slowsys::{ConvexModel, SlowSystem};
use dominant::weakkam::{CRule, DiscreteActionConfig};
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, serde::Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Basis,
    Slow,
    RescaleScan,
    Weakkam,
    Semicont,
    Nhic,
    Report,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Basis => "basis",
            Task::Slow => "slow",
            Task::RescaleScan => "rescale-scan",
            Task::Weakkam => "weakkam",
            Task::Semicont => "semicont",
            Task::Nhic => "nhic",
            Task::Report => "report",
        }
    }

    fn section(self) -> &'static str {
        match self {
            Task::RescaleScan => "rescale",
            other => other.name(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub task: Task,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub family: Option<FamilySource>,
    #[serde(default)]
    pub system: Option<SystemSource>,
    #[serde(default)]
    pub basis: Option<BasisParams>,
    #[serde(default)]
    pub slow: Option<SlowParams>,
    #[serde(default)]
    pub rescale: Option<RescaleParams>,
    #[serde(default)]
    pub weakkam: Option<WeakKamParams>,
    #[serde(default)]
    pub semicont: Option<SemicontParams>,
    #[serde(default)]
    pub nhic: Option<NhicParams>,
    #[serde(default)]
    pub report: Option<ReportParams>,
}

/// A family of members with growing `μ`.
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySource {
    Rule(FamilyRule),
    PendulumRotator { eps: f64, weak_amplitude: f64, q: f64, schedule: Vec<i64> },
    ShearedPendulumRotator { eps: f64, weak_amplitude: f64, q: f64, shear: i64, schedule: Vec<i64> },
}

impl FamilySource {
    /// The rule, with the run seed substituted into averaged potentials.
    pub fn rule(&self, seed: u64) -> FamilyRule {
        let mut rule = match self {
            FamilySource::Rule(r) => r.clone(),
            FamilySource::PendulumRotator { eps, weak_amplitude, q, schedule } => {
                pendulum_rotator(*eps, *weak_amplitude, *q, schedule.clone())
            }
            FamilySource::ShearedPendulumRotator { eps, weak_amplitude, q, shear, schedule } => {
                sheared_pendulum_rotator(*eps, *weak_amplitude, *q, *shear, schedule.clone())
            }
        };
        if let PotentialRule::Averaged { seed: s, .. } = &mut rule.potential {
            *s = seed;
        }
        rule
    }
}

/// A single system averaged from a Fourier file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSource {
    pub model: ConvexModel,
    pub p0: Vec<f64>,
    pub basis: OrderedBasis,
    /// Fourier coefficients of `H_1`, relative to the config file.
    pub hamiltonian: PathBuf,
    #[serde(default)]
    pub hermitian: HermitianPolicy,
    pub kappa: f64,
    pub q: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisParams {
    pub ambient_dim: usize,
    pub generators: Vec<IntVector>,
    pub strong: Vec<IntVector>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowParams {
    /// Random `(c, φ, v)` triples per member for the split evaluation.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_exactness")]
    pub tolerance: f64,
    /// `|v|_∞` and `|c|_∞` bounds of the random samples.
    #[serde(default = "two")]
    pub velocity_radius: f64,
    #[serde(default = "one")]
    pub class_radius: f64,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBoxParams {
    pub angle_extent: f64,
    pub v_radius: f64,
    pub i_radius: f64,
}

impl Default for SampleBoxParams {
    fn default() -> Self {
        SampleBoxParams { angle_extent: 1.0, v_radius: 2.0, i_radius: 2.0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleParams {
    /// Defaults to the family's `q`.
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default = "default_rescale_samples")]
    pub samples: usize,
    #[serde(default)]
    pub sample_box: SampleBoxParams,
    /// Added to the predicted slopes.
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Bound on the projected deviation of the `U^wk ≡ 0` control.
    #[serde(default = "default_control_tolerance")]
    pub control_tolerance: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianParams {
    /// Kinetic matrix `S` of `½ v·S^{-1} v`.
    pub s: Vec<Vec<f64>>,
    #[serde(default)]
    pub potential: Option<dominant::averaging::TrigPolynomial>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakKamParams {
    /// Defaults by torus dimension.
    #[serde(default)]
    pub grid: Option<DiscreteActionConfig>,
    #[serde(default = "default_solver_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Standalone Lagrangian; with a zero potential the alpha values are
    /// compared with `½ c·S c`.
    #[serde(default)]
    pub lagrangian: Option<LagrangianParams>,
    #[serde(default)]
    pub classes: Vec<Vec<f64>>,
    /// Classes for the alpha relation on family or system members.
    #[serde(default)]
    pub c_rule: Option<CRule>,
    /// Also run the relation with `U^wk` removed from the first member.
    #[serde(default = "yes")]
    pub control: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemicontParams {
    pub c_rule: CRule,
    #[serde(default)]
    pub grid: Option<DiscreteActionConfig>,
    #[serde(default = "default_solver_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub q: Option<f64>,
    /// Length of the calibrated chains.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_beta_offsets")]
    pub beta_offsets: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeControl {
    /// Factor applied to `U^wk` of the first member.
    pub weak_scale: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NhicParams {
    pub saddle: StrongSaddle,
    pub block: IsolatingBlockSpec,
    #[serde(default)]
    pub witness: Option<WitnessOptions>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub negative_control: Option<NegativeControl>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {
    /// Earlier `report.json` files, relative to the config file.
    pub inputs: Vec<PathBuf>,
}

fn default_samples() -> usize {
    100
}
fn default_exactness() -> f64 {
    1e-10
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}
fn default_rescale_samples() -> usize {
    4096
}
fn default_slack() -> f64 {
    0.3
}
fn default_control_tolerance() -> f64 {
    1e-12
}
fn default_solver_tolerance() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    50_000
}
fn default_steps() -> usize {
    600
}
fn default_beta_offsets() -> Vec<f64> {
    vec![-0.2, -0.1, 0.1, 0.2]
}
fn default_delta() -> f64 {
    0.05
}
fn default_dt() -> f64 {
    0.01
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {x}")))
    }
}

fn nonzero(name: &str, n: usize) -> Result<(), CliError> {
    if n == 0 {
        Err(invalid(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    /// Parses and validates; `base` resolves relative file references.
    pub fn parse(value: serde_json::Value, base: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| invalid(format!("config: {e}")))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(invalid(format!("unsupported config version {} (expected {SCHEMA_VERSION})", cfg.version)));
        }
        if let Some(sys) = &mut cfg.system {
            sys.hamiltonian = base.join(&sys.hamiltonian);
        }
        if let Some(r) = &mut cfg.report {
            r.inputs = r.inputs.iter().map(|p| base.join(p)).collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn sections(&self) -> [(&'static str, bool); 7] {
        [
            ("basis", self.basis.is_some()),
            ("slow", self.slow.is_some()),
            ("rescale", self.rescale.is_some()),
            ("weakkam", self.weakkam.is_some()),
            ("semicont", self.semicont.is_some()),
            ("nhic", self.nhic.is_some()),
            ("report", self.report.is_some()),
        ]
    }

    fn validate(&self) -> Result<(), CliError> {
        let own = self.task.section();
        for (name, present) in self.sections() {
            if present && name != own {
                return Err(invalid(format!("section `{name}` does not belong to task {}", self.task.name())));
            }
        }
        if self.family.is_some() && self.system.is_some() {
            return Err(invalid("give either `family` or `system`, not both"));
        }
        let needs_family = matches!(self.task, Task::RescaleScan | Task::Semicont | Task::Nhic);
        let takes_source = matches!(self.task, Task::Slow | Task::Weakkam) || needs_family;
        if !takes_source && (self.family.is_some() || self.system.is_some()) {
            return Err(invalid(format!("task {} takes no family or system", self.task.name())));
        }
        if needs_family && self.family.is_none() {
            return Err(invalid(format!("task {} needs a `family`", self.task.name())));
        }
        if let Some(sys) = &self.system {
            if !sys.hamiltonian.is_file() {
                return Err(invalid(format!("hamiltonian file {} does not exist", sys.hamiltonian.display())));
            }
            positive("system.kappa", sys.kappa)?;
            positive("system.q", sys.q)?;
        }
        match self.task {
            Task::Basis => {
                let p = self.basis.as_ref().ok_or_else(|| invalid("task basis needs a `basis` section"))?;
                if p.generators.is_empty() || p.strong.is_empty() {
                    return Err(invalid("basis needs generators and a strong basis"));
                }
            }
            Task::Slow => {
                if self.family.is_none() && self.system.is_none() {
                    return Err(invalid("task slow needs a `family` or a `system`"));
                }
                let p = self.slow_params();
                nonzero("slow.samples", p.samples)?;
                positive("slow.tolerance", p.tolerance)?;
                positive("slow.velocity_radius", p.velocity_radius)?;
                positive("slow.class_radius", p.class_radius)?;
            }
            Task::RescaleScan => {
                let p = self.rescale.as_ref().ok_or_else(|| invalid("task rescale-scan needs a `rescale` section"))?;
                nonzero("rescale.samples", p.samples)?;
                positive("rescale.sample_box.angle_extent", p.sample_box.angle_extent)?;
                positive("rescale.sample_box.v_radius", p.sample_box.v_radius)?;
                positive("rescale.sample_box.i_radius", p.sample_box.i_radius)?;
                positive("rescale.slack", p.slack)?;
                positive("rescale.control_tolerance", p.control_tolerance)?;
                if let Some(q) = p.q {
                    if !(q > 2.0) {
                        return Err(invalid(format!("rescale.q must exceed 2, got {q}")));
                    }
                }
            }
            Task::Weakkam => {
                let p = self.weakkam.as_ref().ok_or_else(|| invalid("task weakkam needs a `weakkam` section"))?;
                positive("weakkam.tolerance", p.tolerance)?;
                nonzero("weakkam.max_iter", p.max_iter)?;
                match (&p.lagrangian, &p.c_rule) {
                    (Some(_), None) => {
                        if p.classes.is_empty() {
                            return Err(invalid("weakkam.lagrangian needs at least one class"));
                        }
                        if self.family.is_some() || self.system.is_some() {
                            return Err(invalid("weakkam.lagrangian runs without a family or system"));
                        }
                    }
                    (None, Some(_)) => {
                        if self.family.is_none() && self.system.is_none() {
                            return Err(invalid("weakkam.c_rule needs a `family` or a `system`"));
                        }
                    }
                    _ => return Err(invalid("weakkam needs exactly one of `lagrangian` and `c_rule`")),
                }
            }
            Task::Semicont => {
                let p = self.semicont.as_ref().ok_or_else(|| invalid("task semicont needs a `semicont` section"))?;
                positive("semicont.tolerance", p.tolerance)?;
                nonzero("semicont.max_iter", p.max_iter)?;
                nonzero("semicont.steps", p.steps)?;
            }
            Task::Nhic => {
                let p = self.nhic.as_ref().ok_or_else(|| invalid("task nhic needs an `nhic` section"))?;
                p.block.validate().map_err(|e| invalid(format!("nhic.block: {e}")))?;
                positive("nhic.delta", p.delta)?;
                positive("nhic.dt", p.dt)?;
                if let Some(nc) = &p.negative_control {
                    positive("nhic.negative_control.weak_scale", nc.weak_scale)?;
                }
            }
            Task::Report => {
                let p = self.report.as_ref().ok_or_else(|| invalid("task report needs a `report` section"))?;
                if p.inputs.is_empty() {
                    return Err(invalid("report.inputs is empty"));
                }
                if let Some(missing) = p.inputs.iter().find(|p| !p.is_file()) {
                    return Err(invalid(format!("report input {} does not exist", missing.display())));
                }
            }
        }
        Ok(())
    }

    pub fn slow_params(&self) -> SlowParams {
        self.slow.clone().unwrap_or(SlowParams {
            samples: default_samples(),
            tolerance: default_exactness(),
            velocity_radius: two(),
            class_radius: one(),
        })
    }

    /// Files whose contents enter the config hash.
    pub fn referenced_files(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let Some(sys) = &self.system {
            out.push(sys.hamiltonian.clone());
        }
        if let Some(r) = &self.report {
            out.extend(r.inputs.iter().cloned());
        }
        out
    }

    /// `q` of the source, used when a task does not override it.
    pub fn source_q(&self, seed: u64) -> Option<f64> {
        match (&self.family, &self.system) {
            (Some(f), _) => Some(f.rule(seed).q),
            (None, Some(s)) => Some(s.q),
            _ => None,
        }
    }

    /// Members of the family, or the single system as a member.
    pub fn members(&self, seed: u64) -> Result<Vec<FamilyMember>, CliError> {
        if let Some(f) = &self.family {
            return Ok(generate_family(&f.rule(seed))?);
        }
        let sys = self.system.as_ref().ok_or_else(|| invalid("no family or system given"))?;
        let text = std::fs::read_to_string(&sys.hamiltonian)
            .map_err(|e| invalid(format!("reading {}: {e}", sys.hamiltonian.display())))?;
        let h1 = FourierHamiltonian::from_json(&text, LoadOptions { hermitian: sys.hermitian, lattice_context: true })?;
        let system = SlowSystem::from_hamiltonian(&sys.model, &sys.p0, &sys.basis, &h1)?;
        let certificate = dominance_check(&sys.basis, system.potentials(), sys.kappa, sys.q, false)?;
        let mu = sys.basis.weak().iter().map(|k| k.norm()).min().unwrap_or(0);
        Ok(vec![FamilyMember { mu, basis: sys.basis.clone(), system, certificate }])
    }
}
