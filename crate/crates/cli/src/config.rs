//! TOML experiment configuration shared by every subcommand.

use std::path::PathBuf;

use nlsys::coupling::BlockSign;
use nlsys::pde::{Potential, SolverConfig};
use nlsys::symmetry::GroupMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: u64 = 0x5eed;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionConfig>,
    #[serde(default)]
    pub ground_state: GroundStateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: usize,
    pub exponent: f64,
    /// Row-major coupling matrix; a single component with `β = 1` by default.
    #[serde(default = "unit_beta")]
    pub beta: Vec<Vec<f64>>,
    /// One entry per component; `V ≡ 1` for all components when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potentials: Option<Vec<PotentialConfig>>,
}

fn unit_beta() -> Vec<Vec<f64>> {
    vec![vec![1.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    Constant { value: f64 },
    Well { inner: f64, outer: f64, rho: f64, width: f64 },
}

impl PotentialConfig {
    pub fn build(&self) -> Potential<f64> {
        match *self {
            PotentialConfig::Constant { value } => Potential::Constant(value),
            PotentialConfig::Well {
                inner,
                outer,
                rho,
                width,
            } => Potential::Well {
                inner,
                outer,
                rho,
                width,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionConfig {
    /// `[0, ℓ_1, …, ℓ_q]`.
    pub boundaries: Vec<usize>,
    pub signs: Vec<BlockSign>,
    /// User-supplied `C_*`; estimated from the ground state when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cstar: Option<f64>,
    #[serde(default = "default_order")]
    pub group_order: usize,
}

fn default_order() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateConfig {
    pub step: f64,
    pub r_max: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            r_max: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Grid points per axis, boundary included.
    pub points: usize,
    pub half_width: f64,
    #[serde(default = "SolverSection::default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "SolverSection::default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "SolverSection::default_step_fraction")]
    pub step_fraction: f64,
    #[serde(default = "SolverSection::default_projection_interval")]
    pub projection_interval: usize,
    #[serde(default = "SolverSection::default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub seed: SeedConfig,
}

impl SolverSection {
    fn default_tolerance() -> f64 {
        SolverConfig::<f64>::default().tolerance
    }
    fn default_max_iterations() -> usize {
        SolverConfig::<f64>::default().max_iterations
    }
    fn default_step_fraction() -> f64 {
        SolverConfig::<f64>::default().step_fraction
    }
    fn default_projection_interval() -> usize {
        SolverConfig::<f64>::default().projection_interval
    }
    fn default_log_every() -> usize {
        SolverConfig::<f64>::default().log_every
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            step_fraction: self.step_fraction,
            projection_interval: self.projection_interval,
            log_every: self.log_every,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SeedConfig {
    /// Translated ground-state bumps, listed per component.
    Bumps { components: Vec<Vec<BumpConfig>> },
    /// Symmetric orbit seeds, one radius per block; tags follow the block signs.
    Orbit { group_order: usize, radii: Vec<f64> },
    /// A saved state; relative paths are resolved against the config file.
    Checkpoint { path: PathBuf },
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig::Bumps { components: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: Vec<f64>,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// Fit window for the exponential rate; `[0.2 L, 0.7 L]` by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Radii for the fit of the tail exponent; the whole radius list by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_window: Option<[f64; 2]>,
    #[serde(default = "DecayConfig::default_tail_samples")]
    pub tail_samples: usize,
    #[serde(default = "DecayConfig::default_noise_floor")]
    pub noise_floor: f64,
    #[serde(default = "DecayConfig::default_relative_tolerance")]
    pub relative_tolerance: f64,
}

impl DecayConfig {
    fn default_tail_samples() -> usize {
        41
    }
    fn default_noise_floor() -> f64 {
        1e-9
    }
    fn default_relative_tolerance() -> f64 {
        0.05
    }
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            window: None,
            tail_window: None,
            tail_samples: Self::default_tail_samples(),
            noise_floor: Self::default_noise_floor(),
            relative_tolerance: Self::default_relative_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Block constants; computed from the matrix when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// `‖ω‖²`; computed from the ground state when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_norm_sq: Option<f64>,
    /// Full level `c^φ` for the compactness check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_full: Option<f64>,
    /// Levels of the systems with one block removed, one per block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_sub: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Full,
    Planar,
}

impl From<ModeConfig> for GroupMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Full => GroupMode::Full,
            ModeConfig::Planar => GroupMode::PlanarAnalog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub radii: Vec<f64>,
    /// Block whose submatrix and sign define the test function.
    #[serde(default)]
    pub block: usize,
    #[serde(default = "default_order")]
    pub group_order: usize,
    pub mode: ModeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    pub windows: Vec<[f64; 2]>,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            start: 1.5,
            end: 101.5,
            samples: 4001,
            windows: vec![[2.0, 4.0], [10.0, 20.0], [50.0, 100.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// Run directory; `runs/<command>-<hash prefix>` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    /// Write CSV series next to the JSON reports.
    #[serde(default = "yes")]
    pub csv: bool,
    /// Write the solved state.
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            directory: None,
            csv: true,
            checkpoint: true,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization, so formatting of the input file
    /// does not change it.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7

[problem]
dimension = 1
exponent = 2.0
beta = [[1.0, -0.5], [-0.5, 1.0]]
potentials = [{ kind = "constant", value = 1.0 }, { kind = "well", inner = 0.0, outer = 0.25, rho = 3.0, width = 1.0 }]

[decomposition]
boundaries = [0, 1, 2]
signs = ["plus", "minus"]
cstar = 1.5

[solver]
points = 257
half_width = 20.0
tolerance = 1e-8

[solver.seed]
kind = "bumps"
components = [[{ center = [-6.0], amplitude = 1.0 }], [{ center = [6.0] }]]

[decay]
window = [6.0, 14.0]

[bounds]
mu = [1.0, 1.0]
omega_norm_sq = 2.5

[sweep]
radii = [8.0, 10.0]
mode = "planar"

[outputs]
directory = "out/run"
csv = false
"#;

    #[test]
    fn round_trips() {
        let c = ExperimentConfig::parse(FULL).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
        let minimal = ExperimentConfig::parse("[problem]\ndimension = 2\nexponent = 1.5\n").unwrap();
        assert_eq!(minimal.seed, DEFAULT_SEED);
        assert_eq!(minimal.problem.beta, vec![vec![1.0]]);
        assert_eq!(ExperimentConfig::parse(&minimal.to_toml()).unwrap(), minimal);
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ExperimentConfig::parse("[problem]\ndimension = 1\nexponent = 2.0\n").unwrap();
        let b = ExperimentConfig::parse("[problem]\n# comment\nexponent = 2\n\ndimension = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = ExperimentConfig::parse("[problem]\ndimension = 1\nexponent = 2.5\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[problem]\ndimension = 1\nexponent = 2.0\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::parse("[problem]\ndimension = 1\n").is_err());
    }
}
