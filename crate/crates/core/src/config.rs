//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "constants": { "hbar": 1.0, "mass": 1.0, "c": 1.0 },
//!   "field": { "type": "plane_wave", "p": [1.0, 0.0, 0.0] },
//!   "integrator": { "dt": 0.001, "n_steps": 1000, "n_paths": 1000, "base_seed": 7 },
//!   "init": { "kind": "point_mass", "x": [0.0, 0.0, 0.0] },
//!   "tau": { "dtau": 0.001, "tau_max": 0.5 },
//!   "output_dir": "out"
//! }
//! ```
//!
//! `"units"` is accepted as an alias for `"constants"`. Unknown keys are
//! rejected so that typos surface as parse errors rather than silent defaults.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fokker_planck::wrapped_gaussian;
use crate::sde::{InitialSampler, IntegratorConfig, PeriodicBox};
use crate::time_change::TauGrid;
use crate::vec3::Vec3;
use crate::wave::{make_plane_wave, superpose, PhysicalConstants, PlaneWaveSpec, SpaceTimeGrid, WaveField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub p: Vec3,
    pub w_re: f64,
    #[serde(default)]
    pub w_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    PlaneWave { p: Vec3 },
    Superposition { terms: Vec<TermSpec> },
}

impl FieldSpec {
    pub fn to_field(&self, constants: PhysicalConstants) -> Result<WaveField> {
        match self {
            Self::PlaneWave { p } => make_plane_wave(*p, constants),
            Self::Superposition { terms } => {
                let waves: Vec<_> = terms.iter().map(|t| PlaneWaveSpec::new(t.p, constants)).collect();
                let weights: Vec<_> = terms.iter().map(|t| Complex64::new(t.w_re, t.w_im)).collect();
                superpose(&waves, &weights)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    PointMass {
        #[serde(default)]
        x: Vec3,
    },
    UniformBox,
    /// `ρ(·, 0)` of the configured field, by rejection sampling on the box.
    FieldDensity,
    /// Wrapped normal in the first coordinate, uniform in the other two.
    WrappedGaussian { center: f64, var: f64 },
}

impl Default for InitSpec {
    fn default() -> Self {
        Self::PointMass { x: [0.0; 3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub side: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibilitySpec {
    pub half_width: f64,
    pub n: usize,
    pub t_max: f64,
    pub nt: usize,
    pub tol: f64,
}

impl Default for AdmissibilitySpec {
    fn default() -> Self {
        Self {
            half_width: 2.0,
            n: 9,
            t_max: 1.0,
            nt: 5,
            tol: 1e-10,
        }
    }
}

impl AdmissibilitySpec {
    pub fn grid(&self) -> SpaceTimeGrid {
        SpaceTimeGrid::cube(self.half_width, self.n, self.t_max, self.nt)
    }
}

/// Parameters of the auxiliary runs performed by the verification suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSpec {
    /// Paths for the density and PT3 experiments.
    pub aux_paths: usize,
    pub density_bins: usize,
    pub density_box: f64,
    pub density_time: f64,
    pub density_init_var: f64,
    pub fp_cells: usize,
    pub pt3_box: f64,
    pub pt3_bins: usize,
    pub pt3_steps: usize,
    pub hbar_factors: Vec<f64>,
    pub classical_paths: usize,
    pub classical_dt: f64,
    pub invariant_grid_n: usize,
    pub adjoint_coarse: usize,
    pub adjoint_fine: usize,
    pub mass_shell_points: usize,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            aux_paths: 20_000,
            density_bins: 64,
            density_box: 2.0 * std::f64::consts::PI,
            density_time: 0.5,
            density_init_var: 0.05,
            fp_cells: 512,
            pt3_box: 1.0,
            pt3_bins: 4,
            pt3_steps: 10,
            hbar_factors: vec![1.0, 0.1, 0.01],
            classical_paths: 4000,
            classical_dt: 1e-2,
            invariant_grid_n: 16,
            adjoint_coarse: 32,
            adjoint_fine: 64,
            mass_shell_points: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, alias = "units")]
    pub constants: PhysicalConstants,
    pub field: FieldSpec,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub domain: Option<BoxSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauGrid>,
    #[serde(default)]
    pub admissibility: AdmissibilitySpec,
    /// Suites run by `verify` when none are selected on the command line.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suites: Vec<String>,
    #[serde(default)]
    pub checks: CheckSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_output_dir() -> String {
    "out".into()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.integrator.validate()?;
        if let Some(b) = &self.domain {
            PeriodicBox::new(b.side)?;
        }
        if let Some(t) = &self.tau {
            if !(t.dtau > 0.0) || t.tau_max.is_some_and(|m| !(m > 0.0)) {
                return Err(Error::InvalidConfig("tau grid needs positive dtau and tau_max".into()));
            }
        }
        if let FieldSpec::Superposition { terms } = &self.field {
            if terms.is_empty() {
                return Err(Error::InvalidConfig("superposition needs at least one term".into()));
            }
        }
        if matches!(self.init, InitSpec::WrappedGaussian { var, .. } if !(var > 0.0)) {
            return Err(Error::InvalidConfig("wrapped Gaussian variance must be positive".into()));
        }
        if !matches!(self.init, InitSpec::PointMass { .. }) && self.domain.is_none() {
            return Err(Error::InvalidConfig("this init needs a \"box\" block".into()));
        }
        let a = &self.admissibility;
        if a.n == 0 || a.nt == 0 || !(a.tol >= 0.0) {
            return Err(Error::InvalidConfig("bad admissibility grid".into()));
        }
        Ok(())
    }

    pub fn field(&self) -> Result<WaveField> {
        self.field.to_field(self.constants)
    }

    pub fn periodic_box(&self) -> Result<Option<PeriodicBox>> {
        self.domain.map(|b| PeriodicBox::new(b.side)).transpose()
    }

    pub fn sampler(&self, field: &WaveField) -> InitialSampler {
        init_sampler(&self.init, field, self.domain.map(|b| b.side))
    }
}

/// Builds the initial law; `side` is only consulted by box-based inits.
pub fn init_sampler(init: &InitSpec, field: &WaveField, side: Option<f64>) -> InitialSampler {
    match init {
        InitSpec::PointMass { x } => InitialSampler::PointMass(*x),
        InitSpec::UniformBox => InitialSampler::UniformBox,
        InitSpec::FieldDensity => InitialSampler::field_density(field),
        &InitSpec::WrappedGaussian { center, var } => {
            let side = side.unwrap_or(f64::INFINITY);
            let peak = wrapped_gaussian(center, center, var, side);
            InitialSampler::Density {
                density: std::sync::Arc::new(move |x: &Vec3| wrapped_gaussian(x[0], center, var, side)),
                bound: peak * 1.000_001,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::WaveKind;

    const MINIMAL: &str = r#"{
        "field": {"type": "plane_wave", "p": [1, 0, 0]},
        "integrator": {"dt": 0.001, "n_steps": 10, "n_paths": 4, "base_seed": 1}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.constants, PhysicalConstants::default());
        assert_eq!(cfg.init, InitSpec::PointMass { x: [0.0; 3] });
        assert_eq!(cfg.output_dir, "out");
        assert_eq!(cfg.field().unwrap().kind(), WaveKind::PlaneWave);
    }

    #[test]
    fn units_alias_and_superposition() {
        let text = r#"{
            "units": {"hbar": 0.5, "mass": 1, "c": 1},
            "field": {"type": "superposition", "terms": [
                {"p": [1, 0, 0], "w_re": 1.0},
                {"p": [0, 1, 0], "w_re": 1.0, "w_im": 0.5}
            ]},
            "integrator": {"dt": 0.01, "n_steps": 4, "n_paths": 1, "base_seed": 0}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.constants.hbar, 0.5);
        let f = cfg.field().unwrap();
        assert_eq!(f.components().len(), 2);
        assert_eq!(f.components()[1].1, Complex64::new(1.0, 0.5));
    }

    #[test]
    fn malformed_configs_are_rejected() {
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Json(_))));
        let typo = MINIMAL.replace("\"field\"", "\"feild\"");
        assert!(ExperimentConfig::from_json(&typo).is_err());
        let bad_dt = MINIMAL.replace("0.001", "-1");
        assert!(matches!(ExperimentConfig::from_json(&bad_dt), Err(Error::InvalidConfig(_))));
        let no_box = MINIMAL.replace("\"integrator\"", "\"init\": {\"kind\": \"uniform_box\"}, \"integrator\"");
        assert!(matches!(ExperimentConfig::from_json(&no_box), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
