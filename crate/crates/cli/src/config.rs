//! Run configuration, one TOML file per experiment.
//!
//! ```toml
//! output_dir = "out/jet_additive"
//!
//! [model]
//! name = "jet-additive"        # jet-additive | jet-multiplicative | linear3d | lorenz
//! intensity = 0.5477225575051661
//!
//! [simulate]
//! steps = 20000
//! dt = 0.01
//! x0 = [[-0.2, 0.8]]
//! repeat = 1                   # members per initial condition
//! seed = 1
//!
//! [basis]
//! state_dim = 2
//! max_degree = 5
//! noise = ["additive", "additive"]
//!
//! [learn]
//! threshold = 0.0
//! max_sweeps = 10
//! crosstalk_tol = 0.01
//!
//! [domain]
//! kind = "eddy"                # or "cuboid" with lower/upper
//! reference = [-0.2, 0.8]
//! resolution = 256
//!
//! [solve]
//! mrt = true
//! escape = ["crest", "trough"] # Γ per problem; "a+b" joins labels, "all" is ∂D
//! tol = 1e-10
//! max_iter = 5000
//! average = "cell"             # or "nodal"
//!
//! [oracle]
//! paths = 10000
//! dt = 1e-4
//! horizon = 50.0
//! probes = 10
//! seed = 11
//! ```

use std::path::{Path, PathBuf};

use escapekit::basis::BasisSpec;
use escapekit::pde::{
    AverageRule, Domain, EddyDomain, DEFAULT_CUBOID_RESOLUTION, DEFAULT_EDDY_RESOLUTION,
    EDDY_REFERENCE,
};
use escapekit::sde::{builtin_model, Builtin, JetParams, NoiseParams, SdeModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub model: ModelBlock,
    pub simulate: SimulateBlock,
    pub basis: BasisSpec,
    #[serde(default)]
    pub learn: LearnBlock,
    pub domain: DomainBlock,
    #[serde(default)]
    pub solve: SolveBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub name: Builtin,
    /// `sigma` for the jets, `epsilon` for the 3D systems.
    pub intensity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jet: Option<JetParams<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub steps: usize,
    pub dt: f64,
    pub x0: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub repeat: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnBlock {
    #[serde(default)]
    pub threshold: f64,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_crosstalk")]
    pub crosstalk_tol: f64,
}

impl Default for LearnBlock {
    fn default() -> Self {
        Self {
            threshold: 0.0,
            max_sweeps: default_sweeps(),
            crosstalk_tol: default_crosstalk(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainBlock {
    Eddy {
        #[serde(default = "eddy_reference")]
        reference: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<usize>,
    },
    Cuboid {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBlock {
    #[serde(default = "yes")]
    pub mrt: bool,
    #[serde(default)]
    pub escape: Vec<String>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub average: AverageRule,
}

impl Default for SolveBlock {
    fn default() -> Self {
        Self {
            mrt: true,
            escape: Vec::new(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            average: AverageRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    pub seed: u64,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_sweeps() -> usize {
    10
}
fn default_crosstalk() -> f64 {
    1e-2
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    5000
}
fn default_probes() -> usize {
    10
}
fn eddy_reference() -> [f64; 2] {
    EDDY_REFERENCE
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn state_dim(&self) -> usize {
        self.model.name.state_dim()
    }

    pub fn true_model(&self) -> Result<SdeModel<f64>, CliError> {
        let mut noise = NoiseParams::new(self.model.intensity);
        if let Some(jet) = self.model.jet {
            noise.jet = jet;
        }
        Ok(builtin_model(self.model.name, noise)?)
    }

    pub fn jet_params(&self) -> JetParams<f64> {
        self.model.jet.unwrap_or_default()
    }

    pub fn build_domain(&self) -> Result<Domain<f64>, CliError> {
        Ok(match &self.domain {
            DomainBlock::Eddy { reference, .. } => {
                Domain::Eddy(EddyDomain::new(self.jet_params(), *reference)?)
            }
            DomainBlock::Cuboid { lower, upper, .. } => {
                Domain::cuboid(lower.clone(), upper.clone())?
            }
        })
    }

    pub fn resolution(&self) -> usize {
        match &self.domain {
            DomainBlock::Eddy { resolution, .. } => resolution.unwrap_or(DEFAULT_EDDY_RESOLUTION),
            DomainBlock::Cuboid { resolution, .. } => {
                resolution.unwrap_or(DEFAULT_CUBOID_RESOLUTION)
            }
        }
    }

    /// Initial conditions of all ensemble members, each `x0` repeated
    /// `repeat` times in a row.
    pub fn members(&self) -> Vec<Vec<f64>> {
        self.simulate
            .x0
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.clone(), self.simulate.repeat))
            .collect()
    }

    /// Label ids of each configured escape problem.
    pub fn escape_problems(
        &self,
        domain: &Domain<f64>,
    ) -> Result<Vec<(String, Vec<usize>)>, CliError> {
        self.solve
            .escape
            .iter()
            .map(|spec| {
                let names: Vec<String> = spec.split('+').map(|s| s.trim().to_string()).collect();
                let ids = domain
                    .resolve_labels(&names)
                    .map_err(|e| CliError::config(e.to_string()))?;
                Ok((spec.clone(), ids))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let n = self.state_dim();
        let bad = |msg: String| Err(CliError::config(msg));
        if !(self.model.intensity >= 0.0 && self.model.intensity.is_finite()) {
            return bad(format!(
                "model.intensity must be finite and >= 0, got {}",
                self.model.intensity
            ));
        }
        if let Some(jet) = &self.model.jet {
            if !matches!(
                self.model.name,
                Builtin::JetAdditive | Builtin::JetMultiplicative
            ) {
                return bad("model.jet only applies to the jet systems".into());
            }
            jet.validate()?;
        }
        let s = &self.simulate;
        if s.steps == 0 || !(s.dt > 0.0 && s.dt.is_finite()) {
            return bad("simulate needs steps >= 1 and dt > 0".into());
        }
        if s.x0.is_empty() || s.repeat == 0 {
            return bad("simulate needs at least one initial condition and repeat >= 1".into());
        }
        if let Some(p) = s.x0.iter().find(|p| p.len() != n) {
            return bad(format!(
                "initial condition {p:?} does not have {n} components"
            ));
        }
        if self.basis.state_dim() != n {
            return bad(format!(
                "basis.state_dim = {} but {} has {n} state components",
                self.basis.state_dim(),
                self.model.name
            ));
        }
        if !self.basis.noise_columns().is_empty() && self.basis.required_noise_dim() != n {
            return bad(format!("basis.noise must list one entry per channel ({n})"));
        }
        if !(self.learn.threshold >= 0.0) || !(self.learn.crosstalk_tol >= 0.0) {
            return bad("learn.threshold and learn.crosstalk_tol must be >= 0".into());
        }
        let domain = self.build_domain()?;
        if domain.dim() != n {
            return bad(format!(
                "domain has dimension {} but the model has {n}",
                domain.dim()
            ));
        }
        if !(self.solve.tol > 0.0) || self.solve.max_iter == 0 {
            return bad("solve needs tol > 0 and max_iter >= 1".into());
        }
        self.escape_problems(&domain)?;
        if let Some(o) = &self.oracle {
            if o.paths < 2 || !(o.dt > 0.0) || !(o.horizon >= o.dt) || o.probes == 0 {
                return bad("oracle needs paths >= 2, 0 < dt <= horizon and probes >= 1".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const JET: &str = r#"
output_dir = "out/test"

[model]
name = "jet-additive"
intensity = 0.5477225575051661

[simulate]
steps = 100
dt = 0.01
x0 = [[-0.2, 0.8]]
seed = 3

[basis]
state_dim = 2
max_degree = 5
noise = ["additive", "additive"]

[domain]
kind = "eddy"
resolution = 64

[solve]
escape = ["crest", "trough", "all"]
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml(JET).unwrap();
        assert_eq!(cfg.simulate.repeat, 1);
        assert_eq!(cfg.learn, LearnBlock::default());
        assert!(cfg.solve.mrt);
        assert_eq!(cfg.solve.average, AverageRule::Cell);
        assert_eq!(cfg.resolution(), 64);
        assert_eq!(cfg.basis.len(), 23);
        let domain = cfg.build_domain().unwrap();
        let problems = cfg.escape_problems(&domain).unwrap();
        assert_eq!(problems[2].1, vec![0, 1]);
    }

    #[test]
    fn round_trips() {
        let cfg = RunConfig::from_toml(JET).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_unknown_labels_and_fields() {
        assert!(RunConfig::from_toml(&JET.replace("\"trough\"", "\"zmax\"")).is_err());
        assert!(RunConfig::from_toml(&JET.replace("seed = 3", "seed = 3\nspeed = 1")).is_err());
        assert!(RunConfig::from_toml(&JET.replace("jet-additive", "jet-sideways")).is_err());
        assert!(RunConfig::from_toml(&JET.replace("state_dim = 2", "state_dim = 3")).is_err());
        assert!(RunConfig::from_toml(&JET.replace("[[-0.2, 0.8]]", "[[-0.2]]")).is_err());
    }

    #[test]
    fn members_repeat_in_order() {
        let cfg = RunConfig::from_toml(&JET.replace(
            "x0 = [[-0.2, 0.8]]",
            "x0 = [[0.0, 1.0], [2.0, 3.0]]\nrepeat = 2",
        ))
        .unwrap();
        let m = cfg.members();
        assert_eq!(
            m,
            vec![
                vec![0.0, 1.0],
                vec![0.0, 1.0],
                vec![2.0, 3.0],
                vec![2.0, 3.0]
            ]
        );
    }
}
