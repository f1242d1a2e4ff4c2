use std::sync::Arc;

use robust_dde::laser::{build_laser, intensity, negative_intensity, Laser, LaserConfig};
use robust_dde::models::{hayes, scalar_fold};
use robust_dde::robust::ObjectiveFn;
use robust_dde::system::{param_index, DdeSystem, FnSystem, ParamMeta, Vector};

use crate::config::{ModelName, ParamOverride, RunConfig};
use crate::error::CliError;

pub enum Model {
    Hayes(FnSystem),
    ScalarFold(FnSystem),
    Laser(Laser),
}

fn apply_overrides(
    mut params: Vec<ParamMeta>,
    overrides: &std::collections::BTreeMap<String, ParamOverride>,
) -> Result<Vec<ParamMeta>, CliError> {
    for (name, ov) in overrides {
        let Some(p) = params.iter_mut().find(|p| &p.name == name) else {
            let known: Vec<&str> = params.iter().map(|p| p.name.as_str()).collect();
            return Err(CliError::Usage(format!(
                "unknown parameter '{name}' (model has {})",
                known.join(", ")
            )));
        };
        if let Some(v) = ov.nominal {
            p.nominal = v;
        }
        if let Some(v) = ov.delta {
            p.delta = v;
        }
        if let Some(v) = ov.lower {
            p.lower = v;
        }
        if let Some(v) = ov.upper {
            p.upper = v;
        }
        if let Some(v) = ov.optimizable {
            p.optimizable = v;
        }
    }
    Ok(params)
}

impl Model {
    pub fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(match cfg.model {
            ModelName::Hayes => {
                let base = hayes(0.0, 1.0, cfg.hayes.tau);
                let params = apply_overrides(base.params().to_vec(), &cfg.params)?;
                Model::Hayes(base.with_params(params)?)
            }
            ModelName::ScalarFold => {
                let base = scalar_fold(-0.04, 1.0);
                let params = apply_overrides(base.params().to_vec(), &cfg.params)?;
                Model::ScalarFold(base.with_params(params)?)
            }
            ModelName::Laser => {
                let mut lc = LaserConfig::with_points(cfg.laser.k);
                lc.phase = cfg.laser.phase;
                lc.params = apply_overrides(lc.params, &cfg.params)?;
                Model::Laser(build_laser(&lc)?)
            }
        })
    }

    pub fn sys(&self) -> &dyn DdeSystem {
        match self {
            Model::Hayes(s) | Model::ScalarFold(s) => s,
            Model::Laser(l) => l,
        }
    }

    pub fn param(&self, name: &str) -> Result<usize, CliError> {
        param_index(self.sys(), name)
            .ok_or_else(|| CliError::Usage(format!("unknown parameter '{name}'")))
    }

    pub fn steady_guess(&self, alpha: &[f64]) -> Vector {
        match self {
            Model::Hayes(_) => Vector::zeros(1),
            // lower (stable) branch
            Model::ScalarFold(_) => Vector::from_element(1, -(-alpha[0]).max(0.0).sqrt()),
            Model::Laser(l) => l.steady_guess(alpha),
        }
    }

    /// Minimized by `optimize`.
    pub fn objective(&self) -> Arc<ObjectiveFn> {
        match self {
            // largest feedback gain
            Model::Hayes(_) => Arc::new(|_, a| -a[1]),
            // closest approach to the fold
            Model::ScalarFold(_) => Arc::new(|_, a| -a[0]),
            Model::Laser(_) => Arc::new(negative_intensity),
        }
    }

    pub fn objective_description(&self) -> &'static str {
        match self {
            Model::Hayes(_) => "-b",
            Model::ScalarFold(_) => "-alpha1",
            Model::Laser(_) => "-|A|^2",
        }
    }

    pub fn default_kind(&self) -> &'static str {
        match self {
            Model::ScalarFold(_) => "fold",
            _ => "hopf",
        }
    }

    pub fn default_ray(&self) -> &'static str {
        match self {
            Model::Hayes(_) => "b",
            Model::ScalarFold(_) => "alpha1",
            Model::Laser(_) => "eta",
        }
    }

    pub fn default_plane(&self) -> [&'static str; 2] {
        match self {
            Model::Hayes(_) => ["a", "b"],
            Model::ScalarFold(_) => ["alpha1", "alpha2"],
            Model::Laser(_) => ["eta", "tau"],
        }
    }

    /// Components scaled by `simulate`'s perturbation: the optical field for
    /// the laser, every dynamic state otherwise.
    pub fn default_perturbed(&self) -> Vec<usize> {
        match self {
            Model::Laser(_) => vec![0, 1],
            _ => self.sys().dynamic_states(),
        }
    }

    /// Additive part of the perturbation; the scalar models rest at or near
    /// zero, where scaling alone does nothing.
    pub fn default_offset(&self) -> f64 {
        match self {
            Model::Laser(_) => 0.0,
            _ => 0.1,
        }
    }

    pub fn time_unit(&self) -> &'static str {
        match self {
            Model::Laser(_) => "photon lifetimes",
            _ => "model time",
        }
    }

    pub fn state_names(&self) -> Vec<String> {
        match self {
            Model::Hayes(_) | Model::ScalarFold(_) => vec!["x".into()],
            Model::Laser(l) => {
                let mut v = vec!["A_re".to_string(), "A_im".to_string()];
                v.extend((1..=l.k()).map(|i| format!("N_{i}")));
                v.push("Omega".into());
                v
            }
        }
    }

    /// Derived quantities reported next to each state.
    pub fn observables(&self, x: &[f64]) -> Vec<(&'static str, f64)> {
        match self {
            Model::Laser(_) => vec![("intensity", intensity(x))],
            _ => Vec::new(),
        }
    }
}
