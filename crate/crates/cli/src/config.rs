//! Run configuration: TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use qlm_core::energy::EnergyConfig;
use qlm_core::variation::Prefactor;
use qlm_core::{EmbedConfig, Error, Result, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_deserializing)]
    pub subcommand: String,
    #[serde(skip_deserializing)]
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Icosphere subdivision level for generated geometry.
    pub level: u32,
    pub prefactor: Prefactor,
    pub embed: EmbedConfig,
    pub energy: EnergyConfig,
    pub solver: SolverConfig,
    /// Worker threads for sparse factorizations and sweeps; `None` runs sequentially.
    pub threads: Option<usize>,
    /// Forces a single thread.
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: String::new(),
            inputs: Vec::new(),
            out_dir: PathBuf::from("."),
            level: 4,
            prefactor: Prefactor::Bare,
            embed: EmbedConfig::default(),
            energy: EnergyConfig::default(),
            solver: SolverConfig::default(),
            threads: None,
            deterministic: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse {
                line,
                message: format!("config: {}", e.message()),
            }
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => RunConfig::from_toml(&crate::io::read_text(p)?),
            None => Ok(RunConfig::default()),
        }
    }

    /// Checks tolerances and input paths before any computation.
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("`{name}` must be positive, got {v}")))
            }
        };
        pos("embed.tol", self.embed.tol)?;
        pos("energy.embed.tol", self.energy.embed.tol)?;
        pos("solver.tol", self.solver.tol)?;
        pos("solver.embed.tol", self.solver.embed.tol)?;
        pos("solver.gmres_tol", self.solver.gmres_tol)?;
        pos("solver.continuation_min_step", self.solver.continuation_min_step)?;
        pos("solver.kernel_threshold", self.solver.kernel_threshold)?;
        pos("solver.kernel_warning", self.solver.kernel_warning)?;
        if self.embed.curvature_margin < 0.0 {
            return Err(Error::InvalidParameter("`embed.curvature_margin` must be non-negative".into()));
        }
        if self.level > 8 {
            return Err(Error::SubdivisionOutOfRange(self.level));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("`threads` must be at least 1".into()));
        }
        for p in &self.inputs {
            if !p.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("input file {} not found", p.display()),
                )));
            }
        }
        Ok(())
    }

    pub fn effective_threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads.unwrap_or(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_nested_defaults() {
        let c = RunConfig::from_toml("level = 3\nprefactor = \"energy\"\n[solver]\ntol = 1e-8\nfd_jacobian = false\n").unwrap();
        assert_eq!(c.level, 3);
        assert_eq!(c.prefactor, Prefactor::Energy);
        assert_eq!(c.solver.tol, 1e-8);
        assert!(!c.solver.fd_jacobian);
        assert_eq!(c.solver.max_newton, SolverConfig::default().max_newton);
    }

    #[test]
    fn bad_toml_reports_line() {
        match RunConfig::from_toml("level = 3\n[solver]\ntol = \"x\"\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_tolerance_rejected() {
        let mut c = RunConfig::default();
        c.solver.tol = -1.0;
        assert!(c.validate().unwrap_err().is_input_error());
    }
}
