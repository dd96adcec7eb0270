//! Run configuration (TOML). Unknown keys are rejected.

use crate::cook::CookConfig;
use crate::CliError;
use qclat_core::fracture::{FractureCase, ThroughThicknessCase};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    Cook,
    Fracture,
    ThroughThickness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    /// Output subdirectory; defaults to the config file stem.
    #[serde(default)]
    pub name: Option<String>,
    /// Recorded in the summary; all runs are deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cook: Option<CookConfig>,
    #[serde(default)]
    pub fracture: Option<FractureCase>,
    #[serde(default)]
    pub through_thickness: Option<ThroughThicknessCase>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    /// Write VTK fields (can be large).
    #[serde(default = "yes")]
    pub vtk: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Relative densities (fracture).
    pub densities: Vec<f64>,
    /// Plate thicknesses in unit cells (through-thickness).
    pub thicknesses: Vec<i64>,
    /// Coarse mesh spacings (Cook).
    pub spacings: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub spacings: Vec<i64>,
    /// Refuse fully resolved references larger than this many unit cells.
    pub max_reference_cells: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { spacings: vec![4, 6, 8, 12, 16], max_reference_cells: 50_000 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let present = [self.cook.is_some(), self.fracture.is_some(), self.through_thickness.is_some()];
        let wanted = match self.benchmark {
            Benchmark::Cook => 0,
            Benchmark::Fracture => 1,
            Benchmark::ThroughThickness => 2,
        };
        if present.iter().enumerate().any(|(i, &p)| p && i != wanted) {
            return Err(CliError::Config("configuration has a section for a different benchmark".into()));
        }
        if let Some(s) = &self.sweep {
            if s.densities.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
                return Err(CliError::Config("sweep densities must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn cook(&self) -> CookConfig {
        self.cook.clone().unwrap_or_default()
    }

    pub fn fracture(&self) -> FractureCase {
        self.fracture.clone().unwrap_or_default()
    }

    pub fn through_thickness(&self) -> ThroughThicknessCase {
        self.through_thickness.clone().unwrap_or_default()
    }

    /// `root/name`, with the root taken from `QCLAT_OUTPUT_ROOT` (default `.`).
    pub fn output_dir(&self, root: Option<&Path>) -> PathBuf {
        let root = root
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(crate::OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        root.join(self.name.as_deref().unwrap_or("qclat-run"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_errors() {
        assert!(RunConfig::parse("benchmark = \"cook\"\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("benchmark = \"cook\"\n[cook]\nsizee = 3\n").is_err());
        assert!(RunConfig::parse("benchmark = \"fracture\"\n[fracture]\nradius = 32\nfoo = 1\n").is_err());
    }

    #[test]
    fn minimal_configs_parse() {
        let c = RunConfig::parse("benchmark = \"fracture\"\n[fracture]\ntopology = \"hexagonal\"\n").unwrap();
        assert_eq!(c.fracture().topology, "hexagonal");
        assert_eq!(c.fracture().radius, FractureCase::default().radius);
        let c = RunConfig::parse("benchmark = \"through-thickness\"\n").unwrap();
        assert_eq!(c.through_thickness().thickness, 3);
    }

    #[test]
    fn mismatched_section_is_rejected() {
        assert!(RunConfig::parse("benchmark = \"cook\"\n[fracture]\n").is_err());
    }
}
