//! Run configuration: one TOML file per run plus dot-path overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{ArchitectureConfig, BenchmarkCase, CaseId, CaseParams, RunSettings, SamplingCounts, Seeds};
use crate::diagnostics::DEFAULT_BINS;
use crate::geometry::MaskPreset;
use crate::mhd::Formulation;
use crate::parallel::ExecMode;
use crate::training::{LossWeights, Schedule};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("override `{expr}`: {msg}")]
    Override { expr: String, msg: String },
    #[error("`{key}`: {msg}")]
    Constraint { key: &'static str, msg: String },
}

fn bad(key: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Constraint { key, msg: msg.into() }
}

/// Unset counts take the benchmark's defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub interior: Option<usize>,
    pub boundary_per_face: Option<usize>,
    pub initial: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub mask: MaskPreset,
    /// Noise amplitude relative to the standard deviation of the clean
    /// targets on noisy rows.
    pub noise_ratio: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            mask: MaskPreset::Standard,
            noise_ratio: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Grid points per axis; 101 in 2D and 51 in 3D when unset.
    pub resolution: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Write per-term gradient histograms at the final parameters.
    pub histograms: bool,
    pub bins: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            histograms: true,
            bins: DEFAULT_BINS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub benchmark: CaseId,
    /// Benchmark default when unset.
    pub formulation: Option<Formulation>,
    /// Appended to the run directory name.
    pub label: Option<String>,
    /// Output root; `MHD_PINN_OUTPUT` or `runs` when unset.
    pub output_dir: Option<PathBuf>,
    pub execution: ExecMode,
    pub physics: CaseParams,
    pub architecture: ArchitectureConfig,
    pub sampling: SamplingConfig,
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub boundary: BoundaryConfig,
    pub seeds: Seeds,
    pub evaluation: EvaluationConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: CaseId::Steady2d,
            formulation: None,
            label: None,
            output_dir: None,
            execution: ExecMode::default(),
            physics: CaseParams::default(),
            architecture: ArchitectureConfig::default(),
            sampling: SamplingConfig::default(),
            weights: LossWeights::default(),
            schedule: Schedule::default(),
            boundary: BoundaryConfig::default(),
            seeds: Seeds::default(),
            evaluation: EvaluationConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

/// Parses, applies `key.path=value` overrides in order, then validates.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.resolve()?;
    Ok(cfg)
}

pub fn apply_override(table: &mut toml::Table, expr: &str) -> Result<(), ConfigError> {
    let err = |msg: &str| ConfigError::Override {
        expr: expr.to_string(),
        msg: msg.to_string(),
    };
    let (path, raw) = expr.split_once('=').ok_or_else(|| err("expected key.path=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(err("empty key segment"));
    }
    // bare words are taken as strings
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| err(&format!("`{k}` is not a section")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Builds the case and the run settings, checking every constraint.
    pub fn resolve(&self) -> Result<(BenchmarkCase, RunSettings), ConfigError> {
        let case = BenchmarkCase::with_params(self.benchmark, &self.physics).map_err(|m| bad("physics", m))?;
        let formulation = self.formulation.unwrap_or(case.formulation);
        for k in case.face_kinds.iter().flatten() {
            k.check(formulation).map_err(|m| bad("formulation", m))?;
        }
        self.architecture.validate().map_err(|m| bad("architecture", m))?;
        let s = &self.sampling;
        let counts = SamplingCounts::new(
            s.interior.unwrap_or(case.counts.interior),
            s.boundary_per_face.unwrap_or(case.counts.boundary_per_face),
            s.initial.unwrap_or(case.counts.initial),
        );
        if counts.interior == 0 {
            return Err(bad("sampling.interior", "must be at least 1"));
        }
        if counts.boundary_per_face == 0 && self.weights.boundary > 0.0 {
            return Err(bad("sampling.boundary_per_face", "must be at least 1 while the boundary weight is positive"));
        }
        if case.unsteady() && counts.initial == 0 && self.weights.initial > 0.0 {
            return Err(bad("sampling.initial", "must be at least 1 for unsteady cases while the initial weight is positive"));
        }
        self.weights.validate().map_err(|m| bad("weights", m))?;
        self.schedule.validate().map_err(|m| bad("schedule", m))?;
        if !(self.boundary.noise_ratio.is_finite() && self.boundary.noise_ratio >= 0.0) {
            return Err(bad("boundary.noise_ratio", "must be finite and nonnegative"));
        }
        let mut settings = RunSettings::for_case(&case);
        if let Some(r) = self.evaluation.resolution {
            if r < 2 {
                return Err(bad("evaluation.resolution", "must be at least 2"));
            }
            settings.resolution = r;
        }
        if self.diagnostics.bins < 2 || !self.diagnostics.bins.is_multiple_of(2) {
            return Err(bad("diagnostics.bins", "must be even and at least 2"));
        }
        settings.formulation = formulation;
        settings.architecture = self.architecture.clone();
        settings.architecture.width = Some(self.architecture.width.unwrap_or(case.subnet_width));
        settings.counts = counts;
        settings.weights = self.weights.clone();
        settings.schedule = self.schedule.clone();
        settings.mask = self.boundary.mask;
        settings.noise_ratio = self.boundary.noise_ratio;
        settings.seeds = self.seeds;
        settings.mode = self.execution;
        Ok((case, settings))
    }

    /// The same configuration with every defaulted value written out.
    pub fn resolved(&self) -> Result<RunConfig, ConfigError> {
        let (case, s) = self.resolve()?;
        let mut c = self.clone();
        c.formulation = Some(s.formulation);
        c.architecture = s.architecture.clone();
        c.sampling = SamplingConfig {
            interior: Some(s.counts.interior),
            boundary_per_face: Some(s.counts.boundary_per_face),
            initial: Some(s.counts.initial),
        };
        c.physics = CaseParams {
            re: Some(case.phys.re),
            rm: Some(case.phys.rm),
            s: (case.id == CaseId::Hartmann).then_some(case.phys.s),
            g: (case.id == CaseId::Hartmann).then_some(case.phys.g),
        };
        c.evaluation.resolution = Some(s.resolution);
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_documented_defaults() {
        let c = parse_config("", &[]).unwrap();
        let (case, s) = c.resolve().unwrap();
        assert_eq!(case.id, CaseId::Steady2d);
        assert_eq!(s.formulation, Formulation::A2);
        assert_eq!(s.architecture.subnets, 4);
        assert_eq!(s.architecture.sigma_step, 0.1);
        assert_eq!(s.architecture.layers, 4);
        assert_eq!(s.architecture.width, Some(50));
        assert_eq!(s.counts.interior, 2500);
        assert_eq!(s.counts.boundary_per_face * case.domain.face_count(), 400);
        assert_eq!(s.weights.boundary, 100.0);
        assert_eq!(s.schedule.n_adam, 30000);
    }

    #[test]
    fn unknown_formulation_lists_allowed_values() {
        let e = parse_config("formulation = \"A3\"", &[]).unwrap_err().to_string();
        assert!(e.contains("A3") && e.contains("A1") && e.contains("A2"), "{e}");
    }

    #[test]
    fn zero_subnets_rejected() {
        let e = parse_config("[architecture]\nsubnets = 0", &[]).unwrap_err();
        assert!(matches!(e, ConfigError::Constraint { key: "architecture", .. }), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("benchmrk = \"steady2d\"", &[]).is_err());
        assert!(parse_config("[schedule]\nn_adamm = 3", &[]).is_err());
    }

    #[test]
    fn overrides_apply_in_order() {
        let o = vec![
            "schedule.n_adam=10".to_string(),
            "benchmark=hartmann".to_string(),
            "physics.re = 20".to_string(),
            "schedule.n_adam=12".to_string(),
        ];
        let c = parse_config("[schedule]\nlr = 0.01", &o).unwrap();
        assert_eq!(c.schedule.n_adam, 12);
        assert_eq!(c.schedule.lr, 0.01);
        assert_eq!(c.benchmark, CaseId::Hartmann);
        assert_eq!(c.physics.re, Some(20.0));
        assert!(parse_config("", &["schedule".to_string()]).is_err());
        assert!(parse_config("", &["schedule.lr.x=1".to_string()]).is_err());
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let c = parse_config("benchmark = \"unsteady3d\"", &[]).unwrap().resolved().unwrap();
        let again = parse_config(&c.to_toml(), &[]).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.sampling.boundary_per_face, Some(67));
    }

    #[test]
    fn constraint_errors_name_the_key() {
        let e = parse_config("[schedule]\nlr = -1.0", &[]).unwrap_err().to_string();
        assert!(e.contains("schedule"), "{e}");
        let e = parse_config("[boundary]\nnoise_ratio = -0.5", &[]).unwrap_err().to_string();
        assert!(e.contains("boundary.noise_ratio"), "{e}");
    }
}
