use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use urbanforge::ingest::{default_tolerance, Hsv, DEFAULT_MIN_AREA};
use urbanforge::metrics::{EssentialServiceSet, ResidentWeighting};
use urbanforge::model::{DemographicKind, DemographicRole, LandUseType, Rgb};
use urbanforge::{GaConfig, IntegrationPolicy, Real, ScaleConfig};

use crate::CliError;

/// Which regional planner answers in Stage 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Heuristic,
    Remote,
}

/// What to do when the remote planner cannot be reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OnLlmError {
    #[default]
    Fail,
    Heuristic,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskPaths {
    pub industrial: Option<PathBuf>,
    pub educational: Option<PathBuf>,
    pub commercial: Option<PathBuf>,
    pub residential: Option<PathBuf>,
}

impl MaskPaths {
    pub fn get(&self, kind: DemographicKind) -> Option<&PathBuf> {
        match kind {
            DemographicKind::Industrial => self.industrial.as_ref(),
            DemographicKind::Educational => self.educational.as_ref(),
            DemographicKind::Commercial => self.commercial.as_ref(),
            DemographicKind::Residential => self.residential.as_ref(),
        }
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 4] {
        [
            &mut self.industrial,
            &mut self.educational,
            &mut self.commercial,
            &mut self.residential,
        ]
    }

    pub fn count(&self) -> usize {
        DemographicKind::ALL.iter().filter(|k| self.get(**k).is_some()).count()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub min_area: u64,
    /// Hue (degrees), saturation and value tolerance around each legend color.
    pub hsv_tolerance: [Real; 3],
    /// Replacement colors for legend entries.
    pub legend: BTreeMap<LandUseType, Rgb>,
}

impl Default for IngestSettings {
    fn default() -> Self {
        let t: Hsv<Real> = default_tolerance();
        IngestSettings {
            min_area: DEFAULT_MIN_AREA,
            hsv_tolerance: [t.h, t.s, t.v],
            legend: BTreeMap::new(),
        }
    }
}

impl IngestSettings {
    pub fn tolerance(&self) -> Hsv<Real> {
        Hsv {
            h: self.hsv_tolerance[0],
            s: self.hsv_tolerance[1],
            v: self.hsv_tolerance[2],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Roles competing for slots, in round-robin order.
    pub players: Vec<LandUseType>,
    /// Per-role move limits. Roles not listed keep their current count.
    pub move_limits: BTreeMap<LandUseType, usize>,
    pub ga: GaConfig,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            players: LandUseType::DEFAULT_PLAYERS.to_vec(),
            move_limits: BTreeMap::new(),
            ga: GaConfig::default(),
        }
    }
}

impl SolverSettings {
    pub fn limits(&self) -> Vec<(LandUseType, usize)> {
        self.move_limits.iter().map(|(t, l)| (*t, *l)).collect()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub services: Option<Vec<LandUseType>>,
    pub weighting: ResidentWeighting,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanningSettings {
    pub backend: Backend,
    pub retries: usize,
    pub timeout_secs: u64,
    pub rounds: usize,
    pub on_llm_error: OnLlmError,
    pub policy: IntegrationPolicy,
    /// Replacement need lists per demographic role.
    pub demographics: BTreeMap<DemographicKind, Vec<LandUseType>>,
}

impl Default for PlanningSettings {
    fn default() -> Self {
        PlanningSettings {
            backend: Backend::Heuristic,
            retries: 2,
            timeout_secs: 60,
            rounds: 1,
            on_llm_error: OnLlmError::Fail,
            policy: IntegrationPolicy::default(),
            demographics: BTreeMap::new(),
        }
    }
}

/// Everything one pipeline run needs. Loaded from TOML; relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub map: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub masks: MaskPaths,
    pub scale: ScaleConfig,
    pub ingest: IngestSettings,
    pub solver: SolverSettings,
    pub metrics: MetricsSettings,
    pub planning: PlanningSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            map: None,
            out_dir: PathBuf::from("out"),
            masks: MaskPaths::default(),
            scale: ScaleConfig::default(),
            ingest: IngestSettings::default(),
            solver: SolverSettings::default(),
            metrics: MetricsSettings::default(),
            planning: PlanningSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("invalid config: {e}")))
    }

    /// Parses, resolves paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = self.map.as_mut() {
            join(m);
        }
        join(&mut self.out_dir);
        for m in self.masks.paths_mut().into_iter().flatten() {
            join(m);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Input(m));
        if let Some(map) = &self.map {
            if !map.exists() {
                return bad(format!("map {} does not exist", map.display()));
            }
        }
        for kind in DemographicKind::ALL {
            if let Some(p) = self.masks.get(kind) {
                if !p.exists() {
                    return bad(format!("{kind} mask {} does not exist", p.display()));
                }
            }
        }
        if self.ingest.min_area < 1 {
            return bad("ingest.min_area must be at least 1".into());
        }
        if self.ingest.hsv_tolerance.iter().any(|t| *t < 0.0) {
            return bad("ingest.hsv_tolerance entries must be non-negative".into());
        }
        self.scale.validate().map_err(|e| CliError::Input(e.to_string()))?;
        self.solver.ga.validate().map_err(|e| CliError::Input(e.to_string()))?;
        if self.solver.players.is_empty() {
            return bad("solver.players must not be empty".into());
        }
        if let Some(p) = self.solver.players.iter().find(|p| !p.is_legend() || **p == LandUseType::Residential) {
            return bad(format!("{p} cannot be a solver player"));
        }
        self.services()?;
        self.demographic_roles()?;
        self.planning.policy.validate().map_err(CliError::Input)?;
        if self.planning.rounds < 1 {
            return bad("planning.rounds must be at least 1".into());
        }
        Ok(())
    }

    pub fn services(&self) -> Result<EssentialServiceSet, CliError> {
        match &self.metrics.services {
            None => Ok(EssentialServiceSet::default()),
            Some(v) => EssentialServiceSet::new(v.clone()).map_err(|e| CliError::Input(e.to_string())),
        }
    }

    /// Demographic roles in processing order, with config overrides applied.
    pub fn demographic_roles(&self) -> Result<Vec<DemographicRole>, CliError> {
        DemographicKind::ALL
            .iter()
            .map(|k| match self.planning.demographics.get(k) {
                Some(needs) => DemographicRole::new(*k, needs.clone()).map_err(|e| CliError::Input(e.to_string())),
                None => Ok(DemographicRole::default_for(*k)),
            })
            .collect()
    }

    pub fn require_map(&self) -> Result<&Path, CliError> {
        self.map
            .as_deref()
            .ok_or_else(|| CliError::Input("no map image configured".into()))
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}
