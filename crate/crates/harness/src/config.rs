//! Run configuration, read from TOML. Every option has a default and the CLI
//! can override the common ones. Judge credentials come only from
//! environment variables named in the file, never from the file itself.
//!
//! ```toml
//! tau = 0.5
//! parallelism = 4
//!
//! [paths]
//! root = "data"
//! split = "valid"
//! out = "out"
//!
//! [scheduler]
//! t_target = 100
//! n_clips = 10
//!
//! [gate]
//! enabled = true
//! consensus = "unanimous"   # unanimous | majority | single
//! fail_open = true
//! max_frames = 32
//! timeout_ms = 60000
//!
//! [[gate.judges]]
//! kind = "mock"
//! id = "judge-a"
//! fixture = "judge_fixture.json"   # relative to <root>/<split>
//!
//! [[gate.judges]]
//! kind = "http"
//! id = "judge-b"
//! url = "http://localhost:8001/judge"
//! api_key_env = "JUDGE_B_API_KEY"
//!
//! [backend]
//! kind = "oracle"   # oracle | forced_mapping | zero | http
//!
//! [metrics]
//! boundary_tolerance = 1   # omit for the diagonal-relative default
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use rvos_core::gate::{Consensus, GatePolicy, DEFAULT_PROMPT_TEMPLATE};
use rvos_core::scheduler::SchedulerConfig;
use rvos_core::DEFAULT_TAU;

use crate::backend::{ForcedMappingBackend, HttpBackend, OracleBackend, SegmentationBackend, ZeroBackend};
use crate::dataset::{DatasetManifest, GroundTruth};
use crate::error::{HarnessError, Result};
use crate::judge::{GateSettings, HttpJudge, Judge, MockJudge, JUDGE_FIXTURE_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scheduler: SchedulerConfig,
    pub gate: GateConfig,
    pub backend: BackendSpec,
    pub tau: f32,
    /// Expressions processed at once.
    pub parallelism: usize,
    pub paths: PathsConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheduler: SchedulerConfig::default(),
            gate: GateConfig::default(),
            backend: BackendSpec::default(),
            tau: DEFAULT_TAU,
            parallelism: 4,
            paths: PathsConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub root: PathBuf,
    pub split: String,
    pub out: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            split: "valid".into(),
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub boundary_tolerance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub enabled: bool,
    pub judges: Vec<JudgeSpec>,
    pub consensus: Consensus,
    pub fail_open: bool,
    pub max_frames: usize,
    pub timeout_ms: u64,
    /// Lets `unanimous` run with one judge. A single judge can then never
    /// produce a null target.
    pub allow_single_judge: bool,
    pub prompt_template: String,
}

impl Default for GateConfig {
    fn default() -> Self {
        let mock = |id: &str| JudgeSpec::Mock {
            id: id.into(),
            fixture: Some(PathBuf::from(JUDGE_FIXTURE_FILE)),
        };
        Self {
            enabled: true,
            judges: vec![mock("judge-a"), mock("judge-b")],
            consensus: Consensus::Unanimous,
            fail_open: true,
            max_frames: 32,
            timeout_ms: 60_000,
            allow_single_judge: false,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
        }
    }
}

impl GateConfig {
    pub fn settings(&self) -> GateSettings {
        GateSettings {
            policy: GatePolicy {
                consensus: self.consensus,
                fail_open: self.fail_open,
            },
            max_frames: self.max_frames,
            timeout: Duration::from_millis(self.timeout_ms),
            prompt_template: self.prompt_template.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JudgeSpec {
    /// Scripted verdicts from a fixture file. Without a fixture the judge
    /// answers from the manifest's ground-truth labels.
    Mock { id: String, fixture: Option<PathBuf> },
    Http {
        id: String,
        url: String,
        api_key_env: Option<String>,
    },
}

impl JudgeSpec {
    pub fn id(&self) -> &str {
        match self {
            JudgeSpec::Mock { id, .. } | JudgeSpec::Http { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Ground-truth masks; needs annotations.
    #[default]
    Oracle,
    ForcedMapping,
    Zero,
    Http {
        url: String,
        #[serde(default = "default_backend_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_backend_timeout_ms() -> u64 {
    120_000
}

impl std::str::FromStr for BackendSpec {
    type Err = String;

    /// `oracle`, `forced_mapping`, `zero` or `http=<url>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "oracle" => Ok(Self::Oracle),
            "forced_mapping" | "forced-mapping" => Ok(Self::ForcedMapping),
            "zero" => Ok(Self::Zero),
            other => match other.strip_prefix("http=") {
                Some(url) if !url.is_empty() => Ok(Self::Http {
                    url: url.into(),
                    timeout_ms: default_backend_timeout_ms(),
                }),
                _ => Err(format!(
                    "unknown backend '{other}' (expected oracle, forced_mapping, zero or http=<url>)"
                )),
            },
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.scheduler
            .validate()
            .map_err(|e| HarnessError::Config(format!("scheduler: {e}")))?;
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.gate.enabled {
            let g = &self.gate;
            if g.judges.is_empty() {
                return bad("the gate is enabled but no judges are configured".into());
            }
            if g.consensus == Consensus::Unanimous && g.judges.len() < 2 && !g.allow_single_judge {
                return bad(
                    "unanimous consensus needs at least two judges (set gate.allow_single_judge or use consensus = \"single\")"
                        .into(),
                );
            }
            if g.max_frames == 0 {
                return bad("gate.max_frames must be at least 1".into());
            }
            if g.timeout_ms == 0 {
                return bad("gate.timeout_ms must be at least 1".into());
            }
            if !g.prompt_template.contains("{expression}") {
                return bad("gate.prompt_template must contain {expression}".into());
            }
            let mut ids: Vec<&str> = g.judges.iter().map(JudgeSpec::id).collect();
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return bad(format!("duplicate judge id '{}'", w[0]));
            }
        }
        Ok(())
    }
}

/// Judges and backend instantiated from a config.
#[derive(Clone)]
pub struct Services {
    pub judges: Vec<Arc<dyn Judge>>,
    pub backend: Arc<dyn SegmentationBackend>,
}

impl std::fmt::Debug for Services {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Services")
            .field("judges", &self.judges.iter().map(|j| j.id()).collect::<Vec<_>>())
            .field("backend", &self.backend.name())
            .finish()
    }
}

pub fn build_judges(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<Vec<Arc<dyn Judge>>> {
    if !cfg.gate.enabled {
        return Ok(Vec::new());
    }
    cfg.gate
        .judges
        .iter()
        .map(|spec| -> Result<Arc<dyn Judge>> {
            Ok(match spec {
                JudgeSpec::Mock { id, fixture: Some(path) } => {
                    let path = if path.is_absolute() {
                        path.clone()
                    } else {
                        manifest.split_dir().join(path)
                    };
                    Arc::new(MockJudge::from_file(id.as_str(), &path)?)
                }
                JudgeSpec::Mock { id, fixture: None } => Arc::new(MockJudge::oracle(id.as_str(), manifest)),
                JudgeSpec::Http { id, url, api_key_env } => {
                    let key = match api_key_env {
                        Some(var) => Some(std::env::var(var).map_err(|_| {
                            HarnessError::Config(format!("judge '{id}': environment variable {var} is not set"))
                        })?),
                        None => None,
                    };
                    Arc::new(HttpJudge::new(
                        id.as_str(),
                        url.as_str(),
                        key,
                        Duration::from_millis(cfg.gate.timeout_ms),
                    ))
                }
            })
        })
        .collect()
}

pub fn build_backend(spec: &BackendSpec, manifest: &DatasetManifest) -> Result<Arc<dyn SegmentationBackend>> {
    Ok(match spec {
        BackendSpec::Oracle => Arc::new(OracleBackend::new(Arc::new(GroundTruth::load(manifest)?))),
        BackendSpec::ForcedMapping => Arc::new(ForcedMappingBackend),
        BackendSpec::Zero => Arc::new(ZeroBackend),
        BackendSpec::Http { url, timeout_ms } => {
            Arc::new(HttpBackend::new(url.as_str(), Duration::from_millis(*timeout_ms)))
        }
    })
}

pub fn build_services(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<Services> {
    cfg.validate()?;
    Ok(Services {
        judges: build_judges(cfg, manifest)?,
        backend: build_backend(&cfg.backend, manifest)?,
    })
}
