//! Scenario files: one TOML document naming a zoo model, an initial state,
//! a horizon, solver overrides and an optional sweep.

use std::collections::BTreeMap;
use std::path::Path;

use impactflow::zoo::{entry, ZooEntry};
use impactflow::{ContactMode, SolverConfig, State, SweepSpec, SweepTarget};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    horizon: f64,
    sample_step: Option<f64>,
    model: ModelRef,
    #[serde(default)]
    initial: InitialSpec,
    #[serde(default)]
    config: toml::Table,
    sweep: Option<SweepSection>,
    #[serde(default)]
    sensitivity: SensitivitySection,
    #[serde(default)]
    outputs: Outputs,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRef {
    name: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSpec {
    named: Option<String>,
    family: Option<f64>,
    q: Option<Vec<f64>>,
    v: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    target: String,
    start: f64,
    stop: f64,
    count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensitivitySection {
    #[serde(default = "default_fd_step")]
    fd_step: f64,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        SensitivitySection { fd_step: default_fd_step() }
    }
}

fn default_fd_step() -> f64 {
    1e-6
}

/// Output file names, relative to the `--out` directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub trajectory: String,
    pub word: String,
    pub sweep: String,
    pub words: String,
    pub sensitivity: String,
    pub check: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            trajectory: "trajectory.csv".into(),
            word: "word.json".into(),
            sweep: "sweep.csv".into(),
            words: "words.json".into(),
            sensitivity: "sensitivity.json".into(),
            check: "check.json".into(),
        }
    }
}

/// A parsed and validated scenario.
#[derive(Debug)]
pub struct Scenario {
    pub entry: ZooEntry,
    pub initial: State,
    pub horizon: f64,
    pub sample_step: Option<f64>,
    pub config: SolverConfig,
    pub sweep: Option<SweepSpec>,
    pub fd_step: f64,
    pub outputs: Outputs,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: Document = toml::from_str(text).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        if !(doc.horizon > 0.0 && doc.horizon.is_finite()) {
            return Err(CliError::Config(format!("horizon must be positive, got {}", doc.horizon)));
        }
        if let Some(step) = doc.sample_step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(CliError::Config(format!("sample_step must be positive, got {step}")));
            }
        }
        let entry = entry(&doc.model.name, &doc.model.params)?;
        let initial = resolve_initial(&entry, &doc.initial)?;
        let config = merge_config(doc.config)?;
        let sweep = match doc.sweep {
            Some(s) => {
                let spec = SweepSpec {
                    target: s.target.parse::<SweepTarget>()?,
                    start: s.start,
                    stop: s.stop,
                    count: s.count,
                };
                spec.validate()?;
                Some(spec)
            }
            None => None,
        };
        let fd_step = doc.sensitivity.fd_step;
        if !(fd_step > 0.0 && fd_step.is_finite()) {
            return Err(CliError::Config(format!("fd_step must be positive, got {fd_step}")));
        }
        Ok(Scenario {
            entry,
            initial,
            horizon: doc.horizon,
            sample_step: doc.sample_step,
            config,
            sweep,
            fd_step,
            outputs: doc.outputs,
        })
    }
}

fn resolve_initial(entry: &ZooEntry, spec: &InitialSpec) -> Result<State, CliError> {
    let explicit = spec.q.is_some() || spec.v.is_some();
    let given = usize::from(spec.named.is_some()) + usize::from(spec.family.is_some()) + usize::from(explicit);
    if given > 1 {
        return Err(CliError::Config("initial: give one of `named`, `family`, or `q` with `v`".into()));
    }
    if let Some(name) = &spec.named {
        return entry.initial_state(name).cloned().ok_or_else(|| {
            let known: Vec<_> = entry.initial.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!("{} has no initial state `{name}` (known: {})", entry.name, known.join(", ")))
        });
    }
    if let Some(value) = spec.family {
        return Ok(entry.family.at(value));
    }
    if explicit {
        let (Some(q), Some(v)) = (&spec.q, &spec.v) else {
            return Err(CliError::Config("initial: `q` and `v` must be given together".into()));
        };
        let d = entry.model.dof();
        if q.len() != d || v.len() != d {
            return Err(CliError::Config(format!(
                "initial: {} has {d} coordinates, got q: {}, v: {}",
                entry.name,
                q.len(),
                v.len()
            )));
        }
        return Ok(State::from_slices(0.0, q, v, ContactMode::EMPTY));
    }
    Ok(entry.default_initial().clone())
}

fn merge_config(overrides: toml::Table) -> Result<SolverConfig, CliError> {
    let defaults = toml::Value::try_from(SolverConfig::default()).map_err(|e| CliError::Config(e.to_string()))?;
    let toml::Value::Table(mut table) = defaults else { unreachable!("SolverConfig serializes to a table") };
    for (key, value) in overrides {
        let slot = table.get_mut(&key).ok_or_else(|| CliError::Config(format!("config: unknown setting `{key}`")))?;
        // Integers are accepted for float settings.
        *slot = match (&slot, value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, value) => value,
        };
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(format!("config: {e}")))
}
