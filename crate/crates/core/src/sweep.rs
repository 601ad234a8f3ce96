//! Batch simulation over a one-parameter family of initial conditions.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hybrid::{simulate_sampled, EventKind, Word};
use crate::model::{ContactMode, ModelSpec, SolverConfig, State};
use crate::parallel::{try_par_map, Execution};
use crate::zoo::Family;

/// What the swept value replaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepTarget {
    /// Configuration coordinate (zero-based).
    Position(usize),
    /// Velocity coordinate (zero-based).
    Velocity(usize),
    /// Named family of a zoo entry, e.g. `pitch`.
    Family(String),
}

/// `q3` and `v1` are one-based coordinates; anything else names a family.
impl FromStr for SweepTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let coordinate =
            |rest: &str| -> Option<usize> { rest.parse::<usize>().ok().filter(|&k| k >= 1).map(|k| k - 1) };
        if let Some(k) = s.strip_prefix('q').and_then(coordinate) {
            return Ok(SweepTarget::Position(k));
        }
        if let Some(k) = s.strip_prefix('v').and_then(coordinate) {
            return Ok(SweepTarget::Velocity(k));
        }
        if s.is_empty() {
            return Err(Error::InvalidConfig("empty sweep target".into()));
        }
        Ok(SweepTarget::Family(s.to_string()))
    }
}

impl fmt::Display for SweepTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepTarget::Position(k) => write!(f, "q{}", k + 1),
            SweepTarget::Velocity(k) => write!(f, "v{}", k + 1),
            SweepTarget::Family(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub target: SweepTarget,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::InvalidConfig(format!("sweep count must be at least 2, got {}", self.count)));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start == self.stop {
            return Err(Error::InvalidConfig("sweep range must be finite and non-empty".into()));
        }
        Ok(())
    }

    /// Evenly spaced values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                if k + 1 == self.count {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * (k as f64 / last)
                }
            })
            .collect()
    }
}

/// Mode sequence and per-event constraint sets shared by every row with the
/// same word id.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSummary {
    pub signature: String,
    pub modes: Vec<ContactMode>,
    pub events: Vec<(EventKind, ContactMode)>,
}

impl WordSummary {
    fn of(word: &Word) -> Self {
        WordSummary {
            signature: word.signature(),
            modes: word.modes.clone(),
            events: word.events.iter().map(|e| (e.kind, e.constraints)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub terminal: State,
    pub word_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Indexed by word id, in first-seen sweep order.
    pub words: Vec<WordSummary>,
}

/// Initial state for one swept value.
pub fn initial_for(target: &SweepTarget, base: &State, family: Option<&Family>, value: f64) -> Result<State> {
    let mut s = base.clone();
    match target {
        SweepTarget::Position(k) | SweepTarget::Velocity(k) if *k >= s.dof() => {
            return Err(Error::InvalidConfig(format!("sweep target {target} exceeds dimension {}", s.dof())));
        }
        SweepTarget::Position(k) => s.q[*k] = value,
        SweepTarget::Velocity(k) => s.v[*k] = value,
        SweepTarget::Family(name) => match family {
            Some(f) if f.name == name => s = f.at(value),
            _ => return Err(Error::InvalidConfig(format!("model has no initial-condition family `{name}`"))),
        },
    }
    Ok(s)
}

/// Simulate every swept initial condition to `horizon`. Rows come back in
/// sweep order whatever the execution strategy.
pub fn sweep(
    model: &dyn ModelSpec,
    base: &State,
    family: Option<&Family>,
    spec: &SweepSpec,
    horizon: f64,
    config: &SolverConfig,
    execution: Execution,
) -> Result<SweepResult> {
    spec.validate()?;
    let values = spec.values();
    let initials = values.iter().map(|&v| initial_for(&spec.target, base, family, v)).collect::<Result<Vec<_>>>()?;
    let runs = try_par_map(execution, &initials, |s| simulate_sampled(model, s, horizon, None, config))?;

    let mut words: Vec<WordSummary> = Vec::new();
    let mut rows = Vec::with_capacity(runs.len());
    for (value, traj) in values.into_iter().zip(runs) {
        let summary = WordSummary::of(&traj.word);
        let word_id = match words.iter().position(|w| w.signature == summary.signature) {
            Some(id) => id,
            None => {
                words.push(summary);
                words.len() - 1
            }
        };
        rows.push(SweepRow { value, terminal: traj.terminal, word_id });
    }
    Ok(SweepResult { rows, words })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::DecoupledPair;

    #[test]
    fn targets_parse_one_based() {
        assert_eq!("q1".parse::<SweepTarget>().unwrap(), SweepTarget::Position(0));
        assert_eq!("v12".parse::<SweepTarget>().unwrap(), SweepTarget::Velocity(11));
        assert_eq!("pitch".parse::<SweepTarget>().unwrap(), SweepTarget::Family("pitch".into()));
        assert_eq!("q0".parse::<SweepTarget>().unwrap(), SweepTarget::Family("q0".into()));
    }

    #[test]
    fn values_hit_both_ends() {
        let spec = SweepSpec { target: SweepTarget::Position(0), start: -0.1, stop: 0.1, count: 201 };
        let v = spec.values();
        assert_eq!(v.len(), 201);
        assert_eq!(v[0], -0.1);
        assert_eq!(v[200], 0.1);
        assert!(v[100].abs() < 1e-17);
    }

    #[test]
    fn short_sweeps_are_rejected() {
        let spec = SweepSpec { target: SweepTarget::Position(0), start: 0.0, stop: 1.0, count: 1 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn word_ids_follow_first_appearance() {
        let pair = DecoupledPair::default();
        let base = State::from_slices(0.0, &[1.0, 1.0], &[0.0, 0.0], ContactMode::EMPTY);
        let spec = SweepSpec { target: SweepTarget::Position(1), start: 0.9, stop: 1.1, count: 5 };
        let r = sweep(&pair, &base, None, &spec, 2.0, &SolverConfig::default(), Execution::Sequential).unwrap();
        let ids: Vec<_> = r.rows.iter().map(|row| row.word_id).collect();
        assert_eq!(ids, vec![0, 0, 1, 2, 2]);
        assert_eq!(r.words.len(), 3);
    }
}
