//! CSV and JSON records written by the CLI.
//!
//! CSV cells are `{:.16e}` (17 significant digits, no locale), rows end in
//! `\n`. JSON is pretty-printed with a trailing newline. Constraint indices
//! in JSON are one-based; `mode_bitmask` has bit `j` set when constraint
//! `j + 1` is in the mode.

use impactflow::sensitivity::{FiniteDifference, WordIndependenceReport};
use impactflow::{
    Admissibility, Comparison, ContactMode, Event, EventKind, SensitivityResult, State, SweepResult, Trajectory,
    ValidationReport,
};
use nalgebra::DMatrix;
use serde::Serialize;

pub fn number(x: f64) -> String {
    format!("{x:.16e}")
}

fn state_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("q_{i}")).chain((1..=d).map(|i| format!("v_{i}"))).collect()
}

fn state_cells(s: &State) -> impl Iterator<Item = String> + '_ {
    s.q.iter().chain(s.v.iter()).map(|&x| number(x))
}

fn write_csv(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer.write_record(&header).expect("writing to memory");
    for row in rows {
        writer.write_record(&row).expect("writing to memory");
    }
    writer.into_inner().expect("writing to memory")
}

/// `t,q_1..q_d,v_1..v_d,mode_bitmask`, one row per sample.
pub fn trajectory_csv(trajectory: &Trajectory) -> Vec<u8> {
    let d = trajectory.initial.dof();
    let header = std::iter::once("t".to_string())
        .chain(state_header(d))
        .chain(std::iter::once("mode_bitmask".to_string()))
        .collect();
    let rows = trajectory.samples.iter().map(|s| {
        std::iter::once(number(s.t)).chain(state_cells(s)).chain(std::iter::once(s.mode.bits().to_string())).collect()
    });
    write_csv(header, rows)
}

/// `value,q_1..q_d,v_1..v_d,mode_bitmask,word_id`, one row per swept value
/// in sweep order, with the terminal state.
pub fn sweep_csv(result: &SweepResult, dof: usize) -> Vec<u8> {
    let header = std::iter::once("value".to_string())
        .chain(state_header(dof))
        .chain(["mode_bitmask".to_string(), "word_id".to_string()])
        .collect();
    let rows = result.rows.iter().map(|row| {
        std::iter::once(number(row.value))
            .chain(state_cells(&row.terminal))
            .chain([row.terminal.mode.bits().to_string(), row.word_id.to_string()])
            .collect()
    });
    write_csv(header, rows)
}

pub fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("records serialize");
    out.push(b'\n');
    out
}

#[derive(Debug, Serialize)]
pub struct ModeRecord {
    pub bitmask: u64,
    pub constraints: Vec<usize>,
}

impl From<ContactMode> for ModeRecord {
    fn from(mode: ContactMode) -> Self {
        ModeRecord { bitmask: mode.bits(), constraints: one_based(mode) }
    }
}

fn one_based(mode: ContactMode) -> Vec<usize> {
    mode.iter().map(|j| j + 1).collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
pub struct StateRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub mode: ModeRecord,
}

impl From<&State> for StateRecord {
    fn from(s: &State) -> Self {
        StateRecord { t: s.t, q: s.q.iter().copied().collect(), v: s.v.iter().copied().collect(), mode: s.mode.into() }
    }
}

#[derive(Debug, Serialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
    pub constraints: Vec<usize>,
    pub released: Vec<usize>,
    pub admissible: bool,
    pub reason: Admissibility,
    pub pre: StateRecord,
    pub post: StateRecord,
}

impl From<&Event> for EventRecord {
    fn from(e: &Event) -> Self {
        EventRecord {
            t: e.t,
            kind: e.kind,
            constraints: one_based(e.constraints),
            released: one_based(e.released),
            admissible: e.admissible,
            reason: e.reason,
            pre: (&e.pre).into(),
            post: (&e.post).into(),
        }
    }
}

/// The event/word record of one simulation.
#[derive(Debug, Serialize)]
pub struct WordRecord {
    pub model: String,
    pub horizon: f64,
    pub signature: String,
    pub modes: Vec<ModeRecord>,
    /// Mode `k` is flowed on `[times[k], times[k + 1]]`.
    pub times: Vec<f64>,
    pub events: Vec<EventRecord>,
    pub initial: StateRecord,
    pub terminal: StateRecord,
}

impl WordRecord {
    pub fn new(model: &str, horizon: f64, trajectory: &Trajectory) -> Self {
        let word = &trajectory.word;
        WordRecord {
            model: model.to_string(),
            horizon,
            signature: word.signature(),
            modes: word.modes.iter().map(|&m| m.into()).collect(),
            times: word.times.clone(),
            events: word.events.iter().map(Into::into).collect(),
            initial: (&trajectory.initial).into(),
            terminal: (&trajectory.terminal).into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TransitionRecord {
    pub kind: EventKind,
    pub constraints: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct SweepWordRecord {
    pub id: usize,
    pub signature: String,
    pub modes: Vec<ModeRecord>,
    pub events: Vec<TransitionRecord>,
    /// Sweep rows carrying this word.
    pub rows: usize,
}

/// Word table of a sweep; ids match the `word_id` column of the CSV.
#[derive(Debug, Serialize)]
pub struct SweepWordsRecord {
    pub model: String,
    pub target: String,
    pub horizon: f64,
    pub words: Vec<SweepWordRecord>,
}

impl SweepWordsRecord {
    pub fn new(model: &str, target: String, horizon: f64, result: &SweepResult) -> Self {
        let words = result
            .words
            .iter()
            .enumerate()
            .map(|(id, w)| SweepWordRecord {
                id,
                signature: w.signature.clone(),
                modes: w.modes.iter().map(|&m| m.into()).collect(),
                events: w
                    .events
                    .iter()
                    .map(|&(kind, c)| TransitionRecord { kind, constraints: one_based(c) })
                    .collect(),
                rows: result.rows.iter().filter(|r| r.word_id == id).count(),
            })
            .collect();
        SweepWordsRecord { model: model.to_string(), target, horizon, words }
    }
}

#[derive(Debug, Serialize)]
pub struct IntervalRecord {
    pub mode: ModeRecord,
    pub t0: f64,
    pub t1: f64,
    pub jacobian: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct SaltationRecord {
    pub t: f64,
    pub kind: EventKind,
    pub constraints: Vec<usize>,
    pub xi: Vec<Vec<f64>>,
    pub reset_jacobian: Vec<Vec<f64>>,
    pub closed_form: Option<Vec<Vec<f64>>>,
    pub form_spread: f64,
}

#[derive(Debug, Serialize)]
pub struct FiniteDifferenceRecord {
    pub step: f64,
    pub d_phi: Vec<Vec<f64>>,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Distinct words met by the perturbed runs, nominal first.
    pub words: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct IndependenceRecord {
    pub pass: bool,
    pub max_difference: f64,
    pub simultaneous_events: usize,
    pub orderings_compared: usize,
}

/// Derivative of the terminal state with its oracle and word-independence
/// verdict. Matrices are lists of rows over `(q, v)`.
#[derive(Debug, Serialize)]
pub struct SensitivityRecord {
    pub model: String,
    pub horizon: f64,
    pub initial: StateRecord,
    pub signature: String,
    pub d_phi: Vec<Vec<f64>>,
    pub per_mode: Vec<IntervalRecord>,
    pub per_event: Vec<SaltationRecord>,
    pub finite_difference: FiniteDifferenceRecord,
    pub word_independence: IndependenceRecord,
}

impl SensitivityRecord {
    pub fn new(
        model: &str,
        horizon: f64,
        initial: &State,
        result: &SensitivityResult,
        fd: &FiniteDifference,
        step: f64,
        independence: &WordIndependenceReport,
    ) -> Self {
        let cmp = Comparison::new(&result.d_phi, &fd.d_phi);
        SensitivityRecord {
            model: model.to_string(),
            horizon,
            initial: initial.into(),
            signature: result.word.signature(),
            d_phi: rows(&result.d_phi),
            per_mode: result
                .per_mode
                .iter()
                .map(|m| IntervalRecord { mode: m.mode.into(), t0: m.t0, t1: m.t1, jacobian: rows(&m.jacobian) })
                .collect(),
            per_event: result
                .per_event
                .iter()
                .map(|s| SaltationRecord {
                    t: s.t,
                    kind: s.kind,
                    constraints: one_based(s.constraints),
                    xi: rows(&s.xi),
                    reset_jacobian: rows(&s.reset_jacobian),
                    closed_form: s.closed_form.as_ref().map(rows),
                    form_spread: s.form_spread,
                })
                .collect(),
            finite_difference: FiniteDifferenceRecord {
                step,
                d_phi: rows(&fd.d_phi),
                max_abs_error: cmp.max_abs,
                max_rel_error: cmp.max_rel,
                words: fd.words.words.clone(),
            },
            word_independence: IndependenceRecord {
                pass: independence.pass,
                max_difference: independence.max_difference,
                simultaneous_events: independence.simultaneous_events,
                orderings_compared: independence.orderings_compared,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CheckRecord<'a> {
    pub model: String,
    pub pass: bool,
    pub declared_decoupled: bool,
    pub decoupled: bool,
    #[serde(flatten)]
    pub report: &'a ValidationReport,
}
