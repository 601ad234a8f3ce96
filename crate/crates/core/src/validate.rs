//! Runtime checks of a model's structural assumptions at probe states:
//! symmetric positive-definite mass, consistent constraint gradients,
//! non-negative restitution, and the three clauses of limb decoupling.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::model::{ModelSpec, State, MODEL_FD_STEP};
use crate::numdiff;
use crate::zoo::ZooEntry;

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
/// Bound on how much a quantity may change when coordinates it must not
/// depend on are moved.
pub const PROBE_TOLERANCE: f64 = 1e-12;

/// Relative size of the coordinate offsets used by independence probes.
const PROBE_OFFSET: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Worst violation measured; zero when exact.
    pub worst: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, worst: f64, tolerance: f64, detail: String) -> Self {
        Check { name: name.to_string(), pass: worst <= tolerance, worst, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecouplingReport {
    pub pass: bool,
    pub partition: Check,
    /// Block-diagonal inertia, each block depending on its own coordinates.
    pub clause1: Check,
    /// Constraint, restitution and limb effort depend only on their limb
    /// (and the body, for the effort).
    pub clause2: Check,
    /// Body effort additive over limbs.
    pub clause3: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Present when the model declares a body/limb partition.
    pub decoupling: Option<DecouplingReport>,
}

impl ValidationReport {
    /// Basic checks pass, and the declared decoupling (if any) holds.
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.decoupling.as_ref().is_none_or(|d| d.pass)
    }

    pub fn decoupled(&self) -> bool {
        self.decoupling.as_ref().is_some_and(|d| d.pass)
    }
}

/// Probe states for an entry: its canonical states, each also moved by a
/// fixed deterministic offset.
pub fn probe_states(entry: &ZooEntry) -> Vec<State> {
    let mut probes = Vec::new();
    for (_, s) in &entry.initial {
        probes.push(s.clone());
        let mut moved = s.clone();
        for i in 0..moved.dof() {
            moved.q[i] += 0.013 * (i + 1) as f64;
            moved.v[i] -= 0.021 * (i + 1) as f64;
        }
        probes.push(moved);
    }
    probes
}

pub fn validate_entry(entry: &ZooEntry) -> ValidationReport {
    validate_model(entry.model.as_ref(), &probe_states(entry))
}

pub fn validate_model(model: &dyn ModelSpec, probes: &[State]) -> ValidationReport {
    let mut symmetry = 0.0f64;
    let mut definite = true;
    let mut gradient = 0.0f64;
    let mut lowest_restitution = f64::INFINITY;
    for s in probes {
        let m = model.mass(&s.q);
        symmetry = symmetry.max((&m - m.transpose()).amax());
        definite &= m.clone().cholesky().is_some();
        for j in 0..model.constraint_count() {
            let given = model.constraint_gradient(j, &s.q);
            let fd = numdiff::gradient(|x| model.constraint(j, x), &s.q, MODEL_FD_STEP);
            for k in 0..given.len() {
                gradient = gradient.max((given[k] - fd[k]).abs() / (1.0 + fd[k].abs()));
            }
            lowest_restitution = lowest_restitution.min(model.restitution(j, &s.q, &s.v));
        }
    }
    let checks = vec![
        Check::new("mass symmetric", symmetry, SYMMETRY_TOLERANCE, format!("max |M - M^T| = {symmetry:e}")),
        Check::new(
            "mass positive-definite",
            if definite { 0.0 } else { 1.0 },
            0.0,
            if definite { "Cholesky succeeded at every probe".into() } else { "Cholesky failed".into() },
        ),
        Check::new(
            "constraint gradients",
            gradient,
            GRADIENT_TOLERANCE,
            format!("max mixed error against central differences = {gradient:e}"),
        ),
        Check::new(
            "restitution non-negative",
            (-lowest_restitution).max(0.0),
            0.0,
            if lowest_restitution.is_finite() {
                format!("min restitution = {lowest_restitution:e}")
            } else {
                "no constraints".into()
            },
        ),
    ];
    ValidationReport { checks, decoupling: validate_decoupling(model, probes) }
}

/// Move every coordinate in `coords` (of `q` and of `v`) by a fixed offset.
fn shift(s: &State, coords: &[usize], velocities: bool) -> State {
    let mut out = s.clone();
    for &c in coords {
        out.q[c] += PROBE_OFFSET * (1.0 + s.q[c].abs());
        if velocities {
            out.v[c] += PROBE_OFFSET * (1.0 + s.v[c].abs());
        }
    }
    out
}

fn change(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs())
}

fn rows(v: &DVector<f64>, idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| change(*x, *y)).fold(0.0, f64::max)
}

fn block(m: &DMatrix<f64>, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&r| idx.iter().map(move |&c| m[(r, c)])).collect()
}

fn validate_decoupling(model: &dyn ModelSpec, probes: &[State]) -> Option<DecouplingReport> {
    let decl = model.decoupling()?;
    let d = model.dof();
    let n = model.constraint_count();
    let owner = decl.block_of(d);
    let partition_ok = owner.is_some() && decl.limbs.len() == n;
    let partition = Check::new(
        "partition",
        if partition_ok { 0.0 } else { 1.0 },
        0.0,
        if partition_ok {
            format!("body {:?}, limbs {:?}", decl.body, decl.limbs)
        } else {
            "blocks overlap, miss a coordinate, or do not match the constraints".into()
        },
    );
    let Some(owner) = owner.filter(|_| partition_ok) else {
        let skipped = |name: &str| Check::new(name, f64::INFINITY, 0.0, "not evaluated: invalid partition".into());
        return Some(DecouplingReport {
            pass: false,
            partition,
            clause1: skipped("block-diagonal inertia"),
            clause2: skipped("limb-local constraints, restitution and effort"),
            clause3: skipped("additive body effort"),
        });
    };
    let blocks: Vec<&Vec<usize>> = std::iter::once(&decl.body).chain(decl.limbs.iter()).collect();
    let outside = |allowed: &[usize]| -> Vec<usize> { (0..d).filter(|c| !allowed.contains(c)).collect() };

    // Clause 1.
    let mut off_block = 0.0f64;
    let mut block_dependence = 0.0f64;
    for s in probes {
        let m = model.mass(&s.q);
        for r in 0..d {
            for c in 0..d {
                if owner[r] != owner[c] {
                    off_block = off_block.max(m[(r, c)].abs());
                }
            }
        }
        for b in &blocks {
            let moved = model.mass(&shift(s, &outside(b), false).q);
            block_dependence = block_dependence.max(max_change(&block(&m, b), &block(&moved, b)));
        }
    }
    let clause1 = Check::new(
        "block-diagonal inertia",
        off_block.max(block_dependence),
        if off_block == 0.0 { PROBE_TOLERANCE } else { 0.0 },
        format!(
            "max off-block entry = {off_block:e}, max block change under foreign coordinates = {block_dependence:e}"
        ),
    );

    // Clause 2.
    let mut constraint_dep = 0.0f64;
    let mut restitution_dep = 0.0f64;
    let mut effort_dep = 0.0f64;
    for s in probes {
        let f = model.effort(&s.q, &s.v);
        for (j, limb) in decl.limbs.iter().enumerate() {
            let moved = shift(s, &outside(limb), true);
            constraint_dep = constraint_dep.max(change(model.constraint(j, &s.q), model.constraint(j, &moved.q)));
            restitution_dep =
                restitution_dep.max(change(model.restitution(j, &s.q, &s.v), model.restitution(j, &moved.q, &moved.v)));
            let mut own = limb.clone();
            own.extend(&decl.body);
            let moved = shift(s, &outside(&own), true);
            let g = model.effort(&moved.q, &moved.v);
            effort_dep = effort_dep.max(max_change(&rows(&f, limb), &rows(&g, limb)));
        }
    }
    let clause2 = Check::new(
        "limb-local constraints, restitution and effort",
        constraint_dep.max(restitution_dep).max(effort_dep),
        PROBE_TOLERANCE,
        format!(
            "max change under foreign coordinates: constraint {constraint_dep:e}, restitution {restitution_dep:e}, limb effort {effort_dep:e}"
        ),
    );

    // Clause 3: mixed differences of the body effort over pairs of limbs.
    let mut additivity = 0.0f64;
    for s in probes {
        for i in 0..decl.limbs.len() {
            for j in i + 1..decl.limbs.len() {
                let base = model.effort(&s.q, &s.v);
                let si = shift(s, &decl.limbs[i], true);
                let sj = shift(s, &decl.limbs[j], true);
                let sij = shift(&si, &decl.limbs[j], true);
                let fi = model.effort(&si.q, &si.v);
                let fj = model.effort(&sj.q, &sj.v);
                let fij = model.effort(&sij.q, &sij.v);
                for &b in &decl.body {
                    let mixed = base[b] - fi[b] - fj[b] + fij[b];
                    let scale = 1.0 + base[b].abs().max(fi[b].abs()).max(fj[b].abs()).max(fij[b].abs());
                    additivity = additivity.max(mixed.abs() / scale);
                }
            }
        }
    }
    let clause3 = Check::new(
        "additive body effort",
        additivity,
        PROBE_TOLERANCE,
        format!("max mixed limb-pair difference of body effort = {additivity:e}"),
    );

    let pass = partition.pass && clause1.pass && clause2.pass && clause3.pass;
    Some(DecouplingReport { pass, partition, clause1, clause2, clause3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{self, entry};
    use std::collections::BTreeMap;

    #[test]
    fn first_four_entries_are_decoupled() {
        for e in zoo::zoo() {
            let report = validate_entry(&e);
            assert!(report.checks.iter().all(|c| c.pass), "{}: {:?}", e.name, report.checks);
            assert_eq!(report.decoupled(), e.decoupled, "{}: {:?}", e.name, report.decoupling);
        }
    }

    #[test]
    fn rigid_trot_fails_block_diagonality() {
        let report = validate_entry(&entry("rigid-trot", &BTreeMap::new()).unwrap());
        assert!(report.checks.iter().all(|c| c.pass));
        let d = report.decoupling.unwrap();
        assert!(d.partition.pass);
        assert!(!d.clause1.pass);
        assert!(!d.pass);
    }

    #[test]
    fn coupled_pair_fails_clause_one() {
        let mut params = BTreeMap::new();
        params.insert("coupling".to_string(), 0.1);
        let report = validate_entry(&zoo::entry("decoupled-pair", &params).unwrap());
        assert!(!report.decoupling.unwrap().clause1.pass);
    }
}
