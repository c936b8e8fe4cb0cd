//! Atomic occupation measures of deterministic stationary strategies.
//!
//! The orbit of such a strategy visits one state-action pair per decision
//! epoch with weight equal to the discount prefix, so its occupation
//! measure is purely atomic; cyclic tails fold into finitely many atoms by
//! geometric closure. The balance equation the measures satisfy is checked
//! here atom by atom, and cost integrals against the measure reproduce the
//! rollout values.

use crate::error::{Error, Result};
use crate::model::{ImpulseAction, ImpulseModel, State, Wait};
use crate::rollout::{CostVector, StationaryStrategy, CYCLE_TOL};

const EPOCH_CAP: usize = 1_000_000;

/// One weighted state-action atom of an occupation measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub x: f64,
    pub action: ImpulseAction,
    pub weight: f64,
}

/// A purely atomic occupation measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicOccupationMeasure {
    pub atoms: Vec<Atom>,
    /// Whether a geometric tail was folded into the last cycle's atoms.
    pub closed: bool,
    /// Bound on the unrepresented mass when the orbit had to be truncated.
    pub residual_mass_bound: Option<f64>,
}

impl AtomicOccupationMeasure {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

/// Builds the occupation measure of a deterministic stationary strategy
/// started at `x0`.
///
/// Pre-cycle atoms carry weight equal to their discount prefix; once the
/// orbit revisits a post-jump state (within [`CYCLE_TOL`]) the atoms of the
/// cycle get their weights divided by `1 - exp(-alpha * cycle_length)` and
/// the measure is exact. A never-intervene step ends the orbit after its
/// own atom.
pub fn occupation_of(
    model: &ImpulseModel,
    strategy: &StationaryStrategy,
    x0: State,
    tol: f64,
) -> Result<AtomicOccupationMeasure> {
    assert!(tol > 0.0);
    let mut atoms: Vec<Atom> = Vec::new();
    let mut x = match x0 {
        State::Alive(x) => x,
        State::Cemetery => {
            return Ok(AtomicOccupationMeasure {
                atoms,
                closed: false,
                residual_mass_bound: None,
            })
        }
    };
    let alpha = model.alpha();
    let mut t = 0.0;
    // (post-jump state, arrival time, atoms emitted so far)
    let mut anchors: Vec<(f64, f64, usize)> = Vec::new();
    let mut max_step_survival: f64 = 0.0;
    for _ in 0..EPOCH_CAP {
        let prefix = (-alpha * t).exp();
        if prefix < tol {
            let bound = if max_step_survival < 1.0 {
                prefix / (1.0 - max_step_survival)
            } else {
                f64::INFINITY
            };
            return Ok(AtomicOccupationMeasure {
                atoms,
                closed: false,
                residual_mass_bound: Some(bound),
            });
        }
        let b = strategy.decide(x);
        atoms.push(Atom {
            x,
            action: b,
            weight: prefix,
        });
        let theta = match b.wait {
            Wait::Never => {
                return Ok(AtomicOccupationMeasure {
                    atoms,
                    closed: false,
                    residual_mass_bound: None,
                })
            }
            Wait::Finite(theta) => theta,
        };
        let next = model.advance(x, b)?;
        if theta == 0.0 && (next - x).abs() <= CYCLE_TOL {
            return Err(Error::ZeroProgressLoop { x });
        }
        max_step_survival = max_step_survival.max(model.survival(b.wait));
        let t_next = t + theta;
        if let Some(&(_, t_anchor, n_atoms)) = anchors
            .iter()
            .find(|(x_anchor, _, _)| (x_anchor - next).abs() <= CYCLE_TOL)
        {
            let cycle_len = t_next - t_anchor;
            if cycle_len <= 0.0 {
                return Err(Error::ZeroProgressLoop { x: next });
            }
            let scale = 1.0 / (1.0 - (-alpha * cycle_len).exp());
            for atom in atoms.iter_mut().skip(n_atoms) {
                atom.weight *= scale;
            }
            return Ok(AtomicOccupationMeasure {
                atoms,
                closed: true,
                residual_mass_bound: None,
            });
        }
        anchors.push((next, t_next, atoms.len()));
        x = next;
        t = t_next;
    }
    Err(Error::EpochCap(EPOCH_CAP))
}

/// Total-variation residual of the balance equation the occupation measure
/// must satisfy: state marginal on one side, initial mass plus the
/// surviving image of the measure on the other.
///
/// Both sides are atomic here; atoms are matched within [`CYCLE_TOL`] in
/// the state coordinate and the residual is the summed absolute mismatch.
pub fn characteristic_residual(
    model: &ImpulseModel,
    mu: &AtomicOccupationMeasure,
    x0: State,
) -> Result<f64> {
    // signed masses: marginal positive, right-hand side negative
    let mut masses: Vec<(f64, f64)> = Vec::new();
    for atom in &mu.atoms {
        masses.push((atom.x, atom.weight));
        if let Wait::Finite(_) = atom.action.wait {
            let next = model.advance(atom.x, atom.action)?;
            masses.push((next, -atom.weight * model.survival(atom.action.wait)));
        }
    }
    if let State::Alive(x0) = x0 {
        masses.push((x0, -1.0));
    }
    masses.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut residual = 0.0;
    let mut i = 0;
    while i < masses.len() {
        let mut net = masses[i].1;
        let mut j = i + 1;
        while j < masses.len() && masses[j].0 - masses[j - 1].0 <= CYCLE_TOL {
            net += masses[j].1;
            j += 1;
        }
        residual += net.abs();
        i = j;
    }
    Ok(residual)
}

/// Integrals of the one-step costs against the measure, one per objective.
pub fn cost_integrals(model: &ImpulseModel, mu: &AtomicOccupationMeasure) -> Result<CostVector> {
    let n = model.num_costs();
    let mut values = vec![0.0; n];
    for atom in &mu.atoms {
        for (j, v) in values.iter_mut().enumerate() {
            *v += atom.weight * model.one_step_cost(j, State::Alive(atom.x), atom.action)?;
        }
    }
    Ok(CostVector { values })
}
