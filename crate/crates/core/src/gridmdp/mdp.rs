use rayon::prelude::*;

use super::grid::{ActionSet, CellIndex, GridSpec};
use super::hypotheses::HypothesisSet;
use crate::dynamics::{StateVector, SystemSpec};
use crate::error::{contract, Error, Result};
use crate::mask::{word_bit, words_for, HypMask};

/// Successor sentinel for transitions that leave the state bounds or diverge.
pub const INVALID: u32 = u32::MAX;

/// Deterministic tabular MDP with a hypothesis-violation bitset per transition.
///
/// The stored bitset of `(s, a)` is the union of region membership over the sampled
/// continuous segment, the center of `s` and the center of the successor cell. Mass
/// that takes the transition therefore counts as violating every listed region.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub(crate) n_states: usize,
    pub(crate) actions: ActionSet,
    pub(crate) dt: f64,
    pub(crate) grid: Option<GridSpec>,
    pub(crate) centers: Vec<StateVector>,
    pub(crate) n_hyp: usize,
    pub(crate) words: usize,
    pub(crate) successors: Vec<u32>,
    pub(crate) masks: Vec<u64>,
    pub(crate) center_masks: Vec<u64>,
    pub(crate) diverged: usize,
    pub(crate) out_of_bounds: usize,
}

impl TabularMdp {
    /// Assemble an MDP from explicit tables.
    ///
    /// `successors[s * A + a]` is the successor or `None`; `masks[s * A + a]` the raw
    /// violation bitset of that transition; `center_masks[s]` the regions containing
    /// the center of `s`.
    pub fn from_tables(
        actions: ActionSet,
        dt: f64,
        centers: Vec<StateVector>,
        successors: &[Option<usize>],
        masks: &[HypMask],
        center_masks: &[HypMask],
        n_hyp: usize,
    ) -> Result<Self> {
        let n_states = centers.len();
        let n_actions = actions.len();
        if n_states == 0 {
            return Err(contract("MDP has no states"));
        }
        if !(dt > 0.0) {
            return Err(contract("dt must be positive"));
        }
        if successors.len() != n_states * n_actions || masks.len() != n_states * n_actions {
            return Err(contract("transition tables must have S * A entries"));
        }
        if center_masks.len() != n_states {
            return Err(contract("center mask table must have S entries"));
        }
        let words = words_for(n_hyp);
        let mut succ = Vec::with_capacity(successors.len());
        let mut flat = Vec::with_capacity(successors.len() * words);
        for (k, (s, m)) in successors.iter().zip(masks).enumerate() {
            if m.len() != n_hyp {
                return Err(contract(format!("mask {k} has length {}", m.len())));
            }
            match s {
                Some(t) if *t >= n_states => {
                    return Err(contract(format!("successor {t} out of range")));
                }
                Some(t) => succ.push(*t as u32),
                None => succ.push(INVALID),
            }
            flat.extend_from_slice(m.words());
        }
        let mut cm = Vec::with_capacity(n_states * words);
        for m in center_masks {
            if m.len() != n_hyp {
                return Err(contract("center mask has wrong length"));
            }
            cm.extend_from_slice(m.words());
        }
        let mut mdp = TabularMdp {
            n_states,
            actions,
            dt,
            grid: None,
            centers,
            n_hyp,
            words,
            successors: succ,
            masks: flat,
            center_masks: cm,
            diverged: 0,
            out_of_bounds: 0,
        };
        mdp.fold_center_masks();
        Ok(mdp)
    }

    fn fold_center_masks(&mut self) {
        let w = self.words;
        if w == 0 {
            return;
        }
        let a_n = self.actions.len();
        for s in 0..self.n_states {
            for a in 0..a_n {
                let k = s * a_n + a;
                let succ = self.successors[k];
                for j in 0..w {
                    let mut v = self.center_masks[s * w + j];
                    if succ != INVALID {
                        v |= self.center_masks[succ as usize * w + j];
                    }
                    self.masks[k * w + j] |= v;
                }
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_hypotheses(&self) -> usize {
        self.n_hyp
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn center(&self, s: CellIndex) -> &StateVector {
        &self.centers[s]
    }

    /// Number of transitions invalidated by integration divergence.
    pub fn diverged_count(&self) -> usize {
        self.diverged
    }

    /// Number of transitions invalidated by leaving a non-periodic bound.
    pub fn out_of_bounds_count(&self) -> usize {
        self.out_of_bounds
    }

    #[inline]
    pub fn successor(&self, s: CellIndex, a: usize) -> Option<CellIndex> {
        let v = self.successors[s * self.actions.len() + a];
        (v != INVALID).then_some(v as usize)
    }

    #[inline]
    pub fn transition_words(&self, s: CellIndex, a: usize) -> &[u64] {
        let k = (s * self.actions.len() + a) * self.words;
        &self.masks[k..k + self.words]
    }

    pub fn transition_mask(&self, s: CellIndex, a: usize) -> HypMask {
        HypMask::from_words(self.transition_words(s, a), self.n_hyp)
    }

    #[inline]
    pub fn center_words(&self, s: CellIndex) -> &[u64] {
        &self.center_masks[s * self.words..(s + 1) * self.words]
    }

    pub fn center_mask(&self, s: CellIndex) -> HypMask {
        HypMask::from_words(self.center_words(s), self.n_hyp)
    }

    #[inline]
    pub fn violates(&self, s: CellIndex, a: usize, i: usize) -> bool {
        word_bit(self.transition_words(s, a), i)
    }

    pub fn valid_transitions(&self) -> usize {
        self.successors.iter().filter(|&&v| v != INVALID).count()
    }

    /// Fraction of valid transitions whose successor is the start cell.
    pub fn self_loop_fraction(&self) -> f64 {
        let a_n = self.actions.len();
        let (mut loops, mut valid) = (0usize, 0usize);
        for (k, &v) in self.successors.iter().enumerate() {
            if v != INVALID {
                valid += 1;
                if v as usize == k / a_n {
                    loops += 1;
                }
            }
        }
        if valid == 0 {
            0.0
        } else {
            loops as f64 / valid as f64
        }
    }
}

enum Outcome {
    Valid(u32, Vec<u64>),
    OutOfBounds,
    Diverged,
}

/// Discretize `system` on `grid`: from every cell center, hold each action for `dt`,
/// integrate with `substeps` RK4 steps, land in the endpoint's cell and record every
/// hypothesis touched by the sampled segment.
pub fn build_mdp(
    system: &SystemSpec,
    grid: &GridSpec,
    actions: &ActionSet,
    dt: f64,
    hypotheses: &HypothesisSet,
    substeps: usize,
) -> Result<TabularMdp> {
    if !(dt > 0.0) {
        return Err(contract(format!("dt must be positive, got {dt}")));
    }
    if substeps == 0 {
        return Err(contract("substeps must be at least 1"));
    }
    if grid.dims.len() != system.state_len() {
        return Err(contract("grid dimensionality does not match the system"));
    }
    let n_states = grid.n_states();
    if n_states >= INVALID as usize {
        return Err(contract("too many states"));
    }
    let n_actions = actions.len();
    let n_hyp = hypotheses.len();
    let words = words_for(n_hyp);
    let centers: Vec<StateVector> = (0..n_states).map(|c| grid.center_of(c)).collect();

    let outcomes: Vec<Outcome> = (0..n_states * n_actions)
        .into_par_iter()
        .map(|k| {
            let (s, a) = (k / n_actions, k % n_actions);
            match system.integrate_segment(&centers[s], &actions.actions[a], dt, substeps) {
                Ok(samples) => match grid.cell_of(&samples[substeps]) {
                    None => Outcome::OutOfBounds,
                    Some(next) => {
                        let mut m = vec![0u64; words];
                        for x in &samples {
                            hypotheses.membership_into(x, &mut m);
                        }
                        Outcome::Valid(next as u32, m)
                    }
                },
                Err(Error::IntegrationDiverged { .. }) => Outcome::Diverged,
                Err(e) => panic!("unexpected integration failure: {e}"),
            }
        })
        .collect();

    let mut successors = Vec::with_capacity(outcomes.len());
    let mut masks = Vec::with_capacity(outcomes.len() * words);
    let (mut diverged, mut out_of_bounds) = (0, 0);
    for o in outcomes {
        match o {
            Outcome::Valid(next, m) => {
                successors.push(next);
                masks.extend(m);
            }
            Outcome::OutOfBounds => {
                out_of_bounds += 1;
                successors.push(INVALID);
                masks.extend(std::iter::repeat_n(0, words));
            }
            Outcome::Diverged => {
                diverged += 1;
                successors.push(INVALID);
                masks.extend(std::iter::repeat_n(0, words));
            }
        }
    }
    let mut center_masks = vec![0u64; n_states * words];
    for (s, c) in centers.iter().enumerate() {
        hypotheses.membership_into(c, &mut center_masks[s * words..(s + 1) * words]);
    }
    if diverged > 0 {
        log::warn!("{diverged} transitions invalidated by integration divergence");
    }

    let mut mdp = TabularMdp {
        n_states,
        actions: actions.clone(),
        dt,
        grid: Some(grid.clone()),
        centers,
        n_hyp,
        words,
        successors,
        masks,
        center_masks,
        diverged,
        out_of_bounds,
    };
    mdp.fold_center_masks();
    Ok(mdp)
}
