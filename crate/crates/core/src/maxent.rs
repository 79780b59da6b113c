//! Maximum-entropy trajectory distribution on a deterministic tabular MDP.
//!
//! Trajectories run for a fixed horizon `T` from a start cell and must end in the goal
//! set. Each is weighted by `exp(Σ r(x_s, u_a)·Δt)`. Transitions touching a baseline
//! constraint are removed. The backward pass computes the partition function of every
//! suffix, the policy is the induced Boltzmann policy, and the forward pass tracks
//! per-hypothesis violation probabilities Φ_{i,t}. For every hypothesis i the quantity
//! `Z_{C0}·(1 − Φ_{i,T})` is the partition function with i added to the baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{ControlVector, StateVector};
use crate::error::{contract, Error, Result};
use crate::gridmdp::{CellIndex, TabularMdp};
use crate::mask::{word_bit, HypMask};

/// Default running reward: minus the squared control norm.
pub fn squared_control_reward(_x: &StateVector, u: &ControlVector) -> f64 {
    -u.iter().map(|v| v * v).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct PlanningProblem<'a> {
    mdp: &'a TabularMdp,
    step_reward: Vec<f64>,
    horizon: usize,
    start: CellIndex,
    goal: Vec<bool>,
    baseline: HypMask,
}

impl<'a> PlanningProblem<'a> {
    /// Problem with the squared-control reward. `baseline` lists hypothesis indices
    /// treated as known constraints.
    pub fn new(
        mdp: &'a TabularMdp,
        horizon: usize,
        start: CellIndex,
        goal: &[CellIndex],
        baseline: HypMask,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(contract("horizon must be at least 1"));
        }
        if start >= mdp.n_states() {
            return Err(contract(format!("start cell {start} out of range")));
        }
        if goal.is_empty() {
            return Err(contract("goal set is empty"));
        }
        if baseline.len() != mdp.n_hypotheses() {
            return Err(contract("baseline mask length differs from hypothesis count"));
        }
        let mut goal_flags = vec![false; mdp.n_states()];
        for &g in goal {
            if g >= mdp.n_states() {
                return Err(contract(format!("goal cell {g} out of range")));
            }
            goal_flags[g] = true;
        }
        let p = PlanningProblem {
            mdp,
            step_reward: Vec::new(),
            horizon,
            start,
            goal: goal_flags,
            baseline,
        };
        Ok(p.with_reward(squared_control_reward))
    }

    /// Replace the running reward; the per-step reward is `r(x_s, u_a)·Δt`.
    pub fn with_reward(mut self, r: impl Fn(&StateVector, &ControlVector) -> f64) -> Self {
        let mdp = self.mdp;
        let dt = mdp.dt();
        self.step_reward = (0..mdp.n_states())
            .flat_map(|s| {
                let r = &r;
                (0..mdp.n_actions()).map(move |a| r(mdp.center(s), &mdp.actions().actions[a]) * dt)
            })
            .collect();
        self
    }

    /// Replace the per-step reward table directly (`S × A`, already scaled by Δt).
    pub fn with_step_rewards(mut self, table: Vec<f64>) -> Result<Self> {
        if table.len() != self.mdp.n_states() * self.mdp.n_actions() {
            return Err(contract("step reward table must have S * A entries"));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(contract("step rewards must be finite"));
        }
        self.step_reward = table;
        Ok(self)
    }

    pub fn mdp(&self) -> &TabularMdp {
        self.mdp
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn start(&self) -> CellIndex {
        self.start
    }

    pub fn is_goal(&self, s: CellIndex) -> bool {
        self.goal[s]
    }

    pub fn baseline(&self) -> &HypMask {
        &self.baseline
    }

    #[inline]
    pub fn step_reward(&self, s: CellIndex, a: usize) -> f64 {
        self.step_reward[s * self.mdp.n_actions() + a]
    }

    /// Successor of `(s, a)` if the transition is valid and respects the baseline.
    #[inline]
    pub fn allowed(&self, s: CellIndex, a: usize) -> Option<CellIndex> {
        let next = self.mdp.successor(s, a)?;
        if self.baseline.intersects_words(self.mdp.transition_words(s, a)) {
            None
        } else {
            Some(next)
        }
    }

    fn state_forbidden(&self, s: CellIndex) -> bool {
        self.baseline.intersects_words(self.mdp.center_words(s))
    }
}

/// Log-domain backward messages; `beta[t][s]` is the summed weight of all
/// baseline-respecting continuations from `s` at step `t` that end in the goal at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardMessages {
    log_beta: Vec<f64>,
    n_states: usize,
    horizon: usize,
}

impl BackwardMessages {
    pub fn log_beta(&self, t: usize, s: CellIndex) -> f64 {
        self.log_beta[t * self.n_states + s]
    }

    pub fn beta(&self, t: usize, s: CellIndex) -> f64 {
        self.log_beta(t, s).exp()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

fn log_sum_exp(values: &mut impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.filter(|v| *v > f64::NEG_INFINITY).collect();
    let Some(m) = vals.iter().copied().reduce(f64::max) else {
        return f64::NEG_INFINITY;
    };
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn backward_pass(problem: &PlanningProblem) -> Result<BackwardMessages> {
    let mdp = problem.mdp;
    let n = mdp.n_states();
    let a_n = mdp.n_actions();
    let t_max = problem.horizon;
    let forbidden: Vec<bool> = (0..n).map(|s| problem.state_forbidden(s)).collect();
    let mut log_beta = vec![f64::NEG_INFINITY; (t_max + 1) * n];
    for s in 0..n {
        if problem.goal[s] && !forbidden[s] {
            log_beta[t_max * n + s] = 0.0;
        }
    }
    for t in (0..t_max).rev() {
        let (head, tail) = log_beta.split_at_mut((t + 1) * n);
        let next = &tail[..n];
        head[t * n..].par_iter_mut().enumerate().for_each(|(s, slot)| {
            if forbidden[s] {
                return;
            }
            *slot = log_sum_exp(
                &mut (0..a_n).filter_map(|a| problem.allowed(s, a).map(|sp| problem.step_reward(s, a) + next[sp])),
            );
        });
    }
    let msgs = BackwardMessages {
        log_beta,
        n_states: n,
        horizon: t_max,
    };
    if msgs.log_beta(0, problem.start) == f64::NEG_INFINITY {
        return Err(Error::GoalUnreachable {
            start: problem.start,
            goal_cells: problem.goal.iter().filter(|&&g| g).count(),
            horizon: t_max,
        });
    }
    Ok(msgs)
}

/// Time-varying Boltzmann policy. Rows where no goal-reaching continuation exists are
/// left undefined (all zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPolicy {
    probs: Vec<f64>,
    defined: Vec<bool>,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
}

impl SoftPolicy {
    pub fn prob(&self, t: usize, s: CellIndex, a: usize) -> f64 {
        self.probs[(t * self.n_states + s) * self.n_actions + a]
    }

    pub fn row(&self, t: usize, s: CellIndex) -> &[f64] {
        let k = (t * self.n_states + s) * self.n_actions;
        &self.probs[k..k + self.n_actions]
    }

    pub fn is_defined(&self, t: usize, s: CellIndex) -> bool {
        self.defined[t * self.n_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

pub fn policy_from(problem: &PlanningProblem, beta: &BackwardMessages) -> SoftPolicy {
    let mdp = problem.mdp;
    let n = mdp.n_states();
    let a_n = mdp.n_actions();
    let t_max = problem.horizon;
    let mut probs = vec![0.0; t_max * n * a_n];
    let mut defined = vec![false; t_max * n];
    probs
        .par_chunks_mut(a_n)
        .zip(defined.par_iter_mut())
        .enumerate()
        .for_each(|(k, (row, def))| {
            let (t, s) = (k / n, k % n);
            let here = beta.log_beta(t, s);
            if here == f64::NEG_INFINITY {
                return;
            }
            for (a, p) in row.iter_mut().enumerate() {
                if let Some(sp) = problem.allowed(s, a) {
                    *p = (problem.step_reward(s, a) + beta.log_beta(t + 1, sp) - here).exp();
                }
            }
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= z);
            *def = true;
        });
    SoftPolicy {
        probs,
        defined,
        n_states: n,
        n_actions: a_n,
        horizon: t_max,
    }
}

/// State occupancy and per-hypothesis violation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    rho: Vec<f64>,
    phi: Vec<f64>,
    n_states: usize,
    horizon: usize,
}

impl ForwardResult {
    pub fn occupancy(&self, t: usize) -> &[f64] {
        &self.rho[t * self.n_states..(t + 1) * self.n_states]
    }

    /// Φ_{i,t}: probability that a trajectory has violated hypothesis `i` by step `t`.
    pub fn phi(&self, i: usize, t: usize) -> f64 {
        self.phi[i * (self.horizon + 1) + t]
    }

    pub fn phi_trace(&self, i: usize) -> &[f64] {
        &self.phi[i * (self.horizon + 1)..(i + 1) * (self.horizon + 1)]
    }

    /// Φ_{i,T} for every hypothesis.
    pub fn phi_final(&self) -> Vec<f64> {
        let n_hyp = self.phi.len() / (self.horizon + 1);
        (0..n_hyp).map(|i| self.phi(i, self.horizon)).collect()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

#[allow(clippy::needless_range_loop)]
pub fn forward_phi(problem: &PlanningProblem, pi: &SoftPolicy) -> ForwardResult {
    let mdp = problem.mdp;
    let n = mdp.n_states();
    let t_max = problem.horizon;
    let n_hyp = mdp.n_hypotheses();

    let mut rho = vec![0.0; (t_max + 1) * n];
    rho[problem.start] = 1.0;
    let mut norms = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let (cur, next) = rho.split_at_mut((t + 1) * n);
        let cur = &cur[t * n..];
        let next = &mut next[..n];
        for s in 0..n {
            let mass = cur[s];
            if mass == 0.0 {
                continue;
            }
            for (a, &p) in pi.row(t, s).iter().enumerate() {
                if p > 0.0 {
                    if let Some(sp) = problem.allowed(s, a) {
                        next[sp] += mass * p;
                    }
                }
            }
        }
        let z: f64 = next.iter().sum();
        if z > 0.0 {
            next.iter_mut().for_each(|v| *v /= z);
        }
        norms.push(z);
    }

    let start_words = mdp.center_words(problem.start);
    let phi: Vec<f64> = (0..n_hyp)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut trace = vec![0.0; t_max + 1];
            if word_bit(start_words, i) {
                trace.iter_mut().for_each(|v| *v = 1.0);
                return trace;
            }
            let mut cur = vec![0.0; n];
            let mut next = vec![0.0; n];
            cur[problem.start] = 1.0;
            // absorbed and surviving mass add up to one; whichever is smaller gives the
            // more accurate Φ
            let mut absorbed = 0.0;
            for t in 0..t_max {
                next.iter_mut().for_each(|v| *v = 0.0);
                let mut lost = 0.0;
                for s in 0..n {
                    let mass = cur[s];
                    if mass == 0.0 {
                        continue;
                    }
                    for (a, &p) in pi.row(t, s).iter().enumerate() {
                        if p > 0.0 {
                            if let Some(sp) = problem.allowed(s, a) {
                                if mdp.violates(s, a, i) {
                                    lost += mass * p;
                                } else {
                                    next[sp] += mass * p;
                                }
                            }
                        }
                    }
                }
                if norms[t] > 0.0 {
                    next.iter_mut().for_each(|v| *v /= norms[t]);
                    lost /= norms[t];
                }
                std::mem::swap(&mut cur, &mut next);
                absorbed += lost;
                let survival: f64 = cur.iter().sum();
                let phi = if absorbed <= survival { absorbed } else { 1.0 - survival };
                trace[t + 1] = phi.clamp(0.0, 1.0).max(trace[t]);
            }
            trace
        })
        .collect();

    ForwardResult {
        rho,
        phi,
        n_states: n,
        horizon: t_max,
    }
}

/// Backward pass, policy and forward pass in one call.
pub fn solve(problem: &PlanningProblem) -> Result<(BackwardMessages, SoftPolicy, ForwardResult)> {
    let beta = backward_pass(problem)?;
    let pi = policy_from(problem, &beta);
    let fwd = forward_phi(problem, &pi);
    Ok((beta, pi, fwd))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    /// `T + 1` visited cells.
    pub cells: Vec<CellIndex>,
    /// `T` action indices.
    pub actions: Vec<usize>,
    /// Union of the transition bitsets along the path.
    pub violations: HypMask,
}

pub fn sample_trajectory(problem: &PlanningProblem, pi: &SoftPolicy, seed: u64) -> Result<DiscreteTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(problem, pi, &mut rng)
}

pub fn sample_with(problem: &PlanningProblem, pi: &SoftPolicy, rng: &mut impl Rng) -> Result<DiscreteTrajectory> {
    let mdp = problem.mdp;
    if !pi.is_defined(0, problem.start) {
        return Err(contract("policy is undefined at the start cell"));
    }
    let mut s = problem.start;
    let mut cells = vec![s];
    let mut actions = Vec::with_capacity(problem.horizon);
    let mut violations = mdp.center_mask(s);
    for t in 0..problem.horizon {
        let row = pi.row(t, s);
        let r: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        for (a, &p) in row.iter().enumerate() {
            if p > 0.0 {
                chosen = Some(a);
                acc += p;
                if r < acc {
                    break;
                }
            }
        }
        let a = chosen.expect("defined policy row has positive mass");
        let next = problem.allowed(s, a).expect("policy only picks allowed actions");
        violations.union_words(mdp.transition_words(s, a));
        actions.push(a);
        cells.push(next);
        s = next;
    }
    Ok(DiscreteTrajectory {
        cells,
        actions,
        violations,
    })
}
