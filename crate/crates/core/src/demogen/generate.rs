use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ilqr::{ilqr_solve, CostWeights, DemoProblem, IlqrResult};
use crate::dynamics::{ControlVector, StateVector, SystemSpec};
use crate::error::{contract, Error, Result};
use crate::gridmdp::{HypothesisSet, Region};
use crate::inference::{Demonstration, GoalSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoGenConfig {
    pub n_pairs: usize,
    /// Horizon in seconds.
    #[serde(skip)]
    pub horizon: f64,
    pub dt_sim: f64,
    /// Per state dim `(lo, hi)` for uniform start sampling; defaults to the state bounds.
    pub start_bounds: Option<Vec<(f64, f64)>>,
    /// Per state dim `(lo, hi)` for uniform goal sampling; defaults to the state bounds.
    pub goal_bounds: Option<Vec<(f64, f64)>>,
    /// State dims the goal constrains; empty means all.
    #[serde(skip)]
    pub goal_dims: Vec<usize>,
    pub restarts: usize,
    /// Standard deviation of the random initial controls, in control units.
    pub init_std: f64,
    pub max_iters: usize,
    /// Accept a demo only if its normalized goal error is at most this.
    pub goal_tolerance: f64,
    /// Reject demos that leave the non-periodic state bounds.
    pub reject_out_of_bounds: bool,
    pub weights: CostWeights,
}

impl Default for DemoGenConfig {
    fn default() -> Self {
        DemoGenConfig {
            n_pairs: 100,
            horizon: 5.0,
            dt_sim: 0.01,
            start_bounds: None,
            goal_bounds: None,
            goal_dims: Vec::new(),
            restarts: 3,
            init_std: 0.5,
            max_iters: 10,
            goal_tolerance: 0.05,
            reject_out_of_bounds: true,
            weights: CostWeights::default(),
        }
    }
}

impl DemoGenConfig {
    pub fn goal_dims(&self, system: &SystemSpec) -> Vec<usize> {
        if self.goal_dims.is_empty() {
            system.all_dims()
        } else {
            self.goal_dims.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    GoalNotReached { error: f64 },
    ViolatedKeepOut,
    LeftBounds,
    Failed(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::GoalNotReached { error } => write!(f, "goal not reached (error {error:.4})"),
            RejectReason::ViolatedKeepOut => write!(f, "entered the keep-out region"),
            RejectReason::LeftBounds => write!(f, "left the state bounds"),
            RejectReason::Failed(e) => write!(f, "optimization failed: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub pair: usize,
    pub start: StateVector,
    pub goal: StateVector,
    pub reason: RejectReason,
}

#[derive(Debug, Clone)]
pub struct DemoSet {
    pub demos: Vec<Demonstration>,
    pub rejections: Vec<Rejection>,
    pub attempted: usize,
}

pub(crate) fn sample_point(
    rng: &mut impl Rng,
    system: &SystemSpec,
    bounds: Option<&Vec<(f64, f64)>>,
    keep_out: Option<&HypothesisSet>,
) -> Result<StateVector> {
    let ranges: Vec<(f64, f64)> = match bounds {
        Some(b) if b.len() == system.state_len() => b.clone(),
        Some(_) => return Err(contract("sampling bounds must cover every state dim")),
        None => system.state_dims.iter().map(|d| (d.lower, d.upper)).collect(),
    };
    for _ in 0..10_000 {
        let mut x: Vec<f64> = ranges.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
        system.canonicalize(&mut x);
        if keep_out.is_none_or(|k| !k.contains(0, &x)) {
            return Ok(StateVector(x));
        }
    }
    Err(contract("could not sample a point outside the keep-out region"))
}

/// Best of `restarts` iLQR runs from random zero-mean control initializations.
pub fn best_of_restarts(problem: &DemoProblem, cfg: &DemoGenConfig, rng: &mut impl Rng) -> Result<IlqrResult> {
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| contract(e.to_string()))?;
    let m = problem.system.control_len();
    let mut best: Option<IlqrResult> = None;
    let mut last_err = None;
    for _ in 0..cfg.restarts.max(1) {
        let init: Vec<ControlVector> = (0..problem.steps())
            .map(|_| ControlVector((0..m).map(|_| normal.sample(rng)).collect()))
            .collect();
        match ilqr_solve(problem, &init, cfg.max_iters) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.cost < b.cost) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::OptimizationDiverged("no restart succeeded".into())))
}

/// Sample start/goal pairs outside `keep_out`, solve each with best-of-restarts iLQR
/// and keep the demos that reach their goal without entering `keep_out`.
pub fn generate_demos(
    system: &SystemSpec,
    keep_out: Option<&Region>,
    cfg: &DemoGenConfig,
    seed: u64,
) -> Result<DemoSet> {
    if cfg.n_pairs == 0 {
        return Err(contract("n_pairs must be at least 1"));
    }
    let k_set = keep_out
        .map(|r| HypothesisSet::new(HypothesisSet::extents_of(system), vec![r.clone()]))
        .transpose()?;
    let goal_dims = cfg.goal_dims(system);

    let outcomes: Vec<Result<std::result::Result<Demonstration, Rejection>>> = (0..cfg.n_pairs)
        .into_par_iter()
        .map(|pair| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(pair as u64);
            let start = sample_point(&mut rng, system, cfg.start_bounds.as_ref(), k_set.as_ref())?;
            let goal = sample_point(&mut rng, system, cfg.goal_bounds.as_ref(), k_set.as_ref())?;
            let problem = DemoProblem {
                system,
                start: start.clone(),
                goal: GoalSpec {
                    state: goal.clone(),
                    dims: goal_dims.clone(),
                },
                horizon: cfg.horizon,
                dt_sim: cfg.dt_sim,
                keep_out: keep_out.cloned(),
                weights: cfg.weights,
            };
            let reject = |reason| {
                Ok(Err(Rejection {
                    pair,
                    start: start.clone(),
                    goal: goal.clone(),
                    reason,
                }))
            };
            let result = match best_of_restarts(&problem, cfg, &mut rng) {
                Ok(r) => r,
                Err(e) => return reject(RejectReason::Failed(e.to_string())),
            };
            if result.violated_keep_out {
                return reject(RejectReason::ViolatedKeepOut);
            }
            if cfg.reject_out_of_bounds && result.left_bounds {
                return reject(RejectReason::LeftBounds);
            }
            if result.goal_error > cfg.goal_tolerance {
                return reject(RejectReason::GoalNotReached {
                    error: result.goal_error,
                });
            }
            Ok(Ok(Demonstration {
                id: pair,
                trajectory: result.trajectory,
                start: start.clone(),
                goal: problem.goal,
            }))
        })
        .collect();

    let mut demos = Vec::new();
    let mut rejections = Vec::new();
    for o in outcomes {
        match o? {
            Ok(d) => demos.push(d),
            Err(r) => rejections.push(r),
        }
    }
    for r in &rejections {
        log::debug!("pair {} rejected: {}", r.pair, r.reason);
    }
    if demos.is_empty() {
        return Err(Error::EmptyDataset { attempted: cfg.n_pairs });
    }
    Ok(DemoSet {
        demos,
        rejections,
        attempted: cfg.n_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn blocked_corridor_is_rejected() {
        // keep-out covers every angle for positive velocities; the pair needs to move
        // forward through it
        let sys = SystemSpec::pendulum();
        let wall = Region::from_dims(2, &[(1, 0.0, 6.0)]);
        let cfg = DemoGenConfig {
            n_pairs: 1,
            start_bounds: Some(vec![(0.5, 0.5), (-0.5, -0.5)]),
            goal_bounds: Some(vec![(2.5, 2.5), (-0.5, -0.5)]),
            restarts: 1,
            ..DemoGenConfig::default()
        };
        let r = generate_demos(&sys, Some(&wall), &cfg, 3);
        match r {
            Err(Error::EmptyDataset { attempted: 1 }) => {}
            Ok(set) => {
                for d in &set.demos {
                    assert!(d.trajectory.states.iter().all(|x| x[1] < 0.0));
                }
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn sampled_points_avoid_keep_out() {
        let sys = SystemSpec::pendulum();
        let region = Region::from_dims(2, &[(0, PI, 1.2 * PI), (1, 0.0, 1.2)]);
        let k = HypothesisSet::new(HypothesisSet::extents_of(&sys), vec![region]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bounds = vec![(PI - 0.1, 1.2 * PI + 0.1), (-0.1, 1.3)];
        for _ in 0..200 {
            let x = sample_point(&mut rng, &sys, Some(&bounds), Some(&k)).unwrap();
            assert!(!k.contains(0, &x));
        }
    }

    #[test]
    fn zero_pairs_is_a_contract_error() {
        let cfg = DemoGenConfig {
            n_pairs: 0,
            ..DemoGenConfig::default()
        };
        assert!(matches!(
            generate_demos(&SystemSpec::pendulum(), None, &cfg, 0),
            Err(Error::Contract(_))
        ));
    }
}
