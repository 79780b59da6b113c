#![allow(dead_code)]

use mlci::dynamics::{ControlVector, StateVector};
use mlci::gridmdp::{ActionSet, TabularMdp};
use mlci::maxent::PlanningProblem;
use mlci::HypMask;
use rand::Rng;

/// A small random tabular planning instance.
pub struct Instance {
    pub mdp: TabularMdp,
    pub rewards: Vec<f64>,
    pub horizon: usize,
    pub start: usize,
    pub goal: Vec<usize>,
    pub baseline: HypMask,
}

impl Instance {
    pub fn problem(&self) -> PlanningProblem<'_> {
        PlanningProblem::new(&self.mdp, self.horizon, self.start, &self.goal, self.baseline.clone())
            .unwrap()
            .with_step_rewards(self.rewards.clone())
            .unwrap()
    }
}

fn random_mask(rng: &mut impl Rng, n: usize, p: f64) -> HypMask {
    let mut m = HypMask::new(n);
    for i in 0..n {
        if rng.random_bool(p) {
            m.insert(i);
        }
    }
    m
}

/// Random instance with at most 12 states, 3 actions, horizon 6 and 5 hypotheses.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(2..=12);
    let a_n = rng.random_range(1..=3);
    let n_hyp = rng.random_range(1..=5);
    let horizon = rng.random_range(1..=6);
    let actions = ActionSet::new((0..a_n).map(|a| ControlVector(vec![a as f64])).collect()).unwrap();
    let centers = (0..n).map(|s| StateVector(vec![s as f64])).collect();
    let successors: Vec<Option<usize>> = (0..n * a_n)
        .map(|_| (!rng.random_bool(0.15)).then(|| rng.random_range(0..n)))
        .collect();
    let masks: Vec<HypMask> = (0..n * a_n).map(|_| random_mask(rng, n_hyp, 0.2)).collect();
    let center_masks: Vec<HypMask> = (0..n).map(|_| random_mask(rng, n_hyp, 0.1)).collect();
    let mdp = TabularMdp::from_tables(actions, 0.5, centers, &successors, &masks, &center_masks, n_hyp).unwrap();
    let rewards = (0..n * a_n).map(|_| rng.random_range(-2.0..0.5)).collect();
    let mut goal: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
    if goal.is_empty() {
        goal.push(rng.random_range(0..n));
    }
    let baseline = if rng.random_bool(0.5) {
        HypMask::new(n_hyp)
    } else {
        random_mask(rng, n_hyp, 0.25)
    };
    Instance {
        mdp,
        rewards,
        horizon,
        start: rng.random_range(0..n),
        goal,
        baseline,
    }
}

pub struct Path {
    pub cells: Vec<usize>,
    pub actions: Vec<usize>,
    pub weight: f64,
    pub violations: HypMask,
}

/// Every goal-reaching, baseline-respecting trajectory of the instance, found by
/// brute force over all action sequences using only the raw MDP tables.
pub fn enumerate(inst: &Instance) -> Vec<Path> {
    let mdp = &inst.mdp;
    let a_n = mdp.n_actions();
    let mut out = Vec::new();
    if mdp.center_mask(inst.start).intersects(&inst.baseline) {
        return out;
    }
    let total = a_n.pow(inst.horizon as u32);
    'seq: for code in 0..total {
        let mut c = code;
        let mut s = inst.start;
        let mut cells = vec![s];
        let mut acts = Vec::new();
        let mut log_w = 0.0;
        let mut viol = mdp.center_mask(s);
        for _ in 0..inst.horizon {
            let a = c % a_n;
            c /= a_n;
            let Some(next) = mdp.successor(s, a) else { continue 'seq };
            let m = mdp.transition_mask(s, a);
            if m.intersects(&inst.baseline) || mdp.center_mask(next).intersects(&inst.baseline) {
                continue 'seq;
            }
            viol.union_with(&m);
            log_w += inst.rewards[s * a_n + a];
            acts.push(a);
            cells.push(next);
            s = next;
        }
        if inst.goal.contains(&s) {
            out.push(Path {
                cells,
                actions: acts,
                weight: log_w.exp(),
                violations: viol,
            });
        }
    }
    out
}

pub fn partition(paths: &[Path]) -> f64 {
    paths.iter().map(|p| p.weight).sum()
}

/// Summed weight of the paths that avoid hypothesis `i`.
pub fn partition_avoiding(paths: &[Path], i: usize) -> f64 {
    paths
        .iter()
        .filter(|p| !p.violations.contains(i))
        .map(|p| p.weight)
        .sum()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

pub struct OracleStats {
    pub instances: usize,
    pub max_beta_err: f64,
    pub max_phi_err: f64,
    pub max_partition_err: f64,
}

/// Compare `maxent` against enumeration on `count` random instances whose goal is
/// reachable. Unreachable instances must make the backward pass fail.
pub fn run_oracle(rng: &mut impl Rng, count: usize) -> OracleStats {
    let mut stats = OracleStats {
        instances: 0,
        max_beta_err: 0.0,
        max_phi_err: 0.0,
        max_partition_err: 0.0,
    };
    while stats.instances < count {
        let inst = random_instance(rng);
        let paths = enumerate(&inst);
        let problem = inst.problem();
        let z = partition(&paths);
        let Ok((beta, pi, fwd)) = mlci::maxent::solve(&problem) else {
            assert!(
                paths.is_empty(),
                "backward pass failed although {} paths exist",
                paths.len()
            );
            continue;
        };
        assert!(!paths.is_empty(), "backward pass succeeded on an unreachable instance");
        stats.instances += 1;
        let b0 = beta.beta(0, inst.start);
        stats.max_beta_err = stats.max_beta_err.max(rel_err(b0, z));
        for i in 0..inst.mdp.n_hypotheses() {
            let avoid = partition_avoiding(&paths, i);
            let phi_enum = 1.0 - avoid / z;
            // Φ is a probability, so its error is measured relative to 1
            stats.max_phi_err = stats.max_phi_err.max((fwd.phi(i, inst.horizon) - phi_enum).abs());
            let lhs = b0 * (1.0 - fwd.phi(i, inst.horizon));
            let err = if avoid == 0.0 { lhs / b0 } else { rel_err(lhs, avoid) };
            stats.max_partition_err = stats.max_partition_err.max(err);
        }
        let _ = pi;
    }
    stats
}
