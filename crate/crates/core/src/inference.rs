//! Constraint inference from continuous demonstrations.
//!
//! A hypothesis touched by any demonstration cannot be the constraint (its likelihood
//! is zero). Among the rest, each demonstration `j` with its own start and goal
//! contributes `ln Z_{C0} / Z_{C_i} = −ln(1 − Φ^(j)_{i,T})` to the dataset
//! log-likelihood gain of hypothesis `i`; hypotheses are ranked by the sum.

use std::io::Write;

use crate::dynamics::{ContinuousTrajectory, StateVector};
use crate::error::{contract, Error, Result};
use crate::gridmdp::{CellIndex, HypothesisSet, TabularMdp};
use crate::mask::HypMask;
use crate::maxent::{self, PlanningProblem};

/// Φ values are clamped to `1 − PHI_EPS` before taking `ln(1 − Φ)`.
pub const PHI_EPS: f64 = 1e-12;

/// Target of a demonstration: a state, constrained only on `dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpec {
    pub state: StateVector,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub id: usize,
    pub trajectory: ContinuousTrajectory,
    pub start: StateVector,
    pub goal: GoalSpec,
}

impl Demonstration {
    /// Demonstration whose start is the first sample and whose goal is the last sample,
    /// used for externally recorded trajectories.
    pub fn from_trajectory(id: usize, trajectory: ContinuousTrajectory, goal_dims: Vec<usize>) -> Self {
        Demonstration {
            id,
            start: trajectory.first().clone(),
            goal: GoalSpec {
                state: trajectory.last().clone(),
                dims: goal_dims,
            },
            trajectory,
        }
    }
}

/// Regions touched by any sample of the demonstration.
pub fn demo_violations(demo: &Demonstration, hypotheses: &HypothesisSet) -> HypMask {
    trajectory_violations(&demo.trajectory.states, hypotheses)
}

pub fn trajectory_violations(states: &[StateVector], hypotheses: &HypothesisSet) -> HypMask {
    let mut words = vec![0u64; hypotheses.words()];
    for x in states {
        hypotheses.membership_into(x, &mut words);
    }
    HypMask::from_words(&words, hypotheses.len())
}

/// Hypotheses not violated by any profile.
pub fn feasible_set(profiles: &[HypMask]) -> Result<HypMask> {
    let first = profiles
        .first()
        .ok_or_else(|| contract("feasibility needs at least one demonstration"))?;
    let mut violated = HypMask::new(first.len());
    for p in profiles {
        violated.union_with(p);
    }
    Ok(violated.complement())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedHypothesis {
    pub index: usize,
    pub score: f64,
    /// 1-based position among feasible hypotheses.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ranking {
    pub entries: Vec<RankedHypothesis>,
    pub warnings: Vec<String>,
}

impl Ranking {
    pub fn rank_of(&self, index: usize) -> Option<usize> {
        self.entries.iter().find(|e| e.index == index).map(|e| e.rank)
    }

    pub fn top(&self, k: usize) -> &[RankedHypothesis] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// Dataset log-likelihood gain of hypothesis `i`: `−Σ_j ln(1 − Φ^(j)_i)`.
///
/// Terms are summed in sorted order so the result does not depend on demo order.
pub fn likelihood_gain(phi_per_demo: &[Vec<f64>], i: usize) -> f64 {
    let mut terms: Vec<f64> = phi_per_demo
        .iter()
        .map(|phi| -(1.0 - phi[i].min(1.0 - PHI_EPS)).ln())
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Rank feasible hypotheses by likelihood gain, descending; ties go to the lower index.
pub fn rank_constraints(phi_per_demo: &[Vec<f64>], feasible: &HypMask) -> Ranking {
    let mut warnings = Vec::new();
    let mut scored: Vec<(usize, f64)> = feasible
        .iter()
        .map(|i| {
            if phi_per_demo.iter().any(|phi| phi[i] >= 1.0 - PHI_EPS) {
                warnings.push(format!(
                    "hypothesis {i}: Φ = 1 for some demonstration although no demonstration violates it (model mismatch)"
                ));
            }
            (i, likelihood_gain(phi_per_demo, i))
        })
        .collect();
    if scored.is_empty() {
        warnings.push("every hypothesis is violated by some demonstration".into());
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ranking {
        entries: scored
            .into_iter()
            .enumerate()
            .map(|(k, (index, score))| RankedHypothesis {
                index,
                score,
                rank: k + 1,
            })
            .collect(),
        warnings,
    }
}

fn check_prior(prior: f64) -> Result<()> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(contract(format!("prior must lie in (0, 1), got {prior}")));
    }
    Ok(())
}

/// Posterior probability that the hypothesis is a real constraint after `N`
/// demonstrations avoided it, where demo `j` would have violated it with probability
/// `Φ^(j)_T` if unconstrained:
///
/// `P(C | A_N) = P(C) / (P(C) + (1 − P(C))·Π_j (1 − Φ^(j)_T))`.
pub fn posterior(prior: f64, phi_per_demo: &[f64]) -> Result<f64> {
    check_prior(prior)?;
    if phi_per_demo.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(contract("Φ values must lie in [0, 1]"));
    }
    let evidence: f64 = phi_per_demo.iter().map(|p| 1.0 - p).product();
    Ok(prior / (prior + (1.0 - prior) * evidence))
}

/// Variant with the evidence term subtracted, `P / (P − (1 − Φ)^N·(1 − P))`.
/// It is not a probability in general (it exceeds 1 or goes negative) and exists only
/// for comparison with [`posterior`].
pub fn posterior_subtracted(prior: f64, phi: f64, n: usize) -> f64 {
    prior / (prior - (1.0 - phi).powi(n as i32) * (1.0 - prior))
}

/// `Σ_i |Φ̄_i − D̄_i|`, where Φ̄ averages per-demo model violation probabilities and D̄
/// the per-demo violation indicators.
pub fn distribution_distance(phi_per_demo: &[Vec<f64>], profiles: &[HypMask]) -> Result<f64> {
    let n = phi_per_demo.len();
    if n == 0 {
        return Err(contract("distance needs at least one demonstration"));
    }
    if profiles.len() != n {
        return Err(contract("one profile per Φ vector required"));
    }
    let h = phi_per_demo[0].len();
    if phi_per_demo.iter().any(|p| p.len() != h) || profiles.iter().any(|p| p.len() != h) {
        return Err(contract("Φ vectors and profiles must cover the same hypotheses"));
    }
    Ok((0..h)
        .map(|i| {
            let model = phi_per_demo.iter().map(|p| p[i]).sum::<f64>() / n as f64;
            let empirical = profiles.iter().filter(|p| p.contains(i)).count() as f64 / n as f64;
            (model - empirical).abs()
        })
        .sum())
}

/// Start cell and goal cells of a demonstration on the MDP grid, taken from the
/// trajectory's first and last samples.
pub fn demo_endpoints(mdp: &TabularMdp, demo: &Demonstration) -> Result<(CellIndex, Vec<CellIndex>)> {
    let grid = mdp
        .grid()
        .ok_or_else(|| contract("MDP has no grid; cannot place demonstrations"))?;
    let start = grid
        .cell_of(demo.trajectory.first())
        .ok_or_else(|| contract(format!("demo {} starts outside the grid", demo.id)))?;
    let goal = grid
        .cells_matching(demo.trajectory.last(), &demo.goal.dims)
        .ok_or_else(|| contract(format!("demo {} ends outside the grid", demo.id)))?;
    Ok((start, goal))
}

/// Horizon in MDP steps, `round(duration / Δt)`.
pub fn horizon_steps(duration: f64, dt: f64) -> usize {
    (duration / dt).round().max(1.0) as usize
}

/// Φ_{·,T} for one demonstration's start/goal under the baseline constraints.
pub fn demo_phi(mdp: &TabularMdp, demo: &Demonstration, baseline: &HypMask) -> Result<Vec<f64>> {
    let (start, goal) = demo_endpoints(mdp, demo)?;
    let horizon = horizon_steps(demo.trajectory.duration(), mdp.dt());
    let problem = PlanningProblem::new(mdp, horizon, start, &goal, baseline.clone())?;
    let (_, _, fwd) = maxent::solve(&problem)?;
    Ok(fwd.phi_final())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub n_hypotheses: usize,
    /// Ids of demonstrations used (reachable on the MDP).
    pub demo_ids: Vec<usize>,
    /// Ids of demonstrations skipped, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub profiles: Vec<HypMask>,
    pub phi: Vec<Vec<f64>>,
    pub feasible: HypMask,
    pub ranking: Ranking,
    pub prior: f64,
    /// Posterior of the top-ranked hypothesis.
    pub top_posterior: Option<f64>,
}

/// Full inference over `demos`. Hypotheses `0..n_candidates` of the MDP are ranked;
/// any extra MDP hypotheses (for example a baseline region) are ignored.
pub fn infer(
    mdp: &TabularMdp,
    hypotheses: &HypothesisSet,
    demos: &[Demonstration],
    n_candidates: usize,
    baseline: &HypMask,
    prior: f64,
) -> Result<InferenceReport> {
    check_prior(prior)?;
    if hypotheses.len() != mdp.n_hypotheses() || n_candidates > hypotheses.len() {
        return Err(contract("hypothesis set does not match the MDP"));
    }
    let mut demo_ids = Vec::new();
    let mut skipped = Vec::new();
    let mut profiles = Vec::new();
    let mut phi = Vec::new();
    for demo in demos {
        match demo_phi(mdp, demo, baseline) {
            Ok(p) => {
                demo_ids.push(demo.id);
                phi.push(p[..n_candidates].to_vec());
                profiles.push(demo_violations(demo, hypotheses).resized(n_candidates));
            }
            Err(e @ (Error::GoalUnreachable { .. } | Error::Contract(_))) => {
                log::warn!("skipping demo {}: {e}", demo.id);
                skipped.push((demo.id, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    report_from_parts(n_candidates, demo_ids, skipped, profiles, phi, prior)
}

/// Assemble a report from precomputed per-demo Φ vectors and violation profiles.
pub fn report_from_parts(
    n_hypotheses: usize,
    demo_ids: Vec<usize>,
    skipped: Vec<(usize, String)>,
    profiles: Vec<HypMask>,
    phi: Vec<Vec<f64>>,
    prior: f64,
) -> Result<InferenceReport> {
    check_prior(prior)?;
    let feasible = if profiles.is_empty() {
        HypMask::full(n_hypotheses)
    } else {
        feasible_set(&profiles)?
    };
    let ranking = rank_constraints(&phi, &feasible);
    let top_posterior = match ranking.entries.first() {
        Some(top) => {
            let phis: Vec<f64> = phi.iter().map(|p| p[top.index]).collect();
            Some(posterior(prior, &phis)?)
        }
        None => None,
    };
    Ok(InferenceReport {
        n_hypotheses,
        demo_ids,
        skipped,
        profiles,
        phi,
        feasible,
        ranking,
        prior,
        top_posterior,
    })
}

impl InferenceReport {
    /// Flat CSV: one row per hypothesis with feasibility, score, rank and Φ per demo.
    /// Infeasible hypotheses have an empty rank.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        write!(out, "hypothesis,feasible,score_nats,rank")?;
        for id in &self.demo_ids {
            write!(out, ",phi_demo_{id}")?;
        }
        writeln!(out)?;
        for i in 0..self.n_hypotheses {
            let entry = self.ranking.entries.iter().find(|e| e.index == i);
            let score = crate::inference::likelihood_gain(&self.phi, i);
            write!(
                out,
                "{i},{},{score:.12e},{}",
                self.feasible.contains(i) as u8,
                entry.map(|e| e.rank.to_string()).unwrap_or_default()
            )?;
            for p in &self.phi {
                write!(out, ",{:.12e}", p[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn summary(&self, top_k: usize) -> String {
        let mut s = format!(
            "{} demonstrations used, {} skipped; {} of {} hypotheses feasible\n",
            self.demo_ids.len(),
            self.skipped.len(),
            self.feasible.count(),
            self.n_hypotheses
        );
        for e in self.ranking.top(top_k) {
            s.push_str(&format!(
                "  #{:<3} hypothesis {:>4}  gain {:.6}\n",
                e.rank, e.index, e.score
            ));
        }
        if let Some(p) = self.top_posterior {
            s.push_str(&format!("posterior of top hypothesis (prior {}): {p:.6}\n", self.prior));
        }
        for w in &self.ranking.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}
