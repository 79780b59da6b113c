use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::table::{fmt, fmt_opt, RunOutput, Table};
use super::{Runner, Setup};
use crate::config::sub_seed;
use crate::demogen::{io, sample_point};
use crate::dynamics::{ControlVector, StateVector};
use crate::error::{contract, Error, Result};
use crate::gridmdp::{GridSpec, HypothesisSet, Region, TabularMdp};
use crate::inference::{
    demo_endpoints, demo_violations, distribution_distance, horizon_steps, infer, posterior, report_from_parts,
    InferenceReport,
};
use crate::maxent::{backward_pass, policy_from, sample_trajectory, solve, PlanningProblem};

/// One line of the ranking experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingRow {
    pub truth: String,
    pub shuffle: usize,
    pub n_demos: usize,
    pub truth_rank: Option<usize>,
    pub top: Option<usize>,
    pub top_violated: bool,
    pub feasible: usize,
}

pub struct InferenceRun {
    pub report: InferenceReport,
    pub output: RunOutput,
    /// Wall-clock time of MDP construction plus inference.
    pub elapsed: Duration,
    /// For each of the top-k hypotheses: index and whether it overlaps the first truth.
    pub top: Vec<(usize, bool)>,
}

fn bounds_string(r: &Region) -> String {
    r.bounds
        .iter()
        .map(|b| match b {
            Some((lo, hi)) => format!("[{lo:.4},{hi:.4})"),
            None => "*".into(),
        })
        .collect::<Vec<_>>()
        .join(" x ")
}

fn state_columns(setup: &Setup) -> Vec<String> {
    setup
        .system
        .state_dims
        .iter()
        .map(|d| format!("{}[{}]", d.label, d.unit))
        .collect()
}

impl Runner {
    fn main_grid(&self, setup: &Setup) -> Result<GridSpec> {
        self.cfg.grid(&setup.system)
    }

    fn truth_index(&self, setup: &Setup, t: usize) -> Result<usize> {
        let (name, region) = &setup.truths[t];
        setup.hypotheses.find(region).ok_or_else(|| {
            Error::Config(format!(
                "truth '{name}' does not coincide with a hypothesis; rank is undefined"
            ))
        })
    }

    fn require_truth(&self, setup: &Setup) -> Result<()> {
        if setup.truths.is_empty() {
            return Err(Error::Config(
                "this experiment needs at least one [[truth]] entry".into(),
            ));
        }
        Ok(())
    }

    pub fn build_mdp(&self) -> Result<RunOutput> {
        let setup = self.setup()?;
        let grid = self.main_grid(&setup)?;
        let mdp = self.mdp(&setup, &grid, self.cfg.dt)?;
        let mut t = Table::new(
            "mdp",
            &[
                "states",
                "actions",
                "hypotheses",
                "dt[s]",
                "valid_transitions",
                "self_loop_fraction",
                "out_of_bounds",
                "diverged",
            ],
        );
        self.stamp(&mut t);
        t.row(vec![
            fmt(mdp.n_states()),
            fmt(mdp.n_actions()),
            fmt(mdp.n_hypotheses()),
            fmt(mdp.dt()),
            fmt(mdp.valid_transitions()),
            fmt(mdp.self_loop_fraction()),
            fmt(mdp.out_of_bounds_count()),
            fmt(mdp.diverged_count()),
        ]);
        let mut out = RunOutput {
            summary: format!(
                "{} states x {} actions, {} valid transitions, {:.1}% self loops\n",
                mdp.n_states(),
                mdp.n_actions(),
                mdp.valid_transitions(),
                100.0 * mdp.self_loop_fraction()
            ),
            ..RunOutput::default()
        };
        out.push_table(t)?;
        Ok(out)
    }

    pub fn gen_demos(&self) -> Result<RunOutput> {
        let setup = self.setup()?;
        let mut out = RunOutput::default();
        let truths: Vec<Option<&(String, Region)>> = if setup.truths.is_empty() {
            vec![None]
        } else {
            setup.truths.iter().map(Some).collect()
        };
        for truth in truths {
            let name = truth.map(|t| t.0.as_str()).unwrap_or("free");
            let batch = self.demos(&setup, truth)?;
            let mut text = format!(
                "# config_hash={}\n# seed={}\n# truth={name}\n",
                self.cfg.hash(),
                self.cfg.seed
            );
            let mut buf = Vec::new();
            io::write_demos(&mut buf, &setup.system, &batch.demos)?;
            text.push_str(&String::from_utf8(buf).expect("utf-8"));
            out.files.push((format!("demos_{name}.csv"), text));

            let mut t = Table::new(format!("rejections_{name}"), &["pair", "reason", "start", "goal"]);
            self.stamp(&mut t);
            for r in &batch.rejections {
                let join = |x: &StateVector| x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
                t.row(vec![fmt(r.pair), r.reason.to_string(), join(&r.start), join(&r.goal)]);
            }
            out.push_table(t)?;
            out.summary.push_str(&format!(
                "{name}: accepted {} of {} pairs ({} rejected)\n",
                batch.demos.len(),
                batch.attempted,
                batch.rejections.len()
            ));
        }
        Ok(out)
    }

    /// Mean normalized goal error of MDP plans executed on the continuous system.
    pub fn accuracy(&self) -> Result<RunOutput> {
        let setup = self.setup()?;
        self.require_truth(&setup)?;
        let acc = &self.cfg.accuracy;
        let sys = &setup.system;
        let mut t = Table::new(
            "accuracy",
            &[
                "truth",
                "cells",
                "dt[s]",
                "pairs",
                "reachable",
                "skipped",
                "mean_goal_error[normalized]",
            ],
        );
        self.stamp(&mut t);
        t.comment(format!(
            "horizon[s]={} rollouts_per_pair={}",
            self.cfg.horizon, acc.rollouts
        ));

        let pair_sets: Vec<Vec<(StateVector, StateVector)>> = setup
            .truths
            .iter()
            .map(|(name, region)| {
                let k = HypothesisSet::new(HypothesisSet::extents_of(sys), vec![region.clone()])?;
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, &format!("accuracy/pairs/{name}")));
                (0..acc.pairs)
                    .map(|_| {
                        let s = sample_point(&mut rng, sys, None, Some(&k))?;
                        let g = sample_point(&mut rng, sys, None, Some(&k))?;
                        Ok((s, g))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;

        for &cells in &acc.cells {
            let grid = self.cfg.grid_with_total(sys, cells)?;
            for &dt in &acc.dts {
                let mdp = self.mdp(&setup, &grid, dt)?;
                let horizon = horizon_steps(self.cfg.horizon, dt);
                let mut all = Vec::new();
                let mut all_pairs = 0;
                for (ti, (name, _)) in setup.truths.iter().enumerate() {
                    let baseline = setup.truth_baseline(ti);
                    let errors: Vec<Option<f64>> = pair_sets[ti]
                        .par_iter()
                        .enumerate()
                        .map(|(p, (s, g))| {
                            let tag = format!("accuracy/{name}/{cells}/{dt}/{p}");
                            self.plan_error(&setup, &mdp, &grid, horizon, &baseline, s, g, &tag)
                        })
                        .collect::<Result<_>>()?;
                    let ok: Vec<f64> = errors.iter().flatten().copied().collect();
                    t.row(vec![
                        name.clone(),
                        fmt(cells),
                        fmt(dt),
                        fmt(errors.len()),
                        fmt(ok.len()),
                        fmt(errors.len() - ok.len()),
                        fmt_opt(mean(&ok)),
                    ]);
                    all_pairs += errors.len();
                    all.extend(ok);
                }
                t.row(vec![
                    "all".into(),
                    fmt(cells),
                    fmt(dt),
                    fmt(all_pairs),
                    fmt(all.len()),
                    fmt(all_pairs - all.len()),
                    fmt_opt(mean(&all)),
                ]);
            }
        }
        let mut out = RunOutput::default();
        for r in t.rows().iter().filter(|r| r[0] == "all") {
            out.summary.push_str(&format!(
                "cells {:>5}  dt {:<5}  reachable {:>4}/{:<4}  mean error {}\n",
                r[1], r[2], r[4], r[3], r[6]
            ));
        }
        out.push_table(t)?;
        Ok(out)
    }

    /// Plan on the MDP from `start` to `goal`, execute the sampled actions on the
    /// continuous system and return the mean normalized final goal error, or `None` if
    /// the goal is unreachable or the rollout fails.
    #[allow(clippy::too_many_arguments)]
    fn plan_error(
        &self,
        setup: &Setup,
        mdp: &TabularMdp,
        grid: &GridSpec,
        horizon: usize,
        baseline: &crate::HypMask,
        start: &StateVector,
        goal: &StateVector,
        tag: &str,
    ) -> Result<Option<f64>> {
        let sys = &setup.system;
        let (Some(s), Some(g)) = (grid.cell_of(start), grid.cells_matching(goal, &setup.goal_dims)) else {
            return Ok(None);
        };
        let problem = PlanningProblem::new(mdp, horizon, s, &g, baseline.clone())?;
        let beta = match backward_pass(&problem) {
            Ok(b) => b,
            Err(Error::GoalUnreachable { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let pi = policy_from(&problem, &beta);
        let mut total = 0.0;
        let rollouts = self.cfg.accuracy.rollouts.max(1);
        for r in 0..rollouts {
            let traj = sample_trajectory(&problem, &pi, sub_seed(self.cfg.seed, &format!("{tag}/{r}")))?;
            let controls: Vec<ControlVector> = traj.actions.iter().map(|&a| setup.actions.actions[a].clone()).collect();
            match sys.rollout(start, &controls, mdp.dt(), self.cfg.substeps) {
                Ok(tr) => total += sys.normalized_distance(tr.last(), goal, &setup.goal_dims),
                Err(Error::IntegrationDiverged { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(total / rollouts as f64))
    }

    /// Rank of each ground truth as demonstrations accumulate, over seeded shuffles.
    pub fn ranking_rows(&self) -> Result<(Vec<RankingRow>, Vec<String>)> {
        let setup = self.setup()?;
        self.require_truth(&setup)?;
        let grid = self.main_grid(&setup)?;
        let mdp = self.mdp(&setup, &grid, self.cfg.dt)?;
        let h = setup.n_candidates();
        let mut rows = Vec::new();
        let mut notes = Vec::new();
        for (ti, (name, _)) in setup.truths.iter().enumerate() {
            let truth_idx = self.truth_index(&setup, ti)?;
            let batch = self.demos(&setup, Some(&setup.truths[ti]))?;
            let ev = self.evidence(&setup, &mdp, &batch.demos, &setup.empty_baseline())?;
            if let Some(j) = ev.profiles.iter().position(|p| p.contains(truth_idx)) {
                return Err(contract(format!(
                    "demo {} violates ground truth '{name}'; demonstration filtering is broken",
                    ev.ids[j]
                )));
            }
            notes.push(format!(
                "truth={name} attempted={} accepted={} usable={} skipped_unreachable={}",
                batch.attempted,
                batch.demos.len(),
                ev.ids.len(),
                ev.skipped.len()
            ));
            let n_max = self.cfg.ranking.max_demos.min(ev.ids.len());
            for s in 0..self.cfg.ranking.shuffles {
                let mut order: Vec<usize> = (0..ev.ids.len()).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.seed, &format!("ranking/{name}/{s}")));
                order.shuffle(&mut rng);
                for n in 1..=n_max {
                    let pick = &order[..n];
                    let profiles: Vec<_> = pick.iter().map(|&j| ev.profiles[j].clone()).collect();
                    let phi: Vec<_> = pick.iter().map(|&j| ev.phi[j].clone()).collect();
                    let ids = pick.iter().map(|&j| ev.ids[j]).collect();
                    let report = report_from_parts(h, ids, Vec::new(), profiles, phi, self.cfg.prior)?;
                    let top = report.ranking.entries.first().map(|e| e.index);
                    rows.push(RankingRow {
                        truth: name.clone(),
                        shuffle: s,
                        n_demos: n,
                        truth_rank: report.ranking.rank_of(truth_idx),
                        top,
                        top_violated: top.is_some_and(|i| report.profiles.iter().any(|p| p.contains(i))),
                        feasible: report.feasible.count(),
                    });
                }
            }
        }
        Ok((rows, notes))
    }

    pub fn ranking(&self) -> Result<RunOutput> {
        let (rows, notes) = self.ranking_rows()?;
        let mut t = Table::new(
            "ranking",
            &[
                "truth",
                "shuffle",
                "n_demos",
                "truth_rank",
                "top_hypothesis",
                "top_violated",
                "feasible",
            ],
        );
        self.stamp(&mut t);
        t.comment(format!(
            "cells={:?} dt[s]={} actions={:?}",
            self.cfg.cells, self.cfg.dt, self.cfg.action_levels
        ));
        for n in &notes {
            t.comment(n.clone());
        }
        for r in &rows {
            t.row(vec![
                r.truth.clone(),
                fmt(r.shuffle),
                fmt(r.n_demos),
                fmt_opt(r.truth_rank),
                fmt_opt(r.top),
                fmt(r.top_violated as u8),
                fmt(r.feasible),
            ]);
        }
        let mut s = Table::new("ranking_summary", &["truth", "n_demos", "shuffles", "mean_truth_rank"]);
        self.stamp(&mut s);
        let mut out = RunOutput::default();
        for n in &notes {
            out.summary.push_str(n);
            out.summary.push('\n');
        }
        for (truth, n, count, m) in mean_ranks(&rows) {
            s.row(vec![truth.clone(), fmt(n), fmt(count), fmt(m)]);
            out.summary.push_str(&format!("{truth}: N = {n}  mean rank {m:.2}\n"));
        }
        out.push_table(t)?;
        out.push_table(s)?;
        Ok(out)
    }

    /// Mean distance between MDP-predicted and demonstrated violation frequencies over
    /// single-demo trials.
    pub fn distance(&self) -> Result<RunOutput> {
        let setup = self.setup()?;
        self.require_truth(&setup)?;
        let dc = &self.cfg.distance;
        let mut t = Table::new(
            "distance",
            &["truth", "cells", "dt[s]", "trials", "skipped", "mean_distance"],
        );
        self.stamp(&mut t);
        let mut out = RunOutput::default();
        for &cells in &dc.cells {
            let grid = self.cfg.grid_with_total(&setup.system, cells)?;
            for &dt in &dc.dts {
                let mdp = self.mdp(&setup, &grid, dt)?;
                let mut all = Vec::new();
                let mut all_skipped = 0;
                for (ti, (name, _)) in setup.truths.iter().enumerate() {
                    let batch = self.demos(&setup, Some(&setup.truths[ti]))?;
                    let ev = self.evidence(&setup, &mdp, &batch.demos, &setup.truth_baseline(ti))?;
                    let n = dc.trials.unwrap_or(usize::MAX).min(ev.ids.len());
                    let d: Vec<f64> = (0..n)
                        .map(|j| {
                            distribution_distance(
                                std::slice::from_ref(&ev.phi[j]),
                                std::slice::from_ref(&ev.profiles[j]),
                            )
                        })
                        .collect::<Result<_>>()?;
                    t.row(vec![
                        name.clone(),
                        fmt(cells),
                        fmt(dt),
                        fmt(d.len()),
                        fmt(ev.skipped.len()),
                        fmt_opt(mean(&d)),
                    ]);
                    all_skipped += ev.skipped.len();
                    all.extend(d);
                }
                t.row(vec![
                    "all".into(),
                    fmt(cells),
                    fmt(dt),
                    fmt(all.len()),
                    fmt(all_skipped),
                    fmt_opt(mean(&all)),
                ]);
                out.summary.push_str(&format!(
                    "cells {cells:>5}  dt {dt:<5}  trials {:>4}  mean distance {}\n",
                    all.len(),
                    fmt_opt(mean(&all))
                ));
            }
        }
        out.push_table(t)?;
        Ok(out)
    }

    /// Posterior of the hypothesis ranked first after all demos, as demos accumulate.
    pub fn confidence(&self) -> Result<RunOutput> {
        let setup = self.setup()?;
        self.require_truth(&setup)?;
        let grid = self.main_grid(&setup)?;
        let mdp = self.mdp(&setup, &grid, self.cfg.dt)?;
        let h = setup.n_candidates();
        let prior = self.cfg.prior;
        let mut t = Table::new(
            "confidence",
            &[
                "truth",
                "n_demos",
                "hypothesis",
                "posterior",
                "top_at_n",
                "posterior_top_at_n",
            ],
        );
        self.stamp(&mut t);
        t.comment(format!("prior={prior}"));
        let mut out = RunOutput::default();
        for (ti, (name, _)) in setup.truths.iter().enumerate() {
            let batch = self.demos(&setup, Some(&setup.truths[ti]))?;
            let ev = self.evidence(&setup, &mdp, &batch.demos, &setup.empty_baseline())?;
            let n_max = self.cfg.ranking.max_demos.min(ev.ids.len());
            let report_at = |n: usize| {
                report_from_parts(
                    h,
                    ev.ids[..n].to_vec(),
                    Vec::new(),
                    ev.profiles[..n].to_vec(),
                    ev.phi[..n].to_vec(),
                    prior,
                )
            };
            let Some(final_top) = report_at(n_max)?.ranking.entries.first().map(|e| e.index) else {
                out.summary.push_str(&format!("{name}: no feasible hypothesis\n"));
                continue;
            };
            for n in 0..=n_max {
                let phis: Vec<f64> = ev.phi[..n].iter().map(|p| p[final_top]).collect();
                let p = posterior(prior, &phis)?;
                let report = report_at(n)?;
                let (top_n, p_top) = if n == 0 {
                    (None, None)
                } else {
                    (report.ranking.entries.first().map(|e| e.index), report.top_posterior)
                };
                t.row(vec![
                    name.clone(),
                    fmt(n),
                    fmt(final_top),
                    fmt(p),
                    fmt_opt(top_n),
                    fmt_opt(p_top),
                ]);
                if n == n_max {
                    out.summary.push_str(&format!(
                        "{name}: hypothesis {final_top} posterior {p:.6} after {n} demos\n"
                    ));
                }
            }
        }
        out.push_table(t)?;
        Ok(out)
    }

    /// Full inference on the configured MDP with the configured demonstrations.
    pub fn inference(&self) -> Result<InferenceRun> {
        let setup = self.setup()?;
        let truth = setup.truths.first();
        let batch = self.demos(&setup, truth)?;
        let clock = Instant::now();
        let grid = self.main_grid(&setup)?;
        let mdp = self.mdp(&setup, &grid, self.cfg.dt)?;
        let report = infer(
            &mdp,
            &setup.extended,
            &batch.demos,
            setup.n_candidates(),
            &setup.empty_baseline(),
            self.cfg.prior,
        )?;
        let elapsed = clock.elapsed();

        let mut output = RunOutput::default();
        let mut buf = format!("# config_hash={}\n# seed={}\n", self.cfg.hash(), self.cfg.seed);
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        buf.push_str(&String::from_utf8(csv).expect("utf-8"));
        output.files.push(("report.csv".into(), buf));

        let mut t = Table::new(
            "top",
            &["rank", "hypothesis", "score[nats]", "bounds", "intersects_truth"],
        );
        self.stamp(&mut t);
        if let Some((name, r)) = truth {
            t.comment(format!("truth={name} bounds={}", bounds_string(r)));
        }
        let mut top = Vec::new();
        for e in report.ranking.top(self.cfg.top_k) {
            let region = &setup.hypotheses.regions[e.index];
            let hit = truth.is_some_and(|(_, r)| region.overlaps(r));
            top.push((e.index, hit));
            t.row(vec![
                fmt(e.rank),
                fmt(e.index),
                fmt(e.score),
                bounds_string(region),
                if truth.is_some() { fmt(hit as u8) } else { String::new() },
            ]);
        }
        output.summary = report.summary(self.cfg.top_k);
        output.push_table(t)?;
        Ok(InferenceRun {
            report,
            output,
            elapsed,
            top,
        })
    }

    /// Inference on the telescoping pendulum, checking the top two hypotheses against
    /// the ground-truth box.
    pub fn tip(&self) -> Result<InferenceRun> {
        if self.cfg.system.name != "tip" {
            return Err(Error::Config("the tip experiment needs system.name = \"tip\"".into()));
        }
        let mut run = self.inference()?;
        let hits = run.top.iter().take(2).filter(|(_, hit)| *hit).count();
        run.output.summary.push_str(&format!(
            "{hits} of the top 2 hypotheses intersect the ground truth; inference took {:.1} s\n",
            run.elapsed.as_secs_f64()
        ));
        Ok(run)
    }

    /// A demonstration next to one trajectory sampled from the truth-constrained MDP
    /// for the same endpoints.
    pub fn compare(&self, demo_id: usize, seed: u64) -> Result<RunOutput> {
        let setup = self.setup()?;
        self.require_truth(&setup)?;
        let batch = self.demos(&setup, Some(&setup.truths[0]))?;
        let demo = batch
            .demos
            .iter()
            .find(|d| d.id == demo_id)
            .ok_or_else(|| Error::Config(format!("no accepted demonstration with id {demo_id}")))?;
        let grid = self.main_grid(&setup)?;
        let mdp = self.mdp(&setup, &grid, self.cfg.dt)?;
        let (start, goal) = demo_endpoints(&mdp, demo)?;
        let horizon = horizon_steps(demo.trajectory.duration(), mdp.dt());
        let problem = PlanningProblem::new(&mdp, horizon, start, &goal, setup.truth_baseline(0))?;
        let (_, pi, _) = solve(&problem)?;
        let traj = sample_trajectory(&problem, &pi, seed)?;

        let mut cols = vec!["source".to_string(), "step".into(), "t[s]".into()];
        cols.extend(state_columns(&setup));
        cols.extend(["cell".to_string(), "action".into()]);
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut t = Table::new("compare", &col_refs);
        self.stamp(&mut t);
        t.comment(format!("demo={demo_id} sample_seed={seed} truth={}", setup.truths[0].0));
        for (k, x) in demo.trajectory.states.iter().enumerate() {
            let mut row = vec!["demo".into(), fmt(k), fmt(k as f64 * demo.trajectory.dt_sim)];
            row.extend(x.iter().map(fmt));
            row.push(fmt_opt(grid.cell_of(x)));
            row.push(String::new());
            t.row(row);
        }
        for (k, &c) in traj.cells.iter().enumerate() {
            let mut row = vec!["mdp".into(), fmt(k), fmt(k as f64 * mdp.dt())];
            row.extend(grid.center_of(c).iter().map(fmt));
            row.push(fmt(c));
            row.push(fmt_opt(traj.actions.get(k)));
            t.row(row);
        }
        let h = setup.n_candidates();
        let mut v = Table::new("compare_violations", &["source", "violations"]);
        self.stamp(&mut v);
        v.row(vec![
            "demo".into(),
            demo_violations(demo, &setup.hypotheses).to_index_string(),
        ]);
        v.row(vec!["mdp".into(), traj.violations.resized(h).to_index_string()]);
        let mut out = RunOutput {
            summary: format!(
                "demo {demo_id}: {} samples; MDP sample: {} steps from cell {} to cell {}\n",
                demo.trajectory.states.len(),
                traj.actions.len(),
                traj.cells[0],
                traj.cells[traj.cells.len() - 1]
            ),
            ..RunOutput::default()
        };
        out.push_table(t)?;
        out.push_table(v)?;
        Ok(out)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// `(truth, n, shuffles, mean rank)` in first-seen truth order. Rows where the truth
/// is unranked are left out of the mean.
pub(crate) fn mean_ranks(rows: &[RankingRow]) -> Vec<(String, usize, usize, f64)> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let k = (r.truth.clone(), r.n_demos);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(truth, n)| {
            let ranks: Vec<f64> = rows
                .iter()
                .filter(|r| r.truth == truth && r.n_demos == n)
                .filter_map(|r| r.truth_rank.map(|x| x as f64))
                .collect();
            let m = mean(&ranks).unwrap_or(f64::NAN);
            (truth, n, ranks.len(), m)
        })
        .collect()
}
