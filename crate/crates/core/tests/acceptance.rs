//! Acceptance checks. Prints one PASS/FAIL line per criterion and a tally. The exit
//! status is nonzero on failure only with MLCI_ACCEPTANCE_STRICT=1, so a failing
//! criterion does not stop cargo from running the remaining test targets.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use common::*;
use mlci::config::ExperimentConfig;
use mlci::dynamics::{ControlVector, StateVector, SystemSpec};
use mlci::experiment::{RunOutput, Runner};
use mlci::inference::posterior;
use mlci::maxent::{backward_pass, solve};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

static TOTAL: AtomicUsize = AtomicUsize::new(0);
static FAILED: AtomicUsize = AtomicUsize::new(0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).expect("config loads")
}

/// Value of `col` in the first row of `table` whose leading columns equal `key`.
fn lookup(out: &RunOutput, table: &str, key: &[&str], col: &str) -> Option<String> {
    let t = out.table(table)?;
    let c = t.column(col)?;
    t.rows()
        .iter()
        .find(|r| key.iter().zip(r.iter()).all(|(k, v)| k == v))
        .map(|r| r[c].clone())
}

fn oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let s = run_oracle(&mut rng, 60);
    let worst = s.max_beta_err.max(s.max_phi_err).max(s.max_partition_err);
    outcome(
        s.instances >= 50 && worst <= 1e-10,
        format!(
            "{} instances, max error beta {:.1e} phi {:.1e} partition {:.1e}",
            s.instances, s.max_beta_err, s.max_phi_err, s.max_partition_err
        ),
    )
}

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut occ, mut mono, mut absorb, mut shift) = (0.0f64, true, true, 0.0f64);
    let mut checked = 0;
    while checked < 100 {
        let inst = random_instance(&mut rng);
        let problem = inst.problem();
        if backward_pass(&problem).is_err() {
            continue;
        }
        checked += 1;
        let (b1, p1, f1) = solve(&problem).unwrap();
        for t in 0..=inst.horizon {
            occ = occ.max((f1.occupancy(t).iter().sum::<f64>() - 1.0).abs());
        }
        for (s, &m) in f1.occupancy(inst.horizon).iter().enumerate() {
            absorb &= m == 0.0 || inst.goal.contains(&s);
        }
        for i in 0..inst.mdp.n_hypotheses() {
            mono &= f1.phi_trace(i).windows(2).all(|w| w[1] >= w[0]);
        }
        let c = 1.7;
        let dt = inst.mdp.dt();
        let shifted = inst
            .problem()
            .with_step_rewards(inst.rewards.iter().map(|r| r + c * dt).collect())
            .unwrap();
        let (b2, p2, f2) = solve(&shifted).unwrap();
        let expected = b1.log_beta(0, inst.start) + c * inst.horizon as f64 * dt;
        shift = shift.max((b2.log_beta(0, inst.start) - expected).abs() / expected.abs().max(1.0));
        for t in 0..inst.horizon {
            for s in 0..inst.mdp.n_states() {
                for (x, y) in p1.row(t, s).iter().zip(p2.row(t, s)) {
                    shift = shift.max((x - y).abs());
                }
            }
        }
        for i in 0..inst.mdp.n_hypotheses() {
            shift = shift.max((f1.phi(i, inst.horizon) - f2.phi(i, inst.horizon)).abs());
        }
    }
    outcome(
        occ <= 1e-9 && mono && absorb && shift <= 1e-12,
        format!(
            "{checked} instances, occupancy error {occ:.1e}, phi monotone {mono}, goal absorption {absorb}, shift error {shift:.1e}"
        ),
    )
}

fn integrator() -> Outcome {
    let sys = SystemSpec::pendulum();
    let end = |n: usize| {
        let x = sys
            .integrate_segment(&StateVector(vec![2.0, 0.5]), &ControlVector(vec![0.3]), 2.0, n)
            .unwrap();
        x.last().unwrap().0.clone()
    };
    let reference = end(4000);
    let err = |v: Vec<f64>| ((v[0] - reference[0]).powi(2) + (v[1] - reference[1]).powi(2)).sqrt();
    let factor = err(end(20)) / err(end(40));
    outcome(
        factor >= 8.0,
        format!("convergence factor {factor:.2} on substep halving"),
    )
}

fn ranking(out: &RunOutput, runner: &Runner) -> Outcome {
    let n = runner.cfg.ranking.max_demos.to_string();
    let mut pass = runner.cfg.ranking.shuffles >= 5;
    let mut parts = Vec::new();
    for (name, _) in runner.setup().unwrap().truths {
        match lookup(out, "ranking_summary", &[&name, &n], "mean_truth_rank").and_then(|v| v.parse::<f64>().ok()) {
            Some(r) => {
                pass &= r <= 5.0;
                parts.push(format!("{name} mean rank {r:.2} at N={n}"));
            }
            None => {
                pass = false;
                parts.push(format!("{name} has no N={n} row (too few usable demos)"));
            }
        }
    }
    parts.push(
        out.summary
            .lines()
            .filter(|l| l.starts_with("truth="))
            .collect::<Vec<_>>()
            .join("; "),
    );
    outcome(pass, parts.join(", "))
}

fn top_never_violated(ranking: Option<&RunOutput>, runs: &[(&str, &mlci::inference::InferenceReport)]) -> Outcome {
    let mut checked = 0;
    let mut violated = Vec::new();
    if let Some(t) = ranking.and_then(|o| o.table("ranking")) {
        let c = t.column("top_violated").unwrap();
        for r in t.rows() {
            checked += 1;
            if r[c] != "0" {
                violated.push(format!("ranking row {}", r.join(" ")));
            }
        }
    }
    for (name, report) in runs {
        checked += 1;
        if let Some(top) = report.ranking.entries.first() {
            if report.profiles.iter().any(|p| p.contains(top.index)) {
                violated.push(name.to_string());
            }
        }
    }
    outcome(
        violated.is_empty() && checked > 0,
        format!(
            "{checked} inference runs, violations: {}",
            if violated.is_empty() {
                "none".into()
            } else {
                violated.join(", ")
            }
        ),
    )
}

fn distance(out: &RunOutput) -> Outcome {
    let get = |cells: &str, col: &str| lookup(out, "distance", &["all", cells, "0.1"], col);
    let trials = |c: &str| get(c, "trials").and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    let mean = |c: &str| get(c, "mean_distance").and_then(|v| v.parse::<f64>().ok());
    let (t100, t400) = (trials("100"), trials("400"));
    let (m100, m400) = (mean("100"), mean("400"));
    let pass = t100 >= 30 && t400 >= 30 && matches!((m100, m400), (Some(a), Some(b)) if b <= a);
    outcome(
        pass,
        format!("100 cells: {t100} trials mean {m100:?}; 400 cells: {t400} trials mean {m400:?}"),
    )
}

fn accuracy(out: &RunOutput) -> Outcome {
    let get = |cells: &str, col: &str| lookup(out, "accuracy", &["all", cells, "0.1"], col);
    let err = |c: &str| get(c, "mean_goal_error").and_then(|v| v.parse::<f64>().ok());
    let (e100, e900) = (err("100"), err("900"));
    let pass = matches!((e100, e900), (Some(a), Some(b)) if b < a);
    outcome(
        pass,
        format!(
            "100 cells: error {e100:?} over {} reachable pairs; 900 cells: error {e900:?} over {} reachable pairs",
            get("100", "reachable").unwrap_or_default(),
            get("900", "reachable").unwrap_or_default()
        ),
    )
}

fn tip(run: &mlci::experiment::InferenceRun) -> Outcome {
    let top2: Vec<_> = run.top.iter().take(2).collect();
    let pass = top2.len() == 2 && top2.iter().all(|t| t.1) && run.elapsed <= Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "top-2 {top2:?} (hypothesis, intersects truth), {:.1} s",
            run.elapsed.as_secs_f64()
        ),
    )
}

fn bayes() -> Outcome {
    let a = posterior(0.5, &[0.5]).unwrap();
    let b = posterior(0.5, &[0.5, 0.5]).unwrap();
    let c = posterior(0.3, &[]).unwrap();
    let d = posterior(0.3, &[0.0, 0.0]).unwrap();
    let pass = (a - 2.0 / 3.0).abs() <= 1e-12 && (b - 0.8).abs() <= 1e-12 && c == 0.3 && d == 0.3;
    outcome(pass, format!("{a} {b} {c} {d}"))
}

fn determinism() -> Outcome {
    let make = || {
        let cfg = ExperimentConfig::from_toml(
            r#"
cells = [20, 20]
dt = 0.2
horizon = 3.0
[demos]
n_pairs = 12
[accuracy]
cells = [100, 400]
dts = [0.2]
pairs = 10
[ranking]
max_demos = 4
shuffles = 2
[distance]
cells = [400]
dts = [0.2]
"#,
        )
        .unwrap();
        Runner::new(cfg, None).unwrap()
    };
    let all = |r: &Runner| -> Vec<(String, String)> {
        let mut files = Vec::new();
        for out in [
            r.build_mdp().unwrap(),
            r.gen_demos().unwrap(),
            r.inference().unwrap().output,
            r.accuracy().unwrap(),
            r.ranking().unwrap(),
            r.distance().unwrap(),
            r.confidence().unwrap(),
            r.compare(0, 4).unwrap(),
        ] {
            files.extend(out.files);
        }
        files
    };
    let (a, b) = (all(&make()), all(&make()));
    let same = a == b;
    outcome(same, format!("{} CSV files compared byte for byte", a.len()))
}

fn report(name: &str, o: &Outcome) -> bool {
    TOTAL.fetch_add(1, Ordering::Relaxed);
    if !o.pass {
        FAILED.fetch_add(1, Ordering::Relaxed);
    }
    println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= report("oracle equivalence", &oracle());
    ok &= report("max-ent invariants", &invariants());
    ok &= report("integrator order", &integrator());
    ok &= report("bayes posterior", &bayes());
    ok &= report("determinism", &determinism());

    let cache: PathBuf = tempfile::tempdir().unwrap().keep();
    let mut cfg = config("pendulum.toml");
    cfg.accuracy.cells = vec![100, 900];
    cfg.accuracy.dts = vec![0.1];
    let runner = Runner::new(cfg, Some(cache.clone())).unwrap();

    let ranking_out = runner.ranking();
    let infer = runner.inference();
    match &ranking_out {
        Ok(out) => ok &= report("pendulum ranking", &ranking(out, &runner)),
        Err(e) => ok &= report("pendulum ranking", &outcome(false, e.to_string())),
    }
    match runner.distance() {
        Ok(out) => ok &= report("distance trend", &distance(&out)),
        Err(e) => ok &= report("distance trend", &outcome(false, e.to_string())),
    }
    match runner.accuracy() {
        Ok(out) => ok &= report("accuracy trend", &accuracy(&out)),
        Err(e) => ok &= report("accuracy trend", &outcome(false, e.to_string())),
    }
    let tip_run = Runner::new(config("tip.toml"), None).unwrap().tip();
    match &tip_run {
        Ok(run) => ok &= report("tip experiment", &tip(run)),
        Err(e) => ok &= report("tip experiment", &outcome(false, e.to_string())),
    }
    let mut runs = Vec::new();
    if let Ok(r) = &infer {
        runs.push(("pendulum inference", &r.report));
    }
    if let Ok(r) = &tip_run {
        runs.push(("tip inference", &r.report));
    }
    ok &= report(
        "no demonstration violates the top constraint",
        &top_never_violated(ranking_out.as_ref().ok(), &runs),
    );
    let _ = std::fs::remove_dir_all(&cache);

    let total = TOTAL.load(Ordering::Relaxed);
    println!(
        "acceptance: {passed} of {total} criteria PASS",
        passed = total - FAILED.load(Ordering::Relaxed)
    );
    let strict = std::env::var("MLCI_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if ok || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
