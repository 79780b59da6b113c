//! Demonstration CSV format.
//!
//! Lines starting with `#` are comments. The header row is
//! `demo_id,t[s],<state label>[<unit>]...,<control label>[<unit>]...` and every
//! following row is one time sample of one demonstration. Control columns are empty
//! on a demonstration's final sample. Samples of a demonstration must be contiguous,
//! in time order and uniformly spaced.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::dynamics::{ContinuousTrajectory, ControlVector, StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::inference::Demonstration;

pub fn header(system: &SystemSpec) -> String {
    let mut cols = vec!["demo_id".to_string(), "t[s]".to_string()];
    cols.extend(system.state_dims.iter().map(|d| format!("{}[{}]", d.label, d.unit)));
    cols.extend(system.control_dims.iter().map(|d| format!("{}[{}]", d.label, d.unit)));
    cols.join(",")
}

pub fn write_demos(mut out: impl Write, system: &SystemSpec, demos: &[Demonstration]) -> Result<()> {
    writeln!(out, "{}", header(system))?;
    for d in demos {
        let tr = &d.trajectory;
        for (k, x) in tr.states.iter().enumerate() {
            write!(out, "{},{}", d.id, k as f64 * tr.dt_sim)?;
            for v in x.iter() {
                write!(out, ",{v}")?;
            }
            match tr.controls.get(k) {
                Some(u) => {
                    for v in u.iter() {
                        write!(out, ",{v}")?;
                    }
                }
                None => {
                    for _ in 0..system.control_len() {
                        write!(out, ",")?;
                    }
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(format!("demo csv: {}", msg.into()))
}

/// Time, state and (absent on the last sample) control of one CSV row.
type Row = (f64, Vec<f64>, Option<Vec<f64>>);

/// Read demonstrations. Each demo's start is its first sample and its goal is its last
/// sample, constrained on `goal_dims`.
pub fn read_demos(input: impl Read, system: &SystemSpec, goal_dims: &[usize]) -> Result<Vec<Demonstration>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let n = system.state_len();
    let m = system.control_len();
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 + n + m {
        return Err(bad(format!("expected {} columns, found {}", 2 + n + m, headers.len())));
    }
    let mut rows: BTreeMap<usize, Vec<Row>> = BTreeMap::new();
    let mut order = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| {
                bad(format!(
                    "line {:?}: bad number '{}'",
                    rec.position().map(|p| p.line()),
                    &rec[i]
                ))
            })
        };
        let id: usize = rec[0].parse().map_err(|_| bad(format!("bad demo id '{}'", &rec[0])))?;
        let t = num(1)?;
        let x = (0..n).map(|i| num(2 + i)).collect::<Result<Vec<_>>>()?;
        let u = if (0..m).all(|i| rec[2 + n + i].is_empty()) {
            None
        } else {
            Some((0..m).map(|i| num(2 + n + i)).collect::<Result<Vec<_>>>()?)
        };
        if !rows.contains_key(&id) {
            order.push(id);
        }
        rows.entry(id).or_default().push((t, x, u));
    }

    let mut demos = Vec::with_capacity(order.len());
    for id in order {
        let samples = &rows[&id];
        if samples.len() < 2 {
            return Err(bad(format!("demo {id} has fewer than two samples")));
        }
        let dt = samples[1].0 - samples[0].0;
        if !(dt > 0.0) {
            return Err(bad(format!("demo {id}: time must increase")));
        }
        for w in samples.windows(2) {
            if ((w[1].0 - w[0].0) - dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(bad(format!("demo {id}: non-uniform sampling")));
            }
        }
        let mut controls = Vec::with_capacity(samples.len() - 1);
        for (k, (_, _, u)) in samples[..samples.len() - 1].iter().enumerate() {
            let u = u
                .clone()
                .ok_or_else(|| bad(format!("demo {id}: missing control at sample {k}")))?;
            controls.push(ControlVector(u));
        }
        let trajectory = ContinuousTrajectory {
            dt_sim: dt,
            states: samples.iter().map(|(_, x, _)| StateVector(x.clone())).collect(),
            controls,
        };
        trajectory.validate()?;
        demos.push(Demonstration::from_trajectory(id, trajectory, goal_dims.to_vec()));
    }
    Ok(demos)
}
