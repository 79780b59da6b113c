//! iLQR on the RK4-discretized dynamics with a squared-control running cost, a smooth
//! keep-out penalty and a quadratic terminal cost on the goal dimensions.
//!
//! Dynamics Jacobians come from central finite differences of one RK4 step. The
//! penalty enters in residual form, so its Hessian is the Gauss-Newton outer product.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{periodic_diff, ContinuousTrajectory, ControlVector, StateVector, SystemSpec};
use crate::error::{contract, Error, Result};
use crate::gridmdp::{HypothesisSet, Region};
use crate::inference::GoalSpec;

const FD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    /// Terminal weight on the squared normalized goal distance.
    pub terminal: f64,
    /// Weight of the keep-out penalty (per second).
    pub penalty: f64,
    /// Margin added around the keep-out box, as a fraction of each dimension's span.
    pub margin: f64,
    /// Softplus sharpness, in inverse normalized units.
    pub sharpness: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            terminal: 1e4,
            penalty: 1e5,
            margin: 0.02,
            sharpness: 60.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoProblem<'a> {
    pub system: &'a SystemSpec,
    pub start: StateVector,
    pub goal: GoalSpec,
    /// Horizon in seconds.
    pub horizon: f64,
    pub dt_sim: f64,
    pub keep_out: Option<Region>,
    pub weights: CostWeights,
}

impl DemoProblem<'_> {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt_sim).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt_sim > 0.0 && self.horizon > 0.0) {
            return Err(contract("horizon and dt_sim must be positive"));
        }
        let steps = self.horizon / self.dt_sim;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(contract("horizon must be an integer multiple of dt_sim"));
        }
        if self.start.len() != self.system.state_len() || self.goal.state.len() != self.system.state_len() {
            return Err(contract("start/goal dimensionality mismatch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IlqrResult {
    pub trajectory: ContinuousTrajectory,
    pub cost: f64,
    pub goal_error: f64,
    pub converged: bool,
    pub violated_keep_out: bool,
    pub left_bounds: bool,
    pub iterations: usize,
    /// Costs of the initial rollout and every accepted iterate.
    pub cost_history: Vec<f64>,
}

/// Smooth penalty on penetration into the margin-expanded keep-out box.
struct Penalty {
    dims: Vec<PenaltyDim>,
    weight: f64,
    sharpness: f64,
}

struct PenaltyDim {
    index: usize,
    center: f64,
    half: f64,
    span: f64,
    periodic: bool,
}

impl Penalty {
    fn new(system: &SystemSpec, region: &Region, w: &CostWeights) -> Self {
        let dims = region
            .bounds
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                b.map(|(lo, hi)| {
                    let d = &system.state_dims[i];
                    let span = d.upper - d.lower;
                    PenaltyDim {
                        index: i,
                        center: 0.5 * (lo + hi),
                        half: 0.5 * (hi - lo) + w.margin * span,
                        span,
                        periodic: d.periodic,
                    }
                })
            })
            .collect();
        Penalty {
            dims,
            weight: w.penalty,
            sharpness: w.sharpness,
        }
    }

    /// Normalized penetration depth (positive inside) and its gradient.
    fn depth(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut best = f64::INFINITY;
        let mut grad = vec![0.0; x.len()];
        let mut arg = None;
        for d in &self.dims {
            let off = if d.periodic {
                periodic_diff(x[d.index], d.center, d.span)
            } else {
                x[d.index] - d.center
            };
            let depth = (d.half - off.abs()) / d.span;
            if depth < best {
                best = depth;
                arg = Some((d.index, -off.signum() / d.span));
            }
        }
        if let Some((i, g)) = arg {
            grad[i] = g;
        }
        (best, grad)
    }

    /// Residual ρ(x) = softplus(k·depth)/k with gradient; the cost is weight·ρ².
    fn residual(&self, x: &[f64]) -> (f64, Vec<f64>) {
        if self.dims.is_empty() {
            return (0.0, vec![0.0; x.len()]);
        }
        let (depth, grad) = self.depth(x);
        let z = self.sharpness * depth;
        let rho = if z > 30.0 {
            depth
        } else {
            z.exp().ln_1p() / self.sharpness
        };
        let sig = 1.0 / (1.0 + (-z).exp());
        (rho, grad.into_iter().map(|g| g * sig).collect())
    }
}

struct Model<'a> {
    p: &'a DemoProblem<'a>,
    penalty: Option<Penalty>,
    n: usize,
    m: usize,
    steps: usize,
}

impl<'a> Model<'a> {
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.p.system.rk4_step(x, u, self.p.dt_sim)
    }

    fn rollout(&self, controls: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut xs = Vec::with_capacity(self.steps + 1);
        xs.push(self.p.start.0.clone());
        for u in controls {
            let next = self.step(xs.last().unwrap(), u);
            xs.push(next);
        }
        xs
    }

    fn terminal_residuals(&self, x: &[f64]) -> Vec<(usize, f64, f64)> {
        self.p
            .goal
            .dims
            .iter()
            .map(|&i| {
                let d = &self.p.system.state_dims[i];
                let span = d.upper - d.lower;
                let diff = if d.periodic {
                    periodic_diff(x[i], self.p.goal.state[i], span)
                } else {
                    x[i] - self.p.goal.state[i]
                };
                (i, diff / span, span)
            })
            .collect()
    }

    fn cost(&self, xs: &[Vec<f64>], us: &[Vec<f64>]) -> f64 {
        let dt = self.p.dt_sim;
        let mut j = 0.0;
        for (x, u) in xs.iter().zip(us) {
            j += u.iter().map(|v| v * v).sum::<f64>() * dt;
            if let Some(pen) = &self.penalty {
                let (r, _) = pen.residual(x);
                j += pen.weight * r * r * dt;
            }
        }
        let last = xs.last().unwrap();
        if let Some(pen) = &self.penalty {
            let (r, _) = pen.residual(last);
            j += pen.weight * r * r * dt;
        }
        j + self.p.weights.terminal * self.terminal_residuals(last).iter().map(|(_, r, _)| r * r).sum::<f64>()
    }

    fn jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut a = DMatrix::zeros(self.n, self.n);
        let mut b = DMatrix::zeros(self.n, self.m);
        let mut xp = x.to_vec();
        for i in 0..self.n {
            xp[i] = x[i] + FD_EPS;
            let fp = self.step(&xp, u);
            xp[i] = x[i] - FD_EPS;
            let fm = self.step(&xp, u);
            xp[i] = x[i];
            for r in 0..self.n {
                a[(r, i)] = (fp[r] - fm[r]) / (2.0 * FD_EPS);
            }
        }
        let mut up = u.to_vec();
        for i in 0..self.m {
            up[i] = u[i] + FD_EPS;
            let fp = self.step(x, &up);
            up[i] = u[i] - FD_EPS;
            let fm = self.step(x, &up);
            up[i] = u[i];
            for r in 0..self.n {
                b[(r, i)] = (fp[r] - fm[r]) / (2.0 * FD_EPS);
            }
        }
        (a, b)
    }

    /// Gradient and Gauss-Newton Hessian of the state-dependent running cost.
    fn state_cost_derivs(&self, x: &[f64], scale: f64) -> (DVector<f64>, DMatrix<f64>) {
        let mut lx = DVector::zeros(self.n);
        let mut lxx = DMatrix::zeros(self.n, self.n);
        if let Some(pen) = &self.penalty {
            let (r, g) = pen.residual(x);
            let g = DVector::from_vec(g);
            lx += &g * (2.0 * pen.weight * r * scale);
            lxx += &g * g.transpose() * (2.0 * pen.weight * scale);
        }
        (lx, lxx)
    }

    fn terminal_derivs(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (mut vx, mut vxx) = self.state_cost_derivs(x, self.p.dt_sim);
        let w = self.p.weights.terminal;
        for (i, r, span) in self.terminal_residuals(x) {
            vx[i] += 2.0 * w * r / span;
            vxx[(i, i)] += 2.0 * w / (span * span);
        }
        (vx, vxx)
    }
}

type Gains = (Vec<DVector<f64>>, Vec<DMatrix<f64>>);

fn backward(model: &Model, xs: &[Vec<f64>], us: &[Vec<f64>], mu: f64) -> Option<Gains> {
    let dt = model.p.dt_sim;
    let (mut vx, mut vxx) = model.terminal_derivs(xs.last().unwrap());
    let mut ks = vec![DVector::zeros(model.m); model.steps];
    let mut kk = vec![DMatrix::zeros(model.m, model.n); model.steps];
    for t in (0..model.steps).rev() {
        let (a, b) = model.jacobians(&xs[t], &us[t]);
        let (lx, lxx) = model.state_cost_derivs(&xs[t], dt);
        let u = DVector::from_column_slice(&us[t]);
        let lu = &u * (2.0 * dt);
        let luu = DMatrix::<f64>::identity(model.m, model.m) * (2.0 * dt);

        let qx = lx + a.transpose() * &vx;
        let qu = lu + b.transpose() * &vx;
        let qxx = lxx + a.transpose() * &vxx * &a;
        let quu = luu + b.transpose() * &vxx * &b;
        let qux = b.transpose() * &vxx * &a;

        let quu_reg = &quu + DMatrix::<f64>::identity(model.m, model.m) * mu;
        let chol = quu_reg.cholesky()?;
        let k = -chol.solve(&qu);
        let big_k = -chol.solve(&qux);

        vx = &qx + big_k.transpose() * &quu * &k + big_k.transpose() * &qu + qux.transpose() * &k;
        vxx = &qxx + big_k.transpose() * &quu * &big_k + big_k.transpose() * &qux + qux.transpose() * &big_k;
        vxx = (&vxx + vxx.transpose()) * 0.5;
        ks[t] = k;
        kk[t] = big_k;
    }
    Some((ks, kk))
}

fn forward(
    model: &Model,
    xs: &[Vec<f64>],
    us: &[Vec<f64>],
    gains: &Gains,
    alpha: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (ks, kk) = gains;
    let mut new_x = Vec::with_capacity(xs.len());
    let mut new_u = Vec::with_capacity(us.len());
    new_x.push(xs[0].clone());
    for t in 0..model.steps {
        let dx = DVector::from_column_slice(&new_x[t]) - DVector::from_column_slice(&xs[t]);
        let du = &ks[t] * alpha + &kk[t] * dx;
        let u: Vec<f64> = us[t].iter().zip(du.iter()).map(|(a, b)| a + b).collect();
        let next = model.step(&new_x[t], &u);
        new_u.push(u);
        new_x.push(next);
    }
    (new_x, new_u)
}

/// Optimize controls from `init_controls` for at most `max_iters` iterations and
/// return the best iterate.
pub fn ilqr_solve(problem: &DemoProblem, init_controls: &[ControlVector], max_iters: usize) -> Result<IlqrResult> {
    problem.validate()?;
    let steps = problem.steps();
    if init_controls.len() != steps {
        return Err(contract(format!(
            "expected {steps} initial controls, got {}",
            init_controls.len()
        )));
    }
    let model = Model {
        p: problem,
        penalty: problem
            .keep_out
            .as_ref()
            .map(|r| Penalty::new(problem.system, r, &problem.weights)),
        n: problem.system.state_len(),
        m: problem.system.control_len(),
        steps,
    };

    let mut us: Vec<Vec<f64>> = init_controls.iter().map(|u| u.0.clone()).collect();
    let mut xs = model.rollout(&us);
    let mut cost = model.cost(&xs, &us);
    if !cost.is_finite() {
        return Err(Error::OptimizationDiverged(
            "initial rollout has non-finite cost".into(),
        ));
    }
    let mut history = vec![cost];
    let mut mu = 1e-6;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let Some(gains) = backward(&model, &xs, &us, mu) else {
            mu *= 10.0;
            if mu > 1e8 {
                break;
            }
            continue;
        };
        let mut accepted = None;
        let mut alpha = 1.0;
        while alpha > 1e-4 {
            let (nx, nu) = forward(&model, &xs, &us, &gains, alpha);
            let c = model.cost(&nx, &nu);
            if c.is_finite() && c < cost {
                accepted = Some((nx, nu, c));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((nx, nu, c)) => {
                let rel = (cost - c) / cost.max(1e-12);
                xs = nx;
                us = nu;
                cost = c;
                history.push(c);
                mu = (mu * 0.1).max(1e-9);
                if rel < 1e-6 {
                    converged = true;
                    break;
                }
            }
            None => {
                mu *= 10.0;
                if mu > 1e8 {
                    converged = true;
                    break;
                }
            }
        }
    }

    let system = problem.system;
    let mut states: Vec<StateVector> = xs
        .into_iter()
        .map(|mut x| {
            system.canonicalize(&mut x);
            StateVector(x)
        })
        .collect();
    if states.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::OptimizationDiverged(
            "non-finite state in final trajectory".into(),
        ));
    }
    let goal_error = system.normalized_distance(states.last().unwrap(), &problem.goal.state, &problem.goal.dims);
    let left_bounds = states.iter().any(|x| !system.in_bounds(x));
    let violated_keep_out = match &problem.keep_out {
        None => false,
        Some(r) => {
            let k = HypothesisSet::new(HypothesisSet::extents_of(system), vec![r.clone()])?;
            states.iter().any(|x| k.contains(0, x))
        }
    };
    states.shrink_to_fit();
    Ok(IlqrResult {
        trajectory: ContinuousTrajectory {
            dt_sim: problem.dt_sim,
            states,
            controls: us.into_iter().map(ControlVector).collect(),
        },
        cost,
        goal_error,
        converged,
        violated_keep_out,
        left_bounds,
        iterations,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn zeros(n: usize, m: usize) -> Vec<ControlVector> {
        vec![ControlVector(vec![0.0; m]); n]
    }

    #[test]
    fn stationary_problem_stays_put() {
        let sys = SystemSpec::pendulum();
        let p = DemoProblem {
            system: &sys,
            start: StateVector(vec![0.0, 0.0]),
            goal: GoalSpec {
                state: StateVector(vec![0.0, 0.0]),
                dims: vec![0, 1],
            },
            horizon: 5.0,
            dt_sim: 0.01,
            keep_out: None,
            weights: CostWeights::default(),
        };
        let r = ilqr_solve(&p, &zeros(500, 1), 10).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.goal_error, 0.0);
        assert!(r.trajectory.controls.iter().all(|u| u[0] == 0.0));
        assert_eq!(r.trajectory.states.len(), 501);
    }

    #[test]
    fn tip_length_move_matches_minimum_energy() {
        let sys = SystemSpec::tip();
        let p = DemoProblem {
            system: &sys,
            start: StateVector(vec![0.0, 0.0, 1.0, 0.0]),
            goal: GoalSpec {
                state: StateVector(vec![0.0, 0.0, 1.5, 0.0]),
                dims: vec![0, 2],
            },
            horizon: 5.0,
            dt_sim: 0.01,
            keep_out: None,
            weights: CostWeights::default(),
        };
        let r = ilqr_solve(&p, &zeros(500, 2), 10).unwrap();
        // free terminal velocity: u(t) = c·(T − t), energy 3Δ²/T³
        let (delta, horizon) = (0.5f64, 5.0f64);
        let optimum = 3.0 * delta * delta / horizon.powi(3);
        let energy: f64 = r
            .trajectory
            .controls
            .iter()
            .map(|u| u[0] * u[0] + u[1] * u[1])
            .sum::<f64>()
            * 0.01;
        assert!(
            (energy - optimum).abs() / optimum < 0.05,
            "energy {energy} vs {optimum}"
        );
        assert!(r.goal_error < 1e-3);
    }

    #[test]
    fn cost_history_is_nonincreasing() {
        let sys = SystemSpec::pendulum();
        let p = DemoProblem {
            system: &sys,
            start: StateVector(vec![PI, 0.0]),
            goal: GoalSpec {
                state: StateVector(vec![PI + 1.0, 0.5]),
                dims: vec![0, 1],
            },
            horizon: 5.0,
            dt_sim: 0.01,
            keep_out: Some(Region::from_dims(2, &[(0, PI + 0.3, PI + 0.6), (1, 0.0, 1.2)])),
            weights: CostWeights::default(),
        };
        let r = ilqr_solve(&p, &zeros(500, 1), 10).unwrap();
        assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*r.cost_history.last().unwrap(), r.cost);
    }

    #[test]
    fn penalty_vanishes_far_outside() {
        let sys = SystemSpec::pendulum();
        let region = Region::from_dims(2, &[(0, PI, 1.2 * PI), (1, 0.0, 1.2)]);
        let pen = Penalty::new(&sys, &region, &CostWeights::default());
        let (r_far, _) = pen.residual(&[0.5, -4.0]);
        let (r_in, g_in) = pen.residual(&[1.1 * PI, 0.6]);
        assert!(r_far < 1e-10);
        assert!(r_in > 0.01);
        assert!(g_in.iter().any(|g| *g != 0.0));
    }

    #[test]
    fn rejects_wrong_init_length() {
        let sys = SystemSpec::pendulum();
        let p = DemoProblem {
            system: &sys,
            start: StateVector(vec![0.0, 0.0]),
            goal: GoalSpec {
                state: StateVector(vec![0.0, 0.0]),
                dims: vec![0, 1],
            },
            horizon: 1.0,
            dt_sim: 0.01,
            keep_out: None,
            weights: CostWeights::default(),
        };
        assert!(ilqr_solve(&p, &zeros(5, 1), 10).is_err());
    }
}
