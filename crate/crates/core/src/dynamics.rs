//! Continuous control-affine systems and fixed-step RK4 integration.
//!
//! Two vector fields are built in:
//!
//! * `pendulum`: state (θ, θ̇), control u, θ̈ = (g/l)·sin θ + u.
//! * `tip` (telescoping inverted pendulum): state (θ, θ̇, l, l̇), controls (u₁, u₂),
//!   θ̈ = (g/l)·sin θ + u₁ and l̈ = u₂. The angular/linear cross-coupling is omitted.
//!
//! Integration never clamps non-periodic dimensions. Bound handling is left to the
//! discretization layer. Periodic dimensions are wrapped only in returned samples.

use std::f64::consts::PI;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDim {
    pub label: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDim {
    pub label: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VectorField {
    /// Fixed-base pendulum with gravity `g` (m/s²) and length `l` (m).
    Pendulum { g: f64, l: f64 },
    /// Telescoping inverted pendulum; the length is a state, so only `g` is a parameter.
    Tip { g: f64 },
}

impl VectorField {
    fn state_len(&self) -> usize {
        match self {
            VectorField::Pendulum { .. } => 2,
            VectorField::Tip { .. } => 4,
        }
    }

    fn control_len(&self) -> usize {
        match self {
            VectorField::Pendulum { .. } => 1,
            VectorField::Tip { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub state_dims: Vec<StateDim>,
    pub control_dims: Vec<ControlDim>,
    pub field: VectorField,
}

/// A point in state space, ordered like [`SystemSpec::state_dims`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

/// A control input, ordered like [`SystemSpec::control_dims`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector(pub Vec<f64>);

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for ControlVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

impl From<Vec<f64>> for ControlVector {
    fn from(v: Vec<f64>) -> Self {
        ControlVector(v)
    }
}

/// Densely sampled continuous trajectory under piecewise-constant controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousTrajectory {
    pub dt_sim: f64,
    pub states: Vec<StateVector>,
    /// `controls[k]` is applied between `states[k]` and `states[k + 1]`.
    pub controls: Vec<ControlVector>,
}

impl ContinuousTrajectory {
    pub fn duration(&self) -> f64 {
        self.controls.len() as f64 * self.dt_sim
    }

    pub fn first(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_sim > 0.0) {
            return Err(contract(format!("dt_sim must be positive, got {}", self.dt_sim)));
        }
        if self.states.len() != self.controls.len() + 1 {
            return Err(contract(format!(
                "trajectory has {} states but {} controls",
                self.states.len(),
                self.controls.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn wrap_periodic(v: f64, lower: f64, upper: f64) -> f64 {
    let w = lower + (v - lower).rem_euclid(upper - lower);
    // rem_euclid can round up to the span for tiny negative inputs
    if w >= upper {
        lower
    } else {
        w
    }
}

/// Signed difference `a - b` of a periodic coordinate, mapped into [-span/2, span/2).
pub(crate) fn periodic_diff(a: f64, b: f64, span: f64) -> f64 {
    (a - b + 0.5 * span).rem_euclid(span) - 0.5 * span
}

impl SystemSpec {
    /// Pendulum with θ ∈ [0, 2π) periodic, θ̇ ∈ [-6, 6] rad/s and u ∈ [-2, 2].
    pub fn pendulum() -> Self {
        SystemSpec {
            name: "pendulum".into(),
            state_dims: vec![
                StateDim {
                    label: "theta".into(),
                    unit: "rad".into(),
                    lower: 0.0,
                    upper: 2.0 * PI,
                    periodic: true,
                },
                StateDim {
                    label: "theta_dot".into(),
                    unit: "rad/s".into(),
                    lower: -6.0,
                    upper: 6.0,
                    periodic: false,
                },
            ],
            control_dims: vec![ControlDim {
                label: "u".into(),
                unit: "rad/s^2".into(),
                lower: -2.0,
                upper: 2.0,
            }],
            field: VectorField::Pendulum { g: 1.0, l: 1.0 },
        }
    }

    /// Telescoping inverted pendulum with default bounds.
    ///
    /// These bounds are modelling choices: θ ∈ [-π/2, π/2] rad, θ̇ ∈ [-1, 1] rad/s,
    /// l ∈ [0.5, 1.5] m, l̇ ∈ [-0.5, 0.5] m/s, u₁ ∈ [-1, 1] rad/s², u₂ ∈ [-0.5, 0.5] m/s².
    pub fn tip() -> Self {
        let dim = |label: &str, unit: &str, lower: f64, upper: f64| StateDim {
            label: label.into(),
            unit: unit.into(),
            lower,
            upper,
            periodic: false,
        };
        SystemSpec {
            name: "tip".into(),
            state_dims: vec![
                dim("theta", "rad", -PI / 2.0, PI / 2.0),
                dim("theta_dot", "rad/s", -1.0, 1.0),
                dim("length", "m", 0.5, 1.5),
                dim("length_dot", "m/s", -0.5, 0.5),
            ],
            control_dims: vec![
                ControlDim {
                    label: "u_theta".into(),
                    unit: "rad/s^2".into(),
                    lower: -1.0,
                    upper: 1.0,
                },
                ControlDim {
                    label: "u_length".into(),
                    unit: "m/s^2".into(),
                    lower: -0.5,
                    upper: 0.5,
                },
            ],
            field: VectorField::Tip { g: 1.0 },
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "pendulum" => Ok(Self::pendulum()),
            "tip" => Ok(Self::tip()),
            other => Err(Error::Config(format!("unknown system '{other}'"))),
        }
    }

    pub fn state_len(&self) -> usize {
        self.state_dims.len()
    }

    pub fn control_len(&self) -> usize {
        self.control_dims.len()
    }

    pub fn dim_index(&self, label: &str) -> Option<usize> {
        self.state_dims.iter().position(|d| d.label == label)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dims.len() != self.field.state_len() || self.control_dims.len() != self.field.control_len() {
            return Err(contract(format!(
                "system '{}' declares {}/{} state/control dims, vector field needs {}/{}",
                self.name,
                self.state_dims.len(),
                self.control_dims.len(),
                self.field.state_len(),
                self.field.control_len()
            )));
        }
        for d in &self.state_dims {
            if !(d.lower < d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(contract(format!("state dim '{}' has bad bounds", d.label)));
            }
        }
        for d in &self.control_dims {
            if !(d.lower <= d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(contract(format!("control dim '{}' has bad bounds", d.label)));
            }
        }
        if let VectorField::Tip { .. } = self.field {
            if self.state_dims[2].lower <= 0.0 {
                return Err(contract("tip length lower bound must be positive"));
            }
        }
        Ok(())
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_len() || u.len() != self.control_len() {
            return Err(contract(format!(
                "system '{}' expects {} states / {} controls, got {} / {}",
                self.name,
                self.state_len(),
                self.control_len(),
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// Wrap periodic coordinates into `[lower, upper)`.
    pub fn canonicalize(&self, x: &mut [f64]) {
        for (v, d) in x.iter_mut().zip(&self.state_dims) {
            if d.periodic {
                *v = wrap_periodic(*v, d.lower, d.upper);
            }
        }
    }

    /// State time-derivative `h(x, u)`.
    pub fn deriv(&self, x: &StateVector, u: &ControlVector) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        let mut out = vec![0.0; x.len()];
        self.deriv_into(x, u, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn deriv_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match self.field {
            VectorField::Pendulum { g, l } => {
                out[0] = x[1];
                out[1] = g / l * x[0].sin() + u[0];
            }
            VectorField::Tip { g } => {
                out[0] = x[1];
                out[1] = g / x[2] * x[0].sin() + u[0];
                out[2] = x[3];
                out[3] = u[1];
            }
        }
    }

    /// One classical RK4 step of length `h`. No wrapping, no checks.
    pub fn rk4_step(&self, x: &[f64], u: &[f64], h: f64) -> Vec<f64> {
        let n = x.len();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];

        self.deriv_into(x, u, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        self.deriv_into(&tmp, u, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        self.deriv_into(&tmp, u, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        self.deriv_into(&tmp, u, &mut k4);

        (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    fn check_state(&self, x: &[f64], time: f64) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged {
                time,
                reason: "non-finite state".into(),
            });
        }
        if let VectorField::Tip { .. } = self.field {
            if x[2] <= 0.0 {
                return Err(Error::IntegrationDiverged {
                    time,
                    reason: format!("pendulum length {} is not positive", x[2]),
                });
            }
        }
        Ok(())
    }

    /// Integrate under a constant control for `duration`, returning `substeps + 1`
    /// uniformly spaced samples starting at `x0`.
    pub fn integrate_segment(
        &self,
        x0: &StateVector,
        u: &ControlVector,
        duration: f64,
        substeps: usize,
    ) -> Result<Vec<StateVector>> {
        self.check_dims(x0, u)?;
        if !(duration > 0.0) {
            return Err(contract(format!("duration must be positive, got {duration}")));
        }
        if substeps == 0 {
            return Err(contract("substeps must be at least 1"));
        }
        self.check_state(x0, 0.0)?;

        let h = duration / substeps as f64;
        let mut out = Vec::with_capacity(substeps + 1);
        let mut x = x0.0.clone();
        let mut first = x.clone();
        self.canonicalize(&mut first);
        out.push(StateVector(first));
        for k in 1..=substeps {
            x = self.rk4_step(&x, u, h);
            self.check_state(&x, k as f64 * h)?;
            let mut sample = x.clone();
            self.canonicalize(&mut sample);
            out.push(StateVector(sample));
        }
        Ok(out)
    }

    /// Chain constant-control segments of length `step`, sampled at `step / substeps`.
    pub fn rollout(
        &self,
        x0: &StateVector,
        controls: &[ControlVector],
        step: f64,
        substeps: usize,
    ) -> Result<ContinuousTrajectory> {
        if controls.is_empty() {
            return Err(contract("rollout needs at least one control"));
        }
        let mut states = Vec::with_capacity(controls.len() * substeps + 1);
        let mut ctrl = Vec::with_capacity(controls.len() * substeps);
        let mut x = x0.clone();
        for (k, u) in controls.iter().enumerate() {
            let seg = self.integrate_segment(&x, u, step, substeps).map_err(|e| match e {
                Error::IntegrationDiverged { time, reason } => Error::IntegrationDiverged {
                    time: time + k as f64 * step,
                    reason,
                },
                other => other,
            })?;
            if states.is_empty() {
                states.push(seg[0].clone());
            }
            x = seg[substeps].clone();
            states.extend(seg.into_iter().skip(1));
            ctrl.extend(std::iter::repeat_n(u.clone(), substeps));
        }
        Ok(ContinuousTrajectory {
            dt_sim: step / substeps as f64,
            states,
            controls: ctrl,
        })
    }

    /// Normalized Euclidean distance over `dims`: each coordinate difference is divided
    /// by that dimension's bound span, periodic dims use the shortest wrapped difference.
    pub fn normalized_distance(&self, a: &[f64], b: &[f64], dims: &[usize]) -> f64 {
        dims.iter()
            .map(|&i| {
                let d = &self.state_dims[i];
                let span = d.upper - d.lower;
                let diff = if d.periodic {
                    periodic_diff(a[i], b[i], span)
                } else {
                    a[i] - b[i]
                };
                (diff / span).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_dims(&self) -> Vec<usize> {
        (0..self.state_len()).collect()
    }

    /// True if every non-periodic coordinate lies inside its closed bounds.
    pub fn in_bounds(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.state_dims)
            .all(|(&v, d)| d.periodic || (v >= d.lower && v <= d.upper))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[f64]) -> StateVector {
        StateVector(v.to_vec())
    }
    fn cv(v: &[f64]) -> ControlVector {
        ControlVector(v.to_vec())
    }

    #[test]
    fn pendulum_deriv_examples() {
        let p = SystemSpec::pendulum();
        let d = p.deriv(&sv(&[PI, 0.0]), &cv(&[0.0])).unwrap();
        assert_eq!(d[0], 0.0);
        assert!(d[1].abs() < 1e-15);
        assert_eq!(p.deriv(&sv(&[PI / 2.0, 0.0]), &cv(&[0.0])).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn tip_deriv_example() {
        let t = SystemSpec::tip();
        let d = t.deriv(&sv(&[0.0, 0.0, 1.0, 0.5]), &cv(&[0.0, -0.2])).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 0.5, -0.2]);
    }

    #[test]
    fn deriv_rejects_dimension_mismatch() {
        let p = SystemSpec::pendulum();
        assert!(matches!(
            p.deriv(&sv(&[0.0, 0.0, 0.0]), &cv(&[0.0])),
            Err(Error::Contract(_))
        ));
        assert!(matches!(p.deriv(&sv(&[0.0, 0.0]), &cv(&[])), Err(Error::Contract(_))));
    }

    #[test]
    fn deriv_is_bit_identical_on_repeat() {
        let p = SystemSpec::pendulum();
        let x = sv(&[1.234567, -0.3]);
        let u = cv(&[0.7]);
        let a = p.deriv(&x, &u).unwrap();
        let b = p.deriv(&x, &u).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn segment_from_equilibrium_is_constant() {
        let p = SystemSpec::pendulum();
        let s = p.integrate_segment(&sv(&[0.0, 0.0]), &cv(&[0.0]), 2.3, 17).unwrap();
        assert_eq!(s.len(), 18);
        assert!(s.iter().all(|x| x.0 == vec![0.0, 0.0]));
    }

    #[test]
    fn segment_matches_linearized_growth() {
        // θ̈ = sin θ ≈ θ, so θ(t) ≈ θ0·cosh(t) for small θ0
        let p = SystemSpec::pendulum();
        let s = p.integrate_segment(&sv(&[0.01, 0.0]), &cv(&[0.0]), 0.5, 50).unwrap();
        let expected = 0.01 * 0.5f64.cosh();
        assert!(((s[50][0] - expected) / expected).abs() < 1e-4);
    }

    #[test]
    fn tip_length_is_a_double_integrator() {
        let t = SystemSpec::tip();
        let s = t
            .integrate_segment(&sv(&[0.0, 0.0, 1.0, 0.0]), &cv(&[0.0, 0.4]), 1.0, 10)
            .unwrap();
        let end = &s[10];
        assert!((end[2] - 1.2).abs() < 1e-12);
        assert!((end[3] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn tip_nonpositive_length_diverges() {
        let t = SystemSpec::tip();
        let r = t.integrate_segment(&sv(&[0.0, 0.0, 0.6, -1.0]), &cv(&[0.0, -0.5]), 2.0, 20);
        assert!(matches!(r, Err(Error::IntegrationDiverged { .. })));
    }

    #[test]
    fn periodic_samples_are_canonical() {
        let p = SystemSpec::pendulum();
        let s = p.integrate_segment(&sv(&[6.2, 5.0]), &cv(&[2.0]), 1.0, 20).unwrap();
        assert!(s.iter().all(|x| (0.0..2.0 * PI).contains(&x[0])));
        let s = p.integrate_segment(&sv(&[0.05, -5.0]), &cv(&[-2.0]), 1.0, 20).unwrap();
        assert!(s.iter().all(|x| (0.0..2.0 * PI).contains(&x[0])));
    }

    #[test]
    fn segment_contract_errors() {
        let p = SystemSpec::pendulum();
        assert!(p.integrate_segment(&sv(&[0.0, 0.0]), &cv(&[0.0]), 0.0, 1).is_err());
        assert!(p.integrate_segment(&sv(&[0.0, 0.0]), &cv(&[0.0]), 1.0, 0).is_err());
        assert!(p.rollout(&sv(&[0.0, 0.0]), &[], 0.1, 1).is_err());
    }

    #[test]
    fn single_step_rollout_equals_segment() {
        let p = SystemSpec::pendulum();
        let x0 = sv(&[1.0, 0.5]);
        let u = cv(&[0.3]);
        let seg = p.integrate_segment(&x0, &u, 0.4, 8).unwrap();
        let tr = p.rollout(&x0, std::slice::from_ref(&u), 0.4, 8).unwrap();
        assert_eq!(tr.states, seg);
        assert_eq!(tr.controls.len(), 8);
        tr.validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_bounds() {
        let mut p = SystemSpec::pendulum();
        p.state_dims[1].upper = -7.0;
        assert!(p.validate().is_err());
        let mut t = SystemSpec::tip();
        t.state_dims[2].lower = 0.0;
        assert!(t.validate().is_err());
        SystemSpec::pendulum().validate().unwrap();
        SystemSpec::tip().validate().unwrap();
    }

    #[test]
    fn wrapped_distance_uses_short_way_round() {
        let p = SystemSpec::pendulum();
        let d = p.normalized_distance(&[0.05, 0.0], &[2.0 * PI - 0.05, 0.0], &[0, 1]);
        assert!((d - 0.1 / (2.0 * PI)).abs() < 1e-12);
    }
}
