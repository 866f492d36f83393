//! Fixed-step integrator for autonomous systems with one discrete delay.
//!
//! The method of steps on a grid aligned with the delay: `delay = m * dt`, so
//! the delayed argument of every grid point is an earlier grid point. Each
//! step is classical RK4. The midpoint stages need the delayed state half a
//! step off the grid; it comes from the cubic Hermite interpolant of the
//! stored (value, derivative) pairs, which keeps the scheme fourth order.

use crate::error::{IntegrateError, RhsFault};
use crate::scalar::{as_f64, from_usize, lit, Scalar};
use crate::types::Trajectory;

/// Largest accepted number of steps per delay interval.
pub const MAX_STEPS_PER_DELAY: usize = 10_000_000;

/// Right-hand side `x'(t) = f(t, x(t), x(t - delay))`.
pub trait DelaySystem<T: Scalar> {
    fn dimension(&self) -> usize;
    fn rhs(&self, t: T, state: &[T], delayed: &[T], out: &mut [T]) -> Result<(), RhsFault>;
}

impl<T: Scalar, S: DelaySystem<T> + ?Sized> DelaySystem<T> for &S {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn rhs(&self, t: T, state: &[T], delayed: &[T], out: &mut [T]) -> Result<(), RhsFault> {
        (**self).rhs(t, state, delayed, out)
    }
}

/// Wraps a closure as a [`DelaySystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T, F> DelaySystem<T> for FnSystem<F>
where
    T: Scalar,
    F: Fn(T, &[T], &[T], &mut [T]),
{
    fn dimension(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: T, state: &[T], delayed: &[T], out: &mut [T]) -> Result<(), RhsFault> {
        (self.f)(t, state, delayed, out);
        Ok(())
    }
}

/// Initial function on `[-delay, 0]`.
pub trait History<T: Scalar> {
    fn value(&self, t: T, out: &mut [T]);

    /// Time derivative of the history. The default is a central difference.
    fn derivative(&self, t: T, out: &mut [T]) {
        let h = lit::<T>(1e-6);
        let mut lo = vec![T::zero(); out.len()];
        self.value(t - h, &mut lo);
        self.value(t + h, out);
        for (o, l) in out.iter_mut().zip(&lo) {
            *o = (*o - *l) / (h + h);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantHistory<T>(pub Vec<T>);

impl<T: Scalar> History<T> for ConstantHistory<T> {
    fn value(&self, _t: T, out: &mut [T]) {
        out.copy_from_slice(&self.0);
    }
    fn derivative(&self, _t: T, out: &mut [T]) {
        out.fill(T::zero());
    }
}

/// History given by a value closure and its exact derivative.
pub struct SmoothHistory<V, D> {
    pub value: V,
    pub derivative: D,
}

impl<T, V, D> History<T> for SmoothHistory<V, D>
where
    T: Scalar,
    V: Fn(T, &mut [T]),
    D: Fn(T, &mut [T]),
{
    fn value(&self, t: T, out: &mut [T]) {
        (self.value)(t, out)
    }
    fn derivative(&self, t: T, out: &mut [T]) {
        (self.derivative)(t, out)
    }
}

/// A delay initial-value problem.
pub struct DdeProblem<T, S, H> {
    pub system: S,
    pub delay: T,
    pub history: H,
    pub t_end: T,
    /// Requested step; lowered to the nearest divisor of `delay`.
    pub dt: T,
    /// Components kept non-negative: clamped after each step, and while at
    /// zero their derivative is replaced by `max(0, derivative)`.
    pub projection: Vec<bool>,
    /// Abort once any component exceeds this magnitude.
    pub blowup_limit: Option<T>,
}

impl<T: Scalar, S: DelaySystem<T>, H: History<T>> DdeProblem<T, S, H> {
    /// Problem with the default step `delay / 100` and no projection.
    pub fn new(system: S, delay: T, history: H, t_end: T) -> Self {
        let dim = system.dimension();
        Self {
            system,
            delay,
            history,
            t_end,
            dt: delay / lit(100.0),
            projection: vec![false; dim],
            blowup_limit: None,
        }
    }

    pub fn with_dt(mut self, dt: T) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_projection(mut self, component: usize) -> Self {
        self.projection[component] = true;
        self
    }

    pub fn with_blowup_limit(mut self, limit: T) -> Self {
        self.blowup_limit = Some(limit);
        self
    }

    /// Steps per delay and the adjusted step size.
    pub fn grid(&self) -> Result<(usize, T), IntegrateError<T>> {
        if !(self.delay > T::zero() && self.delay.is_finite()) {
            return Err(IntegrateError::Config(format!("delay must be > 0, got {}", self.delay)));
        }
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(IntegrateError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        let ratio = self.delay / self.dt;
        // Tolerate representation error when dt already divides the delay.
        let m = (ratio - lit::<T>(1e-9) * ratio).ceil().to_usize().unwrap_or(usize::MAX);
        if m == 0 || m > MAX_STEPS_PER_DELAY {
            return Err(IntegrateError::Config(format!(
                "dt = {} gives {} steps per delay (allowed 1..={MAX_STEPS_PER_DELAY})",
                self.dt, ratio
            )));
        }
        Ok((m, self.delay / from_usize(m)))
    }
}

/// Integrates `problem` on `[0, t_end]`.
pub fn integrate<T, S, H>(problem: &DdeProblem<T, S, H>) -> Result<Trajectory<T>, IntegrateError<T>>
where
    T: Scalar,
    S: DelaySystem<T>,
    H: History<T>,
{
    let dim = problem.system.dimension();
    if dim == 0 || problem.projection.len() != dim {
        return Err(IntegrateError::Config(format!(
            "dimension {dim} with {} projection flags",
            problem.projection.len()
        )));
    }
    if !(problem.t_end > T::zero() && problem.t_end.is_finite()) {
        return Err(IntegrateError::Config(format!("t_end must be > 0, got {}", problem.t_end)));
    }
    let (m, dt) = problem.grid()?;
    let n_steps = (problem.t_end / dt - lit(1e-9)).ceil().to_usize().ok_or_else(|| {
        IntegrateError::Config(format!("t_end / dt = {} is not a step count", as_f64(problem.t_end / dt)))
    })?;

    // History grid k = -m..=0 stored at index k + m.
    let mut hist_val = vec![T::zero(); (m + 1) * dim];
    let mut hist_der = vec![T::zero(); (m + 1) * dim];
    for j in 0..=m {
        let t = from_usize::<T>(j) * dt - problem.delay;
        let t = if j == m { T::zero() } else { t };
        problem.history.value(t, &mut hist_val[j * dim..(j + 1) * dim]);
        problem.history.derivative(t, &mut hist_der[j * dim..(j + 1) * dim]);
    }
    if hist_val.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::Config("history is not finite".into()));
    }

    let mut run = Stepper {
        problem,
        dim,
        m,
        dt,
        hist_val,
        hist_der,
        sol: Vec::with_capacity((n_steps + 1) * dim),
        sol_der: Vec::with_capacity((n_steps + 1) * dim),
    };
    let x0 = run.hist_val[m * dim..].to_vec();
    run.sol.extend_from_slice(&x0);

    let limit = problem.blowup_limit.unwrap_or_else(T::max_value);
    for k in 0..n_steps {
        let t = from_usize::<T>(k) * dt;
        let next = match run.step(k, t) {
            Ok(next) => next,
            Err(fault) => {
                log::debug!("rhs fault {fault} at t = {}", as_f64(t));
                return Err(run.diverged(t));
            }
        };
        if next.iter().any(|v| !v.is_finite() || v.abs() > limit) {
            return Err(run.diverged(t + dt));
        }
        run.sol.extend_from_slice(&next);
    }
    Ok(run.finish())
}

struct Stepper<'p, T, S, H> {
    problem: &'p DdeProblem<T, S, H>,
    dim: usize,
    m: usize,
    dt: T,
    hist_val: Vec<T>,
    hist_der: Vec<T>,
    sol: Vec<T>,
    sol_der: Vec<T>,
}

impl<T: Scalar, S: DelaySystem<T>, H: History<T>> Stepper<'_, T, S, H> {
    /// Value at grid index `k` (negative indices are history).
    fn value(&self, k: isize) -> &[T] {
        let d = self.dim;
        if k < 0 {
            let j = (k + self.m as isize) as usize;
            &self.hist_val[j * d..(j + 1) * d]
        } else {
            let j = k as usize;
            &self.sol[j * d..(j + 1) * d]
        }
    }

    /// Derivative at grid index `k` as seen from the interval on the given
    /// side. At `k = 0` the history and the solution may disagree.
    fn derivative(&self, k: isize, from_right: bool) -> &[T] {
        let d = self.dim;
        if k < 0 || (k == 0 && !from_right) {
            let j = (k + self.m as isize) as usize;
            &self.hist_der[j * d..(j + 1) * d]
        } else {
            let j = k as usize;
            &self.sol_der[j * d..(j + 1) * d]
        }
    }

    /// Cubic Hermite interpolant on `[k, k + 1]` at fraction `theta`.
    fn hermite(&self, k: isize, theta: T, out: &mut [T]) {
        let one = T::one();
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h00 = two * t3 - three * t2 + one;
        let h10 = t3 - two * t2 + theta;
        let h01 = -two * t3 + three * t2;
        let h11 = t3 - t2;
        let v0 = self.value(k);
        let v1 = self.value(k + 1);
        let d0 = self.derivative(k, true);
        let d1 = self.derivative(k + 1, false);
        for i in 0..self.dim {
            out[i] = h00 * v0[i] + h10 * self.dt * d0[i] + h01 * v1[i] + h11 * self.dt * d1[i];
        }
    }

    fn eval(&self, t: T, x: &[T], xd: &[T], out: &mut [T]) -> Result<(), RhsFault> {
        self.problem.system.rhs(t, x, xd, out)?;
        for (i, &proj) in self.problem.projection.iter().enumerate() {
            if proj && x[i] <= T::zero() {
                out[i] = out[i].max(T::zero());
            }
        }
        Ok(())
    }

    fn step(&mut self, k: usize, t: T) -> Result<Vec<T>, RhsFault> {
        let d = self.dim;
        let dt = self.dt;
        let half = lit::<T>(0.5);
        let j = k as isize - self.m as isize;
        let x = self.value(k as isize).to_vec();

        let mut k1 = vec![T::zero(); d];
        self.eval(t, &x, self.value(j), &mut k1)?;
        self.sol_der.extend_from_slice(&k1);

        let mut mid = vec![T::zero(); d];
        self.hermite(j, half, &mut mid);

        let mut stage = vec![T::zero(); d];
        let mut k2 = vec![T::zero(); d];
        for i in 0..d {
            stage[i] = x[i] + half * dt * k1[i];
        }
        self.eval(t + half * dt, &stage, &mid, &mut k2)?;

        let mut k3 = vec![T::zero(); d];
        for i in 0..d {
            stage[i] = x[i] + half * dt * k2[i];
        }
        self.eval(t + half * dt, &stage, &mid, &mut k3)?;

        let mut k4 = vec![T::zero(); d];
        for i in 0..d {
            stage[i] = x[i] + dt * k3[i];
        }
        self.eval(t + dt, &stage, self.value(j + 1), &mut k4)?;

        let two = lit::<T>(2.0);
        let sixth = dt / lit(6.0);
        let mut next: Vec<T> = (0..d)
            .map(|i| x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
            .collect();
        for (v, &proj) in next.iter_mut().zip(&self.problem.projection) {
            if proj && *v < T::zero() {
                *v = T::zero();
            }
        }
        Ok(next)
    }

    fn finish(self) -> Trajectory<T> {
        let d = self.dim;
        Trajectory {
            t0: T::zero(),
            dt: self.dt,
            dim: d,
            delay_steps: self.m,
            data: self.sol,
            history: self.hist_val[..self.m * d].to_vec(),
        }
    }

    fn diverged(self, time: T) -> IntegrateError<T> {
        IntegrateError::Diverged {
            time,
            partial: self.finish(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn linear_delay(gain: f64) -> FnSystem<impl Fn(f64, &[f64], &[f64], &mut [f64])> {
        FnSystem::new(1, move |_t, _x: &[f64], xd: &[f64], out: &mut [f64]| out[0] = -gain * xd[0])
    }

    fn cosine_history() -> SmoothHistory<impl Fn(f64, &mut [f64]), impl Fn(f64, &mut [f64])> {
        SmoothHistory {
            value: |t: f64, out: &mut [f64]| out[0] = (FRAC_PI_2 * t).cos(),
            derivative: |t: f64, out: &mut [f64]| out[0] = -FRAC_PI_2 * (FRAC_PI_2 * t).sin(),
        }
    }

    fn cosine_error(dt: f64) -> f64 {
        let p = DdeProblem::new(linear_delay(FRAC_PI_2), 1.0, cosine_history(), 8.0).with_dt(dt);
        let traj = integrate(&p).unwrap();
        (0..traj.len())
            .map(|k| (traj.state(k)[0] - (FRAC_PI_2 * traj.time(k)).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cosine_is_reproduced() {
        assert!(cosine_error(0.01) <= 1e-5);
    }

    #[test]
    fn fourth_order_convergence() {
        let e50 = cosine_error(1.0 / 50.0);
        let e100 = cosine_error(1.0 / 100.0);
        let e200 = cosine_error(1.0 / 200.0);
        for ratio in [e50 / e100, e100 / e200] {
            assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn first_interval_is_affine() {
        let p = DdeProblem::new(linear_delay(1.0), 1.0, ConstantHistory(vec![1.0]), 1.0);
        let traj = integrate(&p).unwrap();
        assert_eq!(traj.len(), 101);
        for k in 0..traj.len() {
            assert!((traj.state(k)[0] - (1.0 - traj.time(k))).abs() <= 1e-12);
        }
    }

    #[test]
    fn fixed_point_is_invariant() {
        let sys = FnSystem::new(1, |_t, x: &[f64], xd: &[f64], out: &mut [f64]| {
            out[0] = x[0] * (1.0 - xd[0])
        });
        let p = DdeProblem::new(sys, 1.0, ConstantHistory(vec![1.0]), 20.0);
        let traj = integrate(&p).unwrap();
        assert!(traj.component(0).all(|v| v == 1.0));
    }

    #[test]
    fn step_is_lowered_to_a_divisor_of_the_delay() {
        let p = DdeProblem::new(linear_delay(1.0), 1.0, ConstantHistory(vec![1.0]), 2.0).with_dt(0.03);
        let (m, dt) = p.grid().unwrap();
        assert_eq!(m, 34);
        assert!((dt * m as f64 - 1.0).abs() < 1e-15);
        let traj = integrate(&p).unwrap();
        assert_eq!(traj.delay_steps(), 34);

        let p = DdeProblem::new(linear_delay(1.0), 1.0, ConstantHistory(vec![1.0]), 2.0).with_dt(0.01);
        assert_eq!(p.grid().unwrap().0, 100);
    }

    #[test]
    fn bad_configuration_is_rejected() {
        let p = DdeProblem::new(linear_delay(1.0), 1.0, ConstantHistory(vec![1.0]), 2.0).with_dt(0.0);
        assert!(matches!(integrate(&p), Err(IntegrateError::Config(_))));
        let p = DdeProblem::new(linear_delay(1.0), 1.0, ConstantHistory(vec![1.0]), 2.0).with_dt(1e-9);
        assert!(matches!(integrate(&p), Err(IntegrateError::Config(_))));
        let p = DdeProblem::new(linear_delay(1.0), 1.0, ConstantHistory(vec![1.0]), -1.0);
        assert!(matches!(integrate(&p), Err(IntegrateError::Config(_))));
    }

    #[test]
    fn divergence_reports_time_and_partial_data() {
        // Strongly unstable: x' = 5 x(t - 1) grows without bound.
        let p = DdeProblem::new(linear_delay(-5.0), 1.0, ConstantHistory(vec![1.0]), 100.0)
            .with_blowup_limit(1e6);
        match integrate(&p) {
            Err(IntegrateError::Diverged { time, partial }) => {
                assert!(time > 0.0 && time < 100.0);
                assert!(!partial.is_empty());
                assert!(partial.component(0).all(|v| v.abs() <= 1e6));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn projection_keeps_component_non_negative() {
        // q' = -1 drives the queue through zero; projection holds it there.
        let sys = FnSystem::new(2, |_t, _x: &[f64], xd: &[f64], out: &mut [f64]| {
            out[0] = -xd[0];
            out[1] = -1.0 + 0.5 * xd[0];
        });
        let p = DdeProblem::new(sys, 1.0, ConstantHistory(vec![1.0, 0.5]), 10.0).with_projection(1);
        let traj = integrate(&p).unwrap();
        assert!(traj.component(1).all(|q| q >= 0.0));
        assert!(traj.component(1).any(|q| q == 0.0));
    }

    #[test]
    fn reruns_are_bit_identical() {
        let run = || {
            let p = DdeProblem::new(linear_delay(FRAC_PI_2), 1.0, cosine_history(), 8.0);
            integrate(&p).unwrap()
        };
        let (a, b) = (run(), run());
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn single_precision_runs() {
        let sys = FnSystem::new(1, |_t, _x: &[f32], xd: &[f32], out: &mut [f32]| out[0] = -xd[0]);
        let p = DdeProblem::new(sys, 1.0f32, ConstantHistory(vec![1.0f32]), 1.0);
        let traj = integrate(&p).unwrap();
        assert!((traj.last().unwrap()[0]).abs() < 1e-5);
    }
}
