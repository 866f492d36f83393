//! Parameter sets, equilibria and trajectories shared by both fluid models.

use serde::Serialize;

use crate::error::{check, Error, Result};
use crate::scalar::{as_f64, from_usize, lit, Scalar};

/// Parameters of the rate/queue model with an explicit queue state.
///
/// All flows share one round-trip time, so the average RTT in the rate
/// equation is the common `rtt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelAParams<T> {
    a: T,
    beta: T,
    capacity: T,
    rtt: T,
    flows: u32,
    switched: bool,
}

impl<T: Scalar> ModelAParams<T> {
    pub fn new(a: T, beta: T, capacity: T, rtt: T, flows: u32, switched: bool) -> Result<Self> {
        check(a >= T::zero() && a.is_finite(), "a", as_f64(a), ">= 0")?;
        check(beta >= T::zero() && beta.is_finite(), "beta", as_f64(beta), ">= 0")?;
        check(capacity > T::zero() && capacity.is_finite(), "capacity", as_f64(capacity), "> 0")?;
        check(rtt > T::zero() && rtt.is_finite(), "rtt", as_f64(rtt), "> 0")?;
        check(flows >= 1, "flows", flows as f64, ">= 1")?;
        Ok(Self {
            a,
            beta,
            capacity,
            rtt,
            flows,
            switched,
        })
    }

    pub fn with_a(&self, a: T) -> Result<Self> {
        Self::new(a, self.beta, self.capacity, self.rtt, self.flows, self.switched)
    }

    pub fn with_switched(&self, switched: bool) -> Self {
        Self { switched, ..*self }
    }

    pub fn a(&self) -> T {
        self.a
    }
    pub fn beta(&self) -> T {
        self.beta
    }
    pub fn capacity(&self) -> T {
        self.capacity
    }
    pub fn rtt(&self) -> T {
        self.rtt
    }
    pub fn flows(&self) -> u32 {
        self.flows
    }
    pub fn switched(&self) -> bool {
        self.switched
    }
}

/// Parameters of the small-buffer model, where the queue enters only
/// through its stationary mean `p(y)`.
///
/// `gamma` is the virtual-capacity fraction. It is only meaningful without
/// queue feedback (`b = 0`), where the controller targets `gamma * C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelBParams<T> {
    a: T,
    b: T,
    capacity: T,
    rtt: T,
    sigma: T,
    gamma: T,
}

impl<T: Scalar> ModelBParams<T> {
    pub fn new(a: T, b: T, capacity: T, rtt: T, sigma: T, gamma: T) -> Result<Self> {
        check(a >= T::zero() && a.is_finite(), "a", as_f64(a), ">= 0")?;
        check(b >= T::zero() && b.is_finite(), "b", as_f64(b), ">= 0")?;
        check(capacity > T::zero() && capacity.is_finite(), "capacity", as_f64(capacity), "> 0")?;
        check(rtt > T::zero() && rtt.is_finite(), "rtt", as_f64(rtt), "> 0")?;
        check(sigma > T::zero() && sigma.is_finite(), "sigma", as_f64(sigma), "> 0")?;
        check(
            gamma > T::zero() && gamma <= T::one(),
            "gamma",
            as_f64(gamma),
            "in (0, 1]",
        )?;
        check(
            b == T::zero() || gamma == T::one(),
            "gamma",
            as_f64(gamma),
            "1 when b > 0",
        )?;
        Ok(Self {
            a,
            b,
            capacity,
            rtt,
            sigma,
            gamma,
        })
    }

    /// Queue feedback on, Poisson traffic.
    pub fn with_queue(a: T, b: T, capacity: T, rtt: T) -> Result<Self> {
        Self::new(a, b, capacity, rtt, T::one(), T::one())
    }

    /// Queue feedback off, targeting `gamma * capacity`.
    pub fn without_queue(a: T, gamma: T, capacity: T, rtt: T) -> Result<Self> {
        Self::new(a, T::zero(), capacity, rtt, T::one(), gamma)
    }

    pub fn with_a(&self, a: T) -> Result<Self> {
        Self::new(a, self.b, self.capacity, self.rtt, self.sigma, self.gamma)
    }

    pub fn a(&self) -> T {
        self.a
    }
    pub fn b(&self) -> T {
        self.b
    }
    pub fn capacity(&self) -> T {
        self.capacity
    }
    pub fn rtt(&self) -> T {
        self.rtt
    }
    pub fn sigma(&self) -> T {
        self.sigma
    }
    pub fn gamma(&self) -> T {
        self.gamma
    }
    pub fn has_queue_feedback(&self) -> bool {
        self.b > T::zero()
    }

    /// Capacity the rate controller works against: `C` with queue feedback,
    /// `gamma * C` without.
    pub fn effective_capacity(&self) -> T {
        if self.has_queue_feedback() {
            self.capacity
        } else {
            self.gamma * self.capacity
        }
    }

    /// Stationary mean of the reflected Brownian workload at load `y`,
    /// `p(y) = y sigma^2 / (2 (C - y))`. Returns `None` at or above capacity.
    pub fn mean_queue(&self, y: T) -> Option<T> {
        let headroom = self.capacity - y;
        if headroom <= T::zero() {
            None
        } else {
            Some(y * self.sigma * self.sigma / (lit::<T>(2.0) * headroom))
        }
    }
}

/// Fixed point of a fluid model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium<T> {
    pub rate_star: T,
    /// Queue size for the rate/queue model, mean queue `p(R*)` otherwise.
    pub queue_star: T,
    pub utilization: T,
}

/// `R* = C/n`, `q* = 0`, full utilization.
pub fn equilibrium_model_a<T: Scalar>(p: &ModelAParams<T>) -> Equilibrium<T> {
    Equilibrium {
        rate_star: p.capacity / from_usize(p.flows as usize),
        queue_star: T::zero(),
        utilization: T::one(),
    }
}

/// Equilibrium utilization `R*/C` of the queue-feedback model.
///
/// `R*/C` is the smaller root of `2(1 - x)^2 = s x` with `s = b sigma^2`,
/// written as `4 / (4 + s + sqrt(s^2 + 8 s))` so it stays accurate for large
/// `b`. With `sigma = 1` this is `(b + 4 - sqrt(b^2 + 8b)) / 4`.
pub fn queue_feedback_utilization<T: Scalar>(b: T, sigma: T) -> T {
    let s = b * sigma * sigma;
    let four = lit::<T>(4.0);
    four / (four + s + (s * s + lit::<T>(8.0) * s).sqrt())
}

pub fn equilibrium_model_b<T: Scalar>(p: &ModelBParams<T>) -> Equilibrium<T> {
    if p.has_queue_feedback() {
        let utilization = queue_feedback_utilization(p.b, p.sigma);
        let rate_star = p.capacity * utilization;
        let queue_star = p
            .mean_queue(rate_star)
            .expect("equilibrium load is below capacity");
        Equilibrium {
            rate_star,
            queue_star,
            utilization,
        }
    } else {
        Equilibrium {
            rate_star: p.gamma * p.capacity,
            queue_star: T::zero(),
            utilization: p.gamma,
        }
    }
}

/// Queue gain of the small-buffer model equivalent to `(a, beta)` of the
/// rate/queue model: `b = beta / (a C T)`.
pub fn map_beta_to_b<T: Scalar>(a: T, beta: T, capacity: T, mean_rtt: T) -> Result<T> {
    if a == T::zero() {
        return Err(Error::UndefinedMapping);
    }
    check(a > T::zero(), "a", as_f64(a), "> 0")?;
    check(beta >= T::zero(), "beta", as_f64(beta), ">= 0")?;
    check(capacity > T::zero(), "capacity", as_f64(capacity), "> 0")?;
    check(mean_rtt > T::zero(), "mean_rtt", as_f64(mean_rtt), "> 0")?;
    Ok(beta / (a * capacity * mean_rtt))
}

/// Uniformly sampled solution of a delay equation.
///
/// Sample `k` sits at `t0 + k * dt`. The delay equals `delay_steps * dt`, so
/// the delayed state of sample `k` is sample `k - delay_steps`; for the first
/// `delay_steps` samples it comes from the stored history.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub(crate) t0: T,
    pub(crate) dt: T,
    pub(crate) dim: usize,
    pub(crate) delay_steps: usize,
    pub(crate) data: Vec<T>,
    /// History on the grid `t0 - delay_steps*dt .. t0 - dt`, flattened.
    pub(crate) history: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn t0(&self) -> T {
        self.t0
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn dimension(&self) -> usize {
        self.dim
    }
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn time(&self, k: usize) -> T {
        self.t0 + from_usize::<T>(k) * self.dt
    }
    pub fn state(&self, k: usize) -> &[T] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// State one delay before sample `k`.
    pub fn delayed_state(&self, k: usize) -> &[T] {
        if k >= self.delay_steps {
            self.state(k - self.delay_steps)
        } else {
            let j = self.history.len() / self.dim - (self.delay_steps - k);
            &self.history[j * self.dim..(j + 1) * self.dim]
        }
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn component(&self, i: usize) -> impl ExactSizeIterator<Item = T> + '_ {
        assert!(i < self.dim, "component {i} out of range");
        self.data.iter().skip(i).step_by(self.dim).copied()
    }

    pub fn last(&self) -> Option<&[T]> {
        if self.is_empty() {
            None
        } else {
            Some(self.state(self.len() - 1))
        }
    }

    /// Suffix after discarding the first `transient_fraction` of samples.
    ///
    /// The history of the returned window is the tail of this trajectory, so
    /// delayed states remain available across the cut.
    pub fn steady_window(&self, transient_fraction: T) -> Result<Self> {
        if !(transient_fraction >= T::zero() && transient_fraction < T::one()) {
            return Err(Error::InvalidParameter {
                name: "transient_fraction",
                value: as_f64(transient_fraction),
                constraint: "in [0, 1)",
            });
        }
        let n = self.len();
        let skip = (transient_fraction * from_usize::<T>(n) + lit(1e-9))
            .floor()
            .to_usize()
            .unwrap_or(n)
            .min(n);
        if skip == n {
            return Err(Error::EmptyWindow);
        }

        // Rebuild the delay history for the new origin.
        let m = self.delay_steps;
        let mut history = Vec::with_capacity(m * self.dim);
        for k in skip..skip + m {
            history.extend_from_slice(self.delayed_state(k));
        }
        Ok(Self {
            t0: self.time(skip),
            dt: self.dt,
            dim: self.dim,
            delay_steps: m,
            data: self.data[skip * self.dim..].to_vec(),
            history,
        })
    }
}

/// Free-function form of [`Trajectory::steady_window`].
pub fn steady_window<T: Scalar>(traj: &Trajectory<T>, transient_fraction: T) -> Result<Trajectory<T>> {
    traj.steady_window(transient_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Trajectory<f64> {
        Trajectory {
            t0: 0.0,
            dt: 0.5,
            dim: 1,
            delay_steps: 2,
            data: (0..n).map(|k| k as f64).collect(),
            history: vec![-2.0, -1.0],
        }
    }

    #[test]
    fn model_a_equilibrium_values() {
        let p = ModelAParams::new(1.0, 0.3, 100_000.0, 0.1, 100, false).unwrap();
        let eq = equilibrium_model_a(&p);
        assert_eq!(eq.rate_star, 1000.0);
        assert_eq!(eq.queue_star, 0.0);
        assert_eq!(eq.utilization, 1.0);

        let p = ModelAParams::new(1.0, 0.0, 1.0, 1.0, 1, false).unwrap();
        assert_eq!(equilibrium_model_a(&p).rate_star, 1.0);
        let p = ModelAParams::new(1.0, 0.0, 10.0, 1.0, 4, false).unwrap();
        assert_eq!(equilibrium_model_a(&p).rate_star, 2.5);
    }

    #[test]
    fn model_b_equilibrium_closed_form() {
        let p = ModelBParams::with_queue(1.0, 0.02, 10.0, 1.0).unwrap();
        let eq = equilibrium_model_b(&p);
        let closed = 10.0 * (0.02 + 4.0 - (0.02f64 * 0.02 + 8.0 * 0.02).sqrt()) / 4.0;
        assert!((eq.rate_star - closed).abs() < 1e-12);
        assert!((eq.rate_star - 9.04875).abs() < 1e-5);
        assert!((eq.utilization - 0.9049).abs() < 1e-4);
        let residual = 10.0 - eq.rate_star - 0.02 * 10.0 * p.mean_queue(eq.rate_star).unwrap();
        assert!(residual.abs() <= 1e-9 * 10.0);
        assert!((eq.queue_star - p.mean_queue(eq.rate_star).unwrap()).abs() < 1e-15);

        let p = ModelBParams::without_queue(1.0, 0.9, 10.0, 1.0).unwrap();
        let eq = equilibrium_model_b(&p);
        assert_eq!(eq.rate_star, 9.0);
        assert_eq!(eq.queue_star, 0.0);

        let p = ModelBParams::with_queue(1.0_f64, 0.18, 10.0, 1.0).unwrap();
        let u = equilibrium_model_b(&p).utilization;
        assert!((u - 0.7).abs() <= 0.18);
    }

    #[test]
    fn model_b_equilibrium_with_sigma() {
        let sigma = 1.7_f64;
        let p = ModelBParams::new(1.0, 0.05, 3.0, 1.0, sigma, 1.0).unwrap();
        let eq = equilibrium_model_b(&p);
        let residual = 3.0 - eq.rate_star - 0.05 * 3.0 * p.mean_queue(eq.rate_star).unwrap();
        assert!(residual.abs() < 1e-12);
    }

    #[test]
    fn beta_to_b_mapping() {
        assert!((map_beta_to_b(0.5_f64, 1.0, 1.0, 100.0).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(map_beta_to_b(1.0, 0.0, 7.0, 3.0).unwrap(), 0.0);
        assert_eq!(map_beta_to_b(2.0, 1.0, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(map_beta_to_b(0.0, 1.0, 1.0, 1.0), Err(Error::UndefinedMapping));
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelAParams::new(-0.1, 0.0, 1.0, 1.0, 1, false).is_err());
        assert!(ModelAParams::new(0.1, -1.0, 1.0, 1.0, 1, false).is_err());
        assert!(ModelAParams::new(0.1, 0.0, 0.0, 1.0, 1, false).is_err());
        assert!(ModelAParams::new(0.1, 0.0, 1.0, 0.0, 1, false).is_err());
        assert!(ModelAParams::new(0.1, 0.0, 1.0, 1.0, 0, false).is_err());
        assert!(ModelAParams::new(0.0, 0.0, 1.0, 1.0, 1, true).is_ok());

        assert!(ModelBParams::new(1.0, 0.1, 1.0, 1.0, 1.0, 0.9).is_err());
        assert!(ModelBParams::new(1.0, 0.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(ModelBParams::new(1.0, 0.0, 1.0, 1.0, 1.0, 1.1).is_err());
        assert!(ModelBParams::new(1.0, 0.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(ModelBParams::new(1.0, 0.0, 1.0, 1.0, 1.0, 0.7).is_ok());
    }

    #[test]
    fn steady_window_fractions() {
        let t = ramp(1000);
        let w = t.steady_window(0.5).unwrap();
        assert_eq!(w.len(), 500);
        assert_eq!(w.state(0)[0], 500.0);
        assert_eq!(w.last().unwrap()[0], 999.0);
        assert_eq!(w.t0(), 250.0);
        assert_eq!(w.delayed_state(0)[0], 498.0);

        assert_eq!(t.steady_window(0.0).unwrap(), t);

        let w = t.steady_window(0.9).unwrap();
        assert_eq!(w.len(), 100);
        assert_eq!(w.state(0)[0], 900.0);

        assert!(t.steady_window(1.0).is_err());
        assert_eq!(ramp(0).steady_window(0.5), Err(Error::EmptyWindow));
        assert_eq!(ramp(1).steady_window(0.99).unwrap().len(), 1);
    }

    #[test]
    fn delayed_state_reads_history() {
        let t = ramp(5);
        assert_eq!(t.delayed_state(0)[0], -2.0);
        assert_eq!(t.delayed_state(1)[0], -1.0);
        assert_eq!(t.delayed_state(2)[0], 0.0);
        assert_eq!(t.delayed_state(4)[0], 2.0);
    }
}
