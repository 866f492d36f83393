//! Gain sweeps that classify the long-run behaviour of the fluid models and
//! measure the bifurcating limit cycles.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dde::integrate;
use crate::error::{check, Error, IntegrateError, Result};
use crate::linear::linspace;
use crate::models::ModelSpec;
use crate::scalar::{as_f64, from_usize, lit, Scalar};
use crate::types::Trajectory;

/// Sweep over the gain `a` with everything else taken from `model`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig<T> {
    pub model: ModelSpec<T>,
    /// `(lo, hi, steps)`, inclusive.
    pub range: (T, T, usize),
    pub t_end: T,
    pub dt: T,
    pub transient_fraction: T,
    /// Initial rate offset relative to equilibrium.
    pub perturbation: T,
    /// Peak-to-peak amplitude, relative to the equilibrium rate, below which
    /// a run counts as converged.
    pub cycle_threshold: T,
}

impl<T: Scalar> SweepConfig<T> {
    /// Defaults: `t_end = 400 RTT`, `dt = RTT/200`, half the run discarded,
    /// 1% initial offset, 1e-3 relative cycle threshold.
    pub fn new(model: ModelSpec<T>, lo: T, hi: T, steps: usize) -> Self {
        let rtt = model.rtt();
        Self {
            model,
            range: (lo, hi, steps),
            t_end: lit::<T>(400.0) * rtt,
            dt: rtt / lit(200.0),
            transient_fraction: lit(0.5),
            perturbation: lit(0.01),
            cycle_threshold: lit(1e-3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi, steps) = self.range;
        check(lo < hi, "range", as_f64(lo), "lo < hi")?;
        check(steps >= 2, "steps", steps as f64, ">= 2")?;
        check(
            self.perturbation > T::zero() && self.perturbation < T::one(),
            "perturbation",
            as_f64(self.perturbation),
            "in (0, 1)",
        )?;
        check(
            self.transient_fraction >= T::zero() && self.transient_fraction < T::one(),
            "transient_fraction",
            as_f64(self.transient_fraction),
            "in [0, 1)",
        )?;
        check(self.t_end > T::zero(), "t_end", as_f64(self.t_end), "> 0")?;
        check(self.dt > T::zero(), "dt", as_f64(self.dt), "> 0")?;
        check(self.cycle_threshold > T::zero(), "cycle_threshold", as_f64(self.cycle_threshold), "> 0")?;
        Ok(())
    }

    pub fn values(&self) -> Vec<T> {
        let (lo, hi, steps) = self.range;
        linspace(lo, hi, steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Converged,
    LimitCycle,
    Diverged,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Converged => "converged",
            Classification::LimitCycle => "limit-cycle",
            Classification::Diverged => "diverged",
        }
    }
}

/// One sample of a bifurcation diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationPoint<T> {
    pub param_value: T,
    pub equilibrium_rate: T,
    /// Rate extrema over the steady window (over the partial run when
    /// diverged).
    pub cycle_min: T,
    pub cycle_max: T,
    pub amplitude: T,
    /// Mean spacing of successive rate maxima; only for limit cycles.
    pub period_estimate: Option<T>,
    pub classified: Classification,
    pub failure_time: Option<T>,
}

/// Orbit over the steady window: `(R(t), q(t))` for the rate/queue model,
/// `(R(t), R(t - tau))` for the small-buffer model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePortrait<T> {
    pub pairs: Vec<(T, T)>,
    pub param_value: T,
    pub dt: T,
    pub period: Option<T>,
}

impl<T: Scalar> PhasePortrait<T> {
    pub fn bounding_diagonal(&self) -> T {
        let mut it = self.pairs.iter();
        let Some(&(x0, y0)) = it.next() else {
            return T::zero();
        };
        let (mut xl, mut xh, mut yl, mut yh) = (x0, x0, y0, y0);
        for &(x, y) in it {
            xl = xl.min(x);
            xh = xh.max(x);
            yl = yl.min(y);
            yh = yh.max(y);
        }
        (xh - xl).hypot(yh - yl)
    }

    /// Whether the last point returns to the orbit traced during the first
    /// period, to `rel_tol` of the bounding diagonal. Needs a period.
    pub fn is_closed_orbit(&self, rel_tol: T) -> bool {
        let (Some(period), Some(&(xe, ye))) = (self.period, self.pairs.last()) else {
            return false;
        };
        let span = (period / self.dt).ceil().to_usize().unwrap_or(usize::MAX);
        let n = self.pairs.len();
        if span == 0 || span >= n {
            return false;
        }
        // Normalize each axis so the queue's scale does not dominate.
        let (xs, ys) = self.axis_spans();
        let scale = |dx: T, dy: T| (dx / xs).hypot(dy / ys);
        let nearest = self.pairs[..=span]
            .iter()
            .map(|&(x, y)| scale(x - xe, y - ye))
            .fold(T::infinity(), T::min);
        nearest <= rel_tol * lit::<T>(2.0).sqrt()
    }

    fn axis_spans(&self) -> (T, T) {
        let span = |f: fn(&(T, T)) -> T| {
            let (lo, hi) = self
                .pairs
                .iter()
                .map(f)
                .fold((T::infinity(), T::neg_infinity()), |(l, h), v| (l.min(v), h.max(v)));
            let s = hi - lo;
            if s > T::zero() {
                s
            } else {
                T::one()
            }
        };
        (span(|p| p.0), span(|p| p.1))
    }
}

#[derive(Debug, Clone, Error)]
pub enum PortraitError<T: Scalar> {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("integration diverged at t = {time}")]
    Diverged { time: T, partial: PhasePortrait<T> },
}

fn simulate<T: Scalar>(spec: &ModelSpec<T>, cfg: &SweepConfig<T>) -> std::result::Result<Trajectory<T>, IntegrateError<T>> {
    let problem = spec.problem(spec.perturbed_history(cfg.perturbation), cfg.t_end, cfg.dt);
    integrate(&problem)
}

fn extrema<T: Scalar>(values: impl Iterator<Item = T>) -> (T, T) {
    values.fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Mean spacing of successive maxima, each refined by a parabola through
/// the sample and its neighbours.
///
/// A maximum counts only above the window midpoint, and successive maxima
/// must be separated by a dip below it.
pub fn estimate_period<T: Scalar>(values: &[T], dt: T) -> Option<T> {
    if values.len() < 3 {
        return None;
    }
    let (lo, hi) = extrema(values.iter().copied());
    let mid = lit::<T>(0.5) * (lo + hi);
    let half = lit::<T>(0.5);
    let mut peaks: Vec<T> = Vec::new();
    let mut armed = true;
    for k in 1..values.len() - 1 {
        let (a, b, c) = (values[k - 1], values[k], values[k + 1]);
        if b < mid {
            armed = true;
            continue;
        }
        if armed && b > a && b >= c {
            let curvature = a - (b + b) + c;
            let shift = if curvature < T::zero() {
                half * (a - c) / curvature
            } else {
                T::zero()
            };
            peaks.push(from_usize::<T>(k) + shift);
            armed = false;
        }
    }
    if peaks.len() < 2 {
        return None;
    }
    let spacing = (peaks[peaks.len() - 1] - peaks[0]) / from_usize(peaks.len() - 1);
    Some(spacing * dt)
}

/// Simulates `spec` and classifies the steady window.
pub fn measure_point<T: Scalar>(spec: &ModelSpec<T>, cfg: &SweepConfig<T>) -> Result<BifurcationPoint<T>> {
    let equilibrium_rate = spec.equilibrium().rate_star;
    let a = spec.a();
    match simulate(spec, cfg) {
        Ok(traj) => {
            let window = traj.steady_window(cfg.transient_fraction)?;
            let rates: Vec<T> = window.component(0).collect();
            let (cycle_min, cycle_max) = extrema(rates.iter().copied());
            let amplitude = cycle_max - cycle_min;
            let classified = if amplitude < cfg.cycle_threshold * equilibrium_rate {
                Classification::Converged
            } else {
                Classification::LimitCycle
            };
            let period_estimate = match classified {
                Classification::LimitCycle => estimate_period(&rates, window.dt()),
                _ => None,
            };
            Ok(BifurcationPoint {
                param_value: a,
                equilibrium_rate,
                cycle_min,
                cycle_max,
                amplitude,
                period_estimate,
                classified,
                failure_time: None,
            })
        }
        Err(IntegrateError::Diverged { time, partial }) => {
            let (cycle_min, cycle_max) = if partial.is_empty() {
                (equilibrium_rate, equilibrium_rate)
            } else {
                extrema(partial.component(0))
            };
            Ok(BifurcationPoint {
                param_value: a,
                equilibrium_rate,
                cycle_min,
                cycle_max,
                amplitude: cycle_max - cycle_min,
                period_estimate: None,
                classified: Classification::Diverged,
                failure_time: Some(time),
            })
        }
        Err(IntegrateError::Config(msg)) => Err(Error::Config(msg)),
    }
}

/// Runs every sample of the sweep, in parallel, ordered by gain.
pub fn run_sweep<T: Scalar>(cfg: &SweepConfig<T>) -> Result<Vec<BifurcationPoint<T>>> {
    cfg.validate()?;
    let specs: Vec<ModelSpec<T>> = cfg.values().into_iter().map(|a| cfg.model.with_a(a)).collect::<Result<_>>()?;
    specs.par_iter().map(|spec| measure_point(spec, cfg)).collect()
}

/// Steady-window orbit of `spec` at gain `a`.
pub fn phase_portrait<T: Scalar>(
    spec: &ModelSpec<T>,
    a: T,
    cfg: &SweepConfig<T>,
) -> std::result::Result<PhasePortrait<T>, PortraitError<T>> {
    cfg.validate()?;
    let spec = spec.with_a(a)?;
    let orbit = |traj: &Trajectory<T>| -> Vec<(T, T)> {
        match spec {
            ModelSpec::A(_) => traj.samples().map(|s| (s[0], s[1])).collect(),
            ModelSpec::B(_) => (0..traj.len()).map(|k| (traj.state(k)[0], traj.delayed_state(k)[0])).collect(),
        }
    };
    match simulate(&spec, cfg) {
        Ok(traj) => {
            let window = traj.steady_window(cfg.transient_fraction)?;
            let rates: Vec<T> = window.component(0).collect();
            Ok(PhasePortrait {
                pairs: orbit(&window),
                param_value: a,
                dt: window.dt(),
                period: estimate_period(&rates, window.dt()),
            })
        }
        Err(IntegrateError::Diverged { time, partial }) => Err(PortraitError::Diverged {
            time,
            partial: PhasePortrait {
                pairs: orbit(&partial),
                param_value: a,
                dt: partial.dt(),
                period: None,
            },
        }),
        Err(IntegrateError::Config(msg)) => Err(Error::Config(msg).into()),
    }
}

/// Gain at which the equilibrium stops attracting the perturbed start.
///
/// Takes the first sample that does not converge, preceded by one that does,
/// and bisects between the two to within 1e-3. A diverged sample counts as
/// past onset: with strong queue feedback the first orbits beyond the
/// boundary can reach the load singularity instead of settling.
pub fn onset_of_cycle<T: Scalar>(cfg: &SweepConfig<T>) -> Result<T> {
    let points = run_sweep(cfg)?;
    let i = points
        .windows(2)
        .position(|w| w[0].classified == Classification::Converged && w[1].classified != Classification::Converged)
        .ok_or(Error::NoBracket)?;
    let (mut lo, mut hi) = (points[i].param_value, points[i + 1].param_value);
    let tol = lit::<T>(1e-3);
    let half = lit::<T>(0.5);
    while hi - lo > tol {
        let mid = half * (lo + hi);
        let point = measure_point(&cfg.model.with_a(mid)?, cfg)?;
        if point.classified == Classification::Converged {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(half * (lo + hi))
}
