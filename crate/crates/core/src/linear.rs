//! Closed-form local stability of the linearized fluid models.
//!
//! Rate/queue model, in the time unit `lambda = T s`:
//!
//! ```text
//! lambda^2 e^lambda + a lambda + beta = 0        (beta > 0)
//! lambda e^lambda + a = 0                        (beta = 0)
//! ```
//!
//! Small-buffer model with `kappa = a xi(b) / tau`:
//!
//! ```text
//! lambda + kappa e^{-lambda tau} = 0,   xi(b) = 2 + b/4 - sqrt(b^2/16 + b/2)
//! ```
//!
//! The boundaries follow from deforming the delay by a factor `eta` from 0
//! (where every root is stable) to 1: roots can only reach the right half
//! plane by crossing the imaginary axis at the frequencies derived below.
//! Only `eta = 1` is physical; `eta` does not appear in the API.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check, Error, Result};
use crate::scalar::{as_f64, from_usize, lit, Scalar};
use crate::types::queue_feedback_utilization;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityVerdict<T> {
    pub stable: bool,
    /// Signed distance to the boundary along `a`, positive inside the
    /// stable region.
    pub margin: T,
    /// Stability-losing gain at the given queue gain: stability is lost when
    /// `a` increases through it. `None` when no gain is stable.
    pub critical_a: Option<T>,
    /// Lower edge of the stable interval of gains. Only the rate/queue model
    /// with `beta > 0` has one: too little rate feedback also destabilizes.
    pub lower_a: Option<T>,
    /// Crossing frequency at `critical_a` in units of one RTT.
    pub omega_cross: Option<T>,
}

/// Crossing frequency `omega = sqrt((a^2 + sqrt(a^4 + 4 beta^2)) / 2)` of the
/// rate/queue model.
pub fn crossing_frequency_model_a<T: Scalar>(a: T, beta: T) -> T {
    let a2 = a * a;
    let two = lit::<T>(2.0);
    ((a2 + (a2 * a2 + lit::<T>(4.0) * beta * beta).sqrt()) / two).sqrt()
}

/// Smallest delay factor at which a root pair of the rate/queue model with
/// queue feedback reaches the imaginary axis, `asin(a/omega) / omega`.
///
/// Both `sin(eta omega) = a/omega` and `cos(eta omega) = beta/omega^2` are
/// positive, so the first crossing uses the principal branch. The linearized
/// system is stable exactly when this exceeds 1.
pub fn first_crossing_delay<T: Scalar>(a: T, beta: T) -> T {
    let omega = crossing_frequency_model_a(a, beta);
    (a / omega).min(T::one()).asin() / omega
}

/// Tip of the stable region of the rate/queue model in the `(a, beta)` plane.
///
/// Along the boundary `(a, beta) = (omega sin omega, omega^2 cos omega)` for
/// `omega` in `(0, pi/2)`; `beta` peaks where `tan omega = 2 / omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionTip<T> {
    pub omega: T,
    pub a: T,
    pub beta: T,
}

pub fn model_a_region_tip<T: Scalar>() -> RegionTip<T> {
    let g = |w: T| lit::<T>(2.0) * w.cos() - w * w.sin();
    let omega = bisect(g, lit(0.5), T::FRAC_PI_2(), lit(1e-15));
    RegionTip {
        omega,
        a: omega * omega.sin(),
        beta: omega * omega * omega.cos(),
    }
}

/// Stable interval of gains `(lower, upper)` for the rate/queue model with
/// `beta > 0`, or `None` when `beta` is at or above the region tip.
pub fn model_a_stable_band<T: Scalar>(beta: T) -> Option<(T, T)> {
    let tip = model_a_region_tip::<T>();
    if beta >= tip.beta {
        return None;
    }
    let margin = |a: T| first_crossing_delay(a, beta) - T::one();
    let tol = lit(1e-12);
    let upper = bisect(margin, tip.a, T::FRAC_PI_2(), tol);
    let lower = bisect(margin, lit(1e-12), tip.a, tol);
    Some((lower, upper))
}

/// Local stability of the rate/queue model at gains `(a, beta)`.
///
/// The condition is dimensionless: it does not depend on `T`, `C` or `n`.
pub fn stability_model_a<T: Scalar>(a: T, beta: T) -> Result<StabilityVerdict<T>> {
    check(a > T::zero() && a.is_finite(), "a", as_f64(a), "> 0")?;
    check(beta >= T::zero() && beta.is_finite(), "beta", as_f64(beta), ">= 0")?;

    if beta == T::zero() {
        let critical = T::FRAC_PI_2();
        let margin = critical - a;
        return Ok(StabilityVerdict {
            stable: margin > T::zero(),
            margin,
            critical_a: Some(critical),
            lower_a: None,
            omega_cross: Some(critical),
        });
    }

    match model_a_stable_band(beta) {
        Some((lower, upper)) => {
            let margin = (a - lower).min(upper - a);
            Ok(StabilityVerdict {
                stable: margin > T::zero(),
                margin,
                critical_a: Some(upper),
                lower_a: Some(lower),
                omega_cross: Some(crossing_frequency_model_a(upper, beta)),
            })
        }
        None => {
            // Beyond the tip nothing along `a` is stable; the margin is the
            // distance to the tip.
            let tip = model_a_region_tip::<T>();
            Ok(StabilityVerdict {
                stable: false,
                margin: -(a - tip.a).hypot(beta - tip.beta),
                critical_a: None,
                lower_a: None,
                omega_cross: None,
            })
        }
    }
}

/// Factor `xi(b) = 1 + R*/C` such that `kappa tau = a xi`.
///
/// `xi = 2 + b/4 - sqrt(b^2/16 + b/2)` for `b > 0`; it tends to 2 as `b -> 0+`
/// and to 1 as `b -> inf`. At `b = 0` the equilibrium sits at the virtual
/// capacity and `xi = 1`. For traffic variability `sigma`, pass `b sigma^2`.
pub fn queue_gain_factor<T: Scalar>(b: T) -> T {
    if b > T::zero() {
        T::one() + queue_feedback_utilization(b, T::one())
    } else {
        T::one()
    }
}

/// Local stability of the small-buffer model, stable iff `a xi(b) < pi/2`.
pub fn stability_model_b<T: Scalar>(a: T, b: T) -> Result<StabilityVerdict<T>> {
    check(a > T::zero() && a.is_finite(), "a", as_f64(a), "> 0")?;
    check(b >= T::zero() && b.is_finite(), "b", as_f64(b), ">= 0")?;
    let critical = T::FRAC_PI_2() / queue_gain_factor(b);
    let margin = critical - a;
    Ok(StabilityVerdict {
        stable: margin > T::zero(),
        margin,
        critical_a: Some(critical),
        lower_a: None,
        omega_cross: Some(T::FRAC_PI_2()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    Negative = -1,
    Zero = 0,
    Positive = 1,
}

impl Sign {
    pub fn of<T: Scalar>(x: T) -> Self {
        if x > T::zero() {
            Sign::Positive
        } else if x < T::zero() {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

/// Rate `d lambda / d a` of the small-buffer model's root at `lambda`.
///
/// Differentiating `lambda + (a xi / tau) e^{-lambda tau} = 0` gives
/// `1 / (a tau - (tau / xi) e^{lambda tau})`.
pub fn root_velocity_model_b<T: Scalar>(a: T, b: T, tau: T, lambda: Complex<T>) -> Complex<T> {
    let xi = queue_gain_factor(b);
    let denom = Complex::new(a * tau, T::zero()) - (lambda * tau).exp() * (tau / xi);
    denom.inv()
}

/// Sign of `Re(d lambda / d a)` where the root pair of the small-buffer model
/// crosses the imaginary axis.
///
/// Substituting `e^{lambda tau} = -a xi / (lambda tau)` turns the real part's
/// sign into that of `Re(a + a / (lambda tau))`, which is `sgn(a)` because
/// `lambda` is imaginary at the crossing.
pub fn hopf_transversality<T: Scalar>(a: T, b: T, tau: T) -> Result<Sign> {
    check(tau > T::zero() && tau.is_finite(), "tau", as_f64(tau), "> 0")?;
    let verdict = stability_model_b(a, b)?;
    let critical = verdict.critical_a.expect("small-buffer model always has a boundary");
    if (a - critical).abs() > lit(1e-6) {
        return Err(Error::NotOnBoundary {
            a: as_f64(a),
            second: as_f64(b),
            critical: as_f64(critical),
        });
    }
    let lambda = Complex::new(T::zero(), T::FRAC_PI_2() / tau);
    Ok(Sign::of(root_velocity_model_b(a, b, tau, lambda).re))
}

/// Gain with the fastest convergence without queue feedback.
///
/// Solving `lambda + (a / tau) e^{-lambda tau} = 0` at the double root
/// `lambda = -1/tau` gives `a = 1/e`, independent of `tau`.
pub fn optimal_a_no_queue<T: Scalar>(tau: T) -> Result<T> {
    check(tau > T::zero() && tau.is_finite(), "tau", as_f64(tau), "> 0")?;
    Ok((-T::one()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChartModel {
    /// Rate/queue model over `(a, beta)`.
    A,
    /// Small-buffer model over `(a, b)`.
    B,
}

impl ChartModel {
    pub fn second_name(self) -> &'static str {
        match self {
            ChartModel::A => "beta",
            ChartModel::B => "b",
        }
    }

    pub fn verdict<T: Scalar>(self, a: T, second: T) -> Result<StabilityVerdict<T>> {
        match self {
            ChartModel::A => stability_model_a(a, second),
            ChartModel::B => stability_model_b(a, second),
        }
    }
}

/// Axis-aligned rectangle of gains with sample counts per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamGrid<T> {
    pub a: (T, T, usize),
    pub second: (T, T, usize),
}

/// One point of the extracted stability boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint<T> {
    pub a: T,
    pub second: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityChart<T> {
    pub model: ChartModel,
    pub a_values: Vec<T>,
    pub second_values: Vec<T>,
    /// Row-major: row `i` holds `second_values[i]` across all `a_values`.
    pub cells: Vec<StabilityVerdict<T>>,
}

impl<T: Scalar> StabilityChart<T> {
    pub fn cell(&self, row: usize, col: usize) -> &StabilityVerdict<T> {
        &self.cells[row * self.a_values.len() + col]
    }

    /// Zero contour of the margin, interpolated linearly along each row, as a
    /// polyline: entries into the stable region bottom to top, then exits
    /// top to bottom.
    pub fn boundary(&self) -> Vec<BoundaryPoint<T>> {
        let mut rising = Vec::new();
        let mut falling = Vec::new();
        for (row, &second) in self.second_values.iter().enumerate() {
            for col in 1..self.a_values.len() {
                let (m0, m1) = (self.cell(row, col - 1).margin, self.cell(row, col).margin);
                let (s0, s1) = (m0 > T::zero(), m1 > T::zero());
                if s0 == s1 {
                    continue;
                }
                let (a0, a1) = (self.a_values[col - 1], self.a_values[col]);
                let a = a0 + (a1 - a0) * m0 / (m0 - m1);
                let point = BoundaryPoint { a, second };
                if s1 {
                    rising.push(point);
                } else {
                    falling.push(point);
                }
            }
        }
        falling.reverse();
        rising.extend(falling);
        rising
    }
}

pub fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let span = hi - lo;
    let last = from_usize::<T>(n - 1);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + span * from_usize::<T>(i) / last })
        .collect()
}

/// Verdicts over a rectangular grid of gains.
pub fn stability_chart<T: Scalar>(model: ChartModel, grid: &ParamGrid<T>) -> Result<StabilityChart<T>> {
    let (alo, ahi, na) = grid.a;
    let (slo, shi, ns) = grid.second;
    check(alo > T::zero() && ahi > alo, "a range", as_f64(alo), "0 < lo < hi")?;
    check(slo >= T::zero() && shi > slo, "second range", as_f64(slo), "0 <= lo < hi")?;
    check(na >= 2, "a resolution", na as f64, ">= 2")?;
    check(ns >= 2, "second resolution", ns as f64, ">= 2")?;

    let a_values = linspace(alo, ahi, na);
    let second_values = linspace(slo, shi, ns);
    let rows: Vec<Vec<StabilityVerdict<T>>> = second_values
        .par_iter()
        .map(|&s| a_values.iter().map(|&a| model.verdict(a, s)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    Ok(StabilityChart {
        model,
        a_values,
        second_values,
        cells: rows.into_iter().flatten().collect(),
    })
}

/// Root of `f` on `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ in
/// sign.
pub(crate) fn bisect<T: Scalar>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, tol: T) -> T {
    let mut f_lo = f(lo);
    let half = lit::<T>(0.5);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = half * (lo + hi);
        let f_mid = f(mid);
        if (f_mid > T::zero()) == (f_lo > T::zero()) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    half * (lo + hi)
}
