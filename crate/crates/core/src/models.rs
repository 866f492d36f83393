//! Right-hand sides of the two RCP fluid models and their binding to the
//! delay integrator.
//!
//! Rate/queue model (all `n` flows share the RTT `T`, so the aggregate load
//! is `y(t) = n R(t - T)`):
//!
//! ```text
//! R'(t) = R(t) / (C T) * ( a (C - y(t)) - beta q(t) / T )
//! q'(t) = y(t) - C                (gated at q = 0 in the switched variant)
//! ```
//!
//! Small-buffer model on one link with `y(t) = R(t - tau)`:
//!
//! ```text
//! R'(t) = a R(t) / (C tau) * ( C - y(t) - b C p(y(t)) ),   p(y) = y sigma^2 / (2 (C - y))
//! ```
//!
//! Without queue feedback (`b = 0`) the capacity is replaced by `gamma C`.

use serde::Serialize;

use crate::dde::{ConstantHistory, DdeProblem, DelaySystem};
use crate::error::{Error, Result, RhsFault};
use crate::scalar::{from_usize, lit, Scalar};
use crate::types::{equilibrium_model_a, equilibrium_model_b, Equilibrium, ModelAParams, ModelBParams};

/// Guard used by the integrator: states beyond `1e12 * C` count as divergence.
pub const BLOWUP_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    ASwitched,
    ANonSwitched,
    BQueue,
    BNoQueue,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ASwitched => "a-switched",
            Variant::ANonSwitched => "a-nonswitched",
            Variant::BQueue => "b-queue",
            Variant::BNoQueue => "b-noqueue",
        }
    }

    pub fn is_model_a(self) -> bool {
        matches!(self, Variant::ASwitched | Variant::ANonSwitched)
    }
}

/// A fluid model together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ModelSpec<T> {
    A(ModelAParams<T>),
    B(ModelBParams<T>),
}

impl<T: Scalar> ModelSpec<T> {
    pub fn model_a(variant: Variant, params: ModelAParams<T>) -> Result<Self> {
        let expected = match variant {
            Variant::ASwitched => true,
            Variant::ANonSwitched => false,
            _ => {
                return Err(Error::VariantMismatch {
                    variant: variant.name(),
                    reason: "rate/queue parameters given",
                })
            }
        };
        if params.switched() != expected {
            return Err(Error::VariantMismatch {
                variant: variant.name(),
                reason: "switched flag disagrees",
            });
        }
        Ok(ModelSpec::A(params))
    }

    pub fn model_b(variant: Variant, params: ModelBParams<T>) -> Result<Self> {
        match variant {
            Variant::BQueue if !params.has_queue_feedback() => Err(Error::VariantMismatch {
                variant: variant.name(),
                reason: "queue feedback requires b > 0",
            }),
            Variant::BNoQueue if params.has_queue_feedback() => Err(Error::VariantMismatch {
                variant: variant.name(),
                reason: "b must be 0 without queue feedback",
            }),
            Variant::BQueue | Variant::BNoQueue => Ok(ModelSpec::B(params)),
            _ => Err(Error::VariantMismatch {
                variant: variant.name(),
                reason: "small-buffer parameters given",
            }),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            ModelSpec::A(p) if p.switched() => Variant::ASwitched,
            ModelSpec::A(_) => Variant::ANonSwitched,
            ModelSpec::B(p) if p.has_queue_feedback() => Variant::BQueue,
            ModelSpec::B(_) => Variant::BNoQueue,
        }
    }

    pub fn a(&self) -> T {
        match self {
            ModelSpec::A(p) => p.a(),
            ModelSpec::B(p) => p.a(),
        }
    }

    pub fn with_a(&self, a: T) -> Result<Self> {
        Ok(match self {
            ModelSpec::A(p) => ModelSpec::A(p.with_a(a)?),
            ModelSpec::B(p) => ModelSpec::B(p.with_a(a)?),
        })
    }

    pub fn rtt(&self) -> T {
        match self {
            ModelSpec::A(p) => p.rtt(),
            ModelSpec::B(p) => p.rtt(),
        }
    }

    pub fn capacity(&self) -> T {
        match self {
            ModelSpec::A(p) => p.capacity(),
            ModelSpec::B(p) => p.capacity(),
        }
    }

    pub fn equilibrium(&self) -> Equilibrium<T> {
        match self {
            ModelSpec::A(p) => equilibrium_model_a(p),
            ModelSpec::B(p) => equilibrium_model_b(p),
        }
    }

    /// State vector at equilibrium.
    pub fn equilibrium_state(&self) -> Vec<T> {
        let eq = self.equilibrium();
        match self {
            ModelSpec::A(_) => vec![eq.rate_star, eq.queue_star],
            ModelSpec::B(_) => vec![eq.rate_star],
        }
    }

    /// Constant history at `(1 + perturbation) R*` with an empty queue.
    pub fn perturbed_history(&self, perturbation: T) -> ConstantHistory<T> {
        let mut x = self.equilibrium_state();
        x[0] = x[0] * (T::one() + perturbation);
        if let ModelSpec::A(_) = self {
            x[1] = T::zero();
        }
        ConstantHistory(x)
    }

    /// A delay problem for this model with the projection and blow-up guard
    /// configured.
    pub fn problem<H>(&self, history: H, t_end: T, dt: T) -> DdeProblem<T, Self, H>
    where
        H: crate::dde::History<T>,
    {
        let mut problem = DdeProblem::new(*self, self.rtt(), history, t_end)
            .with_dt(dt)
            .with_blowup_limit(lit::<T>(BLOWUP_FACTOR) * self.capacity());
        if self.variant() == Variant::ASwitched {
            problem = problem.with_projection(1);
        }
        problem
    }
}

impl<T: Scalar> DelaySystem<T> for ModelSpec<T> {
    fn dimension(&self) -> usize {
        match self {
            ModelSpec::A(_) => 2,
            ModelSpec::B(_) => 1,
        }
    }

    fn rhs(&self, _t: T, state: &[T], delayed: &[T], out: &mut [T]) -> std::result::Result<(), RhsFault> {
        match self {
            ModelSpec::A(p) => {
                let d = rhs_model_a([state[0], state[1]], [delayed[0], delayed[1]], p);
                out[0] = d[0];
                out[1] = d[1];
            }
            ModelSpec::B(p) => out[0] = rhs_model_b(state[0], delayed[0], p)?,
        }
        Ok(())
    }
}

/// Derivatives `(R', q')` of the rate/queue model.
///
/// The queue derivative is the ungated `y - C`; the switched variant's gate
/// at `q = 0` is applied by the integrator's projection.
pub fn rhs_model_a<T: Scalar>(state: [T; 2], delayed: [T; 2], p: &ModelAParams<T>) -> [T; 2] {
    let [rate, queue] = state;
    let c = p.capacity();
    let rtt = p.rtt();
    let load = from_usize::<T>(p.flows() as usize) * delayed[0];
    let d_rate = rate / (c * rtt) * (p.a() * (c - load) - p.beta() * queue / rtt);
    [d_rate, load - c]
}

/// Rate derivative of the small-buffer model.
pub fn rhs_model_b<T: Scalar>(rate: T, delayed: T, p: &ModelBParams<T>) -> std::result::Result<T, RhsFault> {
    let c = p.effective_capacity();
    let prefactor = p.a() * rate / (c * p.rtt());
    if p.has_queue_feedback() {
        let mean_queue = p.mean_queue(delayed).ok_or(RhsFault::Singular)?;
        Ok(prefactor * (c - delayed - p.b() * c * mean_queue))
    } else {
        Ok(prefactor * (c - delayed))
    }
}

/// Gain `kappa` of the linearization `r'(t) = -kappa r(t - tau)` of the
/// small-buffer model, `a (R* + C) / (C tau)`.
pub fn linear_gain_model_b<T: Scalar>(p: &ModelBParams<T>) -> T {
    let eq = equilibrium_model_b(p);
    let c = p.effective_capacity();
    if p.has_queue_feedback() {
        p.a() * (eq.rate_star + c) / (c * p.rtt())
    } else {
        p.a() * eq.rate_star / (c * p.rtt())
    }
}
