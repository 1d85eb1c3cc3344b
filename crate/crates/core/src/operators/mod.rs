//! Operators, resolvents and the constants the certificates consume.
//!
//! The single-valued part of the inclusion `0 ∈ A(x) + B(x)` is only reachable
//! through a noisy [`Oracle`]; the set-valued part enters through its
//! [`Resolvent`], which for the normal cone of a closed convex set is the
//! Euclidean projection onto that set.

mod constants;
mod sets;

pub use constants::{
    contraction_factor, estimate_constants, one_minus_contraction, EstimatedConstants,
    LossBound, LossBoundProvenance, OperatorConstants,
};
pub use sets::{BoxHalfspaceSet, BoxSet, PolyhedralSet, ProductSet};

use nalgebra::DVector;

use crate::error::Result;

/// A noisy evaluator `O(x, ξ)` of the single-valued operator.
pub trait Oracle: Send + Sync {
    fn eval(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64>;

    /// `true` when `ξ ↦ O(x, ξ)` is affine for every `x`. The sample average
    /// then equals `O(x, mean ξ)` in exact arithmetic, which lets averaging
    /// precompute the noise mean once per dataset.
    fn affine_in_noise(&self) -> bool {
        false
    }
}

impl<F> Oracle for F
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn eval(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        self(x, xi)
    }
}

/// Marks a closure oracle as affine in the noise argument.
#[derive(Debug, Clone, Copy)]
pub struct AffineInNoise<F>(pub F);

impl<F> Oracle for AffineInNoise<F>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn eval(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        (self.0)(x, xi)
    }

    fn affine_in_noise(&self) -> bool {
        true
    }
}

/// The resolvent `J_{γA} = (Id + γA)^{-1}` of a maximally monotone operator.
///
/// Implementations used here do not depend on the step size because `A` is a
/// normal cone, so `J_{γA}` is a projection for every `γ > 0`.
pub trait Resolvent: Send + Sync {
    fn resolve(&self, y: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Resolvent of `A = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityResolvent;

impl Resolvent for IdentityResolvent {
    fn resolve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(y.clone())
    }
}

/// Wraps an infallible closure as a resolvent.
#[derive(Debug, Clone, Copy)]
pub struct FnResolvent<F>(pub F);

impl<F> Resolvent for FnResolvent<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn resolve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.0)(y))
    }
}

/// Euclidean projection onto a box.
pub fn project_box(x: &DVector<f64>, set: &BoxSet) -> Result<DVector<f64>> {
    set.project(x)
}

/// Euclidean projection onto a box cut by `1ᵀx ≥ ζ`.
pub fn project_box_halfspace(x: &DVector<f64>, set: &BoxHalfspaceSet) -> Result<DVector<f64>> {
    set.project(x)
}

/// `min { ‖z + v‖ : z ∈ N_set(x) }`.
pub fn normal_cone_distance<S: PolyhedralSet + ?Sized>(
    x: &DVector<f64>,
    v: &DVector<f64>,
    set: &S,
) -> Result<f64> {
    set.normal_cone_distance(x, v)
}
