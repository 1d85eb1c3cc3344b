//! Boxes, boxes cut by a minimum-total halfspace, and their Cartesian products.
//!
//! Each set exposes its Euclidean projection (the resolvent of its normal
//! cone) and the exact distance `min { ‖z + v‖ : z ∈ N(x) }`, which decides
//! membership of `x` in the ε-zero set of `N + B` when `v = B(x)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Resolvent;
use crate::error::{check_dim, Error, Result};

/// Relative scale of the face-activity tolerance.
const ACTIVE_TOL_SCALE: f64 = 1e-9;

/// Closed convex polyhedra with cheap projections and normal cones.
pub trait PolyhedralSet: Resolvent {
    fn dim(&self) -> usize;

    /// Euclidean projection onto the set.
    fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Largest constraint violation at `x` (0 inside the set).
    fn violation(&self, x: &DVector<f64>) -> Result<f64>;

    /// Distance below which a constraint counts as active.
    fn active_tolerance(&self) -> f64;

    /// `min_{z ∈ N(x)} ‖z + v‖`; errors if `x` is outside the set beyond the
    /// activity tolerance.
    fn normal_cone_distance(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64>;

    fn contains(&self, x: &DVector<f64>) -> bool {
        self.violation(x)
            .map(|viol| viol <= self.active_tolerance())
            .unwrap_or(false)
    }
}

fn active_tolerance_for(upper: &DVector<f64>) -> f64 {
    let scale = upper.iter().fold(0.0_f64, |m, u| m.max(u.abs()));
    ACTIVE_TOL_SCALE * (1.0 + scale)
}

fn validate_bounds(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<()> {
    check_dim(lower.len(), upper.len())?;
    for (j, (l, u)) in lower.iter().zip(upper.iter()).enumerate() {
        if !l.is_finite() || !u.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite bound at coordinate {j}")));
        }
        if l > u {
            return Err(Error::Infeasible(format!(
                "lower bound {l} exceeds upper bound {u} at coordinate {j}"
            )));
        }
    }
    Ok(())
}

/// Which faces of a box are active at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Face {
    Free,
    Lower,
    Upper,
    Both,
}

impl Face {
    fn classify(x: f64, lower: f64, upper: f64, tol: f64) -> Self {
        match ((x - lower).abs() <= tol, (upper - x).abs() <= tol) {
            (true, true) => Face::Both,
            (true, false) => Face::Lower,
            (false, true) => Face::Upper,
            (false, false) => Face::Free,
        }
    }

    /// Residual of a coordinate `r = v_j (− ν)` after the box normals absorb
    /// whatever they can.
    fn residual(self, r: f64) -> f64 {
        match self {
            Face::Free => r,
            Face::Lower => r.min(0.0),
            Face::Upper => r.max(0.0),
            Face::Both => 0.0,
        }
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        validate_bounds(&lower, &upper)?;
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(&v, (&l, &u))| v.clamp(l, u)),
        )
    }
}

impl Resolvent for BoxSet {
    fn resolve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.project(y)
    }
}

impl PolyhedralSet for BoxSet {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.clamp(x))
    }

    fn violation(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .fold(0.0_f64, |m, (&v, (&l, &u))| m.max(l - v).max(v - u)))
    }

    fn active_tolerance(&self) -> f64 {
        active_tolerance_for(&self.upper)
    }

    fn normal_cone_distance(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let tol = self.active_tolerance();
        let viol = self.violation(x)?;
        if viol > tol {
            return Err(Error::NotInSet { violation: viol });
        }
        let sq: f64 = (0..self.dim())
            .map(|j| {
                let face = Face::classify(x[j], self.lower[j], self.upper[j], tol);
                face.residual(v[j]).powi(2)
            })
            .sum();
        Ok(sq.sqrt())
    }
}

/// `{ x ∈ [lower, upper] : 1ᵀx ≥ zeta }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxHalfspaceSet {
    bounds: BoxSet,
    zeta: f64,
}

impl BoxHalfspaceSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>, zeta: f64) -> Result<Self> {
        let bounds = BoxSet::new(lower, upper)?;
        if !zeta.is_finite() {
            return Err(Error::InvalidArgument("non-finite minimum total".into()));
        }
        let cap: f64 = bounds.upper.iter().sum();
        if cap < zeta {
            return Err(Error::Infeasible(format!(
                "sum of caps {cap} is below the minimum total {zeta}"
            )));
        }
        Ok(Self { bounds, zeta })
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.bounds.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.bounds.upper
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn bounding_box(&self) -> &BoxSet {
        &self.bounds
    }

    fn sum_tolerance(&self) -> f64 {
        self.active_tolerance() * self.dim().max(1) as f64
    }

    /// Multiplier `λ ≥ 0` with `Σ clamp(x + λ) = zeta`, found by walking the
    /// breakpoints of the piecewise-linear, nondecreasing map `λ ↦ Σ clamp(x + λ)`.
    fn shift_multiplier(&self, x: &DVector<f64>) -> f64 {
        let (lower, upper) = (&self.bounds.lower, &self.bounds.upper);
        let mut total = 0.0;
        let mut slope = 0_i64;
        let mut events: Vec<(f64, i64)> = Vec::with_capacity(2 * x.len());
        for j in 0..x.len() {
            let (v, l, u) = (x[j], lower[j], upper[j]);
            total += v.clamp(l, u);
            if v < l {
                events.push((l - v, 1));
                events.push((u - v, -1));
            } else if v < u {
                slope += 1;
                events.push((u - v, -1));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut lambda = 0.0;
        for (at, change) in events {
            let reach = total + slope as f64 * (at - lambda);
            if slope > 0 && reach >= self.zeta {
                break;
            }
            total = reach;
            lambda = at;
            slope += change;
        }
        if slope > 0 {
            lambda + (self.zeta - total) / slope as f64
        } else {
            // Only reachable when every cap is active, i.e. sum(upper) == zeta.
            lambda
        }
    }
}

impl Resolvent for BoxHalfspaceSet {
    fn resolve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.project(y)
    }
}

impl PolyhedralSet for BoxHalfspaceSet {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        let clamped = self.bounds.clamp(x);
        if clamped.sum() >= self.zeta {
            return Ok(clamped);
        }
        let lambda = self.shift_multiplier(x);
        Ok(self.bounds.clamp(&x.add_scalar(lambda)))
    }

    fn violation(&self, x: &DVector<f64>) -> Result<f64> {
        let box_viol = self.bounds.violation(x)?;
        Ok(box_viol.max(self.zeta - x.sum()))
    }

    fn active_tolerance(&self) -> f64 {
        self.bounds.active_tolerance()
    }

    fn normal_cone_distance(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let tol = self.active_tolerance();
        let box_viol = self.bounds.violation(x)?;
        let sum_gap = x.sum() - self.zeta;
        if box_viol > tol || sum_gap < -self.sum_tolerance() {
            return Err(Error::NotInSet {
                violation: box_viol.max(-sum_gap),
            });
        }
        let faces: Vec<Face> = (0..self.dim())
            .map(|j| Face::classify(x[j], self.bounds.lower[j], self.bounds.upper[j], tol))
            .collect();
        let objective = |nu: f64| -> f64 {
            faces
                .iter()
                .zip(v.iter())
                .map(|(f, &vj)| f.residual(vj - nu).powi(2))
                .sum()
        };
        if sum_gap > self.sum_tolerance() {
            return Ok(objective(0.0).sqrt());
        }

        // Sum constraint active: minimize the convex piecewise quadratic in the
        // multiplier ν ≥ 0 of the generator −𝟙. Between consecutive breakpoints
        // the contributing coordinates are fixed and the minimizer is their mean.
        let mut cuts: Vec<f64> = faces
            .iter()
            .zip(v.iter())
            .filter(|(f, &vj)| matches!(f, Face::Lower | Face::Upper) && vj > 0.0)
            .map(|(_, &vj)| vj)
            .collect();
        cuts.push(0.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut best = f64::INFINITY;
        for (idx, &lo) in cuts.iter().enumerate() {
            let hi = cuts.get(idx + 1).copied().unwrap_or(f64::INFINITY);
            let probe = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
            let (mut count, mut acc) = (0_usize, 0.0);
            for (f, &vj) in faces.iter().zip(v.iter()) {
                let contributes = match f {
                    Face::Free => true,
                    Face::Lower => vj - probe < 0.0,
                    Face::Upper => vj - probe > 0.0,
                    Face::Both => false,
                };
                if contributes {
                    count += 1;
                    acc += vj;
                }
            }
            let nu = if count == 0 { lo } else { (acc / count as f64).clamp(lo, hi) };
            best = best.min(objective(nu));
        }
        Ok(best.sqrt())
    }
}

/// Cartesian product of equally typed blocks, laid out contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSet<S> {
    blocks: Vec<S>,
    offsets: Vec<usize>,
}

impl<S: PolyhedralSet> ProductSet<S> {
    pub fn new(blocks: Vec<S>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        let mut at = 0;
        offsets.push(0);
        for b in &blocks {
            at += b.dim();
            offsets.push(at);
        }
        Self { blocks, offsets }
    }

    pub fn blocks(&self) -> &[S] {
        &self.blocks
    }

    fn block_slice(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        x.rows(self.offsets[i], self.offsets[i + 1] - self.offsets[i]).into_owned()
    }
}

impl<S: PolyhedralSet> Resolvent for ProductSet<S> {
    fn resolve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.project(y)
    }
}

impl<S: PolyhedralSet> PolyhedralSet for ProductSet<S> {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = DVector::zeros(x.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let p = block.project(&self.block_slice(i, x))?;
            out.rows_mut(self.offsets[i], p.len()).copy_from(&p);
        }
        Ok(out)
    }

    fn violation(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut worst = 0.0_f64;
        for (i, block) in self.blocks.iter().enumerate() {
            worst = worst.max(block.violation(&self.block_slice(i, x))?);
        }
        Ok(worst)
    }

    fn active_tolerance(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.active_tolerance())
            .fold(0.0, f64::max)
    }

    fn normal_cone_distance(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        let mut sq = 0.0;
        for (i, block) in self.blocks.iter().enumerate() {
            let d = block.normal_cone_distance(&self.block_slice(i, x), &self.block_slice(i, v))?;
            sq += d * d;
        }
        Ok(sq.sqrt())
    }

    fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && self
                .blocks
                .iter()
                .enumerate()
                .all(|(i, b)| b.contains(&self.block_slice(i, x)))
    }
}
