//! Box-constrained convex QP with noisy Hessian samples.
//!
//! `B(x) = q + P̄x` with `P̄ = QΛQᵀ ⪰ 0`; each sample perturbs the diagonal,
//! `O(x, ξ) = q + (P̄ + diag ξ)x`, and the constraint is `A = N_X` for
//! `X = [0, a]ⁿ`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::pev::REFERENCE_MAX_ITERATIONS;
use crate::error::{check_dim, Error, Result};
use crate::operators::{BoxSet, LossBound, Oracle, PolyhedralSet};
use crate::splitting::{fb_step_exact, Dataset};

/// Standard deviation of the entries of `q` and of the noise.
pub const QP_STD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpInstance {
    pub p_bar: DMatrix<f64>,
    pub q: DVector<f64>,
    pub bounds: BoxSet,
    pub noise_std: f64,
    pub seed: Option<u64>,
}

impl QpInstance {
    pub fn new(p_bar: DMatrix<f64>, q: DVector<f64>, bounds: BoxSet, noise_std: f64) -> Result<Self> {
        let n = q.len();
        check_dim(n, p_bar.nrows())?;
        check_dim(n, p_bar.ncols())?;
        check_dim(n, bounds.lower().len())?;
        let scale = 1.0 + p_bar.amax();
        if (&p_bar - p_bar.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Instance("P̄ must be symmetric".into()));
        }
        if p_bar.symmetric_eigenvalues().min() < -1e-12 * scale {
            return Err(Error::Instance("P̄ must be positive semidefinite".into()));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::Instance("noise std must be finite and >= 0".into()));
        }
        Ok(Self {
            p_bar,
            q,
            bounds,
            noise_std,
            seed: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Exact mean operator `q + P̄x`.
    pub fn mean_operator(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q + &self.p_bar * x
    }

    pub fn lambda_max(&self) -> f64 {
        self.p_bar.symmetric_eigenvalues().max()
    }

    /// Cocoercivity constant `1/λmax(P̄)` of the mean operator.
    pub fn theta(&self) -> f64 {
        1.0 / self.lambda_max()
    }

    /// `s` i.i.d. diagonal perturbations `ξ ~ N(0, noise_std² I)`.
    pub fn draw_perturbations(&self, s: usize, seed: u64) -> Result<Dataset> {
        let normal = Normal::new(0.0, self.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        Dataset::new(
            (0..s)
                .map(|_| DVector::from_fn(n, |_, _| normal.sample(&mut rng)))
                .collect(),
        )
    }

    /// Bound on `‖O(x, ξ)‖` over `x ∈ X` for every `ξ` in `dataset`: per
    /// sample, each coordinate of the affine map is bounded on the box by its
    /// extreme corners.
    pub fn operator_bound(&self, dataset: &Dataset) -> Result<f64> {
        check_dim(self.dim(), dataset.sample_dim())?;
        let (lo, hi) = (self.bounds.lower(), self.bounds.upper());
        let n = self.dim();
        let mut worst = 0.0_f64;
        for xi in dataset.samples() {
            let mut sq = 0.0;
            for r in 0..n {
                let (mut min, mut max) = (self.q[r], self.q[r]);
                for c in 0..n {
                    let a = self.p_bar[(r, c)] + if r == c { xi[r] } else { 0.0 };
                    let (u, v) = (a * lo[c], a * hi[c]);
                    min += u.min(v);
                    max += u.max(v);
                }
                let m = min.abs().max(max.abs());
                sq += m * m;
            }
            worst = worst.max(sq.sqrt());
        }
        Ok(worst)
    }

    /// `diam(X) + 2γM`.
    pub fn loss_bound(&self, gamma: f64, bound_m: f64) -> LossBound {
        LossBound::from_diameter(self.bounds.diameter(), gamma, bound_m)
    }
}

/// Random instance of dimension `n`: `P̄ = QΛQᵀ` with `Q` the orthogonal factor
/// of a Gaussian matrix and `Λ` linearly spaced in `[0, 1]`,
/// `q ~ N(0, 0.5²)`, `X = [0, a]ⁿ` with `a ~ U(0, 2)`.
pub fn qp_generate(n: usize, seed: u64) -> Result<QpInstance> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let g = DMatrix::from_fn(n, n, |_, _| std_normal.sample(&mut rng));
    let q_factor = g.qr().q();
    let lambda = DVector::from_fn(n, |i, _| if n == 1 { 1.0 } else { i as f64 / (n - 1) as f64 });
    let p = &q_factor * DMatrix::from_diagonal(&lambda) * q_factor.transpose();
    let p_bar = (&p + p.transpose()) * 0.5;
    let q_normal = Normal::new(0.0, QP_STD).expect("valid normal");
    let q = DVector::from_fn(n, |_, _| q_normal.sample(&mut rng));
    let a: f64 = rng.random_range(0.0..2.0);
    let mut inst = QpInstance::new(p_bar, q, BoxSet::uniform(n, 0.0, a)?, QP_STD)?;
    inst.seed = Some(seed);
    Ok(inst)
}

/// `q + (P̄ + diag ξ)x`.
pub fn qp_oracle(x: &DVector<f64>, xi: &DVector<f64>, instance: &QpInstance) -> Result<DVector<f64>> {
    check_dim(instance.dim(), x.len())?;
    check_dim(instance.dim(), xi.len())?;
    Ok(instance.mean_operator(x) + xi.component_mul(x))
}

/// Panics on dimension mismatch; use [`qp_oracle`] for a checked call.
impl Oracle for QpInstance {
    fn eval(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        qp_oracle(x, xi, self).unwrap_or_else(|e| panic!("QP oracle evaluation failed: {e}"))
    }

    fn affine_in_noise(&self) -> bool {
        true
    }
}

/// Projected gradient on the noiseless QP with step `1/λmax(P̄)` from the
/// origin, stopped once the fixed-point residual is at most `tol`.
pub fn qp_reference(instance: &QpInstance, tol: f64) -> Result<DVector<f64>> {
    let lmax = instance.lambda_max();
    if !(lmax > 0.0) {
        return Err(Error::Degenerate("P̄ vanishes".into()));
    }
    let gamma = 1.0 / lmax;
    let b_op = |x: &DVector<f64>| instance.mean_operator(x);
    let mut x = instance.bounds.project(&DVector::zeros(instance.dim()))?;
    let mut residual = f64::INFINITY;
    for _ in 0..REFERENCE_MAX_ITERATIONS {
        let next = fb_step_exact(&x, b_op, &instance.bounds, gamma)?.x;
        residual = (&next - &x).norm();
        x = next;
        if residual <= tol {
            return Ok(x);
        }
    }
    Err(Error::IterationCap {
        cap: REFERENCE_MAX_ITERATIONS,
        residual,
    })
}
