//! Plug-in electric vehicle charging game.
//!
//! Agent `i` chooses a charging profile `x_i ∈ ℝ^T` in
//! `Ω_i = {x_i ∈ [0, x̄_i]^T : 1ᵀx_i ≥ ζ_i}` and pays
//! `J_i = ‖x_i‖²_{Q_i} + c_iᵀx_i + ξᵀx_i + ‖σ(x) − σ̄‖²_P` with `σ(x) = (1/N) Σ_j x_j`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificates::{epsilon_zero_strong, fixed_point_residual, Certificate};
use crate::error::{check_dim, Error, Result};
use crate::operators::{BoxHalfspaceSet, LossBound, OperatorConstants, Oracle, PolyhedralSet, ProductSet};
use crate::splitting::{empirical_risk, fb_run_data, fb_step_exact, Dataset, Hypothesis, Trajectory};

/// Iteration cap of the reference solvers.
pub const REFERENCE_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PevGame {
    n_agents: usize,
    horizon: usize,
    q_diag: Vec<DVector<f64>>,
    c: Vec<DVector<f64>>,
    p: DMatrix<f64>,
    sigma_ref: DVector<f64>,
    sets: ProductSet<BoxHalfspaceSet>,
    seed: Option<u64>,
}

/// Parameters of the randomly drawn benchmark instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PevScenario {
    pub n_agents: usize,
    pub horizon: usize,
    pub q_range: (f64, f64),
    pub c_range: (f64, f64),
    pub zeta_range: (f64, f64),
    pub upper: f64,
    pub sigma_ref: f64,
}

impl Default for PevScenario {
    fn default() -> Self {
        Self {
            n_agents: 20,
            horizon: 14,
            q_range: (0.002, 0.008),
            c_range: (0.02, 0.075),
            zeta_range: (12.0, 18.0),
            upper: 2.5,
            sigma_ref: 1.0,
        }
    }
}

impl PevGame {
    /// Builds a game with `P` given as a full matrix. The sets are
    /// `[0, upper_i] ∩ {1ᵀx_i ≥ zeta_i}`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q_diag: Vec<DVector<f64>>,
        c: Vec<DVector<f64>>,
        p: DMatrix<f64>,
        sigma_ref: DVector<f64>,
        upper: Vec<DVector<f64>>,
        zeta: Vec<f64>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let n_agents = q_diag.len();
        if n_agents == 0 {
            return Err(Error::Instance("a game needs at least one agent".into()));
        }
        let horizon = sigma_ref.len();
        if horizon == 0 {
            return Err(Error::Instance("horizon must be >= 1".into()));
        }
        for list_len in [c.len(), upper.len(), zeta.len()] {
            check_dim(n_agents, list_len)?;
        }
        for v in q_diag.iter().chain(&c).chain(&upper) {
            check_dim(horizon, v.len())?;
        }
        check_dim(horizon, p.nrows())?;
        check_dim(horizon, p.ncols())?;
        if q_diag.iter().flat_map(|q| q.iter()).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Instance("every Q_i must be positive definite".into()));
        }
        if p.iter().chain(c.iter().flat_map(|v| v.iter())).chain(sigma_ref.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Instance("non-finite game data".into()));
        }
        let sym = (&p + p.transpose()) * 0.5;
        if sym.cholesky().is_none() {
            return Err(Error::Instance("P must be positive definite".into()));
        }
        let blocks = upper
            .into_iter()
            .zip(&zeta)
            .map(|(u, &z)| BoxHalfspaceSet::new(DVector::zeros(horizon), u, z))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_agents,
            horizon,
            q_diag,
            c,
            p,
            sigma_ref,
            sets: ProductSet::new(blocks),
            seed,
        })
    }

    /// Random instance: `Q_i = q_i·I`, `c_i = c_i·1`, `ζ_i` drawn uniformly from
    /// the scenario ranges, `P = I_T`, `σ̄ = sigma_ref·1`, `x̄_i = upper·1`.
    pub fn generate(scenario: &PevScenario, seed: u64) -> Result<Self> {
        let (n, t) = (scenario.n_agents, scenario.horizon);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q_diag = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        let mut zeta = Vec::with_capacity(n);
        for _ in 0..n {
            q_diag.push(DVector::from_element(t, rng.random_range(scenario.q_range.0..=scenario.q_range.1)));
            c.push(DVector::from_element(t, rng.random_range(scenario.c_range.0..=scenario.c_range.1)));
            zeta.push(rng.random_range(scenario.zeta_range.0..=scenario.zeta_range.1));
        }
        Self::new(
            q_diag,
            c,
            DMatrix::identity(t, t),
            DVector::from_element(t, scenario.sigma_ref),
            vec![DVector::from_element(t, scenario.upper); n],
            zeta,
            Some(seed),
        )
    }

    /// The benchmark instance with 20 agents over a 14-hour horizon.
    pub fn random(seed: u64) -> Result<Self> {
        Self::generate(&PevScenario::default(), seed)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Dimension `N·T` of the collective strategy.
    pub fn dim(&self) -> usize {
        self.n_agents * self.horizon
    }

    pub fn q_diag(&self) -> &[DVector<f64>] {
        &self.q_diag
    }

    pub fn c(&self) -> &[DVector<f64>] {
        &self.c
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn sigma_ref(&self) -> &DVector<f64> {
        &self.sigma_ref
    }

    pub fn sets(&self) -> &ProductSet<BoxHalfspaceSet> {
        &self.sets
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn block<'a>(&self, x: &'a DVector<f64>, i: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(i * self.horizon, self.horizon)
    }

    /// Aggregate `σ(x) = (1/N) Σ_i x_i`.
    pub fn aggregate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut sigma = DVector::zeros(self.horizon);
        for i in 0..self.n_agents {
            sigma += self.block(x, i);
        }
        Ok(sigma / self.n_agents as f64)
    }

    /// Cost `J_i(x, ξ)` of agent `i`.
    pub fn cost(&self, i: usize, x: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
        if i >= self.n_agents {
            return Err(Error::InvalidArgument(format!("agent {i} out of range")));
        }
        check_dim(self.horizon, xi.len())?;
        let xi_block = self.block(x, i);
        let dev = self.aggregate(x)? - &self.sigma_ref;
        let quad = xi_block.component_mul(&xi_block).dot(&self.q_diag[i]);
        Ok(quad + self.c[i].dot(&xi_block) + xi.dot(&xi_block) + dev.dot(&(&self.p * &dev)))
    }

    /// Stacked partial gradients `F_i = 2Q_i x_i + c_i + ξ + (1/N)(P + Pᵀ)(σ(x) − σ̄)`.
    pub fn pseudogradient(&self, x: &DVector<f64>, xi: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.horizon, xi.len())?;
        let dev = self.aggregate(x)? - &self.sigma_ref;
        let coupling = (&self.p * &dev + self.p.tr_mul(&dev)) / self.n_agents as f64;
        let shared = coupling + xi;
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.n_agents {
            let g = self.block(x, i).component_mul(&self.q_diag[i]) * 2.0 + &self.c[i] + &shared;
            out.rows_mut(i * self.horizon, self.horizon).copy_from(&g);
        }
        Ok(out)
    }

    /// Constant Jacobian of the pseudogradient:
    /// `blkdiag(2Q_i) + (1/N²)·(11ᵀ ⊗ (P + Pᵀ))`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let (n, t) = (self.n_agents, self.horizon);
        let coupling = (&self.p + self.p.transpose()) / (n * n) as f64;
        let mut jac = DMatrix::zeros(n * t, n * t);
        for i in 0..n {
            for j in 0..n {
                jac.view_mut((i * t, j * t), (t, t)).copy_from(&coupling);
            }
            for k in 0..t {
                jac[(i * t + k, i * t + k)] += 2.0 * self.q_diag[i][k];
            }
        }
        jac
    }

    /// Whether the Jacobian is symmetric, i.e. the game is a potential game.
    pub fn is_potential(&self) -> bool {
        let scale = 1.0 + self.p.amax();
        (&self.p - self.p.transpose()).amax() <= 1e-14 * scale
    }

    /// Exact strong monotonicity and Lipschitz moduli of the pseudogradient:
    /// `μ = λmin((J + Jᵀ)/2)`, `κ = σmax(J)`.
    pub fn monotonicity_constants(&self) -> (f64, f64) {
        let jac = self.jacobian();
        let sym = (&jac + jac.transpose()) * 0.5;
        let mu = sym.symmetric_eigenvalues().min();
        let kappa = if self.is_potential() {
            sym.symmetric_eigenvalues().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        } else {
            jac.singular_values().max()
        };
        (mu, kappa)
    }

    /// Bound on `‖F(x, ξ)‖` over `x ∈ Ω` and prices within the per-hour range
    /// of `prices`, by interval arithmetic on each coordinate.
    pub fn operator_bound(&self, prices: &Dataset) -> Result<f64> {
        check_dim(self.horizon, prices.sample_dim())?;
        let t = self.horizon;
        let mut xi_lo = DVector::from_element(t, f64::INFINITY);
        let mut xi_hi = DVector::from_element(t, f64::NEG_INFINITY);
        for s in prices.samples() {
            xi_lo = xi_lo.zip_map(s, f64::min);
            xi_hi = xi_hi.zip_map(s, f64::max);
        }
        let blocks = self.sets.blocks();
        let mut sig_lo = DVector::zeros(t);
        let mut sig_hi = DVector::zeros(t);
        for b in blocks {
            sig_lo += b.lower();
            sig_hi += b.upper();
        }
        let nf = self.n_agents as f64;
        let dev_lo = sig_lo / nf - &self.sigma_ref;
        let dev_hi = sig_hi / nf - &self.sigma_ref;
        let w = (&self.p + self.p.transpose()) / nf;
        let mut cp_lo = DVector::<f64>::zeros(t);
        let mut cp_hi = DVector::<f64>::zeros(t);
        for r in 0..t {
            for u in 0..t {
                let (a, b) = (w[(r, u)] * dev_lo[u], w[(r, u)] * dev_hi[u]);
                cp_lo[r] += a.min(b);
                cp_hi[r] += a.max(b);
            }
        }
        let mut sq = 0.0_f64;
        for (i, b) in blocks.iter().enumerate() {
            for k in 0..t {
                let qk: f64 = 2.0 * self.q_diag[i][k];
                let (a, bb) = (qk * b.lower()[k], qk * b.upper()[k]);
                let lo = a.min(bb) + self.c[i][k] + xi_lo[k] + cp_lo[k];
                let hi = a.max(bb) + self.c[i][k] + xi_hi[k] + cp_hi[k];
                let m = lo.abs().max(hi.abs());
                sq += m * m;
            }
        }
        Ok(sq.sqrt())
    }

    /// Diameter of the bounding box of `Ω`.
    pub fn diameter(&self) -> f64 {
        self.sets
            .blocks()
            .iter()
            .map(|b| {
                let d = b.bounding_box().diameter();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `(μ_F, κ_F, M_F, ℓ̄)` derived analytically for step size `gamma`, with
    /// `ℓ̄ = diam(Ω) + 2γM_F`.
    pub fn analytic_constants(&self, prices: &Dataset, gamma: f64) -> Result<OperatorConstants> {
        let (mu, kappa) = self.monotonicity_constants();
        let bound_m = self.operator_bound(prices)?;
        OperatorConstants::new(
            mu,
            kappa,
            None,
            bound_m,
            LossBound::from_diameter(self.diameter(), gamma, bound_m),
        )
    }

    /// Projection of the origin onto `Ω`, the default starting point.
    pub fn default_start(&self) -> Result<DVector<f64>> {
        self.sets.project(&DVector::zeros(self.dim()))
    }

    /// Serializable instance description. Errors if `P` is not diagonal.
    pub fn to_instance_file(&self) -> Result<PevInstanceFile> {
        let t = self.horizon;
        for r in 0..t {
            for u in 0..t {
                if r != u && self.p[(r, u)] != 0.0 {
                    return Err(Error::Instance("only diagonal P can be written to an instance file".into()));
                }
            }
        }
        let rows = |v: &[DVector<f64>]| v.iter().map(|d| d.iter().copied().collect()).collect();
        Ok(PevInstanceFile {
            n_agents: self.n_agents,
            horizon: t,
            q_diag: rows(&self.q_diag),
            c: rows(&self.c),
            p_diag: self.p.diagonal().iter().copied().collect(),
            sigma_ref: self.sigma_ref.iter().copied().collect(),
            upper: self.sets.blocks().iter().map(|b| b.upper().iter().copied().collect()).collect(),
            zeta: self.sets.blocks().iter().map(|b| b.zeta()).collect(),
            seed: self.seed,
        })
    }

    pub fn from_instance_file(file: &PevInstanceFile) -> Result<Self> {
        let rows = |name: &str, v: &[Vec<f64>]| -> Result<Vec<DVector<f64>>> {
            if v.len() != file.n_agents {
                return Err(Error::Instance(format!(
                    "{name} has {} rows, expected n_agents = {}",
                    v.len(),
                    file.n_agents
                )));
            }
            v.iter()
                .map(|r| {
                    if r.len() == file.horizon {
                        Ok(DVector::from_column_slice(r))
                    } else {
                        Err(Error::Instance(format!(
                            "{name} row has {} entries, expected horizon = {}",
                            r.len(),
                            file.horizon
                        )))
                    }
                })
                .collect()
        };
        let flat = |name: &str, v: &[f64], len: usize| -> Result<DVector<f64>> {
            if v.len() == len {
                Ok(DVector::from_column_slice(v))
            } else {
                Err(Error::Instance(format!("{name} has {} entries, expected {len}", v.len())))
            }
        };
        let p_diag = flat("p_diag", &file.p_diag, file.horizon)?;
        let sigma_ref = flat("sigma_ref", &file.sigma_ref, file.horizon)?;
        if file.zeta.len() != file.n_agents {
            return Err(Error::Instance(format!(
                "zeta has {} entries, expected n_agents = {}",
                file.zeta.len(),
                file.n_agents
            )));
        }
        Self::new(
            rows("q_diag", &file.q_diag)?,
            rows("c", &file.c)?,
            DMatrix::from_diagonal(&p_diag),
            sigma_ref,
            rows("upper", &file.upper)?,
            file.zeta.clone(),
            file.seed,
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_instance_file()?).map_err(|e| Error::Instance(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: PevInstanceFile = toml::from_str(text).map_err(|e| Error::Instance(e.to_string()))?;
        Self::from_instance_file(&file)
    }
}

/// On-disk form of a [`PevGame`]; per-agent quantities are rows of length `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PevInstanceFile {
    pub n_agents: usize,
    pub horizon: usize,
    pub q_diag: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub p_diag: Vec<f64>,
    pub sigma_ref: Vec<f64>,
    pub upper: Vec<Vec<f64>>,
    pub zeta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Panics on dimension mismatch; use [`pev_pseudogradient`] for a checked call.
impl Oracle for PevGame {
    fn eval(&self, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        self.pseudogradient(x, xi)
            .unwrap_or_else(|e| panic!("pseudogradient evaluation failed: {e}"))
    }

    fn affine_in_noise(&self) -> bool {
        true
    }
}

pub fn pev_pseudogradient(x: &DVector<f64>, xi: &DVector<f64>, game: &PevGame) -> Result<DVector<f64>> {
    game.pseudogradient(x, xi)
}

/// Data-driven proximal gradient method: every agent takes a gradient step on
/// the sample-averaged pseudogradient and projects onto its own set.
pub fn proximal_gradient_run(
    game: &PevGame,
    dataset: &Dataset,
    gamma: f64,
    iterations: usize,
    x0: &DVector<f64>,
) -> Result<(Hypothesis, Trajectory)> {
    check_dim(game.dim(), x0.len())?;
    check_dim(game.horizon(), dataset.sample_dim())?;
    fb_run_data(x0, dataset, game, game.sets(), gamma, iterations)
}

/// ε-SNE certificate for the hypothesis `h` trained on `dataset`.
pub fn epsilon_sne_certificate(
    h: &Hypothesis,
    game: &PevGame,
    dataset: &Dataset,
    gamma: f64,
    delta: f64,
    iterations: usize,
    constants: &OperatorConstants,
) -> Result<Certificate> {
    check_dim(game.dim(), h.dim())?;
    let risk = empirical_risk(h, dataset, game, gamma);
    epsilon_zero_strong(risk, gamma, constants, dataset.len(), iterations, delta)
}

/// Output of the data-driven method with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SneResult {
    pub x: DVector<f64>,
    pub certificate: Certificate,
    /// `‖x − x*‖ / ‖x*‖` when a reference `x*` is known.
    pub reference_gap: Option<f64>,
}

/// Runs the data-driven method and certifies its output.
#[allow(clippy::too_many_arguments)]
pub fn solve_sne(
    game: &PevGame,
    dataset: &Dataset,
    gamma: f64,
    iterations: usize,
    x0: &DVector<f64>,
    delta: f64,
    constants: &OperatorConstants,
    reference: Option<&DVector<f64>>,
) -> Result<SneResult> {
    let (h, _) = proximal_gradient_run(game, dataset, gamma, iterations, x0)?;
    let mut certificate = epsilon_sne_certificate(&h, game, dataset, gamma, delta, iterations, constants)?;
    let mut reference_gap = None;
    if let Some(x_star) = reference {
        let norm = x_star.norm();
        certificate = certificate.with_reference_norm(norm)?;
        reference_gap = Some((&h.x - x_star).norm() / norm);
    }
    Ok(SneResult {
        x: h.x,
        certificate,
        reference_gap,
    })
}

/// Exact FB on `B(x) = F(x, ξ̄)`, `ξ̄` the pool mean, which equals the pool
/// mean of the pseudogradient because `F` is affine in the price.
pub fn reference_sne(game: &PevGame, full_pool: &Dataset, tol: f64) -> Result<DVector<f64>> {
    let (mu, kappa) = game.monotonicity_constants();
    if !(mu > 0.0) {
        return Err(Error::Degenerate("pseudogradient is not strongly monotone".into()));
    }
    let gamma = if game.is_potential() { 1.0 / kappa } else { mu / (kappa * kappa) };
    reference_sne_from(game, full_pool, tol, &game.default_start()?, gamma)
}

/// [`reference_sne`] from a given start and step size.
pub fn reference_sne_from(
    game: &PevGame,
    full_pool: &Dataset,
    tol: f64,
    x0: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    check_dim(game.dim(), x0.len())?;
    check_dim(game.horizon(), full_pool.sample_dim())?;
    let xi_bar = full_pool.mean();
    let b_op = |x: &DVector<f64>| game.eval(x, &xi_bar);
    let mut x = game.sets().project(x0)?;
    let mut residual = f64::INFINITY;
    for _ in 0..REFERENCE_MAX_ITERATIONS {
        let next = fb_step_exact(&x, b_op, game.sets(), gamma)?.x;
        residual = (&next - &x).norm();
        x = next;
        if residual <= tol {
            let final_residual = fixed_point_residual(&x, b_op, game.sets(), gamma)?;
            if final_residual <= tol {
                return Ok(x);
            }
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::IterationCap {
        cap: REFERENCE_MAX_ITERATIONS,
        residual,
    })
}
