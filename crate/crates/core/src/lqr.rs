//! Linear dynamics, quadratic losses, the discounted Riccati fixed point and
//! rollouts.
//!
//! The stage loss used for data is L(s, a) = ½ s'Qs + q's + a'Ra + c. The
//! Riccati map below is the one whose gain formula is
//! K = −γ(R + γB'XB)⁻¹B'XA, i.e. the dynamic program with action penalty
//! ½ a'Ra. Both conventions are kept exactly as the learner uses them.

pub mod attack;
pub mod victim;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::check_discount;

pub const DEFAULT_RICCATI_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITERS: usize = 100_000;
const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub noise_std: f64,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, noise_std: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.nrows() != n || b.ncols() == 0 {
            return Err(Error::shape(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::arg("noise standard deviation must be finite and ≥ 0"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("dynamics must be finite"));
        }
        Ok(Self { a, b, noise_std })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn mean_next(&self, s: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        &self.a * s + &self.b * a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLoss {
    pub q_mat: DMatrix<f64>,
    pub r_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub c: f64,
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

impl QuadraticLoss {
    /// Checks shapes, symmetry and Q ⪰ 0. The R margin is checked separately.
    pub fn new(q_mat: DMatrix<f64>, r_mat: DMatrix<f64>, q_vec: DVector<f64>, c: f64) -> Result<Self> {
        let n = q_mat.nrows();
        if !q_mat.is_square() || !r_mat.is_square() || q_vec.len() != n || n == 0 || r_mat.nrows() == 0 {
            return Err(Error::shape("loss matrices have inconsistent shapes"));
        }
        if !is_symmetric(&q_mat, 1e-12) || !is_symmetric(&r_mat, 1e-12) {
            return Err(Error::arg("loss matrices must be symmetric"));
        }
        if q_mat.iter().chain(r_mat.iter()).chain(q_vec.iter()).any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::arg("loss must be finite"));
        }
        if min_eigenvalue(&q_mat) < -1e-10 {
            return Err(Error::arg("state cost matrix is not PSD"));
        }
        Ok(Self { q_mat, r_mat, q_vec, c })
    }

    /// Fails unless R ⪰ εI up to 1e-10.
    pub fn check_margin(&self, eps: f64) -> Result<()> {
        let lo = min_eigenvalue(&self.r_mat);
        if lo < eps - 1e-10 {
            return Err(Error::arg(format!(
                "action cost has min eigenvalue {lo}, below margin {eps}"
            )));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.q_mat.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.r_mat.nrows()
    }

    /// L(s, a) = ½ s'Qs + q's + a'Ra + c.
    pub fn eval(&self, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        0.5 * s.dot(&(&self.q_mat * s)) + self.q_vec.dot(s) + a.dot(&(&self.r_mat * a)) + self.c
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            q_mat: &self.q_mat * factor,
            r_mat: &self.r_mat * factor,
            q_vec: &self.q_vec * factor,
            c: self.c * factor,
        }
    }
}

/// Affine policy a = Ks + k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPolicy {
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl ControlPolicy {
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            gain: DMatrix::zeros(m, n),
            offset: DVector::zeros(m),
        }
    }

    pub fn act(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.gain * s + &self.offset
    }

    /// Largest entrywise difference in gain and offset.
    pub fn max_deviation(&self, other: &ControlPolicy) -> f64 {
        (&self.gain - &other.gain)
            .amax()
            .max((&self.offset - &other.offset).amax())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub x_mat: DMatrix<f64>,
    pub x_vec: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub h: f64,
    pub mass: f64,
    pub eta: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            h: 0.1,
            mass: 1.0,
            eta: 0.5,
        }
    }
}

/// State (x, y, vx, vy), action = force (fx, fy); forward-Euler step.
pub fn vehicle_dynamics(params: &VehicleParams, noise_std: f64) -> Result<LinearDynamics> {
    let VehicleParams { h, mass, eta } = *params;
    if !(h > 0.0 && mass > 0.0 && eta >= 0.0) {
        return Err(Error::arg("vehicle needs h > 0, mass > 0, eta ≥ 0"));
    }
    let damp = 1.0 - h * eta / mass;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, h,   0.0,
        0.0, 1.0, 0.0, h,
        0.0, 0.0, damp, 0.0,
        0.0, 0.0, 0.0, damp,
    ]);
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(4, 2, &[
        0.0,      0.0,
        0.0,      0.0,
        h / mass, 0.0,
        0.0,      h / mass,
    ]);
    LinearDynamics::new(a, b, noise_std)
}

fn check_pair(dynamics: &LinearDynamics, loss: &QuadraticLoss) -> Result<()> {
    if loss.state_dim() != dynamics.state_dim() || loss.action_dim() != dynamics.action_dim() {
        return Err(Error::shape("loss and dynamics dimensions differ"));
    }
    Ok(())
}

/// (R + γB'XB), checked for invertibility.
fn action_hessian(
    dynamics: &LinearDynamics,
    r_mat: &DMatrix<f64>,
    x_mat: &DMatrix<f64>,
    gamma: f64,
) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let h = r_mat + dynamics.b.transpose() * x_mat * &dynamics.b * gamma;
    let lu = h.clone().lu();
    let scale = h.amax().max(1.0);
    if !lu.is_invertible() || lu.u().diagonal().iter().any(|d| d.abs() <= 1e-14 * scale) {
        return Err(Error::IllPosed("R + γB'XB is singular".into()));
    }
    Ok(lu)
}

fn riccati_map(
    dynamics: &LinearDynamics,
    loss: &QuadraticLoss,
    x_mat: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let (a, b) = (&dynamics.a, &dynamics.b);
    let lu = action_hessian(dynamics, &loss.r_mat, x_mat, gamma)?;
    let bxa = b.transpose() * x_mat * a;
    let sol = lu.solve(&bxa).ok_or_else(|| Error::IllPosed("singular solve".into()))?;
    let next = a.transpose() * x_mat * a * gamma - bxa.transpose() * sol * (gamma * gamma) + &loss.q_mat;
    Ok((&next + next.transpose()) * 0.5)
}

fn gain_from(
    dynamics: &LinearDynamics,
    loss: &QuadraticLoss,
    x_mat: &DMatrix<f64>,
    gamma: f64,
) -> Result<(DMatrix<f64>, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)> {
    let lu = action_hessian(dynamics, &loss.r_mat, x_mat, gamma)?;
    let rhs = dynamics.b.transpose() * x_mat * &dynamics.a;
    let k = lu.solve(&rhs).ok_or_else(|| Error::IllPosed("singular solve".into()))? * -gamma;
    Ok((k, lu))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Fixed-point iteration of the discounted Riccati map from X = 0, then the
/// offset x from (I − γ(A+BK)')x = q.
pub fn solve_discounted_riccati(
    dynamics: &LinearDynamics,
    loss: &QuadraticLoss,
    gamma: f64,
    tol: f64,
) -> Result<RiccatiSolution> {
    check_discount(gamma)?;
    check_pair(dynamics, loss)?;
    if !(tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    if min_eigenvalue(&loss.r_mat) <= 0.0 {
        return Err(Error::IllPosed("action cost must be positive definite".into()));
    }
    let n = dynamics.state_dim();
    let mut x_mat = DMatrix::zeros(n, n);
    let mut converged = None;
    for it in 0..RICCATI_MAX_ITERS {
        let next = riccati_map(dynamics, loss, &x_mat, gamma)?;
        let residual = (&next - &x_mat).amax();
        if !next.amax().is_finite() || next.amax() > DIVERGENCE_NORM {
            return Err(Error::NotStabilizable(format!(
                "Riccati iterate exceeded {DIVERGENCE_NORM:e} after {it} steps"
            )));
        }
        if residual <= tol {
            converged = Some((it, residual));
            break;
        }
        x_mat = next;
    }
    let (iterations, residual) = converged.ok_or(Error::IterationLimit(RICCATI_MAX_ITERS))?;
    let (k, _) = gain_from(dynamics, loss, &x_mat, gamma)?;
    let closed = &dynamics.a + &dynamics.b * &k;
    let rho = spectral_radius(&closed);
    if gamma * rho >= 1.0 {
        return Err(Error::NotStabilizable(format!(
            "γ·ρ(A+BK) = {} is not below 1",
            gamma * rho
        )));
    }
    let lhs = DMatrix::identity(n, n) - closed.transpose() * gamma;
    let x_vec = lhs
        .lu()
        .solve(&loss.q_vec)
        .ok_or_else(|| Error::IllPosed("offset system is singular".into()))?;
    Ok(RiccatiSolution {
        x_mat,
        x_vec,
        iterations,
        residual,
    })
}

/// K = −γ(R+γB'XB)⁻¹B'XA, k = −γ(R+γB'XB)⁻¹B'x.
pub fn policy_from_riccati(
    dynamics: &LinearDynamics,
    loss: &QuadraticLoss,
    gamma: f64,
    sol: &RiccatiSolution,
) -> Result<ControlPolicy> {
    let (gain, lu) = gain_from(dynamics, loss, &sol.x_mat, gamma)?;
    let rhs = dynamics.b.transpose() * &sol.x_vec;
    let offset = lu.solve(&rhs).ok_or_else(|| Error::IllPosed("singular solve".into()))? * -gamma;
    Ok(ControlPolicy { gain, offset })
}

pub fn optimal_lqr_policy(
    dynamics: &LinearDynamics,
    loss: &QuadraticLoss,
    gamma: f64,
) -> Result<ControlPolicy> {
    let sol = solve_discounted_riccati(dynamics, loss, gamma, DEFAULT_RICCATI_TOL)?;
    policy_from_riccati(dynamics, loss, gamma, &sol)
}

/// Policy together with its Riccati solution.
pub fn lqr_solution(
    dynamics: &LinearDynamics,
    loss: &QuadraticLoss,
    gamma: f64,
) -> Result<(ControlPolicy, RiccatiSolution)> {
    let sol = solve_discounted_riccati(dynamics, loss, gamma, DEFAULT_RICCATI_TOL)?;
    Ok((policy_from_riccati(dynamics, loss, gamma, &sol)?, sol))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSource {
    Policy(ControlPolicy),
    /// Uniform over the closed unit ball (volume measure).
    UniformBall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStep {
    pub s: DVector<f64>,
    pub a: DVector<f64>,
    pub r: f64,
    pub s_next: DVector<f64>,
}

fn sample_ball(rng: &mut impl Rng, m: usize) -> DVector<f64> {
    loop {
        let dir = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = dir.norm();
        if norm > 1e-300 {
            let radius = rng.gen::<f64>().powf(1.0 / m as f64);
            return dir * (radius / norm);
        }
    }
}

/// Rollout with r_t = −L(s_t, a_t) and Gaussian process noise.
pub fn simulate(
    dynamics: &LinearDynamics,
    source: &ActionSource,
    loss: &QuadraticLoss,
    s0: &DVector<f64>,
    steps: usize,
    seed: u64,
) -> Result<Vec<SimStep>> {
    check_pair(dynamics, loss)?;
    if steps == 0 {
        return Err(Error::arg("steps must be at least 1"));
    }
    if s0.len() != dynamics.state_dim() {
        return Err(Error::shape("initial state has the wrong dimension"));
    }
    let (n, m) = (dynamics.state_dim(), dynamics.action_dim());
    if let ActionSource::Policy(p) = source {
        if p.gain.shape() != (m, n) || p.offset.len() != m {
            return Err(Error::shape("policy dimensions do not match the dynamics"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = s0.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let a = match source {
            ActionSource::Policy(p) => p.act(&s),
            ActionSource::UniformBall => sample_ball(&mut rng, m),
        };
        let noise = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let s_next = dynamics.mean_next(&s, &a) + noise * dynamics.noise_std;
        let r = -loss.eval(&s, &a);
        out.push(SimStep {
            s: s.clone(),
            a,
            r,
            s_next: s_next.clone(),
        });
        s = s_next;
    }
    Ok(out)
}

/// Loss used by the learner and the true model in the vehicle experiment.
pub fn vehicle_true_loss() -> QuadraticLoss {
    QuadraticLoss::new(
        DMatrix::identity(4, 4),
        DMatrix::identity(2, 2) * 0.1,
        DVector::zeros(4),
        0.0,
    )
    .expect("valid loss")
}
