//! Reward poisoning against the LQR learner.
//!
//! The learner's loss fit is replaced by its first-order conditions and the
//! PSD constraints of that fit are lifted to the outer problem. The target
//! gain equations are multiplied through by (R̂ + γB̂'XB̂), which leaves only
//! linear equalities and PSD cones. The resulting feasible set is a subset of
//! the exact bi-level one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{BlockId, ConicProgram, ConicSolution, Norm, SolveOptions, SolveStatus};
use crate::data::ContinuousDataset;
use crate::error::{Error, Result};
use crate::lqr::victim::{estimate_loss, learn_policy, FeatureMatrix};
use crate::lqr::{lqr_solution, min_eigenvalue, ControlPolicy, LinearDynamics, QuadraticLoss, RiccatiSolution};
use crate::mdp::check_discount;
use crate::verify::Verification;

/// Policy match tolerance used by the verifier.
pub const POLICY_TOL: f64 = 1e-3;
/// KKT stationarity tolerance used by the verifier.
pub const KKT_TOL: f64 = 1e-6;
/// Agreement between the certified and independently refitted loss.
pub const REFIT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrAttackConfig {
    pub attacker_loss: QuadraticLoss,
    pub norm: Norm,
    /// Lower bound ε in R̂ ⪰ εI, shared with the learner.
    pub eps: f64,
    pub gamma: f64,
}

impl LqrAttackConfig {
    fn validate(&self) -> Result<()> {
        check_discount(self.gamma)?;
        if !(self.eps > 0.0) {
            return Err(Error::arg("ε must be positive"));
        }
        self.attacker_loss.check_margin(self.eps)
    }
}

/// Target policy plus the Riccati solution that certifies it.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPolicy {
    pub policy: ControlPolicy,
    pub witness: RiccatiSolution,
    pub loss: QuadraticLoss,
}

/// Solves the attacker's own LQR problem on the learner's dynamics estimate.
pub fn make_target_policy(
    config: &LqrAttackConfig,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
) -> Result<TargetPolicy> {
    config.validate()?;
    let dynamics = LinearDynamics::new(a_hat.clone(), b_hat.clone(), 0.0)?;
    let (policy, witness) = lqr_solution(&dynamics, &config.attacker_loss, config.gamma)?;
    Ok(TargetPolicy {
        policy,
        witness,
        loss: config.attacker_loss.clone(),
    })
}

/// Row-major form of a quadratic loss for JSON input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub q_mat: Vec<Vec<f64>>,
    pub r_mat: Vec<Vec<f64>>,
    pub q_vec: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

impl LossSpec {
    pub fn to_loss(&self) -> Result<QuadraticLoss> {
        let square = |rows: &[Vec<f64>]| rows.iter().all(|r| r.len() == rows.len());
        if !square(&self.q_mat) || !square(&self.r_mat) {
            return Err(Error::shape("loss matrices must be square"));
        }
        QuadraticLoss::new(
            from_rows(&self.q_mat),
            from_rows(&self.r_mat),
            DVector::from_vec(self.q_vec.clone()),
            self.c,
        )
    }
}

/// Certified quantities at the attack solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedEstimate {
    pub q_mat: Vec<Vec<f64>>,
    pub r_mat: Vec<Vec<f64>>,
    pub q_vec: Vec<f64>,
    pub c: f64,
    pub x_mat: Vec<Vec<f64>>,
    pub x_vec: Vec<f64>,
}

impl CertifiedEstimate {
    pub fn loss(&self) -> QuadraticLoss {
        QuadraticLoss {
            q_mat: from_rows(&self.q_mat),
            r_mat: from_rows(&self.r_mat),
            q_vec: DVector::from_vec(self.q_vec.clone()),
            c: self.c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrAttackResult {
    pub poisoned_rewards: Vec<f64>,
    pub cost: f64,
    pub norm: Norm,
    #[serde(rename = "target_K")]
    pub target_gain: Vec<Vec<f64>>,
    #[serde(rename = "target_k")]
    pub target_offset: Vec<f64>,
    #[serde(rename = "learned_K")]
    pub learned_gain: Vec<Vec<f64>>,
    #[serde(rename = "learned_k")]
    pub learned_offset: Vec<f64>,
    pub kkt_residual: f64,
    pub solver_status: String,
    pub eps: f64,
    pub gamma: f64,
    pub primal_residual: f64,
    pub certified: CertifiedEstimate,
}

impl LqrAttackResult {
    pub fn target_policy(&self) -> ControlPolicy {
        ControlPolicy {
            gain: from_rows(&self.target_gain),
            offset: DVector::from_vec(self.target_offset.clone()),
        }
    }

    pub fn learned_policy(&self) -> ControlPolicy {
        ControlPolicy {
            gain: from_rows(&self.learned_gain),
            offset: DVector::from_vec(self.learned_offset.clone()),
        }
    }

    pub fn modified_count(&self, clean: &[f64], tol: f64) -> usize {
        self.poisoned_rewards
            .iter()
            .zip(clean)
            .filter(|(r, r0)| (*r - *r0).abs() > tol)
            .count()
    }
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

/// Index handles of the surrogate program.
#[derive(Debug, Clone)]
pub struct SurrogateProgram {
    pub program: ConicProgram,
    pub rewards: BlockId,
    pub q_mat: BlockId,
    pub r_mat: BlockId,
    pub q_vec: BlockId,
    pub c: BlockId,
    pub x_mat: BlockId,
    pub x_vec: BlockId,
    pub features: FeatureMatrix,
}

impl SurrogateProgram {
    /// Variable vector for a given (r, loss, X, x).
    pub fn point(
        &self,
        rewards: &[f64],
        loss: &QuadraticLoss,
        x_mat: &DMatrix<f64>,
        x_vec: &DVector<f64>,
    ) -> Vec<f64> {
        let p = &self.program;
        let mut x = vec![0.0; p.num_variables()];
        p.store_vector(&mut x, self.rewards, rewards);
        p.store_matrix(&mut x, self.q_mat, &loss.q_mat);
        p.store_matrix(&mut x, self.r_mat, &loss.r_mat);
        p.store_vector(&mut x, self.q_vec, loss.q_vec.as_slice());
        p.store_vector(&mut x, self.c, &[loss.c]);
        p.store_matrix(&mut x, self.x_mat, x_mat);
        p.store_vector(&mut x, self.x_vec, x_vec.as_slice());
        x
    }

    /// Scaled stationarity residual max_j |Φ_j'(Φθ + r)| / ‖Φ_j‖ at a point.
    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        let p = &self.program;
        let theta_off = p.block(self.q_mat).offset;
        let theta = DVector::from_column_slice(&x[theta_off..theta_off + self.features.ncols()]);
        let r = p.vector_value(x, self.rewards);
        kkt_residual(&self.features, &theta, &r)
    }
}

pub fn kkt_residual(phi: &FeatureMatrix, theta: &DVector<f64>, rewards: &DVector<f64>) -> f64 {
    let e = &phi.matrix * theta + rewards;
    (0..phi.ncols())
        .map(|j| {
            let col = phi.matrix.column(j);
            col.dot(&e).abs() / col.norm().max(1e-300)
        })
        .fold(0.0, f64::max)
}

/// Assembles the surrogate attack program for a fixed target.
pub fn build_surrogate(
    dataset: &ContinuousDataset,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    target: &ControlPolicy,
    config: &LqrAttackConfig,
) -> Result<SurrogateProgram> {
    let (n, m) = (dataset.state_dim(), dataset.action_dim());
    if a_hat.shape() != (n, n) || b_hat.shape() != (n, m) {
        return Err(Error::shape("dynamics estimate does not match the dataset"));
    }
    if target.gain.shape() != (m, n) || target.offset.len() != m {
        return Err(Error::shape("target policy does not match the dataset"));
    }
    let gamma = config.gamma;
    let k = &target.gain;
    let kv = &target.offset;
    let closed = a_hat + b_hat * k;
    let bk = b_hat * kv;

    let mut prog = ConicProgram::new();
    let t = dataset.len();
    let rewards = prog.add_vector("r", t);
    // parameter blocks in feature-column order: Q, R, q, c
    let q_mat = prog.add_symmetric("Q", n);
    let r_mat = prog.add_symmetric("R", m);
    let q_vec = prog.add_vector("q", n);
    let c = prog.add_vector("c", 1);
    let x_mat = prog.add_symmetric("X", n);
    let x_vec = prog.add_vector("x", n);

    // γ B'X(A + BK) + R K = 0
    for i in 0..m {
        for j in 0..n {
            let mut terms = Vec::new();
            for kk in 0..n {
                for l in 0..n {
                    let coef = gamma * b_hat[(kk, i)] * closed[(l, j)];
                    terms.push((prog.sym(x_mat, kk, l), coef));
                }
            }
            for l in 0..m {
                terms.push((prog.sym(r_mat, i, l), k[(l, j)]));
            }
            prog.add_equality(terms, 0.0)?;
        }
    }
    // γ B'x + (R + γ B'XB) k = 0
    for i in 0..m {
        let mut terms = Vec::new();
        for kk in 0..n {
            terms.push((prog.var(x_vec, kk), gamma * b_hat[(kk, i)]));
            for l in 0..n {
                terms.push((prog.sym(x_mat, kk, l), gamma * b_hat[(kk, i)] * bk[l]));
            }
        }
        for l in 0..m {
            terms.push((prog.sym(r_mat, i, l), kv[l]));
        }
        prog.add_equality(terms, 0.0)?;
    }
    // X − γ A'X(A + BK) − Q = 0, every entry
    for i in 0..n {
        for j in 0..n {
            let mut terms = vec![(prog.sym(x_mat, i, j), 1.0), (prog.sym(q_mat, i, j), -1.0)];
            for kk in 0..n {
                for l in 0..n {
                    terms.push((prog.sym(x_mat, kk, l), -gamma * a_hat[(kk, i)] * closed[(l, j)]));
                }
            }
            prog.add_equality(terms, 0.0)?;
        }
    }
    // x − q − γ(A + BK)'x = 0
    for i in 0..n {
        let mut terms = vec![(prog.var(x_vec, i), 1.0), (prog.var(q_vec, i), -1.0)];
        for kk in 0..n {
            terms.push((prog.var(x_vec, kk), -gamma * closed[(kk, i)]));
        }
        prog.add_equality(terms, 0.0)?;
    }
    // stationarity of the loss fit, Φ'(Φθ + r) = 0, written with Φ = UΣV' as
    // U'r + ΣV'θ = 0; same solution set, without squaring the conditioning
    let features = FeatureMatrix::build(dataset);
    let theta_off = prog.block(q_mat).offset;
    let svd = features.matrix.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-10 * features.ncols() as f64 {
        return Err(Error::NotIdentifiable(
            "feature matrix is rank deficient; the learner's loss fit is not unique".into(),
        ));
    }
    for j in 0..features.ncols() {
        let sigma = svd.singular_values[j];
        let mut terms: Vec<(usize, f64)> = (0..features.ncols())
            .map(|kk| (theta_off + kk, sigma * vt[(j, kk)]))
            .collect();
        terms.extend((0..t).map(|tt| (prog.var(rewards, tt), u[(tt, j)])));
        prog.add_equality(terms, 0.0)?;
    }
    prog.require_psd(q_mat, 0.0)?;
    prog.require_psd(r_mat, config.eps)?;
    prog.require_psd(x_mat, 0.0)?;
    prog.set_norm_objective(config.norm, rewards, dataset.rewards())?;
    assert!(
        prog.is_convex_form(),
        "surrogate program must consist of linear rows and PSD cones only"
    );
    Ok(SurrogateProgram {
        program: prog,
        rewards,
        q_mat,
        r_mat,
        q_vec,
        c,
        x_mat,
        x_vec,
        features,
    })
}

/// The witness point built from the attacker's own loss: rewards −L†(s, a),
/// estimate = attacker loss, (X, x) = attacker Riccati solution.
pub fn witness_point(surrogate: &SurrogateProgram, dataset: &ContinuousDataset, target: &TargetPolicy) -> Vec<f64> {
    let theta = FeatureMatrix::params_of(&target.loss);
    let rewards: Vec<f64> = (-&surrogate.features.matrix * theta).iter().copied().collect();
    debug_assert_eq!(rewards.len(), dataset.len());
    surrogate.point(&rewards, &target.loss, &target.witness.x_mat, &target.witness.x_vec)
}

/// PSD margin used inside the solver; see [`SolveOptions::cone_margin`].
pub const CONE_MARGIN: f64 = 1e-6;

fn lqr_solve_options() -> SolveOptions {
    SolveOptions {
        feas_tol: 1e-8,
        opt_tol: 1e-7,
        max_iter: 500,
        polish_equalities: true,
        cone_margin: CONE_MARGIN,
    }
}

/// Solves the surrogate attack and re-learns on the poisoned rewards.
pub fn solve_lqr_attack(
    dataset: &ContinuousDataset,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    target: &TargetPolicy,
    config: &LqrAttackConfig,
) -> Result<LqrAttackResult> {
    config.validate()?;
    let sp = build_surrogate(dataset, a_hat, b_hat, &target.policy, config)?;
    let witness = witness_point(&sp, dataset, target);
    let witness_violation = sp.program.audit(&witness).max();
    if witness_violation > 1e-6 {
        return Err(Error::IllPosed(format!(
            "target witness violates the surrogate constraints by {witness_violation:.3e}"
        )));
    }
    let sol = sp.program.solve(&lqr_solve_options())?;
    let mut sol = sol.require_optimal("LQR attack").map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!(
            "{msg}; targets produced by make_target_policy are always feasible"
        )),
        other => other,
    })?;
    if config.norm == Norm::L1 {
        if let Some(refined) = refine_support(&sp, &sol, &dataset.rewards())? {
            sol = refined;
        }
    }
    let p = &sp.program;
    let poisoned: Vec<f64> = p.vector_value(&sol.x, sp.rewards).iter().copied().collect();
    let diff: Vec<f64> = poisoned.iter().zip(dataset.rewards()).map(|(a, b)| a - b).collect();
    let certified = CertifiedEstimate {
        q_mat: to_rows(&p.matrix_value(&sol.x, sp.q_mat)),
        r_mat: to_rows(&p.matrix_value(&sol.x, sp.r_mat)),
        q_vec: p.vector_value(&sol.x, sp.q_vec).iter().copied().collect(),
        c: sol.x[p.var(sp.c, 0)],
        x_mat: to_rows(&p.matrix_value(&sol.x, sp.x_mat)),
        x_vec: p.vector_value(&sol.x, sp.x_vec).iter().copied().collect(),
    };
    let learned = learn_policy(&dataset.with_rewards(&poisoned)?, config.gamma, config.eps)?;
    Ok(LqrAttackResult {
        cost: config.norm.eval(&diff),
        poisoned_rewards: poisoned,
        norm: config.norm,
        target_gain: to_rows(&target.policy.gain),
        target_offset: target.policy.offset.iter().copied().collect(),
        learned_gain: to_rows(&learned.policy.gain),
        learned_offset: learned.policy.offset.iter().copied().collect(),
        kkt_residual: sp.kkt_residual(&sol.x),
        solver_status: sol.status.label().to_string(),
        eps: config.eps,
        gamma: config.gamma,
        primal_residual: sol.audit.max(),
        certified,
    })
}

/// Relative threshold that separates the ℓ1 support from interior-point residue.
const SUPPORT_REL_TOL: f64 = 1e-4;

/// Interior-point iterates sit in the relative interior of the optimal face, so
/// ℓ1 solutions carry ~1e-6 residue off the support. Pins those rewards to
/// their clean values and re-solves; kept only if the cost does not grow.
fn refine_support(sp: &SurrogateProgram, sol: &ConicSolution, clean: &[f64]) -> Result<Option<ConicSolution>> {
    let r = sp.program.vector_value(&sol.x, sp.rewards);
    let dev: Vec<f64> = r.iter().zip(clean).map(|(a, b)| (a - b).abs()).collect();
    let peak = dev.iter().copied().fold(0.0, f64::max);
    let mut pinned = sp.program.clone();
    let mut any = false;
    for (t, d) in dev.iter().enumerate() {
        if *d <= SUPPORT_REL_TOL * peak {
            pinned.add_equality(vec![(pinned.var(sp.rewards, t), 1.0)], clean[t])?;
            any = true;
        }
    }
    if !any {
        return Ok(None);
    }
    let refined = pinned.solve(&lqr_solve_options())?;
    if refined.status != SolveStatus::Optimal || refined.objective > sol.objective + 1e-6 * (1.0 + sol.objective) {
        return Ok(None);
    }
    // re-audit against the original program, which has no pinning rows
    let audit = sp.program.audit(&refined.x);
    Ok(Some(ConicSolution { audit, ..refined }))
}

/// Re-learns on the poisoned data and checks policy, stationarity, the
/// independent refit and cost.
pub fn verify_lqr_attack(result: &LqrAttackResult, dataset: &ContinuousDataset) -> Result<Verification> {
    let mut v = Verification::new();
    let poisoned = dataset.with_rewards(&result.poisoned_rewards)?;
    let target = result.target_policy();
    match learn_policy(&poisoned, result.gamma, result.eps) {
        Ok(learned) => {
            let dev = learned.policy.max_deviation(&target);
            v.record(
                "policy",
                dev <= POLICY_TOL,
                format!("max entrywise deviation from target {dev:.3e}"),
            );
        }
        Err(e) => v.record("policy", false, format!("learner failed: {e}")),
    }
    let phi = FeatureMatrix::build(dataset);
    let certified = result.certified.loss();
    let theta = FeatureMatrix::params_of(&certified);
    let r = DVector::from_vec(result.poisoned_rewards.clone());
    let kkt = kkt_residual(&phi, &theta, &r);
    v.record("kkt", kkt <= KKT_TOL, format!("stationarity residual {kkt:.3e}"));
    let psd_q = min_eigenvalue(&certified.q_mat);
    let psd_r = min_eigenvalue(&certified.r_mat) - result.eps;
    v.record(
        "cones",
        psd_q >= -1e-8 && psd_r >= -1e-8,
        format!("min eig Q {psd_q:.3e}, min eig R − ε {psd_r:.3e}"),
    );
    match estimate_loss(&poisoned, result.eps) {
        Ok(refit) => {
            let gap = (FeatureMatrix::params_of(&refit.loss) - &theta).amax();
            v.record(
                "refit",
                gap <= REFIT_TOL,
                format!("independent loss fit differs from certificate by {gap:.3e}"),
            );
        }
        Err(e) => v.record("refit", false, format!("loss fit failed: {e}")),
    }
    let diff: Vec<f64> = result
        .poisoned_rewards
        .iter()
        .zip(dataset.rewards())
        .map(|(a, b)| a - b)
        .collect();
    let cost = result.norm.eval(&diff);
    v.record(
        "cost",
        (cost - result.cost).abs() <= 1e-9 * (1.0 + cost),
        format!("recomputed {cost:.12}, reported {:.12}", result.cost),
    );
    Ok(v)
}

/// Attacker loss of the vehicle experiment: drive to `goal` at rest.
pub fn goal_loss(goal: &DVector<f64>, action_cost: f64) -> Result<QuadraticLoss> {
    let n = goal.len();
    QuadraticLoss::new(
        DMatrix::identity(n, n),
        DMatrix::identity(2, 2) * action_cost,
        -goal,
        0.5 * goal.dot(goal),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_lqr_dataset;
    use crate::lqr::victim::sysid;
    use crate::lqr::{optimal_lqr_policy, vehicle_dynamics, vehicle_true_loss, VehicleParams};

    fn setup(sigma: f64, seed: u64) -> (ContinuousDataset, DMatrix<f64>, DMatrix<f64>) {
        let d = vehicle_dynamics(&VehicleParams::default(), sigma).unwrap();
        let s0 = DVector::from_vec(vec![1.0, 1.0, 1.0, -0.5]);
        let data = generate_lqr_dataset(&d, &vehicle_true_loss(), &s0, 400, seed).unwrap();
        let (a, b) = sysid(&data).unwrap();
        (data, a, b)
    }

    fn config(loss: QuadraticLoss, norm: Norm) -> LqrAttackConfig {
        LqrAttackConfig {
            attacker_loss: loss,
            norm,
            eps: 0.01,
            gamma: 0.9,
        }
    }

    #[test]
    fn zero_linear_term_gives_zero_offset() {
        let (_, a, b) = setup(0.01, 0);
        let t = make_target_policy(&config(vehicle_true_loss(), Norm::L2), &a, &b).unwrap();
        assert_eq!(t.policy.offset.amax(), 0.0);
    }

    #[test]
    fn goal_target_offset_matches_shifted_regulator() {
        // a resting goal is an equilibrium, so in shifted coordinates the
        // problem is the plain regulator and k = −K s†
        let d = vehicle_dynamics(&VehicleParams::default(), 0.0).unwrap();
        let goal = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        assert!((&d.a * &goal - &goal).amax() < 1e-15);
        let t = make_target_policy(&config(goal_loss(&goal, 0.1).unwrap(), Norm::L2), &d.a, &d.b).unwrap();
        let expected = -(&t.policy.gain * &goal);
        assert!((&t.policy.offset - expected).amax() < 1e-8, "{}", t.policy.offset);
    }

    #[test]
    fn loss_scaling_keeps_target() {
        let (_, a, b) = setup(0.01, 0);
        let goal = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let base = goal_loss(&goal, 0.1).unwrap();
        let t1 = make_target_policy(&config(base.clone(), Norm::L2), &a, &b).unwrap();
        let t2 = make_target_policy(&config(base.scaled(3.0), Norm::L2), &a, &b).unwrap();
        assert!(t1.policy.max_deviation(&t2.policy) < 1e-9);
    }

    #[test]
    fn witness_is_feasible() {
        let (data, a, b) = setup(0.01, 1);
        let goal = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let cfg = config(goal_loss(&goal, 0.1).unwrap(), Norm::L2);
        let t = make_target_policy(&cfg, &a, &b).unwrap();
        let sp = build_surrogate(&data, &a, &b, &t.policy, &cfg).unwrap();
        let w = witness_point(&sp, &data, &t);
        assert!(sp.program.audit(&w).max() <= 1e-8, "{:?}", sp.program.audit(&w));
        assert!(sp.kkt_residual(&w) < 1e-9);
    }

    #[test]
    fn clean_target_costs_nothing() {
        // the learner's own clean policy, certified by its clean estimate
        let (data, a, b) = setup(0.01, 2);
        let clean = learn_policy(&data, 0.9, 0.01).unwrap();
        for norm in [Norm::L1, Norm::L2, Norm::LInf] {
            let cfg = config(clean.estimate.loss.clone(), norm);
            let target = make_target_policy(&cfg, &a, &b).unwrap();
            assert!(target.policy.max_deviation(&clean.policy) < 1e-9);
            let res = solve_lqr_attack(&data, &a, &b, &target, &cfg).unwrap();
            assert!(res.cost < 1e-5, "{norm}: cost {}", res.cost);
        }
    }

    #[test]
    fn noiseless_pipeline_hits_target() {
        let (data, a, b) = setup(0.0, 3);
        let goal = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let cfg = config(goal_loss(&goal, 0.1).unwrap(), Norm::L2);
        let target = make_target_policy(&cfg, &a, &b).unwrap();
        let res = solve_lqr_attack(&data, &a, &b, &target, &cfg).unwrap();
        assert!(res.learned_policy().max_deviation(&target.policy) < 1e-8);
        let v = verify_lqr_attack(&res, &data).unwrap();
        assert!(v.passed, "{:?}", v.failures());
        let truth = optimal_lqr_policy(
            &vehicle_dynamics(&VehicleParams::default(), 0.0).unwrap(),
            &vehicle_true_loss(),
            0.9,
        )
        .unwrap();
        assert!(res.target_policy().max_deviation(&truth) > 0.1);
    }

    #[test]
    fn zeroed_rewards_fail_verification() {
        let (data, a, b) = setup(0.01, 4);
        let goal = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let cfg = config(goal_loss(&goal, 0.1).unwrap(), Norm::L2);
        let target = make_target_policy(&cfg, &a, &b).unwrap();
        let mut res = solve_lqr_attack(&data, &a, &b, &target, &cfg).unwrap();
        res.poisoned_rewards.iter_mut().for_each(|r| *r = 0.0);
        let v = verify_lqr_attack(&res, &data).unwrap();
        assert!(!v.passed);
        assert!(v.failures().iter().any(|f| f.starts_with("policy")));
    }
}
