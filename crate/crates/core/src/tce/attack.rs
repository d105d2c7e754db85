//! Minimum-cost reward poisoning against the tabular learner.
//!
//! The attacker keeps the learner's transition estimate and searches rewards
//! r whose per-pair means R̂ produce a Q function in which every target action
//! beats every alternative by at least the margin ε. Substituting the target
//! action into the Bellman equation makes every constraint linear.

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, Norm, SolveOptions};
use crate::data::{build_index, IndexSets, TabularDataset};
use crate::error::{Error, Result};
use crate::mdp::{check_discount, Policy, QTable, RewardTable, TransitionKernel, DEFAULT_VI_TOL};
use crate::tce::victim::{estimate_reward, learn_policy};
use crate::verify::Verification;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TceAttackConfig {
    pub target: Policy,
    pub margin: f64,
    pub norm: Norm,
}

impl TceAttackConfig {
    fn validate(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::arg("margin must be positive"));
        }
        if self.target.num_states() != num_states
            || self.target.actions().iter().any(|&a| a >= num_actions)
        {
            return Err(Error::shape("target policy does not match the dataset"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TceAttackResult {
    pub poisoned_rewards: Vec<f64>,
    pub cost: f64,
    pub norm: Norm,
    pub margin: f64,
    pub solver_status: String,
    /// R̂(s,a) − R̂⁰(s,a) per state.
    pub per_pair_shift: Vec<Vec<f64>>,
    pub reward_estimate: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub target: Vec<usize>,
    pub primal_residual: f64,
}

impl TceAttackResult {
    /// Number of rewards moved by more than `tol`.
    pub fn modified_count(&self, clean: &[f64], tol: f64) -> usize {
        self.poisoned_rewards
            .iter()
            .zip(clean)
            .filter(|(r, r0)| (*r - *r0).abs() > tol)
            .count()
    }
}

/// Δ(ε) = max_s [max_{a≠π†(s)} Q⁰(s,a) − Q⁰(s,π†(s)) + ε]_+.
pub fn compute_delta_eps(q0: &QTable, target: &Policy, margin: f64) -> Result<f64> {
    if target.num_states() != q0.num_states() {
        return Err(Error::shape("target policy does not match the Q table"));
    }
    let mut delta = 0.0f64;
    for s in 0..q0.num_states() {
        let ta = target.action(s);
        if ta >= q0.num_actions() {
            return Err(Error::shape("target action out of range"));
        }
        let best_other = (0..q0.num_actions())
            .filter(|&a| a != ta)
            .map(|a| q0.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max);
        if best_other.is_finite() {
            delta = delta.max(best_other - q0.get(s, ta) + margin);
        }
    }
    Ok(delta)
}

/// (½(1−γ)Δ·min|T|^{1/α}, ½(1+γ)Δ·T^{1/α}); exponent 0 for the max norm.
pub fn cost_bounds(delta: f64, discount: f64, norm: Norm, total: usize, min_count: usize) -> (f64, f64) {
    let p = norm.inverse_order();
    (
        0.5 * (1.0 - discount) * delta * (min_count as f64).powf(p),
        0.5 * (1.0 + discount) * delta * (total as f64).powf(p),
    )
}

fn tce_solve_options() -> SolveOptions {
    SolveOptions {
        feas_tol: 1e-8,
        opt_tol: 1e-9,
        max_iter: 300,
        polish_equalities: false,
        cone_margin: 0.0,
    }
}

/// Shared constraint block: given global indices of R̂ and Q, adds the
/// Bellman equalities under the target and the margin inequalities.
fn add_polytope(
    prog: &mut ConicProgram,
    rhat: impl Fn(usize, usize) -> Vec<(usize, f64)>,
    rhat_const: impl Fn(usize, usize) -> f64,
    q: impl Fn(usize, usize) -> usize,
    p_hat: &TransitionKernel,
    discount: f64,
    target: &Policy,
    margin: f64,
) -> Result<()> {
    let (ns, na) = (p_hat.num_states(), p_hat.num_actions());
    for s in 0..ns {
        for a in 0..na {
            // Q(s,a) − R̂(s,a) − γ Σ P̂(s'|s,a) Q(s', π†(s')) = 0
            let mut terms = vec![(q(s, a), 1.0)];
            terms.extend(rhat(s, a).into_iter().map(|(k, c)| (k, -c)));
            for (sn, &p) in p_hat.row(s, a).iter().enumerate() {
                if p != 0.0 {
                    terms.push((q(sn, target.action(sn)), -discount * p));
                }
            }
            prog.add_equality(terms, rhat_const(s, a))?;
        }
        let ta = target.action(s);
        for a in (0..na).filter(|&a| a != ta) {
            // Q(s,a) − Q(s,π†(s)) ≤ −ε
            prog.add_inequality(vec![(q(s, a), 1.0), (q(s, ta), -1.0)], -margin)?;
        }
    }
    Ok(())
}

fn table_rows(ns: usize, na: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    (0..ns).map(|s| (0..na).map(|a| f(s, a)).collect()).collect()
}

/// Solves the attack program exactly over the full reward vector.
pub fn solve_tce_attack(
    dataset: &TabularDataset,
    p_hat: &TransitionKernel,
    discount: f64,
    config: &TceAttackConfig,
) -> Result<TceAttackResult> {
    check_discount(discount)?;
    let (ns, na) = (dataset.num_states(), dataset.num_actions());
    if p_hat.num_states() != ns || p_hat.num_actions() != na {
        return Err(Error::shape("transition estimate does not match the dataset"));
    }
    config.validate(ns, na)?;
    let index = build_index(dataset);
    index.require_coverage()?;
    let r0 = dataset.rewards();
    let t = r0.len();

    let mut prog = ConicProgram::new();
    let r = prog.add_vector("r", t);
    let rh = prog.add_vector("R_hat", ns * na);
    let qv = prog.add_vector("Q", ns * na);
    // R̂(s,a) − mean_{t ∈ T_{s,a}} r_t = 0
    for s in 0..ns {
        for a in 0..na {
            let ids = index.get(s, a);
            let w = 1.0 / ids.len() as f64;
            let mut terms = vec![(prog.var(rh, s * na + a), 1.0)];
            terms.extend(ids.iter().map(|&i| (prog.var(r, i), -w)));
            prog.add_equality(terms, 0.0)?;
        }
    }
    let rh_off = prog.block(rh).offset;
    let q_off = prog.block(qv).offset;
    add_polytope(
        &mut prog,
        |s, a| vec![(rh_off + s * na + a, 1.0)],
        |_, _| 0.0,
        |s, a| q_off + s * na + a,
        p_hat,
        discount,
        &config.target,
        config.margin,
    )?;
    prog.set_norm_objective(config.norm, r, r0.clone())?;
    let sol = prog
        .solve(&tce_solve_options())?
        .require_optimal("tabular attack")?;

    let poisoned: Vec<f64> = prog.vector_value(&sol.x, r).iter().copied().collect();
    let rhat0 = estimate_reward(dataset, &index)?;
    let rhat = |s: usize, a: usize| sol.x[rh_off + s * na + a];
    let diff: Vec<f64> = poisoned.iter().zip(&r0).map(|(a, b)| a - b).collect();
    Ok(TceAttackResult {
        cost: config.norm.eval(&diff),
        poisoned_rewards: poisoned,
        norm: config.norm,
        margin: config.margin,
        solver_status: sol.status.label().to_string(),
        per_pair_shift: table_rows(ns, na, |s, a| rhat(s, a) - rhat0.get(s, a)),
        reward_estimate: table_rows(ns, na, rhat),
        q: table_rows(ns, na, |s, a| sol.x[q_off + s * na + a]),
        target: config.target.actions().to_vec(),
        primal_residual: sol.audit.max(),
    })
}

/// Optimal cost of the reduced program whose variables are per-pair shifts
/// ψ(s,a) applied uniformly to every reward in T_{s,a}. The cost of such a
/// shift is ‖(|T_{s,a}|^{1/α} ψ(s,a))‖_α.
pub fn solve_shift_attack(
    dataset: &TabularDataset,
    p_hat: &TransitionKernel,
    discount: f64,
    config: &TceAttackConfig,
) -> Result<f64> {
    check_discount(discount)?;
    let (ns, na) = (dataset.num_states(), dataset.num_actions());
    config.validate(ns, na)?;
    let index: IndexSets = build_index(dataset);
    index.require_coverage()?;
    let rhat0: RewardTable = estimate_reward(dataset, &index)?;
    let weight = |s: usize, a: usize| (index.count(s, a) as f64).powf(config.norm.inverse_order());

    let mut prog = ConicProgram::new();
    // w = weight·ψ, so R̂ = R̂⁰ + w / weight
    let w = prog.add_vector("w", ns * na);
    let qv = prog.add_vector("Q", ns * na);
    let w_off = prog.block(w).offset;
    let q_off = prog.block(qv).offset;
    add_polytope(
        &mut prog,
        |s, a| vec![(w_off + s * na + a, 1.0 / weight(s, a))],
        |s, a| rhat0.get(s, a),
        |s, a| q_off + s * na + a,
        p_hat,
        discount,
        &config.target,
        config.margin,
    )?;
    prog.set_norm_objective(config.norm, w, vec![0.0; ns * na])?;
    let sol = prog
        .solve(&tce_solve_options())?
        .require_optimal("per-pair shift attack")?;
    Ok(sol.objective)
}

/// Closed-form feasible point: R̂ = (1−γ)ε on target actions and −γε
/// elsewhere, giving Q = ε on target actions and 0 elsewhere. Every reward
/// in T_{s,a} is set to R̂(s,a). Not cost-optimal.
pub fn feasibility_certificate(
    dataset: &TabularDataset,
    discount: f64,
    config: &TceAttackConfig,
) -> Result<TceAttackResult> {
    check_discount(discount)?;
    let (ns, na) = (dataset.num_states(), dataset.num_actions());
    config.validate(ns, na)?;
    let index = build_index(dataset);
    index.require_coverage()?;
    let eps = config.margin;
    let is_target = |s: usize, a: usize| config.target.action(s) == a;
    let rhat = |s: usize, a: usize| if is_target(s, a) { (1.0 - discount) * eps } else { -discount * eps };
    let poisoned: Vec<f64> = dataset.items().iter().map(|it| rhat(it.s, it.a)).collect();
    let r0 = dataset.rewards();
    let rhat0 = estimate_reward(dataset, &index)?;
    let diff: Vec<f64> = poisoned.iter().zip(&r0).map(|(a, b)| a - b).collect();
    Ok(TceAttackResult {
        cost: config.norm.eval(&diff),
        poisoned_rewards: poisoned,
        norm: config.norm,
        margin: eps,
        solver_status: "certificate".into(),
        per_pair_shift: table_rows(ns, na, |s, a| rhat(s, a) - rhat0.get(s, a)),
        reward_estimate: table_rows(ns, na, rhat),
        q: table_rows(ns, na, |s, a| if is_target(s, a) { eps } else { 0.0 }),
        target: config.target.actions().to_vec(),
        primal_residual: 0.0,
    })
}

/// Smallest gap Q(s,π†(s)) − max_{a≠π†(s)} Q(s,a) over states.
pub fn target_margin(q: &QTable, target: &Policy) -> f64 {
    (0..q.num_states())
        .filter_map(|s| {
            let ta = target.action(s);
            (0..q.num_actions())
                .filter(|&a| a != ta)
                .map(|a| q.get(s, ta) - q.get(s, a))
                .reduce(f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Re-learns on the poisoned data and checks policy, margin and cost.
pub fn verify_tce_attack(
    result: &TceAttackResult,
    dataset: &TabularDataset,
    discount: f64,
) -> Result<Verification> {
    let mut v = Verification::new();
    let target = Policy::new(result.target.clone(), dataset.num_actions())?;
    let poisoned = dataset.with_rewards(&result.poisoned_rewards)?;
    let learned = learn_policy(&poisoned, discount, DEFAULT_VI_TOL)?;
    let matches = learned.greedy.policy == target;
    v.record(
        "policy",
        matches,
        format!("learned {:?}, target {:?}", learned.greedy.policy.actions(), target.actions()),
    );
    v.record(
        "no_ties",
        !learned.greedy.had_ties,
        format!("tie flag {}", learned.greedy.had_ties),
    );
    let margin = target_margin(&learned.q, &target);
    v.record(
        "margin",
        margin >= result.margin - 1e-6,
        format!("achieved {margin:.9}, required {}", result.margin),
    );
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TabularItem;
    use crate::mdp::{value_iteration, DEFAULT_VI_MAX_ITERS};
    use crate::tce::victim::estimate_mdp;

    fn exp1() -> TabularDataset {
        let items = vec![
            TabularItem { s: 0, a: 0, r: 1.0, s_next: 0 },
            TabularItem { s: 0, a: 1, r: 0.0, s_next: 1 },
            TabularItem { s: 1, a: 0, r: 1.0, s_next: 1 },
            TabularItem { s: 1, a: 1, r: 0.0, s_next: 0 },
        ];
        TabularDataset::unlabeled(2, 2, items).unwrap()
    }

    fn config(target: usize, margin: f64, norm: Norm) -> TceAttackConfig {
        TceAttackConfig {
            target: Policy::uniform(2, target),
            margin,
            norm,
        }
    }

    #[test]
    fn delta_for_exp1() {
        let est = estimate_mdp(&exp1(), 0.9).unwrap();
        let q0 = value_iteration(&est.mdp, 1e-12, DEFAULT_VI_MAX_ITERS).unwrap().q;
        let d = compute_delta_eps(&q0, &Policy::uniform(2, 1), 1.0).unwrap();
        assert!((d - 2.0).abs() < 1e-9);
        assert_eq!(compute_delta_eps(&q0, &Policy::uniform(2, 0), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn bounds_for_exp1() {
        let (lo, hi) = cost_bounds(2.0, 0.9, Norm::L2, 4, 1);
        assert!((lo - 0.1).abs() < 1e-12 && (hi - 3.8).abs() < 1e-12);
        assert_eq!(cost_bounds(0.0, 0.9, Norm::L1, 10, 2), (0.0, 0.0));
        let (_, h1) = cost_bounds(1.0, 0.5, Norm::L1, 10, 1);
        let (_, h2) = cost_bounds(1.0, 0.5, Norm::L1, 20, 1);
        assert!((h2 - 2.0 * h1).abs() < 1e-12);
        assert_eq!(cost_bounds(1.0, 0.5, Norm::LInf, 20, 3), (0.25, 0.75));
    }

    #[test]
    fn exp1_attack() {
        let d = exp1();
        let est = estimate_mdp(&d, 0.9).unwrap();
        let res = solve_tce_attack(&d, &est.mdp.transition, 0.9, &config(1, 1.0, Norm::L2)).unwrap();
        for (got, want) in res.poisoned_rewards.iter().zip([0.0, 1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-6, "{:?}", res.poisoned_rewards);
        }
        assert!((res.cost - 2.0).abs() < 1e-6);
        assert!(verify_tce_attack(&res, &d, 0.9).unwrap().passed);
    }

    #[test]
    fn already_robust_target_costs_nothing() {
        let d = exp1();
        let est = estimate_mdp(&d, 0.9).unwrap();
        let res = solve_tce_attack(&d, &est.mdp.transition, 0.9, &config(0, 0.5, Norm::L1)).unwrap();
        assert!(res.cost < 1e-7);
    }

    #[test]
    fn certificate_for_exp1() {
        let d = exp1();
        let cert = feasibility_certificate(&d, 0.9, &config(1, 1.0, Norm::L2)).unwrap();
        assert!((cert.reward_estimate[0][0] + 0.9).abs() < 1e-15);
        assert!((cert.reward_estimate[0][1] - 0.1).abs() < 1e-15);
        let v = verify_tce_attack(&cert, &d, 0.9).unwrap();
        assert!(v.passed, "{:?}", v.failures());
        let zero = feasibility_certificate(&d, 0.0, &config(1, 0.3, Norm::L2)).unwrap();
        assert_eq!(zero.reward_estimate[1], vec![0.0, 0.3]);
    }

    #[test]
    fn corrupted_margin_fails() {
        let d = exp1();
        let est = estimate_mdp(&d, 0.9).unwrap();
        let mut res = solve_tce_attack(&d, &est.mdp.transition, 0.9, &config(1, 1.0, Norm::L2)).unwrap();
        // scale to half the margin: Q gaps shrink proportionally
        for r in res.poisoned_rewards.iter_mut() {
            *r *= 0.5;
        }
        let v = verify_tce_attack(&res, &d, 0.9).unwrap();
        assert!(!v.passed);
        assert!(v.failures().iter().any(|f| f.starts_with("margin")));
    }

    #[test]
    fn shift_program_matches_full_program() {
        let d = exp1().duplicated();
        let est = estimate_mdp(&d, 0.9).unwrap();
        for norm in [Norm::L1, Norm::L2, Norm::LInf] {
            let cfg = config(1, 0.7, norm);
            let full = solve_tce_attack(&d, &est.mdp.transition, 0.9, &cfg).unwrap().cost;
            let reduced = solve_shift_attack(&d, &est.mdp.transition, 0.9, &cfg).unwrap();
            assert!((full - reduced).abs() < 1e-6, "{norm}: {full} vs {reduced}");
        }
    }
}
