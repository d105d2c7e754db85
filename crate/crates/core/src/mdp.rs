//! Tabular MDP machinery: Bellman optimality operator, value iteration, the
//! reward/Q bijection, greedy policies and potential-based shaping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};

/// Default sup-norm residual for value iteration. The returned Q is within
/// `tol / (1 - γ)` of the true fixed point.
pub const DEFAULT_VI_TOL: f64 = 1e-10;
pub const DEFAULT_VI_MAX_ITERS: usize = 1_000_000;

/// Dense table indexed by (state, action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

/// Action-value table.
pub type QTable = StateActionTable;
/// Reward table R(s, a).
pub type RewardTable = StateActionTable;

impl StateActionTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::shape(format!(
                "expected {} entries for a {num_states}x{num_actions} table, got {}",
                num_states * num_actions,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("table entries must be finite"));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::shape("ragged rows"));
        }
        Self::from_values(num_states, num_actions, rows.concat())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_in_state(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.num_states == other.num_states && self.num_actions == other.num_actions
    }

    /// Sup-norm distance; panics on shape mismatch.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "table shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_states).map(|s| self.row(s).to_vec()).collect()
    }
}

/// Transition tensor P[s][a][s'].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::arg("state and action counts must be positive"));
        }
        if probs.len() != num_states * num_actions * num_states {
            return Err(Error::shape(format!(
                "transition tensor needs {} entries, got {}",
                num_states * num_actions * num_states,
                probs.len()
            )));
        }
        let kernel = Self {
            num_states,
            num_actions,
            probs,
        };
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = kernel.row(s, a);
                if row.iter().any(|p| !(*p >= 0.0)) {
                    return Err(Error::arg(format!("negative probability in P[{s}][{a}]")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::arg(format!("P[{s}][{a}] sums to {sum}, not 1")));
                }
            }
        }
        Ok(kernel)
    }

    /// Kernel where every (s, a) moves to `next[s][a]` with probability one.
    pub fn deterministic(num_states: usize, next: &[Vec<usize>]) -> Result<Self> {
        let num_actions = next.first().map_or(0, Vec::len);
        if next.len() != num_states || next.iter().any(|r| r.len() != num_actions) {
            return Err(Error::shape("successor table has the wrong shape"));
        }
        let mut probs = vec![0.0; num_states * num_actions * num_states];
        for (s, row) in next.iter().enumerate() {
            for (a, &sn) in row.iter().enumerate() {
                if sn >= num_states {
                    return Err(Error::arg(format!("successor {sn} out of range")));
                }
                probs[(s * num_actions + a) * num_states + sn] = 1.0;
            }
        }
        Self::new(num_states, num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    /// Successor of a deterministic row, `None` when the row is stochastic.
    pub fn deterministic_successor(&self, s: usize, a: usize) -> Option<usize> {
        let row = self.row(s, a);
        row.iter().position(|&p| p == 1.0)
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.num_states)
            .all(|s| (0..self.num_actions).all(|a| self.deterministic_successor(s, a).is_some()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub transition: TransitionKernel,
    pub reward: RewardTable,
    pub discount: f64,
}

impl FiniteMdp {
    pub fn new(transition: TransitionKernel, reward: RewardTable, discount: f64) -> Result<Self> {
        if reward.num_states() != transition.num_states()
            || reward.num_actions() != transition.num_actions()
        {
            return Err(Error::shape("reward table does not match transition tensor"));
        }
        check_discount(discount)?;
        Ok(Self {
            transition,
            reward,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.transition.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.transition.num_actions()
    }
}

pub(crate) fn check_discount(discount: f64) -> Result<()> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::arg(format!("discount {discount} must lie in [0, 1)")));
    }
    Ok(())
}

/// Deterministic policy, one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::arg(format!(
                "action {bad} is not valid with {num_actions} actions"
            )));
        }
        Ok(Self { actions })
    }

    pub fn uniform(num_states: usize, action: usize) -> Self {
        Self {
            actions: vec![action; num_states],
        }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn set(&mut self, s: usize, a: usize) {
        self.actions[s] = a;
    }
}

/// Potential function φ(s) for reward shaping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub phi: Vec<f64>,
}

impl Potential {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("potential values must be finite"));
        }
        Ok(Self { phi })
    }

    /// φ(s) = max_a Q(s, a).
    pub fn from_values(q: &QTable) -> Self {
        Self {
            phi: (0..q.num_states()).map(|s| q.max_in_state(s)).collect(),
        }
    }
}

fn expected_next_value(kernel: &TransitionKernel, s: usize, a: usize, values: &[f64]) -> f64 {
    kernel
        .row(s, a)
        .iter()
        .zip(values)
        .map(|(p, v)| p * v)
        .sum()
}

fn state_values(q: &QTable) -> Vec<f64> {
    (0..q.num_states()).map(|s| q.max_in_state(s)).collect()
}

/// H_R(Q)(s,a) = R(s,a) + γ Σ_{s'} P(s'|s,a) max_{a'} Q(s',a').
pub fn bellman_operator(q: &QTable, mdp: &FiniteMdp) -> Result<QTable> {
    if !q.same_shape(&mdp.reward) {
        return Err(Error::shape("Q table does not match the MDP"));
    }
    let v = state_values(q);
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let next = expected_next_value(&mdp.transition, s, a, &v);
            out.set(s, a, mdp.reward.get(s, a) + mdp.discount * next);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub q: QTable,
    /// Number of Bellman updates applied before the residual test passed.
    pub iterations: usize,
    /// ‖H(Q) − Q‖∞ at the returned Q.
    pub residual: f64,
}

/// Value iteration from Q ≡ 0.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64, max_iters: usize) -> Result<ValueIteration> {
    let q0 = QTable::zeros(mdp.num_states(), mdp.num_actions());
    value_iteration_from(mdp, q0, tol, max_iters, None)
}

/// Value iteration from Q ≡ 0, recording every iterate (including the start).
pub fn value_iteration_trace(
    mdp: &FiniteMdp,
    tol: f64,
    max_iters: usize,
) -> Result<(ValueIteration, Vec<QTable>)> {
    let q0 = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut trace = Vec::new();
    let result = value_iteration_from(mdp, q0, tol, max_iters, Some(&mut trace))?;
    Ok((result, trace))
}

pub fn value_iteration_from(
    mdp: &FiniteMdp,
    start: QTable,
    tol: f64,
    max_iters: usize,
    mut trace: Option<&mut Vec<QTable>>,
) -> Result<ValueIteration> {
    if !(tol > 0.0) {
        return Err(Error::arg("value iteration tolerance must be positive"));
    }
    let mut q = start;
    let mut iterations = 0;
    loop {
        if let Some(t) = trace.as_deref_mut() {
            t.push(q.clone());
        }
        let next = bellman_operator(&q, mdp)?;
        let residual = next.sup_distance(&q);
        if residual <= tol {
            return Ok(ValueIteration {
                q,
                iterations,
                residual,
            });
        }
        if iterations == max_iters {
            return Err(Error::IterationLimit(max_iters));
        }
        q = next;
        iterations += 1;
    }
}

/// Inverse of the Bellman fixed-point map:
/// R(s,a) = Q(s,a) − γ Σ P(s'|s,a) max_{a'} Q(s',a').
pub fn q_to_reward(q: &QTable, kernel: &TransitionKernel, discount: f64) -> Result<RewardTable> {
    if q.num_states() != kernel.num_states() || q.num_actions() != kernel.num_actions() {
        return Err(Error::shape("Q table does not match transition tensor"));
    }
    check_discount(discount)?;
    let v = state_values(q);
    let mut r = RewardTable::zeros(q.num_states(), q.num_actions());
    for s in 0..q.num_states() {
        for a in 0..q.num_actions() {
            let next = expected_next_value(kernel, s, a, &v);
            r.set(s, a, q.get(s, a) - discount * next);
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Greedy {
    pub policy: Policy,
    pub had_ties: bool,
}

/// Greedy policy; ties within `tie_tol` go to the lowest action index.
pub fn greedy_policy(q: &QTable, tie_tol: f64) -> Greedy {
    let mut had_ties = false;
    let actions = (0..q.num_states())
        .map(|s| {
            let row = q.row(s);
            let best = q.max_in_state(s);
            let mut winners = row.iter().enumerate().filter(|(_, &v)| best - v <= tie_tol);
            let (first, _) = winners.next().expect("non-empty action set");
            if winners.next().is_some() {
                had_ties = true;
            }
            first
        })
        .collect();
    Greedy {
        policy: Policy { actions },
        had_ties,
    }
}

/// V^π from the linear system (I − γP_π)V = R_π.
pub fn evaluate_policy(mdp: &FiniteMdp, policy: &Policy) -> Result<Vec<f64>> {
    let ns = mdp.num_states();
    if policy.num_states() != ns || policy.actions().iter().any(|&a| a >= mdp.num_actions()) {
        return Err(Error::shape("policy does not match the MDP"));
    }
    let mut lhs = DMatrix::identity(ns, ns);
    let mut rhs = DVector::zeros(ns);
    for s in 0..ns {
        let a = policy.action(s);
        for (next, p) in mdp.transition.row(s, a).iter().enumerate() {
            lhs[(s, next)] -= mdp.discount * p;
        }
        rhs[s] = mdp.reward.get(s, a);
    }
    let v = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::IllPosed("policy evaluation system is singular".into()))?;
    Ok(v.iter().copied().collect())
}

/// Potential-based shaping r' = r + γ φ(s') − φ(s).
pub fn shape_rewards(
    dataset: &TabularDataset,
    phi: &Potential,
    discount: f64,
) -> Result<TabularDataset> {
    let mut shaped = dataset.clone();
    for item in shaped.items_mut() {
        let (Some(&phi_s), Some(&phi_next)) = (phi.phi.get(item.s), phi.phi.get(item.s_next))
        else {
            return Err(Error::arg(format!(
                "potential missing for state {} or {}",
                item.s, item.s_next
            )));
        };
        item.r += discount * phi_next - phi_s;
    }
    Ok(shaped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_mdp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn policy_evaluation_matches_value_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mdp = random_mdp(&mut rng, 5, 3, 0.85);
        let q = value_iteration(&mdp, 1e-13, DEFAULT_VI_MAX_ITERS).unwrap().q;
        let greedy = greedy_policy(&q, 0.0).policy;
        let v = evaluate_policy(&mdp, &greedy).unwrap();
        for s in 0..5 {
            assert!((v[s] - q.max_in_state(s)).abs() < 1e-10);
        }
        assert_eq!(evaluate_policy(&two_state(1.0, 0.0), &Policy::uniform(2, 0)).unwrap(), vec![10.000000000000002; 2]);
    }

    fn two_state(stay: f64, mv: f64) -> FiniteMdp {
        let kernel = TransitionKernel::deterministic(2, &[vec![0, 1], vec![1, 0]]).unwrap();
        let reward = RewardTable::from_rows(&[vec![stay, mv], vec![stay, mv]]).unwrap();
        FiniteMdp::new(kernel, reward, 0.9).unwrap()
    }

    #[test]
    fn bellman_discount_zero_returns_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(&mut rng, 3, 2, 0.0);
        let q = QTable::from_values(3, 2, (0..6).map(|i| i as f64 * 3.0).collect()).unwrap();
        assert_eq!(bellman_operator(&q, &mdp).unwrap(), mdp.reward);
    }

    #[test]
    fn bellman_on_zero_q_is_reward() {
        let mdp = two_state(1.0, 0.0);
        let h = bellman_operator(&QTable::zeros(2, 2), &mdp).unwrap();
        assert_eq!(h.to_rows(), vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn bellman_rejects_bad_shape() {
        let mdp = two_state(1.0, 0.0);
        assert!(matches!(
            bellman_operator(&QTable::zeros(3, 2), &mdp),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn bellman_is_a_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mdp = random_mdp(&mut rng, 3, 3, 0.8);
        for _ in 0..50 {
            let q1 = QTable::from_values(3, 3, (0..9).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .unwrap();
            let q2 = QTable::from_values(3, 3, (0..9).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .unwrap();
            let lhs = bellman_operator(&q1, &mdp)
                .unwrap()
                .sup_distance(&bellman_operator(&q2, &mdp).unwrap());
            assert!(lhs <= 0.8 * q1.sup_distance(&q2) + 1e-12);
        }
    }

    #[test]
    fn value_iteration_two_state_tables() {
        let clean = value_iteration(&two_state(1.0, 0.0), 1e-10, 10_000).unwrap();
        for s in 0..2 {
            assert!((clean.q.get(s, 0) - 10.0).abs() < 1e-8);
            assert!((clean.q.get(s, 1) - 9.0).abs() < 1e-8);
        }
        let poisoned = value_iteration(&two_state(0.0, 1.0), 1e-10, 10_000).unwrap();
        for s in 0..2 {
            assert!((poisoned.q.get(s, 0) - 9.0).abs() < 1e-8);
            assert!((poisoned.q.get(s, 1) - 10.0).abs() < 1e-8);
        }
    }

    #[test]
    fn value_iteration_discount_zero_is_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = random_mdp(&mut rng, 4, 2, 0.0);
        let vi = value_iteration(&mdp, 1e-12, 10).unwrap();
        assert_eq!(vi.iterations, 1);
        assert_eq!(vi.q, mdp.reward);
    }

    #[test]
    fn value_iteration_reports_iteration_limit() {
        let err = value_iteration(&two_state(1.0, 0.0), 1e-12, 3).unwrap_err();
        assert!(matches!(err, Error::IterationLimit(3)));
    }

    #[test]
    fn q_to_reward_margin_construction() {
        // Q = ε on target actions and 0 elsewhere maps to (1−γ)ε and −γε.
        let kernel = TransitionKernel::deterministic(2, &[vec![0, 1], vec![1, 0]]).unwrap();
        let eps = 1.0;
        let q = QTable::from_rows(&[vec![0.0, eps], vec![0.0, eps]]).unwrap();
        let r = q_to_reward(&q, &kernel, 0.9).unwrap();
        for s in 0..2 {
            assert!((r.get(s, 1) - 0.1 * eps).abs() < 1e-15);
            assert!((r.get(s, 0) + 0.9 * eps).abs() < 1e-15);
        }
        assert_eq!(q_to_reward(&q, &kernel, 0.0).unwrap(), q);
    }

    #[test]
    fn q_to_reward_round_trips_through_value_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let q = QTable::from_values(4, 3, (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .unwrap();
        let r = q_to_reward(&q, &mdp.transition, 0.9).unwrap();
        let back = FiniteMdp::new(mdp.transition.clone(), r, 0.9).unwrap();
        let vi = value_iteration(&back, 1e-12, 100_000).unwrap();
        assert!(vi.q.sup_distance(&q) < 1e-8);
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let q = QTable::from_rows(&[vec![1.0, 1.0, 1.0], vec![0.0, 2.0, 1.0]]).unwrap();
        let g = greedy_policy(&q, 1e-12);
        assert_eq!(g.policy.actions(), &[0, 1]);
        assert!(g.had_ties);
        let g = greedy_policy(&QTable::from_rows(&[vec![10.0, 9.0]]).unwrap(), 1e-9);
        assert!(!g.had_ties);
    }

    #[test]
    fn policy_rejects_invalid_action() {
        assert!(Policy::new(vec![0, 2], 2).is_err());
    }

    #[test]
    fn kernel_rejects_non_stochastic_rows() {
        assert!(TransitionKernel::new(1, 1, vec![0.5]).is_err());
        assert!(TransitionKernel::new(2, 1, vec![1.5, -0.5, 0.0, 1.0]).is_err());
    }

    #[test]
    fn discount_must_be_below_one() {
        let kernel = TransitionKernel::deterministic(1, &[vec![0]]).unwrap();
        assert!(FiniteMdp::new(kernel, RewardTable::zeros(1, 1), 1.0).is_err());
    }
}
