//! Tabular certainty-equivalence learner: empirical transition frequencies,
//! per-pair mean rewards, then planning on the estimate.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::data::{build_index, IndexSets, TabularDataset};
use crate::error::Result;
use crate::mdp::{
    greedy_policy, value_iteration, FiniteMdp, Greedy, QTable, RewardTable, TransitionKernel,
    DEFAULT_VI_MAX_ITERS,
};

/// Ties closer than this are reported by the learner.
pub const LEARNER_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct EstimatedMdp {
    pub mdp: FiniteMdp,
    pub index: IndexSets,
    pub dataset_hash: u64,
}

pub fn dataset_hash(dataset: &TabularDataset) -> u64 {
    let mut h = DefaultHasher::new();
    for it in dataset.items() {
        (it.s, it.a, it.r.to_bits(), it.s_next).hash(&mut h);
    }
    h.finish()
}

/// P̂(s'|s,a) = |{t ∈ T_{s,a} : s'_t = s'}| / |T_{s,a}|.
pub fn estimate_transition(dataset: &TabularDataset, index: &IndexSets) -> Result<TransitionKernel> {
    index.require_coverage()?;
    let (ns, na) = (dataset.num_states(), dataset.num_actions());
    let mut probs = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let ids = index.get(s, a);
            let w = 1.0 / ids.len() as f64;
            for &t in ids {
                probs[(s * na + a) * ns + dataset.items()[t].s_next] += w;
            }
        }
    }
    // exact counts keep single-successor rows at exactly 1
    for row in probs.chunks_mut(ns) {
        if let Some(p) = row.iter_mut().find(|p| (**p - 1.0).abs() < 1e-12) {
            *p = 1.0;
        }
    }
    TransitionKernel::new(ns, na, probs)
}

/// R̂(s,a) = mean of the rewards in T_{s,a}.
pub fn estimate_reward(dataset: &TabularDataset, index: &IndexSets) -> Result<RewardTable> {
    index.require_coverage()?;
    let (ns, na) = (dataset.num_states(), dataset.num_actions());
    let mut r = RewardTable::zeros(ns, na);
    for s in 0..ns {
        for a in 0..na {
            let ids = index.get(s, a);
            let sum: f64 = ids.iter().map(|&t| dataset.items()[t].r).sum();
            r.set(s, a, sum / ids.len() as f64);
        }
    }
    Ok(r)
}

pub fn estimate_mdp(dataset: &TabularDataset, discount: f64) -> Result<EstimatedMdp> {
    let index = build_index(dataset);
    let transition = estimate_transition(dataset, &index)?;
    let reward = estimate_reward(dataset, &index)?;
    Ok(EstimatedMdp {
        mdp: FiniteMdp::new(transition, reward, discount)?,
        index,
        dataset_hash: dataset_hash(dataset),
    })
}

#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub estimate: EstimatedMdp,
    pub q: QTable,
    pub greedy: Greedy,
}

/// Estimate, plan by value iteration at `tol`, act greedily.
pub fn learn_policy(dataset: &TabularDataset, discount: f64, tol: f64) -> Result<LearnedPolicy> {
    let estimate = estimate_mdp(dataset, discount)?;
    let q = value_iteration(&estimate.mdp, tol, DEFAULT_VI_MAX_ITERS)?.q;
    let greedy = greedy_policy(&q, LEARNER_TIE_TOL);
    Ok(LearnedPolicy {
        estimate,
        q,
        greedy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TabularItem;
    use crate::error::Error;

    fn exp1(stay: f64, mv: f64) -> TabularDataset {
        let items = vec![
            TabularItem { s: 0, a: 0, r: stay, s_next: 0 },
            TabularItem { s: 0, a: 1, r: mv, s_next: 1 },
            TabularItem { s: 1, a: 0, r: stay, s_next: 1 },
            TabularItem { s: 1, a: 1, r: mv, s_next: 0 },
        ];
        TabularDataset::unlabeled(2, 2, items).unwrap()
    }

    #[test]
    fn exp1_estimates() {
        let est = estimate_mdp(&exp1(1.0, 0.0), 0.9).unwrap();
        assert_eq!(est.mdp.transition.deterministic_successor(0, 1), Some(1));
        assert_eq!(est.mdp.transition.deterministic_successor(1, 0), Some(1));
        assert_eq!(est.mdp.reward.to_rows(), vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn split_successors_give_half() {
        let items = vec![
            TabularItem { s: 0, a: 0, r: 1.0, s_next: 0 },
            TabularItem { s: 0, a: 0, r: 3.0, s_next: 1 },
            TabularItem { s: 1, a: 0, r: 0.0, s_next: 1 },
        ];
        let d = TabularDataset::unlabeled(2, 1, items).unwrap();
        let idx = build_index(&d);
        assert_eq!(estimate_transition(&d, &idx).unwrap().row(0, 0), &[0.5, 0.5]);
        assert_eq!(estimate_reward(&d, &idx).unwrap().get(0, 0), 2.0);
    }

    #[test]
    fn policies_before_and_after_poisoning() {
        let clean = learn_policy(&exp1(1.0, 0.0), 0.9, 1e-10).unwrap();
        assert_eq!(clean.greedy.policy.actions(), &[0, 0]);
        let poisoned = learn_policy(&exp1(0.0, 1.0), 0.9, 1e-10).unwrap();
        assert_eq!(poisoned.greedy.policy.actions(), &[1, 1]);
        assert!(!poisoned.greedy.had_ties);
    }

    #[test]
    fn mean_is_least_squares_minimizer() {
        let items: Vec<_> = [0.3, -1.2, 2.5, 0.7]
            .iter()
            .map(|&r| TabularItem { s: 0, a: 0, r, s_next: 0 })
            .collect();
        let d = TabularDataset::unlabeled(1, 1, items).unwrap();
        let mean = estimate_reward(&d, &build_index(&d)).unwrap().get(0, 0);
        let loss = |v: f64| d.items().iter().map(|it| (it.r - v).powi(2)).sum::<f64>();
        for delta in [1e-3, -1e-3, 0.5, -0.5] {
            assert!(loss(mean + delta) > loss(mean));
        }
    }

    #[test]
    fn missing_pair_is_named() {
        let d = TabularDataset::unlabeled(2, 1, vec![TabularItem { s: 0, a: 0, r: 0.0, s_next: 0 }])
            .unwrap();
        assert!(matches!(
            learn_policy(&d, 0.9, 1e-10),
            Err(Error::Coverage { state: 1, action: 0 })
        ));
    }
}
