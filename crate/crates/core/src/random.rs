//! Random problem instances for property checks.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::conic::Norm;
use crate::data::{generate_lqr_episodes, ContinuousDataset, TabularDataset, TabularItem};
use crate::error::Result;
use crate::lqr::attack::LqrAttackConfig;
use crate::lqr::victim::sysid;
use crate::lqr::{spectral_radius, LinearDynamics, QuadraticLoss};
use crate::mdp::{FiniteMdp, Policy, RewardTable, TransitionKernel};

/// Dense random MDP with every transition probability bounded away from 0.
pub fn random_mdp(rng: &mut impl Rng, ns: usize, na: usize, discount: f64) -> FiniteMdp {
    let mut probs = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        let w: Vec<f64> = (0..ns).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
        // exact normalisation of the last entry
        let head: f64 = row[..ns - 1].iter().sum();
        row[ns - 1] = 1.0 - head;
        probs.extend(row);
    }
    let kernel = TransitionKernel::new(ns, na, probs).expect("rows sum to one");
    let reward = RewardTable::from_values(ns, na, (0..ns * na).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("shape matches");
    FiniteMdp::new(kernel, reward, discount).expect("valid discount")
}

#[derive(Debug, Clone)]
pub struct TceInstance {
    pub dataset: TabularDataset,
    pub discount: f64,
    pub margin: f64,
    pub norm: Norm,
    pub target: Policy,
}

/// 2–5 states, 2–3 actions, 1–3 noisy copies per pair, γ ∈ [0.5, 0.95],
/// ε ∈ [0.01, 1], α uniform over {1, 2, ∞}, uniformly random target.
pub fn random_tce_instance(rng: &mut impl Rng) -> TceInstance {
    let ns = rng.gen_range(2..=5);
    let na = rng.gen_range(2..=3);
    let discount = rng.gen_range(0.5..=0.95);
    let mdp = random_mdp(rng, ns, na, discount);
    let mut items = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            for _ in 0..rng.gen_range(1..=3) {
                let u: f64 = rng.gen();
                let row = mdp.transition.row(s, a);
                let mut acc = 0.0;
                let s_next = row
                    .iter()
                    .position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(ns - 1);
                items.push(TabularItem {
                    s,
                    a,
                    r: mdp.reward.get(s, a) + rng.gen_range(-0.5..0.5),
                    s_next,
                });
            }
        }
    }
    items.shuffle(rng);
    let dataset = TabularDataset::unlabeled(ns, na, items).expect("indices in range");
    let target = Policy::new((0..ns).map(|_| rng.gen_range(0..na)).collect(), na).expect("valid actions");
    TceInstance {
        dataset,
        discount,
        margin: rng.gen_range(0.01..=1.0),
        norm: *[Norm::L1, Norm::L2, Norm::LInf].choose(rng).expect("non-empty"),
        target,
    }
}

#[derive(Debug, Clone)]
pub struct LqrInstance {
    pub dynamics: LinearDynamics,
    pub true_loss: QuadraticLoss,
    pub dataset: ContinuousDataset,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub config: LqrAttackConfig,
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// M M' / dim + floor·I.
fn random_psd(rng: &mut impl Rng, dim: usize, floor: f64) -> DMatrix<f64> {
    let m = gaussian_matrix(rng, dim, dim);
    &m * m.transpose() / dim as f64 + DMatrix::identity(dim, dim) * floor
}

/// n ∈ {2, 3}, m ∈ {1, 2}, marginally stable dynamics, four 60-step episodes
/// with unit-ball actions and σ = 0.01. The attacker loss is random with
/// R† ⪰ εI.
pub fn random_lqr_instance(rng: &mut impl Rng) -> Result<LqrInstance> {
    let n = rng.gen_range(2..=3);
    let m = rng.gen_range(1..=2);
    let eps = 0.01;
    let raw = gaussian_matrix(rng, n, n);
    let a = &raw * (rng.gen_range(0.8..0.98) / spectral_radius(&raw).max(1e-12));
    let b = gaussian_matrix(rng, n, m);
    let dynamics = LinearDynamics::new(a, b, 0.01)?;
    let true_loss = QuadraticLoss::new(
        random_psd(rng, n, 0.1),
        random_psd(rng, m, 0.1),
        DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5)),
        rng.gen_range(0.0..1.0),
    )?;
    let s0 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let dataset = generate_lqr_episodes(&dynamics, &true_loss, &s0, 60, 4, rng.gen())?;
    let (a_hat, b_hat) = sysid(&dataset)?;
    let attacker_loss = QuadraticLoss::new(
        random_psd(rng, n, 0.05),
        random_psd(rng, m, 2.0 * eps),
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
        rng.gen_range(0.0..1.0),
    )?;
    Ok(LqrInstance {
        dynamics,
        true_loss,
        dataset,
        a_hat,
        b_hat,
        config: LqrAttackConfig {
            attacker_loss,
            norm: Norm::L2,
            eps,
            gamma: rng.gen_range(0.5..=0.95),
        },
    })
}
