//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails. Reference values come either from
//! published numbers or from small oracles written here, independent of the
//! library's own solvers.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use policy_poison::conic::Norm;
use policy_poison::data::{generate_lqr_dataset, generate_tce_dataset, ContinuousDataset, TabularDataset};
use policy_poison::env::{compile_gridworld, GridWorldSpec};
use policy_poison::experiments::{
    run_grid, run_toy, run_vehicle, vehicle_goal, vehicle_start, ExperimentConfig, ExperimentId, DISCOUNT,
    MODIFIED_TOL, VEHICLE_EPS, VEHICLE_STEPS,
};
use policy_poison::lqr::attack::{
    build_surrogate, goal_loss, make_target_policy, solve_lqr_attack, witness_point, LqrAttackConfig,
};
use policy_poison::lqr::victim::{estimate_loss, learn_policy, sysid};
use policy_poison::lqr::{optimal_lqr_policy, vehicle_dynamics, vehicle_true_loss, VehicleParams};
use policy_poison::mdp::{q_to_reward, value_iteration, FiniteMdp, Policy};
use policy_poison::random::{random_lqr_instance, random_mdp, random_tce_instance};
use policy_poison::tce::attack::{solve_tce_attack, TceAttackConfig};
use policy_poison::tce::victim::estimate_mdp;

struct Outcome {
    passed: bool,
    detail: String,
}

type Check = Result<Outcome, String>;

fn outcome(passed: bool, detail: impl Into<String>) -> Check {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---- oracles ------------------------------------------------------------

/// Empirical P̂ (flattened s, a, s') and mean rewards (s, a) counted directly
/// from the items.
fn empirical(data: &TabularDataset) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let (ns, na) = (data.num_states(), data.num_actions());
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    let mut n = vec![0usize; ns * na];
    for it in data.items() {
        let k = it.s * na + it.a;
        p[k * ns + it.s_next] += 1.0;
        r[k] += it.r;
        n[k] += 1;
    }
    for k in 0..ns * na {
        let c = n[k] as f64;
        r[k] /= c;
        p[k * ns..(k + 1) * ns].iter_mut().for_each(|v| *v /= c);
    }
    (p, r, n)
}

/// Q iteration run to a fixed point, at most 200k sweeps.
fn q_oracle(p: &[f64], r: &[f64], ns: usize, na: usize, gamma: f64) -> Vec<f64> {
    let mut q = vec![0.0; ns * na];
    for _ in 0..200_000 {
        let v: Vec<f64> = (0..ns)
            .map(|s| q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let next: Vec<f64> = (0..ns * na)
            .map(|k| r[k] + gamma * (0..ns).map(|t| p[k * ns + t] * v[t]).sum::<f64>())
            .collect();
        let change = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        if change == 0.0 || change < 1e-15 * (1.0 + q.iter().map(|x| x.abs()).fold(0.0, f64::max)) {
            break;
        }
    }
    q
}

fn mdp_arrays(mdp: &FiniteMdp) -> (Vec<f64>, Vec<f64>) {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut p = Vec::with_capacity(ns * na * ns);
    for s in 0..ns {
        for a in 0..na {
            p.extend_from_slice(mdp.transition.row(s, a));
        }
    }
    (p, mdp.reward.values().to_vec())
}

fn greedy(q: &[f64], na: usize) -> Vec<usize> {
    q.chunks(na)
        .map(|row| (0..na).fold(0, |best, a| if row[a] > row[best] { a } else { best }))
        .collect()
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

/// Unconstrained least-squares fit of L = ½s'Qs + q's + a'Ra + c to −r.
fn loss_fit_oracle(data: &ContinuousDataset) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, f64) {
    let (n, m) = (data.state_dim(), data.action_dim());
    let pairs = |d: usize| -> Vec<(usize, usize)> { (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect() };
    let (qp, rp) = (pairs(n), pairs(m));
    let cols = qp.len() + rp.len() + n + 1;
    let phi = DMatrix::from_fn(data.len(), cols, |t, k| {
        let it = &data.items()[t];
        if k < qp.len() {
            let (i, j) = qp[k];
            if i == j { 0.5 * it.s[i] * it.s[i] } else { it.s[i] * it.s[j] }
        } else if k < qp.len() + rp.len() {
            let (i, j) = rp[k - qp.len()];
            if i == j { it.a[i] * it.a[i] } else { 2.0 * it.a[i] * it.a[j] }
        } else if k < cols - 1 {
            it.s[k - qp.len() - rp.len()]
        } else {
            1.0
        }
    });
    let target = DVector::from_iterator(data.len(), data.items().iter().map(|it| -it.r));
    let theta = phi.svd(true, true).solve(&target, 1e-13).expect("svd solve");
    let mut q_mat = DMatrix::zeros(n, n);
    for (k, &(i, j)) in qp.iter().enumerate() {
        q_mat[(i, j)] = theta[k];
        q_mat[(j, i)] = theta[k];
    }
    let mut r_mat = DMatrix::zeros(m, m);
    for (k, &(i, j)) in rp.iter().enumerate() {
        r_mat[(i, j)] = theta[qp.len() + k];
        r_mat[(j, i)] = theta[qp.len() + k];
    }
    let off = qp.len() + rp.len();
    let q_vec = DVector::from_iterator(n, (0..n).map(|i| theta[off + i]));
    (q_mat, r_mat, q_vec, theta[cols - 1])
}

fn rows_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

// ---- criteria ------------------------------------------------------------

fn toy_exact() -> Check {
    let start = Instant::now();
    let cfg = ExperimentConfig::new(ExperimentId::Exp1, "unused");
    let (report, _, poisoned, verification) = run_toy(&cfg).map_err(err)?;
    let elapsed = start.elapsed();
    let (p, r, _) = empirical(&poisoned);
    let q = q_oracle(&p, &r, 2, 2, DISCOUNT);
    let rewards_ok = sup(&r, &[0.0, 1.0, 0.0, 1.0]) <= 1e-4;
    let cost_ok = (report.attack.cost - 2.0).abs() <= 1e-4;
    let q_ok = sup(&q, &[9.0, 10.0, 9.0, 10.0]) <= 1e-3;
    let q_lib_ok = sup(&report.poisoned_q.concat(), &q) <= 1e-3;
    let policy_ok = greedy(&q, 2) == vec![1, 1] && report.learned_policy == ["move", "move"];
    outcome(
        rewards_ok && cost_ok && q_ok && q_lib_ok && policy_ok && verification.passed && elapsed < Duration::from_secs(1),
        format!(
            "rewards {r:?}, cost {:.6}, Q {:?}, policy {:?}, {:.3}s",
            report.attack.cost,
            q.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            report.learned_policy,
            elapsed.as_secs_f64()
        ),
    )
}

fn shaping_control() -> Check {
    let cfg = ExperimentConfig::new(ExperimentId::Exp1, "unused");
    let (report, data, _, _) = run_toy(&cfg).map_err(err)?;
    let shaped = data.with_rewards(&report.shaped_rewards).map_err(err)?;
    let (p, r, _) = empirical(&shaped);
    let exact = r == [0.0, -1.0, 0.0, -1.0];
    let clean = greedy(&q_oracle(&p, &empirical(&data).1, 2, 2, DISCOUNT), 2);
    let shaped_greedy = greedy(&q_oracle(&p, &r, 2, 2, DISCOUNT), 2);
    let stays = clean == [0, 0] && shaped_greedy == [0, 0] && report.shaped_policy == ["stay", "stay"];
    outcome(
        exact && stays && report.shaped_iterations == 1,
        format!(
            "shaped {r:?}, policy {:?}, value iteration {} sweep(s)",
            report.shaped_policy, report.shaped_iterations
        ),
    )
}

fn grid_checksums() -> Check {
    let mut detail = Vec::new();
    let mut passed = true;
    for (name, spec, l1, l2, pairs) in [
        ("2(a)", GridWorldSpec::grid_a(), 105.0, 21.61, None),
        ("2(b)", GridWorldSpec::grid_b(), 121.0, 11.09, Some(124usize)),
    ] {
        let world = compile_gridworld(&spec).map_err(err)?;
        let data = generate_tce_dataset(&world.mdp, 1, 0, None, None).map_err(err)?;
        let r0 = data.rewards();
        let got_l1: f64 = r0.iter().map(|r| r.abs()).sum();
        let got_l2 = r0.iter().map(|r| r * r).sum::<f64>().sqrt();
        let ok_norms = (got_l1 - l1).abs() <= 1e-9 && (got_l2 - l2).abs() <= 0.01;
        let ok_pairs = pairs.is_none_or(|want| data.len() == want);
        passed &= ok_norms && ok_pairs;
        detail.push(format!(
            "{name}: ‖r⁰‖₁ {got_l1} (want {l1}), ‖r⁰‖₂ {got_l2:.4} (want {l2}), {} states, {} pairs{}",
            world.mdp.num_states(),
            data.len(),
            pairs.map_or(String::new(), |p| format!(" (want {p})"))
        ));
    }
    outcome(passed, detail.join("; "))
}

fn grid_experiment(id: ExperimentId, dense: (f64, f64), sparse: (f64, f64, usize), max_time: Option<Duration>) -> Check {
    let mut detail = Vec::new();
    let mut passed = true;
    for (norm, want, tol, modified) in [
        (Norm::L2, dense.0, dense.1, None),
        (Norm::L1, sparse.0, sparse.1, Some(sparse.2)),
    ] {
        let mut cfg = ExperimentConfig::new(id, "unused");
        cfg.norm = norm;
        let start = Instant::now();
        let (report, world, _, data, poisoned, verification) = run_grid(&cfg).map_err(err)?;
        let elapsed = start.elapsed();
        // relearn with the oracle and roll the greedy policy out
        let (p, r, _) = empirical(&poisoned);
        let (ns, na) = (data.num_states(), data.num_actions());
        let learned = Policy::new(greedy(&q_oracle(&p, &r, ns, na, DISCOUNT), na), na).map_err(err)?;
        let start_state = world.start.ok_or("grid without start")?;
        let path = world.rollout(&learned, start_state, ns);
        let labels: Vec<String> = path.iter().map(|&s| world.labels[s].clone()).collect();
        let reaches_goal = path.last().is_some_and(|&s| world.is_terminal(s));
        let follows = labels == report.target_rollout;
        let moved = report.attack.modified_count(&data.rewards(), MODIFIED_TOL);
        let ok = (report.attack.cost - want).abs() <= tol
            && follows
            && reaches_goal
            && modified.is_none_or(|k| moved == k)
            && verification.passed
            && max_time.is_none_or(|t| elapsed < t);
        passed &= ok;
        detail.push(format!(
            "α={}: cost {:.4} (want {want}±{tol}), {moved} modified{}, rollout {} to {}, {:.1}s",
            norm.label(),
            report.attack.cost,
            modified.map_or(String::new(), |k| format!(" (want {k})")),
            if follows { "follows target" } else { "leaves target" },
            labels.last().cloned().unwrap_or_default(),
            elapsed.as_secs_f64()
        ));
    }
    outcome(passed, detail.join("; "))
}

fn regulator_gain() -> Check {
    let truth = vehicle_dynamics(&VehicleParams::default(), 0.0).map_err(err)?;
    let policy = optimal_lqr_policy(&truth, &vehicle_true_loss(), DISCOUNT).map_err(err)?;
    let published = DMatrix::from_row_slice(2, 4, &[-1.32, 0.0, -2.39, 0.0, 0.0, -1.32, 0.0, -2.39]);
    let gain_err = (&policy.gain - &published).amax();
    let offset = policy.offset.amax();
    outcome(
        gain_err < 0.005 && offset < 1e-12,
        format!("K* {:?}, max deviation {gain_err:.4}, |k*| {offset:.1e}", policy.gain.transpose().as_slice()),
    )
}

fn vehicle_seeds() -> Check {
    let mut detail = Vec::new();
    let mut passed = true;
    for seed in 0..5u64 {
        let start = Instant::now();
        let mut cfg = ExperimentConfig::new(ExperimentId::Exp4, "unused");
        cfg.seed = seed;
        let (dense, _, dense_poisoned, v2) = run_vehicle(&cfg).map_err(err)?;
        cfg.norm = Norm::L1;
        let (sparse, _, sparse_poisoned, v1) = run_vehicle(&cfg).map_err(err)?;
        let elapsed = start.elapsed();
        let mut dev = 0.0f64;
        for (report, poisoned) in [(&dense, &dense_poisoned), (&sparse, &sparse_poisoned)] {
            let relearned = learn_policy(poisoned, DISCOUNT, VEHICLE_EPS).map_err(err)?;
            dev = dev.max(relearned.policy.max_deviation(&report.attack.target_policy()));
        }
        let ok = dev <= 1e-3
            && dense.cost_ratio <= 0.02
            && sparse.modified <= 10
            && v1.passed
            && v2.passed
            && elapsed < Duration::from_secs(120);
        passed &= ok;
        detail.push(format!(
            "seed {seed}: dev {dev:.1e}, ratio {:.4}, α=1 modifies {}, {:.1}s",
            dense.cost_ratio,
            sparse.modified,
            elapsed.as_secs_f64()
        ));
    }
    outcome(passed, detail.join("; "))
}

fn cost_bound_property() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = 0;
    let mut misses = Vec::new();
    for i in 0..100 {
        let inst = random_tce_instance(&mut rng);
        let (ns, na) = (inst.dataset.num_states(), inst.dataset.num_actions());
        let (p, r, counts) = empirical(&inst.dataset);
        let q0 = q_oracle(&p, &r, ns, na, inst.discount);
        let delta = (0..ns)
            .map(|s| {
                let t = inst.target.action(s);
                let other = (0..na).filter(|&a| a != t).map(|a| q0[s * na + a]).fold(f64::NEG_INFINITY, f64::max);
                (other - q0[s * na + t] + inst.margin).max(0.0)
            })
            .fold(0.0, f64::max);
        let inv = match inst.norm {
            Norm::L1 => 1.0,
            Norm::L2 => 0.5,
            Norm::LInf => 0.0,
        };
        let min_count = *counts.iter().min().unwrap() as f64;
        let lo = 0.5 * (1.0 - inst.discount) * delta * min_count.powf(inv) - 1e-6;
        let hi = 0.5 * (1.0 + inst.discount) * delta * (inst.dataset.len() as f64).powf(inv) + 1e-6;
        let est = estimate_mdp(&inst.dataset, inst.discount).map_err(err)?;
        let cfg = TceAttackConfig {
            target: inst.target.clone(),
            margin: inst.margin,
            norm: inst.norm,
        };
        let cost = solve_tce_attack(&inst.dataset, &est.mdp.transition, inst.discount, &cfg)
            .map_err(err)?
            .cost;
        if cost >= lo && cost <= hi {
            hits += 1;
        } else {
            misses.push(format!("#{i}: {cost} ∉ [{lo}, {hi}]"));
        }
    }
    outcome(hits == 100, format!("{hits}/100 within bounds {}", misses.join(", ")))
}

fn bijection_and_sensitivity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut round_ok, mut sandwich_ok) = (0, 0);
    let mut worst_round = 0.0f64;
    for _ in 0..50 {
        let (ns, na) = (rng.gen_range(2..=6), rng.gen_range(2..=4));
        let gamma = rng.gen_range(0.5..0.95);
        let mdp = random_mdp(&mut rng, ns, na, gamma);
        let (p, r) = mdp_arrays(&mdp);
        let q_lib = value_iteration(&mdp, 1e-12, 1_000_000).map_err(err)?.q;
        let q = q_oracle(&p, &r, ns, na, gamma);
        let back = q_to_reward(&q_lib, &mdp.transition, gamma).map_err(err)?;
        let e = sup(back.values(), &r).max(sup(q_lib.values(), &q));
        worst_round = worst_round.max(e);
        round_ok += usize::from(e <= 1e-8);

        let other = random_mdp(&mut rng, ns, na, gamma);
        let q2 = q_oracle(&p, other.reward.values(), ns, na, gamma);
        let dq = sup(&q, &q2);
        let dr = sup(&r, other.reward.values());
        sandwich_ok += usize::from((1.0 - gamma) * dq <= dr + 1e-9 && dr <= (1.0 + gamma) * dq + 1e-9);
    }
    outcome(
        round_ok == 50 && sandwich_ok == 50,
        format!("round trip {round_ok}/50 (worst {worst_round:.1e}), sandwich {sandwich_ok}/50"),
    )
}

fn surrogate_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut witness_ok, mut refit_ok) = (0, 0);
    let (mut worst_witness, mut worst_refit) = (0.0f64, 0.0f64);
    let mut notes = Vec::new();
    for i in 0..20 {
        let inst = random_lqr_instance(&mut rng).map_err(err)?;
        let target = make_target_policy(&inst.config, &inst.a_hat, &inst.b_hat).map_err(err)?;
        let sp = build_surrogate(&inst.dataset, &inst.a_hat, &inst.b_hat, &target.policy, &inst.config).map_err(err)?;
        let violation = sp.program.audit(&witness_point(&sp, &inst.dataset, &target)).max();
        worst_witness = worst_witness.max(violation);
        witness_ok += usize::from(violation <= 1e-8);

        let result = match solve_lqr_attack(&inst.dataset, &inst.a_hat, &inst.b_hat, &target, &inst.config) {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("#{i}: {e}"));
                continue;
            }
        };
        let poisoned = inst.dataset.with_rewards(&result.poisoned_rewards).map_err(err)?;
        let (q_mat, r_mat, q_vec, c) = loss_fit_oracle(&poisoned);
        let feasible = min_eig(&q_mat) >= -1e-7 && min_eig(&r_mat) >= inst.config.eps - 1e-7;
        let lib = estimate_loss(&poisoned, inst.config.eps).map_err(err)?.loss;
        let cert = &result.certified;
        let gap = |qm: &DMatrix<f64>, rm: &DMatrix<f64>, qv: &DVector<f64>, cc: f64| {
            (qm - rows_matrix(&cert.q_mat))
                .amax()
                .max((rm - rows_matrix(&cert.r_mat)).amax())
                .max((qv - DVector::from_column_slice(&cert.q_vec)).amax())
                .max((cc - cert.c).abs())
        };
        let d = gap(&q_mat, &r_mat, &q_vec, c).max(gap(&lib.q_mat, &lib.r_mat, &lib.q_vec, lib.c));
        worst_refit = worst_refit.max(d);
        refit_ok += usize::from(feasible && d <= 1e-5);
    }
    outcome(
        witness_ok == 20 && refit_ok == 20,
        format!(
            "witness feasible {witness_ok}/20 (worst {worst_witness:.1e}), refit {refit_ok}/20 (worst {worst_refit:.1e}){}",
            if notes.is_empty() { String::new() } else { format!(", {}", notes.join("; ")) }
        ),
    )
}

fn noiseless_pipeline() -> Check {
    let truth = vehicle_dynamics(&VehicleParams::default(), 0.0).map_err(err)?;
    let data = generate_lqr_dataset(&truth, &vehicle_true_loss(), &vehicle_start(), VEHICLE_STEPS, 0).map_err(err)?;
    let (a_hat, b_hat) = sysid(&data).map_err(err)?;
    let config = LqrAttackConfig {
        attacker_loss: goal_loss(&vehicle_goal(), 0.1).map_err(err)?,
        norm: Norm::L2,
        eps: VEHICLE_EPS,
        gamma: DISCOUNT,
    };
    let target = make_target_policy(&config, &a_hat, &b_hat).map_err(err)?;
    let result = solve_lqr_attack(&data, &a_hat, &b_hat, &target, &config).map_err(err)?;
    let poisoned = data.with_rewards(&result.poisoned_rewards).map_err(err)?;
    let relearned = learn_policy(&poisoned, DISCOUNT, VEHICLE_EPS).map_err(err)?;
    let dev = relearned.policy.max_deviation(&target.policy);
    let truth_dev = (&a_hat - &truth.a).amax().max((&b_hat - &truth.b).amax());
    outcome(
        dev <= 1e-8,
        format!("relearned vs target {dev:.1e}, identified dynamics error {truth_dev:.1e}"),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("toy exact reproduction", Box::new(toy_exact)),
        ("reward shaping control", Box::new(shaping_control)),
        ("grid transcription checksums", Box::new(grid_checksums)),
        (
            "grid attack, one terminal",
            Box::new(|| grid_experiment(ExperimentId::Exp2, (2.64, 0.05), (3.27, 0.05, 1), None)),
        ),
        (
            "grid attack, two terminals",
            Box::new(|| {
                grid_experiment(ExperimentId::Exp3, (0.38, 0.02), (1.05, 0.05, 12), Some(Duration::from_secs(30)))
            }),
        ),
        ("vehicle regulator gain", Box::new(regulator_gain)),
        ("vehicle attack over five seeds", Box::new(vehicle_seeds)),
        ("tabular cost bounds", Box::new(cost_bound_property)),
        ("reward/Q bijection and sensitivity", Box::new(bijection_and_sensitivity)),
        ("surrogate soundness", Box::new(surrogate_soundness)),
        ("noiseless end-to-end", Box::new(noiseless_pipeline)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let (passed, detail) = match result {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "criterion {:>2} {} [{name}] ({:.1}s): {detail}",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
