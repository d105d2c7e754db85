//! Reproduction runs for the four experiments and the randomized property
//! suite. Every run writes its datasets, attack report, verification record
//! and plots into one output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::Norm;
use crate::data::{build_index, generate_lqr_dataset, generate_tce_dataset, write_dataset, ContinuousDataset, Dataset, TabularDataset};
use crate::env::{compile_gridworld, two_state_mdp, GridWorld, GridWorldSpec, TwoStateSpec, TWO_STATE_ACTIONS, TWO_STATE_LABELS};
use crate::error::{Error, Result};
use crate::lqr::attack::{
    build_surrogate, goal_loss, make_target_policy, solve_lqr_attack, to_rows, verify_lqr_attack, witness_point,
    LqrAttackConfig, LqrAttackResult,
};
use crate::lqr::victim::{learn_policy as learn_lqr, sysid};
use crate::lqr::{optimal_lqr_policy, simulate, vehicle_dynamics, vehicle_true_loss, ActionSource, ControlPolicy, VehicleParams};
use crate::mdp::{
    evaluate_policy, greedy_policy, q_to_reward, shape_rewards, value_iteration, value_iteration_trace, Policy,
    Potential, QTable, DEFAULT_VI_MAX_ITERS, DEFAULT_VI_TOL,
};
use crate::plot::{grid_delta_map, Guide, LinePlot, Series, PALETTE};
use crate::random::{random_lqr_instance, random_mdp, random_tce_instance};
use crate::tce::attack::{
    compute_delta_eps, cost_bounds, solve_tce_attack, verify_tce_attack, TceAttackConfig, TceAttackResult,
};
use crate::tce::victim::{estimate_mdp, learn_policy as learn_tce, LEARNER_TIE_TOL};
use crate::verify::Verification;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "POLICY_POISON_OUT";

pub const DISCOUNT: f64 = 0.9;
/// Experiment 4 horizon and noise.
pub const VEHICLE_STEPS: usize = 400;
pub const VEHICLE_NOISE: f64 = 0.01;
/// Experiment 4 ε, shared by the learner's loss fit and the attack.
pub const VEHICLE_EPS: f64 = 0.01;
/// Modification threshold used when counting changed rewards.
pub const MODIFIED_TOL: f64 = 1e-6;

pub fn vehicle_start() -> DVector<f64> {
    DVector::from_vec(vec![1.0, 1.0, 1.0, -0.5])
}

pub fn vehicle_goal() -> DVector<f64> {
    DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

impl ExperimentId {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
            ExperimentId::Exp4 => "exp4",
        }
    }

    /// ε of the published runs.
    pub fn default_margin(self) -> f64 {
        match self {
            ExperimentId::Exp1 => 1.0,
            ExperimentId::Exp2 | ExperimentId::Exp3 => 0.1,
            ExperimentId::Exp4 => VEHICLE_EPS,
        }
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(ExperimentId::Exp1),
            "exp2" => Ok(ExperimentId::Exp2),
            "exp3" => Ok(ExperimentId::Exp3),
            "exp4" => Ok(ExperimentId::Exp4),
            other => Err(Error::arg(format!("unknown experiment '{other}' (expected exp1..exp4)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub norm: Norm,
    pub margin: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Replaces the built-in grid of exp2/exp3.
    pub grid: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(id: ExperimentId, out: impl Into<PathBuf>) -> Self {
        Self {
            id,
            norm: Norm::L2,
            margin: id.default_margin(),
            seed: 0,
            out: out.into(),
            grid: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::arg("margin must be positive"));
        }
        if self.grid.is_some() && !matches!(self.id, ExperimentId::Exp2 | ExperimentId::Exp3) {
            return Err(Error::arg("--grid applies to exp2 and exp3 only"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTrace {
    pub label: String,
    /// (Q(A, stay), Q(A, move)) per value-iteration step.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub clean_rewards: Vec<f64>,
    pub clean_q: Vec<Vec<f64>>,
    pub clean_policy: Vec<String>,
    pub poisoned_q: Vec<Vec<f64>>,
    pub learned_policy: Vec<String>,
    pub delta_eps: f64,
    pub cost_bounds: (f64, f64),
    pub attack: TceAttackResult,
    pub shaped_rewards: Vec<f64>,
    pub shaped_policy: Vec<String>,
    /// Bellman updates needed from Q ≡ 0 on the shaped data.
    pub shaped_iterations: usize,
    pub traces: Vec<QTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub num_states: usize,
    pub num_pairs: usize,
    pub clean_l1: f64,
    pub clean_l2: f64,
    pub delta_eps: f64,
    pub cost_bounds: (f64, f64),
    pub attack: TceAttackResult,
    pub modified: usize,
    pub clean_rollout: Vec<String>,
    pub target_rollout: Vec<String>,
    pub poisoned_rollout: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleReport {
    #[serde(rename = "optimal_K")]
    pub optimal_gain: Vec<Vec<f64>>,
    #[serde(rename = "optimal_k")]
    pub optimal_offset: Vec<f64>,
    #[serde(rename = "clean_K")]
    pub clean_gain: Vec<Vec<f64>>,
    #[serde(rename = "clean_k")]
    pub clean_offset: Vec<f64>,
    pub clean_l2: f64,
    pub cost_ratio: f64,
    pub modified: usize,
    pub witness_violation: f64,
    pub attack: LqrAttackResult,
    pub clean_trajectory: Vec<(f64, f64)>,
    pub poisoned_trajectory: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExperimentDetails {
    Toy(ToyReport),
    Grid(GridReport),
    Vehicle(VehicleReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    pub norm: Norm,
    pub margin: f64,
    pub seed: u64,
    pub cost: f64,
    pub passed: bool,
    pub details: ExperimentDetails,
    pub verification: Verification,
    pub files: Vec<String>,
}

fn labels_of(policy: &Policy, names: &[String]) -> Vec<String> {
    policy.actions().iter().map(|&a| names[a].clone()).collect()
}

/// Experiment 1: the two-state MDP, target move/move, plus the reward-shaping
/// comparison with φ = V of the clean data.
pub fn run_toy(config: &ExperimentConfig) -> Result<(ToyReport, TabularDataset, TabularDataset, Verification)> {
    let mdp = two_state_mdp(&TwoStateSpec {
        stay_reward: 1.0,
        move_reward: 0.0,
        discount: DISCOUNT,
    })?;
    let states: Vec<String> = TWO_STATE_LABELS.iter().map(|s| s.to_string()).collect();
    let actions: Vec<String> = TWO_STATE_ACTIONS.iter().map(|s| s.to_string()).collect();
    let data = generate_tce_dataset(&mdp, 1, config.seed, Some(states), Some(actions.clone()))?;
    let est = estimate_mdp(&data, DISCOUNT)?;
    let (clean_vi, clean_trace) = value_iteration_trace(&est.mdp, DEFAULT_VI_TOL, DEFAULT_VI_MAX_ITERS)?;
    let clean_greedy = greedy_policy(&clean_vi.q, LEARNER_TIE_TOL);
    let target = Policy::uniform(2, 1);
    let attack_cfg = TceAttackConfig {
        target: target.clone(),
        margin: config.margin,
        norm: config.norm,
    };
    let attack = solve_tce_attack(&data, &est.mdp.transition, DISCOUNT, &attack_cfg)?;
    let mut verification = verify_tce_attack(&attack, &data, DISCOUNT)?;
    let poisoned = data.with_rewards(&attack.poisoned_rewards)?;
    let poisoned_est = estimate_mdp(&poisoned, DISCOUNT)?;
    let (poisoned_vi, poisoned_trace) = value_iteration_trace(&poisoned_est.mdp, DEFAULT_VI_TOL, DEFAULT_VI_MAX_ITERS)?;
    let learned = greedy_policy(&poisoned_vi.q, LEARNER_TIE_TOL);

    // φ = V of the clean greedy policy, solved exactly rather than iterated
    let potential = Potential::new(evaluate_policy(&est.mdp, &clean_greedy.policy)?)?;
    let shaped = shape_rewards(&data, &potential, DISCOUNT)?;
    let shaped_est = estimate_mdp(&shaped, DISCOUNT)?;
    let (shaped_vi, shaped_trace) = value_iteration_trace(&shaped_est.mdp, 1e-8, DEFAULT_VI_MAX_ITERS)?;
    let shaped_greedy = greedy_policy(&shaped_vi.q, LEARNER_TIE_TOL);
    verification.record(
        "shaping_keeps_policy",
        shaped_greedy.policy == clean_greedy.policy,
        format!(
            "shaped {:?}, clean {:?}",
            labels_of(&shaped_greedy.policy, &actions),
            labels_of(&clean_greedy.policy, &actions)
        ),
    );

    let delta = compute_delta_eps(&clean_vi.q, &target, config.margin)?;
    let index = build_index(&data);
    let bounds = cost_bounds(delta, DISCOUNT, config.norm, data.len(), index.min_count());
    let trace = |label: &str, t: &[QTable]| QTrace {
        label: label.to_string(),
        points: t.iter().map(|q| (q.get(0, 0), q.get(0, 1))).collect(),
    };
    let report = ToyReport {
        clean_rewards: data.rewards(),
        clean_q: clean_vi.q.to_rows(),
        clean_policy: labels_of(&clean_greedy.policy, &actions),
        poisoned_q: poisoned_vi.q.to_rows(),
        learned_policy: labels_of(&learned.policy, &actions),
        delta_eps: delta,
        cost_bounds: bounds,
        attack,
        shaped_rewards: shaped.rewards(),
        shaped_policy: labels_of(&shaped_greedy.policy, &actions),
        shaped_iterations: shaped_vi.iterations,
        traces: vec![
            trace("clean", &clean_trace),
            trace("poisoned", &poisoned_trace),
            trace("shaped", &shaped_trace),
        ],
    };
    Ok((report, data, poisoned, verification))
}

/// Loads the grid of exp2/exp3 (or the user's replacement).
pub fn grid_spec(config: &ExperimentConfig) -> Result<GridWorldSpec> {
    match (&config.grid, config.id) {
        (Some(path), _) => GridWorldSpec::load(path),
        (None, ExperimentId::Exp2) => Ok(GridWorldSpec::grid_a()),
        (None, ExperimentId::Exp3) => Ok(GridWorldSpec::grid_b()),
        (None, other) => Err(Error::arg(format!("{} is not a grid experiment", other.label()))),
    }
}

/// Clean greedy policy with the spec's target path overriding it.
pub fn grid_target(world: &GridWorld, spec: &GridWorldSpec, data: &TabularDataset) -> Result<Policy> {
    let clean = learn_tce(data, spec.discount, DEFAULT_VI_TOL)?;
    world.policy_with_path(&clean.greedy.policy, &spec.target_path)
}

pub fn run_grid(
    config: &ExperimentConfig,
) -> Result<(GridReport, GridWorld, GridWorldSpec, TabularDataset, TabularDataset, Verification)> {
    let spec = grid_spec(config)?;
    if spec.target_path.is_empty() {
        return Err(Error::arg("grid spec has no target_path"));
    }
    let world = compile_gridworld(&spec)?;
    let data = generate_tce_dataset(&world.mdp, 1, config.seed, Some(world.labels.clone()), Some(world.action_labels()))?;
    let est = estimate_mdp(&data, spec.discount)?;
    let clean_q = value_iteration(&est.mdp, DEFAULT_VI_TOL, DEFAULT_VI_MAX_ITERS)?.q;
    let clean_policy = greedy_policy(&clean_q, LEARNER_TIE_TOL).policy;
    let target = grid_target(&world, &spec, &data)?;
    let attack_cfg = TceAttackConfig {
        target: target.clone(),
        margin: config.margin,
        norm: config.norm,
    };
    let attack = solve_tce_attack(&data, &est.mdp.transition, spec.discount, &attack_cfg)?;
    let mut verification = verify_tce_attack(&attack, &data, spec.discount)?;
    let poisoned = data.with_rewards(&attack.poisoned_rewards)?;
    let learned = learn_tce(&poisoned, spec.discount, DEFAULT_VI_TOL)?.greedy.policy;

    let start = world.start.ok_or_else(|| Error::arg("grid has no start cell"))?;
    let horizon = world.mdp.num_states();
    let names = |path: Vec<usize>| path.into_iter().map(|s| world.labels[s].clone()).collect::<Vec<_>>();
    let target_rollout = names(world.rollout(&target, start, horizon));
    let poisoned_rollout = names(world.rollout(&learned, start, horizon));
    verification.record(
        "rollout",
        poisoned_rollout == target_rollout,
        format!("poisoned {poisoned_rollout:?}, target {target_rollout:?}"),
    );
    let r0 = data.rewards();
    let delta = compute_delta_eps(&clean_q, &target, config.margin)?;
    let index = build_index(&data);
    let report = GridReport {
        num_states: world.mdp.num_states(),
        num_pairs: world.mdp.num_states() * world.mdp.num_actions(),
        clean_l1: Norm::L1.eval(&r0),
        clean_l2: Norm::L2.eval(&r0),
        delta_eps: delta,
        cost_bounds: cost_bounds(delta, spec.discount, config.norm, data.len(), index.min_count()),
        modified: attack.modified_count(&r0, MODIFIED_TOL),
        attack,
        clean_rollout: names(world.rollout(&clean_policy, start, horizon)),
        target_rollout,
        poisoned_rollout,
    };
    Ok((report, world, spec, data, poisoned, verification))
}

/// Positions (x, y) of a closed-loop rollout on the true vehicle model.
fn vehicle_positions(policy: &ControlPolicy, seed: u64, steps: usize) -> Result<Vec<(f64, f64)>> {
    let truth = vehicle_dynamics(&VehicleParams::default(), VEHICLE_NOISE)?;
    let traj = simulate(
        &truth,
        &ActionSource::Policy(policy.clone()),
        &vehicle_true_loss(),
        &vehicle_start(),
        steps,
        seed,
    )?;
    let mut pts: Vec<(f64, f64)> = traj.iter().map(|st| (st.s[0], st.s[1])).collect();
    if let Some(last) = traj.last() {
        pts.push((last.s_next[0], last.s_next[1]));
    }
    Ok(pts)
}

pub fn run_vehicle(config: &ExperimentConfig) -> Result<(VehicleReport, ContinuousDataset, ContinuousDataset, Verification)> {
    let truth = vehicle_dynamics(&VehicleParams::default(), VEHICLE_NOISE)?;
    let loss = vehicle_true_loss();
    let optimal = optimal_lqr_policy(&truth, &loss, DISCOUNT)?;
    let data = generate_lqr_dataset(&truth, &loss, &vehicle_start(), VEHICLE_STEPS, config.seed)?;
    let clean = learn_lqr(&data, DISCOUNT, config.margin)?;
    let (a_hat, b_hat) = sysid(&data)?;
    let attack_cfg = LqrAttackConfig {
        attacker_loss: goal_loss(&vehicle_goal(), 0.1)?,
        norm: config.norm,
        eps: config.margin,
        gamma: DISCOUNT,
    };
    let target = make_target_policy(&attack_cfg, &a_hat, &b_hat)?;
    let surrogate = build_surrogate(&data, &a_hat, &b_hat, &target.policy, &attack_cfg)?;
    let witness_violation = surrogate.program.audit(&witness_point(&surrogate, &data, &target)).max();
    let attack = solve_lqr_attack(&data, &a_hat, &b_hat, &target, &attack_cfg)?;
    let mut verification = verify_lqr_attack(&attack, &data)?;
    verification.record(
        "witness",
        witness_violation <= 1e-8,
        format!("target witness violation {witness_violation:.3e}"),
    );
    let poisoned = data.with_rewards(&attack.poisoned_rewards)?;
    let r0 = data.rewards();
    let diff: Vec<f64> = attack.poisoned_rewards.iter().zip(&r0).map(|(a, b)| a - b).collect();
    let clean_l2 = Norm::L2.eval(&r0);
    let horizon = 100;
    let report = VehicleReport {
        optimal_gain: to_rows(&optimal.gain),
        optimal_offset: optimal.offset.iter().copied().collect(),
        clean_gain: to_rows(&clean.policy.gain),
        clean_offset: clean.policy.offset.iter().copied().collect(),
        clean_l2,
        cost_ratio: Norm::L2.eval(&diff) / clean_l2,
        modified: attack.modified_count(&r0, MODIFIED_TOL),
        witness_violation,
        clean_trajectory: vehicle_positions(&clean.policy, config.seed.wrapping_add(1), horizon)?,
        poisoned_trajectory: vehicle_positions(&attack.learned_policy(), config.seed.wrapping_add(1), horizon)?,
        attack,
    };
    Ok((report, data, poisoned, verification))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn toy_plot(report: &ToyReport, margin: f64) -> String {
    let series = report
        .traces
        .iter()
        .enumerate()
        .map(|(i, t)| Series {
            markers: true,
            mark_end: true,
            ..Series::line(&t.label, t.points.clone(), PALETTE[i % PALETTE.len()])
        })
        .collect();
    LinePlot {
        title: "Q values of state A during value iteration".into(),
        x_label: "Q(A, stay)".into(),
        y_label: "Q(A, move)".into(),
        series,
        guides: vec![
            Guide {
                label: "policy boundary".into(),
                slope: 1.0,
                intercept: 0.0,
                color: "#555555".into(),
                fill_above: false,
            },
            Guide {
                label: format!("ε-robust target (ε={margin})"),
                slope: 1.0,
                intercept: margin,
                color: PALETTE[3].into(),
                fill_above: true,
            },
        ],
        annotations: Vec::new(),
        equal_aspect: true,
    }
    .render()
}

fn vehicle_plots(report: &VehicleReport, r0: &[f64]) -> (String, String) {
    let goal = vehicle_goal();
    let traj = LinePlot {
        title: "Clean and poisoned vehicle trajectory".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        series: vec![
            Series::line("clean", report.clean_trajectory.clone(), PALETTE[0]),
            Series::line("poisoned", report.poisoned_trajectory.clone(), PALETTE[1]),
        ],
        guides: Vec::new(),
        annotations: vec![
            (goal[0], goal[1], "target".into()),
            (0.0, 0.0, "origin".into()),
        ],
        equal_aspect: true,
    }
    .render();
    let rewards = LinePlot {
        title: "Clean and poisoned rewards".into(),
        x_label: "t".into(),
        y_label: "reward".into(),
        series: vec![
            Series::line("clean", r0.iter().enumerate().map(|(t, r)| (t as f64, *r)).collect(), PALETTE[0]),
            Series::line(
                "poisoned",
                report.attack.poisoned_rewards.iter().enumerate().map(|(t, r)| (t as f64, *r)).collect(),
                PALETTE[1],
            ),
        ],
        ..LinePlot::default()
    }
    .render();
    (traj, rewards)
}

/// Runs one experiment and writes its artifacts into `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    let out = &config.out;
    let mut files: Vec<String> = Vec::new();
    let mut save = |name: &str, body: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        body(&out.join(name))?;
        files.push(name.to_string());
        Ok(())
    };
    let (details, cost, verification) = match config.id {
        ExperimentId::Exp1 => {
            let (report, clean, poisoned, v) = run_toy(config)?;
            let shaped = clean.with_rewards(&report.shaped_rewards)?;
            save("clean.csv", &|p| write_dataset(&Dataset::Tabular(clean.clone()), p))?;
            save("poisoned.csv", &|p| write_dataset(&Dataset::Tabular(poisoned.clone()), p))?;
            save("shaped.csv", &|p| write_dataset(&Dataset::Tabular(shaped.clone()), p))?;
            save("attack.json", &|p| write_json(p, &report.attack))?;
            let svg = toy_plot(&report, config.margin);
            save("q_trajectory.svg", &|p| Ok(fs::write(p, &svg)?))?;
            let cost = report.attack.cost;
            (ExperimentDetails::Toy(report), cost, v)
        }
        ExperimentId::Exp2 | ExperimentId::Exp3 => {
            let (report, world, spec, clean, poisoned, v) = run_grid(config)?;
            save("clean.csv", &|p| write_dataset(&Dataset::Tabular(clean.clone()), p))?;
            save("poisoned.csv", &|p| write_dataset(&Dataset::Tabular(poisoned.clone()), p))?;
            save("attack.json", &|p| write_json(p, &report.attack))?;
            let lookup = |names: &[String]| -> Vec<usize> {
                names.iter().filter_map(|n| world.labels.iter().position(|l| l == n)).collect()
            };
            let paths = [
                ("clean policy", "#1f4fd6", lookup(&report.clean_rollout)),
                ("poisoned policy", "#d62728", lookup(&report.poisoned_rollout)),
            ];
            let svg = grid_delta_map(
                &format!("{} reward modifications (α={})", config.id.label(), config.norm),
                &spec,
                &world,
                &report.attack.per_pair_shift,
                &paths,
                MODIFIED_TOL,
            );
            save("reward_deltas.svg", &|p| Ok(fs::write(p, &svg)?))?;
            let cost = report.attack.cost;
            (ExperimentDetails::Grid(report), cost, v)
        }
        ExperimentId::Exp4 => {
            let (report, clean, poisoned, v) = run_vehicle(config)?;
            save("clean.csv", &|p| write_dataset(&Dataset::Continuous(clean.clone()), p))?;
            save("poisoned.csv", &|p| write_dataset(&Dataset::Continuous(poisoned.clone()), p))?;
            save("attack.json", &|p| write_json(p, &report.attack))?;
            let (traj, rewards) = vehicle_plots(&report, &clean.rewards());
            save("trajectory.svg", &|p| Ok(fs::write(p, &traj)?))?;
            save("rewards.svg", &|p| Ok(fs::write(p, &rewards)?))?;
            let cost = report.attack.cost;
            (ExperimentDetails::Vehicle(report), cost, v)
        }
    };
    save("verification.json", &|p| write_json(p, &verification))?;
    files.push("report.json".into());
    let report = ExperimentReport {
        experiment: config.id,
        norm: config.norm,
        margin: config.margin,
        seed: config.seed,
        cost,
        passed: verification.passed,
        details,
        verification,
        files,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyCount {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    /// First few failure descriptions.
    pub failures: Vec<String>,
}

impl PropertyCount {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else if self.failures.len() < 5 {
            self.failures.push(detail());
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySummary {
    pub seed: u64,
    pub instances: usize,
    pub passed: bool,
    pub properties: Vec<PropertyCount>,
}

/// Randomized cross-module checks: cost bounds on random tabular attacks
/// (also at γ = 0), the reward↔Q round trip, the Q-sensitivity sandwich and
/// surrogate feasibility on random LQR attacks. LQR instances are a fifth of
/// `instances` (at least one) since each needs a conic solve.
pub fn property_suite(seed: u64, instances: usize) -> Result<PropertySummary> {
    if instances == 0 {
        return Err(Error::arg("instances must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bounds = PropertyCount::new("cost_bounds");
    let mut bounds_zero = PropertyCount::new("cost_bounds_discount_zero");
    let mut round_trip = PropertyCount::new("reward_q_round_trip");
    let mut sensitivity = PropertyCount::new("q_sensitivity_sandwich");
    let mut surrogate = PropertyCount::new("surrogate_feasibility");

    for i in 0..instances {
        let inst = random_tce_instance(&mut rng);
        let check = |discount: f64, count: &mut PropertyCount| -> Result<()> {
            let est = estimate_mdp(&inst.dataset, discount)?;
            let q0 = value_iteration(&est.mdp, DEFAULT_VI_TOL * 1e-2, DEFAULT_VI_MAX_ITERS)?.q;
            let cfg = TceAttackConfig {
                target: inst.target.clone(),
                margin: inst.margin,
                norm: inst.norm,
            };
            let res = solve_tce_attack(&inst.dataset, &est.mdp.transition, discount, &cfg)?;
            let delta = compute_delta_eps(&q0, &inst.target, inst.margin)?;
            let index = build_index(&inst.dataset);
            let (lo, hi) = cost_bounds(delta, discount, inst.norm, inst.dataset.len(), index.min_count());
            count.record(res.cost >= lo - 1e-6 && res.cost <= hi + 1e-6, || {
                format!("instance {i}: cost {} outside [{lo}, {hi}]", res.cost)
            });
            Ok(())
        };
        check(inst.discount, &mut bounds)?;
        check(0.0, &mut bounds_zero)?;

        let discount = inst.discount;
        let mdp = random_mdp(&mut rng, inst.dataset.num_states(), inst.dataset.num_actions(), discount);
        let q = value_iteration(&mdp, 1e-12, DEFAULT_VI_MAX_ITERS)?.q;
        let back = q_to_reward(&q, &mdp.transition, discount)?;
        let err = back.sup_distance(&mdp.reward);
        round_trip.record(err <= 1e-8, || format!("instance {i}: round trip error {err:.3e}"));

        let other = random_mdp(&mut rng, mdp.num_states(), mdp.num_actions(), discount);
        let shifted = crate::mdp::FiniteMdp::new(mdp.transition.clone(), other.reward.clone(), discount)?;
        let q2 = value_iteration(&shifted, 1e-12, DEFAULT_VI_MAX_ITERS)?.q;
        let dq = q.sup_distance(&q2);
        let dr = mdp.reward.sup_distance(&shifted.reward);
        let slack = 1e-9;
        sensitivity.record(
            (1.0 - discount) * dq <= dr + slack && dr <= (1.0 + discount) * dq + slack,
            || format!("instance {i}: ‖ΔR‖∞ {dr} vs ‖ΔQ‖∞ {dq}"),
        );
    }
    for i in 0..instances.div_ceil(5) {
        let inst = random_lqr_instance(&mut rng)?;
        let target = make_target_policy(&inst.config, &inst.a_hat, &inst.b_hat)?;
        let sp = build_surrogate(&inst.dataset, &inst.a_hat, &inst.b_hat, &target.policy, &inst.config)?;
        let violation = sp.program.audit(&witness_point(&sp, &inst.dataset, &target)).max();
        let outcome = solve_lqr_attack(&inst.dataset, &inst.a_hat, &inst.b_hat, &target, &inst.config)
            .and_then(|res| verify_lqr_attack(&res, &inst.dataset));
        let detail = match &outcome {
            Ok(v) => v.failures().join("; "),
            Err(e) => e.to_string(),
        };
        surrogate.record(
            violation <= 1e-8 && outcome.as_ref().is_ok_and(|v| v.passed),
            || format!("instance {i}: witness {violation:.3e} {detail}"),
        );
    }
    let properties = vec![bounds, bounds_zero, round_trip, sensitivity, surrogate];
    Ok(PropertySummary {
        seed,
        instances,
        passed: properties.iter().all(PropertyCount::all_passed),
        properties,
    })
}
