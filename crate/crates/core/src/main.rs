use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use policy_poison::conic::Norm;
use policy_poison::data::{generate_lqr_dataset, generate_tce_dataset, read_dataset, write_dataset, Dataset, TabularDataset};
use policy_poison::env::{compile_gridworld, GridWorldSpec};
use policy_poison::experiments::{
    grid_target, property_suite, run, vehicle_goal, vehicle_start, ExperimentConfig, ExperimentId, DISCOUNT,
    OUT_DIR_ENV, VEHICLE_EPS, VEHICLE_NOISE, VEHICLE_STEPS,
};
use policy_poison::lqr::attack::{goal_loss, make_target_policy, solve_lqr_attack, verify_lqr_attack, LossSpec, LqrAttackConfig};
use policy_poison::lqr::victim::sysid;
use policy_poison::lqr::{vehicle_dynamics, vehicle_true_loss, VehicleParams};
use policy_poison::mdp::Policy;
use policy_poison::tce::attack::{solve_tce_attack, verify_tce_attack, TceAttackConfig};
use policy_poison::tce::victim::estimate_mdp;
use policy_poison::verify::Verification;
use policy_poison::{Error, Result};

#[derive(Parser)]
#[command(name = "policy-poison", version, about = "Reward poisoning against batch tabular and LQR learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Attack cost norm: 1, 2 or inf
    #[arg(long, default_value = "2")]
    norm: Norm,
    /// Seed for data generation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Attack the tabular certainty-equivalence learner
    AttackTce {
        #[command(flatten)]
        common: Common,
        /// Margin ε by which target actions must win
        #[arg(long, default_value_t = 0.1)]
        margin: f64,
        /// Tabular dataset (CSV or JSON); generated from --grid when omitted
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Grid spec whose target_path defines the target policy
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Target action label per state, comma separated, in dataset state order
        #[arg(long, value_delimiter = ',')]
        target: Vec<String>,
        #[arg(long, default_value_t = DISCOUNT)]
        gamma: f64,
    },
    /// Attack the LQR learner
    AttackLqr {
        #[command(flatten)]
        common: Common,
        /// ε in R ⪰ εI, shared by learner and attacker
        #[arg(long, default_value_t = VEHICLE_EPS)]
        margin: f64,
        /// Continuous dataset; a vehicle rollout is generated when omitted
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Goal state s†; the attacker loss is ½(s−s†)'(s−s†) + 0.1a'a
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        goal: Vec<f64>,
        /// Attacker loss as JSON {q_mat, r_mat, q_vec, c}
        #[arg(long, conflicts_with = "goal")]
        attacker_loss: Option<PathBuf>,
        #[arg(long, default_value_t = DISCOUNT)]
        gamma: f64,
    },
    /// Reproduce one of the experiments
    Reproduce {
        /// exp1, exp2, exp3 or exp4
        experiment: ExperimentId,
        #[command(flatten)]
        common: Common,
        /// Margin ε (defaults to the experiment's own value)
        #[arg(long)]
        margin: Option<f64>,
        /// Replacement grid spec for exp2/exp3
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Randomized property checks
    Props {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
}

fn out_dir(out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("out").join(name))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn tabular(dataset: Dataset) -> Result<TabularDataset> {
    match dataset {
        Dataset::Tabular(d) => Ok(d),
        Dataset::Continuous(_) => Err(Error::InvalidArgument("expected a tabular dataset".into())),
    }
}

fn target_from_labels(data: &TabularDataset, labels: &[String]) -> Result<Policy> {
    if labels.len() != data.num_states() {
        return Err(Error::InvalidArgument(format!(
            "--target needs {} actions, got {}",
            data.num_states(),
            labels.len()
        )));
    }
    let actions = labels
        .iter()
        .map(|l| {
            data.action_labels()
                .iter()
                .position(|a| a == l)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown action '{l}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Policy::new(actions, data.num_actions())
}

fn attack_tce(
    common: Common,
    margin: f64,
    dataset: Option<PathBuf>,
    grid: Option<PathBuf>,
    target: Vec<String>,
    gamma: f64,
) -> Result<Verification> {
    let spec = grid.as_deref().map(GridWorldSpec::load).transpose()?;
    let world = spec.as_ref().map(compile_gridworld).transpose()?;
    let data = match (&dataset, &world) {
        (Some(path), _) => tabular(read_dataset(path)?)?,
        (None, Some(w)) => generate_tce_dataset(&w.mdp, 1, common.seed, Some(w.labels.clone()), Some(w.action_labels()))?,
        (None, None) => return Err(Error::InvalidArgument("give --dataset or --grid".into())),
    };
    let target = match (&world, &spec) {
        _ if !target.is_empty() => target_from_labels(&data, &target)?,
        (Some(w), Some(s)) => grid_target(w, s, &data)?,
        _ => return Err(Error::InvalidArgument("give --target or a --grid with a target_path".into())),
    };
    let est = estimate_mdp(&data, gamma)?;
    let cfg = TceAttackConfig {
        target,
        margin,
        norm: common.norm,
    };
    let result = solve_tce_attack(&data, &est.mdp.transition, gamma, &cfg)?;
    let verification = verify_tce_attack(&result, &data, gamma)?;
    let out = out_dir(common.out, "attack-tce");
    fs::create_dir_all(&out)?;
    write_dataset(&Dataset::Tabular(data.with_rewards(&result.poisoned_rewards)?), out.join("poisoned.csv"))?;
    write_json(&out.join("attack.json"), &result)?;
    write_json(&out.join("verification.json"), &verification)?;
    println!(
        "{}",
        json!({"command": "attack-tce", "cost": result.cost, "norm": result.norm, "passed": verification.passed, "out": out})
    );
    Ok(verification)
}

fn attack_lqr(
    common: Common,
    margin: f64,
    dataset: Option<PathBuf>,
    goal: Vec<f64>,
    attacker_loss: Option<PathBuf>,
    gamma: f64,
) -> Result<Verification> {
    let data = match &dataset {
        Some(path) => match read_dataset(path)? {
            Dataset::Continuous(d) => d,
            Dataset::Tabular(_) => return Err(Error::InvalidArgument("expected a continuous dataset".into())),
        },
        None => {
            let truth = vehicle_dynamics(&VehicleParams::default(), VEHICLE_NOISE)?;
            generate_lqr_dataset(&truth, &vehicle_true_loss(), &vehicle_start(), VEHICLE_STEPS, common.seed)?
        }
    };
    let loss = match (&attacker_loss, goal.is_empty()) {
        (Some(path), _) => serde_json::from_str::<LossSpec>(&fs::read_to_string(path)?)?.to_loss()?,
        (None, false) => goal_loss(&DVector::from_vec(goal), 0.1)?,
        (None, true) if data.state_dim() == 4 && data.action_dim() == 2 => goal_loss(&vehicle_goal(), 0.1)?,
        (None, true) => return Err(Error::InvalidArgument("give --goal or --attacker-loss".into())),
    };
    if loss.state_dim() != data.state_dim() || loss.action_dim() != data.action_dim() {
        return Err(Error::InvalidArgument("attacker loss does not match the dataset dimensions".into()));
    }
    let cfg = LqrAttackConfig {
        attacker_loss: loss,
        norm: common.norm,
        eps: margin,
        gamma,
    };
    let (a_hat, b_hat) = sysid(&data)?;
    let target = make_target_policy(&cfg, &a_hat, &b_hat)?;
    let result = solve_lqr_attack(&data, &a_hat, &b_hat, &target, &cfg)?;
    let verification = verify_lqr_attack(&result, &data)?;
    let out = out_dir(common.out, "attack-lqr");
    fs::create_dir_all(&out)?;
    write_dataset(&Dataset::Continuous(data.with_rewards(&result.poisoned_rewards)?), out.join("poisoned.csv"))?;
    write_json(&out.join("attack.json"), &result)?;
    write_json(&out.join("verification.json"), &verification)?;
    println!(
        "{}",
        json!({"command": "attack-lqr", "cost": result.cost, "norm": result.norm, "passed": verification.passed, "out": out})
    );
    Ok(verification)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::AttackTce {
            common,
            margin,
            dataset,
            grid,
            target,
            gamma,
        } => Ok(attack_tce(common, margin, dataset, grid, target, gamma)?.passed),
        Command::AttackLqr {
            common,
            margin,
            dataset,
            goal,
            attacker_loss,
            gamma,
        } => Ok(attack_lqr(common, margin, dataset, goal, attacker_loss, gamma)?.passed),
        Command::Reproduce {
            experiment,
            common,
            margin,
            grid,
        } => {
            let mut cfg = ExperimentConfig::new(experiment, out_dir(common.out, experiment.label()));
            cfg.norm = common.norm;
            cfg.seed = common.seed;
            cfg.grid = grid;
            if let Some(m) = margin {
                cfg.margin = m;
            }
            let report = run(&cfg)?;
            println!(
                "{}",
                json!({
                    "command": "reproduce",
                    "experiment": experiment.label(),
                    "cost": report.cost,
                    "passed": report.passed,
                    "failures": report.verification.failures(),
                    "out": cfg.out,
                })
            );
            Ok(report.passed)
        }
        Command::Props { seed, instances, out } => {
            let summary = property_suite(seed, instances)?;
            let out = out_dir(out, "props");
            fs::create_dir_all(&out)?;
            write_json(&out.join("properties.json"), &summary)?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(summary.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let body = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
