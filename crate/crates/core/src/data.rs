//! Batch datasets of (s, a, r, s') items, per-pair index sets, clean-data
//! generation for both victims, and CSV/JSON IO.
//!
//! Rewards are stored exactly as the learner receives them. For LQR data that
//! means r = −L(s, a); the sign flip happens only at generation and at loss
//! estimation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::{simulate, ActionSource, LinearDynamics, QuadraticLoss};
use crate::mdp::FiniteMdp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabularItem {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    state_labels: Vec<String>,
    action_labels: Vec<String>,
    items: Vec<TabularItem>,
}

impl TabularDataset {
    pub fn new(
        state_labels: Vec<String>,
        action_labels: Vec<String>,
        items: Vec<TabularItem>,
    ) -> Result<Self> {
        let (ns, na) = (state_labels.len(), action_labels.len());
        if ns == 0 || na == 0 {
            return Err(Error::arg("a tabular dataset needs at least one state and action"));
        }
        for (t, it) in items.iter().enumerate() {
            if it.s >= ns || it.s_next >= ns || it.a >= na {
                return Err(Error::arg(format!("item {t} references an unknown state or action")));
            }
            if !it.r.is_finite() {
                return Err(Error::arg(format!("item {t} has a non-finite reward")));
            }
        }
        Ok(Self {
            state_labels,
            action_labels,
            items,
        })
    }

    /// Dataset with generated labels `s0, s1, ...` and `a0, a1, ...`.
    pub fn unlabeled(num_states: usize, num_actions: usize, items: Vec<TabularItem>) -> Result<Self> {
        Self::new(
            (0..num_states).map(|s| format!("s{s}")).collect(),
            (0..num_actions).map(|a| format!("a{a}")).collect(),
            items,
        )
    }

    pub fn num_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[TabularItem] {
        &self.items
    }

    pub(crate) fn items_mut(&mut self) -> &mut [TabularItem] {
        &mut self.items
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn action_labels(&self) -> &[String] {
        &self.action_labels
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.r).collect()
    }

    /// Same transitions with the reward vector replaced.
    pub fn with_rewards(&self, rewards: &[f64]) -> Result<Self> {
        if rewards.len() != self.items.len() {
            return Err(Error::shape(format!(
                "{} rewards for {} items",
                rewards.len(),
                self.items.len()
            )));
        }
        let mut out = self.clone();
        for (it, &r) in out.items.iter_mut().zip(rewards) {
            it.r = r;
        }
        Ok(out)
    }

    /// Concatenation of `self` with itself.
    pub fn duplicated(&self) -> Self {
        let mut out = self.clone();
        out.items.extend_from_slice(&self.items);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousItem {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDataset {
    state_dim: usize,
    action_dim: usize,
    items: Vec<ContinuousItem>,
}

impl ContinuousDataset {
    pub fn new(state_dim: usize, action_dim: usize, items: Vec<ContinuousItem>) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::arg("state and action dimensions must be positive"));
        }
        for (t, it) in items.iter().enumerate() {
            if it.s.len() != state_dim || it.s_next.len() != state_dim || it.a.len() != action_dim {
                return Err(Error::shape(format!("item {t} has the wrong dimensions")));
            }
        }
        Ok(Self {
            state_dim,
            action_dim,
            items,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ContinuousItem] {
        &self.items
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.r).collect()
    }

    pub fn with_rewards(&self, rewards: &[f64]) -> Result<Self> {
        if rewards.len() != self.items.len() {
            return Err(Error::shape(format!(
                "{} rewards for {} items",
                rewards.len(),
                self.items.len()
            )));
        }
        let mut out = self.clone();
        for (it, &r) in out.items.iter_mut().zip(rewards) {
            it.r = r;
        }
        Ok(out)
    }
}

/// A dataset of either kind; the two never mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dataset {
    Tabular(TabularDataset),
    Continuous(ContinuousDataset),
}

/// Item indices T_{s,a} for every state-action pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSets {
    num_states: usize,
    num_actions: usize,
    sets: Vec<Vec<usize>>,
}

impl IndexSets {
    pub fn get(&self, s: usize, a: usize) -> &[usize] {
        &self.sets[s * self.num_actions + a]
    }

    pub fn count(&self, s: usize, a: usize) -> usize {
        self.get(s, a).len()
    }

    pub fn min_count(&self) -> usize {
        self.sets.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// First uncovered pair, if any.
    pub fn first_gap(&self) -> Option<(usize, usize)> {
        self.sets
            .iter()
            .position(Vec::is_empty)
            .map(|i| (i / self.num_actions, i % self.num_actions))
    }

    pub fn require_coverage(&self) -> Result<()> {
        match self.first_gap() {
            Some((state, action)) => Err(Error::Coverage { state, action }),
            None => Ok(()),
        }
    }
}

pub fn build_index(dataset: &TabularDataset) -> IndexSets {
    let (ns, na) = (dataset.num_states(), dataset.num_actions());
    let mut sets = vec![Vec::new(); ns * na];
    for (t, it) in dataset.items().iter().enumerate() {
        sets[it.s * na + it.a].push(t);
    }
    IndexSets {
        num_states: ns,
        num_actions: na,
        sets,
    }
}

/// `copies_per_pair` items for every (s, a) with r = R(s, a) and s' drawn
/// from P(·|s, a). Deterministic rows give their exact successor.
pub fn generate_tce_dataset(
    mdp: &FiniteMdp,
    copies_per_pair: usize,
    seed: u64,
    state_labels: Option<Vec<String>>,
    action_labels: Option<Vec<String>>,
) -> Result<TabularDataset> {
    if copies_per_pair == 0 {
        return Err(Error::arg("copies_per_pair must be at least 1"));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(ns * na * copies_per_pair);
    for s in 0..ns {
        for a in 0..na {
            let det = mdp.transition.deterministic_successor(s, a);
            let dist = match det {
                Some(_) => None,
                None => Some(
                    WeightedIndex::new(mdp.transition.row(s, a))
                        .map_err(|e| Error::arg(format!("bad transition row: {e}")))?,
                ),
            };
            for _ in 0..copies_per_pair {
                let s_next = match (&det, &dist) {
                    (Some(sn), _) => *sn,
                    (None, Some(d)) => d.sample(&mut rng),
                    (None, None) => unreachable!(),
                };
                items.push(TabularItem {
                    s,
                    a,
                    r: mdp.reward.get(s, a),
                    s_next,
                });
            }
        }
    }
    let states = state_labels.unwrap_or_else(|| (0..ns).map(|s| format!("s{s}")).collect());
    let actions = action_labels.unwrap_or_else(|| (0..na).map(|a| format!("a{a}")).collect());
    if states.len() != ns || actions.len() != na {
        return Err(Error::shape("label count does not match the MDP"));
    }
    TabularDataset::new(states, actions, items)
}

/// Single rollout from `s0` with actions drawn uniformly from the unit ball;
/// r_t = −L(s_t, a_t).
pub fn generate_lqr_dataset(
    dynamics: &LinearDynamics,
    loss: &QuadraticLoss,
    s0: &DVector<f64>,
    steps: usize,
    seed: u64,
) -> Result<ContinuousDataset> {
    generate_lqr_episodes(dynamics, loss, s0, steps, 1, seed)
}

/// `episodes` independent rollouts of `steps` items each, all from `s0`.
pub fn generate_lqr_episodes(
    dynamics: &LinearDynamics,
    loss: &QuadraticLoss,
    s0: &DVector<f64>,
    steps: usize,
    episodes: usize,
    seed: u64,
) -> Result<ContinuousDataset> {
    if episodes == 0 {
        return Err(Error::arg("episodes must be at least 1"));
    }
    let mut items = Vec::with_capacity(steps * episodes);
    for e in 0..episodes {
        let traj = simulate(
            dynamics,
            &ActionSource::UniformBall,
            loss,
            s0,
            steps,
            seed.wrapping_add(e as u64),
        )?;
        items.extend(traj.into_iter().map(|st| ContinuousItem {
            s: st.s.as_slice().to_vec(),
            a: st.a.as_slice().to_vec(),
            r: st.r,
            s_next: st.s_next.as_slice().to_vec(),
        }));
    }
    ContinuousDataset::new(dynamics.state_dim(), dynamics.action_dim(), items)
}

/// 17 significant digits; parses back to the identical f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

const TABULAR_HEADER: [&str; 4] = ["state", "action", "reward", "next_state"];

pub fn write_tabular_csv<W: Write>(dataset: &TabularDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABULAR_HEADER).map_err(csv_io)?;
    for it in dataset.items() {
        w.write_record([
            dataset.state_labels[it.s].as_str(),
            dataset.action_labels[it.a].as_str(),
            &fmt_f64(it.r),
            dataset.state_labels[it.s_next].as_str(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn continuous_header(n: usize, m: usize) -> Vec<String> {
    (0..n)
        .map(|i| format!("s{i}"))
        .chain((0..m).map(|i| format!("a{i}")))
        .chain(std::iter::once("reward".to_string()))
        .chain((0..n).map(|i| format!("next_s{i}")))
        .collect()
}

pub fn write_continuous_csv<W: Write>(dataset: &ContinuousDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(continuous_header(dataset.state_dim, dataset.action_dim))
        .map_err(csv_io)?;
    for it in dataset.items() {
        let row: Vec<String> = it
            .s
            .iter()
            .chain(&it.a)
            .chain(std::iter::once(&it.r))
            .chain(&it.s_next)
            .map(|&x| fmt_f64(x))
            .collect();
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn csv_parse(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Reads a CSV dataset; the header row decides the kind.
pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_parse)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    if header == TABULAR_HEADER {
        read_tabular_records(rdr).map(Dataset::Tabular)
    } else {
        read_continuous_records(rdr, &header).map(Dataset::Continuous)
    }
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("column {column}: '{field}' is not a number"),
    })
}

fn read_tabular_records<R: Read>(mut rdr: csv::Reader<R>) -> Result<TabularDataset> {
    let mut states: Vec<String> = Vec::new();
    let mut actions: Vec<String> = Vec::new();
    let intern = |labels: &mut Vec<String>, l: &str| -> usize {
        match labels.iter().position(|x| x == l) {
            Some(i) => i,
            None => {
                labels.push(l.to_string());
                labels.len() - 1
            }
        }
    };
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_parse)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let s = intern(&mut states, &rec[0]);
        let a = intern(&mut actions, &rec[1]);
        let r = parse_f64(&rec[2], line, "reward")?;
        let s_next = intern(&mut states, &rec[3]);
        items.push(TabularItem { s, a, r, s_next });
    }
    if items.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "dataset has no items".into(),
        });
    }
    TabularDataset::new(states, actions, items)
}

fn read_continuous_records<R: Read>(
    mut rdr: csv::Reader<R>,
    header: &[String],
) -> Result<ContinuousDataset> {
    let n = header.iter().filter(|h| is_indexed(h, "s")).count();
    let m = header.iter().filter(|h| is_indexed(h, "a")).count();
    if n == 0 || m == 0 || header != continuous_header(n, m).as_slice() {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "unrecognised header; expected '{}' or 's0..,a0..,reward,next_s0..'",
                TABULAR_HEADER.join(",")
            ),
        });
    }
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_parse)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 * n + m + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", 2 * n + m + 1, rec.len()),
            });
        }
        let vals = rec
            .iter()
            .zip(header)
            .map(|(f, h)| parse_f64(f, line, h))
            .collect::<Result<Vec<f64>>>()?;
        items.push(ContinuousItem {
            s: vals[..n].to_vec(),
            a: vals[n..n + m].to_vec(),
            r: vals[n + m],
            s_next: vals[n + m + 1..].to_vec(),
        });
    }
    if items.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "dataset has no items".into(),
        });
    }
    ContinuousDataset::new(n, m, items)
}

fn is_indexed(h: &str, prefix: &str) -> bool {
    h.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads CSV, or JSON when the extension is `.json`.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = BufReader::new(File::open(path)?);
    if is_json(path) {
        Ok(serde_json::from_reader(file)?)
    } else {
        read_csv(file)
    }
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = BufWriter::new(File::create(path)?);
    if is_json(path) {
        serde_json::to_writer_pretty(file, dataset)?;
        Ok(())
    } else {
        match dataset {
            Dataset::Tabular(d) => write_tabular_csv(d, file),
            Dataset::Continuous(d) => write_continuous_csv(d, file),
        }
    }
}
