//! Certainty-equivalent LQR learner: least-squares system identification,
//! PSD-constrained quadratic loss fitting, then the discounted Riccati policy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{sym_offset, ConicProgram, SolveOptions};
use crate::data::ContinuousDataset;
use crate::error::{Error, Result};
use crate::lqr::{
    lqr_solution, min_eigenvalue, ControlPolicy, LinearDynamics, QuadraticLoss, RiccatiSolution,
};

/// Relative singular-value cutoff, multiplied by the column count.
const RANK_RTOL: f64 = 1e-10;
/// Slack allowed on the PSD constraints before the constrained fit is used.
const PSD_SLACK: f64 = 1e-8;

fn numerical_rank(sv: &DVector<f64>, cols: usize) -> (usize, f64) {
    let smax = sv.max();
    let threshold = smax * RANK_RTOL * cols as f64;
    (sv.iter().filter(|&&s| s > threshold).count(), threshold)
}

/// Least-squares (Â, B̂) minimizing Σ‖A s_t + B a_t − s_{t+1}‖².
pub fn sysid(dataset: &ContinuousDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, m, t) = (dataset.state_dim(), dataset.action_dim(), dataset.len());
    if t < n + m {
        return Err(Error::NotIdentifiable(format!(
            "{t} items cannot identify {} unknowns per state",
            n + m
        )));
    }
    let z = DMatrix::from_fn(t, n + m, |i, j| {
        let it = &dataset.items()[i];
        if j < n {
            it.s[j]
        } else {
            it.a[j - n]
        }
    });
    let y = DMatrix::from_fn(t, n, |i, j| dataset.items()[i].s_next[j]);
    let svd = z.svd(true, true);
    let (rank, threshold) = numerical_rank(&svd.singular_values, n + m);
    if rank < n + m {
        return Err(Error::NotIdentifiable(format!(
            "state-action matrix has rank {rank} < {}",
            n + m
        )));
    }
    let theta = svd
        .solve(&y, threshold)
        .map_err(|e| Error::NotIdentifiable(e.to_string()))?;
    let theta_t = theta.transpose();
    Ok((
        theta_t.columns(0, n).into_owned(),
        theta_t.columns(n, m).into_owned(),
    ))
}

/// Design matrix for the loss fit. Each row holds, for one item,
/// the coefficients of L(s, a) = ½ s'Qs + q's + a'Ra + c in the parameters
/// (upper triangle of Q by column, upper triangle of R by column, q, c).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub matrix: DMatrix<f64>,
    pub state_dim: usize,
    pub action_dim: usize,
}

pub fn tri(n: usize) -> usize {
    n * (n + 1) / 2
}

impl FeatureMatrix {
    pub fn column_count(n: usize, m: usize) -> usize {
        tri(n) + tri(m) + n + 1
    }

    pub fn feature_row(s: &[f64], a: &[f64]) -> Vec<f64> {
        let (n, m) = (s.len(), a.len());
        let mut row = vec![0.0; Self::column_count(n, m)];
        for j in 0..n {
            for i in 0..=j {
                row[sym_offset(i, j)] = if i == j { 0.5 * s[i] * s[i] } else { s[i] * s[j] };
            }
        }
        let off = tri(n);
        for j in 0..m {
            for i in 0..=j {
                row[off + sym_offset(i, j)] = if i == j { a[i] * a[i] } else { 2.0 * a[i] * a[j] };
            }
        }
        let off = off + tri(m);
        row[off..off + n].copy_from_slice(s);
        row[off + n] = 1.0;
        row
    }

    pub fn build(dataset: &ContinuousDataset) -> Self {
        let (n, m) = (dataset.state_dim(), dataset.action_dim());
        let cols = Self::column_count(n, m);
        let mut matrix = DMatrix::zeros(dataset.len(), cols);
        for (t, it) in dataset.items().iter().enumerate() {
            let row = Self::feature_row(&it.s, &it.a);
            for (j, v) in row.into_iter().enumerate() {
                matrix[(t, j)] = v;
            }
        }
        Self {
            matrix,
            state_dim: n,
            action_dim: m,
        }
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Parameter vector of a loss, in column order.
    pub fn params_of(loss: &QuadraticLoss) -> DVector<f64> {
        let (n, m) = (loss.state_dim(), loss.action_dim());
        let mut theta = DVector::zeros(Self::column_count(n, m));
        for j in 0..n {
            for i in 0..=j {
                theta[sym_offset(i, j)] = loss.q_mat[(i, j)];
            }
        }
        let off = tri(n);
        for j in 0..m {
            for i in 0..=j {
                theta[off + sym_offset(i, j)] = loss.r_mat[(i, j)];
            }
        }
        let off = off + tri(m);
        theta.rows_mut(off, n).copy_from(&loss.q_vec);
        theta[off + n] = loss.c;
        theta
    }

    /// Loss described by a parameter vector; shapes only, no PSD checks.
    pub fn loss_of(&self, theta: &DVector<f64>) -> QuadraticLoss {
        let (n, m) = (self.state_dim, self.action_dim);
        let off_r = tri(n);
        let off_q = off_r + tri(m);
        QuadraticLoss {
            q_mat: DMatrix::from_fn(n, n, |i, j| theta[sym_offset(i, j)]),
            r_mat: DMatrix::from_fn(m, m, |i, j| theta[off_r + sym_offset(i, j)]),
            q_vec: theta.rows(off_q, n).into_owned(),
            c: theta[off_q + n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub rows: usize,
    pub columns: usize,
    pub rank: usize,
    pub singular_max: f64,
    pub singular_min: f64,
    pub threshold: f64,
    pub unique: bool,
}

/// The loss fit has a unique solution iff the design matrix has full
/// column rank.
pub fn check_uniqueness(dataset: &ContinuousDataset) -> UniquenessReport {
    let phi = FeatureMatrix::build(dataset);
    let cols = phi.ncols();
    let rows = phi.matrix.nrows();
    let sv = phi.matrix.svd(false, false).singular_values;
    let (rank, threshold) = if sv.is_empty() { (0, 0.0) } else { numerical_rank(&sv, cols) };
    UniquenessReport {
        rows,
        columns: cols,
        rank,
        singular_max: sv.iter().copied().fold(0.0, f64::max),
        singular_min: if sv.len() < cols { 0.0 } else { sv.min() },
        threshold,
        unique: rank == cols,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub loss: QuadraticLoss,
    /// ‖Φθ + r‖₂ at the estimate.
    pub residual: f64,
    pub unique: bool,
    /// True when the PSD constraints were active and the conic fit was used.
    pub constrained: bool,
}

fn fit_residual(phi: &FeatureMatrix, theta: &DVector<f64>, rewards: &DVector<f64>) -> f64 {
    (&phi.matrix * theta + rewards).norm()
}

/// min Σ (L_θ(s_t, a_t) + r_t)² subject to Q ⪰ 0 and R ⪰ εI.
///
/// The unconstrained least-squares fit is returned when it already meets
/// both constraints; otherwise the constrained program is solved.
pub fn estimate_loss(dataset: &ContinuousDataset, eps: f64) -> Result<LossEstimate> {
    if dataset.is_empty() {
        return Err(Error::arg("cannot fit a loss to an empty dataset"));
    }
    if !(eps >= 0.0) {
        return Err(Error::arg("margin must be non-negative"));
    }
    let phi = FeatureMatrix::build(dataset);
    let rewards = DVector::from_vec(dataset.rewards());
    let cols = phi.ncols();
    let svd = phi.matrix.clone().svd(true, true);
    let (rank, threshold) = numerical_rank(&svd.singular_values, cols);
    let unique = rank == cols;
    let theta = svd
        .solve(&(-&rewards), threshold)
        .map_err(|e| Error::Solver(e.to_string()))?;
    let loss = phi.loss_of(&theta);
    if min_eigenvalue(&loss.q_mat) >= -PSD_SLACK && min_eigenvalue(&loss.r_mat) - eps >= -PSD_SLACK {
        return Ok(LossEstimate {
            residual: fit_residual(&phi, &theta, &rewards),
            loss,
            unique,
            constrained: false,
        });
    }
    let theta = constrained_fit(&phi, &rewards, eps)?;
    Ok(LossEstimate {
        residual: fit_residual(&phi, &theta, &rewards),
        loss: phi.loss_of(&theta),
        unique,
        constrained: true,
    })
}

fn constrained_fit(phi: &FeatureMatrix, rewards: &DVector<f64>, eps: f64) -> Result<DVector<f64>> {
    let (n, m) = (phi.state_dim, phi.action_dim);
    let t = rewards.len();
    let mut prog = ConicProgram::new();
    let q = prog.add_symmetric("Q", n);
    let r = prog.add_symmetric("R", m);
    let _q_lin = prog.add_vector("q", n);
    let c = prog.add_vector("c", 1);
    let e = prog.add_vector("residual", t);
    // the parameter blocks are laid out contiguously in feature order
    let theta_off = prog.block(q).offset;
    debug_assert_eq!(prog.block(c).offset + 1 - theta_off, phi.ncols());
    for i in 0..t {
        // e_t − φ_t·θ = r_t
        let mut terms = vec![(prog.var(e, i), 1.0)];
        terms.extend((0..phi.ncols()).map(|j| (theta_off + j, -phi.matrix[(i, j)])));
        prog.add_equality(terms, rewards[i])?;
    }
    prog.require_psd(q, 0.0)?;
    prog.require_psd(r, eps)?;
    prog.set_least_squares_objective(e, vec![0.0; t])?;
    let opts = SolveOptions {
        feas_tol: 1e-9,
        opt_tol: 1e-10,
        max_iter: 400,
        polish_equalities: true,
        cone_margin: 0.0,
    };
    let sol = prog.solve(&opts)?;
    // the residual block is only auxiliary; accept near-optimal fits whose
    // constraints hold
    let sol = if sol.audit.max() <= 1e-7 {
        sol
    } else {
        sol.require_optimal("loss estimation")?
    };
    Ok(DVector::from_column_slice(&sol.x[theta_off..theta_off + phi.ncols()]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrLearned {
    pub dynamics: LinearDynamics,
    pub estimate: LossEstimate,
    pub policy: ControlPolicy,
    pub riccati: RiccatiSolution,
}

/// System identification, loss estimation, then the certainty-equivalent
/// policy on the estimates.
pub fn learn_policy(dataset: &ContinuousDataset, gamma: f64, eps: f64) -> Result<LqrLearned> {
    let (a, b) = sysid(dataset)?;
    let estimate = estimate_loss(dataset, eps)?;
    if !estimate.unique {
        return Err(Error::NotIdentifiable(
            "loss features are rank deficient; the loss estimate is not unique".into(),
        ));
    }
    let dynamics = LinearDynamics::new(a, b, 0.0)?;
    let (policy, riccati) = lqr_solution(&dynamics, &estimate.loss, gamma)?;
    Ok(LqrLearned {
        dynamics,
        estimate,
        policy,
        riccati,
    })
}
