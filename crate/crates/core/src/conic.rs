//! Small conic-program layer: norm or linear objective, linear equalities and
//! inequalities, PSD membership of symmetric matrix blocks.
//!
//! Programs are solved with the Clarabel interior-point solver and every
//! answer is re-audited here constraint by constraint before it is reported
//! as optimal.
//!
//! Symmetric blocks store their upper triangle column by column, entry (i, j)
//! with i ≤ j at offset j(j+1)/2 + i, unscaled.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FEAS_TOL: f64 = 1e-8;
pub const DEFAULT_OPT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Vector,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    /// Vector length, or matrix side for symmetric blocks.
    pub dim: usize,
    pub offset: usize,
}

impl Block {
    pub fn size(&self) -> usize {
        match self.kind {
            BlockKind::Vector => self.dim,
            BlockKind::Symmetric => self.dim * (self.dim + 1) / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockId(pub usize);

/// Entry index of (i, j) inside a symmetric block's storage.
pub fn sym_offset(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

fn merge_terms(terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
    for (k, a) in terms {
        *merged.entry(k).or_insert(0.0) += a;
    }
    merged.into_iter().filter(|t| t.1 != 0.0).collect()
}

/// Norm order of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

impl Norm {
    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// 1/α, zero for the max norm.
    pub fn inverse_order(self) -> f64 {
        match self {
            Norm::L1 => 1.0,
            Norm::L2 => 0.5,
            Norm::LInf => 0.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Norm::L1 => "1",
            Norm::L2 => "2",
            Norm::LInf => "inf",
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" | "max" => Ok(Norm::LInf),
            _ => Err(Error::arg(format!("unknown norm '{s}'; use 1, 2 or inf"))),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Sparse row a·x compared with `rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(k, a)| a * x[k]).sum()
    }

    /// |a·x − b| relative to the magnitude of the terms involved.
    fn scaled_violation(&self, x: &[f64], one_sided: bool) -> f64 {
        let lhs = self.eval(x);
        let scale = 1.0
            + self
                .terms
                .iter()
                .fold(0.0f64, |m, &(k, a)| m.max((a * x[k]).abs()))
            + self.rhs.abs();
        let gap = lhs - self.rhs;
        let v = if one_sided { gap.max(0.0) } else { gap.abs() };
        v / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormObjective {
    pub norm: Norm,
    pub block: BlockId,
    pub reference: Vec<f64>,
}

/// Symmetric block minus `shift`·I must be PSD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdConstraint {
    pub block: BlockId,
    pub shift: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    blocks: Vec<Block>,
    objective: Option<NormObjective>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    squares: Option<(BlockId, Vec<f64>)>,
    linear_objective: Vec<(usize, f64)>,
    equalities: Vec<LinearRow>,
    inequalities: Vec<LinearRow>,
    psd: Vec<PsdConstraint>,
}

/// Counts describing the assembled program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramShape {
    pub variables: usize,
    pub equalities: usize,
    pub inequalities: usize,
    pub psd_blocks: usize,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_block(&mut self, name: &str, kind: BlockKind, dim: usize) -> BlockId {
        let offset = self.num_variables();
        self.blocks.push(Block {
            name: name.to_string(),
            kind,
            dim,
            offset,
        });
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_vector(&mut self, name: &str, len: usize) -> BlockId {
        self.push_block(name, BlockKind::Vector, len)
    }

    pub fn add_symmetric(&mut self, name: &str, dim: usize) -> BlockId {
        self.push_block(name, BlockKind::Symmetric, dim)
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.0]
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_variables(&self) -> usize {
        self.blocks.iter().map(Block::size).sum()
    }

    /// Global index of element `i` of a vector block.
    pub fn var(&self, id: BlockId, i: usize) -> usize {
        let b = self.block(id);
        debug_assert!(b.kind == BlockKind::Vector && i < b.dim);
        b.offset + i
    }

    /// Global index of entry (i, j) of a symmetric block.
    pub fn sym(&self, id: BlockId, i: usize, j: usize) -> usize {
        let b = self.block(id);
        debug_assert!(b.kind == BlockKind::Symmetric && i < b.dim && j < b.dim);
        b.offset + sym_offset(i, j)
    }

    fn check_terms(&self, terms: &[(usize, f64)], rhs: f64) -> Result<()> {
        let n = self.num_variables();
        if terms.iter().any(|&(k, a)| k >= n || !a.is_finite()) || !rhs.is_finite() {
            return Err(Error::arg("linear row references an unknown variable or is not finite"));
        }
        Ok(())
    }

    /// Adds a·x = b. Repeated indices are summed, zero coefficients dropped.
    pub fn add_equality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> Result<()> {
        self.check_terms(&terms, rhs)?;
        self.equalities.push(LinearRow {
            terms: merge_terms(terms),
            rhs,
        });
        Ok(())
    }

    /// Adds a·x ≤ b.
    pub fn add_inequality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> Result<()> {
        self.check_terms(&terms, rhs)?;
        self.inequalities.push(LinearRow {
            terms: merge_terms(terms),
            rhs,
        });
        Ok(())
    }

    pub fn require_psd(&mut self, id: BlockId, shift: f64) -> Result<()> {
        if self.block(id).kind != BlockKind::Symmetric {
            return Err(Error::arg("PSD constraints apply to symmetric blocks only"));
        }
        self.psd.push(PsdConstraint { block: id, shift });
        Ok(())
    }

    /// Objective ‖block − reference‖_norm.
    pub fn set_norm_objective(&mut self, norm: Norm, id: BlockId, reference: Vec<f64>) -> Result<()> {
        let b = self.block(id);
        if b.kind != BlockKind::Vector || b.dim != reference.len() {
            return Err(Error::shape("norm objective needs a vector block of matching length"));
        }
        self.squares = None;
        self.objective = Some(NormObjective {
            norm,
            block: id,
            reference,
        });
        Ok(())
    }

    /// Objective ½‖block − reference‖₂², solved as a QP. Replaces any norm
    /// objective.
    pub fn set_least_squares_objective(&mut self, id: BlockId, reference: Vec<f64>) -> Result<()> {
        let b = self.block(id);
        if b.kind != BlockKind::Vector || b.dim != reference.len() {
            return Err(Error::shape("least-squares objective needs a vector block of matching length"));
        }
        self.objective = None;
        self.squares = Some((id, reference));
        Ok(())
    }

    pub fn add_linear_objective(&mut self, index: usize, coef: f64) -> Result<()> {
        self.check_terms(&[(index, coef)], 0.0)?;
        self.linear_objective.push((index, coef));
        Ok(())
    }

    pub fn equalities(&self) -> &[LinearRow] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[LinearRow] {
        &self.inequalities
    }

    pub fn psd_constraints(&self) -> &[PsdConstraint] {
        &self.psd
    }

    pub fn norm_objective(&self) -> Option<&NormObjective> {
        self.objective.as_ref()
    }

    pub fn shape(&self) -> ProgramShape {
        ProgramShape {
            variables: self.num_variables(),
            equalities: self.equalities.len(),
            inequalities: self.inequalities.len(),
            psd_blocks: self.psd.len(),
        }
    }

    /// Structural convexity check: the objective is a norm of an affine map
    /// plus a linear term, every constraint row is linear, and every cone is
    /// a PSD cone on a symmetric block.
    pub fn is_convex_form(&self) -> bool {
        let n = self.num_variables();
        let rows_ok = self
            .equalities
            .iter()
            .chain(&self.inequalities)
            .all(|r| r.terms.iter().all(|&(k, a)| k < n && a.is_finite()));
        let cones_ok = self
            .psd
            .iter()
            .all(|c| self.block(c.block).kind == BlockKind::Symmetric && c.shift.is_finite());
        let vector_of = |id: BlockId, len: usize| {
            id.0 < self.blocks.len()
                && self.block(id).kind == BlockKind::Vector
                && self.block(id).dim == len
        };
        let obj_ok = self.objective.as_ref().is_none_or(|o| vector_of(o.block, o.reference.len()))
            && self.squares.as_ref().is_none_or(|(id, r)| vector_of(*id, r.len()));
        rows_ok && cones_ok && obj_ok
    }

    /// Objective value at `x` evaluated directly (no epigraph variables).
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear_objective.iter().map(|&(k, c)| c * x[k]).sum();
        let norm = self.objective.as_ref().map_or(0.0, |o| {
            let off = self.block(o.block).offset;
            let diff: Vec<f64> = o.reference.iter().enumerate().map(|(i, r)| x[off + i] - r).collect();
            o.norm.eval(&diff)
        });
        let squares = self.squares.as_ref().map_or(0.0, |(id, reference)| {
            let off = self.block(*id).offset;
            0.5 * reference.iter().enumerate().map(|(i, r)| (x[off + i] - r).powi(2)).sum::<f64>()
        });
        lin + norm + squares
    }

    /// Values of a vector block.
    pub fn vector_value(&self, x: &[f64], id: BlockId) -> DVector<f64> {
        let b = self.block(id);
        DVector::from_column_slice(&x[b.offset..b.offset + b.dim])
    }

    /// Values of a symmetric block as a full matrix.
    pub fn matrix_value(&self, x: &[f64], id: BlockId) -> DMatrix<f64> {
        let b = self.block(id);
        DMatrix::from_fn(b.dim, b.dim, |i, j| x[b.offset + sym_offset(i, j)])
    }

    /// Writes a full symmetric matrix into the storage of block `id`.
    pub fn store_matrix(&self, x: &mut [f64], id: BlockId, m: &DMatrix<f64>) {
        let b = self.block(id);
        for j in 0..b.dim {
            for i in 0..=j {
                x[b.offset + sym_offset(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
    }

    pub fn store_vector(&self, x: &mut [f64], id: BlockId, v: &[f64]) {
        let b = self.block(id);
        x[b.offset..b.offset + b.dim].copy_from_slice(v);
    }

    /// Constraint-by-constraint audit of a candidate point.
    pub fn audit(&self, x: &[f64]) -> Audit {
        let eq = self
            .equalities
            .iter()
            .map(|r| r.scaled_violation(x, false))
            .fold(0.0, f64::max);
        let ineq = self
            .inequalities
            .iter()
            .map(|r| r.scaled_violation(x, true))
            .fold(0.0, f64::max);
        let psd = self
            .psd
            .iter()
            .map(|c| {
                let m = self.matrix_value(x, c.block);
                let scale = 1.0 + m.amax();
                let shifted = m - DMatrix::identity(self.block(c.block).dim, self.block(c.block).dim) * c.shift;
                (-shifted.symmetric_eigenvalues().min()).max(0.0) / scale
            })
            .fold(0.0, f64::max);
        Audit {
            equality: eq,
            inequality: ineq,
            psd,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ConicProgram = serde_json::from_str(text)?;
        let mut offset = 0;
        for b in &p.blocks {
            if b.offset != offset {
                return Err(Error::arg("block offsets are inconsistent"));
            }
            offset += b.size();
        }
        if !p.is_convex_form() {
            return Err(Error::arg("program is malformed"));
        }
        Ok(p)
    }

    /// Solves the program. Status `Optimal` is only reported when the audit
    /// passes at `feas_tol`.
    ///
    /// The backend measures feasibility relative to the problem scale, so a
    /// point it accepts can still miss the absolute audit. That case is
    /// re-solved once with the backend tolerance tightened a hundredfold.
    pub fn solve(&self, opts: &SolveOptions) -> Result<ConicSolution> {
        if !self.is_convex_form() {
            return Err(Error::arg("program is malformed"));
        }
        if !(opts.cone_margin >= 0.0) {
            return Err(Error::arg("cone margin must be non-negative"));
        }
        let first = self.solve_once(opts, opts.feas_tol)?;
        let near_miss = first.status == SolveStatus::ToleranceFailure
            && matches!(first.solver_status.as_str(), "Solved" | "AlmostSolved");
        if !near_miss {
            return Ok(first);
        }
        let second = self.solve_once(opts, opts.feas_tol * 1e-2)?;
        Ok(if second.status == SolveStatus::Optimal { second } else { first })
    }

    fn solve_once(&self, opts: &SolveOptions, backend_feas_tol: f64) -> Result<ConicSolution> {
        let assembled = self.assemble(opts.cone_margin);
        let settings = DefaultSettings {
            verbose: false,
            max_iter: opts.max_iter,
            tol_feas: backend_feas_tol,
            tol_gap_abs: opts.opt_tol,
            tol_gap_rel: opts.opt_tol,
            tol_ktratio: opts.opt_tol.min(1e-6),
            presolve_enable: false,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(
            &assembled.p,
            &assembled.q,
            &assembled.a,
            &assembled.b,
            &assembled.cones,
            settings,
        )
        .map_err(|e| Error::Solver(format!("solver setup failed: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let n = self.num_variables();
        let mut x: Vec<f64> = sol.x[..n].to_vec();
        let raw_status = format!("{:?}", sol.status);
        let gap = (sol.obj_val - sol.obj_val_dual).abs();
        let status = match sol.status {
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            _ => SolveStatus::ToleranceFailure,
        };
        if status == SolveStatus::Infeasible {
            return Ok(ConicSolution {
                status,
                objective: f64::NAN,
                x,
                audit: Audit::default(),
                duality_gap: gap,
                iterations: sol.iterations,
                solver_status: raw_status,
                polished: false,
            });
        }
        let mut polished = false;
        if opts.polish_equalities && !self.equalities.is_empty() {
            if let Some(p) = self.polish(&x) {
                let before = self.audit(&x);
                let after = self.audit(&p);
                if after.equality <= before.equality
                    && after.psd <= before.psd.max(opts.feas_tol)
                    && after.inequality <= before.inequality.max(opts.feas_tol)
                {
                    x = p;
                    polished = true;
                }
            }
        }
        let audit = self.audit(&x);
        let objective = self.objective_value(&x);
        let gap_ok = gap <= 10.0 * opts.opt_tol * (1.0 + objective.abs());
        let status = if status == SolveStatus::Optimal && audit.max() <= opts.feas_tol && gap_ok {
            SolveStatus::Optimal
        } else {
            SolveStatus::ToleranceFailure
        };
        Ok(ConicSolution {
            status,
            objective,
            x,
            audit,
            duality_gap: gap,
            iterations: sol.iterations,
            solver_status: raw_status,
            polished,
        })
    }

    /// Minimum-norm correction of `x` onto the equality affine set.
    fn polish(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = self.num_variables();
        let m = self.equalities.len();
        let mut a = DMatrix::zeros(m, n);
        let mut res = DVector::zeros(m);
        for (i, row) in self.equalities.iter().enumerate() {
            for &(k, v) in &row.terms {
                a[(i, k)] += v;
            }
            res[i] = row.eval(x) - row.rhs;
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let pinv_tol = smax * 1e-12 * (m.max(n) as f64);
        let step = svd.solve(&res, pinv_tol).ok()?;
        let out: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi - si).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }

    fn assemble(&self, cone_margin: f64) -> Assembled {
        let n = self.num_variables();
        let mut rows: Vec<usize> = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones = Vec::new();
        let mut push_row = |terms: &[(usize, f64)], rhs: f64, b: &mut Vec<f64>| {
            let r = b.len();
            for &(k, a) in terms {
                rows.push(r);
                cols.push(k);
                vals.push(a);
            }
            b.push(rhs);
        };

        // auxiliary epigraph variables follow the program variables
        let (aux, mut q) = match &self.objective {
            None => (0, vec![0.0; n]),
            Some(o) => {
                let aux = match o.norm {
                    Norm::L1 => o.reference.len(),
                    Norm::L2 | Norm::LInf => 1,
                };
                let mut q = vec![0.0; n + aux];
                q[n..].iter_mut().for_each(|c| *c = 1.0);
                (aux, q)
            }
        };
        for &(k, c) in &self.linear_objective {
            q[k] += c;
        }
        let total = n + aux;
        let p = match &self.squares {
            None => CscMatrix::zeros((total, total)),
            Some((id, reference)) => {
                let off = self.block(*id).offset;
                let idx: Vec<usize> = (off..off + reference.len()).collect();
                for (i, r) in reference.iter().enumerate() {
                    q[off + i] -= r;
                }
                CscMatrix::new_from_triplets(total, total, idx.clone(), idx, vec![1.0; reference.len()])
            }
        };

        if !self.equalities.is_empty() {
            for r in &self.equalities {
                push_row(&r.terms, r.rhs, &mut b);
            }
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }

        let mut nonneg = 0;
        for r in &self.inequalities {
            push_row(&r.terms, r.rhs, &mut b);
            nonneg += 1;
        }
        let mut soc = None;
        if let Some(o) = &self.objective {
            let off = self.block(o.block).offset;
            match o.norm {
                Norm::L1 => {
                    // ±(r_i − r⁰_i) ≤ u_i
                    for (i, &r0) in o.reference.iter().enumerate() {
                        push_row(&[(off + i, 1.0), (n + i, -1.0)], r0, &mut b);
                        push_row(&[(off + i, -1.0), (n + i, -1.0)], -r0, &mut b);
                        nonneg += 2;
                    }
                }
                Norm::LInf => {
                    for (i, &r0) in o.reference.iter().enumerate() {
                        push_row(&[(off + i, 1.0), (n, -1.0)], r0, &mut b);
                        push_row(&[(off + i, -1.0), (n, -1.0)], -r0, &mut b);
                        nonneg += 2;
                    }
                }
                Norm::L2 => {
                    soc = Some((off, o.reference.clone()));
                }
            }
        }
        if nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg));
        }
        if let Some((off, reference)) = soc {
            // s = (t, r − r⁰) in the second-order cone
            push_row(&[(n, -1.0)], 0.0, &mut b);
            for (i, &r0) in reference.iter().enumerate() {
                push_row(&[(off + i, -1.0)], -r0, &mut b);
            }
            cones.push(SupportedConeT::SecondOrderConeT(reference.len() + 1));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for c in &self.psd {
            let blk = self.block(c.block);
            for j in 0..blk.dim {
                for i in 0..=j {
                    let k = blk.offset + sym_offset(i, j);
                    if i == j {
                        push_row(&[(k, -1.0)], -(c.shift + cone_margin), &mut b);
                    } else {
                        push_row(&[(k, -sqrt2)], 0.0, &mut b);
                    }
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(blk.dim));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, total, rows, cols, vals);
        Assembled {
            p,
            q,
            a,
            b,
            cones,
        }
    }
}

struct Assembled {
    p: CscMatrix<f64>,
    q: Vec<f64>,
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: u32,
    /// Project the solution onto the equality constraints afterwards.
    pub polish_equalities: bool,
    /// Extra shift handed to the solver for every PSD cone. Interior-point
    /// iterates end slightly outside a cone whose boundary is active; a small
    /// margin keeps the returned point inside the original cone.
    #[serde(default)]
    pub cone_margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: DEFAULT_FEAS_TOL,
            opt_tol: DEFAULT_OPT_TOL,
            max_iter: 200,
            polish_equalities: false,
            cone_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    ToleranceFailure,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::ToleranceFailure => "tolerance_failure",
        }
    }
}

/// Scaled worst violations per constraint class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub equality: f64,
    pub inequality: f64,
    pub psd: f64,
}

impl Audit {
    pub fn max(&self) -> f64 {
        self.equality.max(self.inequality).max(self.psd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub audit: Audit,
    pub duality_gap: f64,
    pub iterations: u32,
    pub solver_status: String,
    pub polished: bool,
}

impl ConicSolution {
    pub fn primal_residual(&self) -> f64 {
        self.audit.max()
    }

    /// Maps non-optimal outcomes to errors.
    pub fn require_optimal(self, context: &str) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible(format!(
                "{context}: solver status {}",
                self.solver_status
            ))),
            SolveStatus::ToleranceFailure => Err(Error::Solver(format!(
                "{context}: solver status {}, worst violation {:.3e}, gap {:.3e}",
                self.solver_status,
                self.audit.max(),
                self.duality_gap
            ))),
        }
    }
}
