//! Block-diagonal semidefinite programs.
//!
//! A [`SdpProblem`] is stated in equality form: PSD matrix blocks, free
//! scalars and nonnegative scalars, linked by linear equalities, with a
//! linear objective. Coefficients on a block entry `(i, j)` with `i <= j`
//! multiply the entry value `X[i][j]` (equal to `X[j][i]`), so
//! `X[0][1] == 1` is written as a single term with coefficient `1.0`.

mod ipm;
pub mod sdpa;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ipm::InteriorPoint;

/// A scalar decision variable of an [`SdpProblem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarRef {
    /// Entry `(i, j)`, `i <= j`, of PSD block `block`.
    Entry {
        block: usize,
        i: usize,
        j: usize,
    },
    Free(usize),
    Nonneg(usize),
}

impl VarRef {
    /// Entry reference with the indices put in upper-triangular order.
    pub fn entry(block: usize, i: usize, j: usize) -> Self {
        VarRef::Entry {
            block,
            i: i.min(j),
            j: i.max(j),
        }
    }
}

pub type LinearTerms = Vec<(VarRef, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub terms: LinearTerms,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub psd_blocks: Vec<PsdBlock>,
    pub free_vars: Vec<String>,
    pub nonneg_vars: Vec<String>,
    pub equalities: Vec<Equality>,
    pub objective: LinearTerms,
    pub sense: Sense,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        SdpProblem {
            psd_blocks: Vec::new(),
            free_vars: Vec::new(),
            nonneg_vars: Vec::new(),
            equalities: Vec::new(),
            objective: Vec::new(),
            sense,
        }
    }

    /// Add a PSD block and return its index.
    pub fn add_psd_block(&mut self, name: impl Into<String>, dim: usize) -> usize {
        self.psd_blocks.push(PsdBlock {
            name: name.into(),
            dim,
        });
        self.psd_blocks.len() - 1
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> VarRef {
        self.free_vars.push(name.into());
        VarRef::Free(self.free_vars.len() - 1)
    }

    pub fn add_nonneg(&mut self, name: impl Into<String>) -> VarRef {
        self.nonneg_vars.push(name.into());
        VarRef::Nonneg(self.nonneg_vars.len() - 1)
    }

    pub fn add_equality(&mut self, terms: LinearTerms, rhs: f64) {
        self.equalities.push(Equality { terms, rhs });
    }

    pub fn set_objective(&mut self, sense: Sense, terms: LinearTerms) {
        self.sense = sense;
        self.objective = terms;
    }

    pub fn num_scalars(&self) -> usize {
        self.free_vars.len() + self.nonneg_vars.len()
    }

    /// Check that every reference points at an existing variable.
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.psd_blocks.iter().find(|b| b.dim == 0) {
            return Err(Error::InvalidArgument(format!(
                "block `{}` has dimension 0",
                b.name
            )));
        }
        let check = |v: &VarRef, what: &str| -> Result<()> {
            let ok = match *v {
                VarRef::Entry { block, i, j } => {
                    i <= j && self.psd_blocks.get(block).is_some_and(|b| j < b.dim)
                }
                VarRef::Free(k) => k < self.free_vars.len(),
                VarRef::Nonneg(k) => k < self.nonneg_vars.len(),
            };
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} references missing variable {v:?}"
                )))
            }
        };
        for (k, eq) in self.equalities.iter().enumerate() {
            if !eq.rhs.is_finite() || eq.terms.iter().any(|(_, c)| !c.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "equality {k} has a non-finite coefficient"
                )));
            }
            for (v, _) in &eq.terms {
                check(v, &format!("equality {k}"))?;
            }
        }
        for (v, c) in &self.objective {
            if !c.is_finite() {
                return Err(Error::InvalidArgument(
                    "objective has a non-finite coefficient".into(),
                ));
            }
            check(v, "objective")?;
        }
        Ok(())
    }
}

/// Sum duplicate references and drop exact zeros.
pub(crate) fn merge_terms(terms: &[(VarRef, f64)]) -> Vec<(VarRef, f64)> {
    let mut acc: BTreeMap<VarRef, f64> = BTreeMap::new();
    for &(v, c) in terms {
        *acc.entry(v).or_insert(0.0) += c;
    }
    acc.into_iter().filter(|(_, c)| *c != 0.0).collect()
}

/// Solver tolerances and limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Threshold for accepting an improving ray as an infeasibility
    /// certificate.
    pub infeas_tol: f64,
    /// Looser tolerance under which a stalled run is still reported as
    /// `Inaccurate` instead of `Failed`.
    pub inaccurate_tol: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            infeas_tol: 1e-8,
            inaccurate_tol: 1e-5,
            step_fraction: 0.98,
        }
    }
}

impl Settings {
    /// Override a setting from a `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = || {
            value
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("{key}={value}: {e}")))
        };
        match key {
            "feas_tol" => self.feas_tol = f()?,
            "gap_tol" => self.gap_tol = f()?,
            "infeas_tol" => self.infeas_tol = f()?,
            "inaccurate_tol" => self.inaccurate_tol = f()?,
            "step_fraction" => self.step_fraction = f()?,
            "max_iter" => {
                self.max_iter = value
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("{key}={value}: {e}")))?
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown solver setting `{key}`"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
    Failed,
}

impl Status {
    /// Whether the report carries a usable (possibly loose) solution.
    pub fn has_solution(self) -> bool {
        matches!(self, Status::Optimal | Status::Inaccurate)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: Status,
    /// Objective of the stated problem at the returned point.
    pub primal_value: f64,
    /// Objective of the Lagrangian dual at the returned multipliers.
    pub dual_value: f64,
    #[serde(skip)]
    pub block_values: Vec<DMatrix<f64>>,
    pub free_values: Vec<f64>,
    pub nonneg_values: Vec<f64>,
    /// One multiplier per equality.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SolveReport {
    pub fn value(&self, v: VarRef) -> f64 {
        match v {
            VarRef::Entry { block, i, j } => self.block_values[block][(i, j)],
            VarRef::Free(k) => self.free_values[k],
            VarRef::Nonneg(k) => self.nonneg_values[k],
        }
    }

    pub fn eval(&self, terms: &[(VarRef, f64)]) -> f64 {
        terms.iter().map(|&(v, c)| c * self.value(v)).sum()
    }

    pub(crate) fn failed(prob: &SdpProblem, status: Status, msg: impl Into<String>) -> Self {
        SolveReport {
            status,
            primal_value: f64::NAN,
            dual_value: f64::NAN,
            block_values: prob
                .psd_blocks
                .iter()
                .map(|b| DMatrix::zeros(b.dim, b.dim))
                .collect(),
            free_values: vec![0.0; prob.free_vars.len()],
            nonneg_values: vec![0.0; prob.nonneg_vars.len()],
            multipliers: vec![0.0; prob.equalities.len()],
            iterations: 0,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            gap: f64::NAN,
            message: Some(msg.into()),
        }
    }
}

/// Anything that can solve an [`SdpProblem`].
pub trait SdpBackend {
    fn solve(&self, prob: &SdpProblem, settings: &Settings) -> Result<SolveReport>;
}

/// Solve with the reference interior-point backend.
pub fn solve(prob: &SdpProblem, settings: &Settings) -> Result<SolveReport> {
    InteriorPoint.solve(prob, settings)
}
