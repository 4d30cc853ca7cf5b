//! Block-structured covariance models.
//!
//! Model 1: independent blocks, each with its own correlation matrix `R_i`,
//! variance floor `σ²_min;i` and shifted-gamma variance noise `(σ²_i, α_i)`.
//!
//! Model 2: one global variance `σ²_min + s²` times a correlation matrix made
//! of equicorrelation blocks (`ρ_ii` within block `i`, `ρ_ij` across).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::solver::{maximize, ConstraintSet, Objective, SolveReport, SolverOptions};
use crate::types::{parse_json, CovMatrix, ReturnBeliefs, Weights};

/// Assignment of assets to blocks `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    block_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl BlockStructure {
    /// `ids[j]` is the block (1-based) of asset `j`.
    pub fn new(ids: &[usize]) -> Result<Self> {
        if ids.is_empty() {
            return Err(invalid("assignments", "need at least one asset"));
        }
        if ids.contains(&0) {
            return Err(invalid("assignments", "block ids start at 1"));
        }
        let k = *ids.iter().max().expect("non-empty");
        let mut members = vec![Vec::new(); k];
        for (j, &id) in ids.iter().enumerate() {
            members[id - 1].push(j);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(invalid("assignments", format!("block {} has no assets", empty + 1)));
        }
        Ok(Self {
            block_of: ids.iter().map(|id| id - 1).collect(),
            members,
        })
    }

    /// Contiguous blocks of the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let ids: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &m)| std::iter::repeat_n(k + 1, m))
            .collect();
        Self::new(&ids)
    }

    pub fn n_assets(&self) -> usize {
        self.block_of.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.members.len()
    }

    /// 0-based block of asset `j`.
    pub fn block_of(&self, j: usize) -> usize {
        self.block_of[j]
    }

    /// Asset indices of 0-based block `k`.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// 1-based ids, as accepted by [`BlockStructure::new`].
    pub fn ids(&self) -> Vec<usize> {
        self.block_of.iter().map(|k| k + 1).collect()
    }

    fn gather(&self, k: usize, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.members[k].len(), self.members[k].iter().map(|&j| v[j]))
    }

    /// Per-block sums of `v`.
    pub fn block_sums(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n_blocks(),
            self.members.iter().map(|m| m.iter().map(|&j| v[j]).sum()),
        )
    }

    /// Expands per-block values to assets.
    pub fn expand(&self, per_block: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_assets(), self.block_of.iter().map(|&k| per_block[k]))
    }

    /// First block (1-based) on which `v` is not constant.
    fn non_constant_block(&self, v: &DVector<f64>) -> Option<usize> {
        self.members
            .iter()
            .position(|m| m.iter().any(|&j| v[j] != v[m[0]]))
            .map(|k| k + 1)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.n_assets() {
            return Err(Error::DimensionMismatch {
                expected: self.n_assets(),
                actual: n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model1Block {
    pub sigma_min_sq: f64,
    pub sigma_sq: f64,
    pub alpha: f64,
    /// Within-block correlation matrix.
    pub corr: CovMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model1Spec {
    structure: BlockStructure,
    blocks: Vec<Model1Block>,
}

fn check_correlation(r: &CovMatrix, block: usize) -> Result<()> {
    let m = r.matrix();
    for i in 0..m.nrows() {
        if (m[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(invalid("corr", format!("block {block}: diagonal entry {i} is {}, not 1", m[(i, i)])));
        }
        for j in 0..i {
            if !(m[(i, j)].abs() < 1.0) {
                return Err(invalid("corr", format!("block {block}: correlation ({i}, {j}) outside (-1, 1)")));
            }
        }
    }
    let min = r.min_eigenvalue();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(())
}

impl Model1Spec {
    pub fn new(structure: BlockStructure, blocks: Vec<Model1Block>) -> Result<Self> {
        if blocks.len() != structure.n_blocks() {
            return Err(Error::DimensionMismatch {
                expected: structure.n_blocks(),
                actual: blocks.len(),
            });
        }
        for (k, b) in blocks.iter().enumerate() {
            if !(b.sigma_min_sq >= 0.0) || !b.sigma_min_sq.is_finite() {
                return Err(invalid("sigma_min_sq", format!("block {}: must be finite and nonnegative", k + 1)));
            }
            if !(b.sigma_sq > 0.0) || !b.sigma_sq.is_finite() {
                return Err(invalid("sigma_sq", format!("block {}: must be finite and positive", k + 1)));
            }
            if !(b.alpha > 0.0) || !b.alpha.is_finite() {
                return Err(invalid("alpha", format!("block {}: must be finite and positive", k + 1)));
            }
            let m = structure.members(k).len();
            if b.corr.dim() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: b.corr.dim(),
                });
            }
            check_correlation(&b.corr, k + 1)?;
        }
        Ok(Self { structure, blocks })
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn blocks(&self) -> &[Model1Block] {
        &self.blocks
    }

    /// `w_iᵀR_iw_i` for every block, in block order.
    pub fn block_quad_forms(&self, w: &DVector<f64>) -> Vec<f64> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, b)| b.corr.quad_form(&self.structure.gather(k, w)))
            .collect()
    }

    /// Dense `(Σ_min, Σ)`, the floor and noisy parts of the covariance.
    pub fn dense_covariances(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.structure.n_assets();
        let mut floor = DMatrix::zeros(n, n);
        let mut noisy = DMatrix::zeros(n, n);
        for (k, b) in self.blocks.iter().enumerate() {
            let idx = self.structure.members(k);
            for (p, &i) in idx.iter().enumerate() {
                for (q, &j) in idx.iter().enumerate() {
                    let r = b.corr.matrix()[(p, q)];
                    floor[(i, j)] = b.sigma_min_sq * r;
                    noisy[(i, j)] = b.sigma_sq * r;
                }
            }
        }
        (floor, noisy)
    }
}

/// Model 1 objective bound to beliefs and risk aversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Model1Problem {
    pub spec: Model1Spec,
    pub beliefs: ReturnBeliefs,
    pub a: f64,
}

impl Model1Problem {
    pub fn new(spec: Model1Spec, beliefs: ReturnBeliefs, a: f64) -> Result<Self> {
        spec.structure.check_len(beliefs.dim())?;
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid("risk_aversion", "must be finite and strictly positive"));
        }
        Ok(Self { spec, beliefs, a })
    }

    /// `μ₀ᵀw − (a/2)wᵀΣ₀w − (a/2)Σ σ²_min;i w_iᵀR_iw_i + Σ (α_i/2a) ln(1 − (a²σ²_i/α_i) w_iᵀR_iw_i)`
    pub fn objective(&self, w: &DVector<f64>) -> Result<f64> {
        self.spec.structure.check_len(w.len())?;
        let a = self.a;
        let mut total = self.beliefs.mu0().dot(w) - 0.5 * a * self.beliefs.sigma0_quad(w);
        for (k, (b, q)) in self.spec.blocks.iter().zip(self.spec.block_quad_forms(w)).enumerate() {
            let x = a * a * b.sigma_sq / b.alpha * q;
            if !(x < 1.0) {
                return Err(Error::Domain(format!(
                    "block {}: (a²σ²/α) w'Rw = {x} is not below 1",
                    k + 1
                )));
            }
            total += -0.5 * a * b.sigma_min_sq * q + 0.5 * b.alpha / a * (-x).ln_1p();
        }
        Ok(total)
    }
}

impl Objective for Model1Problem {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        self.objective(x).ok()
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let a = self.a;
        let mut grad = self.beliefs.mu0() - self.beliefs.sigma0_diag().component_mul(w) * a;
        for (k, b) in self.spec.blocks.iter().enumerate() {
            let wk = self.spec.structure.gather(k, w);
            let rw = b.corr.matrix() * &wk;
            let g = 1.0 - a * a * b.sigma_sq / b.alpha * wk.dot(&rw);
            let c = a * b.sigma_min_sq + a * b.sigma_sq / g;
            for (p, &j) in self.spec.structure.members(k).iter().enumerate() {
                grad[j] -= c * rw[p];
            }
        }
        grad
    }
}

pub fn model1_objective(spec: &Model1Spec, beliefs: &ReturnBeliefs, a: f64, w: &Weights) -> Result<f64> {
    Model1Problem::new(spec.clone(), beliefs.clone(), a)?.objective(w.as_vector())
}

pub fn solve_model1(
    spec: &Model1Spec,
    beliefs: &ReturnBeliefs,
    a: f64,
    constraints: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<(Weights, SolveReport)> {
    let p = Model1Problem::new(spec.clone(), beliefs.clone(), a)?;
    let (w, report) = maximize(&p, &DVector::zeros(beliefs.dim()), constraints, opts)?;
    report.ensure_stationary(1e-6)?;
    Ok((Weights::new(w)?, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model2Spec {
    structure: BlockStructure,
    pub sigma_min_sq: f64,
    pub sigma_sq: f64,
    pub alpha: f64,
    rho: DMatrix<f64>,
}

impl Model2Spec {
    /// `rho` is the symmetric `K×K` matrix of block correlations.
    pub fn new(
        structure: BlockStructure,
        sigma_min_sq: f64,
        sigma_sq: f64,
        alpha: f64,
        rho: DMatrix<f64>,
    ) -> Result<Self> {
        let k = structure.n_blocks();
        if rho.nrows() != k || rho.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: rho.nrows(),
            });
        }
        if !(sigma_min_sq >= 0.0) || !sigma_min_sq.is_finite() {
            return Err(invalid("sigma_min_sq", "must be finite and nonnegative"));
        }
        if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
            return Err(invalid("sigma_sq", "must be finite and strictly positive"));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite and strictly positive"));
        }
        for i in 0..k {
            for j in 0..k {
                if !rho[(i, j)].is_finite() || !(rho[(i, j)].abs() < 1.0) && !(i == j && structure.members(i).len() == 1) {
                    return Err(invalid("rho", format!("rho[{}][{}] must lie in (-1, 1)", i + 1, j + 1)));
                }
                if rho[(i, j)] != rho[(j, i)] {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        gap: (rho[(i, j)] - rho[(j, i)]).abs(),
                    });
                }
            }
            let m = structure.members(i).len();
            if m > 1 && !(rho[(i, i)] > -1.0 / (m as f64 - 1.0)) {
                return Err(invalid(
                    "rho",
                    format!("within-block correlation of block {} must exceed -1/(m-1)", i + 1),
                ));
            }
        }
        let spec = Self {
            structure,
            sigma_min_sq,
            sigma_sq,
            alpha,
            rho,
        };
        let min = spec.min_eigenvalue();
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(spec)
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    /// Smallest eigenvalue of the assembled correlation matrix, without
    /// assembling it: `1 − ρ_ii` for blocks with more than one asset, plus the
    /// spectrum of the `K×K` matrix with `1 + (m_i−1)ρ_ii` on the diagonal and
    /// `ρ_ij √(m_i m_j)` off it.
    pub fn min_eigenvalue(&self) -> f64 {
        let sizes = self.structure.sizes();
        let k = sizes.len();
        let reduced = DMatrix::from_fn(k, k, |i, j| {
            let (mi, mj) = (sizes[i] as f64, sizes[j] as f64);
            if i == j {
                1.0 + (mi - 1.0) * self.rho[(i, i)]
            } else {
                self.rho[(i, j)] * (mi * mj).sqrt()
            }
        });
        let mut min = symmetric_eigenvalues(&reduced)[0];
        for (i, &m) in sizes.iter().enumerate() {
            if m > 1 {
                min = min.min(1.0 - self.rho[(i, i)]);
            }
        }
        min
    }

    /// `R w` in `O(N + K²)`.
    pub fn corr_times(&self, w: &DVector<f64>) -> DVector<f64> {
        let sums = self.structure.block_sums(w);
        let across = &self.rho * &sums;
        DVector::from_fn(w.len(), |j, _| {
            let k = self.structure.block_of(j);
            (1.0 - self.rho[(k, k)]) * w[j] + across[k]
        })
    }

    /// Contracted correlation for block totals `t_i = Σ_{j∈i} w_j` of
    /// block-constant weights: `wᵀRw = tᵀ R̄ t` with
    /// `R̄_ii = (1 + (m_i−1)ρ_ii)/m_i` and `R̄_ij = ρ_ij`.
    pub fn contracted(&self) -> DMatrix<f64> {
        let sizes = self.structure.sizes();
        let k = sizes.len();
        DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                let m = sizes[i] as f64;
                (1.0 + (m - 1.0) * self.rho[(i, i)]) / m
            } else {
                self.rho[(i, j)]
            }
        })
    }
}

/// Dense `N×N` correlation matrix of a Model 2 specification.
pub fn assemble_block_correlation(spec: &Model2Spec) -> Result<CovMatrix> {
    let n = spec.structure.n_assets();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            spec.rho[(spec.structure.block_of(i), spec.structure.block_of(j))]
        }
    });
    let r = CovMatrix::new(m)?;
    let min = r.min_eigenvalue();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(r)
}

/// Model 2 objective over all `N` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model2Problem {
    pub spec: Model2Spec,
    pub beliefs: ReturnBeliefs,
    pub a: f64,
}

impl Model2Problem {
    pub fn new(spec: Model2Spec, beliefs: ReturnBeliefs, a: f64) -> Result<Self> {
        spec.structure.check_len(beliefs.dim())?;
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid("risk_aversion", "must be finite and strictly positive"));
        }
        Ok(Self { spec, beliefs, a })
    }

    /// `μ₀ᵀw − (a/2)wᵀΣ₀w − (a/2)σ²_min wᵀRw + (α/2a) ln(1 − (a²σ²/α) wᵀRw)`
    pub fn objective(&self, w: &DVector<f64>) -> Result<f64> {
        self.spec.structure.check_len(w.len())?;
        let quad = w.dot(&self.spec.corr_times(w));
        model2_value(
            &self.spec,
            self.a,
            self.beliefs.mu0().dot(w),
            self.beliefs.sigma0_quad(w),
            quad,
        )
    }
}

fn model2_value(spec: &Model2Spec, a: f64, mean: f64, s0: f64, quad: f64) -> Result<f64> {
    let x = a * a * spec.sigma_sq / spec.alpha * quad;
    if !(x < 1.0) {
        return Err(Error::Domain(format!("(a²σ²/α) w'Rw = {x} is not below 1")));
    }
    Ok(mean - 0.5 * a * s0 - 0.5 * a * spec.sigma_min_sq * quad + 0.5 * spec.alpha / a * (-x).ln_1p())
}

/// Coefficient of `Rw` in the gradient: `a σ²_min + a σ²/g`.
fn model2_risk_coefficient(spec: &Model2Spec, a: f64, quad: f64) -> f64 {
    let g = 1.0 - a * a * spec.sigma_sq / spec.alpha * quad;
    a * spec.sigma_min_sq + a * spec.sigma_sq / g
}

impl Objective for Model2Problem {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        self.objective(x).ok()
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let rw = self.spec.corr_times(w);
        let c = model2_risk_coefficient(&self.spec, self.a, w.dot(&rw));
        self.beliefs.mu0() - self.beliefs.sigma0_diag().component_mul(w) * self.a - rw * c
    }
}

/// Model 2 objective in block totals `t`, valid for block-constant beliefs.
struct Model2Reduced {
    spec: Model2Spec,
    a: f64,
    contracted: DMatrix<f64>,
    /// Block values of `μ₀`.
    mu: DVector<f64>,
    /// `σ₀²` of the block divided by its size.
    s0: DVector<f64>,
}

impl Objective for Model2Reduced {
    fn value(&self, t: &DVector<f64>) -> Option<f64> {
        let quad = t.dot(&(&self.contracted * t));
        let s0 = t.component_mul(t).dot(&self.s0);
        model2_value(&self.spec, self.a, self.mu.dot(t), s0, quad).ok()
    }

    fn gradient(&self, t: &DVector<f64>) -> DVector<f64> {
        let rt = &self.contracted * t;
        let c = model2_risk_coefficient(&self.spec, self.a, t.dot(&rt));
        &self.mu - self.s0.component_mul(t) * self.a - rt * c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model2Solution {
    pub weights: Weights,
    /// Per-asset weight of each block (the block mean in full mode).
    pub block_weights: DVector<f64>,
    pub reduced: bool,
    pub report: SolveReport,
}

/// Solves Model 2. With `reduce`, beliefs and bounds must be constant within
/// blocks and the search runs over the `K` block totals.
pub fn solve_model2(
    spec: &Model2Spec,
    beliefs: &ReturnBeliefs,
    a: f64,
    constraints: &ConstraintSet,
    reduce: bool,
    opts: &SolverOptions,
) -> Result<Model2Solution> {
    let problem = Model2Problem::new(spec.clone(), beliefs.clone(), a)?;
    let st = &spec.structure;
    let sizes = DVector::from_iterator(st.n_blocks(), st.sizes().into_iter().map(|m| m as f64));
    if !reduce {
        let (w, report) = maximize(&problem, &DVector::zeros(st.n_assets()), constraints, opts)?;
        report.ensure_stationary(1e-6)?;
        let block_weights = st.block_sums(&w).component_div(&sizes);
        return Ok(Model2Solution {
            weights: Weights::new(w)?,
            block_weights,
            reduced: false,
            report,
        });
    }
    for v in [beliefs.mu0(), beliefs.sigma0_diag()] {
        if let Some(block) = st.non_constant_block(v) {
            return Err(Error::SymmetryViolation { block });
        }
    }
    let reduced_cs = reduce_constraints(st, constraints, &sizes)?;
    let first = |v: &DVector<f64>| DVector::from_iterator(st.n_blocks(), (0..st.n_blocks()).map(|k| v[st.members(k)[0]]));
    let objective = Model2Reduced {
        spec: spec.clone(),
        a,
        contracted: spec.contracted(),
        mu: first(beliefs.mu0()),
        s0: first(beliefs.sigma0_diag()).component_div(&sizes),
    };
    let (t, report) = maximize(&objective, &DVector::zeros(st.n_blocks()), &reduced_cs, opts)?;
    report.ensure_stationary(1e-6)?;
    let block_weights = t.component_div(&sizes);
    Ok(Model2Solution {
        weights: Weights::new(st.expand(&block_weights))?,
        block_weights,
        reduced: true,
        report,
    })
}

/// Maps per-asset constraints to block totals.
fn reduce_constraints(st: &BlockStructure, cs: &ConstraintSet, sizes: &DVector<f64>) -> Result<ConstraintSet> {
    if cs.epigraph != 0 {
        return Err(invalid("constraints", "epigraph variables are not supported in reduced mode"));
    }
    let map = |b: &Option<DVector<f64>>| -> Result<Option<DVector<f64>>> {
        match b {
            None => Ok(None),
            Some(v) => {
                st.check_len(v.len())?;
                if let Some(block) = st.non_constant_block(v) {
                    return Err(Error::SymmetryViolation { block });
                }
                Ok(Some(DVector::from_iterator(
                    st.n_blocks(),
                    (0..st.n_blocks()).map(|k| v[st.members(k)[0]] * sizes[k]),
                )))
            }
        }
    };
    Ok(ConstraintSet {
        lower: map(&cs.lower)?,
        upper: map(&cs.upper)?,
        budget: cs.budget,
        nonneg: cs.nonneg,
        epigraph: 0,
    })
}

fn beliefs_from(mu0: Vec<f64>, sigma0: Option<Vec<f64>>) -> Result<ReturnBeliefs> {
    let n = mu0.len();
    let s0 = sigma0.unwrap_or_else(|| vec![0.0; n]);
    if s0.len() != n {
        return Err(Error::Schema(format!("/sigma0_diag: expected {n} entries, got {}", s0.len())));
    }
    ReturnBeliefs::new(DVector::from_vec(mu0), DVector::from_vec(s0))
}

fn check_assignments(ids: &[usize], n: usize) -> Result<BlockStructure> {
    if ids.len() != n {
        return Err(Error::Schema(format!("/assignments: expected {n} entries, got {}", ids.len())));
    }
    BlockStructure::new(ids)
}

/// JSON form of a Model 1 problem. Per-block arrays are indexed by block id
/// minus one; `corr` defaults to identity matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model1Doc {
    pub assignments: Vec<usize>,
    pub mu0: Vec<f64>,
    #[serde(default)]
    pub sigma0_diag: Option<Vec<f64>>,
    pub risk_aversion: f64,
    pub sigma_min_sq: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub corr: Option<Vec<Vec<Vec<f64>>>>,
}

impl Model1Doc {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    pub fn into_problem(self) -> Result<Model1Problem> {
        let st = check_assignments(&self.assignments, self.mu0.len())?;
        let k = st.n_blocks();
        for (name, v) in [("sigma_min_sq", &self.sigma_min_sq), ("sigma_sq", &self.sigma_sq), ("alpha", &self.alpha)] {
            if v.len() != k {
                return Err(Error::Schema(format!("/{name}: expected {k} entries, got {}", v.len())));
            }
        }
        if let Some(c) = &self.corr {
            if c.len() != k {
                return Err(Error::Schema(format!("/corr: expected {k} matrices, got {}", c.len())));
            }
        }
        let mut blocks = Vec::with_capacity(k);
        for i in 0..k {
            let m = st.members(i).len();
            let corr = match &self.corr {
                Some(c) => CovMatrix::from_rows(&c[i]).map_err(|e| Error::Schema(format!("/corr/{i}: {e}")))?,
                None => CovMatrix::new(DMatrix::identity(m, m))?,
            };
            blocks.push(Model1Block {
                sigma_min_sq: self.sigma_min_sq[i],
                sigma_sq: self.sigma_sq[i],
                alpha: self.alpha[i],
                corr,
            });
        }
        let spec = Model1Spec::new(st, blocks)?;
        Model1Problem::new(spec, beliefs_from(self.mu0, self.sigma0_diag)?, self.risk_aversion)
    }
}

/// JSON form of a Model 2 problem. `rho` is either the upper triangle
/// (row `i` holds `ρ_ii … ρ_iK`) or the full symmetric `K×K` matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model2Doc {
    pub assignments: Vec<usize>,
    pub mu0: Vec<f64>,
    #[serde(default)]
    pub sigma0_diag: Option<Vec<f64>>,
    pub risk_aversion: f64,
    #[serde(default)]
    pub sigma_min_sq: f64,
    pub sigma_sq: f64,
    pub alpha: f64,
    pub rho: Vec<Vec<f64>>,
}

impl Model2Doc {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    pub fn into_problem(self) -> Result<Model2Problem> {
        let st = check_assignments(&self.assignments, self.mu0.len())?;
        let rho = rho_matrix(&self.rho, st.n_blocks())?;
        let spec = Model2Spec::new(st, self.sigma_min_sq, self.sigma_sq, self.alpha, rho)?;
        Model2Problem::new(spec, beliefs_from(self.mu0, self.sigma0_diag)?, self.risk_aversion)
    }
}

fn rho_matrix(rows: &[Vec<f64>], k: usize) -> Result<DMatrix<f64>> {
    if rows.len() != k {
        return Err(Error::Schema(format!("/rho: expected {k} rows, got {}", rows.len())));
    }
    let square = rows.iter().all(|r| r.len() == k);
    let triangle = rows.iter().enumerate().all(|(i, r)| r.len() == k - i);
    if !square && !triangle {
        return Err(Error::Schema("/rho: rows must form a K×K matrix or its upper triangle".into()));
    }
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = if square { rows[i][j] } else { rows[i][j - i] };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    if square {
        for (i, row) in rows.iter().enumerate() {
            for (j, x) in row.iter().enumerate().take(i) {
                if *x != rows[j][i] {
                    return Err(Error::Schema(format!("/rho/{i}/{j}: matrix is not symmetric")));
                }
            }
        }
    }
    Ok(m)
}
