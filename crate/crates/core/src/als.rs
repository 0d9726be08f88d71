//! Alternating least squares fitting of a chain to a dense target.
//!
//! With every factor but one fixed, the target is `F ~ L M R` where `L` and
//! `R` lump the factors on either side of `M`. Each structural nonzero
//! `m_ij` contributes the rank-one term `L[:, i] m_ij R[j, :]`, so the
//! pattern values solve a linear least-squares problem. It is solved here
//! through its normal equations
//!
//! ```text
//! G[(i,j),(i',j')] = (L^T L)[i,i'] * (R R^T)[j,j']
//! b[(i,j)]         = (L^T F R^T)[i,j]
//! ```
//!
//! split into connected components of the coupling graph of `G`. Unknowns in
//! different components share no Gram entry, so solving each component on
//! its own gives exactly the full solution.

use nalgebra::{DMatrix, DVector};

use crate::chain::ChainSpec;
use crate::dense::DenseMatrix;
use crate::error::{DebutError, Result};
use crate::factor::{DebutFactor, FactorShape, InitScheme};
use crate::kernels::{materialize_factors, materialize_with, DebutChain};
use crate::par::{self, Exec};

/// Targets with more entries than this get the longer sweep budget.
const SMALL_TARGET_ENTRIES: usize = 1 << 17;

/// Ridge used when a component is singular and no ridge was configured.
const FALLBACK_RIDGE: f64 = 1e-8;

/// Cholesky pivots below this fraction of the largest diagonal entry are
/// treated as a failed factorization.
const PIVOT_RTOL: f64 = 1e-10;

/// Eigenvalues below this fraction of the largest one are dropped by the
/// pseudo-inverse.
const EIGEN_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsOptions {
    pub max_sweeps: usize,
    /// Stop once a sweep improves the relative error by less than this.
    pub rel_tol: f64,
    /// Added to the diagonal of a component whose Gram matrix cannot be
    /// factorized. Zero means: use a pseudo-inverse instead.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for AlsOptions {
    fn default() -> Self {
        AlsOptions {
            max_sweeps: 5,
            rel_tol: 1e-4,
            ridge: 0.0,
            seed: 0,
        }
    }
}

impl AlsOptions {
    /// Defaults sized for a `rows x cols` target: 5 sweeps up to 2^17
    /// entries, 10 beyond.
    pub fn for_target(rows: usize, cols: usize) -> Self {
        AlsOptions {
            max_sweeps: if rows * cols <= SMALL_TARGET_ENTRIES { 5 } else { 10 },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlsResult {
    pub chain: DebutChain,
    /// Relative error after each half-sweep.
    pub error_history: Vec<f64>,
    pub sweeps_run: usize,
    /// Whether a sweep improved the error by less than `rel_tol`.
    pub converged: bool,
    /// Non-fatal problems with the chain (e.g. missing full density).
    pub warnings: Vec<String>,
}

impl AlsResult {
    pub fn final_error(&self) -> f64 {
        self.error_history.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Product of the factors to the left (applied after) factor `idx`.
    Left,
    /// Product of the factors to the right (applied before) factor `idx`.
    Right,
}

/// Lumped product on one side of factor `idx` (0 = rightmost). An empty
/// side is the identity.
pub fn lump_side(c: &DebutChain, idx: usize, side: Side) -> Result<DenseMatrix> {
    lump_side_with(c, idx, side, Exec::default())
}

fn lump_side_with(c: &DebutChain, idx: usize, side: Side, exec: Exec) -> Result<DenseMatrix> {
    let factors = c.factors();
    let Some(target) = factors.get(idx) else {
        return Err(DebutError::Index {
            index: idx,
            len: factors.len(),
        });
    };
    Ok(match side {
        Side::Left => materialize_factors(&factors[idx + 1..], target.shape().p, exec),
        Side::Right => materialize_factors(&factors[..idx], target.shape().q, exec),
    })
}

/// `M^T M` for a row-major `M`, exploiting zeros row by row.
fn column_gram(m: &DenseMatrix) -> DenseMatrix {
    let n = m.cols();
    let mut g = DenseMatrix::zeros(n, n);
    let mut nz = Vec::with_capacity(n);
    for i in 0..m.rows() {
        let row = m.row(i);
        nz.clear();
        nz.extend(row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, _)| j));
        for (ia, &a) in nz.iter().enumerate() {
            let va = row[a];
            for &b in &nz[ia..] {
                g[(a, b)] += va * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// `L^T F` exploiting zeros of `L`.
fn left_project(l: &DenseMatrix, f: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(l.cols(), f.cols());
    for i in 0..l.rows() {
        let f_row = f.row(i);
        for (a, &la) in l.row(i).iter().enumerate() {
            if la == 0.0 {
                continue;
            }
            for (o, &fv) in out.row_mut(a).iter_mut().zip(f_row) {
                *o += la * fv;
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so component order is reproducible.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Connected components of the unknowns' Gram coupling, each sorted, in
/// order of their smallest unknown.
fn coupled_components(shape: &FactorShape, gl: &DenseMatrix, gr: &DenseMatrix) -> Vec<Vec<usize>> {
    let FactorShape { p, r, s, t, .. } = *shape;
    let u = shape.nonzeros();
    let row_neighbours: Vec<Vec<usize>> = (0..p)
        .map(|a| (0..p).filter(|&b| gl[(a, b)] != 0.0).collect())
        .collect();
    // Flat index and column of the `s` unknowns in each row.
    let row_unknowns = |row: usize| {
        let d = row / (r * t);
        let i = (row / t) % r;
        let k = row % t;
        (0..s).map(move |j| (((d * r + i) * s + j) * t + k, d * s * t + j * t + k))
    };

    let mut uf = UnionFind::new(u);
    for (idx, row, col) in shape.positions().map(|(row, col, idx)| (idx, row, col)) {
        for &b in &row_neighbours[row] {
            for (idx2, col2) in row_unknowns(b) {
                if idx2 > idx && gr[(col, col2)] != 0.0 {
                    uf.union(idx, idx2);
                }
            }
        }
    }

    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); u];
    for idx in 0..u {
        let root = uf.find(idx);
        by_root[root].push(idx);
    }
    by_root.into_iter().filter(|c| !c.is_empty()).collect()
}

fn cholesky_solve(g: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let max_diag = g.diagonal().iter().cloned().fold(0.0, f64::max);
    if max_diag <= 0.0 {
        return None;
    }
    let chol = g.clone().cholesky()?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    if min_pivot <= PIVOT_RTOL * max_diag {
        return None;
    }
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Minimum-norm least-squares solution through the symmetric eigensystem.
fn pinv_solve(g: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let eig = g.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !lmax.is_finite() {
        return None;
    }
    if lmax <= 0.0 {
        return Some(DVector::zeros(b.len()));
    }
    let coeffs = eig.eigenvectors.transpose() * b;
    let scaled = DVector::from_iterator(
        coeffs.len(),
        coeffs.iter().zip(eig.eigenvalues.iter()).map(|(&c, &l)| {
            if l > EIGEN_RTOL * lmax {
                c / l
            } else {
                0.0
            }
        }),
    );
    let x = &eig.eigenvectors * scaled;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn solve_component(g: DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    if let Some(x) = cholesky_solve(&g, b) {
        return Ok(x);
    }
    let with_ridge = |lambda: f64| {
        let mut gr = g.clone();
        for i in 0..gr.nrows() {
            gr[(i, i)] += lambda;
        }
        cholesky_solve(&gr, b)
    };
    if ridge > 0.0 {
        if let Some(x) = with_ridge(ridge) {
            return Ok(x);
        }
    }
    if let Some(x) = pinv_solve(&g, b) {
        return Ok(x);
    }
    with_ridge(FALLBACK_RIDGE).ok_or(DebutError::SingularSystem { unknowns: b.len() })
}

/// Least-squares values of a factor with pattern `shape` minimizing
/// `||F - L M R||_F`, with the residual norm.
pub fn solve_factor_ls(
    f: &DenseMatrix,
    l: &DenseMatrix,
    r: &DenseMatrix,
    shape: FactorShape,
    ridge: f64,
) -> Result<(Vec<f64>, f64)> {
    solve_factor_ls_with(f, l, r, shape, ridge, Exec::default())
}

pub fn solve_factor_ls_with(
    f: &DenseMatrix,
    l: &DenseMatrix,
    r: &DenseMatrix,
    shape: FactorShape,
    ridge: f64,
    exec: Exec,
) -> Result<(Vec<f64>, f64)> {
    if l.cols() != shape.p || r.rows() != shape.q || f.rows() != l.rows() || f.cols() != r.cols() {
        return Err(DebutError::Dimension(format!(
            "F is {}x{}, L is {}x{}, R is {}x{}, factor is {}x{}",
            f.rows(),
            f.cols(),
            l.rows(),
            l.cols(),
            r.rows(),
            r.cols(),
            shape.p,
            shape.q
        )));
    }
    let gl = column_gram(l);
    let gr = column_gram(&r.transpose());
    let ltf = left_project(l, f);

    let positions: Vec<(usize, usize)> = shape.positions().map(|(row, col, _)| (row, col)).collect();
    let rhs: Vec<f64> = positions
        .iter()
        .map(|&(row, col)| dot(ltf.row(row), r.row(col)))
        .collect();

    let components = coupled_components(&shape, &gl, &gr);
    let solved = par::map_range(exec, components.len(), |ci| {
        let comp = &components[ci];
        let k = comp.len();
        let g = DMatrix::from_fn(k, k, |a, b| {
            let (ra, ca) = positions[comp[a]];
            let (rb, cb) = positions[comp[b]];
            gl[(ra, rb)] * gr[(ca, cb)]
        });
        let b = DVector::from_iterator(k, comp.iter().map(|&idx| rhs[idx]));
        let x = solve_component(g.clone(), &b, ridge)?;
        // Contribution to m^T G m - 2 m^T b.
        let quad = x.dot(&(&g * &x)) - 2.0 * x.dot(&b);
        Ok::<_, DebutError>((x, quad))
    });

    let mut values = vec![0.0; shape.nonzeros()];
    let mut residual_sq = f.frobenius_norm().powi(2);
    for (comp, res) in components.iter().zip(solved) {
        let (x, quad) = res?;
        for (&idx, &v) in comp.iter().zip(x.iter()) {
            values[idx] = v;
        }
        residual_sq += quad;
    }
    Ok((values, residual_sq.max(0.0).sqrt()))
}

/// `||F - materialize(c)||_F / ||F||_F`.
pub fn relative_error(f: &DenseMatrix, c: &DebutChain) -> Result<f64> {
    if f.rows() != c.rows_out() || f.cols() != c.cols_in() {
        return Err(DebutError::Dimension(format!(
            "target is {}x{} but the chain is {}x{}",
            f.rows(),
            f.cols(),
            c.rows_out(),
            c.cols_in()
        )));
    }
    let approx = materialize_with(c, Exec::default());
    let fnorm = f.frobenius_norm();
    let dist = f.distance(&approx)?;
    if fnorm == 0.0 {
        return if dist == 0.0 { Ok(0.0) } else { Err(DebutError::ZeroTarget) };
    }
    Ok(dist / fnorm)
}

/// Error used to drive the sweeps; absolute when the target is zero.
fn sweep_error(f: &DenseMatrix, fnorm: f64, c: &DebutChain, exec: Exec) -> f64 {
    let approx = materialize_with(c, exec);
    let dist = f.distance(&approx).expect("dimensions checked");
    if fnorm == 0.0 {
        dist
    } else {
        dist / fnorm
    }
}

/// Fits `spec` to `f` by ALS sweeps. Each sweep solves every factor from the
/// rightmost to the leftmost and then back again.
pub fn als_fit(f: &DenseMatrix, spec: &ChainSpec, opts: &AlsOptions) -> Result<AlsResult> {
    als_fit_with(f, spec, opts, Exec::default())
}

pub fn als_fit_with(f: &DenseMatrix, spec: &ChainSpec, opts: &AlsOptions, exec: Exec) -> Result<AlsResult> {
    if f.rows() != spec.rows_out() || f.cols() != spec.cols_in() {
        return Err(DebutError::Dimension(format!(
            "target is {}x{} but the chain is {}x{}",
            f.rows(),
            f.cols(),
            spec.rows_out(),
            spec.cols_in()
        )));
    }
    let report = spec.validate();
    let warnings = if report.pass() { Vec::new() } else { report.messages.clone() };

    let max_s = spec.factors().iter().map(|s| s.s).max().unwrap_or(1);
    let sigma = 1.0 / (max_s as f64).sqrt();
    let mut chain = DebutChain::random(spec, InitScheme::Gaussian { sigma }, opts.seed);

    let fnorm = f.frobenius_norm();
    let n = chain.len();
    let mut history = Vec::with_capacity(2 * opts.max_sweeps);
    let mut previous = sweep_error(f, fnorm, &chain, exec);
    let mut converged = false;
    let mut sweeps_run = 0;

    let solve = |chain: &mut DebutChain, idx: usize| -> Result<()> {
        let l = lump_side_with(chain, idx, Side::Left, exec)?;
        let r = lump_side_with(chain, idx, Side::Right, exec)?;
        let shape = chain.factors()[idx].shape();
        let (values, _) = solve_factor_ls_with(f, &l, &r, shape, opts.ridge, exec)?;
        chain.set_factor(idx, DebutFactor::from_values(shape, values)?)
    };

    for _ in 0..opts.max_sweeps.max(1) {
        for idx in 0..n {
            solve(&mut chain, idx)?;
        }
        history.push(sweep_error(f, fnorm, &chain, exec));
        for idx in (0..n).rev() {
            solve(&mut chain, idx)?;
        }
        let err = sweep_error(f, fnorm, &chain, exec);
        history.push(err);
        sweeps_run += 1;
        if previous - err < opts.rel_tol {
            converged = true;
            break;
        }
        previous = err;
    }

    Ok(AlsResult {
        chain,
        error_history: history,
        sweeps_run,
        converged,
        warnings,
    })
}
