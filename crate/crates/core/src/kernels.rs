//! Fast products with factors and chains, dense materialization and the
//! bipolar integrity test.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::chain::ChainSpec;
use crate::dense::DenseMatrix;
use crate::error::{DebutError, Result};
use crate::factor::{seeded_rng, DebutFactor, FactorShape, InitScheme};
use crate::par::{self, Exec};

/// Column block width for multi-column inputs.
const COLUMN_BLOCK: usize = 64;

/// Entries within this distance of 0 or of +-1 count as exact.
pub const BIPOLAR_TOLERANCE: f64 = 1e-12;

/// A chain with values bound to every factor, rightmost factor first.
#[derive(Debug, Clone, PartialEq)]
pub struct DebutChain {
    factors: Vec<DebutFactor>,
}

impl DebutChain {
    pub fn new(factors: Vec<DebutFactor>) -> Result<Self> {
        ChainSpec::new(factors.iter().map(DebutFactor::shape).collect())?;
        Ok(DebutChain { factors })
    }

    /// Random values for every factor of `spec`, drawn from one seeded stream
    /// starting at the rightmost factor.
    pub fn random(spec: &ChainSpec, scheme: InitScheme, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let factors = spec
            .factors()
            .iter()
            .map(|&shape| DebutFactor::random_with(shape, scheme, &mut rng))
            .collect();
        DebutChain { factors }
    }

    pub fn zeros(spec: &ChainSpec) -> Self {
        DebutChain {
            factors: spec.factors().iter().map(|&s| DebutFactor::zeros(s)).collect(),
        }
    }

    pub fn spec(&self) -> ChainSpec {
        ChainSpec::new(self.factors.iter().map(DebutFactor::shape).collect())
            .expect("adjacency checked on construction")
    }

    pub fn factors(&self) -> &[DebutFactor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn rows_out(&self) -> usize {
        self.factors.last().map_or(0, |f| f.shape().p)
    }

    pub fn cols_in(&self) -> usize {
        self.factors.first().map_or(0, |f| f.shape().q)
    }

    /// Replaces the values of factor `idx`; the shape must be unchanged.
    pub fn set_factor(&mut self, idx: usize, factor: DebutFactor) -> Result<()> {
        let len = self.factors.len();
        let slot = self
            .factors
            .get_mut(idx)
            .ok_or(DebutError::Index { index: idx, len })?;
        if slot.shape() != factor.shape() {
            return Err(DebutError::ShapeMismatch(format!(
                "factor {idx} is {} but the replacement is {}",
                slot.shape(),
                factor.shape()
            )));
        }
        *slot = factor;
        Ok(())
    }
}

/// Multiply-accumulate count reported by the instrumented kernels.
#[derive(Debug, Default)]
struct MacCounter(AtomicU64);

impl MacCounter {
    fn add(&self, n: usize) {
        self.0.fetch_add(n as u64, Ordering::Relaxed);
    }

    fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

fn apply_factor(f: &DebutFactor, x: &DenseMatrix, exec: Exec, macs: &MacCounter) -> Result<DenseMatrix> {
    let FactorShape { p, q, r, s, t } = f.shape();
    if x.rows() != q {
        return Err(DebutError::Dimension(format!(
            "factor {} expects {q} input rows, got {}",
            f.shape(),
            x.rows()
        )));
    }
    let n = x.cols();
    let mut out = DenseMatrix::zeros(p, n);
    let values = f.values();
    par::for_each_row(exec, out.data_mut(), n, |row, out_row| {
        let d = row / (r * t);
        let i = (row / t) % r;
        let k = row % t;
        let idx0 = (d * r + i) * s * t + k;
        let col0 = d * s * t + k;
        let mut count = 0;
        for c0 in (0..n).step_by(COLUMN_BLOCK) {
            let c1 = (c0 + COLUMN_BLOCK).min(n);
            let dst = &mut out_row[c0..c1];
            for j in 0..s {
                let v = values[idx0 + j * t];
                let src = &x.row(col0 + j * t)[c0..c1];
                for (o, &xv) in dst.iter_mut().zip(src) {
                    *o += v * xv;
                }
                count += c1 - c0;
            }
        }
        macs.add(count);
    });
    Ok(out)
}

/// `Y = F X` streaming the `[D, r, s, t]` layout: `p s` MACs per column.
pub fn factor_apply(f: &DebutFactor, x: &DenseMatrix) -> Result<DenseMatrix> {
    apply_factor(f, x, Exec::default(), &MacCounter::default())
}

pub fn factor_apply_with(f: &DebutFactor, x: &DenseMatrix, exec: Exec) -> Result<DenseMatrix> {
    apply_factor(f, x, exec, &MacCounter::default())
}

/// Applies every factor, rightmost first.
pub fn chain_apply(c: &DebutChain, x: &DenseMatrix) -> Result<DenseMatrix> {
    chain_apply_with(c, x, Exec::default())
}

pub fn chain_apply_with(c: &DebutChain, x: &DenseMatrix, exec: Exec) -> Result<DenseMatrix> {
    Ok(chain_apply_counted(c, x, exec)?.0)
}

/// [`chain_apply`] plus the multiply-accumulates the kernels executed.
pub fn chain_apply_counted(c: &DebutChain, x: &DenseMatrix, exec: Exec) -> Result<(DenseMatrix, u64)> {
    if x.rows() != c.cols_in() {
        return Err(DebutError::Dimension(format!(
            "chain expects {} input rows, got {}",
            c.cols_in(),
            x.rows()
        )));
    }
    let macs = MacCounter::default();
    let mut factors = c.factors().iter();
    let first = factors.next().expect("chains are non-empty");
    let mut y = apply_factor(first, x, exec, &macs)?;
    for f in factors {
        y = apply_factor(f, &y, exec, &macs)?;
    }
    Ok((y, macs.get()))
}

/// Columns handled by one propagator before it is dropped.
const PROPAGATION_CHUNK: usize = 32;

/// Sparse image of a unit vector `e_col` under a run of factors.
///
/// Every structural path is followed, including those through zero-valued
/// entries, so the support is the structural support of the column. Scratch
/// space is reused across the columns of a chunk.
struct ColumnPropagator {
    acc: Vec<f64>,
    seen: Vec<bool>,
    current: Vec<(usize, f64)>,
    touched: Vec<usize>,
}

impl ColumnPropagator {
    fn new(max_dim: usize) -> Self {
        ColumnPropagator {
            acc: vec![0.0; max_dim],
            seen: vec![false; max_dim],
            current: Vec::new(),
            touched: Vec::new(),
        }
    }

    /// `(row, value)` pairs of the column, in no particular order.
    fn run(&mut self, factors: &[DebutFactor], col: usize) -> &[(usize, f64)] {
        self.current.clear();
        self.current.push((col, 1.0));
        for f in factors {
            let shape = f.shape();
            let values = f.values();
            self.touched.clear();
            for &(c, xv) in &self.current {
                for (row, idx) in shape.column_entries(c) {
                    if !self.seen[row] {
                        self.seen[row] = true;
                        self.touched.push(row);
                    }
                    self.acc[row] += values[idx] * xv;
                }
            }
            self.current.clear();
            for &row in &self.touched {
                self.current.push((row, self.acc[row]));
                self.acc[row] = 0.0;
                self.seen[row] = false;
            }
        }
        &self.current
    }
}

/// Runs `per_column(j, column)` for every column of the product of
/// `factors`, in parallel over chunks of columns, returning results in
/// column order.
fn for_each_column<T, F>(factors: &[DebutFactor], exec: Exec, per_column: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &[(usize, f64)]) -> T + Sync + Send,
{
    let cols = factors.first().map_or(0, |f| f.shape().q);
    let dim = max_dim(factors);
    let chunks = cols.div_ceil(PROPAGATION_CHUNK);
    par::map_range(exec, chunks, |ch| {
        let mut prop = ColumnPropagator::new(dim);
        let end = ((ch + 1) * PROPAGATION_CHUNK).min(cols);
        (ch * PROPAGATION_CHUNK..end)
            .map(|j| per_column(j, prop.run(factors, j)))
            .collect::<Vec<T>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

fn max_dim(factors: &[DebutFactor]) -> usize {
    factors
        .iter()
        .map(|f| f.shape().p.max(f.shape().q))
        .max()
        .unwrap_or(0)
}

/// Explicit product of a run of factors (rightmost first). An empty run is
/// the identity of size `size_if_empty`.
pub(crate) fn materialize_factors(factors: &[DebutFactor], size_if_empty: usize, exec: Exec) -> DenseMatrix {
    let Some(first) = factors.first() else {
        return DenseMatrix::identity(size_if_empty);
    };
    let cols = first.shape().q;
    let rows = factors.last().expect("non-empty").shape().p;
    let columns = for_each_column(factors, exec, |_, col| col.to_vec());
    let mut out = DenseMatrix::zeros(rows, cols);
    for (j, col) in columns.into_iter().enumerate() {
        for (row, v) in col {
            out[(row, j)] = v;
        }
    }
    out
}

/// Explicit `p_N x q_1` product of the chain.
///
/// Each column is the image of a unit vector pushed through the factors
/// with sparse bookkeeping, so the cost is proportional to the number of
/// structural paths rather than to `q_1` dense factor products.
pub fn materialize(c: &DebutChain) -> DenseMatrix {
    materialize_with(c, Exec::default())
}

pub fn materialize_with(c: &DebutChain, exec: Exec) -> DenseMatrix {
    materialize_factors(c.factors(), c.cols_in(), exec)
}

/// Outcome of the bipolar test on one chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipolarReport {
    pub pass: bool,
    pub zero_entries: usize,
    pub non_bipolar_entries: usize,
    pub total_entries: usize,
}

impl fmt::Display for BipolarReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bipolar test: {} ({} entries, {} zero, {} not +-1)",
            if self.pass { "PASS" } else { "FAIL" },
            self.total_entries,
            self.zero_entries,
            self.non_bipolar_entries
        )
    }
}

/// Binds random +-1 values to every nonzero and checks that the product has
/// no zero entries and no entries other than +-1.
pub fn bipolar_test(spec: &ChainSpec, seed: u64) -> BipolarReport {
    bipolar_test_with(spec, seed, Exec::default())
}

pub fn bipolar_test_with(spec: &ChainSpec, seed: u64, exec: Exec) -> BipolarReport {
    let chain = DebutChain::random(spec, InitScheme::Bipolar, seed);
    let rows = spec.rows_out();
    let per_column = for_each_column(chain.factors(), exec, |_, col| {
        let structural_voids = rows - col.len();
        let zeros = col.iter().filter(|(_, v)| v.abs() <= BIPOLAR_TOLERANCE).count();
        let off = col
            .iter()
            .filter(|(_, v)| v.abs() > BIPOLAR_TOLERANCE && (v.abs() - 1.0).abs() > BIPOLAR_TOLERANCE)
            .count();
        (structural_voids + zeros, off)
    });
    let (zero_entries, non_bipolar_entries) = per_column
        .into_iter()
        .fold((0, 0), |(z, o), (cz, co)| (z + cz, o + co));
    BipolarReport {
        pass: zero_entries == 0 && non_bipolar_entries == 0,
        zero_entries,
        non_bipolar_entries,
        total_entries: rows * spec.cols_in(),
    }
}

/// Text grid of a matrix: `+` for +1, `-` for -1, `.` for 0 and `*` otherwise.
pub fn sign_pattern(m: &DenseMatrix) -> String {
    let mut s = String::with_capacity(m.rows() * (m.cols() + 1));
    for i in 0..m.rows() {
        for &v in m.row(i) {
            s.push(if v.abs() <= BIPOLAR_TOLERANCE {
                '.'
            } else if (v - 1.0).abs() <= BIPOLAR_TOLERANCE {
                '+'
            } else if (v + 1.0).abs() <= BIPOLAR_TOLERANCE {
                '-'
            } else {
                '*'
            });
        }
        s.push('\n');
    }
    s
}
