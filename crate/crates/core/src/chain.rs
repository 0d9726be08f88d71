//! Chain specifications: parsing, validation, densification bookkeeping,
//! compression metrics and cost estimates.
//!
//! Factors are stored rightmost first: index 0 is applied to the input
//! first and the last factor produces the output. The arrow notation
//! reads the other way round, leftmost factor first:
//!
//! ```text
//! 16 <-(2,2,8)- 16 <-(2,2,4)- 16 <-(2,2,2)- 16 <-(2,2,1)- 16
//! ```

use std::fmt;
use std::str::FromStr;

use crate::conv::ConvShape;
use crate::error::{DebutError, Result};
use crate::factor::FactorShape;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainSpec {
    factors: Vec<FactorShape>,
}

impl ChainSpec {
    /// Builds a spec from factors listed rightmost first, checking adjacency.
    pub fn new(factors: Vec<FactorShape>) -> Result<Self> {
        if factors.is_empty() {
            return Err(DebutError::Parse {
                line: 0,
                message: "a chain needs at least one factor".into(),
            });
        }
        for (i, w) in factors.windows(2).enumerate() {
            if w[1].q != w[0].p {
                return Err(DebutError::Adjacency {
                    junction: i + 1,
                    q: w[1].q,
                    p: w[0].p,
                });
            }
        }
        Ok(ChainSpec { factors })
    }

    /// Builds a spec from factors listed leftmost first (arrow order).
    pub fn from_leftmost_first(mut factors: Vec<FactorShape>) -> Result<Self> {
        factors.reverse();
        Self::new(factors)
    }

    /// Factors, rightmost (first applied) first.
    pub fn factors(&self) -> &[FactorShape] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Output dimension `p_N`.
    pub fn rows_out(&self) -> usize {
        self.factors.last().map_or(0, |f| f.p)
    }

    /// Input dimension `q_1`.
    pub fn cols_in(&self) -> usize {
        self.factors.first().map_or(0, |f| f.q)
    }

    /// Total structural nonzeros over all factors.
    pub fn nonzeros(&self) -> usize {
        self.factors.iter().map(FactorShape::nonzeros).sum()
    }

    /// Dimensions from input to output: `q_1, p_1, ..., p_N`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.cols_in())
            .chain(self.factors.iter().map(|f| f.p))
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

impl fmt::Display for ChainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_chain(self))
    }
}

impl FromStr for ChainSpec {
    type Err = DebutError;

    fn from_str(s: &str) -> Result<Self> {
        parse_chain(s)
    }
}

/// Parses either the arrow form or the line form (`p q r s t` per line,
/// leftmost factor first). Lines starting with `#` are ignored.
pub fn parse_chain(text: &str) -> Result<ChainSpec> {
    ChainSpec::new(parse_factors(text)?)
}

/// Parses chain text into factor shapes, rightmost first, without checking
/// that neighbouring factors fit. Use [`validate_factors`] to diagnose them.
pub fn parse_factors(text: &str) -> Result<Vec<FactorShape>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let Some(&(first_line, first)) = lines.first() else {
        return Err(DebutError::Parse {
            line: 0,
            message: "empty chain text".into(),
        });
    };
    let mut factors = if first.contains("<-") {
        if let Some(&(line, _)) = lines.get(1) {
            return Err(DebutError::Parse {
                line,
                message: "arrow notation takes a single line".into(),
            });
        }
        parse_arrow(first_line, first)?
    } else {
        parse_lines(&lines)?
    };
    factors.reverse();
    Ok(factors)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_usize(line: usize, tok: &str) -> Result<usize> {
    tok.trim().parse::<usize>().map_err(|_| DebutError::Parse {
        line,
        message: format!("expected a positive integer, found `{}`", tok.trim()),
    })
}

fn parse_arrow(line: usize, text: &str) -> Result<Vec<FactorShape>> {
    let err = |message: String| DebutError::Parse { line, message };
    let mut rest = text.trim();

    let take_dim = |rest: &mut &str| -> Result<usize> {
        let end = rest
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(err(format!("expected a dimension at `{}`", rest)));
        }
        let v = parse_usize(line, &rest[..end])?;
        *rest = rest[end..].trim_start();
        Ok(v)
    };

    let mut dims = vec![take_dim(&mut rest)?];
    let mut triples = Vec::new();
    while !rest.is_empty() {
        let after = rest
            .strip_prefix("<-")
            .ok_or_else(|| err(format!("expected `<-(r,s,t)-` at `{rest}`")))?
            .trim_start();
        let after = after
            .strip_prefix('(')
            .ok_or_else(|| err(format!("expected `(` at `{after}`")))?;
        let close = after
            .find(')')
            .ok_or_else(|| err("unclosed `(`".into()))?;
        let parts: Vec<&str> = after[..close].split(',').collect();
        if parts.len() != 3 {
            return Err(err(format!(
                "expected three values (r,s,t), found `{}`",
                &after[..close]
            )));
        }
        let triple = (
            parse_usize(line, parts[0])?,
            parse_usize(line, parts[1])?,
            parse_usize(line, parts[2])?,
        );
        let after = after[close + 1..].trim_start();
        rest = after
            .strip_prefix('-')
            .ok_or_else(|| err(format!("expected `-` after `)` at `{after}`")))?
            .trim_start();
        triples.push(triple);
        dims.push(take_dim(&mut rest)?);
    }
    if triples.is_empty() {
        return Err(err("a chain needs at least one factor".into()));
    }

    let mut leftmost_first = Vec::with_capacity(triples.len());
    for (k, &(r, s, t)) in triples.iter().enumerate() {
        leftmost_first.push(FactorShape::new(dims[k], dims[k + 1], r, s, t)?);
    }
    Ok(leftmost_first)
}

fn parse_lines(lines: &[(usize, &str)]) -> Result<Vec<FactorShape>> {
    let mut leftmost_first = Vec::with_capacity(lines.len());
    for &(line, text) in lines {
        let nums: Vec<usize> = text
            .split_whitespace()
            .map(|tok| parse_usize(line, tok))
            .collect::<Result<_>>()?;
        if nums.len() != 5 {
            return Err(DebutError::Parse {
                line,
                message: format!("expected `p q r s t`, found {} values", nums.len()),
            });
        }
        leftmost_first.push(FactorShape::new(nums[0], nums[1], nums[2], nums[3], nums[4])?);
    }
    Ok(leftmost_first)
}

/// Canonical arrow notation, leftmost factor first.
pub fn format_chain(spec: &ChainSpec) -> String {
    let mut out = String::new();
    for f in spec.factors().iter().rev() {
        out.push_str(&format!("{} <-({},{},{})- ", f.p, f.r, f.s, f.t));
    }
    out.push_str(&spec.cols_in().to_string());
    out
}

/// Line form: one `p q r s t` per line, leftmost factor first.
pub fn format_chain_lines(spec: &ChainSpec) -> String {
    spec.factors()
        .iter()
        .rev()
        .map(|f| format!("{} {} {} {} {}\n", f.p, f.q, f.r, f.s, f.t))
        .collect()
}

/// Result of checking a chain for adjacency, densification and full density.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    /// One flag per junction between factor `i-1` and `i` (`i = 1..N`).
    pub adjacency_ok: Vec<bool>,
    /// One flag per factor: `t_0 == 1`, `t_i == r_0 * ... * r_{i-1}`.
    pub densification_ok: Vec<bool>,
    pub full_density_ok: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn adjacency_pass(&self) -> bool {
        self.adjacency_ok.iter().all(|&b| b)
    }

    pub fn densification_pass(&self) -> bool {
        self.densification_ok.iter().all(|&b| b)
    }

    /// Valid for substitution: every check passes.
    pub fn pass(&self) -> bool {
        self.adjacency_pass() && self.densification_pass() && self.full_density_ok
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |b: bool| if b { "ok" } else { "FAIL" };
        writeln!(f, "adjacency:     {}", flag(self.adjacency_pass()))?;
        writeln!(f, "densification: {}", flag(self.densification_pass()))?;
        writeln!(f, "full density:  {}", flag(self.full_density_ok))?;
        for m in &self.messages {
            writeln!(f, "  - {m}")?;
        }
        write!(f, "valid: {}", if self.pass() { "yes" } else { "no" })
    }
}

/// Checks a chain. Failures are reported, never returned as errors.
pub fn validate(spec: &ChainSpec) -> ValidationReport {
    validate_factors(spec.factors())
}

/// Same as [`validate`] on a raw factor list (rightmost first), which may
/// violate adjacency.
pub fn validate_factors(factors: &[FactorShape]) -> ValidationReport {
    let mut messages = Vec::new();
    let mut adjacency_ok = Vec::with_capacity(factors.len().saturating_sub(1));
    for (i, w) in factors.windows(2).enumerate() {
        let ok = w[1].q == w[0].p;
        if !ok {
            messages.push(format!(
                "junction {}: factor {} has q = {} but factor {} has p = {}",
                i + 1,
                i + 2,
                w[1].q,
                i + 1,
                w[0].p
            ));
        }
        adjacency_ok.push(ok);
    }

    let mut densification_ok = Vec::with_capacity(factors.len());
    let mut r_acc = 1usize;
    for (i, f) in factors.iter().enumerate() {
        let ok = f.t == r_acc;
        if !ok {
            if i == 0 {
                messages.push(format!(
                    "factor 1 (rightmost) must have t = 1, found t = {}",
                    f.t
                ));
            } else {
                messages.push(format!(
                    "factor {}: t = {} but the product of r over the factors to its right is {}",
                    i + 1,
                    f.t,
                    r_acc
                ));
            }
        }
        densification_ok.push(ok);
        r_acc = r_acc.saturating_mul(f.r);
    }

    let r_prod: usize = factors.iter().map(|f| f.r).product();
    let s_prod: usize = factors.iter().map(|f| f.s).product();
    let rows_out = factors.last().map_or(0, |f| f.p);
    let cols_in = factors.first().map_or(0, |f| f.q);
    let full_density_ok = !factors.is_empty() && r_prod == rows_out && s_prod == cols_in;
    if !full_density_ok {
        messages.push(format!(
            "full density needs prod(r) = {rows_out} and prod(s) = {cols_in}, found {r_prod} and {s_prod}"
        ));
    }

    ValidationReport {
        adjacency_ok,
        densification_ok,
        full_density_ok,
        messages,
    }
}

/// Shape bookkeeping for the product of factors `0..=i` of a densifying chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialProductShape {
    pub rows: usize,
    pub cols: usize,
    /// Rows of each dense sub-block (product of `r` over consumed factors).
    pub block_rows: usize,
    /// Columns of each dense sub-block (product of `s`).
    pub block_cols: usize,
    /// Always 1: dense sub-blocks.
    pub t: usize,
}

impl PartialProductShape {
    /// The partial product viewed as a factor shape `(P, Q, R_acc, S_acc, 1)`.
    pub fn as_factor_shape(&self) -> Result<FactorShape> {
        Ok(FactorShape::new(
            self.rows,
            self.cols,
            self.block_rows,
            self.block_cols,
            1,
        )?)
    }
}

/// Dense-block structure of every prefix product, rightmost first.
pub fn partial_products(spec: &ChainSpec) -> Result<Vec<PartialProductShape>> {
    let mut out = Vec::with_capacity(spec.len());
    let (mut r_acc, mut s_acc) = (1usize, 1usize);
    for (i, f) in spec.factors().iter().enumerate() {
        if f.t != r_acc {
            return Err(DebutError::Densification {
                junction: i,
                t: f.t,
                expected: r_acc,
            });
        }
        r_acc *= f.r;
        s_acc *= f.s;
        out.push(PartialProductShape {
            rows: f.p,
            cols: spec.cols_in(),
            block_rows: r_acc,
            block_cols: s_acc,
            t: 1,
        });
    }
    Ok(out)
}

/// Layer-wise compression `1 - nnz / (p_N q_1)`, weights only.
pub fn layer_compression(spec: &ChainSpec) -> f64 {
    let dense = (spec.rows_out() * spec.cols_in()) as f64;
    1.0 - spec.nonzeros() as f64 / dense
}

/// Multiply-accumulate accounting for a chain versus its dense equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostEstimate {
    pub debut_nonzeros_total: usize,
    pub debut_macs_per_column: usize,
    pub max_factor_nonzeros: usize,
    pub gemm_macs_per_column: usize,
    /// `H_o W_o` in a convolution context, else 1.
    pub num_columns: usize,
}

impl CostEstimate {
    pub fn debut_macs(&self) -> usize {
        self.debut_macs_per_column * self.num_columns
    }

    pub fn gemm_macs(&self) -> usize {
        self.gemm_macs_per_column * self.num_columns
    }

    /// Chain MACs over dense MACs.
    pub fn mac_ratio(&self) -> f64 {
        self.debut_macs_per_column as f64 / self.gemm_macs_per_column as f64
    }
}

pub fn estimate_cost(spec: &ChainSpec, conv: Option<&ConvShape>) -> Result<CostEstimate> {
    let num_columns = match conv {
        Some(c) => {
            let flat_in = c.kernel * c.kernel * c.c_in;
            if spec.rows_out() != c.c_out || spec.cols_in() != flat_in {
                return Err(DebutError::ShapeMismatch(format!(
                    "chain is {}x{} but the layer flattens to {}x{}",
                    spec.rows_out(),
                    spec.cols_in(),
                    c.c_out,
                    flat_in
                )));
            }
            let (_, h, w) = c.output_shape()?;
            h * w
        }
        None => 1,
    };
    let nnz = spec.nonzeros();
    Ok(CostEstimate {
        debut_nonzeros_total: nnz,
        debut_macs_per_column: nnz,
        max_factor_nonzeros: spec
            .factors()
            .iter()
            .map(FactorShape::nonzeros)
            .max()
            .unwrap_or(0),
        gemm_macs_per_column: spec.rows_out() * spec.cols_in(),
        num_columns,
    })
}
