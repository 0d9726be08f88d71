//! Heuristic synthesis of valid chains for given boundary dimensions.
//!
//! A chain is fully determined by its ordered `r` and `s` sequences once
//! densification and full density are imposed: with running products
//! `Racc_i = r_0 ... r_i` and `Sacc_i = s_0 ... s_i` (rightmost first),
//! factor `i` has `p_i = Q * Racc_i / Sacc_i`, `t_i = Racc_{i-1}` and
//! `Q / Sacc_i` diagonal blocks. The search therefore only enumerates ways of
//! splitting `rows_out` and `cols_in` into ordered factors.
//!
//! The odd parts of both dimensions go to the rightmost factor, possibly
//! split with its left neighbour; the remaining powers of two are spread over
//! the other factors in a handful of fixed patterns, each factor taking at
//! most `2^3` on either side.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::chain::ChainSpec;
use crate::error::{DebutError, Result};
use crate::factor::FactorShape;

/// Largest power-of-two exponent a non-head factor takes on either side.
const MAX_SLOT_EXP: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Style {
    /// Intermediate dimensions never change direction.
    Monotonic,
    /// Dimensions rise above both boundaries and fall back once.
    Bulging,
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::Monotonic => "monotonic",
            Style::Bulging => "bulging",
        })
    }
}

impl FromStr for Style {
    type Err = DebutError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "monotonic" | "mono" => Ok(Style::Monotonic),
            "bulging" | "bulge" => Ok(Style::Bulging),
            other => Err(DebutError::Parse {
                line: 0,
                message: format!("unknown chain style {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorOptions {
    pub max_factors: usize,
    /// Peak dimension of a bulging chain relative to the larger boundary.
    pub max_bulge_ratio: f64,
    pub max_candidates: usize,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        GeneratorOptions {
            max_factors: 6,
            max_bulge_ratio: 2.0,
            max_candidates: 20,
        }
    }
}

fn split_two_power(mut n: usize) -> (u32, usize) {
    let mut e = 0;
    while n.is_multiple_of(2) {
        n /= 2;
        e += 1;
    }
    (e, n)
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|&d| n.is_multiple_of(d)).collect()
}

/// Fixed ways of spreading `e` doublings over `slots` factors.
fn spread_patterns(e: u32, slots: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    if slots == 0 {
        if e == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    if e > MAX_SLOT_EXP * slots as u32 {
        return out;
    }
    let base = e / slots as u32;
    let rem = e as usize % slots;
    let even_front: Vec<u32> = (0..slots).map(|i| base + u32::from(i < rem)).collect();
    let mut even_back = even_front.clone();
    even_back.reverse();
    out.push(even_front);
    out.push(even_back);
    for chunk in 1..=MAX_SLOT_EXP {
        let mut left = e;
        let mut front = vec![0; slots];
        for slot in front.iter_mut() {
            *slot = left.min(chunk);
            left -= *slot;
        }
        if left == 0 {
            let mut back = front.clone();
            back.reverse();
            out.push(front);
            out.push(back);
        }
    }
    let mut seen = HashSet::new();
    out.retain(|v| seen.insert(v.clone()));
    out
}

/// Builds the forced chain for ordered `r` and `s` sequences (rightmost
/// first).
pub fn chain_from_sequences(r: &[usize], s: &[usize]) -> Result<ChainSpec> {
    if r.len() != s.len() || r.is_empty() {
        return Err(DebutError::Dimension(format!(
            "need equally long non-empty r and s sequences, got {} and {}",
            r.len(),
            s.len()
        )));
    }
    let q_total: usize = s.iter().product();
    let mut factors = Vec::with_capacity(r.len());
    let (mut racc, mut sacc, mut q) = (1usize, 1usize, q_total);
    for (&ri, &si) in r.iter().zip(s) {
        let t = racc;
        racc *= ri;
        sacc *= si;
        if !(q_total * racc).is_multiple_of(sacc) {
            return Err(DebutError::Dimension(format!(
                "running products {racc} and {sacc} give a fractional dimension"
            )));
        }
        let p = q_total * racc / sacc;
        factors.push(FactorShape::new(p, q, ri, si, t)?);
        q = p;
    }
    ChainSpec::new(factors)
}

/// Boundary and intermediate dimensions from right to left.
fn dim_sequence(spec: &ChainSpec) -> Vec<usize> {
    std::iter::once(spec.cols_in())
        .chain(spec.factors().iter().map(|f| f.p))
        .collect()
}

pub fn is_monotonic(spec: &ChainSpec) -> bool {
    let d = dim_sequence(spec);
    d.windows(2).all(|w| w[0] <= w[1]) || d.windows(2).all(|w| w[0] >= w[1])
}

/// Single interior peak strictly above both boundaries and at most
/// `max_ratio` times the larger one.
pub fn is_bulging(spec: &ChainSpec, max_ratio: f64) -> bool {
    let d = dim_sequence(spec);
    let bound = spec.rows_out().max(spec.cols_in());
    let peak = *d.iter().max().expect("non-empty");
    if peak <= bound || peak as f64 > max_ratio * bound as f64 {
        return false;
    }
    let top = d.iter().position(|&x| x == peak).expect("peak present");
    d[..=top].windows(2).all(|w| w[0] <= w[1]) && d[top..].windows(2).all(|w| w[0] >= w[1])
}

/// Valid chains mapping `cols_in` to `rows_out` in the requested style,
/// sorted by total nonzeros, then fewer factors, then text.
pub fn generate_chains(rows_out: usize, cols_in: usize, style: Style, opts: &GeneratorOptions) -> Result<Vec<ChainSpec>> {
    if rows_out == 0 || cols_in == 0 {
        return Err(DebutError::Dimension(format!(
            "boundary dimensions must be positive, got {rows_out}x{cols_in}"
        )));
    }
    let (a, p_odd) = split_two_power(rows_out);
    let (b, q_odd) = split_two_power(cols_in);

    let mut seen: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
    let mut found: Vec<ChainSpec> = Vec::new();
    for n in 1..=opts.max_factors.max(1) {
        // Odd parts go to the rightmost factor, or are split with its neighbour.
        let odd_splits: Vec<((usize, usize), (usize, usize))> = if n == 1 {
            vec![((p_odd, q_odd), (1, 1))]
        } else {
            let mut v = Vec::new();
            for pa in divisors(p_odd) {
                for qa in divisors(q_odd) {
                    v.push(((pa, qa), (p_odd / pa, q_odd / qa)));
                }
            }
            v
        };
        for &((head_r, head_s), (next_r, next_s)) in &odd_splits {
            for x in 0..=a {
                for y in 0..=b {
                    for rs in spread_patterns(a - x, n - 1) {
                        for ss in spread_patterns(b - y, n - 1) {
                            let mut r = vec![head_r << x];
                            let mut s = vec![head_s << y];
                            r.extend(rs.iter().map(|&e| 1usize << e));
                            s.extend(ss.iter().map(|&e| 1usize << e));
                            if n > 1 {
                                r[1] *= next_r;
                                s[1] *= next_s;
                            }
                            if n > 1 && r.iter().zip(&s).any(|(&ri, &si)| ri == 1 && si == 1) {
                                continue;
                            }
                            if !seen.insert((r.clone(), s.clone())) {
                                continue;
                            }
                            let Ok(spec) = chain_from_sequences(&r, &s) else {
                                continue;
                            };
                            let keep = match style {
                                Style::Monotonic => is_monotonic(&spec),
                                Style::Bulging => is_bulging(&spec, opts.max_bulge_ratio),
                            };
                            if keep {
                                found.push(spec);
                            }
                        }
                    }
                }
            }
        }
    }
    if found.is_empty() {
        return Err(DebutError::NoChainFound {
            rows_out,
            cols_in,
            max_factors: opts.max_factors,
        });
    }
    let mut keyed: Vec<(usize, usize, String, ChainSpec)> = found
        .into_iter()
        .map(|c| (c.nonzeros(), c.len(), c.to_string(), c))
        .collect();
    keyed.sort_by(|x, y| (x.0, x.1, &x.2).cmp(&(y.0, y.1, &y.2)));
    keyed.truncate(opts.max_candidates.max(1));
    Ok(keyed.into_iter().map(|k| k.3).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::parse_chain;

    fn opts(max_factors: usize) -> GeneratorOptions {
        GeneratorOptions {
            max_factors,
            ..GeneratorOptions::default()
        }
    }

    #[test]
    fn butterfly_is_among_square_candidates() {
        let eq1 = parse_chain("16 <-(2,2,8)- 16 <-(2,2,4)- 16 <-(2,2,2)- 16 <-(2,2,1)- 16").unwrap();
        let got = generate_chains(16, 16, Style::Monotonic, &opts(4)).unwrap();
        assert!(got.contains(&eq1));
    }

    #[test]
    fn single_factor_is_dense() {
        for n in [1, 7, 12, 16] {
            let got = generate_chains(n, n, Style::Monotonic, &opts(1)).unwrap();
            assert_eq!(got.len(), 1);
            assert_eq!(got[0].factors(), &[FactorShape::new(n, n, n, n, 1).unwrap()]);
        }
    }

    #[test]
    fn sequences_force_the_chain() {
        let fc1 = parse_chain("128 <-(2,2,64)- 128 <-(2,2,32)- 128 <-(1,2,32)- 256 <-(2,2,16)- 256 <-(16,25,1)- 400").unwrap();
        assert_eq!(chain_from_sequences(&[16, 2, 1, 2, 2], &[25, 2, 2, 2, 2]).unwrap(), fc1);
        assert!(chain_from_sequences(&[2], &[2, 2]).is_err());
    }

    #[test]
    fn candidates_are_valid_sorted_and_styled() {
        for (m, n) in [(128, 400), (16, 72), (512, 4608), (64, 128), (10, 64)] {
            let mono = generate_chains(m, n, Style::Monotonic, &GeneratorOptions::default()).unwrap();
            for c in &mono {
                assert!(c.validate().pass(), "{c}");
                assert!(is_monotonic(c));
                assert_eq!((c.rows_out(), c.cols_in()), (m, n));
            }
            assert!(mono.windows(2).all(|w| w[0].nonzeros() <= w[1].nonzeros()));
            if let Ok(bulge) = generate_chains(m, n, Style::Bulging, &GeneratorOptions::default()) {
                for c in &bulge {
                    assert!(c.validate().pass(), "{c}");
                    assert!(is_bulging(c, 2.0), "{c}");
                }
            }
        }
    }

    #[test]
    fn bulging_found_for_power_of_two_layers() {
        let got = generate_chains(128, 400, Style::Bulging, &GeneratorOptions::default()).unwrap();
        assert!(!got.is_empty());
    }

    #[test]
    fn deterministic() {
        let a = generate_chains(96, 576, Style::Monotonic, &GeneratorOptions::default()).unwrap();
        let b = generate_chains(96, 576, Style::Monotonic, &GeneratorOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            generate_chains(0, 4, Style::Monotonic, &opts(2)),
            Err(DebutError::Dimension(_))
        ));
        assert!(matches!(
            generate_chains(7, 7, Style::Bulging, &opts(3)),
            Err(DebutError::NoChainFound { .. })
        ));
    }

    #[test]
    fn style_parsing() {
        assert_eq!("bulging".parse::<Style>().unwrap(), Style::Bulging);
        assert_eq!("Monotonic".parse::<Style>().unwrap(), Style::Monotonic);
        assert!("wavy".parse::<Style>().is_err());
    }
}
