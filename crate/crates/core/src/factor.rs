//! A single deformable butterfly factor.
//!
//! A factor with shape `(p, q, r, s, t)` is a `p x q` matrix made of
//! `D = p / (r t) = q / (s t)` blocks along its main diagonal. Each block is an
//! `r x s` grid of `t x t` diagonal matrices, so the factor has exactly
//! `p s = q r` structural nonzeros.
//!
//! Values are stored flat in `[D, r, s, t]` order: the nonzero at flat index
//! `((d r + i) s + j) t + k` sits at row `d r t + i t + k`, column
//! `d s t + j t + k`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Uniform};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{DebutError, Result, ShapeError};

/// Shape of a factor `R^{(p,q)}_{(r,s,t)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorShape {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub t: usize,
}

impl FactorShape {
    pub fn new(p: usize, q: usize, r: usize, s: usize, t: usize) -> Result<Self, ShapeError> {
        if p == 0 || q == 0 || r == 0 || s == 0 || t == 0 {
            return Err(ShapeError::NonPositive { p, q, r, s, t });
        }
        let (rt, st) = (r * t, s * t);
        // p/(rt) == q/(st) as rationals, checked before integrality.
        if p as u128 * st as u128 != q as u128 * rt as u128 {
            return Err(ShapeError::BlockCount { p, q, rt, st });
        }
        if !p.is_multiple_of(rt) || !q.is_multiple_of(st) {
            return Err(ShapeError::Divisibility { p, q, rt, st });
        }
        let shape = FactorShape { p, q, r, s, t };
        assert_eq!(p * s, q * r, "p*s must equal q*r for a valid shape");
        Ok(shape)
    }

    /// Number of diagonal blocks `D`.
    #[inline]
    pub fn blocks(&self) -> usize {
        self.p / (self.r * self.t)
    }

    /// Structural nonzero count `p s` (equal to `q r`).
    #[inline]
    pub fn nonzeros(&self) -> usize {
        self.p * self.s
    }

    /// Matrix position `(row, col)` of the nonzero at flat index `idx`.
    #[inline]
    pub fn position_of(&self, idx: usize) -> (usize, usize) {
        let FactorShape { r, s, t, .. } = *self;
        let k = idx % t;
        let j = (idx / t) % s;
        let i = (idx / (t * s)) % r;
        let d = idx / (t * s * r);
        (d * r * t + i * t + k, d * s * t + j * t + k)
    }

    /// Canonical enumeration of the pattern as `(row, col, flat_index)`, in flat order.
    pub fn positions(&self) -> Positions {
        Positions {
            shape: *self,
            next: 0,
        }
    }

    /// Flat indices of the `r` nonzeros in column `col`, with their rows.
    pub(crate) fn column_entries(&self, col: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let FactorShape { r, s, t, .. } = *self;
        let d = col / (s * t);
        let j = (col / t) % s;
        let k = col % t;
        (0..r).map(move |i| {
            let row = d * r * t + i * t + k;
            let idx = ((d * r + i) * s + j) * t + k;
            (row, idx)
        })
    }
}

impl fmt::Display for FactorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "R^({},{})_({},{},{})",
            self.p, self.q, self.r, self.s, self.t
        )
    }
}

/// Iterator over the structural nonzeros of a factor shape.
#[derive(Debug, Clone)]
pub struct Positions {
    shape: FactorShape,
    next: usize,
}

impl Iterator for Positions {
    type Item = (usize, usize, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.shape.nonzeros() {
            return None;
        }
        let idx = self.next;
        self.next += 1;
        let (row, col) = self.shape.position_of(idx);
        Some((row, col, idx))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = self.shape.nonzeros() - self.next;
        (rem, Some(rem))
    }
}

impl ExactSizeIterator for Positions {}

/// Structural nonzero count of a shape.
pub fn nonzero_count(shape: &FactorShape) -> usize {
    debug_assert_eq!(shape.p * shape.s, shape.q * shape.r);
    shape.nonzeros()
}

/// Distribution used to draw factor values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    Gaussian { sigma: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Each value independently `-1` or `+1`.
    Bipolar,
}

impl std::str::FromStr for InitScheme {
    type Err = DebutError;

    /// Accepts `bipolar`, `gaussian:<sigma>` and `uniform:<lo>,<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || DebutError::Format(format!("unknown init scheme `{s}`"));
        let s = s.trim();
        if s.eq_ignore_ascii_case("bipolar") {
            return Ok(InitScheme::Bipolar);
        }
        let (name, args) = s.split_once(':').ok_or_else(bad)?;
        match name {
            "gaussian" => {
                let sigma: f64 = args.trim().parse().map_err(|_| bad())?;
                Ok(InitScheme::Gaussian { sigma })
            }
            "uniform" => {
                let (lo, hi) = args.split_once(',').ok_or_else(bad)?;
                let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
                let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
                Ok(InitScheme::Uniform { lo, hi })
            }
            _ => Err(bad()),
        }
    }
}

/// Seeded generator used for every random draw in the crate.
pub(crate) fn seeded_rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub(crate) fn draw_values<R: Rng>(rng: &mut R, n: usize, scheme: InitScheme) -> Vec<f64> {
    match scheme {
        InitScheme::Bipolar => (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect(),
        InitScheme::Gaussian { sigma } => {
            if sigma == 0.0 {
                return vec![0.0; n];
            }
            let normal = Normal::new(0.0, sigma.abs()).expect("finite sigma");
            (0..n).map(|_| normal.sample(rng)).collect()
        }
        InitScheme::Uniform { lo, hi } => {
            if lo == hi {
                return vec![lo; n];
            }
            let (lo, hi) = if lo < hi { (lo, hi) } else { (hi, lo) };
            let dist = Uniform::new(lo, hi).expect("finite bounds");
            (0..n).map(|_| dist.sample(rng)).collect()
        }
    }
}

/// A factor shape together with its nonzero values.
#[derive(Debug, Clone, PartialEq)]
pub struct DebutFactor {
    shape: FactorShape,
    values: Vec<f64>,
}

impl DebutFactor {
    /// Builds a factor, zero-filled when `values` is `None`.
    pub fn new(p: usize, q: usize, r: usize, s: usize, t: usize, values: Option<Vec<f64>>) -> Result<Self> {
        let shape = FactorShape::new(p, q, r, s, t)?;
        match values {
            Some(v) => Self::from_values(shape, v),
            None => Ok(Self::zeros(shape)),
        }
    }

    pub fn zeros(shape: FactorShape) -> Self {
        DebutFactor {
            shape,
            values: vec![0.0; shape.nonzeros()],
        }
    }

    pub fn from_values(shape: FactorShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.nonzeros() {
            return Err(DebutError::Length {
                expected: shape.nonzeros(),
                actual: values.len(),
            });
        }
        Ok(DebutFactor { shape, values })
    }

    /// Deterministic random values for `shape` given `scheme` and `seed`.
    pub fn random(shape: FactorShape, scheme: InitScheme, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        Self::random_with(shape, scheme, &mut rng)
    }

    pub(crate) fn random_with<R: Rng>(shape: FactorShape, scheme: InitScheme, rng: &mut R) -> Self {
        DebutFactor {
            shape,
            values: draw_values(rng, shape.nonzeros(), scheme),
        }
    }

    #[inline]
    pub fn shape(&self) -> FactorShape {
        self.shape
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Dense `p x q` row-major copy of the factor.
    pub fn to_dense(&self) -> crate::dense::DenseMatrix {
        let mut m = crate::dense::DenseMatrix::zeros(self.shape.p, self.shape.q);
        for (row, col, idx) in self.shape.positions() {
            m[(row, col)] = self.values[idx];
        }
        m
    }
}

/// Random factor for `shape`; see [`DebutFactor::random`].
pub fn random_init(shape: FactorShape, scheme: InitScheme, seed: u64) -> DebutFactor {
    DebutFactor::random(shape, scheme, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(p: usize, q: usize, r: usize, s: usize, t: usize) -> FactorShape {
        FactorShape::new(p, q, r, s, t).unwrap()
    }

    #[test]
    fn butterfly_stage_shape() {
        let f = DebutFactor::new(16, 16, 2, 2, 8, None).unwrap();
        assert_eq!(f.shape().blocks(), 1);
        assert_eq!(nonzero_count(&f.shape()), 32);
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_count_mismatch() {
        assert_eq!(
            FactorShape::new(16, 16, 2, 3, 1),
            Err(ShapeError::BlockCount {
                p: 16,
                q: 16,
                rt: 2,
                st: 3
            })
        );
        assert!(FactorShape::new(16, 24, 2, 3, 1).is_ok());
        // Equal block ratio, but 6 does not divide into blocks of 4 rows.
        assert!(matches!(
            FactorShape::new(6, 6, 2, 2, 2),
            Err(ShapeError::Divisibility { .. })
        ));
        assert!(matches!(
            FactorShape::new(0, 4, 1, 1, 1),
            Err(ShapeError::NonPositive { .. })
        ));
    }

    #[test]
    fn wrong_values_length() {
        let err = DebutFactor::new(4, 4, 2, 2, 1, Some(vec![1.0; 7])).unwrap_err();
        assert_eq!(
            err,
            DebutError::Length {
                expected: 8,
                actual: 7
            }
        );
    }

    #[test]
    fn nonzero_counts() {
        assert_eq!(nonzero_count(&shape(16, 16, 2, 2, 8)), 32);
        assert_eq!(nonzero_count(&shape(256, 400, 16, 25, 1)), 6400);
        assert_eq!(nonzero_count(&shape(9, 9, 1, 1, 1)), 9);
    }

    #[test]
    fn identity_pattern() {
        let got: Vec<_> = shape(2, 2, 1, 1, 1).positions().collect();
        assert_eq!(got, vec![(0, 0, 0), (1, 1, 1)]);

        let n = 5;
        let f = DebutFactor::new(n, n, 1, 1, 1, Some(vec![1.0; n])).unwrap();
        let d = f.to_dense();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(d[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn two_dense_blocks() {
        let got: Vec<_> = shape(4, 4, 2, 2, 1)
            .positions()
            .map(|(r, c, _)| (r, c))
            .collect();
        assert_eq!(
            got,
            vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)]
        );
    }

    #[test]
    fn grid_of_diagonals() {
        let mut got: Vec<_> = shape(4, 4, 2, 2, 2)
            .positions()
            .map(|(r, c, _)| (r, c))
            .collect();
        got.sort();
        assert_eq!(
            got,
            vec![(0, 0), (0, 2), (1, 1), (1, 3), (2, 0), (2, 2), (3, 1), (3, 3)]
        );
    }

    #[test]
    fn column_entries_match_positions() {
        let sh = shape(24, 36, 2, 3, 2);
        let mut by_col = vec![Vec::new(); sh.q];
        for (row, col, idx) in sh.positions() {
            by_col[col].push((row, idx));
        }
        for (col, expected) in by_col.iter().enumerate() {
            let got: Vec<_> = sh.column_entries(col).collect();
            assert_eq!(&got, expected);
            assert_eq!(got.len(), sh.r);
        }
    }

    #[test]
    fn bipolar_init() {
        let sh = shape(16, 16, 2, 2, 8);
        let f = random_init(sh, InitScheme::Bipolar, 7);
        assert!(f.values().iter().all(|&v| v == 1.0 || v == -1.0));
        assert!(f.values().contains(&1.0));
        assert!(f.values().iter().any(|&v| v == -1.0));
        assert_eq!(f, random_init(sh, InitScheme::Bipolar, 7));
        assert_ne!(f, random_init(sh, InitScheme::Bipolar, 8));
    }

    #[test]
    fn degenerate_gaussian_is_zero() {
        let f = random_init(shape(8, 8, 2, 2, 1), InitScheme::Gaussian { sigma: 0.0 }, 1);
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_init_bounds() {
        let f = random_init(
            shape(8, 8, 2, 2, 1),
            InitScheme::Uniform { lo: -0.5, hi: 0.25 },
            3,
        );
        assert!(f.values().iter().all(|&v| (-0.5..0.25).contains(&v)));
    }

    #[test]
    fn parse_scheme() {
        assert_eq!("bipolar".parse::<InitScheme>().unwrap(), InitScheme::Bipolar);
        assert_eq!(
            "gaussian:0.5".parse::<InitScheme>().unwrap(),
            InitScheme::Gaussian { sigma: 0.5 }
        );
        assert_eq!(
            "uniform:-1,1".parse::<InitScheme>().unwrap(),
            InitScheme::Uniform { lo: -1.0, hi: 1.0 }
        );
        assert!("laplace:1".parse::<InitScheme>().is_err());
    }
}
