//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use debut::{ConvShape, DenseMatrix, FactorShape, Tensor3};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Direct nested-loop convolution with zero padding. `w` is `[c_o, c_i, k, k]`
/// row-major.
pub fn conv_oracle(x: &Tensor3, w: &[f64], shape: &ConvShape, bias: Option<&[f64]>) -> Vec<f64> {
    let (ho, wo) = (
        (shape.height + 2 * shape.pad - shape.kernel) / shape.stride + 1,
        (shape.width + 2 * shape.pad - shape.kernel) / shape.stride + 1,
    );
    let k = shape.kernel;
    let mut out = vec![0.0; shape.c_out * ho * wo];
    for o in 0..shape.c_out {
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = bias.map_or(0.0, |b| b[o]);
                for c in 0..shape.c_in {
                    for u in 0..k {
                        for v in 0..k {
                            let ih = (oh * shape.stride + u) as isize - shape.pad as isize;
                            let iw = (ow * shape.stride + v) as isize - shape.pad as isize;
                            if ih < 0 || iw < 0 || ih >= shape.height as isize || iw >= shape.width as isize {
                                continue;
                            }
                            let wv = w[((o * shape.c_in + c) * k + u) * k + v];
                            acc += wv * x.get(c, ih as usize, iw as usize);
                        }
                    }
                }
                out[(o * ho + oh) * wo + ow] = acc;
            }
        }
    }
    out
}

/// Least squares over the pattern of `shape` by assembling the explicit
/// Khatri-Rao design matrix (one column `vec(L[:, i] R[j, :])` per unknown)
/// and solving it with an SVD. Returns values and residual norm.
pub fn khatri_rao_solve(f: &DenseMatrix, l: &DenseMatrix, r: &DenseMatrix, shape: &FactorShape) -> (Vec<f64>, f64) {
    let (m, n) = (f.rows(), f.cols());
    let u = shape.nonzeros();
    let mut a = DMatrix::<f64>::zeros(m * n, u);
    for (row, col, idx) in shape.positions() {
        for i in 0..m {
            let li = l[(i, row)];
            if li == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(i * n + j, idx)] = li * r[(col, j)];
            }
        }
    }
    let b = DVector::from_row_slice(f.data());
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-12).expect("svd solve");
    let residual = (&a * &x - &b).norm();
    (x.iter().copied().collect(), residual)
}

/// A uniformly drawn valid shape with `p, q <= max_dim`.
pub fn random_shape(rng: &mut impl Rng, max_dim: usize) -> FactorShape {
    loop {
        let t = rng.random_range(1..=16);
        let r = rng.random_range(1..=16);
        let s = rng.random_range(1..=16);
        let cap = max_dim / (r.max(s) * t);
        if cap == 0 {
            continue;
        }
        let d = rng.random_range(1..=cap);
        return FactorShape::new(d * r * t, d * s * t, r, s, t).expect("constructed valid");
    }
}

pub fn rel_frobenius(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let denom = b.frobenius_norm();
    let d = a.distance(b).expect("same dims");
    if denom == 0.0 {
        d
    } else {
        d / denom
    }
}
