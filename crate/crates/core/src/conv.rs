//! Convolution lowering (im2col) and chain-backed convolution layers.
//!
//! Patch columns are ordered by output position, row-major over
//! `(h_o, w_o)`. Inside a column entries run channel-major, then kernel
//! row, then kernel column; [`flatten_kernel`] uses the same ordering so
//! that `flatten_kernel(w) * im2col(x)` is the convolution.

use crate::chain::ChainSpec;
use crate::dense::DenseMatrix;
use crate::error::{DebutError, Result, ShapeError};
use crate::kernels::{self, DebutChain};
use crate::par::Exec;

/// Geometry of a 2-D convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub height: usize,
    pub width: usize,
}

fn output_extent(extent: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize, ShapeError> {
    let padded = extent + 2 * pad;
    if kernel > padded {
        return Err(ShapeError::KernelTooLarge {
            extent: padded,
            kernel,
        });
    }
    if !(padded - kernel).is_multiple_of(stride) {
        return Err(ShapeError::NonIntegralOutput {
            extent: padded,
            kernel,
            stride,
        });
    }
    Ok((padded - kernel) / stride + 1)
}

impl ConvShape {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if c_in == 0 || c_out == 0 || kernel == 0 || stride == 0 || height == 0 || width == 0 {
            return Err(DebutError::Dimension(
                "convolution channels, kernel, stride and input size must be positive".into(),
            ));
        }
        let shape = ConvShape {
            c_in,
            c_out,
            kernel,
            stride,
            pad,
            height,
            width,
        };
        shape.output_shape()?;
        Ok(shape)
    }

    /// `(c_o, H_o, W_o)`.
    pub fn output_shape(&self) -> Result<(usize, usize, usize)> {
        let h = output_extent(self.height, self.kernel, self.stride, self.pad)?;
        let w = output_extent(self.width, self.kernel, self.stride, self.pad)?;
        Ok((self.c_out, h, w))
    }

    /// Rows of the patch matrix, `k^2 c_i`.
    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.c_in
    }
}

impl std::str::FromStr for ConvShape {
    type Err = DebutError;

    /// `c_i,c_o,k,stride,pad,H,W`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| DebutError::Format(format!("bad conv field `{x}`")))
            })
            .collect::<Result<_>>()?;
        if v.len() != 7 {
            return Err(DebutError::Format(format!(
                "expected c_i,c_o,k,stride,pad,H,W (7 values), found {}",
                v.len()
            )));
        }
        ConvShape::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
    }
}

/// Output shape of a convolution layer.
pub fn output_shape(shape: &ConvShape) -> Result<(usize, usize, usize)> {
    shape.output_shape()
}

/// Channel-major feature map `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor3 {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(DebutError::Dimension(format!(
                "[{channels},{height},{width}] tensor needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Tensor3 {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }
}

/// Convolution weights `[c_o, c_i, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
    data: Vec<f64>,
}

impl ConvKernel {
    pub fn from_vec(c_out: usize, c_in: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c_out * c_in * k * k {
            return Err(DebutError::Dimension(format!(
                "[{c_out},{c_in},{k},{k}] kernel needs {} values, got {}",
                c_out * c_in * k * k,
                data.len()
            )));
        }
        Ok(ConvKernel { c_out, c_in, k, data })
    }

    #[inline]
    pub fn get(&self, o: usize, c: usize, u: usize, v: usize) -> f64 {
        self.data[((o * self.c_in + c) * self.k + u) * self.k + v]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Patch matrix `k^2 c_i x H_o W_o`, zero padded.
pub fn im2col(x: &Tensor3, shape: &ConvShape) -> Result<DenseMatrix> {
    if x.dims() != (shape.c_in, shape.height, shape.width) {
        return Err(DebutError::Dimension(format!(
            "input is {:?} but the layer expects [{},{},{}]",
            x.dims(),
            shape.c_in,
            shape.height,
            shape.width
        )));
    }
    let (_, ho, wo) = shape.output_shape()?;
    let k = shape.kernel;
    let cols = ho * wo;
    let mut out = DenseMatrix::zeros(shape.patch_len(), cols);
    let data = out.data_mut();
    for c in 0..shape.c_in {
        for u in 0..k {
            for v in 0..k {
                let row = (c * k + u) * k + v;
                let dst = &mut data[row * cols..(row + 1) * cols];
                for oh in 0..ho {
                    // Padded coordinates; subtract pad to land in the input.
                    let ih = oh * shape.stride + u;
                    if ih < shape.pad || ih - shape.pad >= shape.height {
                        continue;
                    }
                    let ih = ih - shape.pad;
                    for ow in 0..wo {
                        let iw = ow * shape.stride + v;
                        if iw < shape.pad || iw - shape.pad >= shape.width {
                            continue;
                        }
                        dst[oh * wo + ow] = x.get(c, ih, iw - shape.pad);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Kernel matrix `c_o x k^2 c_i`, columns ordered like [`im2col`] rows.
pub fn flatten_kernel(w: &ConvKernel) -> DenseMatrix {
    // [c_o, c_i, k, k] row-major already has this layout.
    DenseMatrix::from_vec(w.c_out, w.c_in * w.k * w.k, w.data.clone())
        .expect("kernel length checked on construction")
}

/// Runs a convolution layer whose flattened kernel is replaced by `chain`.
pub fn conv_via_chain(
    chain: &DebutChain,
    x: &Tensor3,
    shape: &ConvShape,
    bias: Option<&[f64]>,
) -> Result<Tensor3> {
    conv_via_chain_with(chain, x, shape, bias, Exec::default())
}

pub fn conv_via_chain_with(
    chain: &DebutChain,
    x: &Tensor3,
    shape: &ConvShape,
    bias: Option<&[f64]>,
    exec: Exec,
) -> Result<Tensor3> {
    check_chain_fits(&chain.spec(), shape)?;
    if let Some(b) = bias {
        if b.len() != shape.c_out {
            return Err(DebutError::Dimension(format!(
                "bias has {} entries, layer has {} output channels",
                b.len(),
                shape.c_out
            )));
        }
    }
    let patches = im2col(x, shape)?;
    let mut y = kernels::chain_apply_with(chain, &patches, exec)?;
    let (c_out, ho, wo) = shape.output_shape()?;
    if let Some(b) = bias {
        for (o, &bo) in b.iter().enumerate() {
            for v in y.row_mut(o) {
                *v += bo;
            }
        }
    }
    Tensor3::from_vec(c_out, ho, wo, y.into_data())
}

fn check_chain_fits(spec: &ChainSpec, shape: &ConvShape) -> Result<()> {
    if spec.rows_out() != shape.c_out || spec.cols_in() != shape.patch_len() {
        return Err(DebutError::Dimension(format!(
            "chain is {}x{} but the layer needs {}x{}",
            spec.rows_out(),
            spec.cols_in(),
            shape.c_out,
            shape.patch_len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::DebutFactor;

    #[test]
    fn patches_of_3x3() {
        let x = Tensor3::from_vec(1, 3, 3, (1..=9).map(f64::from).collect()).unwrap();
        let shape = ConvShape::new(1, 1, 2, 1, 0, 3, 3).unwrap();
        let m = im2col(&x, &shape).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 4));
        let cols: Vec<Vec<f64>> = (0..4).map(|j| m.column(j)).collect();
        assert_eq!(
            cols,
            vec![
                vec![1.0, 2.0, 4.0, 5.0],
                vec![2.0, 3.0, 5.0, 6.0],
                vec![4.0, 5.0, 7.0, 8.0],
                vec![5.0, 6.0, 8.0, 9.0]
            ]
        );
    }

    #[test]
    fn full_kernel_is_flatten() {
        let x = Tensor3::from_vec(2, 3, 3, (0..18).map(f64::from).collect()).unwrap();
        let shape = ConvShape::new(2, 4, 3, 1, 0, 3, 3).unwrap();
        let m = im2col(&x, &shape).unwrap();
        assert_eq!((m.rows(), m.cols()), (18, 1));
        assert_eq!(m.column(0), x.data());
    }

    #[test]
    fn zero_input() {
        let x = Tensor3::zeros(3, 5, 5);
        let shape = ConvShape::new(3, 2, 3, 2, 1, 5, 5).unwrap();
        let m = im2col(&x, &shape).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_places_zeros() {
        let x = Tensor3::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let shape = ConvShape::new(1, 1, 3, 1, 1, 2, 2).unwrap();
        let m = im2col(&x, &shape).unwrap();
        assert_eq!((m.rows(), m.cols()), (9, 4));
        // Output (0,0): window rows -1..=1, cols -1..=1 around the top-left.
        assert_eq!(m.column(0), vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn output_shapes() {
        let lenet_conv1 = ConvShape::new(1, 8, 3, 1, 0, 28, 28).unwrap();
        assert_eq!(output_shape(&lenet_conv1).unwrap(), (8, 26, 26));
        let vgg_conv1 = ConvShape::new(3, 64, 3, 1, 1, 32, 32).unwrap();
        assert_eq!(output_shape(&vgg_conv1).unwrap(), (64, 32, 32));
        let pointwise = ConvShape::new(5, 7, 1, 1, 0, 9, 11).unwrap();
        assert_eq!(output_shape(&pointwise).unwrap(), (7, 9, 11));
        assert!(matches!(
            ConvShape::new(1, 1, 3, 2, 0, 4, 4),
            Err(DebutError::Shape(ShapeError::NonIntegralOutput { .. }))
        ));
        assert!(matches!(
            ConvShape::new(1, 1, 7, 1, 0, 4, 4),
            Err(DebutError::Shape(ShapeError::KernelTooLarge { .. }))
        ));
        assert_eq!(
            "16,128,5,1,0,5,5".parse::<ConvShape>().unwrap().output_shape().unwrap(),
            (128, 1, 1)
        );
    }

    #[test]
    fn flatten_shapes() {
        let w = ConvKernel::from_vec(1, 1, 1, vec![3.0]).unwrap();
        assert_eq!(flatten_kernel(&w).data(), &[3.0]);
        let w = ConvKernel::from_vec(16, 8, 3, vec![0.0; 16 * 8 * 9]).unwrap();
        let f = flatten_kernel(&w);
        assert_eq!((f.rows(), f.cols()), (16, 72));
        let w = ConvKernel::from_vec(512, 512, 3, vec![0.0; 512 * 512 * 9]).unwrap();
        let f = flatten_kernel(&w);
        assert_eq!((f.rows(), f.cols()), (512, 4608));
    }

    #[test]
    fn identity_pointwise_conv() {
        let n = 4;
        let chain = DebutChain::new(vec![DebutFactor::new(n, n, 1, 1, 1, Some(vec![1.0; n])).unwrap()]).unwrap();
        let shape = ConvShape::new(n, n, 1, 1, 0, 3, 5).unwrap();
        let x = Tensor3::from_vec(n, 3, 5, (0..60).map(|v| v as f64 * 0.5).collect()).unwrap();
        let y = conv_via_chain(&chain, &x, &shape, None).unwrap();
        assert_eq!(y, x);
        let bias = [1.0, 2.0, 3.0, 4.0];
        let yb = conv_via_chain(&chain, &x, &shape, Some(&bias)).unwrap();
        assert_eq!(yb.get(2, 1, 1), x.get(2, 1, 1) + 3.0);
        assert!(conv_via_chain(&chain, &x, &shape, Some(&bias[..3])).is_err());
    }

    #[test]
    fn chain_must_fit_layer() {
        let chain = DebutChain::new(vec![DebutFactor::new(4, 4, 1, 1, 1, None).unwrap()]).unwrap();
        let shape = ConvShape::new(4, 4, 3, 1, 1, 3, 3).unwrap();
        let x = Tensor3::zeros(4, 3, 3);
        assert!(matches!(
            conv_via_chain(&chain, &x, &shape, None),
            Err(DebutError::Dimension(_))
        ));
    }
}
