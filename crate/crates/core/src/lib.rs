//! Deformable butterfly chains: products of block-diagonal sparse factors
//! that replace dense weight matrices.
//!
//! A factor `R^(p,q)_(r,s,t)` is a `p x q` matrix made of `p/(r t)` diagonal
//! blocks, each of which is an `r x s` grid of `t x t` diagonal matrices. A
//! chain multiplies such factors; [`chain::validate`] checks that the
//! product is structurally dense.
//!
//! ```
//! use debut::{bipolar_test, parse_chain};
//!
//! let spec = parse_chain("16 <-(2,2,8)- 16 <-(2,2,4)- 16 <-(2,2,2)- 16 <-(2,2,1)- 16").unwrap();
//! assert_eq!(spec.nonzeros(), 128);
//! assert!(spec.validate().pass());
//! assert!(bipolar_test(&spec, 0).pass);
//! ```

pub mod als;
pub mod chain;
pub mod conv;
pub mod dense;
pub mod error;
pub mod factor;
pub mod fixtures;
pub mod generator;
pub mod io;
pub mod kernels;
pub mod manifest;
pub mod par;

pub use als::{als_fit, lump_side, relative_error, solve_factor_ls, AlsOptions, AlsResult, Side};
pub use chain::{
    estimate_cost, format_chain, layer_compression, parse_chain, parse_factors, partial_products, validate, ChainSpec,
    CostEstimate, ValidationReport,
};
pub use conv::{conv_via_chain, flatten_kernel, im2col, output_shape, ConvKernel, ConvShape, Tensor3};
pub use dense::DenseMatrix;
pub use error::{DebutError, Result, ShapeError};
pub use factor::{nonzero_count, random_init, DebutFactor, FactorShape, InitScheme};
pub use generator::{generate_chains, GeneratorOptions, Style};
pub use kernels::{bipolar_test, chain_apply, factor_apply, materialize, BipolarReport, DebutChain};
pub use manifest::{model_compression, parse_manifest, ModelCompression, ModelManifest};
pub use par::Exec;
