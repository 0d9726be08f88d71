//! Per-layer parameter counts of a model and model-wise compression.
//!
//! Text format, one layer per line:
//!
//! ```text
//! # name c_i c_o k bias extra
//! conv1 1 8 3 8 0
//! model_extra 0
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::chain::ChainSpec;
use crate::error::{DebutError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerEntry {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub bias: usize,
    /// Other per-layer parameters kept as-is (e.g. batch norm).
    pub extra: usize,
}

impl LayerEntry {
    pub fn weight_params(&self) -> usize {
        self.c_out * self.kernel * self.kernel * self.c_in
    }

    /// Shape of the flattened weight matrix (`c_out x k^2 c_in`).
    pub fn matrix_shape(&self) -> (usize, usize) {
        (self.c_out, self.kernel * self.kernel * self.c_in)
    }

    pub fn total_params(&self) -> usize {
        self.weight_params() + self.bias + self.extra
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelManifest {
    pub layers: Vec<LayerEntry>,
    pub model_extra: usize,
}

impl ModelManifest {
    pub fn layer(&self, name: &str) -> Option<&LayerEntry> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn total_params(&self) -> usize {
        self.layers.iter().map(LayerEntry::total_params).sum::<usize>() + self.model_extra
    }
}

fn parse_count(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| DebutError::Parse {
        line,
        message: format!("{what} must be a non-negative integer, got {tok:?}"),
    })
}

impl FromStr for ModelManifest {
    type Err = DebutError;

    fn from_str(text: &str) -> Result<Self> {
        let mut manifest = ModelManifest::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let toks: Vec<&str> = body.split_whitespace().collect();
            if toks[0] == "model_extra" {
                if toks.len() != 2 {
                    return Err(DebutError::Parse {
                        line,
                        message: "expected `model_extra <count>`".into(),
                    });
                }
                manifest.model_extra = parse_count(toks[1], line, "model_extra")?;
                continue;
            }
            if toks.len() != 6 {
                return Err(DebutError::Parse {
                    line,
                    message: format!("expected `name c_i c_o k bias extra`, got {} fields", toks.len()),
                });
            }
            if manifest.layer(toks[0]).is_some() {
                return Err(DebutError::Parse {
                    line,
                    message: format!("duplicate layer {:?}", toks[0]),
                });
            }
            manifest.layers.push(LayerEntry {
                name: toks[0].to_string(),
                c_in: parse_count(toks[1], line, "c_i")?,
                c_out: parse_count(toks[2], line, "c_o")?,
                kernel: parse_count(toks[3], line, "k")?,
                bias: parse_count(toks[4], line, "bias")?,
                extra: parse_count(toks[5], line, "extra")?,
            });
        }
        Ok(manifest)
    }
}

impl fmt::Display for ModelManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.layers {
            writeln!(f, "{} {} {} {} {} {}", l.name, l.c_in, l.c_out, l.kernel, l.bias, l.extra)?;
        }
        writeln!(f, "model_extra {}", self.model_extra)
    }
}

pub fn parse_manifest(text: &str) -> Result<ModelManifest> {
    text.parse()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCompression {
    /// Saved weights over total model parameters.
    pub mc: f64,
    pub saved_params: usize,
    pub remaining_params: usize,
    pub total_params: usize,
}

/// Replaces the named layers' weights by chains. Biases and extra
/// parameters stay in both the total and the remainder.
pub fn model_compression(manifest: &ModelManifest, replacements: &BTreeMap<String, ChainSpec>) -> Result<ModelCompression> {
    let total = manifest.total_params();
    let mut saved = 0usize;
    for (name, spec) in replacements {
        let layer = manifest
            .layer(name)
            .ok_or_else(|| DebutError::UnknownLayer(name.clone()))?;
        let (rows, cols) = layer.matrix_shape();
        if (spec.rows_out(), spec.cols_in()) != (rows, cols) {
            return Err(DebutError::ShapeMismatch(format!(
                "layer {name} flattens to {rows}x{cols} but the chain is {}x{}",
                spec.rows_out(),
                spec.cols_in()
            )));
        }
        saved += layer.weight_params().saturating_sub(spec.nonzeros());
    }
    let mc = if total == 0 { 0.0 } else { saved as f64 / total as f64 };
    Ok(ModelCompression {
        mc,
        saved_params: saved,
        remaining_params: total - saved,
        total_params: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::parse_chain;

    const TINY: &str = "# comment\nconv 2 4 3 4 8\nfc 16 2 1 2 0  # trailing\nmodel_extra 5\n";

    #[test]
    fn parses_and_counts() {
        let m = parse_manifest(TINY).unwrap();
        assert_eq!(m.layers.len(), 2);
        assert_eq!(m.layer("conv").unwrap().weight_params(), 72);
        assert_eq!(m.layer("conv").unwrap().matrix_shape(), (4, 18));
        assert_eq!(m.total_params(), 72 + 4 + 8 + 32 + 2 + 5);
        assert_eq!(parse_manifest(&m.to_string()).unwrap(), m);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_manifest("a 1 2 3 4"), Err(DebutError::Parse { line: 1, .. })));
        assert!(matches!(parse_manifest("a 1 2 3 4 x"), Err(DebutError::Parse { .. })));
        assert!(matches!(parse_manifest("a 1 1 1 0 0\na 1 1 1 0 0"), Err(DebutError::Parse { line: 2, .. })));
        assert!(matches!(parse_manifest("model_extra"), Err(DebutError::Parse { .. })));
    }

    #[test]
    fn compression() {
        let m = parse_manifest(TINY).unwrap();
        let total = m.total_params();
        let none = model_compression(&m, &BTreeMap::new()).unwrap();
        assert_eq!((none.mc, none.remaining_params), (0.0, total));

        let mut rep = BTreeMap::new();
        rep.insert("fc".to_string(), parse_chain("2 <-(1,2,1)- 4 <-(1,4,1)- 16").unwrap());
        let got = model_compression(&m, &rep).unwrap();
        assert_eq!(got.saved_params, 32 - 20);
        assert_eq!(got.remaining_params, total - 12);

        rep.insert("nope".to_string(), parse_chain("2 <-(2,2,1)- 2").unwrap());
        assert_eq!(model_compression(&m, &rep), Err(DebutError::UnknownLayer("nope".into())));

        let mut bad = BTreeMap::new();
        bad.insert("conv".to_string(), parse_chain("2 <-(2,2,1)- 2").unwrap());
        assert!(matches!(model_compression(&m, &bad), Err(DebutError::ShapeMismatch(_))));
    }
}
