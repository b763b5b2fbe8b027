//! Capturing intermediate activations for qualitative inspection.

use std::fmt;
use std::str::FromStr;

use msprl_tensor::{Element, Graph, Tensor};

use super::model::MsprlModel;
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    /// EB1..EB3
    Encoder(usize),
    /// DB1, DB2
    Decoder(usize),
}

/// Names the output of the `layer`-th residual block (1-based) inside an
/// encoder or decoder block, written `EB2/layer7` or `DB1/3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerSelector {
    pub block: Block,
    pub layer: usize,
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Selector(s.to_string());
        let (block, layer) = s.split_once('/').ok_or_else(bad)?;
        let block = block.trim().to_ascii_uppercase();
        let block = match (block.get(..2), block.get(2..).and_then(|l| l.parse::<usize>().ok())) {
            (Some("EB"), Some(l @ 1..=3)) => Block::Encoder(l),
            (Some("DB"), Some(l @ 1..=2)) => Block::Decoder(l),
            _ => return Err(bad()),
        };
        let layer = layer.trim().to_ascii_lowercase();
        let layer = layer.strip_prefix("layer").unwrap_or(&layer);
        let layer = layer.parse::<usize>().ok().filter(|&l| l >= 1).ok_or_else(bad)?;
        Ok(Self { block, layer })
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.block {
            Block::Encoder(l) => write!(f, "EB{l}/layer{}", self.layer),
            Block::Decoder(l) => write!(f, "DB{l}/layer{}", self.layer),
        }
    }
}

/// Keeps a copy of the activation named by its selector during a forward pass.
#[derive(Clone, Debug)]
pub struct FeatureRecorder<E: Element> {
    pub selector: LayerSelector,
    pub captured: Option<Tensor<E>>,
}

impl<E: Element> FeatureRecorder<E> {
    pub fn new(selector: LayerSelector) -> Self {
        Self {
            selector,
            captured: None,
        }
    }

    pub(crate) fn offer(&mut self, block: Block, layer: usize, value: &Tensor<E>) {
        if self.selector.block == block && self.selector.layer == layer {
            self.captured = Some(value.detached());
        }
    }
}

/// Runs `model` on `x` (`1×1×H×W`) and returns the captured activation.
pub fn capture<E: Element>(model: &MsprlModel<E>, x: &Tensor<E>, selector: LayerSelector) -> Result<Tensor<E>> {
    if selector.layer > model.config().rb_per_block {
        return Err(Error::Selector(format!(
            "{selector} (blocks hold {} layers)",
            model.config().rb_per_block
        )));
    }
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false)?;
    let xv = g.constant(x.detached())?;
    let mut rec = FeatureRecorder::new(selector);
    model.forward_graph(&mut g, &bound, xv, Some(&mut rec))?;
    rec.captured.ok_or_else(|| Error::Selector(selector.to_string()))
}

/// One min-max normalized image per channel of the selected activation.
/// Constant channels render black.
pub fn dump_feature_maps<E: Element>(
    model: &MsprlModel<E>,
    input: &GrayImage,
    selector: LayerSelector,
) -> Result<Vec<GrayImage>> {
    let act = capture(model, &input.to_tensor(), selector)?;
    let (_, c, h, w) = act.dims4("dump_feature_maps")?;
    let mut maps = Vec::with_capacity(c);
    for plane in act.data().chunks(h * w).take(c) {
        let vals: Vec<f64> = plane.iter().map(|v| v.to_f64()).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let pixels = vals
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        maps.push(GrayImage::new(h, w, pixels)?);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_parsing() {
        let s: LayerSelector = "EB2/layer7".parse().unwrap();
        assert_eq!(s, LayerSelector { block: Block::Encoder(2), layer: 7 });
        assert_eq!("db1/3".parse::<LayerSelector>().unwrap().block, Block::Decoder(1));
        assert_eq!(s.to_string().parse::<LayerSelector>().unwrap(), s);
        for bad in ["EB4/1", "DB3/1", "EB1/0", "EB1", "XX1/2", "EB1/layerx"] {
            assert!(bad.parse::<LayerSelector>().is_err(), "{bad}");
        }
    }
}
