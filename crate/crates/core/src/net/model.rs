use msprl_tensor::{Element, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::blocks::{self, ConvVars};
use super::config::ModelConfig;
use super::features::{Block, FeatureRecorder};
use super::params::{Bound, ParamStore};
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvSpec {
    weight: usize,
    bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ResBlockSpec {
    conv1: ConvSpec,
    conv2: ConvSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SfeSpec {
    stack: [ConvSpec; 3],
    fuse: ConvSpec,
}

/// Registry indices of every layer.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    head: ConvSpec,
    /// EB1..EB3
    encoders: [Vec<ResBlockSpec>; 3],
    /// level 1→2, level 2→3
    down: [ConvSpec; 2],
    /// SFE2, SFE3
    sfe: [Option<SfeSpec>; 2],
    /// level 2→1, level 3→2
    up: [ConvSpec; 2],
    /// FF1, FF2
    fusion: [Option<ConvSpec>; 2],
    /// DB1, DB2
    decoders: [Vec<ResBlockSpec>; 2],
    tail: ConvSpec,
}

struct Builder<'a, E: Element> {
    store: &'a mut ParamStore<E>,
    rng: ChaCha8Rng,
}

impl<E: Element> Builder<'_, E> {
    /// Kaiming-uniform over fan-in with negative slope √5, i.e. bound
    /// `1/√fan_in`; zero bias.
    fn conv(&mut self, name: &str, in_c: usize, out_c: usize, k: usize) -> ConvSpec {
        let fan_in = in_c * k * k;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let rng = &mut self.rng;
        let w = Tensor::from_fn([out_c, in_c, k, k], |_| E::from_f64(rng.gen_range(-bound..bound)));
        let weight = self.store.push(format!("{name}.weight"), w);
        let bias = self.store.push(format!("{name}.bias"), Tensor::zeros([out_c]));
        ConvSpec { weight, bias }
    }

    fn group(&mut self, name: &str, width: usize, count: usize) -> Vec<ResBlockSpec> {
        (0..count)
            .map(|i| ResBlockSpec {
                conv1: self.conv(&format!("{name}.rb{i}.conv1"), width, width, 3),
                conv2: self.conv(&format!("{name}.rb{i}.conv2"), width, width, 3),
            })
            .collect()
    }

    fn sfe(&mut self, name: &str, width: usize) -> SfeSpec {
        SfeSpec {
            stack: [
                self.conv(&format!("{name}.stack0"), 1, width, 3),
                self.conv(&format!("{name}.stack1"), width, width, 1),
                self.conv(&format!("{name}.stack2"), width, width, 1),
            ],
            fuse: self.conv(&format!("{name}.fuse"), width + 1, width, 1),
        }
    }
}

/// Three-level multiscale progressively residual network.
///
/// ```text
/// x ─ head ─ EB1 ───────────────────────────── FF1 ─ DB1 ─ tail ─(+x)─ y
///             └ down ─ SFE2(x↓2) ─ EB2 ─ FF2 ─ DB2 ─ up ┘
///                                   └ down ─ SFE3(x↓4) ─ EB3 ─ up ┘
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct MsprlModel<E: Element = f32> {
    config: ModelConfig,
    params: ParamStore<E>,
    layout: Layout,
}

impl<E: Element> MsprlModel<E> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut b = Builder {
            store: &mut params,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let (c1, c2, c3) = (config.width(1), config.width(2), config.width(3));
        let rb = config.rb_per_block;

        let head = b.conv("head", 1, c1, 3);
        let eb1 = b.group("eb1", c1, rb);
        let down1 = b.conv("down1", 4 * c1, c2, 1);
        let sfe2 = config.enable_sfe.then(|| b.sfe("sfe2", c2));
        let eb2 = b.group("eb2", c2, rb);
        let down2 = b.conv("down2", 4 * c2, c3, 1);
        let sfe3 = config.enable_sfe.then(|| b.sfe("sfe3", c3));
        let eb3 = b.group("eb3", c3, rb);
        let up3 = b.conv("up3", c3, 2 * c3, 1);
        let ff2 = config.enable_ff.then(|| b.conv("ff2", 2 * c2, c2, 1));
        let db2 = b.group("db2", c2, rb);
        let up2 = b.conv("up2", c2, 2 * c2, 1);
        let ff1 = config.enable_ff.then(|| b.conv("ff1", 2 * c1, c1, 1));
        let db1 = b.group("db1", c1, rb);
        let tail = b.conv("tail", c1, 1, 3);

        let layout = Layout {
            head,
            encoders: [eb1, eb2, eb3],
            down: [down1, down2],
            sfe: [sfe2, sfe3],
            up: [up2, up3],
            fusion: [ff1, ff2],
            decoders: [db1, db2],
            tail,
        };
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<E> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<E> {
        &mut self.params
    }

    /// Total number of scalar parameters.
    pub fn count_parameters(&self) -> usize {
        self.params.scalar_count()
    }

    /// Parameter counts grouped by top-level block (`head`, `eb1`, `down1`,
    /// …), in registry order.
    pub fn parameter_breakdown(&self) -> Vec<(String, usize)> {
        let mut groups: Vec<(String, usize)> = Vec::new();
        for p in self.params.iter() {
            let block = p.name.split('.').next().unwrap_or(&p.name);
            match groups.last_mut() {
                Some((name, n)) if name == block => *n += p.tensor.len(),
                _ => groups.push((block.to_string(), p.tensor.len())),
            }
        }
        groups
    }

    pub fn bind(&self, g: &mut Graph<E>, trainable: bool) -> Result<Bound> {
        self.params.bind(g, trainable)
    }

    fn vars(bound: &Bound, c: ConvSpec) -> ConvVars {
        ConvVars {
            weight: bound.var(c.weight),
            bias: bound.var(c.bias),
        }
    }

    fn run_group(
        &self,
        g: &mut Graph<E>,
        bound: &Bound,
        specs: &[ResBlockSpec],
        block: Block,
        mut x: Var,
        recorder: &mut Option<&mut FeatureRecorder<E>>,
    ) -> Result<Var> {
        for (i, rb) in specs.iter().enumerate() {
            x = blocks::residual_block(
                g,
                Self::vars(bound, rb.conv1),
                Self::vars(bound, rb.conv2),
                self.config.activation,
                x,
            )?;
            if let Some(r) = recorder.as_deref_mut() {
                r.offer(block, i + 1, g.value(x));
            }
        }
        Ok(x)
    }

    /// Records the full forward pass on `g`. `x` is `N×1×H×W` with `H` and
    /// `W` divisible by 4. The output is not clamped.
    pub fn forward_graph(
        &self,
        g: &mut Graph<E>,
        bound: &Bound,
        x: Var,
        mut recorder: Option<&mut FeatureRecorder<E>>,
    ) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let [_, c, h, w] = shape[..] else {
            return Err(Error::InvalidArgument(format!("expected N×1×H×W input, got {shape:?}")));
        };
        if c != 1 {
            return Err(Error::InvalidArgument(format!("expected one input channel, got {c}")));
        }
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "input {h}x{w} must have sides divisible by 4"
            )));
        }
        let l = &self.layout;
        let act = self.config.activation;
        let rec = &mut recorder;

        let head = blocks::conv(g, Self::vars(bound, l.head), x)?;
        let e1 = self.run_group(g, bound, &l.encoders[0], Block::Encoder(1), head, rec)?;

        let mut skips = vec![e1];
        let mut prev = e1;
        for level in 2..=3 {
            let down = blocks::downsample(g, Self::vars(bound, l.down[level - 2]), prev)?;
            let entry = match &l.sfe[level - 2] {
                Some(s) => {
                    let x_small = g.bilinear_resize(x, h >> (level - 1), w >> (level - 1))?;
                    let stack = s.stack.map(|c| Self::vars(bound, c));
                    blocks::sfe(g, &stack, Self::vars(bound, s.fuse), act, x_small, down)?
                }
                None => down,
            };
            prev = self.run_group(g, bound, &l.encoders[level - 1], Block::Encoder(level), entry, rec)?;
            skips.push(prev);
        }

        // decoder: level 3 has no decoder block, EB3 feeds the upsampler
        let mut deep = prev;
        for level in (1..=2).rev() {
            let up = blocks::upsample(g, Self::vars(bound, l.up[level - 1]), deep)?;
            let fused = match l.fusion[level - 1] {
                Some(ff) => blocks::feature_fusion(g, Self::vars(bound, ff), skips[level - 1], up)?,
                None => up,
            };
            deep = self.run_group(g, bound, &l.decoders[level - 1], Block::Decoder(level), fused, rec)?;
        }

        let residual = blocks::conv(g, Self::vars(bound, l.tail), deep)?;
        Ok(g.add(residual, x)?)
    }

    /// Inference on a detached graph.
    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false)?;
        let xv = g.constant(x.detached())?;
        let y = self.forward_graph(&mut g, &bound, xv, None)?;
        Ok(g.value(y).clone())
    }

    /// Restores one halftone (as a gray image); output clamped to `[0, 1]`.
    pub fn restore(&self, input: &GrayImage) -> Result<GrayImage> {
        let y = self.forward(&input.to_tensor())?;
        GrayImage::from_plane(input.height(), input.width(), y.data())
    }
}
