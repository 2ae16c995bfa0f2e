use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::*;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    /// Output channels of each conv-BN-ReLU-pool block.
    pub widths: Vec<usize>,
    pub embedding: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 32, 64],
            embedding: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub conv: Conv3x3<T>,
    pub bn: BatchNorm<T>,
}

/// Compact CNN: conv-BN-ReLU-maxpool blocks, global average pool, linear embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor<T> {
    pub blocks: Vec<Block<T>>,
    pub embed: Linear<T>,
    pub input: [usize; 3],
}

struct BlockCache<T> {
    conv: ConvCache<T>,
    bn: BnCache<T>,
    act: Array2<T>,
    arg: Vec<u32>,
}

pub struct ExtractorCache<T> {
    blocks: Vec<BlockCache<T>>,
    pooled: Array2<T>,
    last_hw: (usize, usize),
}

impl<T: Scalar> Extractor<T> {
    /// `input` is `[channels, rows, cols]`.
    pub fn new<R: Rng>(input: [usize; 3], cfg: &ExtractorConfig, rng: &mut R) -> Result<Self> {
        let [channels, mut h, mut w] = input;
        if cfg.widths.is_empty() || channels == 0 || cfg.embedding == 0 {
            return Err(Error::invalid("extractor needs channels, blocks and an embedding"));
        }
        let mut blocks = Vec::with_capacity(cfg.widths.len());
        let mut cin = channels;
        for &width in &cfg.widths {
            blocks.push(Block {
                conv: Conv3x3::new(cin, width, rng),
                bn: BatchNorm::new(width),
            });
            cin = width;
            h /= 2;
            w /= 2;
        }
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "input {}x{} is too small for {} pooling blocks",
                input[1],
                input[2],
                cfg.widths.len()
            )));
        }
        Ok(Self {
            blocks,
            embed: Linear::new(cin, cfg.embedding, rng),
            input,
        })
    }

    pub fn embedding_len(&self) -> usize {
        self.embed.outputs()
    }

    fn check(&self, x: &Maps<T>) -> Result<()> {
        let [ch, h, w] = self.input;
        if x.channels() != ch || x.h != h || x.w != w {
            return Err(Error::dims(format!(
                "extractor expects {ch}x{h}x{w} maps, got {}x{}x{}",
                x.channels(),
                x.h,
                x.w
            )));
        }
        Ok(())
    }

    /// Eval-mode forward to `[N, embedding]`.
    pub fn forward(&self, x: &Maps<T>) -> Result<Array2<T>> {
        self.check(x)?;
        let mut cur = x.clone();
        for b in &self.blocks {
            let (y, _) = b.conv.forward(&cur)?;
            let act = relu(&b.bn.forward_eval(&y.data));
            cur = max_pool(&Maps { data: act, ..y }).0;
        }
        self.embed.forward(&global_avg_pool(&cur))
    }

    pub fn forward_train(&mut self, x: &Maps<T>) -> Result<(Array2<T>, ExtractorCache<T>)> {
        self.check(x)?;
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &mut self.blocks {
            let (y, conv) = b.conv.forward(&cur)?;
            let (z, bn) = b.bn.forward_train(&y.data);
            let act = relu(&z);
            let (pooled, arg) = max_pool(&Maps {
                data: act.clone(),
                n: y.n,
                h: y.h,
                w: y.w,
            });
            caches.push(BlockCache { conv, bn, act, arg });
            cur = pooled;
        }
        let pooled = global_avg_pool(&cur);
        let emb = self.embed.forward(&pooled)?;
        Ok((
            emb,
            ExtractorCache {
                blocks: caches,
                pooled,
                last_hw: (cur.h, cur.w),
            },
        ))
    }

    pub fn backward(&mut self, cache: &ExtractorCache<T>, d_emb: &Array2<T>) {
        let d_pooled = self.embed.backward(&cache.pooled, d_emb);
        let (h, w) = cache.last_hw;
        let mut grad = global_avg_pool_backward(&d_pooled, h, w);
        for (i, (b, bc)) in self.blocks.iter_mut().zip(&cache.blocks).enumerate().rev() {
            let d_act = max_pool_backward(&bc.arg, &grad, bc.act.ncols());
            let d_z = relu_backward(&bc.act, &d_act);
            let d_y = b.bn.backward(&bc.bn, &d_z);
            match b.conv.backward(&bc.conv, &d_y, i > 0) {
                Some(g) => grad = g,
                None => break,
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend(b.conv.params_mut());
            out.extend(b.bn.params_mut());
        }
        out.extend(self.embed.params_mut());
        out
    }
}

/// Input dropout, then linear layers with ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
    pub dropout: f64,
}

pub struct MlpCache<T> {
    mask: Array2<T>,
    /// Input to each linear layer.
    inputs: Vec<Array2<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `sizes` runs from the input width to the output width.
    pub fn new<R: Rng>(sizes: &[usize], dropout: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("mlp needs at least an input and an output size"));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid(format!("dropout {dropout} outside [0, 1)")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|p| Linear::new(p[0], p[1], rng)).collect(),
            dropout,
        })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    /// Width of the last hidden layer (the input width for a single layer).
    pub fn hidden_len(&self) -> usize {
        self.layers.last().expect("non-empty").inputs()
    }

    /// Eval-mode output of the last hidden layer.
    pub fn hidden(&self, x: &Array2<T>) -> Result<Array2<T>> {
        let mut cur = x.clone();
        for l in &self.layers[..self.layers.len() - 1] {
            cur = relu(&l.forward(&cur)?);
        }
        if cur.ncols() != self.hidden_len() {
            return Err(Error::dims(format!(
                "mlp takes {} inputs, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.layers.last().expect("non-empty").forward(&self.hidden(x)?)
    }

    pub fn forward_train<R: Rng>(&self, x: &Array2<T>, rng: &mut R) -> Result<(Array2<T>, MlpCache<T>)> {
        let mask = dropout_mask(x.dim(), self.dropout, rng);
        self.forward_masked(x, mask)
    }

    /// Training forward with a caller-supplied dropout mask.
    pub fn forward_masked(&self, x: &Array2<T>, mask: Array2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        if mask.dim() != x.dim() {
            return Err(Error::dims("dropout mask shape differs from input"));
        }
        let mut cur = x * &mask;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let y = l.forward(&cur)?;
            inputs.push(cur);
            cur = if i < last { relu(&y) } else { y };
        }
        Ok((cur, MlpCache { mask, inputs }))
    }

    /// Returns the gradient with respect to the (pre-dropout) input.
    pub fn backward(&mut self, cache: &MlpCache<T>, dy: &Array2<T>) -> Array2<T> {
        let mut grad = dy.clone();
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            grad = l.backward(&cache.inputs[i], &grad);
            if i > 0 {
                grad = relu_backward(&cache.inputs[i], &grad);
            }
        }
        grad * &cache.mask
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// Extractor embedding concatenated with side statistics, then an MLP head.
#[derive(Debug, Clone, PartialEq)]
pub struct MapBranch<T> {
    pub extractor: Extractor<T>,
    pub head: Mlp<T>,
    pub stats_len: usize,
}

pub struct BranchCache<T> {
    extractor: ExtractorCache<T>,
    head: MlpCache<T>,
}

impl<T: Scalar> MapBranch<T> {
    pub fn new<R: Rng>(
        input: [usize; 3],
        stats_len: usize,
        cfg: &ExtractorConfig,
        hidden: &[usize],
        classes: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let extractor = Extractor::new(input, cfg, rng)?;
        let mut sizes = vec![extractor.embedding_len() + stats_len];
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        Ok(Self {
            extractor,
            head: Mlp::new(&sizes, dropout, rng)?,
            stats_len,
        })
    }

    pub fn feature_len(&self) -> usize {
        self.extractor.embedding_len() + self.stats_len
    }

    fn join(&self, emb: Array2<T>, stats: &Array2<T>) -> Result<Array2<T>> {
        if stats.ncols() != self.stats_len || stats.nrows() != emb.nrows() {
            return Err(Error::dims(format!(
                "branch expects {} statistics per sample, got {}",
                self.stats_len,
                stats.ncols()
            )));
        }
        concatenate(Axis(1), &[emb.view(), stats.view()]).map_err(|e| Error::dims(e.to_string()))
    }

    /// Eval-mode branch feature: embedding then statistics.
    pub fn features(&self, maps: &Maps<T>, stats: &Array2<T>) -> Result<Array2<T>> {
        self.join(self.extractor.forward(maps)?, stats)
    }

    pub fn forward(&self, maps: &Maps<T>, stats: &Array2<T>) -> Result<Array2<T>> {
        self.head.forward(&self.features(maps, stats)?)
    }

    pub fn forward_train<R: Rng>(
        &mut self,
        maps: &Maps<T>,
        stats: &Array2<T>,
        rng: &mut R,
    ) -> Result<(Array2<T>, BranchCache<T>)> {
        let (emb, extractor) = self.extractor.forward_train(maps)?;
        let x = self.join(emb, stats)?;
        let (logits, head) = self.head.forward_train(&x, rng)?;
        Ok((logits, BranchCache { extractor, head }))
    }

    pub fn backward(&mut self, cache: &BranchCache<T>, dy: &Array2<T>) {
        let dx = self.head.backward(&cache.head, dy);
        let e = self.extractor.embedding_len();
        self.extractor
            .backward(&cache.extractor, &dx.slice(s![.., ..e]).to_owned());
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.extractor.params_mut();
        out.extend(self.head.params_mut());
        out
    }
}

/// Every persistent tensor (parameters and running statistics) in a fixed order.
pub trait State<T> {
    fn state_mut(&mut self) -> Vec<&mut Array2<T>>;
}

impl<T: Scalar> State<T> for Linear<T> {
    fn state_mut(&mut self) -> Vec<&mut Array2<T>> {
        vec![&mut self.weight.value, &mut self.bias.value]
    }
}

impl<T: Scalar> State<T> for Extractor<T> {
    fn state_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight.value);
            out.push(&mut b.conv.bias.value);
            out.push(&mut b.bn.gamma.value);
            out.push(&mut b.bn.beta.value);
            out.push(&mut b.bn.running_mean);
            out.push(&mut b.bn.running_var);
        }
        out.extend(self.embed.state_mut());
        out
    }
}

impl<T: Scalar> State<T> for Mlp<T> {
    fn state_mut(&mut self) -> Vec<&mut Array2<T>> {
        self.layers.iter_mut().flat_map(|l| l.state_mut()).collect()
    }
}

impl<T: Scalar> State<T> for MapBranch<T> {
    fn state_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out = self.extractor.state_mut();
        out.extend(self.head.state_mut());
        out
    }
}
