use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::AttentionCnnConfig;
use crate::error::{Error, Result};
use crate::nn::{
    global_avg_pool, nll_loss_batch, relu, relu_backward, softmax, softmax_backward, uniform_init,
    BatchNorm1d, BatchNormCache, Conv1d, Conv1dCache, Linear, LinearCache, MaxPool1d,
    MaxPoolCache, Mode,
};
use crate::tensor::{gemm, Param, Tensor};

/// Attention estimator plus the per-level linear classifier (`W_o`) and
/// confidence gate (`W_c`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModule {
    /// Channel-mixing convolution `n → 1` with spatial extent 1.
    pub estimator: Conv1d,
    /// `[n, C]`
    pub classifier: Param,
    /// `[n, 1]`
    pub gate: Param,
}

/// conv → ReLU → batch norm → max pool, optionally followed by attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub conv: Conv1d,
    pub bn: BatchNorm1d,
    pub pool: MaxPool1d,
    pub attention: Option<AttentionModule>,
}

/// Fully connected classifier over the flattened last feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub hidden: Vec<Linear>,
    pub output: Linear,
    /// `[flat, 1]` gate producing the head's confidence; attention only.
    pub gate: Option<Param>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCnnModel {
    pub config: AttentionCnnConfig,
    pub bands: usize,
    pub blocks: Vec<Block>,
    pub head: Head,
}

/// Attention outputs of one level for a batch.
#[derive(Debug, Clone)]
pub struct LevelAttention {
    /// Spatial softmax heatmap, `[N, L]`.
    pub heatmap: Tensor,
    /// Attention-weighted average of the feature maps, `[N, n]`.
    pub hypothesis: Tensor,
    /// Local class scores, `[N, C]`.
    pub scores: Tensor,
    /// tanh confidence per sample.
    pub confidence: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardRecord {
    /// Max-pooled feature maps of each block, `[N, L_l, n_l]`.
    pub features: Vec<Tensor>,
    /// One entry per block when attention is enabled, otherwise empty.
    pub attention: Vec<LevelAttention>,
    /// Classifier head scores, `[N, C]`.
    pub head_scores: Tensor,
    pub head_confidence: Option<Vec<f64>>,
    /// Class probabilities, `[N, C]`.
    pub output: Tensor,
}

struct BlockTape {
    conv: Conv1dCache,
    conv_out: Tensor,
    bn: BatchNormCache,
    pool: MaxPoolCache,
    attention: Option<AttentionTape>,
}

struct AttentionTape {
    estimator: Conv1dCache,
    /// Estimator output before ReLU, `[N, L]`.
    scores: Tensor,
}

/// Intermediate values needed by [`AttentionCnnModel::backward`].
pub struct Tape {
    blocks: Vec<BlockTape>,
    flat: Tensor,
    hidden: Vec<(LinearCache, Tensor)>,
    output: LinearCache,
}

impl Tape {
    /// ReLU on/off states and max-pool winners of the recorded pass. Two
    /// passes with equal patterns lie on the same smooth piece of the
    /// network.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let on = |t: &Tensor| t.data().iter().map(|&v| usize::from(v > 0.0)).collect::<Vec<_>>();
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(on(&b.conv_out));
            out.extend_from_slice(&b.pool.argmax);
            if let Some(a) = &b.attention {
                out.extend(on(&a.scores));
            }
        }
        for (_, pre) in &self.hidden {
            out.extend(on(pre));
        }
        out
    }
}

fn matmul(a: &Tensor, w: &Param) -> Tensor {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = w.shape()[1];
    let mut out = vec![0.0; n * m];
    gemm(n, k, m, 1.0, a.data(), false, w.value.data(), false, 0.0, &mut out);
    Tensor::from_vec(&[n, m], out).expect("matmul shape")
}

impl AttentionCnnModel {
    /// Builds and initializes the network for `bands` input bands.
    pub fn new(config: AttentionCnnConfig, bands: usize) -> Result<Self> {
        config.validate()?;
        let lengths = config.level_lengths(bands)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.num_classes;

        let mut blocks = Vec::with_capacity(config.num_blocks);
        let mut c_in = 1;
        for &n in &config.channels[..config.num_blocks] {
            let conv = Conv1d::new(c_in, n, config.conv_k, 1, config.conv_padding, &mut rng);
            let attention = config.use_attention.then(|| AttentionModule {
                estimator: Conv1d::new(n, 1, 1, 1, 0, &mut rng),
                classifier: Param::new(uniform_init(&[n, c], n, &mut rng)),
                gate: Param::new(uniform_init(&[n, 1], n, &mut rng)),
            });
            blocks.push(Block {
                conv,
                bn: BatchNorm1d::new(n),
                pool: MaxPool1d::new(config.pool_k, config.pool_stride),
                attention,
            });
            c_in = n;
        }

        let flat = lengths[config.num_blocks - 1] * c_in;
        let mut hidden = Vec::with_capacity(config.hidden.len());
        let mut width = flat;
        for &h in &config.hidden {
            hidden.push(Linear::new(width, h, &mut rng));
            width = h;
        }
        let output = Linear::new(width, c, &mut rng);
        let gate = config
            .use_attention
            .then(|| Param::new(uniform_init(&[flat, 1], flat, &mut rng)));

        Ok(Self {
            config,
            bands,
            blocks,
            head: Head {
                hidden,
                output,
                gate,
            },
        })
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Named parameters in declaration order.
    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let l = i + 1;
            out.push((format!("block{l}.conv.kernels"), &b.conv.kernels));
            out.push((format!("block{l}.conv.bias"), &b.conv.bias));
            out.push((format!("block{l}.bn.gamma"), &b.bn.gamma));
            out.push((format!("block{l}.bn.beta"), &b.bn.beta));
            if let Some(a) = &b.attention {
                out.push((format!("block{l}.attention.estimator.kernels"), &a.estimator.kernels));
                out.push((format!("block{l}.attention.estimator.bias"), &a.estimator.bias));
                out.push((format!("block{l}.attention.classifier"), &a.classifier));
                out.push((format!("block{l}.attention.gate"), &a.gate));
            }
        }
        for (i, lin) in self.head.hidden.iter().enumerate() {
            out.push((format!("head.hidden{}.weight", i + 1), &lin.weight));
            out.push((format!("head.hidden{}.bias", i + 1), &lin.bias));
        }
        out.push(("head.output.weight".into(), &self.head.output.weight));
        out.push(("head.output.bias".into(), &self.head.output.bias));
        if let Some(g) = &self.head.gate {
            out.push(("head.gate".into(), g));
        }
        out
    }

    /// Mutable parameters in the same order as [`params`](Self::params).
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.kernels);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
            if let Some(a) = &mut b.attention {
                out.push(&mut a.estimator.kernels);
                out.push(&mut a.estimator.bias);
                out.push(&mut a.classifier);
                out.push(&mut a.gate);
            }
        }
        for lin in &mut self.head.hidden {
            out.push(&mut lin.weight);
            out.push(&mut lin.bias);
        }
        out.push(&mut self.head.output.weight);
        out.push(&mut self.head.output.bias);
        if let Some(g) = &mut self.head.gate {
            out.push(g);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn batch_input(&self, pixels: &Tensor) -> Result<Tensor> {
        let n = match *pixels.shape() {
            [n, b] | [n, b, 1] if b == self.bands => n,
            _ => {
                return Err(Error::Shape(format!(
                    "model expects [N, {}] pixels, got {:?}",
                    self.bands,
                    pixels.shape()
                )))
            }
        };
        if n == 0 {
            return Err(Error::Shape("empty pixel batch".into()));
        }
        pixels.clone().reshape(&[n, self.bands, 1])
    }

    /// Class probabilities and per-level records for a `[N, b]` batch.
    pub fn forward(&self, pixels: &Tensor, mode: Mode) -> Result<ForwardRecord> {
        self.forward_with_tape(pixels, mode).map(|(rec, _)| rec)
    }

    pub fn forward_with_tape(&self, pixels: &Tensor, mode: Mode) -> Result<(ForwardRecord, Tape)> {
        let mut x = self.batch_input(pixels)?;
        let n = x.shape()[0];

        let mut features = Vec::with_capacity(self.blocks.len());
        let mut attention = Vec::new();
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (conv_out, conv_cache) = block.conv.forward(&x)?;
            let act = relu(&conv_out);
            let (normed, bn_cache) = block.bn.forward_stateless(&act, mode)?;
            let (z, pool_cache) = block.pool.forward(&normed)?;

            let att_tape = match &block.attention {
                Some(module) => {
                    let (level, tape) = attend(module, &z)?;
                    attention.push(level);
                    Some(tape)
                }
                None => None,
            };
            tapes.push(BlockTape {
                conv: conv_cache,
                conv_out,
                bn: bn_cache,
                pool: pool_cache,
                attention: att_tape,
            });
            x = z.clone();
            features.push(z);
        }

        let flat_len = x.len() / n;
        let flat = x.reshape(&[n, flat_len])?;
        let mut h = flat.clone();
        let mut hidden = Vec::with_capacity(self.head.hidden.len());
        for lin in &self.head.hidden {
            let (pre, cache) = lin.forward(&h)?;
            h = relu(&pre);
            hidden.push((cache, pre));
        }
        let (head_scores, out_cache) = self.head.output.forward(&h)?;

        let c = self.num_classes();
        let mut logits = head_scores.clone();
        let head_confidence = match &self.head.gate {
            Some(gate) => {
                let conf: Vec<f64> = matmul(&flat, gate).data().iter().map(|v| v.tanh()).collect();
                for (row, &cn) in logits.data_mut().chunks_exact_mut(c).zip(&conf) {
                    row.iter_mut().for_each(|v| *v *= cn);
                }
                for level in &attention {
                    let rows = logits.data_mut().chunks_exact_mut(c);
                    for ((row, o), &cl) in rows
                        .zip(level.scores.data().chunks_exact(c))
                        .zip(&level.confidence)
                    {
                        for (v, &ov) in row.iter_mut().zip(o) {
                            *v += cl * ov;
                        }
                    }
                }
                Some(conf)
            }
            None => None,
        };
        let output = softmax(&logits);

        let record = ForwardRecord {
            features,
            attention,
            head_scores,
            head_confidence,
            output,
        };
        let tape = Tape {
            blocks: tapes,
            flat,
            hidden,
            output: out_cache,
        };
        Ok((record, tape))
    }

    /// Folds train-mode batch statistics from `tape` into every batch norm.
    pub fn commit_batch_stats(&mut self, tape: &Tape) {
        for (block, t) in self.blocks.iter_mut().zip(&tape.blocks) {
            block.bn.update_running(&t.bn);
        }
    }

    /// Backpropagates `grad_output` (gradient w.r.t. the output probabilities)
    /// through the network, accumulating parameter gradients. Returns the
    /// gradient w.r.t. the `[N, b]` input.
    pub fn backward(
        &mut self,
        record: &ForwardRecord,
        tape: &Tape,
        grad_output: &Tensor,
    ) -> Result<Tensor> {
        let grad_logits = softmax_backward(&record.output, grad_output)?;
        let c = self.num_classes();
        let n = grad_logits.shape()[0];

        // head classifier path
        let grad_scores = match &record.head_confidence {
            Some(conf) => {
                let mut g = grad_logits.clone();
                for (row, &cn) in g.data_mut().chunks_exact_mut(c).zip(conf) {
                    row.iter_mut().for_each(|v| *v *= cn);
                }
                g
            }
            None => grad_logits.clone(),
        };
        let mut g = self.head.output.backward(&tape.output, &grad_scores)?;
        for (lin, (cache, pre)) in self.head.hidden.iter_mut().zip(&tape.hidden).rev() {
            g = relu_backward(pre, &g)?;
            g = lin.backward(cache, &g)?;
        }
        let mut grad_flat = g;

        // head gate path
        if let (Some(gate), Some(conf)) = (&mut self.head.gate, &record.head_confidence) {
            let flat_len = tape.flat.shape()[1];
            let grad_pre: Vec<f64> = (0..n)
                .map(|s| {
                    let gl = &grad_logits.data()[s * c..(s + 1) * c];
                    let o = &record.head_scores.data()[s * c..(s + 1) * c];
                    let d: f64 = gl.iter().zip(o).map(|(a, b)| a * b).sum();
                    d * (1.0 - conf[s] * conf[s])
                })
                .collect();
            let gw = gate.grad.data_mut();
            let gf = grad_flat.data_mut();
            let w = gate.value.data();
            for s in 0..n {
                let row = &tape.flat.data()[s * flat_len..(s + 1) * flat_len];
                for j in 0..flat_len {
                    gw[j] += row[j] * grad_pre[s];
                    gf[s * flat_len + j] += grad_pre[s] * w[j];
                }
            }
        }

        let last = record.features.len() - 1;
        let mut grad_z = grad_flat.reshape(record.features[last].shape())?;
        for (l, block) in self.blocks.iter_mut().enumerate().rev() {
            let bt = &tape.blocks[l];
            if let (Some(module), Some(at)) = (&mut block.attention, &bt.attention) {
                let level = &record.attention[l];
                let extra = attend_backward(
                    module,
                    at,
                    level,
                    &record.features[l],
                    &grad_logits,
                )?;
                for (a, b) in grad_z.data_mut().iter_mut().zip(extra.data()) {
                    *a += b;
                }
            }
            let g = block.pool.backward(&bt.pool, &grad_z)?;
            let g = block.bn.backward(&bt.bn, &g)?;
            let g = relu_backward(&bt.conv_out, &g)?;
            grad_z = block.conv.backward(&bt.conv, &g)?;
        }
        grad_z.reshape(&[n, self.bands])
    }

    /// Mean negative log-likelihood of `labels`; no state changes.
    pub fn loss(&self, pixels: &Tensor, labels: &[usize], mode: Mode) -> Result<f64> {
        let rec = self.forward(pixels, mode)?;
        nll_loss_batch(&rec.output, labels).map(|(l, _)| l)
    }

    /// Forward, loss, and backward for one mini-batch. Parameter gradients are
    /// accumulated (not zeroed); train-mode batch statistics are committed.
    /// Returns the loss and the output probabilities.
    pub fn loss_and_backward(
        &mut self,
        pixels: &Tensor,
        labels: &[usize],
        mode: Mode,
    ) -> Result<(f64, Tensor)> {
        let (rec, tape) = self.forward_with_tape(pixels, mode)?;
        let (loss, grad) = nll_loss_batch(&rec.output, labels)?;
        self.backward(&rec, &tape, &grad)?;
        if mode == Mode::Train {
            self.commit_batch_stats(&tape);
        }
        Ok((loss, rec.output))
    }

    /// Argmax class per pixel, in inference mode.
    pub fn predict(&self, pixels: &Tensor) -> Result<Vec<usize>> {
        let rec = self.forward(pixels, Mode::Infer)?;
        Ok(argmax_rows(&rec.output))
    }
}

pub(crate) fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let c = probs.shape()[1];
    probs
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Attention estimator, hypothesis, local classifier and confidence gate for
/// one level's feature maps `z: [N, L, n]`.
fn attend(module: &AttentionModule, z: &Tensor) -> Result<(LevelAttention, AttentionTape)> {
    let (n, len, ch) = (z.shape()[0], z.shape()[1], z.shape()[2]);
    let (raw, est_cache) = module.estimator.forward(z)?;
    let scores = raw.reshape(&[n, len])?;
    let heatmap = softmax(&relu(&scores));
    let hypothesis = weighted_average(&heatmap, z);
    let local = matmul(&hypothesis, &module.classifier);
    let confidence: Vec<f64> = matmul(&hypothesis, &module.gate)
        .data()
        .iter()
        .map(|v| v.tanh())
        .collect();
    debug_assert_eq!(hypothesis.shape(), &[n, ch]);
    Ok((
        LevelAttention {
            heatmap,
            hypothesis,
            scores: local,
            confidence,
        },
        AttentionTape {
            estimator: est_cache,
            scores,
        },
    ))
}

/// `H[s, c] = (1/L) Σ_i heat[s, i] · z[s, i, c]`.
pub fn weighted_average(heat: &Tensor, z: &Tensor) -> Tensor {
    let (n, len, ch) = (z.shape()[0], z.shape()[1], z.shape()[2]);
    let mut weighted = z.clone();
    for (s, sample) in weighted.data_mut().chunks_exact_mut(len * ch).enumerate() {
        for (i, row) in sample.chunks_exact_mut(ch).enumerate() {
            let w = heat.data()[s * len + i];
            row.iter_mut().for_each(|v| *v *= w);
        }
    }
    let pooled = global_avg_pool(&weighted).expect("rank-3 input");
    debug_assert_eq!(pooled.shape(), &[n, ch]);
    pooled
}

/// Gradient of the fused logits w.r.t. one level's feature maps, through the
/// local classifier, the confidence gate, the hypothesis and the estimator.
fn attend_backward(
    module: &mut AttentionModule,
    tape: &AttentionTape,
    level: &LevelAttention,
    z: &Tensor,
    grad_logits: &Tensor,
) -> Result<Tensor> {
    let (n, len, ch) = (z.shape()[0], z.shape()[1], z.shape()[2]);
    let c = grad_logits.shape()[1];
    let gl = grad_logits.data();

    // d o^l = dlogits · c^l ; d pre_gate = (dlogits · o^l)(1 − c²)
    let mut grad_local = vec![0.0; n * c];
    let mut grad_gate_pre = vec![0.0; n];
    for s in 0..n {
        let cl = level.confidence[s];
        let mut d = 0.0;
        for k in 0..c {
            grad_local[s * c + k] = gl[s * c + k] * cl;
            d += gl[s * c + k] * level.scores.data()[s * c + k];
        }
        grad_gate_pre[s] = d * (1.0 - cl * cl);
    }
    let h = level.hypothesis.data();
    gemm(ch, n, c, 1.0, h, true, &grad_local, false, 1.0, module.classifier.grad.data_mut());
    gemm(ch, n, 1, 1.0, h, true, &grad_gate_pre, false, 1.0, module.gate.grad.data_mut());
    let mut grad_h = vec![0.0; n * ch];
    gemm(n, c, ch, 1.0, &grad_local, false, module.classifier.value.data(), true, 0.0, &mut grad_h);
    let wc = module.gate.value.data();
    for s in 0..n {
        for j in 0..ch {
            grad_h[s * ch + j] += grad_gate_pre[s] * wc[j];
        }
    }

    // H = (1/L) Σ_i heat_i z_i
    let inv_len = 1.0 / len as f64;
    let zd = z.data();
    let heat = level.heatmap.data();
    let mut grad_z = vec![0.0; zd.len()];
    let mut grad_heat = vec![0.0; n * len];
    for s in 0..n {
        let gh = &grad_h[s * ch..(s + 1) * ch];
        for i in 0..len {
            let off = (s * len + i) * ch;
            let w = heat[s * len + i] * inv_len;
            let mut acc = 0.0;
            for j in 0..ch {
                grad_z[off + j] = gh[j] * w;
                acc += gh[j] * zd[off + j];
            }
            grad_heat[s * len + i] = acc * inv_len;
        }
    }

    let grad_heat = Tensor::from_vec(&[n, len], grad_heat)?;
    let grad_relu = softmax_backward(&level.heatmap, &grad_heat)?;
    let grad_scores = relu_backward(&tape.scores, &grad_relu)?.reshape(&[n, len, 1])?;
    let from_estimator = module.estimator.backward(&tape.estimator, &grad_scores)?;
    for (a, b) in grad_z.iter_mut().zip(from_estimator.data()) {
        *a += b;
    }
    Tensor::from_vec(z.shape(), grad_z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixels(n: usize, b: usize, seed: u64) -> Tensor {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(&[n, b], (0..n * b).map(|_| rng.random_range(0.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn shapes_follow_architecture() {
        let model = AttentionCnnModel::new(AttentionCnnConfig::new(3, 9, true, 1), 103).unwrap();
        let rec = model.forward(&pixels(2, 103, 0), Mode::Train).unwrap();
        assert_eq!(rec.features[0].shape(), &[2, 51, 96]);
        assert_eq!(rec.features[1].shape(), &[2, 25, 54]);
        assert_eq!(rec.features[2].shape(), &[2, 12, 36]);
        assert_eq!(rec.attention[0].heatmap.shape(), &[2, 51]);
        assert_eq!(rec.output.shape(), &[2, 9]);
    }

    #[test]
    fn plain_model_has_no_attention_params() {
        let model = AttentionCnnModel::new(AttentionCnnConfig::new(2, 3, false, 1), 16).unwrap();
        assert!(model.params().iter().all(|(name, _)| !name.contains("attention")));
        assert!(model.head.gate.is_none());
        let rec = model.forward(&pixels(3, 16, 2), Mode::Train).unwrap();
        assert!(rec.attention.is_empty());
        assert!(rec.head_confidence.is_none());
    }

    #[test]
    fn hypothesis_hand_case() {
        let heat = Tensor::from_vec(&[1, 2], vec![0.25, 0.75]).unwrap();
        let z = Tensor::from_vec(&[1, 2, 1], vec![4.0, 8.0]).unwrap();
        assert_eq!(weighted_average(&heat, &z).data(), &[3.5]);
    }

    #[test]
    fn rejects_band_mismatch() {
        let model = AttentionCnnModel::new(AttentionCnnConfig::new(2, 3, true, 1), 16).unwrap();
        assert!(model.forward(&pixels(2, 15, 0), Mode::Infer).is_err());
    }

    #[test]
    fn too_few_bands() {
        assert!(AttentionCnnModel::new(AttentionCnnConfig::new(4, 3, true, 0), 4).is_err());
    }
}
