//! Encoder parameters and the graph-building forward pass.

use super::inputs::EncodedInput;
use super::{ModelConfig, ModelError};
use crate::corpus::CLS_ID;
use crate::tensor::{Graph, NodeId, Tensor};
use crate::util::{rng_from_seed, sample_normal};

const LN_EPS: f32 = 1e-5;
const ATTN_MASK_VALUE: f32 = -1e9;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub(crate) struct LayerNormParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNormParams {
    fn identity(d: usize) -> Self {
        LayerNormParams {
            gain: Tensor::new(vec![d], vec![1.0; d]).expect("ln gain"),
            bias: Tensor::zeros(vec![d]),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderLayerParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln_attn: LayerNormParams,
    pub w_ff1: Tensor,
    pub b_ff1: Tensor,
    pub w_ff2: Tensor,
    pub b_ff2: Tensor,
    pub ln_ffn: LayerNormParams,
}

#[derive(Debug, Clone)]
pub(crate) struct FoundationParams {
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub seg_emb: Tensor,
    pub ln_emb: LayerNormParams,
    pub layers: Vec<EncoderLayerParams>,
    pub ln_mlm: LayerNormParams,
    pub mlm_bias: Tensor,
}

/// Callback interface over named parameters, in the canonical checkpoint and
/// optimizer order.
pub trait ParamVisitor {
    fn visit(&mut self, name: &str, tensor: &Tensor);
}

impl<F: FnMut(&str, &Tensor)> ParamVisitor for F {
    fn visit(&mut self, name: &str, tensor: &Tensor) {
        self(name, tensor)
    }
}

/// The pre-trained encoder: embeddings, attention/FFN stacks, and the tied
/// MLM projection.
#[derive(Debug, Clone)]
pub struct FoundationModel {
    cfg: ModelConfig,
    vocab_fingerprint: u64,
    pub(crate) params: FoundationParams,
}

impl FoundationModel {
    /// Random initialization: normal(0, 0.02) weights, zero biases, identity
    /// layer norms.
    pub fn init(cfg: ModelConfig, vocab_fingerprint: u64, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = rng_from_seed(seed);
        let d = cfg.d_model;
        let mut normal = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|_| (sample_normal(&mut rng) * INIT_STD) as f32)
                .collect();
            Tensor::new(shape, data).expect("init tensor")
        };
        let layers = (0..cfg.n_layers)
            .map(|_| EncoderLayerParams {
                wq: normal(vec![d, d]),
                bq: Tensor::zeros(vec![d]),
                wk: normal(vec![d, d]),
                bk: Tensor::zeros(vec![d]),
                wv: normal(vec![d, d]),
                bv: Tensor::zeros(vec![d]),
                wo: normal(vec![d, d]),
                bo: Tensor::zeros(vec![d]),
                ln_attn: LayerNormParams::identity(d),
                w_ff1: normal(vec![d, cfg.d_ff]),
                b_ff1: Tensor::zeros(vec![cfg.d_ff]),
                w_ff2: normal(vec![cfg.d_ff, d]),
                b_ff2: Tensor::zeros(vec![d]),
                ln_ffn: LayerNormParams::identity(d),
            })
            .collect();
        let params = FoundationParams {
            tok_emb: normal(vec![cfg.vocab_size, d]),
            // Zero-initialized position/segment tables: rows the pre-training
            // length distribution never reaches stay exactly neutral instead
            // of injecting untrained noise into longer fine-tuning inputs.
            pos_emb: Tensor::zeros(vec![cfg.max_seq_len, d]),
            seg_emb: Tensor::zeros(vec![cfg.type_vocab, d]),
            ln_emb: LayerNormParams::identity(d),
            layers,
            ln_mlm: LayerNormParams::identity(d),
            mlm_bias: Tensor::zeros(vec![cfg.vocab_size]),
        };
        Ok(FoundationModel {
            cfg,
            vocab_fingerprint,
            params,
        })
    }

    pub(crate) fn from_parts(
        cfg: ModelConfig,
        vocab_fingerprint: u64,
        params: FoundationParams,
    ) -> Self {
        FoundationModel {
            cfg,
            vocab_fingerprint,
            params,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn vocab_fingerprint(&self) -> u64 {
        self.vocab_fingerprint
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_: &str, t: &Tensor| n += t.numel());
        n
    }

    /// Walks all parameters in canonical order.
    pub fn visit_params<V: ParamVisitor>(&self, v: &mut V) {
        let p = &self.params;
        v.visit("tok_emb", &p.tok_emb);
        v.visit("pos_emb", &p.pos_emb);
        v.visit("seg_emb", &p.seg_emb);
        v.visit("ln_emb.gain", &p.ln_emb.gain);
        v.visit("ln_emb.bias", &p.ln_emb.bias);
        for (i, l) in p.layers.iter().enumerate() {
            for (suffix, t) in [
                ("wq", &l.wq),
                ("bq", &l.bq),
                ("wk", &l.wk),
                ("bk", &l.bk),
                ("wv", &l.wv),
                ("bv", &l.bv),
                ("wo", &l.wo),
                ("bo", &l.bo),
                ("ln_attn.gain", &l.ln_attn.gain),
                ("ln_attn.bias", &l.ln_attn.bias),
                ("w_ff1", &l.w_ff1),
                ("b_ff1", &l.b_ff1),
                ("w_ff2", &l.w_ff2),
                ("b_ff2", &l.b_ff2),
                ("ln_ffn.gain", &l.ln_ffn.gain),
                ("ln_ffn.bias", &l.ln_ffn.bias),
            ] {
                v.visit(&format!("layers.{i}.{suffix}"), t);
            }
        }
        v.visit("ln_mlm.gain", &p.ln_mlm.gain);
        v.visit("ln_mlm.bias", &p.ln_mlm.bias);
        v.visit("mlm_bias", &p.mlm_bias);
    }

    /// Mutable parameter slots in the same canonical order as
    /// [`visit_params`](Self::visit_params).
    pub fn param_slots_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let p = &mut self.params;
        let mut out: Vec<(&'static str, &mut Tensor)> = vec![
            ("tok_emb", &mut p.tok_emb),
            ("pos_emb", &mut p.pos_emb),
            ("seg_emb", &mut p.seg_emb),
            ("ln_emb.gain", &mut p.ln_emb.gain),
            ("ln_emb.bias", &mut p.ln_emb.bias),
        ];
        for l in p.layers.iter_mut() {
            out.push(("wq", &mut l.wq));
            out.push(("bq", &mut l.bq));
            out.push(("wk", &mut l.wk));
            out.push(("bk", &mut l.bk));
            out.push(("wv", &mut l.wv));
            out.push(("bv", &mut l.bv));
            out.push(("wo", &mut l.wo));
            out.push(("bo", &mut l.bo));
            out.push(("ln_attn.gain", &mut l.ln_attn.gain));
            out.push(("ln_attn.bias", &mut l.ln_attn.bias));
            out.push(("w_ff1", &mut l.w_ff1));
            out.push(("b_ff1", &mut l.b_ff1));
            out.push(("w_ff2", &mut l.w_ff2));
            out.push(("b_ff2", &mut l.b_ff2));
            out.push(("ln_ffn.gain", &mut l.ln_ffn.gain));
            out.push(("ln_ffn.bias", &mut l.ln_ffn.bias));
        }
        out.push(("ln_mlm.gain", &mut p.ln_mlm.gain));
        out.push(("ln_mlm.bias", &mut p.ln_mlm.bias));
        out.push(("mlm_bias", &mut p.mlm_bias));
        out
    }
}

struct LayerNodes {
    wq: NodeId,
    bq: NodeId,
    wk: NodeId,
    bk: NodeId,
    wv: NodeId,
    bv: NodeId,
    wo: NodeId,
    bo: NodeId,
    ln_attn: (NodeId, NodeId),
    w_ff1: NodeId,
    b_ff1: NodeId,
    w_ff2: NodeId,
    b_ff2: NodeId,
    ln_ffn: (NodeId, NodeId),
}

struct ParamNodes {
    tok_emb: NodeId,
    pos_emb: NodeId,
    seg_emb: NodeId,
    ln_emb: (NodeId, NodeId),
    layers: Vec<LayerNodes>,
    ln_mlm: (NodeId, NodeId),
    mlm_bias: NodeId,
}

/// Per-sequence forward outputs inside one graph.
pub struct EncodeOutput {
    pub hidden: NodeId,
    /// Softmaxed attention matrices, one node per (layer, head).
    pub attention: Vec<NodeId>,
    seq_len: usize,
}

impl EncodeOutput {
    pub fn seq_len(&self) -> usize {
        self.seq_len
    }
}

/// Builds forward graphs against a foundation model. One `ModelForward`
/// hosts one graph; register it once per batch, encode many sequences, and
/// differentiate the combined loss.
pub struct ModelForward<'m> {
    model: &'m FoundationModel,
    pub graph: Graph,
    nodes: ParamNodes,
    /// Leaf node ids in canonical parameter order, for gradient collection.
    leaf_order: Vec<NodeId>,
}

impl<'m> ModelForward<'m> {
    pub fn new(model: &'m FoundationModel, trainable: bool) -> Self {
        let mut graph = Graph::new();
        let mut leaf_order = Vec::new();
        let mut reg = |graph: &mut Graph, t: &Tensor| {
            let id = graph.leaf(t.clone().with_requires_grad(trainable));
            leaf_order.push(id);
            id
        };
        let p = &model.params;
        let tok_emb = reg(&mut graph, &p.tok_emb);
        let pos_emb = reg(&mut graph, &p.pos_emb);
        let seg_emb = reg(&mut graph, &p.seg_emb);
        let ln_emb = (reg(&mut graph, &p.ln_emb.gain), reg(&mut graph, &p.ln_emb.bias));
        let layers = p
            .layers
            .iter()
            .map(|l| LayerNodes {
                wq: reg(&mut graph, &l.wq),
                bq: reg(&mut graph, &l.bq),
                wk: reg(&mut graph, &l.wk),
                bk: reg(&mut graph, &l.bk),
                wv: reg(&mut graph, &l.wv),
                bv: reg(&mut graph, &l.bv),
                wo: reg(&mut graph, &l.wo),
                bo: reg(&mut graph, &l.bo),
                ln_attn: (
                    reg(&mut graph, &l.ln_attn.gain),
                    reg(&mut graph, &l.ln_attn.bias),
                ),
                w_ff1: reg(&mut graph, &l.w_ff1),
                b_ff1: reg(&mut graph, &l.b_ff1),
                w_ff2: reg(&mut graph, &l.w_ff2),
                b_ff2: reg(&mut graph, &l.b_ff2),
                ln_ffn: (
                    reg(&mut graph, &l.ln_ffn.gain),
                    reg(&mut graph, &l.ln_ffn.bias),
                ),
            })
            .collect();
        let ln_mlm = (reg(&mut graph, &p.ln_mlm.gain), reg(&mut graph, &p.ln_mlm.bias));
        let mlm_bias = reg(&mut graph, &p.mlm_bias);
        ModelForward {
            model,
            graph,
            nodes: ParamNodes {
                tok_emb,
                pos_emb,
                seg_emb,
                ln_emb,
                layers,
                ln_mlm,
                mlm_bias,
            },
            leaf_order,
        }
    }

    pub fn model(&self) -> &FoundationModel {
        self.model
    }

    /// Consumes the builder, releasing the graph from the model borrow.
    pub fn into_graph(self) -> Graph {
        self.graph
    }

    pub fn foundation_leaves(&self) -> &[NodeId] {
        &self.leaf_order
    }

    /// Registers an extra trainable tensor (head parameters) on this graph.
    pub fn extra_leaf(&mut self, t: &Tensor, trainable: bool) -> NodeId {
        self.graph.leaf(t.clone().with_requires_grad(trainable))
    }

    /// Runs the encoder stack over one sequence; hidden states come back as
    /// a `[len x d_model]` node.
    pub fn encode(&mut self, input: &EncodedInput) -> Result<EncodeOutput, ModelError> {
        let cfg = &self.model.cfg;
        let len = input.ids.len();
        if len == 0 {
            return Err(ModelError::LengthMismatch("empty input".into()));
        }
        if len > cfg.max_seq_len {
            return Err(ModelError::InputTooLong {
                len,
                max: cfg.max_seq_len,
            });
        }
        if input.ids[0] != CLS_ID {
            return Err(ModelError::MissingCls);
        }
        if input.segment_ids.len() != len || input.attention_mask.len() != len {
            return Err(ModelError::LengthMismatch(format!(
                "ids {len}, segments {}, mask {}",
                input.segment_ids.len(),
                input.attention_mask.len()
            )));
        }
        for &s in &input.segment_ids {
            if s as usize >= cfg.type_vocab {
                return Err(ModelError::SegmentOutOfRange(s));
            }
        }

        let g = &mut self.graph;
        let ids: Vec<usize> = input.ids.iter().map(|&i| i as usize).collect();
        let seg_ids: Vec<usize> = input.segment_ids.iter().map(|&s| s as usize).collect();
        let positions: Vec<usize> = (0..len).collect();

        let tok = g.embedding_gather(self.nodes.tok_emb, &ids)?;
        let pos = g.embedding_gather(self.nodes.pos_emb, &positions)?;
        let seg = g.embedding_gather(self.nodes.seg_emb, &seg_ids)?;
        let sum = g.add(tok, pos)?;
        let sum = g.add(sum, seg)?;
        let mut hidden = g.layer_norm(sum, self.nodes.ln_emb.0, self.nodes.ln_emb.1, LN_EPS)?;

        // Additive key mask: padded positions contribute -1e9 to every row's
        // score for that key, which underflows to exactly zero weight.
        let mut mask_data = vec![0.0f32; len * len];
        for (j, &real) in input.attention_mask.iter().enumerate() {
            if !real {
                for i in 0..len {
                    mask_data[i * len + j] = ATTN_MASK_VALUE;
                }
            }
        }
        let mask = g.constant(Tensor::new(vec![len, len], mask_data).expect("mask tensor"));

        let head_dim = cfg.head_dim();
        let scale = 1.0 / (head_dim as f32).sqrt();
        let mut attention = Vec::with_capacity(cfg.n_layers * cfg.n_heads);

        for layer in &self.nodes.layers {
            let q = g.matmul(hidden, layer.wq)?;
            let q = g.add_bias(q, layer.bq)?;
            let k = g.matmul(hidden, layer.wk)?;
            let k = g.add_bias(k, layer.bk)?;
            let v = g.matmul(hidden, layer.wv)?;
            let v = g.add_bias(v, layer.bv)?;

            let mut head_outputs = Vec::with_capacity(cfg.n_heads);
            for h in 0..cfg.n_heads {
                let start = h * head_dim;
                let qh = g.slice_cols(q, start, head_dim)?;
                let kh = g.slice_cols(k, start, head_dim)?;
                let vh = g.slice_cols(v, start, head_dim)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, scale)?;
                let scores = g.add(scores, mask)?;
                let probs = g.softmax_rows(scores)?;
                attention.push(probs);
                head_outputs.push(g.matmul(probs, vh)?);
            }
            let ctx = g.concat_cols(&head_outputs)?;
            let proj = g.matmul(ctx, layer.wo)?;
            let proj = g.add_bias(proj, layer.bo)?;
            let res = g.add(hidden, proj)?;
            hidden = g.layer_norm(res, layer.ln_attn.0, layer.ln_attn.1, LN_EPS)?;

            let ff = g.matmul(hidden, layer.w_ff1)?;
            let ff = g.add_bias(ff, layer.b_ff1)?;
            let ff = g.gelu(ff)?;
            let ff = g.matmul(ff, layer.w_ff2)?;
            let ff = g.add_bias(ff, layer.b_ff2)?;
            let res = g.add(hidden, ff)?;
            hidden = g.layer_norm(res, layer.ln_ffn.0, layer.ln_ffn.1, LN_EPS)?;
        }

        Ok(EncodeOutput {
            hidden,
            attention,
            seq_len: len,
        })
    }

    /// MLM logits for the given positions: gather, final layer norm, then
    /// projection through the tied token embedding plus output bias.
    pub fn mlm_logits(
        &mut self,
        encoded: &EncodeOutput,
        positions: &[usize],
    ) -> Result<NodeId, ModelError> {
        for &p in positions {
            if p >= encoded.seq_len {
                return Err(ModelError::LengthMismatch(format!(
                    "masked position {p} beyond sequence of length {}",
                    encoded.seq_len
                )));
            }
        }
        let g = &mut self.graph;
        let rows = g.embedding_gather(encoded.hidden, positions)?;
        let normed = g.layer_norm(rows, self.nodes.ln_mlm.0, self.nodes.ln_mlm.1, LN_EPS)?;
        let emb_t = g.transpose(self.nodes.tok_emb)?;
        let logits = g.matmul(normed, emb_t)?;
        Ok(g.add_bias(logits, self.nodes.mlm_bias)?)
    }
}

#[cfg(test)]
pub(crate) use test_support::tiny_config;
