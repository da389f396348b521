//! Task heads: linear -> ReLU -> dropout -> linear over pooled or per-token
//! hidden states.

use super::transformer::{EncodeOutput, FoundationModel, ModelForward};
use super::{ModelError, ParamVisitor};
use crate::corpus::TaskKind;
use crate::tensor::{NodeId, Tensor};
use crate::util::{rng_from_seed, sample_normal};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// One prediction per sequence, pooled from the [CLS] state.
    Classification,
    /// One prediction per word token.
    Tagging,
}

impl HeadKind {
    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::TokenTagging => HeadKind::Tagging,
            _ => HeadKind::Classification,
        }
    }

    pub fn serves(&self, task: TaskKind) -> bool {
        *self == Self::for_task(task)
    }
}

/// How classification pools hidden states into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// The [CLS] row alone.
    Cls,
    /// Mean over the provided rows.
    #[default]
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub n_classes: usize,
    pub dropout: f32,
    #[serde(default)]
    pub pooling: Pooling,
}

impl HeadConfig {
    pub fn new(kind: HeadKind, n_classes: usize) -> Self {
        HeadConfig {
            kind,
            n_classes,
            dropout: 0.1,
            pooling: Pooling::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Head {
    pub cfg: HeadConfig,
    pub(crate) w1: Tensor,
    pub(crate) b1: Tensor,
    pub(crate) w2: Tensor,
    pub(crate) b2: Tensor,
}

impl Head {
    pub fn init(cfg: HeadConfig, d_model: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut normal = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|_| (sample_normal(&mut rng) * 0.02) as f32)
                .collect();
            Tensor::new(shape, data).expect("head init")
        };
        Head {
            w1: normal(vec![d_model, d_model]),
            b1: Tensor::zeros(vec![d_model]),
            w2: normal(vec![d_model, cfg.n_classes]),
            b2: Tensor::zeros(vec![cfg.n_classes]),
            cfg,
        }
    }

    pub fn visit_params<V: ParamVisitor>(&self, v: &mut V) {
        v.visit("head.w1", &self.w1);
        v.visit("head.b1", &self.b1);
        v.visit("head.w2", &self.w2);
        v.visit("head.b2", &self.b2);
    }

    pub fn param_slots_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("head.w1", &mut self.w1),
            ("head.b1", &mut self.b1),
            ("head.w2", &mut self.w2),
            ("head.b2", &mut self.b2),
        ]
    }
}

/// A foundation model plus one task head.
#[derive(Debug, Clone)]
pub struct DownstreamModel {
    pub foundation: FoundationModel,
    pub head: Head,
}

impl DownstreamModel {
    pub fn new(foundation: FoundationModel, head: Head) -> Self {
        DownstreamModel { foundation, head }
    }

    pub fn check_task(&self, task: TaskKind) -> Result<(), ModelError> {
        if !self.head.cfg.kind.serves(task) {
            return Err(ModelError::TaskMismatch {
                head: self.head.cfg.kind,
                task: task.name().to_string(),
            });
        }
        Ok(())
    }
}

/// Head parameter node ids on a forward graph.
pub struct HeadNodes {
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
    dropout: f32,
    kind: HeadKind,
    pooling: Pooling,
}

impl HeadNodes {
    pub fn register(fw: &mut ModelForward<'_>, head: &Head, trainable: bool) -> Self {
        HeadNodes {
            w1: fw.extra_leaf(&head.w1, trainable),
            b1: fw.extra_leaf(&head.b1, trainable),
            w2: fw.extra_leaf(&head.w2, trainable),
            b2: fw.extra_leaf(&head.b2, trainable),
            dropout: head.cfg.dropout,
            kind: head.cfg.kind,
            pooling: head.cfg.pooling,
        }
    }

    pub fn leaves(&self) -> [NodeId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    /// Task logits: classification pools the sequence into one row (mean of
    /// rows, or the [CLS] row alone), tagging maps every word row. Dropout
    /// is applied only when a training RNG is supplied and the rate is
    /// positive.
    pub fn logits(
        &self,
        fw: &mut ModelForward<'_>,
        encoded: &EncodeOutput,
        rows: &[usize],
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::LengthMismatch("head got no rows".into()));
        }
        let g = &mut fw.graph;
        let pooled = match (self.kind, self.pooling) {
            (HeadKind::Classification, Pooling::Mean) => {
                let gathered = g.embedding_gather(encoded.hidden, rows)?;
                let weights = Tensor::new(
                    vec![1, rows.len()],
                    vec![1.0 / rows.len() as f32; rows.len()],
                )
                .expect("mean weights");
                let w = g.constant(weights);
                g.matmul(w, gathered)?
            }
            (HeadKind::Classification, Pooling::Cls) => {
                if rows != [0] {
                    return Err(ModelError::LengthMismatch(
                        "cls pooling reads exactly the [CLS] row".into(),
                    ));
                }
                g.embedding_gather(encoded.hidden, rows)?
            }
            (HeadKind::Tagging, _) => g.embedding_gather(encoded.hidden, rows)?,
        };
        let h = g.matmul(pooled, self.w1)?;
        let h = g.add_bias(h, self.b1)?;
        let mut h = g.relu(h)?;
        if self.dropout > 0.0 {
            if let Some(rng) = dropout_rng {
                let keep = 1.0 - self.dropout;
                let n = g.value(h).numel();
                let shape = g.value(h).shape().to_vec();
                let mask_data: Vec<f32> = (0..n)
                    .map(|_| {
                        if rng.random::<f32>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mask = g.constant(Tensor::new(shape, mask_data).expect("dropout mask"));
                h = g.mul(h, mask)?;
            }
        }
        let out = g.matmul(h, self.w2)?;
        Ok(g.add_bias(out, self.b2)?)
    }
}
