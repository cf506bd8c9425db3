//! Knowledge graph embedding models and their local optimizer.

mod adam;
mod checkpoint;
mod kernels;
mod loss;
mod matrix;
mod scoring;
mod train;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Triple;
use crate::error::{Error, Result};
use crate::rng;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use loss::{adversarial_weights, grad, loss_self_adversarial, Gradient, NegativeSampler, SparseRows};
pub use matrix::Matrix;
pub use scoring::{distance, distance_grad, score, score_tails};
pub use train::{train_epochs, BatchContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    RotatE,
    DistMult,
    ComplEx,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::TransE,
        ModelKind::RotatE,
        ModelKind::DistMult,
        ModelKind::ComplEx,
    ];

    /// `(entity width, relation width)` for a configured dimension.
    pub fn widths(self, dim: usize) -> (usize, usize) {
        match self {
            ModelKind::RotatE => (2 * dim, dim),
            _ => (dim, dim),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::RotatE => "rotate",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "rotate" => Ok(ModelKind::RotatE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            other => Err(Error::validation("model", format!("unknown model `{other}`"))),
        }
    }
}

/// Norm used by the distance-based models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
}

/// Which side of a positive triple negatives replace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    #[default]
    Both,
    TailOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub temperature: f64,
    pub num_negatives: usize,
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub dim: usize,
    pub norm: Norm,
    pub corruption: Corruption,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 10.0,
            temperature: 1.0,
            num_negatives: 256,
            learning_rate: 0.001,
            local_epochs: 3,
            batch_size: 512,
            dim: 128,
            norm: Norm::L2,
            corruption: Corruption::Both,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be positive, got {v}")))
            }
        };
        positive("train.margin", self.margin)?;
        positive("train.learning_rate", self.learning_rate)?;
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::validation("train.temperature", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("train.batch_size", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::validation("train.dim", "must be at least 1"));
        }
        Ok(())
    }
}

/// Entity and relation parameters of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub kind: ModelKind,
    pub entities: Matrix,
    pub relations: Matrix,
}

impl EmbeddingTable {
    pub fn new(kind: ModelKind, entities: Matrix, relations: Matrix) -> Result<Self> {
        let table = Self {
            kind,
            entities,
            relations,
        };
        table.check_shape()?;
        Ok(table)
    }

    pub fn entity_width(&self) -> usize {
        self.entities.cols()
    }

    pub fn relation_width(&self) -> usize {
        self.relations.cols()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.rows()
    }

    fn check_shape(&self) -> Result<()> {
        let (de, dr) = (self.entity_width(), self.relation_width());
        let ok = de > 0
            && dr > 0
            && match self.kind {
                ModelKind::TransE | ModelKind::DistMult => de == dr,
                ModelKind::RotatE => de == 2 * dr,
                ModelKind::ComplEx => de == dr && de % 2 == 0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("{} table with widths ({de}, {dr})", self.kind)))
        }
    }

    pub fn check_triple(&self, t: &Triple) -> Result<()> {
        for id in [t.head, t.tail] {
            if id as usize >= self.num_entities() {
                return Err(Error::IndexOutOfRange {
                    kind: "entity",
                    index: id as usize,
                    len: self.num_entities(),
                });
            }
        }
        if t.relation as usize >= self.num_relations() {
            return Err(Error::IndexOutOfRange {
                kind: "relation",
                index: t.relation as usize,
                len: self.num_relations(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entities.as_slice().iter().chain(self.relations.as_slice()).all(|v| v.is_finite())
    }
}

fn check_dim(kind: ModelKind, dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    if kind == ModelKind::ComplEx && dim % 2 != 0 {
        return Err(Error::Config(format!(
            "ComplEx needs an even dimension (real/imaginary pairs), got {dim}"
        )));
    }
    Ok(())
}

/// Uniform entity rows in `[-sqrt(6/dim), sqrt(6/dim)]`.
pub fn init_entity_matrix(kind: ModelKind, rows: usize, dim: usize, rng: &mut impl Rng) -> Result<Matrix> {
    check_dim(kind, dim)?;
    let (width, _) = kind.widths(dim);
    let bound = (6.0 / dim as f64).sqrt();
    Ok(Matrix::from_fn(rows, width, |_, _| rng.gen_range(-bound..=bound)))
}

/// Uniform relation rows; RotatE phases are uniform in `[-pi, pi]`.
pub fn init_relation_matrix(kind: ModelKind, rows: usize, dim: usize, rng: &mut impl Rng) -> Result<Matrix> {
    check_dim(kind, dim)?;
    let (_, width) = kind.widths(dim);
    let bound = match kind {
        ModelKind::RotatE => PI,
        _ => (6.0 / dim as f64).sqrt(),
    };
    Ok(Matrix::from_fn(rows, width, |_, _| rng.gen_range(-bound..=bound)))
}

pub fn init_embeddings(
    kind: ModelKind,
    num_entities: usize,
    num_relations: usize,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut rng = rng::substream(seed, "init_embeddings");
    let entities = init_entity_matrix(kind, num_entities, dim, &mut rng)?;
    let relations = init_relation_matrix(kind, num_relations, dim, &mut rng)?;
    EmbeddingTable::new(kind, entities, relations)
}
