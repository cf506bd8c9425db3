//! Self-adversarial negative-sampling loss.
//!
//! For a positive triple with distance `d+` and negatives `d_i`:
//!
//! ```text
//! L = -ln s(margin - d+) - sum_i p_i ln s(d_i - margin)
//! p = softmax(temperature * score(neg_i))
//! ```
//!
//! where `s` is the logistic function and `p` is a constant (no gradient
//! flows through the sampling weights).

use rustc_hash::FxHashSet;

use rand::Rng;

use super::kernels::{self, axpy};
use super::scoring::{distance, distance_grad};
use super::{Corruption, EmbeddingTable, ModelKind, Norm, TrainConfig};
use crate::data::{EntityId, Triple};
use crate::error::{Error, Result};

/// Gradient rows for one parameter matrix. Storage is dense; only rows that
/// were written are reported as touched.
#[derive(Debug, Clone)]
pub struct SparseRows {
    cols: usize,
    data: Vec<f64>,
    marked: Vec<bool>,
    touched: Vec<usize>,
}

impl SparseRows {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            cols,
            data: vec![0.0; rows * cols],
            marked: vec![false; rows],
            touched: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.marked.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        if !self.marked[i] {
            self.marked[i] = true;
            self.touched.push(i);
        }
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The stored row; all zeros for untouched rows.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_touched(&self, i: usize) -> bool {
        self.marked[i]
    }

    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.marked[i] = false;
            self.data[i * self.cols..(i + 1) * self.cols].fill(0.0);
        }
        self.touched.clear();
    }
}

/// Gradient of the loss over the rows a batch touched.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub entities: SparseRows,
    pub relations: SparseRows,
}

impl Gradient {
    pub fn for_table(table: &EmbeddingTable) -> Self {
        Self {
            entities: SparseRows::new(table.num_entities(), table.entity_width()),
            relations: SparseRows::new(table.num_relations(), table.relation_width()),
        }
    }

    pub fn clear(&mut self) {
        self.entities.clear();
        self.relations.clear();
    }
}

/// Draws corrupted triples from a client's local entities, rejecting
/// corruptions that are known training facts.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    entities: Vec<EntityId>,
    known: FxHashSet<Triple>,
    corruption: Corruption,
    max_retries: usize,
}

impl NegativeSampler {
    pub const DEFAULT_RETRIES: usize = 10;

    pub fn new(
        local_entities: impl IntoIterator<Item = EntityId>,
        known: impl IntoIterator<Item = Triple>,
        corruption: Corruption,
    ) -> Result<Self> {
        let entities: Vec<EntityId> = local_entities.into_iter().collect();
        if entities.len() < 2 {
            return Err(Error::Config(format!(
                "negative sampling needs at least 2 local entities, got {}",
                entities.len()
            )));
        }
        Ok(Self {
            entities,
            known: known.into_iter().collect(),
            corruption,
            max_retries: Self::DEFAULT_RETRIES,
        })
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn sample(&self, triple: &Triple, n: usize, rng: &mut impl Rng) -> Vec<Triple> {
        let mut out = Vec::with_capacity(n);
        self.sample_into(triple, n, rng, &mut out);
        out
    }

    pub fn sample_into(&self, triple: &Triple, n: usize, rng: &mut impl Rng, out: &mut Vec<Triple>) {
        out.clear();
        for _ in 0..n {
            let corrupt_head = match self.corruption {
                Corruption::Both => rng.gen_bool(0.5),
                Corruption::TailOnly => false,
            };
            let mut candidate = *triple;
            for attempt in 0..=self.max_retries {
                let e = self.entities[rng.gen_range(0..self.entities.len())];
                candidate = if corrupt_head {
                    Triple { head: e, ..*triple }
                } else {
                    Triple { tail: e, ..*triple }
                };
                if attempt == self.max_retries || !self.known.contains(&candidate) {
                    break;
                }
            }
            out.push(candidate);
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without overflow for large `|x|`.
#[inline]
pub(crate) fn ln_sigmoid(x: f64) -> f64 {
    // -softplus(-x)
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

/// Self-adversarial sampling weights of `negatives`.
pub fn adversarial_weights(table: &EmbeddingTable, negatives: &[Triple], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(negatives.len());
    for n in negatives {
        table.check_triple(n)?;
        w.push(-cfg.temperature * row_distance(table, n, cfg));
    }
    softmax_in_place(&mut w);
    Ok(w)
}

#[inline]
fn row_distance(table: &EmbeddingTable, t: &Triple, cfg: &TrainConfig) -> f64 {
    distance(
        table.kind,
        cfg.norm,
        table.entities.row(t.head as usize),
        table.relations.row(t.relation as usize),
        table.entities.row(t.tail as usize),
    )
}

pub fn loss_self_adversarial(
    table: &EmbeddingTable,
    positive: &Triple,
    negatives: &[Triple],
    cfg: &TrainConfig,
) -> Result<f64> {
    check_inputs(table, positive, negatives)?;
    let mut scratch = Scratch::default();
    Ok(accumulate(table, positive, negatives, cfg, 0.0, None, &mut scratch))
}

pub fn grad(table: &EmbeddingTable, positive: &Triple, negatives: &[Triple], cfg: &TrainConfig) -> Result<Gradient> {
    check_inputs(table, positive, negatives)?;
    let mut g = Gradient::for_table(table);
    let mut scratch = Scratch::default();
    accumulate(table, positive, negatives, cfg, 1.0, Some(&mut g), &mut scratch);
    Ok(g)
}

fn check_inputs(table: &EmbeddingTable, positive: &Triple, negatives: &[Triple]) -> Result<()> {
    if negatives.is_empty() {
        return Err(Error::validation("negatives", "at least one negative is required"));
    }
    table.check_triple(positive)?;
    negatives.iter().try_for_each(|n| table.check_triple(n))
}

#[derive(Debug, Default)]
pub(crate) struct Scratch {
    weights: Vec<f64>,
    dists: Vec<f64>,
    dh: Vec<f64>,
    dr: Vec<f64>,
    dt: Vec<f64>,
    residuals: Vec<f64>,
}

/// Computes the loss of one positive and, when `grad` is given, adds
/// `scale * dL/dparams` into it. Ids must already be validated.
pub(crate) fn accumulate(
    table: &EmbeddingTable,
    positive: &Triple,
    negatives: &[Triple],
    cfg: &TrainConfig,
    scale: f64,
    grad: Option<&mut Gradient>,
    scratch: &mut Scratch,
) -> f64 {
    if table.kind == ModelKind::TransE && negatives.iter().all(|n| n.relation == positive.relation) {
        return accumulate_transe(table, positive, negatives, cfg, scale, grad, scratch);
    }
    let margin = cfg.margin;
    let d_pos = row_distance(table, positive, cfg);

    scratch.dists.clear();
    scratch.dists.extend(negatives.iter().map(|n| row_distance(table, n, cfg)));
    scratch.weights.clear();
    scratch.weights.extend(scratch.dists.iter().map(|d| -cfg.temperature * d));
    softmax_in_place(&mut scratch.weights);

    let mut loss = -ln_sigmoid(margin - d_pos);
    for (p, d) in scratch.weights.iter().zip(&scratch.dists) {
        loss -= p * ln_sigmoid(d - margin);
    }

    if let Some(g) = grad {
        let (de, dr) = (table.entity_width(), table.relation_width());
        scratch.dh.resize(de, 0.0);
        scratch.dt.resize(de, 0.0);
        scratch.dr.resize(dr, 0.0);
        add_distance_grad(table, positive, cfg, scale * sigmoid(d_pos - margin), g, scratch);
        for i in 0..negatives.len() {
            let coef = -scratch.weights[i] * sigmoid(margin - scratch.dists[i]);
            add_distance_grad(table, &negatives[i], cfg, scale * coef, g, scratch);
        }
    }
    loss
}

fn add_distance_grad(
    table: &EmbeddingTable,
    t: &Triple,
    cfg: &TrainConfig,
    coef: f64,
    g: &mut Gradient,
    scratch: &mut Scratch,
) {
    if coef == 0.0 {
        // Still mark rows so the touched set is exactly the batch support.
        g.entities.row_mut(t.head as usize);
        g.entities.row_mut(t.tail as usize);
        g.relations.row_mut(t.relation as usize);
        return;
    }
    distance_grad(
        table.kind,
        cfg.norm,
        table.entities.row(t.head as usize),
        table.relations.row(t.relation as usize),
        table.entities.row(t.tail as usize),
        &mut scratch.dh,
        &mut scratch.dr,
        &mut scratch.dt,
    );
    axpy(g.entities.row_mut(t.head as usize), coef, &scratch.dh);
    axpy(g.entities.row_mut(t.tail as usize), coef, &scratch.dt);
    axpy(g.relations.row_mut(t.relation as usize), coef, &scratch.dr);
}

/// Writes `h + r - t` into `out` and returns its norm.
#[inline]
fn residual(h: &[f64], r: &[f64], t: &[f64], norm: Norm, out: &mut [f64]) -> f64 {
    match norm {
        Norm::L2 => kernels::residual(h, r, t, out, true).sqrt(),
        Norm::L1 => kernels::residual(h, r, t, out, false),
    }
}

/// Adds `coef * d(norm)/d(residual)` to `y`.
#[inline]
fn add_direction(y: &mut [f64], coef: f64, residual: &[f64], dist: f64, norm: Norm) {
    let residual = &residual[..y.len()];
    match norm {
        Norm::L2 if dist > 0.0 => axpy(y, coef / dist, residual),
        Norm::L2 => {}
        Norm::L1 => {
            for (y, x) in y.iter_mut().zip(residual) {
                if *x != 0.0 {
                    *y += if *x > 0.0 { coef } else { -coef };
                }
            }
        }
    }
}

/// [`accumulate`] for TransE. Residuals are computed once and gradient
/// contributions to the positive's head, relation and tail are summed
/// locally before touching the gradient table.
fn accumulate_transe(
    table: &EmbeddingTable,
    positive: &Triple,
    negatives: &[Triple],
    cfg: &TrainConfig,
    scale: f64,
    grad: Option<&mut Gradient>,
    s: &mut Scratch,
) -> f64 {
    let w = table.entity_width();
    let margin = cfg.margin;
    let ent = |id: EntityId| table.entities.row(id as usize);
    let rel = table.relations.row(positive.relation as usize);
    s.residuals.resize((negatives.len() + 1) * w, 0.0);
    let (pos_res, neg_res) = s.residuals.split_at_mut(w);
    let d_pos = residual(ent(positive.head), rel, ent(positive.tail), cfg.norm, pos_res);
    s.dists.clear();
    for (n, out) in negatives.iter().zip(neg_res.chunks_exact_mut(w)) {
        s.dists.push(residual(ent(n.head), rel, ent(n.tail), cfg.norm, out));
    }
    s.weights.clear();
    s.weights.extend(s.dists.iter().map(|d| -cfg.temperature * d));
    softmax_in_place(&mut s.weights);

    let mut loss = -ln_sigmoid(margin - d_pos);
    for (p, d) in s.weights.iter().zip(&s.dists) {
        loss -= p * ln_sigmoid(d - margin);
    }

    let Some(g) = grad else {
        return loss;
    };
    // Contributions grouped by which of the positive's rows they share:
    // `both` (the positive itself), `head` (tail corrupted), `tail` (head corrupted).
    let (both, head, tail) = (&mut s.dr, &mut s.dh, &mut s.dt);
    for acc in [&mut *both, &mut *head, &mut *tail] {
        acc.clear();
        acc.resize(w, 0.0);
    }
    add_direction(both, scale * sigmoid(d_pos - margin), pos_res, d_pos, cfg.norm);
    for (i, (n, res)) in negatives.iter().zip(neg_res.chunks_exact(w)).enumerate() {
        let d = s.dists[i];
        let c = -scale * s.weights[i] * sigmoid(margin - d);
        match (n.head == positive.head, n.tail == positive.tail) {
            (true, true) => add_direction(both, c, res, d, cfg.norm),
            (true, false) => {
                add_direction(head, c, res, d, cfg.norm);
                add_direction(g.entities.row_mut(n.tail as usize), -c, res, d, cfg.norm);
            }
            (false, true) => {
                add_direction(tail, c, res, d, cfg.norm);
                add_direction(g.entities.row_mut(n.head as usize), c, res, d, cfg.norm);
            }
            (false, false) => {
                add_direction(g.entities.row_mut(n.head as usize), c, res, d, cfg.norm);
                add_direction(g.entities.row_mut(n.tail as usize), -c, res, d, cfg.norm);
                add_direction(g.relations.row_mut(n.relation as usize), c, res, d, cfg.norm);
            }
        }
    }
    let h = g.entities.row_mut(positive.head as usize);
    axpy(h, 1.0, both);
    axpy(h, 1.0, head);
    let r = g.relations.row_mut(positive.relation as usize);
    axpy(r, 1.0, both);
    axpy(r, 1.0, head);
    axpy(r, 1.0, tail);
    let t = g.entities.row_mut(positive.tail as usize);
    axpy(t, -1.0, both);
    axpy(t, -1.0, tail);
    loss
}
