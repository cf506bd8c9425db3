//! Federated training orchestration for the `Local`, `FedE` and `FedR` modes.
//!
//! Each round the server samples clients, every sampled client overwrites
//! the rows it owns from the global table, trains locally, and uploads its
//! masked full-width matrix together with its existence mask. The server
//! divides the element-wise sum of uploads by the element-wise sum of masks.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, Split};
use crate::model::{
    init_entity_matrix, init_relation_matrix, train_epochs, AdamState, BatchContext, EmbeddingTable, Matrix,
    ModelKind, NegativeSampler, TrainConfig,
};
use crate::rng;
use crate::secure::{cohort_label, psu_union, secagg_share, secagg_sum, FixedPointCodec, PairwiseSeeds, PsuResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Local,
    FedE,
    FedR,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Local => "local",
            Mode::FedE => "fede",
            Mode::FedR => "fedr",
        }
    }

    /// Which parameter matrix the server aggregates.
    pub fn shared_element(self) -> Option<Element> {
        match self {
            Mode::Local => None,
            Mode::FedE => Some(Element::Entity),
            Mode::FedR => Some(Element::Relation),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "local" => Ok(Mode::Local),
            "fede" => Ok(Mode::FedE),
            "fedr" => Ok(Mode::FedR),
            other => Err(Error::validation("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Entity,
    Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecureConfig {
    /// Align relations with the private set union instead of plaintext collection.
    pub psu: bool,
    /// Aggregate through pairwise-masked secure aggregation.
    pub secagg: bool,
    pub scale_bits: u32,
    pub modulus: u64,
    pub max_clients: usize,
}

impl Default for SecureConfig {
    fn default() -> Self {
        let codec = FixedPointCodec::default();
        Self {
            psu: false,
            secagg: false,
            scale_bits: codec.scale_bits,
            modulus: codec.modulus,
            max_clients: codec.max_clients,
        }
    }
}

impl SecureConfig {
    pub fn codec(&self) -> Result<FixedPointCodec> {
        FixedPointCodec::new(self.scale_bits, self.modulus, self.max_clients)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub mode: Mode,
    pub rounds: usize,
    pub sample_fraction: f64,
    pub eval_every: usize,
    pub patience: usize,
    pub seed: u64,
    pub secure: SecureConfig,
    pub eval: EvalOptions,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FedR,
            rounds: 300,
            sample_fraction: 1.0,
            eval_every: 1,
            patience: 5,
            seed: 0,
            secure: SecureConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::validation("federation.sample_fraction", "must be in (0, 1]"));
        }
        if self.eval_every == 0 {
            return Err(Error::validation("federation.eval_every", "must be at least 1"));
        }
        if self.mode == Mode::Local && (self.secure.psu || self.secure.secagg) {
            return Err(Error::validation("secure", "Local mode has no aggregation to protect"));
        }
        if self.mode == Mode::FedE && self.secure.psu {
            return Err(Error::validation(
                "secure.psu",
                "FedE aligns entities in plaintext; PSU applies to FedR only",
            ));
        }
        if self.secure.secagg {
            self.secure.codec()?;
        }
        Ok(())
    }
}

/// Server-side table of globally aligned rows: row `i` belongs to `ids[i]`.
/// Holds relations in FedR and entities in FedE.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTable {
    pub ids: Vec<u32>,
    pub embeddings: Matrix,
}

pub type RelationTable = GlobalTable;

impl GlobalTable {
    pub fn new(ids: Vec<u32>, embeddings: Matrix) -> Result<Self> {
        if ids.len() != embeddings.rows() {
            return Err(Error::Shape(format!("{} ids for {} rows", ids.len(), embeddings.rows())));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("ids", "must be strictly increasing"));
        }
        Ok(Self { ids, embeddings })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// `bits[i]` is set iff global row `i` exists at the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskVector {
    pub bits: Vec<bool>,
}

impl MaskVector {
    pub fn from_local(global_ids: &[u32], local: &BTreeSet<u32>) -> Self {
        Self {
            bits: global_ids.iter().map(|id| local.contains(id)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based round number.
    pub round: usize,
    pub participants: Vec<usize>,
    /// Bytes uploaded by each participant (same order).
    pub upload_bytes: Vec<u64>,
    /// Mean local training loss over participants.
    pub loss: f64,
    pub valid_mrr: Option<f64>,
    /// Wall time of the round; never written to deterministic artifacts.
    #[serde(skip)]
    pub wall_ms: f64,
}

pub const BYTES_PER_SCALAR: u64 = 4;

impl RoundLog {
    pub fn payload_elements(&self) -> u64 {
        self.upload_bytes.iter().sum::<u64>() / BYTES_PER_SCALAR
    }
}

/// A client's state between synchronization points.
pub struct ClientState<'a> {
    pub data: &'a ClientDataset,
    pub table: EmbeddingTable,
    pub adam: AdamState,
    sampler: NegativeSampler,
}

impl<'a> ClientState<'a> {
    pub fn new(data: &'a ClientDataset, table: EmbeddingTable, cfg: &TrainConfig) -> Result<Self> {
        let sampler = NegativeSampler::new(
            data.local_entities.iter().copied(),
            data.train.iter().copied(),
            cfg.corruption,
        )?;
        Ok(Self {
            adam: AdamState::new(&table),
            data,
            table,
            sampler,
        })
    }

    fn local_ids(&self, element: Element) -> &BTreeSet<u32> {
        match element {
            Element::Entity => &self.data.local_entities,
            Element::Relation => &self.data.local_relations,
        }
    }

    fn matrix_mut(&mut self, element: Element) -> &mut Matrix {
        match element {
            Element::Entity => &mut self.table.entities,
            Element::Relation => &mut self.table.relations,
        }
    }

    fn matrix(&self, element: Element) -> &Matrix {
        match element {
            Element::Entity => &self.table.entities,
            Element::Relation => &self.table.relations,
        }
    }

    /// Copies every global row the client owns into its local table.
    pub fn receive(&mut self, global: &GlobalTable, element: Element) {
        let owned: Vec<(usize, u32)> = global
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| self.local_ids(element).contains(id))
            .map(|(i, id)| (i, *id))
            .collect();
        let m = self.matrix_mut(element);
        for (slot, id) in owned {
            m.row_mut(id as usize).copy_from_slice(global.embeddings.row(slot));
        }
    }

    /// Full-width upload: owned rows copied, every other row zero.
    pub fn masked_upload(&self, global_ids: &[u32], element: Element) -> (Matrix, MaskVector) {
        let mask = MaskVector::from_local(global_ids, self.local_ids(element));
        let local = self.matrix(element);
        let mut out = Matrix::zeros(global_ids.len(), local.cols());
        for (slot, (&id, &bit)) in global_ids.iter().zip(&mask.bits).enumerate() {
            if bit {
                out.row_mut(slot).copy_from_slice(local.row(id as usize));
            }
        }
        (out, mask)
    }

    /// Runs `epochs` local epochs with a stream derived from `(seed, client, round)`.
    pub fn train_local(&mut self, cfg: &TrainConfig, epochs: usize, seed: u64, round: usize) -> Result<f64> {
        let client = self.data.client_id;
        let mut rng = rng::substream(seed, &format!("train/client{client}/round{round}"));
        train_epochs(
            &mut self.table,
            &mut self.adam,
            &self.data.train,
            &self.sampler,
            cfg,
            epochs,
            &mut rng,
            BatchContext { round, client },
        )
    }
}

#[derive(Debug, Clone)]
pub struct ClientUpload {
    pub client_id: usize,
    pub matrix: Matrix,
    pub mask: MaskVector,
    pub loss: f64,
}

/// Receive the broadcast, train `cfg.local_epochs` epochs, return the masked upload.
pub fn client_update(
    state: &mut ClientState<'_>,
    global: &GlobalTable,
    element: Element,
    cfg: &TrainConfig,
    seed: u64,
    round: usize,
) -> Result<ClientUpload> {
    state.receive(global, element);
    let loss = state.train_local(cfg, cfg.local_epochs, seed, round)?;
    let (matrix, mask) = state.masked_upload(&global.ids, element);
    Ok(ClientUpload {
        client_id: state.data.client_id,
        matrix,
        mask,
        loss,
    })
}

fn check_updates(previous: &Matrix, updates: &[(Matrix, MaskVector)]) -> Result<()> {
    for (m, mask) in updates {
        if m.shape() != previous.shape() || mask.len() != previous.rows() {
            return Err(Error::Shape(format!(
                "update {:?} with mask of {} against table {:?}",
                m.shape(),
                mask.len(),
                previous.shape()
            )));
        }
    }
    Ok(())
}

/// Element-wise masked average: row `i` is `sum_c update_c[i] / sum_c mask_c[i]`,
/// or the previous row when no client holds `i`.
///
/// Each element's summands are added in sorted order, so the result does
/// not depend on the order of `updates`.
pub fn aggregate(previous: &Matrix, updates: &[(Matrix, MaskVector)]) -> Result<Matrix> {
    check_updates(previous, updates)?;
    let (rows, cols) = previous.shape();
    let mut out = previous.clone();
    let mut column = Vec::with_capacity(updates.len());
    for i in 0..rows {
        let count = updates.iter().filter(|(_, m)| m.bits[i]).count();
        if count == 0 {
            continue;
        }
        let row = out.row_mut(i);
        for (j, cell) in row.iter_mut().enumerate().take(cols) {
            column.clear();
            column.extend(updates.iter().map(|(m, _)| m.row(i)[j]));
            column.sort_by(f64::total_cmp);
            *cell = column.iter().sum::<f64>() / count as f64;
        }
    }
    Ok(out)
}

/// FedE's server step; identical averaging semantics over entity rows.
pub fn aggregate_entities(previous: &Matrix, updates: &[(Matrix, MaskVector)]) -> Result<Matrix> {
    aggregate(previous, updates)
}

/// [`aggregate`] computed through secure aggregation: each client uploads
/// only a masked share of its matrix concatenated with its mask vector.
pub fn secure_aggregate(
    previous: &Matrix,
    updates: &[(usize, Matrix, MaskVector)],
    codec: &FixedPointCodec,
    run_seed: u64,
    round: usize,
) -> Result<Matrix> {
    let plain: Vec<(Matrix, MaskVector)> = updates.iter().map(|(_, m, k)| (m.clone(), k.clone())).collect();
    check_updates(previous, &plain)?;
    let ids: Vec<usize> = updates.iter().map(|(id, _, _)| *id).collect();
    let seeds = PairwiseSeeds::agree(&ids, run_seed, &cohort_label(round, &ids))?;
    let shares = updates
        .iter()
        .map(|(id, m, mask)| {
            let mut payload = m.as_slice().to_vec();
            payload.extend(mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }));
            secagg_share(&payload, *id, &seeds, codec)
        })
        .collect::<Result<Vec<_>>>()?;
    let sum = secagg_sum(&shares, &seeds, codec)?;
    let (rows, cols) = previous.shape();
    let (values, counts) = sum.split_at(rows * cols);
    let mut out = previous.clone();
    for i in 0..rows {
        // Mask counts are integers and survive the fixed-point encoding exactly.
        let count = counts[i].round();
        if count < 0.5 {
            continue;
        }
        for (j, cell) in out.row_mut(i).iter_mut().enumerate() {
            *cell = values[i * cols + j] / count;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Per-client tables at the best validation evaluation (or the final
    /// state when no evaluation ran).
    pub tables: Vec<EmbeddingTable>,
    pub logs: Vec<RoundLog>,
    pub best_round: Option<usize>,
    pub best_valid_mrr: Option<f64>,
    pub stopped_early: bool,
    pub global: Option<GlobalTable>,
    pub psu: Option<PsuResult>,
}

/// Initial tables shared by all modes: relation rows come from one stream
/// for every client, entity rows from a per-client stream.
fn initial_tables(
    clients: &[ClientDataset],
    num_entities: usize,
    num_relations: usize,
    kind: ModelKind,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<EmbeddingTable>> {
    let relations = init_relation_matrix(kind, num_relations, cfg.dim, &mut rng::substream(seed, "init/relations"))?;
    clients
        .iter()
        .map(|c| {
            let mut r = rng::substream(seed, &format!("init/entities/client{}", c.client_id));
            let entities = init_entity_matrix(kind, num_entities, cfg.dim, &mut r)?;
            EmbeddingTable::new(kind, entities, relations.clone())
        })
        .collect()
}

fn initial_global(
    mode: Mode,
    clients: &[ClientDataset],
    tables: &[EmbeddingTable],
    kind: ModelKind,
    cfg: &TrainConfig,
    fed: &FederationConfig,
) -> Result<(Option<GlobalTable>, Option<PsuResult>)> {
    match mode {
        Mode::Local => Ok((None, None)),
        Mode::FedR => {
            let sets: Vec<BTreeSet<u32>> = clients.iter().map(|c| c.local_relations.clone()).collect();
            let (ids, psu) = if fed.secure.psu {
                let r = psu_union(&sets, fed.seed)?;
                (r.union_ids.clone(), Some(r))
            } else {
                (sets.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect(), None)
            };
            // Relation rows start equal on every client; take them from the first.
            let init = &tables[0].relations;
            let rows: Vec<Vec<f64>> = ids.iter().map(|&id| init.row(id as usize).to_vec()).collect();
            let m = rows_or_empty(&rows, init.cols())?;
            Ok((Some(GlobalTable::new(ids, m)?), psu))
        }
        Mode::FedE => {
            let ids: Vec<u32> = clients
                .iter()
                .flat_map(|c| c.local_entities.iter().copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut r = rng::substream(fed.seed, "init/entities/server");
            let num_entities = tables[0].num_entities();
            let full = init_entity_matrix(kind, num_entities, cfg.dim, &mut r)?;
            let rows: Vec<Vec<f64>> = ids.iter().map(|&id| full.row(id as usize).to_vec()).collect();
            let m = rows_or_empty(&rows, full.cols())?;
            Ok((Some(GlobalTable::new(ids, m)?), None))
        }
    }
}

fn rows_or_empty(rows: &[Vec<f64>], cols: usize) -> Result<Matrix> {
    if rows.is_empty() {
        Ok(Matrix::zeros(0, cols))
    } else {
        Matrix::from_rows(rows)
    }
}

fn sample_clients(num_clients: usize, fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    let k = ((fraction * num_clients as f64).ceil() as usize).clamp(1, num_clients);
    if k == num_clients {
        return (0..num_clients).collect();
    }
    let mut r = rng::substream(seed, &format!("sample/round{round}"));
    let mut picked = sample(&mut r, num_clients, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Runs up to `fed.rounds` communication rounds with early stopping on the
/// mean per-client validation MRR.
pub fn run_training(
    clients: &[ClientDataset],
    num_entities: usize,
    num_relations: usize,
    kind: ModelKind,
    cfg: &TrainConfig,
    fed: &FederationConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    fed.validate()?;
    if clients.is_empty() {
        return Err(Error::validation("clients", "at least one client is required"));
    }
    if clients.iter().enumerate().any(|(i, c)| c.client_id != i) {
        return Err(Error::validation("clients", "client ids must be 0..C in order"));
    }
    let codec = if fed.secure.secagg {
        let codec = fed.secure.codec()?;
        if clients.len() > codec.max_clients {
            return Err(Error::validation(
                "secure.max_clients",
                format!("{} clients exceed the codec headroom", clients.len()),
            ));
        }
        Some(codec)
    } else {
        None
    };

    let tables = initial_tables(clients, num_entities, num_relations, kind, cfg, fed.seed)?;
    let (mut global, psu) = initial_global(fed.mode, clients, &tables, kind, cfg, fed)?;
    let mut states = clients
        .iter()
        .zip(tables)
        .map(|(c, t)| ClientState::new(c, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    let element = fed.mode.shared_element();
    if let (Some(g), Some(el)) = (&global, element) {
        for s in &mut states {
            s.receive(g, el);
        }
    }

    let mut logs = Vec::new();
    let mut best_tables: Vec<EmbeddingTable> = states.iter().map(|s| s.table.clone()).collect();
    let mut best_round = None;
    let mut best_mrr: Option<f64> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;

    for round in 1..=fed.rounds {
        let started = Instant::now();
        let participants = match fed.mode {
            Mode::Local => (0..clients.len()).collect(),
            _ => sample_clients(clients.len(), fed.sample_fraction, fed.seed, round),
        };

        let results: Vec<Result<(f64, Option<ClientUpload>)>> = states
            .par_iter_mut()
            .filter(|s| participants.binary_search(&s.data.client_id).is_ok())
            .map(|s| match (&global, element) {
                (Some(g), Some(el)) => client_update(s, g, el, cfg, fed.seed, round).map(|u| (u.loss, Some(u))),
                _ => s.train_local(cfg, cfg.local_epochs, fed.seed, round).map(|l| (l, None)),
            })
            .collect();
        let mut losses = Vec::with_capacity(results.len());
        let mut uploads = Vec::new();
        for r in results {
            let (loss, upload) = r?;
            losses.push(loss);
            uploads.extend(upload);
        }

        let mut upload_bytes = vec![0u64; participants.len()];
        if let (Some(g), Some(el)) = (&mut global, element) {
            let width = g.embeddings.cols() as u64;
            for (b, u) in upload_bytes.iter_mut().zip(&uploads) {
                *b = u.mask.count() as u64 * width * BYTES_PER_SCALAR;
            }
            g.embeddings = match &codec {
                Some(codec) => {
                    let ups: Vec<(usize, Matrix, MaskVector)> =
                        uploads.into_iter().map(|u| (u.client_id, u.matrix, u.mask)).collect();
                    secure_aggregate(&g.embeddings, &ups, codec, fed.seed, round)?
                }
                None => {
                    let ups: Vec<(Matrix, MaskVector)> = uploads.into_iter().map(|u| (u.matrix, u.mask)).collect();
                    match el {
                        Element::Relation => aggregate(&g.embeddings, &ups)?,
                        Element::Entity => aggregate_entities(&g.embeddings, &ups)?,
                    }
                }
            };
            for s in &mut states {
                s.receive(g, el);
            }
        }

        let mut log = RoundLog {
            round,
            participants,
            upload_bytes,
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            valid_mrr: None,
            wall_ms: 0.0,
        };

        let mut stop = false;
        if round % fed.eval_every == 0 {
            let tables: Vec<EmbeddingTable> = states.iter().map(|s| s.table.clone()).collect();
            let mrr = evaluate(clients, &tables, Split::Valid, &fed.eval)?.mrr;
            log.valid_mrr = Some(mrr);
            if best_mrr.is_none_or(|b| mrr > b) {
                best_mrr = Some(mrr);
                best_round = Some(round);
                best_tables = tables;
                stale = 0;
            } else {
                stale += 1;
                stop = stale >= fed.patience;
            }
        }
        log.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        log::info!(
            "{} round {round}: loss {:.5} valid mrr {:?} ({:.0} ms)",
            fed.mode,
            log.loss,
            log.valid_mrr,
            log.wall_ms
        );
        logs.push(log);
        if stop {
            stopped_early = true;
            break;
        }
    }

    let tables = if best_round.is_some() {
        best_tables
    } else {
        states.into_iter().map(|s| s.table).collect()
    };
    Ok(TrainOutcome {
        tables,
        logs,
        best_round,
        best_valid_mrr: best_mrr,
        stopped_early,
        global,
        psu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Triple;

    fn mask(bits: &[u8]) -> MaskVector {
        MaskVector {
            bits: bits.iter().map(|b| *b == 1).collect(),
        }
    }

    #[test]
    fn mean_of_two_rows() {
        let prev = Matrix::zeros(1, 2);
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0, 3.0]]).unwrap();
        let out = aggregate(&prev, &[(a, mask(&[1])), (b, mask(&[1]))]).unwrap();
        assert_eq!(out.row(0), &[2.0, 2.0]);
    }

    #[test]
    fn single_owner_row_verbatim_and_unowned_row_kept() {
        let prev = Matrix::from_rows(&[vec![9.0], vec![7.0]]).unwrap();
        let a = Matrix::from_rows(&[vec![0.3], vec![0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        let out = aggregate(&prev, &[(a, mask(&[1, 0])), (b, mask(&[0, 0]))]).unwrap();
        assert_eq!(out.row(0), &[0.3]);
        assert_eq!(out.row(1), &[7.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let prev = Matrix::zeros(2, 2);
        let a = Matrix::zeros(3, 2);
        assert!(matches!(aggregate(&prev, &[(a, mask(&[1, 1, 1]))]), Err(Error::Shape(_))));
        let b = Matrix::zeros(2, 2);
        assert!(aggregate(&prev, &[(b, mask(&[1]))]).is_err());
    }

    #[test]
    fn client_update_masks_unowned_rows() {
        // Client owns relation 2 only; global table has 4 relations.
        let data = ClientDataset::new(
            0,
            vec![Triple::new(0, 2, 1), Triple::new(1, 2, 2), Triple::new(2, 2, 0)],
            vec![],
            vec![],
        );
        let cfg = TrainConfig {
            dim: 4,
            num_negatives: 2,
            local_epochs: 1,
            ..TrainConfig::default()
        };
        let mut table = crate::model::init_embeddings(ModelKind::TransE, 3, 4, 4, 1).unwrap();
        // Sentinels in rows the client does not own must never leave it.
        for r in [0, 1, 3] {
            table.relations.row_mut(r).fill(1e6);
        }
        let mut state = ClientState::new(&data, table, &cfg).unwrap();
        let global = GlobalTable::new(vec![0, 1, 2, 3], Matrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64 * 0.01)).unwrap();

        let zero_epochs = TrainConfig {
            local_epochs: 0,
            ..cfg.clone()
        };
        let up0 = client_update(&mut state, &global, Element::Relation, &zero_epochs, 0, 1).unwrap();
        assert_eq!(up0.mask.bits, vec![false, false, true, false]);
        assert_eq!(up0.matrix.row(2), global.embeddings.row(2));
        for r in [0, 1, 3] {
            assert!(up0.matrix.row(r).iter().all(|v| *v == 0.0));
        }

        let up1 = client_update(&mut state, &global, Element::Relation, &cfg, 0, 1).unwrap();
        for r in [0, 1, 3] {
            assert!(up1.matrix.row(r).iter().all(|v| *v == 0.0));
        }
        let delta = up1
            .matrix
            .row(2)
            .iter()
            .zip(global.embeddings.row(2))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(delta > 0.0);
        // One Adam step moves each coordinate by at most the learning rate.
        assert!(delta <= cfg.learning_rate * (1.0 + 1e-6));

        let agg = aggregate(&global.embeddings, &[(up1.matrix.clone(), up1.mask.clone())]).unwrap();
        assert_eq!(agg.row(0), global.embeddings.row(0));
        assert_eq!(agg.row(2), up1.matrix.row(2));
    }

    #[test]
    fn sampling_counts() {
        assert_eq!(sample_clients(5, 1.0, 0, 1), vec![0, 1, 2, 3, 4]);
        let s = sample_clients(10, 0.25, 0, 3);
        assert_eq!(s.len(), 3);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, sample_clients(10, 0.25, 0, 3));
    }

    #[test]
    fn secure_flags_validated() {
        let mut fed = FederationConfig {
            mode: Mode::Local,
            ..FederationConfig::default()
        };
        fed.secure.secagg = true;
        assert!(fed.validate().is_err());
        fed.mode = Mode::FedE;
        assert!(fed.validate().is_ok());
        fed.secure.psu = true;
        assert!(fed.validate().is_err());
        fed.mode = Mode::FedR;
        assert!(fed.validate().is_ok());
    }
}
