//! C ABI over `fedkg`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`FedkgStatus`]; on failure [`fedkg_last_error`] describes the cause.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fedkg::cli;
use fedkg::data::{self, synth, ClientDataset, KnowledgeGraph, SplitRatios};
use fedkg::manifest::RunManifest;
use fedkg::model::{self, EmbeddingTable, Norm};
use fedkg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedkgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Io = 4,
    OutOfRange = 5,
    Runtime = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedkgPreset {
    /// Sparse graph with few relations and hub tails.
    Sparse = 0,
    /// Dense graph with heavy entity overlap between clients.
    Dense = 1,
}

/// A loaded knowledge graph.
pub struct FedkgGraph {
    kg: KnowledgeGraph,
}

/// Client partitions of a graph.
pub struct FedkgSplit {
    clients: Vec<ClientDataset>,
}

/// One client's trained embeddings.
pub struct FedkgTable {
    table: EmbeddingTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FedkgStatus {
    match e {
        Error::Io { .. } | Error::Checkpoint { .. } => FedkgStatus::Io,
        Error::IndexOutOfRange { .. } => FedkgStatus::OutOfRange,
        e if e.is_validation() => FedkgStatus::Validation,
        _ => FedkgStatus::Runtime,
    }
}

fn fail(status: FedkgStatus, message: &str) -> FedkgStatus {
    set_error(message);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), FedkgStatus>) -> FedkgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FedkgStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(FedkgStatus::Panic, "internal panic"),
    }
}

fn check<T>(r: fedkg::Result<T>) -> Result<T, FedkgStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, FedkgStatus> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, FedkgStatus> {
    if p.is_null() {
        return Err(fail(FedkgStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FedkgStatus::InvalidUtf8, &format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, FedkgStatus> {
    p.as_ref()
        .ok_or_else(|| fail(FedkgStatus::NullPointer, &format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, FedkgStatus> {
    p.as_mut()
        .ok_or_else(|| fail(FedkgStatus::NullPointer, &format!("{what} is null")))
}

/// Message of the most recent failure on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn fedkg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fedkg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a tab-separated triple file.
#[no_mangle]
pub unsafe extern "C" fn fedkg_graph_load(path: *const c_char, out: *mut *mut FedkgGraph) -> FedkgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(path, "path")?;
        let (kg, _) = check(data::load_triples(&path, None, None))?;
        *out = Box::into_raw(Box::new(FedkgGraph { kg }));
        Ok(())
    })
}

/// Generates a seeded synthetic graph.
#[no_mangle]
pub unsafe extern "C" fn fedkg_graph_synthetic(preset: FedkgPreset, seed: u64, out: *mut *mut FedkgGraph) -> FedkgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = match preset {
            FedkgPreset::Sparse => synth::SynthConfig::ddb_like(),
            FedkgPreset::Dense => synth::SynthConfig::fb_like(),
        };
        let kg = check(synth::generate(&cfg, seed))?;
        *out = Box::into_raw(Box::new(FedkgGraph { kg }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_graph_num_triples(graph: *const FedkgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.kg.len())
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_graph_num_entities(graph: *const FedkgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.kg.num_entities())
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_graph_num_relations(graph: *const FedkgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.kg.num_relations())
}

/// Writes the graph as named tab-separated triples.
#[no_mangle]
pub unsafe extern "C" fn fedkg_graph_write(graph: *const FedkgGraph, path: *const c_char) -> FedkgStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let path = path_arg(path, "path")?;
        check(g.kg.write_triples(&path))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_graph_free(graph: *mut FedkgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Splits a graph over `num_clients` clients with 80/10/10 local ratios.
#[no_mangle]
pub unsafe extern "C" fn fedkg_split(
    graph: *const FedkgGraph,
    num_clients: usize,
    seed: u64,
    out: *mut *mut FedkgSplit,
) -> FedkgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = handle(graph, "graph")?;
        let clients = check(data::federated_split(&g.kg, num_clients, SplitRatios::default(), seed))?;
        *out = Box::into_raw(Box::new(FedkgSplit { clients }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_split_num_clients(split: *const FedkgSplit) -> usize {
    split.as_ref().map_or(0, |s| s.clients.len())
}

/// Train/valid/test sizes and local entity count of one client.
#[no_mangle]
pub unsafe extern "C" fn fedkg_split_client_sizes(
    split: *const FedkgSplit,
    client: usize,
    train: *mut usize,
    valid: *mut usize,
    test: *mut usize,
    entities: *mut usize,
) -> FedkgStatus {
    guard(|| {
        let s = handle(split, "split")?;
        let c = s.clients.get(client).ok_or_else(|| {
            fail(
                FedkgStatus::OutOfRange,
                &format!("client {client} out of range for {} clients", s.clients.len()),
            )
        })?;
        *out_arg(train, "train")? = c.train.len();
        *out_arg(valid, "valid")? = c.valid.len();
        *out_arg(test, "test")? = c.test.len();
        *out_arg(entities, "entities")? = c.local_entities.len();
        Ok(())
    })
}

/// Writes client directories, dictionaries and stats under `dir`.
#[no_mangle]
pub unsafe extern "C" fn fedkg_split_write(
    split: *const FedkgSplit,
    graph: *const FedkgGraph,
    dir: *const c_char,
) -> FedkgStatus {
    guard(|| {
        let s = handle(split, "split")?;
        let g = handle(graph, "graph")?;
        let dir = path_arg(dir, "dir")?;
        check(data::write_split(&dir, &g.kg, &s.clients)).map(drop)
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_split_free(split: *mut FedkgSplit) {
    if !split.is_null() {
        drop(Box::from_raw(split));
    }
}

/// Loads a client checkpoint written by the `train` command.
#[no_mangle]
pub unsafe extern "C" fn fedkg_table_load(path: *const c_char, out: *mut *mut FedkgTable) -> FedkgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(path, "path")?;
        let (_, table) = check(model::read_checkpoint(&path))?;
        *out = Box::into_raw(Box::new(FedkgTable { table }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_table_num_entities(table: *const FedkgTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.num_entities())
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_table_num_relations(table: *const FedkgTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.num_relations())
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_table_entity_width(table: *const FedkgTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.entity_width())
}

/// Copies entity `id`'s vector into `out`, which must hold `len` values
/// where `len` equals the entity width.
#[no_mangle]
pub unsafe extern "C" fn fedkg_table_entity(table: *const FedkgTable, id: usize, out: *mut f64, len: usize) -> FedkgStatus {
    guard(|| {
        let t = &handle(table, "table")?.table;
        if out.is_null() {
            return Err(fail(FedkgStatus::NullPointer, "out is null"));
        }
        if id >= t.num_entities() {
            return Err(fail(
                FedkgStatus::OutOfRange,
                &format!("entity {id} out of range for {}", t.num_entities()),
            ));
        }
        if len != t.entity_width() {
            return Err(fail(
                FedkgStatus::Validation,
                &format!("buffer of {len} for width {}", t.entity_width()),
            ));
        }
        ptr::copy_nonoverlapping(t.entities.row(id).as_ptr(), out, len);
        Ok(())
    })
}

/// Plausibility score of `(head, relation, tail)` under the L2 norm.
#[no_mangle]
pub unsafe extern "C" fn fedkg_table_score(
    table: *const FedkgTable,
    head: u32,
    relation: u32,
    tail: u32,
    out: *mut f64,
) -> FedkgStatus {
    guard(|| {
        let t = &handle(table, "table")?.table;
        let out = out_arg(out, "out")?;
        *out = check(model::score(t, &data::Triple::new(head, relation, tail), Norm::L2))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fedkg_table_free(table: *mut FedkgTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Runs `split`, `train`, `attack` or `report` from a manifest file,
/// exactly as the command-line tool does.
#[no_mangle]
pub unsafe extern "C" fn fedkg_run_command(command: *const c_char, manifest: *const c_char) -> FedkgStatus {
    guard(|| {
        let command = str_arg(command, "command")?;
        let manifest = check(RunManifest::load(&path_arg(manifest, "manifest")?))?;
        match command {
            "split" => check(cli::cmd_split(&manifest)).map(drop),
            "train" => check(cli::cmd_train(&manifest)).map(drop),
            "attack" => check(cli::cmd_attack(&manifest)).map(drop),
            "report" => check(cli::cmd_report(&manifest)).map(drop),
            other => Err(fail(FedkgStatus::Validation, &format!("unknown command `{other}`"))),
        }
    })
}
