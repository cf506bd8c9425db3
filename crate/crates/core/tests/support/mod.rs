//! Oracles shared by several test targets.
#![allow(dead_code)]

use fedkg::data::Triple;
use fedkg::model::{adversarial_weights, grad, EmbeddingTable, Matrix, ModelKind, Norm, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn oracle_distance(kind: ModelKind, norm: Norm, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let pnorm = |xs: Vec<f64>| match norm {
        Norm::L2 => xs.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Norm::L1 => xs.iter().map(|x| x.abs()).sum(),
    };
    match kind {
        ModelKind::TransE => pnorm((0..h.len()).map(|i| h[i] + r[i] - t[i]).collect()),
        ModelKind::RotatE => {
            // Per complex coordinate modulus, then the chosen norm over moduli.
            let moduli = (0..r.len())
                .map(|k| {
                    let re = h[2 * k] * r[k].cos() - h[2 * k + 1] * r[k].sin() - t[2 * k];
                    let im = h[2 * k] * r[k].sin() + h[2 * k + 1] * r[k].cos() - t[2 * k + 1];
                    (re * re + im * im).sqrt()
                })
                .collect();
            pnorm(moduli)
        }
        ModelKind::DistMult => -(0..h.len()).map(|i| h[i] * r[i] * t[i]).sum::<f64>(),
        ModelKind::ComplEx => {
            let mut s = 0.0;
            for k in 0..h.len() / 2 {
                let (hr, hi) = (h[2 * k], h[2 * k + 1]);
                let (rr, ri) = (r[2 * k], r[2 * k + 1]);
                let (tr, ti) = (t[2 * k], -t[2 * k + 1]);
                // Re((hr + i hi)(rr + i ri)(tr + i ti)) with ti = -Im(t).
                let (pr, pi) = (hr * rr - hi * ri, hr * ri + hi * rr);
                s += pr * tr - pi * ti;
            }
            -s
        }
    }
}

pub fn ln_sig(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

pub fn oracle_loss(table: &EmbeddingTable, pos: &Triple, negs: &[Triple], p: &[f64], cfg: &TrainConfig) -> f64 {
    let d = |t: &Triple| {
        oracle_distance(
            table.kind,
            cfg.norm,
            table.entities.row(t.head as usize),
            table.relations.row(t.relation as usize),
            table.entities.row(t.tail as usize),
        )
    };
    let mut l = -ln_sig(cfg.margin - d(pos));
    for (n, w) in negs.iter().zip(p) {
        l -= w * ln_sig(d(n) - cfg.margin);
    }
    l
}

pub fn random_instance(kind: ModelKind, rng: &mut ChaCha8Rng) -> (EmbeddingTable, Triple, Vec<Triple>, TrainConfig) {
    let dim = 4;
    let (we, wr) = kind.widths(dim);
    let ne = 6;
    let nr = 2;
    let ents = Matrix::from_fn(ne, we, |_, _| rng.gen_range(-1.0..1.0));
    let rels = Matrix::from_fn(nr, wr, |_, _| rng.gen_range(-1.0..1.0));
    let table = EmbeddingTable::new(kind, ents, rels).unwrap();
    let r = rng.gen_range(0..nr as u32);
    let pos = Triple::new(0, r, 1);
    let negs = (0..5)
        .map(|_| {
            let e = rng.gen_range(0..ne as u32);
            if rng.gen_bool(0.5) {
                Triple::new(0, r, e)
            } else {
                Triple::new(e, r, 1)
            }
        })
        .collect();
    let cfg = TrainConfig {
        margin: rng.gen_range(0.5..3.0),
        temperature: rng.gen_range(0.5..2.0),
        norm: if rng.gen_bool(0.5) { Norm::L1 } else { Norm::L2 },
        ..TrainConfig::default()
    };
    (table, pos, negs, cfg)
}

fn cell(t: &mut EmbeddingTable, which: usize, i: usize, j: usize) -> &mut f64 {
    if which == 0 {
        &mut t.entities.row_mut(i)[j]
    } else {
        &mut t.relations.row_mut(i)[j]
    }
}

pub fn max_relative_error(kind: ModelKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut table, pos, negs, cfg) = random_instance(kind, &mut rng);
    let p = adversarial_weights(&table, &negs, &cfg).unwrap();
    let g = grad(&table, &pos, &negs, &cfg).unwrap();
    let step = 1e-5;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for which in 0..2 {
        let rows = if which == 0 { table.entities.rows() } else { table.relations.rows() };
        let cols = if which == 0 { table.entities.cols() } else { table.relations.cols() };
        for i in 0..rows {
            for j in 0..cols {
                let orig = *cell(&mut table, which, i, j);
                *cell(&mut table, which, i, j) = orig + step;
                let up = oracle_loss(&table, &pos, &negs, &p, &cfg);
                *cell(&mut table, which, i, j) = orig - step;
                let down = oracle_loss(&table, &pos, &negs, &p, &cfg);
                *cell(&mut table, which, i, j) = orig;
                numeric.push((up - down) / (2.0 * step));
                analytic.push(if which == 0 { g.entities.row(i)[j] } else { g.relations.row(i)[j] });
            }
        }
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}
