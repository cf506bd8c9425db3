//! Scoring functions and their partial derivatives.
//!
//! Every model is handled through its distance form `d = -score`, so that
//! smaller is more plausible for all four kinds. Complex-valued vectors are
//! stored as interleaved `(re, im)` pairs; RotatE relations are phase angles.

use super::kernels;
use super::{EmbeddingTable, ModelKind, Norm};
use crate::data::Triple;
use crate::error::Result;

/// Plausibility score: higher means more plausible.
pub fn score(table: &EmbeddingTable, triple: &Triple, norm: Norm) -> Result<f64> {
    table.check_triple(triple)?;
    Ok(-distance(
        table.kind,
        norm,
        table.entities.row(triple.head as usize),
        table.relations.row(triple.relation as usize),
        table.entities.row(triple.tail as usize),
    ))
}

#[inline]
pub fn distance(kind: ModelKind, norm: Norm, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE => {
            let it = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
            match norm {
                Norm::L2 => it.map(|x| x * x).sum::<f64>().sqrt(),
                Norm::L1 => it.map(f64::abs).sum(),
            }
        }
        ModelKind::RotatE => {
            let mut acc = 0.0;
            for (k, &theta) in r.iter().enumerate() {
                let (s, c) = theta.sin_cos();
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let zr = a * c - b * s - t[2 * k];
                let zi = a * s + b * c - t[2 * k + 1];
                let sq = zr * zr + zi * zi;
                acc += match norm {
                    Norm::L2 => sq,
                    Norm::L1 => sq.sqrt(),
                };
            }
            match norm {
                Norm::L2 => acc.sqrt(),
                Norm::L1 => acc,
            }
        }
        ModelKind::DistMult => -h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum::<f64>(),
        ModelKind::ComplEx => {
            let mut acc = 0.0;
            for k in 0..h.len() / 2 {
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let (c, d) = (r[2 * k], r[2 * k + 1]);
                let (e, f) = (t[2 * k], t[2 * k + 1]);
                acc += (a * c - b * d) * e + (a * d + b * c) * f;
            }
            -acc
        }
    }
}

/// Writes the partial derivatives of [`distance`] into `dh`, `dr`, `dt`.
///
/// At points where the norm is not differentiable (zero residual) the
/// subgradient 0 is used.
pub fn distance_grad(
    kind: ModelKind,
    norm: Norm,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    dh: &mut [f64],
    dr: &mut [f64],
    dt: &mut [f64],
) {
    match kind {
        ModelKind::TransE => {
            let scale = match norm {
                Norm::L2 => {
                    let n = distance(kind, norm, h, r, t);
                    if n > 0.0 {
                        1.0 / n
                    } else {
                        0.0
                    }
                }
                Norm::L1 => 1.0,
            };
            for i in 0..h.len() {
                let x = h[i] + r[i] - t[i];
                let g = match norm {
                    Norm::L2 => x * scale,
                    Norm::L1 => sign(x),
                };
                dh[i] = g;
                dr[i] = g;
                dt[i] = -g;
            }
        }
        ModelKind::RotatE => {
            let inv = match norm {
                Norm::L2 => {
                    let n = distance(kind, norm, h, r, t);
                    if n > 0.0 {
                        1.0 / n
                    } else {
                        0.0
                    }
                }
                Norm::L1 => 0.0,
            };
            for (k, &theta) in r.iter().enumerate() {
                let (s, c) = theta.sin_cos();
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let zr = a * c - b * s - t[2 * k];
                let zi = a * s + b * c - t[2 * k + 1];
                let scale = match norm {
                    Norm::L2 => inv,
                    Norm::L1 => {
                        let m = (zr * zr + zi * zi).sqrt();
                        if m > 0.0 {
                            1.0 / m
                        } else {
                            0.0
                        }
                    }
                };
                let (gr, gi) = (zr * scale, zi * scale);
                dh[2 * k] = gr * c + gi * s;
                dh[2 * k + 1] = -gr * s + gi * c;
                dt[2 * k] = -gr;
                dt[2 * k + 1] = -gi;
                dr[k] = gr * (-a * s - b * c) + gi * (a * c - b * s);
            }
        }
        ModelKind::DistMult => {
            for i in 0..h.len() {
                dh[i] = -r[i] * t[i];
                dr[i] = -h[i] * t[i];
                dt[i] = -h[i] * r[i];
            }
        }
        ModelKind::ComplEx => {
            for k in 0..h.len() / 2 {
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let (c, d) = (r[2 * k], r[2 * k + 1]);
                let (e, f) = (t[2 * k], t[2 * k + 1]);
                dh[2 * k] = -(c * e + d * f);
                dh[2 * k + 1] = -(-d * e + c * f);
                dr[2 * k] = -(a * e + b * f);
                dr[2 * k + 1] = -(-b * e + a * f);
                dt[2 * k] = -(a * c - b * d);
                dt[2 * k + 1] = -(a * d + b * c);
            }
        }
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Scores `(head, relation, c)` for every candidate tail `c`, writing into
/// `out` (same order as `candidates`).
pub fn score_tails(
    table: &EmbeddingTable,
    head: u32,
    relation: u32,
    candidates: &[u32],
    norm: Norm,
    out: &mut Vec<f64>,
) {
    out.clear();
    let h = table.entities.row(head as usize);
    let r = table.relations.row(relation as usize);
    let width = table.entity_width();
    // Combine head and relation once; every model is then a cheap
    // per-candidate reduction against the query vector.
    let mut q = vec![0.0; width];
    match table.kind {
        ModelKind::TransE => {
            for i in 0..width {
                q[i] = h[i] + r[i];
            }
        }
        ModelKind::RotatE => {
            for (k, &theta) in r.iter().enumerate() {
                let (s, c) = theta.sin_cos();
                q[2 * k] = h[2 * k] * c - h[2 * k + 1] * s;
                q[2 * k + 1] = h[2 * k] * s + h[2 * k + 1] * c;
            }
        }
        ModelKind::DistMult => {
            for i in 0..width {
                q[i] = h[i] * r[i];
            }
        }
        ModelKind::ComplEx => {
            for k in 0..width / 2 {
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let (c, d) = (r[2 * k], r[2 * k + 1]);
                q[2 * k] = a * c - b * d;
                q[2 * k + 1] = a * d + b * c;
            }
        }
    }
    out.extend(candidates.iter().map(|&c| {
        let t = table.entities.row(c as usize);
        match table.kind {
            ModelKind::TransE => match norm {
                Norm::L2 => -kernels::diff_reduce(&q, t, true).sqrt(),
                Norm::L1 => -kernels::diff_reduce(&q, t, false),
            },
            ModelKind::RotatE => {
                let mut acc = 0.0;
                for k in 0..width / 2 {
                    let zr = q[2 * k] - t[2 * k];
                    let zi = q[2 * k + 1] - t[2 * k + 1];
                    let sq = zr * zr + zi * zi;
                    acc += match norm {
                        Norm::L2 => sq,
                        Norm::L1 => sq.sqrt(),
                    };
                }
                match norm {
                    Norm::L2 => -acc.sqrt(),
                    Norm::L1 => -acc,
                }
            }
            // Re(q * conj(t)) is the plain dot product of interleaved pairs.
            ModelKind::DistMult | ModelKind::ComplEx => kernels::dot(&q, t),
        }
    }));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmbeddingTable, Matrix};
    use std::f64::consts::FRAC_PI_2;

    fn table(kind: ModelKind, ents: &[Vec<f64>], rels: &[Vec<f64>]) -> EmbeddingTable {
        EmbeddingTable::new(kind, Matrix::from_rows(ents).unwrap(), Matrix::from_rows(rels).unwrap()).unwrap()
    }

    #[test]
    fn transe_zero_vectors() {
        let t = table(ModelKind::TransE, &[vec![0.0; 3], vec![0.0; 3]], &[vec![0.0; 3]]);
        assert_eq!(score(&t, &Triple::new(0, 0, 1), Norm::L2).unwrap(), 0.0);
    }

    #[test]
    fn distmult_direct_sum() {
        let t = table(ModelKind::DistMult, &[vec![1.0, 2.0], vec![1.0, 1.0]], &[vec![1.0, 1.0]]);
        assert_eq!(score(&t, &Triple::new(0, 0, 1), Norm::L2).unwrap(), 3.0);
    }

    #[test]
    fn rotate_quarter_turn_maps_onto_tail() {
        let t = table(ModelKind::RotatE, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![FRAC_PI_2]]);
        let s = score(&t, &Triple::new(0, 0, 1), Norm::L2).unwrap();
        assert!(s.abs() < 1e-15, "{s}");
    }

    #[test]
    fn complex_hand_value() {
        // h = 1+2i, r = 3-i, t = 2+i: h*r = 5+5i, times conj(t) = 15-5i, Re = 15.
        let t = table(ModelKind::ComplEx, &[vec![1.0, 2.0], vec![2.0, 1.0]], &[vec![3.0, -1.0]]);
        assert_eq!(score(&t, &Triple::new(0, 0, 1), Norm::L2).unwrap(), 15.0);
    }

    #[test]
    fn out_of_range_id() {
        let t = table(ModelKind::TransE, &[vec![0.0; 2]], &[vec![0.0; 2]]);
        assert!(score(&t, &Triple::new(0, 0, 3), Norm::L2).is_err());
        assert!(score(&t, &Triple::new(0, 1, 0), Norm::L2).is_err());
    }

    #[test]
    fn score_tails_agrees_with_score() {
        for kind in ModelKind::ALL {
            for norm in [Norm::L1, Norm::L2] {
                let t = crate::model::init_embeddings(kind, 6, 2, 4, 5).unwrap();
                let cands: Vec<u32> = (0..6).collect();
                let mut out = Vec::new();
                score_tails(&t, 2, 1, &cands, norm, &mut out);
                for (&c, s) in cands.iter().zip(&out) {
                    let direct = score(&t, &Triple::new(2, 1, c), norm).unwrap();
                    assert!((direct - s).abs() < 1e-12, "{kind} {norm:?}");
                }
            }
        }
    }
}
