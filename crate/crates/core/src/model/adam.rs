use super::{EmbeddingTable, Gradient, Matrix, SparseRows};
use crate::error::{Error, Result};

/// Adam moments for an [`EmbeddingTable`]. Updates are lazy: rows absent
/// from a gradient keep both their parameters and their moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m_entities: Matrix,
    v_entities: Matrix,
    m_relations: Matrix,
    v_relations: Matrix,
}

impl AdamState {
    pub fn new(table: &EmbeddingTable) -> Self {
        let (ne, de) = table.entities.shape();
        let (nr, dr) = table.relations.shape();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m_entities: Matrix::zeros(ne, de),
            v_entities: Matrix::zeros(ne, de),
            m_relations: Matrix::zeros(nr, dr),
            v_relations: Matrix::zeros(nr, dr),
        }
    }

    pub fn step(&mut self, table: &mut EmbeddingTable, grad: &Gradient, lr: f64) -> Result<()> {
        let shapes = [
            (table.entities.shape(), self.m_entities.shape(), (grad.entities.rows(), grad.entities.cols())),
            (table.relations.shape(), self.m_relations.shape(), (grad.relations.rows(), grad.relations.cols())),
        ];
        for (param, moment, g) in shapes {
            if param != moment || param != g {
                return Err(Error::Shape(format!(
                    "Adam: parameters {param:?}, moments {moment:?}, gradient {g:?}"
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let hp = Hyper {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            lr,
            c1,
            c2,
        };
        update(&mut table.entities, &mut self.m_entities, &mut self.v_entities, &grad.entities, &hp);
        update(&mut table.relations, &mut self.m_relations, &mut self.v_relations, &grad.relations, &hp);
        Ok(())
    }
}

struct Hyper {
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    c1: f64,
    c2: f64,
}

fn update(param: &mut Matrix, m: &mut Matrix, v: &mut Matrix, g: &SparseRows, hp: &Hyper) {
    for &row in g.touched() {
        let gr = g.row(row);
        let pr = param.row_mut(row);
        let mr = m.row_mut(row);
        let vr = v.row_mut(row);
        for j in 0..gr.len() {
            mr[j] = hp.beta1 * mr[j] + (1.0 - hp.beta1) * gr[j];
            vr[j] = hp.beta2 * vr[j] + (1.0 - hp.beta2) * gr[j] * gr[j];
            let m_hat = mr[j] / hp.c1;
            let v_hat = vr[j] / hp.c2;
            pr[j] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
}
