//! Adam with bias correction, plus a column-sparse variant for the style
//! bank that only advances the moments of writers present in a batch.

use tch::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

/// Moments of one parameter tensor.
#[derive(Debug)]
pub struct Slot {
    pub name: String,
    pub param: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    /// Update count; for column-sparse slots one entry per column.
    pub steps: Vec<u64>,
}

impl Slot {
    fn new(name: String, param: Tensor, columns: Option<usize>) -> Self {
        let m = param.detach().zeros_like();
        let v = param.detach().zeros_like();
        Self {
            name,
            param,
            m,
            v,
            steps: vec![0; columns.unwrap_or(1)],
        }
    }
}

fn adam_update(p: &mut Tensor, m: &mut Tensor, v: &mut Tensor, g: &Tensor, t: u64, lr: f64, hp: &AdamParams) {
    let _ = m.g_mul_scalar_(hp.beta1).g_add_(&(g * (1.0 - hp.beta1)));
    let _ = v.g_mul_scalar_(hp.beta2).g_add_(&(g.square() * (1.0 - hp.beta2)));
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    let denom = (&*v / bc2).sqrt() + hp.eps;
    let _ = p.g_sub_(&((&*m / bc1) / denom * lr));
}

#[derive(Debug)]
pub struct Adam {
    pub params: AdamParams,
    pub slots: Vec<Slot>,
}

impl Adam {
    pub fn new(params: AdamParams, vars: Vec<(String, Tensor)>) -> Self {
        Self {
            params,
            slots: vars.into_iter().map(|(n, t)| Slot::new(n, t, None)).collect(),
        }
    }

    /// Updates every parameter that received a gradient.
    pub fn step(&mut self, lr: f64) {
        let hp = self.params;
        tch::no_grad(|| {
            for s in &mut self.slots {
                let g = s.param.grad();
                if !g.defined() {
                    continue;
                }
                s.steps[0] += 1;
                adam_update(&mut s.param, &mut s.m, &mut s.v, &g, s.steps[0], lr, &hp);
            }
        });
    }
}

/// Adam over a `d x n` matrix whose columns are updated independently.
#[derive(Debug)]
pub struct ColumnAdam {
    pub params: AdamParams,
    pub slot: Slot,
}

impl ColumnAdam {
    pub fn new(params: AdamParams, name: String, table: Tensor) -> Result<Self> {
        let s = table.size();
        if s.len() != 2 {
            return Err(Error::Shape(format!("column optimizer needs a matrix, got {s:?}")));
        }
        Ok(Self {
            params,
            slot: Slot::new(name, table, Some(s[1] as usize)),
        })
    }

    /// Updates only the listed columns (duplicates count once). Other
    /// columns and their moments are left exactly as they were.
    pub fn step_columns(&mut self, lr: f64, columns: &[usize]) {
        let g = self.slot.param.grad();
        if !g.defined() {
            return;
        }
        let mut cols = columns.to_vec();
        cols.sort_unstable();
        cols.dedup();
        let hp = self.params;
        tch::no_grad(|| {
            for c in cols {
                let Some(steps) = self.slot.steps.get_mut(c) else {
                    continue;
                };
                *steps += 1;
                let t = *steps;
                let c = c as i64;
                let mut p = self.slot.param.narrow(1, c, 1);
                let mut m = self.slot.m.narrow(1, c, 1);
                let mut v = self.slot.v.narrow(1, c, 1);
                adam_update(&mut p, &mut m, &mut v, &g.narrow(1, c, 1), t, lr, &hp);
            }
        });
    }
}
