//! Small parameterized layers shared by the model modules.

use alloc::format;

use rand::Rng;

use crate::tensor::{xavier_uniform, LstmVars, ParamId, ParamStore, Tape, Tensor, TensorError, Var};
use crate::math;

/// Registers a uniform `(rows, cols)` table in `[-limit, limit)`.
pub fn uniform<R: Rng + ?Sized>(
    store: &mut ParamStore,
    rng: &mut R,
    name: &str,
    rows: usize,
    cols: usize,
    limit: f64,
) -> Result<ParamId, TensorError> {
    let data = (0..rows * cols).map(|_| if limit > 0.0 { rng.gen_range(-limit..limit) } else { 0.0 }).collect();
    store.add(name, Tensor::raw(rows, cols, data))
}

/// `y = x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<Self, TensorError> {
        let w = store.add(&format!("{}.w", name), xavier_uniform(fan_in, fan_out, rng))?;
        let b = store.add(&format!("{}.b", name), Tensor::zeros(&[1, fan_out]))?;
        Ok(Linear { w, b })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var, TensorError> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

/// Both directions of a single-layer BiLSTM.
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub hidden: usize,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<Self, TensorError> {
        let limit = 1.0 / math::sqrt(hidden as f64);
        let mut dir = |d: &str| -> Result<LstmParams, TensorError> {
            let w = uniform(store, rng, &format!("{}.{}.w", name, d), in_dim, 4 * hidden, limit)?;
            let u = uniform(store, rng, &format!("{}.{}.u", name, d), hidden, 4 * hidden, limit)?;
            // forget gate starts open
            let mut bias = Tensor::zeros(&[1, 4 * hidden]);
            bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
            let b = store.add(&format!("{}.{}.b", name, d), bias)?;
            Ok(LstmParams { w, u, b })
        };
        let fwd = dir("fwd")?;
        let bwd = dir("bwd")?;
        Ok(BiLstm { fwd, bwd, hidden })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var, TensorError> {
        let mut vars = |p: LstmParams| LstmVars { w: tape.param(p.w), u: tape.param(p.u), b: tape.param(p.b) };
        let f = vars(self.fwd);
        let b = vars(self.bwd);
        tape.bilstm(x, f, b)
    }
}

/// Inverted dropout with drop probability `p`. Identity without an rng.
pub fn dropout<R: Rng + ?Sized>(tape: &mut Tape<'_>, x: Var, p: f64, rng: Option<&mut R>) -> Result<Var, TensorError> {
    let Some(rng) = rng else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - p;
    let (r, c) = tape.value(x).dims2();
    let mask = (0..r * c).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
    let m = tape.constant(Tensor::matrix(r, c, mask)?);
    tape.mul(x, m)
}
