//! Fused single-layer LSTM forward/backward over one direction.
//!
//! Gate layout along the `4H` axis is `[input, forget, cell, output]`.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{gemm, matvec_acc, vecmat_acc, MatRef};
use crate::math;

/// Saved activations of one direction.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// Activated gates, `(T, 4H)`.
    pub gates: Vec<f64>,
    /// Cell states, `(T, H)`.
    pub cells: Vec<f64>,
    /// Hidden states, `(T, H)`.
    pub hidden: Vec<f64>,
}

pub(crate) struct LstmWeights<'a> {
    /// `(I, 4H)`
    pub w: &'a [f64],
    /// `(H, 4H)`
    pub u: &'a [f64],
    /// `(4H)`
    pub b: &'a [f64],
}

pub(crate) struct LstmGrads {
    pub dw: Vec<f64>,
    pub du: Vec<f64>,
    pub db: Vec<f64>,
}

/// Order in which time steps are visited.
fn steps(t_len: usize, reverse: bool) -> impl Iterator<Item = usize> {
    (0..t_len).map(move |k| if reverse { t_len - 1 - k } else { k })
}

pub(crate) fn forward(
    x: &[f64],
    t_len: usize,
    in_dim: usize,
    hid: usize,
    wts: &LstmWeights<'_>,
    reverse: bool,
) -> LstmCache {
    let g4 = 4 * hid;
    let mut pre = vec![0.0; t_len * g4];
    gemm(MatRef::new(x, t_len, in_dim), MatRef::new(wts.w, in_dim, g4), &mut pre, 0.0);
    let mut gates = vec![0.0; t_len * g4];
    let mut cells = vec![0.0; t_len * hid];
    let mut hidden = vec![0.0; t_len * hid];
    let mut h_prev = vec![0.0; hid];
    let mut c_prev = vec![0.0; hid];
    let mut z = vec![0.0; g4];
    for t in steps(t_len, reverse) {
        z.copy_from_slice(&pre[t * g4..(t + 1) * g4]);
        for (zi, bi) in z.iter_mut().zip(wts.b) {
            *zi += bi;
        }
        vecmat_acc(&h_prev, wts.u, g4, &mut z);
        let g = &mut gates[t * g4..(t + 1) * g4];
        for j in 0..hid {
            let i_g = math::sigmoid(z[j]);
            let f_g = math::sigmoid(z[hid + j]);
            let c_g = math::tanh(z[2 * hid + j]);
            let o_g = math::sigmoid(z[3 * hid + j]);
            g[j] = i_g;
            g[hid + j] = f_g;
            g[2 * hid + j] = c_g;
            g[3 * hid + j] = o_g;
            let c = f_g * c_prev[j] + i_g * c_g;
            let h = o_g * math::tanh(c);
            cells[t * hid + j] = c;
            hidden[t * hid + j] = h;
        }
        c_prev.copy_from_slice(&cells[t * hid..(t + 1) * hid]);
        h_prev.copy_from_slice(&hidden[t * hid..(t + 1) * hid]);
    }
    LstmCache { gates, cells, hidden }
}

/// Backpropagation through time. `dh_out` is `(T, H)`; gradient w.r.t. the
/// input is accumulated into `dx` (`(T, I)`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    x: &[f64],
    t_len: usize,
    in_dim: usize,
    hid: usize,
    wts: &LstmWeights<'_>,
    cache: &LstmCache,
    dh_out: &[f64],
    reverse: bool,
    dx: Option<&mut [f64]>,
) -> LstmGrads {
    let g4 = 4 * hid;
    let mut dpre = vec![0.0; t_len * g4];
    let mut du = vec![0.0; hid * g4];
    let mut db = vec![0.0; g4];
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    let zeros = vec![0.0; hid];
    // visit in the opposite order of the forward pass
    let order: Vec<usize> = steps(t_len, reverse).collect();
    for (k, &t) in order.iter().enumerate().rev() {
        let prev = if k == 0 { None } else { Some(order[k - 1]) };
        let c_prev = prev.map_or(&zeros[..], |p| &cache.cells[p * hid..(p + 1) * hid]);
        let h_prev = prev.map_or(&zeros[..], |p| &cache.hidden[p * hid..(p + 1) * hid]);
        let g = &cache.gates[t * g4..(t + 1) * g4];
        let dz = &mut dpre[t * g4..(t + 1) * g4];
        for j in 0..hid {
            let dh = dh_out[t * hid + j] + dh_next[j];
            let (i_g, f_g, c_g, o_g) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
            let tc = math::tanh(cache.cells[t * hid + j]);
            let d_o = dh * tc;
            let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
            let d_i = dc * c_g;
            let d_c = dc * i_g;
            let d_f = dc * c_prev[j];
            dc_next[j] = dc * f_g;
            dz[j] = d_i * i_g * (1.0 - i_g);
            dz[hid + j] = d_f * f_g * (1.0 - f_g);
            dz[2 * hid + j] = d_c * (1.0 - c_g * c_g);
            dz[3 * hid + j] = d_o * o_g * (1.0 - o_g);
        }
        for (dbj, dzj) in db.iter_mut().zip(dz.iter()) {
            *dbj += dzj;
        }
        // dU += h_prev^T dz
        for (r, &hp) in h_prev.iter().enumerate() {
            if hp == 0.0 {
                continue;
            }
            let row = &mut du[r * g4..(r + 1) * g4];
            for (d, &z) in row.iter_mut().zip(dz.iter()) {
                *d += hp * z;
            }
        }
        // dh_prev = dz U^T
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        matvec_acc(wts.u, g4, dz, &mut dh_next);
    }
    let mut dw = vec![0.0; in_dim * g4];
    gemm(MatRef::new(x, t_len, in_dim).t(), MatRef::new(&dpre, t_len, g4), &mut dw, 0.0);
    if let Some(dx) = dx {
        gemm(MatRef::new(&dpre, t_len, g4), MatRef::new(wts.w, in_dim, g4).t(), dx, 1.0);
    }
    LstmGrads { dw, du, db }
}
