//! One LSTM layer: gate weights, the batched cell update and its backward
//! pass.
//!
//! The cell follows the usual gate equations, written here once so the
//! backward pass below can be read against them:
//!
//! ```text
//! gu = sigmoid(w_iu x + w_hu h + b_u)        (update gate)
//! gf = sigmoid(w_if x + w_hf h + b_f)        (forget gate)
//! go = sigmoid(w_io x + w_ho h + b_o)        (output gate)
//! cbar = tanh(w_ic x + w_hc h + b_c)         (candidate state)
//! c = gf * c_prev + gu * cbar
//! h = go * tanh(c)
//! ```

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Weights of one LSTM layer. Input-to-hidden matrices are `(d_emb, input_dim)`,
/// hidden-to-hidden are `(d_emb, d_emb)`, biases are `(d_emb)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerWeights {
    pub w_iu: Array2<f64>,
    pub w_hu: Array2<f64>,
    pub w_if: Array2<f64>,
    pub w_hf: Array2<f64>,
    pub w_io: Array2<f64>,
    pub w_ho: Array2<f64>,
    pub w_ic: Array2<f64>,
    pub w_hc: Array2<f64>,
    pub b_u: Array1<f64>,
    pub b_f: Array1<f64>,
    pub b_o: Array1<f64>,
    pub b_c: Array1<f64>,
}

impl LstmLayerWeights {
    pub fn zeros(input_dim: usize, d_emb: usize) -> Self {
        LstmLayerWeights {
            w_iu: Array2::zeros((d_emb, input_dim)),
            w_hu: Array2::zeros((d_emb, d_emb)),
            w_if: Array2::zeros((d_emb, input_dim)),
            w_hf: Array2::zeros((d_emb, d_emb)),
            w_io: Array2::zeros((d_emb, input_dim)),
            w_ho: Array2::zeros((d_emb, d_emb)),
            w_ic: Array2::zeros((d_emb, input_dim)),
            w_hc: Array2::zeros((d_emb, d_emb)),
            b_u: Array1::zeros(d_emb),
            b_f: Array1::zeros(d_emb),
            b_o: Array1::zeros(d_emb),
            b_c: Array1::zeros(d_emb),
        }
    }

    /// Uniform init in `[-1/sqrt(d_emb), 1/sqrt(d_emb)]`, forget-gate bias
    /// set to one.
    pub fn init(input_dim: usize, d_emb: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (d_emb as f64).sqrt();
        let mut w = Self::zeros(input_dim, d_emb);
        for tensor in [
            &mut w.w_iu, &mut w.w_hu, &mut w.w_if, &mut w.w_hf, &mut w.w_io, &mut w.w_ho,
            &mut w.w_ic, &mut w.w_hc,
        ] {
            tensor.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        for bias in [&mut w.b_u, &mut w.b_o, &mut w.b_c] {
            bias.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        w.b_f.fill(1.0);
        w
    }

    pub fn input_dim(&self) -> usize {
        self.w_iu.ncols()
    }

    pub fn d_emb(&self) -> usize {
        self.w_iu.nrows()
    }

    fn check_shapes(&self, x: &Array2<f64>, h: &Array2<f64>, c: &Array2<f64>) -> Result<()> {
        let (b, din) = (x.nrows(), x.ncols());
        if din != self.input_dim() {
            return Err(Error::Dimension(format!(
                "cell input width {din}, weights expect {}",
                self.input_dim()
            )));
        }
        if h.dim() != (b, self.d_emb()) || c.dim() != (b, self.d_emb()) {
            return Err(Error::Dimension(format!(
                "state shapes {:?}/{:?} inconsistent with batch {b} x d_emb {}",
                h.dim(),
                c.dim(),
                self.d_emb()
            )));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediates retained by the training-mode cell for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct CellCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub gu: Array2<f64>,
    pub gf: Array2<f64>,
    pub go: Array2<f64>,
    pub cbar: Array2<f64>,
    pub tanh_c: Array2<f64>,
}

/// Gradients of one layer; shape-mirrors [`LstmLayerWeights`].
pub(crate) type LstmLayerGrads = LstmLayerWeights;

fn gates(
    w: &LstmLayerWeights,
    x: &Array2<f64>,
    h_prev: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let gu = (x.dot(&w.w_iu.t()) + h_prev.dot(&w.w_hu.t()) + &w.b_u).mapv(sigmoid);
    let gf = (x.dot(&w.w_if.t()) + h_prev.dot(&w.w_hf.t()) + &w.b_f).mapv(sigmoid);
    let go = (x.dot(&w.w_io.t()) + h_prev.dot(&w.w_ho.t()) + &w.b_o).mapv(sigmoid);
    let cbar = (x.dot(&w.w_ic.t()) + h_prev.dot(&w.w_hc.t()) + &w.b_c).mapv(f64::tanh);
    (gu, gf, go, cbar)
}

/// Batched cell update: rows of `x`, `h_prev`, `c_prev` are independent
/// sequences. Returns `(h, c)`.
pub fn lstm_cell(
    x: &Array2<f64>,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
    w: &LstmLayerWeights,
) -> Result<(Array2<f64>, Array2<f64>)> {
    w.check_shapes(x, h_prev, c_prev)?;
    let (gu, gf, go, cbar) = gates(w, x, h_prev);
    let c = &gf * c_prev + &gu * &cbar;
    let h = &go * &c.mapv(f64::tanh);
    Ok((h, c))
}

/// Training-mode cell update that also returns the cache for backward.
pub(crate) fn lstm_cell_train(
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    w: &LstmLayerWeights,
) -> Result<(Array2<f64>, Array2<f64>, CellCache)> {
    w.check_shapes(&x, &h_prev, &c_prev)?;
    let (gu, gf, go, cbar) = gates(w, &x, &h_prev);
    let c = &gf * &c_prev + &gu * &cbar;
    let tanh_c = c.mapv(f64::tanh);
    let h = &go * &tanh_c;
    let cache = CellCache {
        x,
        h_prev,
        c_prev,
        gu,
        gf,
        go,
        cbar,
        tanh_c,
    };
    Ok((h, c, cache))
}

/// Backward through one cell step. `dh` and `dc_next` are the gradients
/// flowing into this step's `h` and `c`; returns `(dx, dh_prev, dc_prev)`
/// and accumulates weight gradients into `grads`.
pub(crate) fn lstm_cell_backward(
    cache: &CellCache,
    w: &LstmLayerWeights,
    grads: &mut LstmLayerGrads,
    dh: &Array2<f64>,
    dc_next: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    // dc collects the path through h = go * tanh(c) plus the carry.
    let dc = dc_next + &(dh * &cache.go * &cache.tanh_c.mapv(|t| 1.0 - t * t));

    let dpre_o = dh * &cache.tanh_c * &cache.go * &cache.go.mapv(|g| 1.0 - g);
    let dpre_f = &dc * &cache.c_prev * &cache.gf * &cache.gf.mapv(|g| 1.0 - g);
    let dpre_u = &dc * &cache.cbar * &cache.gu * &cache.gu.mapv(|g| 1.0 - g);
    let dpre_c = &dc * &cache.gu * &cache.cbar.mapv(|t| 1.0 - t * t);

    grads.w_iu += &dpre_u.t().dot(&cache.x);
    grads.w_hu += &dpre_u.t().dot(&cache.h_prev);
    grads.b_u += &dpre_u.sum_axis(Axis(0));
    grads.w_if += &dpre_f.t().dot(&cache.x);
    grads.w_hf += &dpre_f.t().dot(&cache.h_prev);
    grads.b_f += &dpre_f.sum_axis(Axis(0));
    grads.w_io += &dpre_o.t().dot(&cache.x);
    grads.w_ho += &dpre_o.t().dot(&cache.h_prev);
    grads.b_o += &dpre_o.sum_axis(Axis(0));
    grads.w_ic += &dpre_c.t().dot(&cache.x);
    grads.w_hc += &dpre_c.t().dot(&cache.h_prev);
    grads.b_c += &dpre_c.sum_axis(Axis(0));

    let dx = dpre_u.dot(&w.w_iu)
        + dpre_f.dot(&w.w_if)
        + dpre_o.dot(&w.w_io)
        + dpre_c.dot(&w.w_ic);
    let dh_prev = dpre_u.dot(&w.w_hu)
        + dpre_f.dot(&w.w_hf)
        + dpre_o.dot(&w.w_ho)
        + dpre_c.dot(&w.w_hc);
    let dc_prev = &dc * &cache.gf;
    (dx, dh_prev, dc_prev)
}
