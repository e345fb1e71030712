//! The stacked-LSTM surrogate: eval and training forward passes, the
//! combined temperature/consumption loss, and backpropagation through time.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::lstm::{
    lstm_cell_backward, lstm_cell_train, CellCache, LstmLayerGrads, LstmLayerWeights,
};

/// Tensor layout of a network: input width, hidden width, depth and the
/// number of output channels (channel 0 is always indoor temperature).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetLayout {
    pub input_width: usize,
    pub d_emb: usize,
    pub n_layers: usize,
    pub n_outputs: usize,
}

impl NetLayout {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.d_emb == 0 || self.n_layers == 0 {
            return Err(Error::Dimension("layout dimensions must be positive".into()));
        }
        if self.n_outputs < 2 {
            return Err(Error::Dimension(
                "layout needs a temperature channel plus at least one consumption channel".into(),
            ));
        }
        Ok(())
    }
}

/// All trainable parameters of the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct MetamodelWeights {
    pub layers: Vec<LstmLayerWeights>,
    /// Output head, `(n_outputs, d_emb)`.
    pub w_y: Array2<f64>,
    pub b_y: Array1<f64>,
    pub layout: NetLayout,
}

/// Gradient of the loss with respect to every parameter; shape-mirrors
/// [`MetamodelWeights`].
#[derive(Debug, Clone)]
pub struct MetamodelGrads {
    pub layers: Vec<LstmLayerGrads>,
    pub w_y: Array2<f64>,
    pub b_y: Array1<f64>,
}

impl MetamodelWeights {
    pub fn zeros(layout: NetLayout) -> Result<Self> {
        layout.validate()?;
        let layers = (0..layout.n_layers)
            .map(|l| {
                let input = if l == 0 { layout.input_width } else { layout.d_emb };
                LstmLayerWeights::zeros(input, layout.d_emb)
            })
            .collect();
        Ok(MetamodelWeights {
            layers,
            w_y: Array2::zeros((layout.n_outputs, layout.d_emb)),
            b_y: Array1::zeros(layout.n_outputs),
            layout,
        })
    }

    pub fn init(layout: NetLayout, rng: &mut ChaCha8Rng) -> Result<Self> {
        layout.validate()?;
        let bound = 1.0 / (layout.d_emb as f64).sqrt();
        let layers = (0..layout.n_layers)
            .map(|l| {
                let input = if l == 0 { layout.input_width } else { layout.d_emb };
                LstmLayerWeights::init(input, layout.d_emb, rng)
            })
            .collect();
        let w_y = Array2::from_shape_fn((layout.n_outputs, layout.d_emb), |_| {
            rng.gen_range(-bound..bound)
        });
        let b_y = Array1::from_shape_fn(layout.n_outputs, |_| rng.gen_range(-bound..bound));
        Ok(MetamodelWeights {
            layers,
            w_y,
            b_y,
            layout,
        })
    }

    pub fn zero_grads(&self) -> MetamodelGrads {
        MetamodelGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayerGrads::zeros(l.input_dim(), l.d_emb()))
                .collect(),
            w_y: Array2::zeros(self.w_y.dim()),
            b_y: Array1::zeros(self.b_y.dim()),
        }
    }

    /// Eval-mode forward for one sequence: hidden states start at zero,
    /// layers are chained, the head applies a sigmoid. No dropout.
    pub fn forward(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let outs = self.forward_batch(&[*features])?;
        Ok(outs.into_iter().next().unwrap())
    }

    /// Eval-mode forward over several sequences of the same length,
    /// processed in lockstep so each time step is one matrix product.
    pub fn forward_batch(&self, seqs: &[ArrayView2<f64>]) -> Result<Vec<Array2<f64>>> {
        let (n_steps, batch) = self.check_batch(seqs)?;
        let d = self.layout.d_emb;
        let c_out = self.layout.n_outputs;

        let mut h = vec![Array2::zeros((batch, d)); self.layout.n_layers];
        let mut c = vec![Array2::zeros((batch, d)); self.layout.n_layers];
        let mut outputs = vec![Array2::zeros((n_steps, c_out)); batch];

        for k in 0..n_steps {
            let mut x = gather_step(seqs, k);
            for (l, w) in self.layers.iter().enumerate() {
                let (h_new, c_new) = super::lstm::lstm_cell(&x, &h[l], &c[l], w)?;
                x = h_new.clone();
                h[l] = h_new;
                c[l] = c_new;
            }
            let y = (x.dot(&self.w_y.t()) + &self.b_y).mapv(sigmoid);
            for (b, out) in outputs.iter_mut().enumerate() {
                out.row_mut(k).assign(&y.row(b));
            }
        }
        Ok(outputs)
    }

    /// Training-mode forward: keeps per-step caches and applies inverted
    /// dropout between layers (never on the top layer's output).
    pub(crate) fn forward_train(
        &self,
        seqs: &[ArrayView2<f64>],
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrainPass> {
        let (n_steps, batch) = self.check_batch(seqs)?;
        let d = self.layout.d_emb;
        let n_layers = self.layout.n_layers;

        let mut h = vec![Array2::zeros((batch, d)); n_layers];
        let mut c = vec![Array2::zeros((batch, d)); n_layers];
        let mut caches: Vec<Vec<CellCache>> = (0..n_layers)
            .map(|_| Vec::with_capacity(n_steps))
            .collect();
        let mut masks: Vec<Vec<Array2<f64>>> = (0..n_layers.saturating_sub(1))
            .map(|_| Vec::with_capacity(n_steps))
            .collect();
        let mut h_top = Vec::with_capacity(n_steps);
        let mut preds = Vec::with_capacity(n_steps);

        for k in 0..n_steps {
            let mut x = gather_step(seqs, k);
            for l in 0..n_layers {
                let (h_new, c_new, cache) =
                    lstm_cell_train(x, h[l].clone(), c[l].clone(), &self.layers[l])?;
                h[l] = h_new.clone();
                c[l] = c_new;
                caches[l].push(cache);
                x = if l + 1 < n_layers && dropout > 0.0 {
                    let keep = 1.0 - dropout;
                    let mask = Array2::from_shape_fn((batch, d), |_| {
                        if rng.gen::<f64>() < dropout {
                            0.0
                        } else {
                            1.0
                        }
                    });
                    let dropped = &h_new * &mask / keep;
                    masks[l].push(mask);
                    dropped
                } else {
                    if l + 1 < n_layers {
                        masks[l].push(Array2::ones((batch, d)));
                    }
                    h_new
                };
            }
            h_top.push(x.clone());
            preds.push((x.dot(&self.w_y.t()) + &self.b_y).mapv(sigmoid));
        }

        Ok(TrainPass {
            caches,
            masks,
            h_top,
            preds,
            dropout,
            batch,
        })
    }

    /// Backpropagation through time given the gradient of the loss with
    /// respect to each step's predictions.
    pub(crate) fn backward(
        &self,
        pass: &TrainPass,
        dpreds: &[Array2<f64>],
    ) -> Result<MetamodelGrads> {
        let n_steps = pass.preds.len();
        if dpreds.len() != n_steps {
            return Err(Error::Dimension(
                "prediction gradient count differs from steps".into(),
            ));
        }
        let n_layers = self.layout.n_layers;
        let batch = pass.batch;
        let d = self.layout.d_emb;
        let mut grads = self.zero_grads();

        // Head: y = sigmoid(pre). dh_ext holds the gradient arriving at each
        // step's top-layer output.
        let mut dh_ext: Vec<Array2<f64>> = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let y = &pass.preds[k];
            let dpre = &dpreds[k] * y * &y.mapv(|v| 1.0 - v);
            grads.w_y += &dpre.t().dot(&pass.h_top[k]);
            grads.b_y += &dpre.sum_axis(Axis(0));
            dh_ext.push(dpre.dot(&self.w_y));
        }

        let keep = 1.0 - pass.dropout;
        for l in (0..n_layers).rev() {
            let mut dh_carry = Array2::zeros((batch, d));
            let mut dc_carry = Array2::zeros((batch, d));
            let mut dx_steps: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_steps];
            for k in (0..n_steps).rev() {
                let dh = &dh_ext[k] + &dh_carry;
                let (dx, dh_prev, dc_prev) = lstm_cell_backward(
                    &pass.caches[l][k],
                    &self.layers[l],
                    &mut grads.layers[l],
                    &dh,
                    &dc_carry,
                );
                dx_steps[k] = dx;
                dh_carry = dh_prev;
                dc_carry = dc_prev;
            }
            if l > 0 {
                // The incoming x of this layer was the dropped output of the
                // layer below.
                dh_ext = dx_steps
                    .into_iter()
                    .enumerate()
                    .map(|(k, dx)| dx * &pass.masks[l - 1][k] / keep)
                    .collect();
            }
        }

        grads.check_finite()?;
        Ok(grads)
    }

    fn check_batch(&self, seqs: &[ArrayView2<f64>]) -> Result<(usize, usize)> {
        if seqs.is_empty() {
            return Err(Error::Dimension("empty batch".into()));
        }
        let n_steps = seqs[0].nrows();
        for s in seqs {
            if s.nrows() != n_steps {
                return Err(Error::Dimension("sequences differ in length".into()));
            }
            if s.ncols() != self.layout.input_width {
                return Err(Error::Dimension(format!(
                    "feature width {} does not match network input width {}",
                    s.ncols(),
                    self.layout.input_width
                )));
            }
        }
        Ok((n_steps, seqs.len()))
    }

    /// Flat parameter vector in a fixed order (per layer: the eight weight
    /// matrices then the four biases; finally the head).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for l in &self.layers {
            for t in [&l.w_iu, &l.w_hu, &l.w_if, &l.w_hf, &l.w_io, &l.w_ho, &l.w_ic, &l.w_hc] {
                flat.extend(t.iter());
            }
            for b in [&l.b_u, &l.b_f, &l.b_o, &l.b_c] {
                flat.extend(b.iter());
            }
        }
        flat.extend(self.w_y.iter());
        flat.extend(self.b_y.iter());
        flat
    }

    pub fn from_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0usize;
        let take2 = |t: &mut Array2<f64>, offset: &mut usize| {
            for v in t.iter_mut() {
                *v = flat[*offset];
                *offset += 1;
            }
        };
        if flat.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "flat vector has {} entries, network has {}",
                flat.len(),
                self.n_params()
            )));
        }
        for l in &mut self.layers {
            for t in [
                &mut l.w_iu, &mut l.w_hu, &mut l.w_if, &mut l.w_hf, &mut l.w_io, &mut l.w_ho,
                &mut l.w_ic, &mut l.w_hc,
            ] {
                take2(t, &mut offset);
            }
            for b in [&mut l.b_u, &mut l.b_f, &mut l.b_o, &mut l.b_c] {
                for v in b.iter_mut() {
                    *v = flat[offset];
                    offset += 1;
                }
            }
        }
        take2(&mut self.w_y, &mut offset);
        for v in self.b_y.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        let mut total = 0usize;
        for l in &self.layers {
            total += l.w_iu.len() + l.w_hu.len() + l.w_if.len() + l.w_hf.len();
            total += l.w_io.len() + l.w_ho.len() + l.w_ic.len() + l.w_hc.len();
            total += l.b_u.len() + l.b_f.len() + l.b_o.len() + l.b_c.len();
        }
        total + self.w_y.len() + self.b_y.len()
    }
}

impl MetamodelGrads {
    /// Fails with the parameter path of the first non-finite gradient.
    pub fn check_finite(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            let named: [(&str, &Array2<f64>); 8] = [
                ("w_iu", &l.w_iu),
                ("w_hu", &l.w_hu),
                ("w_if", &l.w_if),
                ("w_hf", &l.w_hf),
                ("w_io", &l.w_io),
                ("w_ho", &l.w_ho),
                ("w_ic", &l.w_ic),
                ("w_hc", &l.w_hc),
            ];
            for (name, t) in named {
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient layers[{i}].{name}")));
                }
            }
            for (name, b) in [("b_u", &l.b_u), ("b_f", &l.b_f), ("b_o", &l.b_o), ("b_c", &l.b_c)]
            {
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient layers[{i}].{name}")));
                }
            }
        }
        if self.w_y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient w_y".into()));
        }
        if self.b_y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient b_y".into()));
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for l in &self.layers {
            for t in [&l.w_iu, &l.w_hu, &l.w_if, &l.w_hf, &l.w_io, &l.w_ho, &l.w_ic, &l.w_hc] {
                flat.extend(t.iter());
            }
            for b in [&l.b_u, &l.b_f, &l.b_o, &l.b_c] {
                flat.extend(b.iter());
            }
        }
        flat.extend(self.w_y.iter());
        flat.extend(self.b_y.iter());
        flat
    }
}

/// Intermediates of a training-mode forward pass.
pub(crate) struct TrainPass {
    caches: Vec<Vec<CellCache>>,
    masks: Vec<Vec<Array2<f64>>>,
    h_top: Vec<Array2<f64>>,
    pub preds: Vec<Array2<f64>>,
    dropout: f64,
    batch: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gather_step(seqs: &[ArrayView2<f64>], k: usize) -> Array2<f64> {
    let batch = seqs.len();
    let width = seqs[0].ncols();
    let mut x = Array2::zeros((batch, width));
    for (b, s) in seqs.iter().enumerate() {
        x.row_mut(b).assign(&s.row(k));
    }
    x
}

/// Combined loss for one sequence: `beta * MSE_T + (1 - beta) * MSE_Q`,
/// where channel 0 is temperature and the remaining channels are averaged
/// into `MSE_Q`.
pub fn loss(pred: &Array2<f64>, target: &Array2<f64>, beta: f64) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "prediction shape {:?} differs from target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let (n, c) = pred.dim();
    if c < 2 || n == 0 {
        return Err(Error::Dimension("loss needs N > 0 and channels >= 2".into()));
    }
    let mut mse_t = 0.0;
    let mut mse_q = 0.0;
    for k in 0..n {
        let dt = pred[[k, 0]] - target[[k, 0]];
        mse_t += dt * dt;
        for j in 1..c {
            let dq = pred[[k, j]] - target[[k, j]];
            mse_q += dq * dq;
        }
    }
    mse_t /= n as f64;
    mse_q /= (n * (c - 1)) as f64;
    Ok(beta * mse_t + (1.0 - beta) * mse_q)
}

/// Gradient of [`loss`] with respect to the predictions.
pub fn loss_grad(pred: &Array2<f64>, target: &Array2<f64>, beta: f64) -> Result<Array2<f64>> {
    if pred.dim() != target.dim() {
        return Err(Error::Dimension("loss_grad shape mismatch".into()));
    }
    let (n, c) = pred.dim();
    let mut g = Array2::zeros((n, c));
    for k in 0..n {
        g[[k, 0]] = 2.0 * beta * (pred[[k, 0]] - target[[k, 0]]) / n as f64;
        for j in 1..c {
            g[[k, j]] =
                2.0 * (1.0 - beta) * (pred[[k, j]] - target[[k, j]]) / (n * (c - 1)) as f64;
        }
    }
    Ok(g)
}

/// Batch loss over lockstep predictions (`preds[k]` is `(B, C)`), averaged
/// over sequences, steps and channel groups exactly like [`loss`].
pub(crate) fn batch_loss_and_dpred(
    preds: &[Array2<f64>],
    target_steps: &[Array2<f64>],
    beta: f64,
) -> (f64, Vec<Array2<f64>>) {
    let n = preds.len();
    let (batch, c) = preds[0].dim();
    let nq = (c - 1) as f64;
    let scale_t = 1.0 / (batch * n) as f64;
    let scale_q = 1.0 / (batch * n) as f64 / nq;

    let mut mse_t = 0.0;
    let mut mse_q = 0.0;
    let mut dpreds = Vec::with_capacity(n);
    for k in 0..n {
        let mut d = Array2::zeros((batch, c));
        for b in 0..batch {
            let dt = preds[k][[b, 0]] - target_steps[k][[b, 0]];
            mse_t += dt * dt;
            d[[b, 0]] = 2.0 * beta * dt * scale_t;
            for j in 1..c {
                let dq = preds[k][[b, j]] - target_steps[k][[b, j]];
                mse_q += dq * dq;
                d[[b, j]] = 2.0 * (1.0 - beta) * dq * scale_q;
            }
        }
        dpreds.push(d);
    }
    let loss = beta * mse_t * scale_t + (1.0 - beta) * mse_q * scale_q;
    (loss, dpreds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn small_layout() -> NetLayout {
        NetLayout {
            input_width: 5,
            d_emb: 4,
            n_layers: 2,
            n_outputs: 3,
        }
    }

    #[test]
    fn zero_head_predicts_half_everywhere() {
        let net = MetamodelWeights::zeros(small_layout()).unwrap();
        let x = Array2::from_elem((6, 5), 0.37);
        let y = net.forward(&x.view()).unwrap();
        assert_eq!(y.dim(), (6, 3));
        assert!(y.iter().all(|v| (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn forward_shape_and_determinism() {
        let mut rng = crate::rng::stage_rng(3, crate::rng::Stream::Init);
        let net = MetamodelWeights::init(small_layout(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((9, 5), |_| rng.gen_range(0.0..1.0));
        let a = net.forward(&x.view()).unwrap();
        let b = net.forward(&x.view()).unwrap();
        assert_eq!(a.dim(), (9, 3));
        assert_eq!(a, b);
        assert!(a.iter().all(|v| 0.0 < *v && *v < 1.0));
    }

    #[test]
    fn causality_under_truncation() {
        let mut rng = crate::rng::stage_rng(9, crate::rng::Stream::Init);
        let net = MetamodelWeights::init(small_layout(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((12, 5), |_| rng.gen_range(0.0..1.0));
        let full = net.forward(&x.view()).unwrap();
        let truncated = net.forward(&x.slice(ndarray::s![..7, ..])).unwrap();
        for k in 0..7 {
            for j in 0..3 {
                assert_eq!(full[[k, j]], truncated[[k, j]]);
            }
        }
    }

    #[test]
    fn loss_hand_values() {
        // Construct predictions with known per-channel MSEs:
        // T errors give MSE_T = 2e-5, Q errors give MSE_Q = 4e-4.
        let n = 4;
        let mut pred = Array2::zeros((n, 2));
        let target = Array2::zeros((n, 2));
        let et = (2e-5_f64).sqrt();
        let eq = (4e-4_f64).sqrt();
        for k in 0..n {
            pred[[k, 0]] = et;
            pred[[k, 1]] = eq;
        }
        let l = loss(&pred, &target, 0.5).unwrap();
        assert!((l - 2.1e-4).abs() < 1e-16);

        // beta = 1 ignores consumption entirely.
        let l1 = loss(&pred, &target, 1.0).unwrap();
        assert!((l1 - 2e-5).abs() < 1e-16);

        assert_eq!(loss(&target, &target, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn flat_roundtrip_preserves_weights() {
        let mut rng = crate::rng::stage_rng(17, crate::rng::Stream::Init);
        let net = MetamodelWeights::init(small_layout(), &mut rng).unwrap();
        let flat = net.to_flat();
        assert_eq!(flat.len(), net.n_params());
        let mut other = MetamodelWeights::zeros(small_layout()).unwrap();
        other.from_flat(&flat).unwrap();
        assert_eq!(net, other);
    }
}
