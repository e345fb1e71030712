//! Hour-wise feed-forward baseline: the same input/output contract as the
//! recurrent surrogate, but row k of the output depends only on row k of the
//! input. Two tanh hidden layers of width `d_emb`, sigmoid head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::metamodel::NetLayout;

#[derive(Debug, Clone, PartialEq)]
pub struct FfnWeights {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_y: Array2<f64>,
    pub b_y: Array1<f64>,
    pub layout: NetLayout,
}

impl FfnWeights {
    pub fn zeros(layout: NetLayout) -> Result<Self> {
        layout.validate()?;
        let d = layout.d_emb;
        Ok(FfnWeights {
            w1: Array2::zeros((d, layout.input_width)),
            b1: Array1::zeros(d),
            w2: Array2::zeros((d, d)),
            b2: Array1::zeros(d),
            w_y: Array2::zeros((layout.n_outputs, d)),
            b_y: Array1::zeros(layout.n_outputs),
            layout,
        })
    }

    pub fn init(layout: NetLayout, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut w = Self::zeros(layout)?;
        let bound = 1.0 / (layout.d_emb as f64).sqrt();
        for t in [&mut w.w1, &mut w.w2, &mut w.w_y] {
            t.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        for b in [&mut w.b1, &mut w.b2, &mut w.b_y] {
            b.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        Ok(w)
    }

    /// Eval-mode forward over one sequence; rows are independent.
    pub fn forward(&self, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.layout.input_width {
            return Err(Error::Dimension(format!(
                "feature width {} does not match network input width {}",
                features.ncols(),
                self.layout.input_width
            )));
        }
        let h1 = (features.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh);
        let h2 = (h1.dot(&self.w2.t()) + &self.b2).mapv(f64::tanh);
        Ok((h2.dot(&self.w_y.t()) + &self.b_y).mapv(sigmoid))
    }

    pub fn forward_batch(&self, seqs: &[ArrayView2<f64>]) -> Result<Vec<Array2<f64>>> {
        seqs.iter().map(|s| self.forward(s)).collect()
    }

    /// Training loss and gradient on a batch of sequences. Rows of every
    /// sequence are pooled into one matrix since the model is stateless.
    pub fn loss_and_grad(
        &self,
        xs: &[ArrayView2<f64>],
        ys: &[ArrayView2<f64>],
        beta: f64,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, FfnGrads)> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::Dimension("batch inputs/targets mismatch".into()));
        }
        let rows: usize = xs.iter().map(|x| x.nrows()).sum();
        let mut x = Array2::zeros((rows, self.layout.input_width));
        let mut t = Array2::zeros((rows, self.layout.n_outputs));
        let mut r = 0;
        for (xi, yi) in xs.iter().zip(ys) {
            if xi.nrows() != yi.nrows() {
                return Err(Error::Dimension("sequence/target length mismatch".into()));
            }
            x.slice_mut(ndarray::s![r..r + xi.nrows(), ..]).assign(xi);
            t.slice_mut(ndarray::s![r..r + yi.nrows(), ..]).assign(yi);
            r += xi.nrows();
        }

        let a1 = (x.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh);
        let (a1d, mask1) = apply_dropout(&a1, dropout, rng);
        let a2 = (a1d.dot(&self.w2.t()) + &self.b2).mapv(f64::tanh);
        let (a2d, mask2) = apply_dropout(&a2, dropout, rng);
        let y = (a2d.dot(&self.w_y.t()) + &self.b_y).mapv(sigmoid);

        // Same normalization as the recurrent loss: temperature channel and
        // the mean over consumption channels.
        let (n, c) = y.dim();
        let nq = (c - 1) as f64;
        let mut mse_t = 0.0;
        let mut mse_q = 0.0;
        let mut dy = Array2::zeros((n, c));
        for k in 0..n {
            let dt = y[[k, 0]] - t[[k, 0]];
            mse_t += dt * dt;
            dy[[k, 0]] = 2.0 * beta * dt / n as f64;
            for j in 1..c {
                let dq = y[[k, j]] - t[[k, j]];
                mse_q += dq * dq;
                dy[[k, j]] = 2.0 * (1.0 - beta) * dq / (n as f64 * nq);
            }
        }
        let loss = beta * mse_t / n as f64 + (1.0 - beta) * mse_q / (n as f64 * nq);

        let dpre_y = &dy * &y * &y.mapv(|v| 1.0 - v);
        let mut grads = FfnGrads::zeros(&self.layout);
        grads.w_y = dpre_y.t().dot(&a2d);
        grads.b_y = dpre_y.sum_axis(Axis(0));

        let mut da2 = dpre_y.dot(&self.w_y);
        if let Some(m) = &mask2 {
            da2 = da2 * m / (1.0 - dropout);
        }
        let dpre2 = &da2 * &a2.mapv(|v| 1.0 - v * v);
        grads.w2 = dpre2.t().dot(&a1d);
        grads.b2 = dpre2.sum_axis(Axis(0));

        let mut da1 = dpre2.dot(&self.w2);
        if let Some(m) = &mask1 {
            da1 = da1 * m / (1.0 - dropout);
        }
        let dpre1 = &da1 * &a1.mapv(|v| 1.0 - v * v);
        grads.w1 = dpre1.t().dot(&x);
        grads.b1 = dpre1.sum_axis(Axis(0));

        Ok((loss, grads))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        flat.extend(self.w1.iter());
        flat.extend(self.b1.iter());
        flat.extend(self.w2.iter());
        flat.extend(self.b2.iter());
        flat.extend(self.w_y.iter());
        flat.extend(self.b_y.iter());
        flat
    }

    pub fn from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Dimension("flat vector length mismatch".into()));
        }
        let mut offset = 0;
        for t in [&mut self.w1] {
            for v in t.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
        }
        for v in self.b1.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        for v in self.w2.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        for v in self.b2.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        for v in self.w_y.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        for v in self.b_y.iter_mut() {
            *v = flat[offset];
            offset += 1;
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w_y.len()
            + self.b_y.len()
    }
}

/// Gradients, shape-mirroring [`FfnWeights`].
#[derive(Debug, Clone)]
pub struct FfnGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_y: Array2<f64>,
    pub b_y: Array1<f64>,
}

impl FfnGrads {
    fn zeros(layout: &NetLayout) -> Self {
        let d = layout.d_emb;
        FfnGrads {
            w1: Array2::zeros((d, layout.input_width)),
            b1: Array1::zeros(d),
            w2: Array2::zeros((d, d)),
            b2: Array1::zeros(d),
            w_y: Array2::zeros((layout.n_outputs, d)),
            b_y: Array1::zeros(layout.n_outputs),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        flat.extend(self.w1.iter());
        flat.extend(self.b1.iter());
        flat.extend(self.w2.iter());
        flat.extend(self.b2.iter());
        flat.extend(self.w_y.iter());
        flat.extend(self.b_y.iter());
        flat
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn apply_dropout(
    a: &Array2<f64>,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, Option<Array2<f64>>) {
    if dropout <= 0.0 {
        return (a.clone(), None);
    }
    let mask = Array2::from_shape_fn(a.dim(), |_| if rng.gen::<f64>() < dropout { 0.0 } else { 1.0 });
    let dropped = a * &mask / (1.0 - dropout);
    (dropped, Some(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn layout() -> NetLayout {
        NetLayout {
            input_width: 6,
            d_emb: 5,
            n_layers: 2,
            n_outputs: 3,
        }
    }

    #[test]
    fn zero_weights_predict_half() {
        let net = FfnWeights::zeros(layout()).unwrap();
        let x = Array2::from_elem((8, 6), 0.3);
        let y = net.forward(&x.view()).unwrap();
        assert!(y.iter().all(|v| (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn permuting_rows_permutes_outputs() {
        let mut rng = crate::rng::stage_rng(21, crate::rng::Stream::Init);
        let net = FfnWeights::init(layout(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((10, 6), |_| rng.gen_range(0.0..1.0));
        let y = net.forward(&x.view()).unwrap();

        // Reverse the rows of the input; outputs must reverse identically.
        let mut xr = Array2::zeros((10, 6));
        for k in 0..10 {
            xr.row_mut(k).assign(&x.row(9 - k));
        }
        let yr = net.forward(&xr.view()).unwrap();
        for k in 0..10 {
            for j in 0..3 {
                assert_eq!(y[[k, j]], yr[[9 - k, j]]);
            }
        }
    }
}
