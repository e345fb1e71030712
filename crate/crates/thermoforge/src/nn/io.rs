//! Weight persistence: one JSON file holding layout metadata, the
//! normalization bounds active at training time, and every tensor as
//! base64-encoded little-endian doubles (bit-exact round trips).

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::OutputMode;
use crate::domain::{FeatureLayout, Normalizer};
use crate::error::{Error, Result};

use super::ffn::FfnWeights;
use super::metamodel::{MetamodelWeights, NetLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Lstm,
    Ffn,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorBlob {
    shape: Vec<usize>,
    data: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsFile {
    schema_version: u32,
    kind: NetworkKind,
    layout: NetLayout,
    output_mode: OutputMode,
    feature_columns: Vec<String>,
    normalizer: Normalizer,
    tensors: BTreeMap<String, TensorBlob>,
}

/// A network together with the preprocessing metadata it was trained with.
pub struct SavedNetwork {
    pub kind: NetworkKind,
    pub lstm: Option<MetamodelWeights>,
    pub ffn: Option<FfnWeights>,
    pub output_mode: OutputMode,
    pub feature_columns: Vec<String>,
    pub normalizer: Normalizer,
}

impl SavedNetwork {
    pub fn layout(&self) -> NetLayout {
        match self.kind {
            NetworkKind::Lstm => self.lstm.as_ref().expect("lstm weights").layout,
            NetworkKind::Ffn => self.ffn.as_ref().expect("ffn weights").layout,
        }
    }

    pub fn feature_layout(&self) -> Result<FeatureLayout> {
        let canonical = FeatureLayout::canonical();
        if canonical.columns() != self.feature_columns.as_slice() {
            return Err(Error::Schema(
                "weights were trained with a different feature layout".into(),
            ));
        }
        Ok(canonical)
    }
}

fn encode2(t: &Array2<f64>) -> TensorBlob {
    let mut bytes = Vec::with_capacity(t.len() * 8);
    for v in t.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    TensorBlob {
        shape: vec![t.nrows(), t.ncols()],
        data: BASE64.encode(bytes),
    }
}

fn encode1(t: &Array1<f64>) -> TensorBlob {
    let mut bytes = Vec::with_capacity(t.len() * 8);
    for v in t.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    TensorBlob {
        shape: vec![t.len()],
        data: BASE64.encode(bytes),
    }
}

fn decode_values(blob: &TensorBlob) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(&blob.data)
        .map_err(|e| Error::Schema(format!("bad tensor base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Schema("tensor byte length not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn decode2(blob: &TensorBlob) -> Result<Array2<f64>> {
    if blob.shape.len() != 2 {
        return Err(Error::Schema("expected rank-2 tensor".into()));
    }
    let values = decode_values(blob)?;
    Array2::from_shape_vec((blob.shape[0], blob.shape[1]), values)
        .map_err(|e| Error::Schema(format!("tensor shape mismatch: {e}")))
}

fn decode1(blob: &TensorBlob) -> Result<Array1<f64>> {
    if blob.shape.len() != 1 {
        return Err(Error::Schema("expected rank-1 tensor".into()));
    }
    let values = decode_values(blob)?;
    if values.len() != blob.shape[0] {
        return Err(Error::Schema("tensor length mismatch".into()));
    }
    Ok(Array1::from_vec(values))
}

/// Writes a trained network with its preprocessing metadata.
pub fn save_network(
    path: &Path,
    kind: NetworkKind,
    lstm: Option<&MetamodelWeights>,
    ffn: Option<&FfnWeights>,
    output_mode: OutputMode,
    feature_columns: &[String],
    normalizer: &Normalizer,
) -> Result<()> {
    let mut tensors = BTreeMap::new();
    let layout = match kind {
        NetworkKind::Lstm => {
            let w = lstm.ok_or_else(|| Error::Schema("missing lstm weights".into()))?;
            for (i, l) in w.layers.iter().enumerate() {
                tensors.insert(format!("layers.{i}.w_iu"), encode2(&l.w_iu));
                tensors.insert(format!("layers.{i}.w_hu"), encode2(&l.w_hu));
                tensors.insert(format!("layers.{i}.w_if"), encode2(&l.w_if));
                tensors.insert(format!("layers.{i}.w_hf"), encode2(&l.w_hf));
                tensors.insert(format!("layers.{i}.w_io"), encode2(&l.w_io));
                tensors.insert(format!("layers.{i}.w_ho"), encode2(&l.w_ho));
                tensors.insert(format!("layers.{i}.w_ic"), encode2(&l.w_ic));
                tensors.insert(format!("layers.{i}.w_hc"), encode2(&l.w_hc));
                tensors.insert(format!("layers.{i}.b_u"), encode1(&l.b_u));
                tensors.insert(format!("layers.{i}.b_f"), encode1(&l.b_f));
                tensors.insert(format!("layers.{i}.b_o"), encode1(&l.b_o));
                tensors.insert(format!("layers.{i}.b_c"), encode1(&l.b_c));
            }
            tensors.insert("head.w_y".into(), encode2(&w.w_y));
            tensors.insert("head.b_y".into(), encode1(&w.b_y));
            w.layout
        }
        NetworkKind::Ffn => {
            let w = ffn.ok_or_else(|| Error::Schema("missing ffn weights".into()))?;
            tensors.insert("w1".into(), encode2(&w.w1));
            tensors.insert("b1".into(), encode1(&w.b1));
            tensors.insert("w2".into(), encode2(&w.w2));
            tensors.insert("b2".into(), encode1(&w.b2));
            tensors.insert("head.w_y".into(), encode2(&w.w_y));
            tensors.insert("head.b_y".into(), encode1(&w.b_y));
            w.layout
        }
    };
    let file = WeightsFile {
        schema_version: 1,
        kind,
        layout,
        output_mode,
        feature_columns: feature_columns.to_vec(),
        normalizer: normalizer.clone(),
        tensors,
    };
    std::fs::write(path, serde_json::to_vec(&file)?)?;
    Ok(())
}

/// Loads a network written by [`save_network`].
pub fn load_network(path: &Path) -> Result<SavedNetwork> {
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("weights {}", path.display())));
    }
    let file: WeightsFile = serde_json::from_slice(&std::fs::read(path)?)?;
    if file.schema_version != 1 {
        return Err(Error::Schema(format!(
            "unsupported weights schema_version {}",
            file.schema_version
        )));
    }
    let get = |name: &str| -> Result<&TensorBlob> {
        file.tensors
            .get(name)
            .ok_or_else(|| Error::Schema(format!("weights file missing tensor {name}")))
    };

    let mut out = SavedNetwork {
        kind: file.kind,
        lstm: None,
        ffn: None,
        output_mode: file.output_mode,
        feature_columns: file.feature_columns.clone(),
        normalizer: file.normalizer.clone(),
    };
    match file.kind {
        NetworkKind::Lstm => {
            let mut w = MetamodelWeights::zeros(file.layout)?;
            for (i, l) in w.layers.iter_mut().enumerate() {
                l.w_iu = decode2(get(&format!("layers.{i}.w_iu"))?)?;
                l.w_hu = decode2(get(&format!("layers.{i}.w_hu"))?)?;
                l.w_if = decode2(get(&format!("layers.{i}.w_if"))?)?;
                l.w_hf = decode2(get(&format!("layers.{i}.w_hf"))?)?;
                l.w_io = decode2(get(&format!("layers.{i}.w_io"))?)?;
                l.w_ho = decode2(get(&format!("layers.{i}.w_ho"))?)?;
                l.w_ic = decode2(get(&format!("layers.{i}.w_ic"))?)?;
                l.w_hc = decode2(get(&format!("layers.{i}.w_hc"))?)?;
                l.b_u = decode1(get(&format!("layers.{i}.b_u"))?)?;
                l.b_f = decode1(get(&format!("layers.{i}.b_f"))?)?;
                l.b_o = decode1(get(&format!("layers.{i}.b_o"))?)?;
                l.b_c = decode1(get(&format!("layers.{i}.b_c"))?)?;
            }
            w.w_y = decode2(get("head.w_y")?)?;
            w.b_y = decode1(get("head.b_y")?)?;
            check_lstm_shapes(&w)?;
            out.lstm = Some(w);
        }
        NetworkKind::Ffn => {
            let mut w = FfnWeights::zeros(file.layout)?;
            w.w1 = decode2(get("w1")?)?;
            w.b1 = decode1(get("b1")?)?;
            w.w2 = decode2(get("w2")?)?;
            w.b2 = decode1(get("b2")?)?;
            w.w_y = decode2(get("head.w_y")?)?;
            w.b_y = decode1(get("head.b_y")?)?;
            out.ffn = Some(w);
        }
    }
    Ok(out)
}

fn check_lstm_shapes(w: &MetamodelWeights) -> Result<()> {
    let d = w.layout.d_emb;
    for (i, l) in w.layers.iter().enumerate() {
        let expect_in = if i == 0 { w.layout.input_width } else { d };
        if l.w_iu.dim() != (d, expect_in) || l.w_hu.dim() != (d, d) || l.b_u.len() != d {
            return Err(Error::Schema(format!("layer {i} tensor shapes inconsistent")));
        }
    }
    if w.w_y.dim() != (w.layout.n_outputs, d) || w.b_y.len() != w.layout.n_outputs {
        return Err(Error::Schema("head tensor shapes inconsistent".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AppConfig;
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn roundtrip_is_bit_identical() {
        let cfg = AppConfig::synthetic_default();
        let normalizer = cfg.build_normalizer().unwrap();
        let layout = NetLayout {
            input_width: 37,
            d_emb: 6,
            n_layers: 2,
            n_outputs: 8,
        };
        let mut rng = crate::rng::stage_rng(1, crate::rng::Stream::Init);
        let w = MetamodelWeights::init(layout, &mut rng).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.json");
        let columns = FeatureLayout::canonical().columns().to_vec();
        save_network(
            &path,
            NetworkKind::Lstm,
            Some(&w),
            None,
            OutputMode::Full,
            &columns,
            &normalizer,
        )
        .unwrap();

        let loaded = load_network(&path).unwrap();
        let back = loaded.lstm.unwrap();
        assert_eq!(w, back);

        // Forward passes agree bit for bit.
        let x = Array2::from_shape_fn((24, 37), |_| rng.gen_range(0.0..1.0));
        let a = w.forward(&x.view()).unwrap();
        let b = back.forward(&x.view()).unwrap();
        assert_eq!(a, b);
        assert_eq!(loaded.normalizer, normalizer);
    }
}
