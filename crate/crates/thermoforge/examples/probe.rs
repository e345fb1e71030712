use std::time::Instant;
use thermoforge::config::{AppConfig, OutputMode, TrainingConfig};
use thermoforge::domain::{FeatureLayout, WeatherSeries, Weekday};
use thermoforge::nn::{prepare_tensors, train, FfnWeights, MetamodelWeights, NetLayout};
use thermoforge::rng::{stage_rng, Stream};
use thermoforge::sampler::build_dataset;

fn main() {
    let n: usize = std::env::args().nth(1).unwrap_or("400".into()).parse().unwrap();
    let epochs: usize = std::env::args().nth(2).unwrap_or("3".into()).parse().unwrap();
    let d_emb: usize = std::env::args().nth(3).unwrap_or("32".into()).parse().unwrap();
    let layers: usize = std::env::args().nth(4).unwrap_or("2".into()).parse().unwrap();

    let cfg = AppConfig::synthetic_default();
    let weather = WeatherSeries::synthetic(336, 2020);
    let normalizer = cfg.build_normalizer().unwrap();
    let layout = FeatureLayout::canonical();

    let t0 = Instant::now();
    let ds = build_dataset(n, 336, &weather, &cfg.ranges, &cfg.geometry, &cfg.oracle,
                           &normalizer, &layout, 0.2, 42, Weekday::Monday).unwrap();
    eprintln!("dataset {n}x336: {:.1}s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let (features, targets) = prepare_tensors(&ds, &layout, OutputMode::Full).unwrap();
    eprintln!("tensors: {:.1}s", t0.elapsed().as_secs_f64());

    let train_idx = ds.train_indices();
    let val_idx = ds.validation_indices();
    let tc = TrainingConfig { d_emb, n_layers: layers, epochs, dropout: 0.0, batch_size: 16, learning_rate: 2e-3, ..Default::default() };
    let nl = NetLayout { input_width: 37, d_emb, n_layers: layers, n_outputs: 8 };

    let mut rng = stage_rng(1, Stream::Init);
    let mut lstm = MetamodelWeights::init(nl, &mut rng).unwrap();
    let t0 = Instant::now();
    let h = train(&mut lstm, &features, &targets, &train_idx, &val_idx, &tc, 42).unwrap();
    eprintln!("lstm {} epochs: {:.1}s", epochs, t0.elapsed().as_secs_f64());
    for e in &h.epochs {
        eprintln!("  epoch {} train {:.3e} val {:.3e}", e.epoch, e.train_loss, e.val_loss.unwrap());
    }

    let mut ffn = FfnWeights::init(nl, &mut rng).unwrap();
    let t0 = Instant::now();
    let hf = train(&mut ffn, &features, &targets, &train_idx, &val_idx, &tc, 42).unwrap();
    eprintln!("ffn {} epochs: {:.1}s", epochs, t0.elapsed().as_secs_f64());
    for e in &hf.epochs {
        eprintln!("  epoch {} train {:.3e} val {:.3e}", e.epoch, e.train_loss, e.val_loss.unwrap());
    }
    let best_l = h.epochs.iter().filter_map(|e| e.val_loss).fold(f64::MAX, f64::min);
    let best_f = hf.epochs.iter().filter_map(|e| e.val_loss).fold(f64::MAX, f64::min);
    eprintln!("ratio ffn/lstm = {:.1}", best_f / best_l);
}
