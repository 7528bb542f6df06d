//! Plugs in features from an outside encoder through a DENSF1 file and its
//! ids sidecar, then fits and scores them.
//!
//! cargo run --example external_features

use density_eval::density::{self, ScoreFunction};
use density_eval::encoder::features::{self, FeatureMatrix, Provenance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> density_eval::Result<()> {
    let (n, d) = (500, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let normal = Normal::new(0.0, 1.0).expect("valid std");
    let data: Vec<f64> = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
    let fm = FeatureMatrix::new(n, d, data, Provenance::ExternalFile)?;

    let path = std::env::temp_dir().join("density-eval-example.densf");
    features::save_features(&path, &fm)?;
    let ids: Vec<String> = (0..n).map(|i| format!("pair-{i}")).collect();
    features::save_feature_ids(&path, &ids)?;

    let loaded = features::load_external_features(&path)?;
    let ids = features::load_feature_ids(&path)?;
    println!("loaded {} x {} from {}", loaded.rows(), loaded.dim(), path.display());

    let model = density::fit(&loaded)?;
    let model_path = std::env::temp_dir().join("density-eval-example.densg");
    density::save_model(&model, &model_path)?;
    let model = density::load_model(&model_path)?;

    for (id, h) in ids.iter().zip(loaded.iter_rows()).take(3) {
        println!("{id}: {:.4}", model.score(h, ScoreFunction::MahalanobisSqrt, None)?);
    }
    let far = vec![5.0; d];
    println!("far point: {:.4}", model.score(&far, ScoreFunction::MahalanobisSqrt, None)?);
    Ok(())
}
