//! Writes plot-ready data: a jittered human-vs-metric scatter and a score
//! histogram.
//!
//! cargo run --example plot_export -- [out_dir]

use density_eval::eval;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> density_eval::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("density-eval-plots"));
    std::fs::create_dir_all(&out).expect("create output dir");

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let human: Vec<f64> = (0..100).map(|_| f64::from(rng.random_range(1..=5))).collect();
    let metric: Vec<f64> = human.iter().map(|h| -8.0 + h + rng.random_range(-1.0..1.0)).collect();

    let points = eval::scatter_points(&human, &metric, Some(8))?;
    eval::write_scatter_csv(out.join("scatter.csv"), &points)?;

    let hist = eval::histogram(&eval::normalize_scores(&metric)?, 10)?;
    eval::write_histogram_csv(out.join("histogram.csv"), &hist)?;
    for (w, c) in hist.edges.windows(2).zip(&hist.counts) {
        println!("[{:.1}, {:.1}) {}", w[0], w[1], "#".repeat(*c));
    }
    println!("wrote {}", out.display());
    Ok(())
}
