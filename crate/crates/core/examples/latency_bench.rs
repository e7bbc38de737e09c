//! Single-inference latency (graph, prior, one latent sample, decode) for
//! growing crowds and the three latent lengths.
//!
//!     cargo run --release --example latency_bench

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgcnn_cvae::evaluator::benchmark_inference;
use stgcnn_cvae::model::{CvaeModel, ModelConfig};
use stgcnn_cvae::synthetic::{generate, Pattern};

fn main() -> stgcnn_cvae::Result<()> {
    println!("{:>3} {:>4} {:>8} {:>10} {:>10}", "L", "N", "params", "mean ms", "p95 ms");
    for l in [10, 20, 30] {
        let model = CvaeModel::new(ModelConfig::with_latent_length(l), &mut ChaCha8Rng::seed_from_u64(0))?;
        for n in [1, 3, 6, 12, 24] {
            let window = generate(Pattern::ConstVelocity, n, 1, &mut ChaCha8Rng::seed_from_u64(n as u64))?.remove(0);
            let s = benchmark_inference(&model, &window, 200, 20)?;
            println!("{l:>3} {n:>4} {:>8} {:>10.3} {:>10.3}", model.param_count(), s.mean * 1e3, s.p95 * 1e3);
        }
    }
    Ok(())
}
