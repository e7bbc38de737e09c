//! Interrupting training and resuming from a checkpoint gives the same
//! parameters as an uninterrupted run.
//!
//!     cargo run --release --example checkpoint_resume

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgcnn_cvae::model::{CvaeModel, Precision};
use stgcnn_cvae::synthetic::{generate, Pattern};
use stgcnn_cvae::trainer::{checkpoint, fit, restore, PreparedWindow, RunFiles, TrainConfig, TrainState};

fn main() -> stgcnn_cvae::Result<()> {
    let windows = generate(Pattern::Stop, 2, 6, &mut ChaCha8Rng::seed_from_u64(5))?;
    let prepared = windows.into_iter().map(PreparedWindow::new).collect::<Result<Vec<_>, _>>()?;
    let config = TrainConfig { epochs: 8, batch_size: 4, lr_switch_epoch: 5, seed: 21, validate_every: 0, ..Default::default() };
    let dir = std::env::temp_dir().join("stgcvae_resume_example");
    let files = RunFiles { dir: dir.clone() };

    let mut straight = TrainState::new(&config)?;
    fit(&mut straight, &prepared, &[], &config, None, |_, _| {})?;

    let mut first = TrainState::new(&config)?;
    fit(&mut first, &prepared, &[], &TrainConfig { epochs: 3, ..config.clone() }, Some(&files), |_, _| {})?;
    println!("stopped after epoch {} ({} steps), checkpoint {}", first.epoch, first.step, files.last().display());
    let mut resumed = restore(&files.last())?;
    fit(&mut resumed, &prepared, &[], &config, None, |_, _| {})?;

    let same = straight.model.params == resumed.model.params;
    println!("resumed run identical to uninterrupted run: {same}");

    // deployment checkpoints use the compact float32 layout
    let small = dir.join("deploy.stgc");
    resumed.model.save(&small, Precision::F32, &Default::default())?;
    let (loaded, meta) = CvaeModel::load(&small)?;
    println!("float32 checkpoint: {} bytes, {} parameters, latent length {}", std::fs::metadata(&small)?.len(), loaded.param_count(), meta.get_str("latent_length").unwrap_or("?"));
    checkpoint(&resumed, &dir.join("final.stgc"))?;
    Ok(())
}
