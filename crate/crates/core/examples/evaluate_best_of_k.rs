//! Best-of-K evaluation: how K, the sampling mode and the selection rule
//! change ADE/FDE, next to the constant-velocity baseline.
//!
//!     cargo run --release --example evaluate_best_of_k

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgcnn_cvae::evaluator::{evaluate_dataset, EvalOptions, SampleMode, Selection};
use stgcnn_cvae::synthetic::{generate, Pattern};
use stgcnn_cvae::trainer::{fit, PreparedWindow, TrainConfig, TrainState};

fn main() -> stgcnn_cvae::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut windows = Vec::new();
    for pattern in [Pattern::ConstVelocity, Pattern::Turn, Pattern::Stop] {
        windows.extend(generate(pattern, 3, 6, &mut rng)?);
    }
    let prepared = windows.iter().cloned().map(PreparedWindow::new).collect::<Result<Vec<_>, _>>()?;
    let config = TrainConfig { epochs: 60, batch_size: 1, lr_switch_epoch: 40, validate_every: 0, ..Default::default() };
    let mut state = TrainState::new(&config)?;
    fit(&mut state, &prepared, &[], &config, None, |_, _| {})?;

    println!("{:>3} {:>7} {:>11} {:>8} {:>8}", "k", "mode", "selection", "ADE", "FDE");
    for k in [1, 5, 20] {
        for mode in [SampleMode::Latent, SampleMode::Full] {
            for selection in [Selection::ByAde, Selection::PerMetric] {
                let opts = EvalOptions { k, mode, selection, seed: 3, jobs: 4, ..Default::default() };
                let r = evaluate_dataset(&state.model, &windows, &opts)?;
                println!("{k:>3} {:>7} {:>11} {:>8.4} {:>8.4}", format!("{mode:?}"), format!("{selection:?}"), r.ade, r.fde);
            }
        }
    }

    let r = evaluate_dataset(&state.model, &windows, &EvalOptions::default())?;
    println!("constant velocity     {:>8.4} {:>8.4}", r.baseline_ade, r.baseline_fde);
    print!("\n{}", r.to_text());
    Ok(())
}
