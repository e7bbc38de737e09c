//! Overfits the model on 8 constant-velocity and 8 turning walkers, then
//! compares best-of-20 errors with the constant-velocity baseline.
//!
//!     cargo run --release --example train_synthetic -- [epochs] [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgcnn_cvae::evaluator::{evaluate_dataset, EvalOptions};
use stgcnn_cvae::synthetic::{generate, Pattern};
use stgcnn_cvae::trainer::{fit, PreparedWindow, TrainConfig, TrainState};

fn main() -> stgcnn_cvae::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut windows = generate(Pattern::ConstVelocity, 1, 8, &mut rng)?;
    let turns = generate(Pattern::Turn, 1, 8, &mut rng)?;
    windows.extend(turns.iter().cloned());
    let prepared = windows.iter().cloned().map(PreparedWindow::new).collect::<Result<Vec<_>, _>>()?;

    let config = TrainConfig {
        epochs,
        batch_size: 1,
        lr_after: 0.01,
        lr_switch_epoch: epochs - 1,
        validate_every: 0,
        seed,
        ..Default::default()
    };
    let mut state = TrainState::new(&config)?;
    let start = std::time::Instant::now();
    fit(&mut state, &prepared, &[], &config, None, |s, _| {
        let r = &s.report;
        if r.epoch % 25 == 0 || r.epoch as usize + 1 == epochs {
            println!("epoch {:4}  total {:8.4}  rec {:8.4}  kl {:8.4}  w_kl {:.2e}", r.epoch, r.total, r.rec, r.kl, r.weight);
        }
    })?;
    println!("trained in {:.1} s", start.elapsed().as_secs_f64());

    let opts = EvalOptions { k: 20, ..Default::default() };
    let all = evaluate_dataset(&state.model, &windows, &opts)?;
    let turn = evaluate_dataset(&state.model, &turns, &opts)?;
    println!("all windows   ADE {:.4}  FDE {:.4}", all.ade, all.fde);
    println!("turn windows  ADE {:.4}  constant velocity {:.4}", turn.ade, turn.baseline_ade);
    Ok(())
}
