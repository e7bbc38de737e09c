mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgcnn_cvae::evaluator::{evaluate_dataset, EvalOptions};
use stgcnn_cvae::synthetic::{generate, Pattern};
use stgcnn_cvae::trainer::{fit, PreparedWindow, TrainConfig, TrainState};

#[test]
fn more_samples_do_not_hurt_on_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut windows = generate(Pattern::Turn, 2, 50, &mut rng).unwrap();
    windows.extend(generate(Pattern::Stop, 2, 50, &mut rng).unwrap());
    let model = common::generic_model(5);
    let ade = |k| evaluate_dataset(&model, &windows, &EvalOptions { k, seed: 3, ..Default::default() }).unwrap().ade;
    let (one, twenty) = (ade(1), ade(20));
    assert!(twenty <= one * 1.05, "best-of-20 {twenty} vs best-of-1 {one}");
}

#[test]
fn epoch_mean_loss_falls_span_by_span() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let windows: Vec<PreparedWindow> = generate(Pattern::ConstVelocity, 1, 2, &mut rng)
        .unwrap()
        .into_iter()
        .map(|w| PreparedWindow::new(w).unwrap())
        .collect();
    let cfg = TrainConfig { epochs: 200, batch_size: 1, lr_switch_epoch: 199, seed: 4, validate_every: 0, ..Default::default() };
    let mut st = TrainState::new(&cfg).unwrap();
    let mut losses = Vec::new();
    fit(&mut st, &windows, &[], &cfg, None, |s, _| losses.push(s.report.total)).unwrap();
    let spans: Vec<f64> = losses.chunks(20).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let rises = spans.windows(2).filter(|p| p[1] >= p[0]).count();
    assert!(rises <= 2, "span means {spans:?}");
}
