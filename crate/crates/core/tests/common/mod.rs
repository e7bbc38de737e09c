#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgcnn_cvae::diffcore::Tape;
use stgcnn_cvae::model::{CvaeModel, ModelConfig};
use stgcnn_cvae::objective::AnnealSchedule;
use stgcnn_cvae::trainer::{window_loss, PreparedWindow};
use stgcnn_cvae::trajdata::SequenceWindow;
use stgcnn_cvae::SEQ_LEN;

/// Two walkers crossing at an angle, 20 frames.
pub fn two_agent_window() -> SequenceWindow {
    let positions = (0..SEQ_LEN)
        .flat_map(|t| {
            let t = t as f64;
            [[0.35 * t, 0.1 * t + 0.02 * (t * 0.7).sin()], [4.0 - 0.3 * t, 0.5 + 0.12 * t]]
        })
        .collect();
    SequenceWindow::new("toy", vec![1, 2], positions, None).unwrap()
}

pub fn window_with_agents(n: usize, seed: u64) -> SequenceWindow {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<([f64; 2], [f64; 2])> = (0..n)
        .map(|_| {
            let s = [rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)];
            let v = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            (s, v)
        })
        .collect();
    let positions = (0..SEQ_LEN)
        .flat_map(|t| {
            let t = t as f64;
            starts.iter().map(move |(s, v)| [s[0] + v[0] * t, s[1] + v[1] * t + 0.05 * (0.5 * t).sin()]).collect::<Vec<_>>()
        })
        .collect();
    SequenceWindow::new("toy", (0..n as i64).collect(), positions, None).unwrap()
}

pub fn model(seed: u64) -> CvaeModel {
    CvaeModel::new(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Freshly initialized model with biases and slopes moved off their
/// constant initial values, so no activation sits exactly on a kink.
pub fn generic_model(seed: u64) -> CvaeModel {
    use rand::Rng;
    let mut m = model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (name, t) in m.params.iter_mut() {
        if name.ends_with(".bias") || name.ends_with(".slope") {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        // keeps sigma and rho away from their floors, where the loss is too
        // ill-conditioned for a central difference
        if name == "decoder.out.weight" {
            t.data_mut().iter_mut().for_each(|v| *v *= 0.1);
        }
    }
    m
}

/// Training loss of `prepared` with every random draw fixed by `seed`.
pub fn fixed_loss(model: &CvaeModel, prepared: &PreparedWindow, epoch: usize, seed: u64) -> f64 {
    let mut tape = Tape::new();
    let pv = model.params.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sched = AnnealSchedule { slope: 0.05, cap_epochs: 1000 };
    let (loss, _) = window_loss(&mut tape, &pv, &model.config, prepared, epoch, &sched, &mut rng).unwrap();
    tape.value(loss).item()
}


/// Worst finite-difference disagreement over every parameter.
///
/// Gradients with magnitude at least `1e-4` are scored by relative error
/// against `1e-4`, smaller ones by absolute error against `1e-7`; the
/// returned score is the worst error divided by its bound, so `< 1` passes.
pub fn fd_check(model: &CvaeModel, prepared: &PreparedWindow, h: f64) -> FdReport {
    let epoch = 10;
    let seed = 99;
    let mut tape = Tape::new();
    let pv = model.params.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sched = AnnealSchedule { slope: 0.05, cap_epochs: 1000 };
    let (loss, _) = window_loss(&mut tape, &pv, &model.config, prepared, epoch, &sched, &mut rng).unwrap();
    let grads = pv.gradients(&tape, &tape.backward(loss).unwrap());

    let mut report = FdReport { score: 0.0, checked: 0, worst: String::new() };
    let mut probe = model.clone();
    for (name, g) in grads.iter() {
        for i in 0..g.numel() {
            let orig = model.params.get(name).unwrap().data()[i];
            let set = |p: &mut CvaeModel, v: f64| {
                p.params.iter_mut().find(|(n, _)| *n == name).unwrap().1.data_mut()[i] = v;
            };
            set(&mut probe, orig + h);
            let up = fixed_loss(&probe, prepared, epoch, seed);
            set(&mut probe, orig - h);
            let down = fixed_loss(&probe, prepared, epoch, seed);
            set(&mut probe, orig);
            let num = (up - down) / (2.0 * h);
            let ana = g.data()[i];
            let big = ana.abs().max(num.abs());
            let score = if big >= 1e-4 { (ana - num).abs() / big / 1e-4 } else { (ana - num).abs() / 1e-7 };
            report.checked += 1;
            if score > report.score {
                report.score = score;
                report.worst = format!("{name}[{i}] analytic {ana:e} numeric {num:e}");
            }
        }
    }
    report
}

pub struct FdReport {
    pub score: f64,
    pub checked: usize,
    pub worst: String,
}
