//! Compares reverse-mode gradients of the training loss with central
//! differences on a handful of parameters from every network.
//!
//!     cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgcnn_cvae::diffcore::Tape;
use stgcnn_cvae::model::{CvaeModel, ModelConfig, NETWORKS};
use stgcnn_cvae::objective::AnnealSchedule;
use stgcnn_cvae::synthetic::{generate, Pattern};
use stgcnn_cvae::trainer::{window_loss, PreparedWindow};

const EPOCH: usize = 10;
const SCHEDULE: AnnealSchedule = AnnealSchedule { slope: 0.05, cap_epochs: 1000 };

fn loss(model: &CvaeModel, window: &PreparedWindow) -> stgcnn_cvae::Result<f64> {
    let mut tape = Tape::new();
    let pv = model.params.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (l, _) = window_loss(&mut tape, &pv, &model.config, window, EPOCH, &SCHEDULE, &mut rng)?;
    Ok(tape.value(l).item())
}

fn main() -> stgcnn_cvae::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut model = CvaeModel::new(ModelConfig::default(), &mut rng)?;
    // move biases and slopes off their constant init so no unit sits on a PReLU kink
    for (name, t) in model.params.iter_mut() {
        if name.ends_with(".bias") || name.ends_with(".slope") {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        if name == "decoder.out.weight" {
            t.data_mut().iter_mut().for_each(|v| *v *= 0.1);
        }
    }
    let window = PreparedWindow::new(generate(Pattern::Turn, 2, 1, &mut rng)?.remove(0))?;

    let mut tape = Tape::new();
    let pv = model.params.bind(&mut tape);
    let mut noise = ChaCha8Rng::seed_from_u64(99);
    let (l, _) = window_loss(&mut tape, &pv, &model.config, &window, EPOCH, &SCHEDULE, &mut noise)?;
    let grads = pv.gradients(&tape, &tape.backward(l)?);

    let h = 1e-5;
    let mut probe = model.clone();
    println!("{:<34} {:>14} {:>14} {:>10}", "parameter", "analytic", "numeric", "rel err");
    for net in NETWORKS {
        for (name, g) in grads.iter().filter(|(n, _)| n.starts_with(net)).step_by(4) {
            let i = rng.random_range(0..g.numel());
            let orig = model.params.get(name).expect("bound parameter").data()[i];
            let mut at = |v: f64| -> stgcnn_cvae::Result<f64> {
                probe.params.iter_mut().find(|(n, _)| *n == name).expect("same names").1.data_mut()[i] = v;
                loss(&probe, &window)
            };
            let num = (at(orig + h)? - at(orig - h)?) / (2.0 * h);
            at(orig)?;
            let ana = g.data()[i];
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-12);
            println!("{:<34} {ana:>14.6e} {num:>14.6e} {rel:>10.2e}", format!("{name}[{i}]"));
        }
    }
    Ok(())
}
