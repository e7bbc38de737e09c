//! Leave-one-scene-out training and evaluation on ETH/UCY. Long running:
//! the full recipe is 250 epochs per held-out scene.
//!
//!     cargo run --release --example reproduce_eth_ucy -- <root> [epochs] [jobs]
//!
//! `<root>` holds one directory per scene (`eth`, `hotel`, `univ`, `zara1`,
//! `zara2`), each containing `frame agent x y` files at any depth. The
//! reference row is ADE/FDE 0.45/0.60 averaged over the five scenes.

use std::path::{Path, PathBuf};

use stgcnn_cvae::evaluator::{evaluate_dataset, EvalOptions};
use stgcnn_cvae::trainer::{fit, PreparedWindow, TrainConfig, TrainState};
use stgcnn_cvae::trajdata::{build_windows, parse_annotations, resample, SequenceWindow, WindowMode};
use stgcnn_cvae::{Error, Result, FRAME_PERIOD};

const SCENES: [&str; 5] = ["eth", "hotel", "univ", "zara1", "zara2"];
const REFERENCE: (f64, f64) = (0.45, 0.60);

fn txt_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            txt_files(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "txt") {
            out.push(p);
        }
    }
    Ok(())
}

fn scene_windows(root: &Path, scene: &str) -> Result<Vec<SequenceWindow>> {
    let mut files = Vec::new();
    txt_files(&root.join(scene), &mut files)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no annotation files under {}", root.join(scene).display())));
    }
    let mut windows = Vec::new();
    for f in files {
        let parsed = resample(&parse_annotations(&f)?, FRAME_PERIOD)?;
        for mut w in build_windows(&parsed.scene, 1, WindowMode::Train)? {
            w.scene = scene.to_string();
            windows.push(w);
        }
    }
    Ok(windows)
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().ok_or_else(|| Error::Config("usage: reproduce_eth_ucy <root> [epochs] [jobs]".into()))?);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(250);
    let jobs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let data: Vec<(&str, Vec<SequenceWindow>)> =
        SCENES.iter().map(|&s| scene_windows(&root, s).map(|w| (s, w))).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (held_out, test) in &data {
        let train: Vec<PreparedWindow> = data
            .iter()
            .filter(|(s, _)| s != held_out)
            .flat_map(|(_, w)| w.iter().cloned())
            .map(PreparedWindow::new)
            .collect::<Result<_>>()?;
        let config = TrainConfig {
            epochs,
            lr_switch_epoch: 150.min(epochs.saturating_sub(1)),
            held_out_scene: Some(held_out.to_string()),
            validate_every: 0,
            ..Default::default()
        };
        println!("[{held_out}] training on {} windows, testing on {}", train.len(), test.len());
        let mut state = TrainState::new(&config)?;
        let start = std::time::Instant::now();
        fit(&mut state, &train, &[], &config, None, |s, _| {
            if s.report.epoch % 10 == 0 {
                println!("  epoch {:3}  rec {:.4}  kl {:.4}  {:.0}s", s.report.epoch, s.report.rec, s.report.kl, start.elapsed().as_secs_f64());
            }
        })?;
        let r = evaluate_dataset(&state.model, test, &EvalOptions { k: 20, jobs, ..Default::default() })?;
        println!("[{held_out}] ADE {:.3} FDE {:.3} (constant velocity {:.3} / {:.3})", r.ade, r.fde, r.baseline_ade, r.baseline_fde);
        rows.push((held_out.to_string(), r.ade, r.fde));
    }

    println!("\n{:<8} {:>6} {:>6}", "scene", "ADE", "FDE");
    for (s, a, f) in &rows {
        println!("{s:<8} {a:>6.3} {f:>6.3}");
    }
    let n = rows.len() as f64;
    let (ade, fde) = (rows.iter().map(|r| r.1).sum::<f64>() / n, rows.iter().map(|r| r.2).sum::<f64>() / n);
    println!("{:<8} {ade:>6.3} {fde:>6.3}", "average");
    let within = (ade - REFERENCE.0).abs() <= 0.15 && (fde - REFERENCE.1).abs() <= 0.20;
    println!("reference {:.2} / {:.2}; within +-0.15 / +-0.20: {within}", REFERENCE.0, REFERENCE.1);
    Ok(())
}
