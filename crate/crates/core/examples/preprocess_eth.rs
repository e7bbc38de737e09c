//! ETH/UCY ingestion: parse `frame agent x y` annotations, resample to
//! 2.5 Hz, cut 20-frame windows and round-trip them through the cache.
//!
//!     cargo run --example preprocess_eth -- [annotation.txt] [source_hz]
//!
//! Without arguments a small inline scene is used.

use std::path::PathBuf;

use stgcnn_cvae::trajdata::{
    build_windows, parse_annotations, parse_annotations_str, read_windows, resample, to_displacements,
    write_windows, WindowMode,
};
use stgcnn_cvae::FRAME_PERIOD;

fn inline_scene() -> String {
    let mut s = String::from("# two pedestrians crossing\n");
    for f in 0..26 {
        let t = f as f64;
        s += &format!("{}\t1\t{:.2}\t{:.2}\n", f * 10, 0.4 * t, 1.0);
        if f >= 2 {
            s += &format!("{}\t2\t{:.2}\t{:.2}\n", f * 10, 5.0, 8.0 - 0.35 * t);
        }
    }
    s
}

fn main() -> stgcnn_cvae::Result<()> {
    let mut args = std::env::args().skip(1);
    let scene = match args.next() {
        Some(path) => parse_annotations(&PathBuf::from(path))?,
        None => parse_annotations_str(&inline_scene(), "inline")?,
    };
    let hz: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2.5);
    let scene = scene.with_source_rate(hz);
    println!("{}: {} annotations, {} agents, frame step {}", scene.name, scene.annotations.len(), scene.agent_ids().len(), scene.frame_step());

    let resampled = resample(&scene, FRAME_PERIOD)?;
    println!("resampled to {} grid frames, dropped agents {:?}", resampled.scene.frame_count(), resampled.dropped_agents);

    for mode in [WindowMode::Train, WindowMode::Infer] {
        let ws = build_windows(&resampled.scene, 1, mode)?;
        let agents: Vec<usize> = ws.iter().map(|w| w.agents()).collect();
        println!("{mode:?}: {} windows, agents per window {agents:?}", ws.len());
    }

    let windows = build_windows(&resampled.scene, 1, WindowMode::Train)?;
    let dir = std::env::temp_dir().join("stgcvae_preprocess_example");
    std::fs::create_dir_all(&dir)?;
    let cache = dir.join("windows.stgw");
    write_windows(&cache, &windows)?;
    let back = read_windows(&cache)?;
    println!("cache {} holds {} windows", cache.display(), back.len());

    if let Some(w) = back.first() {
        let d = to_displacements(w);
        let v = d.values.shape();
        println!("first window displacements {v:?}, frame 1 agent 0 = ({:.3}, {:.3})", d.values.at(&[0, 1, 0]), d.values.at(&[1, 1, 0]));
    }
    Ok(())
}
