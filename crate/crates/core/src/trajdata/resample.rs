use std::collections::BTreeMap;

use super::{RawAnnotation, Scene};
use crate::error::{Error, Result};

/// Output of [`resample`].
#[derive(Clone, Debug)]
pub struct Resampled {
    pub scene: Scene,
    /// Agents with fewer than two source points, which cannot be interpolated.
    pub dropped_agents: Vec<i64>,
}

/// Relative tolerance when matching grid times against source times.
const TIME_TOL: f64 = 1e-9;

/// Linear interpolation of every agent onto a uniform grid of
/// `target_period` seconds anchored at the scene's first timestamp.
///
/// Grid frames are renumbered `0, 1, 2, ...`. An agent is absent from a grid
/// frame that falls outside its track or inside a gap longer than one
/// source step.
pub fn resample(scene: &Scene, target_period: f64) -> Result<Resampled> {
    if !(target_period > 0.0 && target_period.is_finite()) {
        return Err(Error::Parameter(format!("target period {target_period} must be positive")));
    }
    let mut tracks: BTreeMap<i64, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for a in &scene.annotations {
        tracks.entry(a.agent).or_default().push((a.frame as f64 * scene.frame_period, a.x, a.y));
    }
    let empty = Resampled {
        scene: Scene { annotations: Vec::new(), frame_period: target_period, ..scene.clone() },
        dropped_agents: Vec::new(),
    };
    let (Some(t0), Some(t_end)) = (
        tracks.values().flat_map(|t| t.iter().map(|p| p.0)).reduce(f64::min),
        tracks.values().flat_map(|t| t.iter().map(|p| p.0)).reduce(f64::max),
    ) else {
        return Ok(empty);
    };
    let source_step = scene.frame_step() as f64 * scene.frame_period;
    let tol = TIME_TOL * t_end.abs().max(target_period);
    let grid_len = ((t_end - t0) / target_period + TIME_TOL).floor() as usize + 1;

    let mut dropped = Vec::new();
    let mut annotations = Vec::new();
    for (&agent, track) in &mut tracks {
        if track.len() < 2 {
            dropped.push(agent);
            continue;
        }
        track.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut seg = 0;
        for k in 0..grid_len {
            let g = t0 + k as f64 * target_period;
            if g < track[0].0 - tol || g > track[track.len() - 1].0 + tol {
                continue;
            }
            while seg + 2 < track.len() && track[seg + 1].0 < g - tol {
                seg += 1;
            }
            let (a, b) = (track[seg], track[seg + 1]);
            let (x, y) = if (g - a.0).abs() <= tol {
                (a.1, a.2)
            } else if (g - b.0).abs() <= tol {
                (b.1, b.2)
            } else if b.0 - a.0 > source_step + tol {
                continue;
            } else {
                let w = (g - a.0) / (b.0 - a.0);
                (a.1 + w * (b.1 - a.1), a.2 + w * (b.2 - a.2))
            };
            annotations.push(RawAnnotation { frame: k as i64, agent, x, y });
        }
    }
    let mut out = Scene::new(scene.name.clone(), annotations, target_period);
    out.robot_id = scene.robot_id;
    Ok(Resampled { scene: out, dropped_agents: dropped })
}
