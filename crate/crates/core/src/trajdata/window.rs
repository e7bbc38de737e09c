use std::collections::{BTreeMap, HashMap};

use super::Scene;
use crate::diffcore::Tensor;
use crate::error::{dim_err, Error, Result};
use crate::{OBS_LEN, SEQ_LEN};

/// Which agents a window keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowMode {
    /// Agents present at all 20 frames.
    Train,
    /// Agents present at the 8 observed frames; missing future positions are NaN.
    Infer,
}

/// A 20-frame multi-agent segment: 8 observed frames followed by 12 future ones.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceWindow {
    pub scene: String,
    pub agent_ids: Vec<i64>,
    /// Row-major `T x N` absolute positions in meters.
    pub positions: Vec<[f64; 2]>,
    pub robot_index: Option<usize>,
}

impl SequenceWindow {
    pub fn new(
        scene: impl Into<String>,
        agent_ids: Vec<i64>,
        positions: Vec<[f64; 2]>,
        robot_index: Option<usize>,
    ) -> Result<Self> {
        let n = agent_ids.len();
        if n == 0 {
            return Err(Error::Parameter("a window needs at least one agent".into()));
        }
        if positions.len() % n != 0 {
            return dim_err(format!("{} positions for {n} agents", positions.len()));
        }
        if robot_index.is_some_and(|r| r >= n) {
            return Err(Error::Parameter("robot index out of range".into()));
        }
        Ok(Self { scene: scene.into(), agent_ids, positions, robot_index })
    }

    pub fn agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn frames(&self) -> usize {
        self.positions.len() / self.agents()
    }

    pub fn includes_robot(&self) -> bool {
        self.robot_index.is_some()
    }

    pub fn position(&self, t: usize, agent: usize) -> [f64; 2] {
        self.positions[t * self.agents() + agent]
    }

    /// Positions of all agents at frame `t`.
    pub fn frame(&self, t: usize) -> &[[f64; 2]] {
        let n = self.agents();
        &self.positions[t * n..][..n]
    }

    /// Per-frame position lists for frames `range`.
    pub fn frames_in(&self, range: std::ops::Range<usize>) -> Vec<Vec<[f64; 2]>> {
        range.map(|t| self.frame(t).to_vec()).collect()
    }

    /// The first `len` frames as a new window.
    pub fn prefix(&self, len: usize) -> Self {
        let n = self.agents();
        Self { positions: self.positions[..len * n].to_vec(), ..self.clone() }
    }

    /// Whether agent `a` has finite positions at every frame.
    pub fn fully_observed(&self, a: usize) -> bool {
        (0..self.frames()).all(|t| self.position(t, a).iter().all(|v| v.is_finite()))
    }

    /// Reorders agents: new slot `i` holds old agent `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.agents();
        assert_eq!(perm.len(), n);
        let positions = (0..self.frames())
            .flat_map(|t| perm.iter().map(move |&k| (t, k)))
            .map(|(t, k)| self.position(t, k))
            .collect();
        let robot_index = self.robot_index.map(|r| perm.iter().position(|&k| k == r).unwrap());
        Self {
            scene: self.scene.clone(),
            agent_ids: perm.iter().map(|&k| self.agent_ids[k]).collect(),
            positions,
            robot_index,
        }
    }
}

/// Sliding 20-frame windows over a resampled scene.
///
/// Window starts advance by `stride` grid frames. Windows in which no agent
/// qualifies are dropped.
pub fn build_windows(scene: &Scene, stride: usize, mode: WindowMode) -> Result<Vec<SequenceWindow>> {
    if stride == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    let mut by_frame: BTreeMap<i64, HashMap<i64, [f64; 2]>> = BTreeMap::new();
    for a in &scene.annotations {
        by_frame.entry(a.frame).or_default().insert(a.agent, [a.x, a.y]);
    }
    let (Some(&first), Some(&last)) = (by_frame.keys().next(), by_frame.keys().next_back()) else {
        return Ok(Vec::new());
    };
    let span = (last - first + 1) as usize;
    if span < SEQ_LEN {
        return Ok(Vec::new());
    }
    let empty = HashMap::new();
    let at = |f: i64| by_frame.get(&f).unwrap_or(&empty);
    let required = match mode {
        WindowMode::Train => SEQ_LEN,
        WindowMode::Infer => OBS_LEN,
    };
    let agents = scene.agent_ids();
    let mut windows = Vec::new();
    for start in (0..=span - SEQ_LEN).step_by(stride) {
        let s = first + start as i64;
        let kept: Vec<i64> = agents
            .iter()
            .copied()
            .filter(|id| (0..required as i64).all(|k| at(s + k).contains_key(id)))
            .collect();
        if kept.is_empty() {
            continue;
        }
        let mut positions = Vec::with_capacity(SEQ_LEN * kept.len());
        for k in 0..SEQ_LEN as i64 {
            let frame = at(s + k);
            positions.extend(kept.iter().map(|id| frame.get(id).copied().unwrap_or([f64::NAN; 2])));
        }
        let robot_index = scene.robot_id.and_then(|r| kept.iter().position(|&id| id == r));
        windows.push(SequenceWindow { scene: scene.name.clone(), agent_ids: kept, positions, robot_index });
    }
    Ok(windows)
}

/// Per-frame displacements (`2 x T x N`) plus the first-frame positions.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementTensor {
    pub values: Tensor,
    pub origin: Vec<[f64; 2]>,
}

/// `values[:, 0, :] = 0` and `values[:, t, :] = pos[t] - pos[t - 1]`.
pub fn to_displacements(window: &SequenceWindow) -> DisplacementTensor {
    let (t_len, n) = (window.frames(), window.agents());
    let mut values = Tensor::zeros(&[2, t_len, n]);
    let d = values.data_mut();
    for t in 1..t_len {
        for a in 0..n {
            let (p, q) = (window.position(t, a), window.position(t - 1, a));
            d[t * n + a] = p[0] - q[0];
            d[(t_len + t) * n + a] = p[1] - q[1];
        }
    }
    DisplacementTensor { values, origin: window.frame(0).to_vec() }
}

/// Cumulative sum of displacements from the origin; `T x N` row-major.
pub fn to_absolute(disp: &DisplacementTensor) -> Vec<[f64; 2]> {
    let s = disp.values.shape();
    let (t_len, n) = (s[1], s[2]);
    let d = disp.values.data();
    let mut out = Vec::with_capacity(t_len * n);
    let mut cur = disp.origin.clone();
    for t in 0..t_len {
        for (a, c) in cur.iter_mut().enumerate() {
            if t > 0 {
                c[0] += d[t * n + a];
                c[1] += d[(t_len + t) * n + a];
            }
            out.push(*c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::trajdata::RawAnnotation;

    fn walker_scene(frames: i64, agents: &[(i64, std::ops::Range<i64>)]) -> Scene {
        let mut anns = Vec::new();
        for (id, range) in agents {
            for f in range.clone().take_while(|&f| f < frames) {
                anns.push(RawAnnotation { frame: f, agent: *id, x: f as f64 * 0.5, y: *id as f64 });
            }
        }
        Scene::new("toy", anns, 0.4)
    }

    #[test]
    fn exact_fit_gives_one_window() {
        let w = build_windows(&walker_scene(20, &[(1, 0..20)]), 1, WindowMode::Train).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].agents(), 1);
        assert_eq!(w[0].frames(), 20);
    }

    #[test]
    fn twenty_one_frames_two_windows() {
        let w = build_windows(&walker_scene(21, &[(1, 0..21)]), 1, WindowMode::Train).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].position(0, 0), [0.5, 1.0]);
    }

    #[test]
    fn partial_agent_filtered_in_train_mode_only() {
        let scene = walker_scene(20, &[(1, 0..20), (2, 0..11)]);
        let train = build_windows(&scene, 1, WindowMode::Train).unwrap();
        assert_eq!(train[0].agent_ids, vec![1]);
        let infer = build_windows(&scene, 1, WindowMode::Infer).unwrap();
        assert_eq!(infer[0].agent_ids, vec![1, 2]);
        assert!(infer[0].position(15, 1)[0].is_nan());
        assert!(!infer[0].fully_observed(1));
    }

    #[test]
    fn robot_slot_is_tracked() {
        let mut scene = walker_scene(20, &[(3, 0..20), (9, 0..20)]);
        scene.robot_id = Some(9);
        let w = build_windows(&scene, 1, WindowMode::Train).unwrap();
        assert_eq!(w[0].robot_index, Some(1));
        assert!(w[0].includes_robot());
    }

    #[test]
    fn window_count_formula() {
        for (frames, stride) in [(19, 1), (20, 3), (45, 1), (45, 4), (60, 20)] {
            let w = build_windows(&walker_scene(frames, &[(1, 0..frames)]), stride, WindowMode::Train).unwrap();
            let expected = if frames < 20 { 0 } else { (frames as usize - 20) / stride + 1 };
            assert_eq!(w.len(), expected, "F={frames} s={stride}");
        }
    }

    #[test]
    fn stationary_and_constant_velocity() {
        let still = SequenceWindow::new("s", vec![0], vec![[2.0, 3.0]; 5], None).unwrap();
        assert!(to_displacements(&still).values.data().iter().all(|&v| v == 0.0));
        let moving: Vec<[f64; 2]> = (0..5).map(|t| [t as f64, 0.0]).collect();
        let d = to_displacements(&SequenceWindow::new("s", vec![0], moving, None).unwrap());
        assert_eq!(&d.values.data()[..5], &[0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn absolute_from_hand_cases() {
        let zero = DisplacementTensor { values: Tensor::zeros(&[2, 4, 1]), origin: vec![[5.0, 5.0]] };
        assert_eq!(to_absolute(&zero), vec![[5.0, 5.0]; 4]);
        let steps = Tensor::new(vec![2, 3, 1], vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let d = DisplacementTensor { values: steps, origin: vec![[0.0, 0.0]] };
        assert_eq!(to_absolute(&d), vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
    }

    #[test]
    fn permutation_moves_robot_slot() {
        let w = SequenceWindow::new("s", vec![10, 11, 12], (0..6).map(|i| [i as f64, 0.0]).collect(), Some(0))
            .unwrap();
        let p = w.permuted(&[2, 0, 1]);
        assert_eq!(p.agent_ids, vec![12, 10, 11]);
        assert_eq!(p.robot_index, Some(1));
        assert_eq!(p.position(1, 0), [5.0, 0.0]);
    }

    proptest! {
        #[test]
        fn displacement_round_trip(n in 1usize..6, coords in prop::collection::vec(-100.0..100.0f64, 240)) {
            let positions: Vec<[f64; 2]> = (0..20 * n).map(|i| [coords[2 * i], coords[2 * i + 1]]).collect();
            let w = SequenceWindow::new("p", (0..n as i64).collect(), positions.clone(), None).unwrap();
            let back = to_absolute(&to_displacements(&w));
            for (a, b) in back.iter().zip(&positions) {
                prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
            }
        }

        #[test]
        fn train_agents_present_at_every_frame(
            spans in prop::collection::vec((0i64..15, 5i64..40), 1..6),
            stride in 1usize..5,
        ) {
            let agents: Vec<(i64, std::ops::Range<i64>)> =
                spans.iter().enumerate().map(|(i, &(s, l))| (i as i64, s..s + l)).collect();
            let scene = walker_scene(60, &agents);
            for w in build_windows(&scene, stride, WindowMode::Train).unwrap() {
                for a in 0..w.agents() {
                    prop_assert!(w.fully_observed(a));
                }
            }
        }
    }
}
