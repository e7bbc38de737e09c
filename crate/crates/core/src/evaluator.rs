//! Best-of-K evaluation, the constant-velocity baseline and latency probes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffcore::Tensor;
use crate::error::{dim_err, Error, Result};
use crate::model::{BivariateParams, CvaeModel, GraphInput};
use crate::trajdata::SequenceWindow;
use crate::{OBS_LEN, PRED_LEN, SEQ_LEN};

/// Mean Euclidean distance over every `(frame, agent)` entry.
pub fn ade(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return dim_err(format!("ade: {} predicted vs {} true points", pred.len(), truth.len()));
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| dist(p, t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean Euclidean distance at the final frame of row-major `T x agents` points.
pub fn fde(pred: &[[f64; 2]], truth: &[[f64; 2]], agents: usize) -> Result<f64> {
    if pred.len() != truth.len() || agents == 0 || pred.is_empty() || pred.len() % agents != 0 {
        return dim_err(format!("fde: {} predicted vs {} true points for {agents} agents", pred.len(), truth.len()));
    }
    let start = pred.len() - agents;
    let sum: f64 = pred[start..].iter().zip(&truth[start..]).map(|(p, t)| dist(p, t)).sum();
    Ok(sum / agents as f64)
}

fn dist(p: &[f64; 2], t: &[f64; 2]) -> f64 {
    (p[0] - t[0]).hypot(p[1] - t[1])
}

/// How a trajectory is read off one latent draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// Predicted means; diversity comes from the latent sample only.
    Latent,
    /// Additionally draws every displacement from its bivariate Gaussian.
    Full,
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(Self::Latent),
            "full" => Ok(Self::Full),
            _ => Err(Error::Config(format!("unknown sample mode {s:?}"))),
        }
    }
}

/// Which sample a best-of-K score is read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// The sample with the lowest ADE supplies both ADE and FDE.
    ByAde,
    /// ADE and FDE are minimized independently.
    PerMetric,
}

/// Score of one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowScore {
    pub ade: f64,
    pub fde: f64,
}

/// Agents of `window` whose 12 future positions are all known.
fn scored_agents(window: &SequenceWindow) -> Vec<usize> {
    (0..window.agents()).filter(|&a| window.fully_observed(a)).collect()
}

fn future_of(points: &[[f64; 2]], agents: usize, keep: &[usize]) -> Vec<[f64; 2]> {
    (0..PRED_LEN).flat_map(|t| keep.iter().map(move |&a| points[t * agents + a])).collect()
}

/// Samples future trajectories from the conditional prior.
///
/// The observed graph and prior are computed once; each of the `k` draws
/// decodes a fresh latent sample into a `12 x N` row-major trajectory
/// anchored at the last observed position.
pub struct Sampler<'m> {
    model: &'m CvaeModel,
    obs: GraphInput,
    mu: Tensor,
    std: Tensor,
    anchor: Vec<[f64; 2]>,
}

impl<'m> Sampler<'m> {
    pub fn new(model: &'m CvaeModel, window: &SequenceWindow) -> Result<Self> {
        let obs = GraphInput::observed(window)?;
        let (mu, logvar) = model.prior(&obs)?;
        let std = logvar.map(|v| (0.5 * v).exp());
        let anchor = window.frame(OBS_LEN - 1).to_vec();
        Ok(Self { model, obs, mu, std, anchor })
    }

    pub fn agents(&self) -> usize {
        self.anchor.len()
    }

    /// One latent draw decoded into absolute future positions.
    pub fn sample<R: Rng + ?Sized>(&self, mode: SampleMode, rng: &mut R) -> Result<Vec<[f64; 2]>> {
        let mut z = self.mu.clone();
        for (zi, s) in z.data_mut().iter_mut().zip(self.std.data()) {
            let e: f64 = rng.sample(StandardNormal);
            *zi += s * e;
        }
        let raw = self.model.decode_raw(&z, &self.obs)?;
        let bp = BivariateParams::from_raw(&raw)?;
        if bp.frames != SEQ_LEN {
            return dim_err(format!("decoder produced {} frames", bp.frames));
        }
        let n = self.agents();
        let mut cur = self.anchor.clone();
        let mut out = Vec::with_capacity(PRED_LEN * n);
        for t in OBS_LEN..SEQ_LEN {
            for (a, c) in cur.iter_mut().enumerate() {
                let i = t * n + a;
                let (mut dx, mut dy) = (bp.mu_x[i], bp.mu_y[i]);
                if mode == SampleMode::Full {
                    let e1: f64 = rng.sample(StandardNormal);
                    let e2: f64 = rng.sample(StandardNormal);
                    let r = bp.rho[i];
                    dx += bp.sigma_x[i] * e1;
                    dy += bp.sigma_y[i] * (r * e1 + (1.0 - r * r).max(0.0).sqrt() * e2);
                }
                c[0] += dx;
                c[1] += dy;
                out.push(*c);
            }
        }
        Ok(out)
    }
}

/// Draws `k` futures and scores the closest one against the window's truth.
pub fn best_of_k<R: Rng + ?Sized>(
    model: &CvaeModel,
    window: &SequenceWindow,
    k: usize,
    mode: SampleMode,
    selection: Selection,
    rng: &mut R,
) -> Result<WindowScore> {
    let samples = draw_samples(model, window, k, mode, rng)?;
    score_samples(window, &samples, selection)
}

fn draw_samples<R: Rng + ?Sized>(
    model: &CvaeModel,
    window: &SequenceWindow,
    k: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Vec<Vec<[f64; 2]>>> {
    if k < 1 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if window.frames() != SEQ_LEN {
        return dim_err(format!("window has {} frames, need {SEQ_LEN}", window.frames()));
    }
    let sampler = Sampler::new(model, window)?;
    (0..k).map(|_| sampler.sample(mode, rng)).collect()
}

fn score_samples(window: &SequenceWindow, samples: &[Vec<[f64; 2]>], selection: Selection) -> Result<WindowScore> {
    let keep = scored_agents(window);
    if keep.is_empty() {
        return Err(Error::Parameter("window has no agent with a known future".into()));
    }
    let n = window.agents();
    let truth = future_of(&window.positions[OBS_LEN * n..], n, &keep);
    let mut best: Option<WindowScore> = None;
    for s in samples {
        let pred = future_of(s, n, &keep);
        let cand = WindowScore { ade: ade(&pred, &truth)?, fde: fde(&pred, &truth, keep.len())? };
        best = Some(match (best, selection) {
            (None, _) => cand,
            (Some(b), Selection::ByAde) => {
                if cand.ade < b.ade {
                    cand
                } else {
                    b
                }
            }
            (Some(b), Selection::PerMetric) => WindowScore { ade: b.ade.min(cand.ade), fde: b.fde.min(cand.fde) },
        });
    }
    Ok(best.expect("k >= 1"))
}

/// Straight-line extrapolation with the velocity of the last two observed frames.
pub fn constant_velocity_prediction(window: &SequenceWindow) -> Result<Vec<[f64; 2]>> {
    if window.frames() < OBS_LEN {
        return dim_err(format!("window has {} frames, need {OBS_LEN}", window.frames()));
    }
    let n = window.agents();
    let last = window.frame(OBS_LEN - 1);
    let prev = window.frame(OBS_LEN - 2);
    let mut out = Vec::with_capacity(PRED_LEN * n);
    for step in 1..=PRED_LEN {
        for a in 0..n {
            let v = [last[a][0] - prev[a][0], last[a][1] - prev[a][1]];
            out.push([last[a][0] + v[0] * step as f64, last[a][1] + v[1] * step as f64]);
        }
    }
    Ok(out)
}

/// ADE/FDE of [`constant_velocity_prediction`].
pub fn constant_velocity_baseline(window: &SequenceWindow) -> Result<WindowScore> {
    let pred = constant_velocity_prediction(window)?;
    score_samples(window, &[pred], Selection::ByAde)
}

/// Wall-clock statistics of single inference passes, in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyStats {
    pub mean: f64,
    pub p95: f64,
    pub samples: Vec<f64>,
}

/// Times `repetitions` single inferences (graph construction, prior, one
/// latent sample and decode) after `warmup` untimed ones.
pub fn benchmark_inference(
    model: &CvaeModel,
    window: &SequenceWindow,
    repetitions: usize,
    warmup: usize,
) -> Result<LatencyStats> {
    if repetitions == 0 {
        return Err(Error::Parameter("need at least one timed repetition".into()));
    }
    if warmup < 10 {
        return Err(Error::Parameter("warmup must be at least 10 repetitions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut once = || -> Result<f64> {
        let start = Instant::now();
        let sampler = Sampler::new(model, window)?;
        std::hint::black_box(sampler.sample(SampleMode::Latent, &mut rng)?);
        Ok(start.elapsed().as_secs_f64())
    };
    for _ in 0..warmup {
        once()?;
    }
    let samples = (0..repetitions).map(|_| once()).collect::<Result<Vec<_>>>()?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    Ok(LatencyStats { mean, p95: sorted[idx], samples })
}

/// Settings of [`evaluate_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub mode: SampleMode,
    pub selection: Selection,
    pub seed: u64,
    /// Timed repetitions for the latency block; 0 skips it.
    pub latency_reps: usize,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { k: 20, mode: SampleMode::Latent, selection: Selection::ByAde, seed: 0, latency_reps: 0, jobs: 1 }
    }
}

/// Independent stream for window `index`.
pub fn window_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneStats {
    pub ade: f64,
    pub fde: f64,
    pub windows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub ade: f64,
    pub fde: f64,
    pub k: usize,
    pub windows: usize,
    pub baseline_ade: f64,
    pub baseline_fde: f64,
    pub per_scene: BTreeMap<String, SceneStats>,
    pub latency: Option<LatencyStats>,
    pub param_count: usize,
}

impl EvalReport {
    /// `key = value` lines followed by one `[scene NAME]` section per scene.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ade = {}", self.ade);
        let _ = writeln!(s, "fde = {}", self.fde);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "windows = {}", self.windows);
        let _ = writeln!(s, "baseline_ade = {}", self.baseline_ade);
        let _ = writeln!(s, "baseline_fde = {}", self.baseline_fde);
        let _ = writeln!(s, "param_count = {}", self.param_count);
        if let Some(l) = &self.latency {
            let _ = writeln!(s, "latency_mean = {}", l.mean);
            let _ = writeln!(s, "latency_p95 = {}", l.p95);
        }
        for (name, st) in &self.per_scene {
            let _ = writeln!(s, "\n[scene {name}]");
            let _ = writeln!(s, "ade = {}", st.ade);
            let _ = writeln!(s, "fde = {}", st.fde);
            let _ = writeln!(s, "windows = {}", st.windows);
        }
        s
    }
}

fn run_indexed<T: Send>(jobs: usize, n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    if jobs <= 1 || n < 2 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(jobs);
    let f = &f;
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| s.spawn(move || (start..(start + chunk).min(n)).map(f).collect::<Result<Vec<T>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Per-window best-of-K scores, window `i` drawing from [`window_rng`]`(seed, i)`.
pub fn score_windows(model: &CvaeModel, windows: &[SequenceWindow], opts: &EvalOptions) -> Result<Vec<WindowScore>> {
    run_indexed(opts.jobs, windows.len(), |i| {
        let mut rng = window_rng(opts.seed, i);
        best_of_k(model, &windows[i], opts.k, opts.mode, opts.selection, &mut rng)
    })
}

/// Mean best-of-K ADE/FDE over `windows` with a per-scene breakdown.
pub fn evaluate_dataset(model: &CvaeModel, windows: &[SequenceWindow], opts: &EvalOptions) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Parameter("no windows to evaluate".into()));
    }
    let scores = score_windows(model, windows, opts)?;
    let mut per_scene: BTreeMap<String, SceneStats> = BTreeMap::new();
    let (mut ade_sum, mut fde_sum, mut b_ade, mut b_fde) = (0.0, 0.0, 0.0, 0.0);
    for (w, s) in windows.iter().zip(&scores) {
        ade_sum += s.ade;
        fde_sum += s.fde;
        let b = constant_velocity_baseline(w)?;
        b_ade += b.ade;
        b_fde += b.fde;
        let e = per_scene.entry(w.scene.clone()).or_insert(SceneStats { ade: 0.0, fde: 0.0, windows: 0 });
        e.ade += s.ade;
        e.fde += s.fde;
        e.windows += 1;
    }
    for st in per_scene.values_mut() {
        st.ade /= st.windows as f64;
        st.fde /= st.windows as f64;
    }
    let n = windows.len() as f64;
    let latency = if opts.latency_reps > 0 {
        Some(benchmark_inference(model, &windows[0], opts.latency_reps, 10)?)
    } else {
        None
    };
    Ok(EvalReport {
        ade: ade_sum / n,
        fde: fde_sum / n,
        k: opts.k,
        windows: windows.len(),
        baseline_ade: b_ade / n,
        baseline_fde: b_fde / n,
        per_scene,
        latency,
        param_count: model.param_count(),
    })
}

/// Header of the prediction export.
pub const EXPORT_HEADER: &str = "agent_id,frame,sample_id,x,y";

/// Writes `window_NNNNN.csv` per window into `dir`: ground truth for all 20
/// frames as `sample_id = -1`, then `k` sampled futures for frames 8..20.
///
/// Samples are drawn from the same streams [`evaluate_dataset`] uses.
pub fn export_predictions(
    model: &CvaeModel,
    windows: &[SequenceWindow],
    k: usize,
    mode: SampleMode,
    seed: u64,
    dir: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        let mut rng = window_rng(seed, i);
        let samples = draw_samples(model, w, k, mode, &mut rng)?;
        let n = w.agents();
        let mut s = String::new();
        let _ = writeln!(s, "{EXPORT_HEADER}");
        for t in 0..w.frames() {
            for a in 0..n {
                let p = w.position(t, a);
                if p[0].is_finite() && p[1].is_finite() {
                    let _ = writeln!(s, "{},{t},-1,{},{}", w.agent_ids[a], p[0], p[1]);
                }
            }
        }
        for (j, sample) in samples.iter().enumerate() {
            for t in 0..PRED_LEN {
                for a in 0..n {
                    let p = sample[t * n + a];
                    let _ = writeln!(s, "{},{},{j},{},{}", w.agent_ids[a], OBS_LEN + t, p[0], p[1]);
                }
            }
        }
        let path = dir.join(format!("window_{i:05}.csv"));
        std::fs::write(&path, s)?;
        paths.push(path);
    }
    Ok(paths)
}
