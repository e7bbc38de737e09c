//! Training objective: bivariate Gaussian reconstruction NLL plus an
//! annealed KL divergence between the recognition and prior Gaussians.

use std::f64::consts::PI;
use std::io::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::diffcore::{CustomOp, Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};
use crate::model::{BivariateGaussianSeq, LatentGaussian};

/// Lower bound on `1 - rho^2`.
pub const RHO_FLOOR: f64 = 1e-9;
/// Lower bound on the raw log-sigma, i.e. `sigma >= exp(-10)`.
pub const LOG_SIGMA_MIN: f64 = -10.0;

/// Header of the metrics log.
pub const METRICS_HEADER: &str = "epoch,step,total,rec,kl,w_kl";

/// Per-element terms of the bivariate NLL, shared by forward and backward.
struct Terms {
    dx: f64,
    dy: f64,
    rho: f64,
    om: f64,
    floored: bool,
    nll: f64,
}

fn terms(mx: f64, my: f64, sx_raw: f64, sy_raw: f64, r: f64, tx: f64, ty: f64) -> Terms {
    let ls_x = sx_raw.max(LOG_SIGMA_MIN);
    let ls_y = sy_raw.max(LOG_SIGMA_MIN);
    let dx = (tx - mx) / ls_x.exp();
    let dy = (ty - my) / ls_y.exp();
    let rho = r.tanh();
    let raw_om = 1.0 - rho * rho;
    let floored = raw_om <= RHO_FLOOR;
    let om = if floored { RHO_FLOOR } else { raw_om };
    let z = dx * dx + dy * dy - 2.0 * rho * dx * dy;
    let nll = (2.0 * PI).ln() + ls_x + ls_y + 0.5 * om.ln() + z / (2.0 * om);
    Terms { dx, dy, rho, om, floored, nll }
}

struct BivariateNll {
    frames: Range<usize>,
    target: Tensor,
}

impl BivariateNll {
    fn for_each(&self, raw: &Tensor, mut f: impl FnMut(usize, [usize; 5], &Terms)) {
        let (t_all, n) = (raw.shape()[1], raw.shape()[2]);
        let plane = t_all * n;
        let tgt = self.target.data();
        let tplane = self.target.shape()[1] * n;
        let d = raw.data();
        for t in self.frames.clone() {
            for a in 0..n {
                let i = t * n + a;
                let idx = [i, plane + i, 2 * plane + i, 3 * plane + i, 4 * plane + i];
                let tm = terms(d[idx[0]], d[idx[1]], d[idx[2]], d[idx[3]], d[idx[4]], tgt[i], tgt[tplane + i]);
                f(i, idx, &tm);
            }
        }
    }

    fn count(&self, raw: &Tensor) -> f64 {
        (self.frames.len() * raw.shape()[2]) as f64
    }
}

impl CustomOp for BivariateNll {
    fn name(&self) -> &'static str {
        "bivariate_nll"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let raw = inputs[0];
        let scale = grad.item() / self.count(raw);
        let d = raw.data();
        let mut g = Tensor::zeros(raw.shape());
        let gd = g.data_mut();
        self.for_each(raw, |_, idx, tm| {
            let Terms { dx, dy, rho, om, floored, .. } = *tm;
            let sx = d[idx[2]].max(LOG_SIGMA_MIN).exp();
            let sy = d[idx[3]].max(LOG_SIGMA_MIN).exp();
            let ex = dx - rho * dy;
            let ey = dy - rho * dx;
            gd[idx[0]] = -scale * ex / (om * sx);
            gd[idx[1]] = -scale * ey / (om * sy);
            if d[idx[2]] > LOG_SIGMA_MIN {
                gd[idx[2]] = scale * (1.0 - dx * ex / om);
            }
            if d[idx[3]] > LOG_SIGMA_MIN {
                gd[idx[3]] = scale * (1.0 - dy * ey / om);
            }
            let drho = if floored {
                -dx * dy / om
            } else {
                let z = dx * dx + dy * dy - 2.0 * rho * dx * dy;
                -rho / om - dx * dy / om + z * rho / (om * om)
            };
            gd[idx[4]] = scale * drho * (1.0 - rho * rho);
        });
        vec![g]
    }
}

/// Mean over `(agent, frame)` pairs in `frames` of the bivariate Gaussian
/// negative log-likelihood of `target` (`2 x T x N` displacements).
///
/// Raw channels map to `sigma = exp(s)` and `rho = tanh(r)`; `s` is floored
/// at -10 and `1 - rho^2` at `1e-9`.
pub fn bivariate_nll(
    tape: &mut Tape,
    pred: BivariateGaussianSeq,
    target: &Tensor,
    frames: Range<usize>,
) -> Result<Var> {
    let raw = tape.value(pred.raw);
    let (ps, ts) = (raw.shape(), target.shape());
    if ps.len() != 3 || ps[0] != 5 || ts.len() != 3 || ts[0] != 2 || ps[2] != ts[2] {
        return dim_err(format!("nll: prediction {ps:?} vs target {ts:?}"));
    }
    if frames.is_empty() || frames.end > ps[1] || frames.end > ts[1] {
        return dim_err(format!("nll: frame slice {frames:?} outside {ps:?} / {ts:?}"));
    }
    if ps[2] == 0 {
        return dim_err("nll: no agents");
    }
    let op = BivariateNll { frames, target: target.clone() };
    let mut total = 0.0;
    op.for_each(raw, |_, _, tm| total += tm.nll);
    let value = Tensor::scalar(total / op.count(raw));
    Ok(tape.custom(&[pred.raw], value, Box::new(op)))
}

/// `KL(q || p)` for diagonal Gaussians, summed over latent channels and time
/// and averaged over agents (last axis).
pub fn kl_diag_gaussians(tape: &mut Tape, q: LatentGaussian, p: LatentGaussian) -> Result<Var> {
    let shapes = [q.mu, q.logvar, p.mu, p.logvar].map(|v| tape.value(v).shape().to_vec());
    if shapes.iter().any(|s| s != &shapes[0]) || shapes[0].len() != 3 {
        return dim_err(format!("kl: mismatched latent shapes {shapes:?}"));
    }
    let agents = shapes[0][2] as f64;
    let d = tape.sub(q.logvar, p.logvar)?;
    let ratio = tape.exp(d);
    let diff = tape.sub(q.mu, p.mu)?;
    let sq = tape.mul(diff, diff)?;
    let neg = tape.scale(p.logvar, -1.0);
    let inv = tape.exp(neg);
    let maha = tape.mul(sq, inv)?;
    let s = tape.add(ratio, maha)?;
    let s = tape.sub(s, d)?;
    let s = tape.offset(s, -1.0);
    let total = tape.sum(s);
    Ok(tape.scale(total, 0.5 / agents))
}

/// Linear KL weight `slope * epoch`, held constant from `cap_epochs` on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealSchedule {
    pub slope: f64,
    pub cap_epochs: i64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { slope: 2e-5, cap_epochs: 250 }
    }
}

impl AnnealSchedule {
    pub fn weight(&self, epoch: i64) -> Result<f64> {
        if epoch < 0 {
            return Err(Error::Parameter(format!("negative epoch {epoch}")));
        }
        Ok(self.slope * epoch.min(self.cap_epochs) as f64)
    }
}

/// KL weight under the default schedule.
pub fn anneal_weight(epoch: i64) -> Result<f64> {
    AnnealSchedule::default().weight(epoch)
}

/// Values of one loss evaluation; `total == rec + weight * kl` exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub rec: f64,
    pub kl: f64,
    pub weight: f64,
    pub epoch: i64,
}

impl LossReport {
    pub fn csv_line(&self, step: u64) -> String {
        format!("{},{step},{},{},{},{}", self.epoch, self.total, self.rec, self.kl, self.weight)
    }
}

/// Reconstruction over all output frames plus the weighted KL term.
///
/// Returns the differentiable total alongside the logged components.
pub fn total_loss(
    tape: &mut Tape,
    pred: BivariateGaussianSeq,
    target: &Tensor,
    q: LatentGaussian,
    p: LatentGaussian,
    epoch: i64,
    schedule: &AnnealSchedule,
) -> Result<(Var, LossReport)> {
    let weight = schedule.weight(epoch)?;
    let frames = tape.value(pred.raw).shape().get(1).copied().unwrap_or(0);
    let rec = bivariate_nll(tape, pred, target, 0..frames)?;
    let kl = kl_diag_gaussians(tape, q, p)?;
    let weighted = tape.scale(kl, weight);
    let total = tape.add(rec, weighted)?;
    let report = LossReport {
        total: tape.value(total).item(),
        rec: tape.value(rec).item(),
        kl: tape.value(kl).item(),
        weight,
        epoch,
    };
    Ok((total, report))
}

/// Appends `epoch,step,total,rec,kl,w_kl` rows, writing the header to new files.
pub struct MetricsLog {
    file: std::fs::File,
}

impl MetricsLog {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(file, "{METRICS_HEADER}")?;
        }
        Ok(Self { file })
    }

    pub fn append(&mut self, report: &LossReport, step: u64) -> Result<()> {
        writeln!(self.file, "{}", report.csv_line(step))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn pred_from(tape: &mut Tape, channels: [&[f64]; 5], t: usize, n: usize) -> BivariateGaussianSeq {
        let data: Vec<f64> = channels.iter().flat_map(|c| c.iter().copied()).collect();
        BivariateGaussianSeq { raw: tape.leaf(Tensor::new(vec![5, t, n], data).unwrap()) }
    }

    fn latent(tape: &mut Tape, mu: &[f64], lv: &[f64], shape: [usize; 3]) -> LatentGaussian {
        LatentGaussian {
            mu: tape.leaf(Tensor::new(shape.to_vec(), mu.to_vec()).unwrap()),
            logvar: tape.leaf(Tensor::new(shape.to_vec(), lv.to_vec()).unwrap()),
        }
    }

    /// Density from the explicit 2x2 covariance, inverse and determinant.
    fn matrix_nll(mu: [f64; 2], sx: f64, sy: f64, rho: f64, x: [f64; 2]) -> f64 {
        let c = [[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]];
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let inv = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
        let d = [x[0] - mu[0], x[1] - mu[1]];
        let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
        let density = (-0.5 * q).exp() / (2.0 * PI * det.sqrt());
        -density.ln()
    }

    #[test]
    fn nll_at_mean_with_unit_sigma() {
        let mut tape = Tape::new();
        let pred = pred_from(&mut tape, [&[0.3], &[-0.2], &[0.0], &[0.0], &[0.0]], 1, 1);
        let target = Tensor::new(vec![2, 1, 1], vec![0.3, -0.2]).unwrap();
        let v = bivariate_nll(&mut tape, pred, &target, 0..1).unwrap();
        assert!((tape.value(v).item() - 1.8378770664093453).abs() < 1e-9);

        let target = Tensor::new(vec![2, 1, 1], vec![1.3, -0.2]).unwrap();
        let v = bivariate_nll(&mut tape, pred, &target, 0..1).unwrap();
        assert!((tape.value(v).item() - 2.3378770664093453).abs() < 1e-9);
    }

    #[test]
    fn nll_matches_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..7).map(|_| rng.random_range(-1.5..1.5)).collect();
            let mut tape = Tape::new();
            let pred = pred_from(&mut tape, [&[v[0]], &[v[1]], &[v[2]], &[v[3]], &[v[4]]], 1, 1);
            let target = Tensor::new(vec![2, 1, 1], vec![v[5], v[6]]).unwrap();
            let got = bivariate_nll(&mut tape, pred, &target, 0..1).unwrap();
            let got = tape.value(got).item();
            let want = matrix_nll([v[0], v[1]], v[2].exp(), v[3].exp(), v[4].tanh(), [v[5], v[6]]);
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn nll_averages_over_slice_only() {
        let mut tape = Tape::new();
        // frame 0 at the mean, frame 1 one sigma off in x
        let pred = pred_from(&mut tape, [&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]], 2, 1);
        let target = Tensor::new(vec![2, 2, 1], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let l = (2.0 * PI).ln();
        let all = bivariate_nll(&mut tape, pred, &target, 0..2).unwrap();
        let last = bivariate_nll(&mut tape, pred, &target, 1..2).unwrap();
        assert!((tape.value(all).item() - (l + 0.25)).abs() < 1e-12);
        assert!((tape.value(last).item() - (l + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn nll_shape_errors() {
        let mut tape = Tape::new();
        let pred = pred_from(&mut tape, [&[0.0], &[0.0], &[0.0], &[0.0], &[0.0]], 1, 1);
        let bad = Tensor::zeros(&[2, 1, 2]);
        assert!(matches!(bivariate_nll(&mut tape, pred, &bad, 0..1), Err(Error::Dimension(_))));
        let ok = Tensor::zeros(&[2, 1, 1]);
        assert!(matches!(bivariate_nll(&mut tape, pred, &ok, 0..2), Err(Error::Dimension(_))));
    }

    #[test]
    fn nll_floors_keep_loss_finite() {
        let mut tape = Tape::new();
        let pred = pred_from(&mut tape, [&[0.0], &[0.0], &[-50.0], &[-50.0], &[40.0]], 1, 1);
        let target = Tensor::new(vec![2, 1, 1], vec![1e-6, -1e-6]).unwrap();
        let v = bivariate_nll(&mut tape, pred, &target, 0..1).unwrap();
        assert!(tape.value(v).item().is_finite());
        let g = tape.backward(v).unwrap().wrt(&tape, pred.raw);
        assert!(g.is_finite());
        assert_eq!(g.data()[2], 0.0);
        assert_eq!(g.data()[3], 0.0);
    }

    fn numeric(raw: &Tensor, f: impl Fn(&Tensor) -> f64) -> Tensor {
        let h = 1e-6;
        let mut g = Tensor::zeros(raw.shape());
        for i in 0..raw.numel() {
            let mut p = raw.clone();
            p.data_mut()[i] += h;
            let mut m = raw.clone();
            m.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = Tensor::from_fn(&[5, 3, 2], |_| rng.random_range(-1.0..1.0));
        let target = Tensor::from_fn(&[2, 3, 2], |_| rng.random_range(-1.0..1.0));
        let eval = |r: &Tensor| {
            let mut tape = Tape::new();
            let pred = BivariateGaussianSeq { raw: tape.leaf(r.clone()) };
            let v = bivariate_nll(&mut tape, pred, &target, 0..3).unwrap();
            tape.value(v).item()
        };
        let mut tape = Tape::new();
        let pred = BivariateGaussianSeq { raw: tape.leaf(raw.clone()) };
        let v = bivariate_nll(&mut tape, pred, &target, 0..3).unwrap();
        let g = tape.backward(v).unwrap().wrt(&tape, pred.raw);
        let n = numeric(&raw, eval);
        assert!(g.max_abs_diff(&n) < 1e-7, "{g:?}\n{n:?}");
    }

    #[test]
    fn kl_analytic_cases() {
        let mut tape = Tape::new();
        let q = latent(&mut tape, &[1.0], &[0.0], [1, 1, 1]);
        let p = latent(&mut tape, &[0.0], &[0.0], [1, 1, 1]);
        let v = kl_diag_gaussians(&mut tape, q, p).unwrap();
        assert!((tape.value(v).item() - 0.5).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mu: Vec<f64> = (0..24).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..24).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q = latent(&mut tape, &mu, &lv, [3, 4, 2]);
        let v = kl_diag_gaussians(&mut tape, q, q).unwrap();
        assert_eq!(tape.value(v).item(), 0.0);
    }

    #[test]
    fn kl_averages_over_agents() {
        let mut tape = Tape::new();
        let q = latent(&mut tape, &[1.0, 1.0], &[0.0, 0.0], [1, 1, 2]);
        let p = latent(&mut tape, &[0.0, 0.0], &[0.0, 0.0], [1, 1, 2]);
        let v = kl_diag_gaussians(&mut tape, q, p).unwrap();
        assert!((tape.value(v).item() - 0.5).abs() < 1e-12);
        let bad = latent(&mut tape, &[0.0], &[0.0], [1, 1, 1]);
        assert!(matches!(kl_diag_gaussians(&mut tape, q, bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mq, lq, mp, lp) = (0.4, -0.6, -0.3, 0.5);
        let (sq, sp) = ((0.5 * lq as f64).exp(), (0.5 * lp as f64).exp());
        let log_n = |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * PI).ln();
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            let x = mq + sq * e;
            let d = log_n(x, mq, sq) - log_n(x, mp, sp);
            sum += d;
            sum2 += d * d;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();

        let mut tape = Tape::new();
        let q = latent(&mut tape, &[mq], &[lq], [1, 1, 1]);
        let p = latent(&mut tape, &[mp], &[lp], [1, 1, 1]);
        let v = kl_diag_gaussians(&mut tape, q, p).unwrap();
        let v = tape.value(v).item();
        assert!((v - mean).abs() < 3.0 * se, "{v} vs {mean} +- {se}");
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = Tensor::from_fn(&[4, 2, 2, 2], |_| rng.random_range(-1.0..1.0));
        let eval = |x: &Tensor| {
            let mut tape = Tape::new();
            let parts: Vec<Var> =
                (0..4).map(|k| tape.leaf(Tensor::new(vec![2, 2, 2], x.data()[k * 8..][..8].to_vec()).unwrap())).collect();
            let q = LatentGaussian { mu: parts[0], logvar: parts[1] };
            let p = LatentGaussian { mu: parts[2], logvar: parts[3] };
            let v = kl_diag_gaussians(&mut tape, q, p).unwrap();
            (tape, parts, v)
        };
        let (tape, parts, v) = eval(&x);
        let grads = tape.backward(v).unwrap();
        let g: Vec<f64> = parts.iter().flat_map(|&p| grads.wrt(&tape, p).into_data()).collect();
        let n = numeric(&x, |x| {
            let (t, _, v) = eval(x);
            t.value(v).item()
        });
        for (a, b) in g.iter().zip(n.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn anneal_examples() {
        assert_eq!(anneal_weight(0).unwrap(), 0.0);
        assert!((anneal_weight(100).unwrap() - 2e-3).abs() < 1e-15);
        assert!((anneal_weight(300).unwrap() - 5e-3).abs() < 1e-15);
        assert!(matches!(anneal_weight(-1), Err(Error::Parameter(_))));
        let s = AnnealSchedule { slope: 1e-3, cap_epochs: 10 };
        assert_eq!(s.weight(20).unwrap(), s.weight(10).unwrap());
    }

    #[test]
    fn total_loss_identity_and_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut tape = Tape::new();
        let raw = Tensor::from_fn(&[5, 4, 2], |_| rng.random_range(-1.0..1.0));
        let pred = BivariateGaussianSeq { raw: tape.leaf(raw) };
        let target = Tensor::from_fn(&[2, 4, 2], |_| rng.random_range(-1.0..1.0));
        let mu: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = latent(&mut tape, &mu, &vec![0.2; 12], [3, 2, 2]);
        let p = latent(&mut tape, &vec![0.0; 12], &vec![0.0; 12], [3, 2, 2]);
        let sched = AnnealSchedule::default();

        for epoch in [0, 7, 120, 400] {
            let (_, r) = total_loss(&mut tape, pred, &target, q, p, epoch, &sched).unwrap();
            assert_eq!(r.total, r.rec + r.weight * r.kl);
            if epoch == 0 {
                assert_eq!(r.total, r.rec);
            }
            let (_, same) = total_loss(&mut tape, pred, &target, q, q, epoch, &sched).unwrap();
            assert_eq!(same.total, same.rec);
        }
    }

    #[test]
    fn metrics_log_writes_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let r = LossReport { total: 1.5, rec: 1.0, kl: 0.5, weight: 1.0, epoch: 3 };
        MetricsLog::open(&path).unwrap().append(&r, 10).unwrap();
        MetricsLog::open(&path).unwrap().append(&r, 11).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec![METRICS_HEADER, "3,10,1.5,1,0.5,1", "3,11,1.5,1,0.5,1"]);
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(v in prop::collection::vec(-3.0f64..3.0, 16)) {
            let mut tape = Tape::new();
            let q = latent(&mut tape, &v[0..4], &v[4..8], [2, 1, 2]);
            let p = latent(&mut tape, &v[8..12], &v[12..16], [2, 1, 2]);
            let k = kl_diag_gaussians(&mut tape, q, p).unwrap();
            prop_assert!(tape.value(k).item() >= -1e-12);
        }

        #[test]
        fn nll_gradient_vanishes_in_mu_at_target(
            v in prop::collection::vec(-1.0f64..1.0, 5),
        ) {
            let mut tape = Tape::new();
            let pred = pred_from(&mut tape, [&v[0..1], &v[1..2], &v[2..3], &v[3..4], &v[4..5]], 1, 1);
            let target = Tensor::new(vec![2, 1, 1], vec![v[0], v[1]]).unwrap();
            let l = bivariate_nll(&mut tape, pred, &target, 0..1).unwrap();
            let g = tape.backward(l).unwrap().wrt(&tape, pred.raw);
            prop_assert!(g.data()[0].abs() < 1e-12 && g.data()[1].abs() < 1e-12);
            // and moving mu away raises the loss
            let shifted = Tensor::new(vec![2, 1, 1], vec![v[0] + 0.1, v[1] - 0.05]).unwrap();
            let l2 = bivariate_nll(&mut tape, pred, &shifted, 0..1).unwrap();
            prop_assert!(tape.value(l2).item() > tape.value(l).item());
        }

        #[test]
        fn anneal_is_nondecreasing(a in 0i64..1000, b in 0i64..1000) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(anneal_weight(lo).unwrap() <= anneal_weight(hi).unwrap());
        }
    }
}
