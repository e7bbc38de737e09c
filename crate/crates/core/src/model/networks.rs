use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::params::ParamVars;
use super::{BivariateGaussianSeq, GraphInput, LatentGaussian, Mode};
use crate::diffcore::{Tape, Tensor, Var, LOGVAR_MAX, LOGVAR_MIN};
use crate::error::{dim_err, Error, Result};
use crate::{OBS_LEN, SEQ_LEN};

/// `conv_time` plus per-channel bias.
fn conv(tape: &mut Tape, pv: &ParamVars, name: &str, x: Var, padding: usize) -> Result<Var> {
    let w = pv.get(&format!("{name}.weight"))?;
    let b = pv.get(&format!("{name}.bias"))?;
    let y = tape.conv_time(x, w, padding)?;
    tape.add_bias(y, b)
}

/// Per-node channel mixing followed by neighbourhood aggregation: `A (W x + b)`.
fn graph_conv(tape: &mut Tape, pv: &ParamVars, name: &str, x: Var, graph: &GraphInput) -> Result<Var> {
    let s = tape.value(x).shape().to_vec();
    let w = pv.get(&format!("{name}.weight"))?;
    let b = pv.get(&format!("{name}.bias"))?;
    let flat = tape.reshape(x, &[s[0], s[1] * s[2]])?;
    let mixed = tape.matmul(w, flat)?;
    let cout = tape.value(mixed).shape()[0];
    let mixed = tape.reshape(mixed, &[cout, s[1], s[2]])?;
    let mixed = tape.add_bias(mixed, b)?;
    tape.graph_aggregate(mixed, graph.shared_adjacency())
}

/// Dense map over the flattened `(channel, time)` axis of each node, the
/// time-extrapolator trick: `C x T_in x N -> C x T_out x N`.
fn time_extrapolate(tape: &mut Tape, pv: &ParamVars, name: &str, x: Var, t_out: usize) -> Result<Var> {
    let s = tape.value(x).shape().to_vec();
    let w = pv.get(&format!("{name}.weight"))?;
    let b = pv.get(&format!("{name}.bias"))?;
    let flat = tape.reshape(x, &[s[0] * s[1], s[2]])?;
    let y = tape.matmul(w, flat)?;
    let y = tape.add_bias(y, b)?;
    tape.reshape(y, &[s[0], t_out, s[2]])
}

fn prelu(tape: &mut Tape, pv: &ParamVars, name: &str, x: Var) -> Result<Var> {
    let slope = pv.get(&format!("{name}.slope"))?;
    tape.prelu(x, slope)
}

struct Stochastic<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    dropout: f64,
    training: bool,
}

/// GCN + TCN blocks with residual connections, the shared encoder trunk.
///
/// The last recognition block uses an unpadded kernel so its output covers
/// the 8-frame latent grid.
fn embed<R: Rng + ?Sized>(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    net: &str,
    blocks: usize,
    graph: &GraphInput,
    mut stochastic: Option<Stochastic<'_, R>>,
) -> Result<Var> {
    let mut h = tape.leaf(graph.features.clone());
    for b in 0..blocks {
        let pre = format!("{net}.block{b}");
        let reduce = net == "recognition" && b + 1 == blocks;
        let input = h;
        let g = graph_conv(tape, pv, &format!("{pre}.gcn"), input, graph)?;
        let g = prelu(tape, pv, &format!("{pre}.gcn"), g)?;
        let pad = if reduce { 0 } else { config.padding() };
        let mut t = conv(tape, pv, &format!("{pre}.tcn"), g, pad)?;
        if let Some(s) = stochastic.as_mut() {
            t = tape.dropout(t, s.dropout, s.rng, s.training)?;
        }
        let res = if pv.get(&format!("{pre}.res.weight")).is_ok() {
            conv(tape, pv, &format!("{pre}.res"), input, 0)?
        } else {
            input
        };
        let sum = tape.add(t, res)?;
        h = prelu(tape, pv, &pre, sum)?;
    }
    Ok(h)
}

fn heads(tape: &mut Tape, pv: &ParamVars, net: &str, h: Var) -> Result<LatentGaussian> {
    let mu = conv(tape, pv, &format!("{net}.mu"), h, 0)?;
    let lv = conv(tape, pv, &format!("{net}.logvar"), h, 0)?;
    let logvar = tape.clamp(lv, LOGVAR_MIN, LOGVAR_MAX);
    Ok(LatentGaussian { mu, logvar })
}

/// Conditional prior over the latent transition given the 8 observed frames.
pub fn prior_forward(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    obs: &GraphInput,
) -> Result<LatentGaussian> {
    if obs.frames() != OBS_LEN {
        return dim_err(format!("prior expects {OBS_LEN} frames, got {}", obs.frames()));
    }
    let h = embed::<rand_chacha::ChaCha8Rng>(tape, pv, config, "prior", config.prior_blocks, obs, None)?;
    heads(tape, pv, "prior", h)
}

/// Approximate posterior given all 20 frames.
///
/// In [`Mode::Train`] dropout acts inside the embedding and Gaussian noise
/// is added to the mean; in [`Mode::Eval`] the pass is deterministic.
pub fn recog_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    full: &GraphInput,
    mode: Mode,
    rng: &mut R,
) -> Result<LatentGaussian> {
    if full.frames() != SEQ_LEN {
        return dim_err(format!("recognition expects {SEQ_LEN} frames, got {}", full.frames()));
    }
    let training = mode == Mode::Train;
    let stochastic = Stochastic { rng: &mut *rng, dropout: config.dropout, training };
    let h = embed(tape, pv, config, "recognition", config.recognition_blocks, full, Some(stochastic))?;
    let mut latent = heads(tape, pv, "recognition", h)?;
    if training && config.posterior_noise > 0.0 {
        let shape = tape.value(latent.mu).shape().to_vec();
        let normal = Normal::new(0.0, config.posterior_noise)
            .map_err(|e| Error::Parameter(format!("posterior noise: {e}")))?;
        let noise = Tensor::from_fn(&shape, |_| normal.sample(rng));
        let noise = tape.leaf(noise);
        latent.mu = tape.add(latent.mu, noise)?;
    }
    Ok(latent)
}

/// Decodes a latent sample and the observed graph into 20 frames of
/// bivariate Gaussian displacement parameters.
///
/// The observed graph and `z` are re-embedded separately, concatenated along
/// channels and fused; the fused embedding is extrapolated from 8 to 20
/// frames, the equally extrapolated latent embedding is added as a skip
/// connection, and a second extrapolator block plus a graph convolution over
/// the extended adjacency refine the result before the 5-channel output.
pub fn decode(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    z: Var,
    obs: &GraphInput,
) -> Result<BivariateGaussianSeq> {
    let zs = tape.value(z).shape().to_vec();
    let expected = [config.latent_length, OBS_LEN, obs.agents()];
    if zs != expected || obs.frames() != OBS_LEN {
        return dim_err(format!(
            "decoder got latent {zs:?} and {} x {} observed graph, expected latent {expected:?}",
            obs.frames(),
            obs.agents()
        ));
    }
    let pad = config.padding();

    let v = tape.leaf(obs.features.clone());
    let o = conv(tape, pv, "decoder.obs", v, pad)?;
    let o = tape.graph_aggregate(o, obs.shared_adjacency())?;
    let o = prelu(tape, pv, "decoder.obs", o)?;

    let ze = conv(tape, pv, "decoder.latent", z, pad)?;
    let ze = prelu(tape, pv, "decoder.latent", ze)?;

    let cat = tape.concat(&[o, ze])?;
    let fused = conv(tape, pv, "decoder.fuse", cat, 0)?;
    let fused = prelu(tape, pv, "decoder.fuse", fused)?;

    let ext = time_extrapolate(tape, pv, "decoder.txp1", fused, SEQ_LEN)?;
    let skip = time_extrapolate(tape, pv, "decoder.txp1", ze, SEQ_LEN)?;
    let h = tape.add(ext, skip)?;
    let h = prelu(tape, pv, "decoder.txp1", h)?;

    let r = time_extrapolate(tape, pv, "decoder.txp2", h, SEQ_LEN)?;
    let r = tape.add(r, h)?;
    let h = prelu(tape, pv, "decoder.txp2", r)?;

    let extended = obs.extended(SEQ_LEN)?;
    let g = graph_conv(tape, pv, "decoder.graph", h, &extended)?;
    let g = prelu(tape, pv, "decoder.graph", g)?;
    let h = tape.add(g, h)?;

    let raw = conv(tape, pv, "decoder.out", h, 0)?;
    Ok(BivariateGaussianSeq { raw })
}
