//! The three CVAE networks over a spatio-temporal pedestrian graph.
//!
//! * conditional prior `p(z | G[0..8])`: 3 GCN+TCN blocks, deterministic;
//! * recognition `q(z | G[0..20])`: 2 GCN+TCN blocks, dropout and output
//!   noise while training;
//! * decoder `p(G | z, G[0..8])`: cascade fusion and two time-extrapolator
//!   blocks producing 20 frames of bivariate Gaussians.
//!
//! The latent `z` is an `L x 8 x N` tensor with one column per agent, so the
//! same parameters serve any crowd size and every network is equivariant
//! under agent permutations.

mod config;
mod networks;
mod params;

use std::path::{Path, PathBuf};
use std::rc::Rc;

pub use config::ModelConfig;
pub use networks::{decode, prior_forward, recog_forward};
pub use params::{
    count_params, init_params, load_params, param_shapes, save_params, ParamStore, ParamVars, Precision,
    CHECKPOINT_MAGIC, NETWORKS,
};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};
use crate::kv::KeyValues;
use crate::stgraph::AdjacencySeries;
use crate::trajdata::{to_displacements, SequenceWindow};
use crate::OBS_LEN;

/// Training or inference behaviour of stochastic layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Node features (`P x T x N` displacements) with their normalized adjacency.
#[derive(Clone, Debug)]
pub struct GraphInput {
    pub features: Tensor,
    adjacency: AdjacencySeries,
    shared: Rc<Tensor>,
}

impl GraphInput {
    pub fn new(features: Tensor, adjacency: AdjacencySeries) -> Result<Self> {
        let s = features.shape();
        if s.len() != 3 || s[1] != adjacency.frames() || s[2] != adjacency.agents() {
            return dim_err(format!(
                "features {s:?} vs adjacency of {} frames x {} agents",
                adjacency.frames(),
                adjacency.agents()
            ));
        }
        let adjacency = adjacency.normalize();
        let shared = adjacency.shared();
        Ok(Self { features, adjacency, shared })
    }

    /// Graph over every frame of `window`.
    pub fn from_window(window: &SequenceWindow) -> Result<Self> {
        if !window.positions.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::Parameter("window has missing positions".into()));
        }
        let features = to_displacements(window).values;
        let adjacency = AdjacencySeries::from_positions(&window.frames_in(0..window.frames()))?;
        Self::new(features, adjacency)
    }

    /// Graph over the observed frames of `window` only.
    pub fn observed(window: &SequenceWindow) -> Result<Self> {
        if window.frames() < OBS_LEN {
            return dim_err(format!("window has {} frames, need {OBS_LEN}", window.frames()));
        }
        Self::from_window(&window.prefix(OBS_LEN))
    }

    pub fn frames(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn agents(&self) -> usize {
        self.features.shape()[2]
    }

    pub fn adjacency(&self) -> &AdjacencySeries {
        &self.adjacency
    }

    pub(crate) fn shared_adjacency(&self) -> Rc<Tensor> {
        Rc::clone(&self.shared)
    }

    /// Same graph with the adjacency padded to `len` frames by repeating the
    /// last one; features are left as they are.
    pub(crate) fn extended(&self, len: usize) -> Result<Self> {
        let adjacency = self.adjacency.extend_with_last(len)?;
        let shared = adjacency.shared();
        Ok(Self { features: self.features.clone(), adjacency, shared })
    }
}

/// Diagonal Gaussian over the latent transition; `mu` and `logvar` are
/// `L x 8 x N` values on a tape, `logvar` already clamped.
#[derive(Clone, Copy, Debug)]
pub struct LatentGaussian {
    pub mu: Var,
    pub logvar: Var,
}

/// Raw decoder output, `5 x 20 x N`, channels `(mu_x, mu_y, s_x, s_y, r)`.
#[derive(Clone, Copy, Debug)]
pub struct BivariateGaussianSeq {
    pub raw: Var,
}

/// Constrained per-frame, per-agent parameters, each `T x N` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BivariateParams {
    pub frames: usize,
    pub agents: usize,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub rho: Vec<f64>,
}

impl BivariateParams {
    /// `sigma = exp(s)`, `rho = tanh(r)`.
    pub fn from_raw(raw: &Tensor) -> Result<Self> {
        let s = raw.shape();
        if s.len() != 3 || s[0] != 5 {
            return dim_err(format!("bivariate output must be 5 x T x N, got {s:?}"));
        }
        let plane = s[1] * s[2];
        let ch = |c: usize| &raw.data()[c * plane..][..plane];
        Ok(Self {
            frames: s[1],
            agents: s[2],
            mu_x: ch(0).to_vec(),
            mu_y: ch(1).to_vec(),
            sigma_x: ch(2).iter().map(|v| v.exp()).collect(),
            sigma_y: ch(3).iter().map(|v| v.exp()).collect(),
            rho: ch(4).iter().map(|v| v.tanh()).collect(),
        })
    }
}

/// Configuration plus parameters; the unit that is trained, saved and evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct CvaeModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl CvaeModel {
    pub fn new<R: rand::Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let params = init_params(&config, rng)?;
        Ok(Self { config, params })
    }

    pub fn param_count(&self) -> usize {
        count_params(&self.params)
    }

    /// Prior mean and log-variance for an observed graph, as plain tensors.
    pub fn prior(&self, obs: &GraphInput) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let pv = self.params.bind(&mut tape);
        let p = prior_forward(&mut tape, &pv, &self.config, obs)?;
        Ok((tape.value(p.mu).clone(), tape.value(p.logvar).clone()))
    }

    /// Decoder output for a given latent sample.
    pub fn decode_raw(&self, z: &Tensor, obs: &GraphInput) -> Result<Tensor> {
        let mut tape = Tape::new();
        let pv = self.params.bind(&mut tape);
        let z = tape.leaf(z.clone());
        let out = decode(&mut tape, &pv, &self.config, z, obs)?;
        Ok(tape.value(out.raw).clone())
    }

    /// Path of the plain-text sidecar that accompanies a checkpoint.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    /// Writes the parameters and a sidecar holding the configuration plus `extra` keys.
    pub fn save(&self, path: &Path, precision: Precision, extra: &KeyValues) -> Result<()> {
        save_params(path, &self.params, precision)?;
        let mut kv = extra.clone();
        self.config.to_kv(&mut kv);
        kv.set("param_count", self.param_count());
        kv.write(&Self::sidecar_path(path))
    }

    /// Reads a checkpoint and its sidecar, checking every expected shape.
    pub fn load(path: &Path) -> Result<(Self, KeyValues)> {
        let params = load_params(path)?;
        let meta_path = Self::sidecar_path(path);
        let kv = KeyValues::read(&meta_path).map_err(|e| match e {
            Error::Io(io) => Error::Format(format!("missing sidecar {}: {io}", meta_path.display())),
            other => other,
        })?;
        let config = ModelConfig::from_kv(&kv)?;
        let expected = param_shapes(&config);
        if expected.len() != params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} entries, config expects {}",
                params.len(),
                expected.len()
            )));
        }
        for (name, shape) in expected {
            match params.get(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                _ => return Err(Error::Format(format!("checkpoint entry {name} missing or misshapen"))),
            }
        }
        Ok((Self { config, params }, kv))
    }
}
