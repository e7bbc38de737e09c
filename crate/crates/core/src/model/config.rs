use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::{OBS_LEN, SEQ_LEN};

/// Architecture hyperparameters shared by the three networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Per-node input features (x and y displacement).
    pub input_channels: usize,
    /// Embedding width of every graph and temporal layer.
    pub embed_channels: usize,
    /// Channel length of the latent transition tensor.
    pub latent_length: usize,
    /// GCN+TCN blocks in the conditional prior.
    pub prior_blocks: usize,
    /// GCN+TCN blocks in the recognition network.
    pub recognition_blocks: usize,
    /// Temporal kernel length of every TCN layer except the recognition reduction.
    pub kernel_size: usize,
    /// Dropout inside the recognition embedding during training.
    pub dropout: f64,
    /// Std of the Gaussian noise added to the recognition mean during training.
    pub posterior_noise: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 2,
            embed_channels: 5,
            latent_length: 20,
            prior_blocks: 3,
            recognition_blocks: 2,
            kernel_size: 3,
            dropout: 0.1,
            posterior_noise: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn with_latent_length(latent_length: usize) -> Self {
        Self { latent_length, ..Self::default() }
    }

    /// Kernel of the final recognition TCN that maps 20 frames onto the 8-frame latent grid.
    pub fn reduction_kernel(&self) -> usize {
        SEQ_LEN - OBS_LEN + 1
    }

    pub fn padding(&self) -> usize {
        self.kernel_size / 2
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_channels", self.input_channels),
            ("embed_channels", self.embed_channels),
            ("latent_length", self.latent_length),
            ("prior_blocks", self.prior_blocks),
            ("recognition_blocks", self.recognition_blocks),
            ("kernel_size", self.kernel_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config("kernel_size must be odd to preserve length".into()));
        }
        if self.prior_blocks <= self.recognition_blocks {
            return Err(Error::Config(format!(
                "prior needs more blocks than recognition ({} <= {})",
                self.prior_blocks, self.recognition_blocks
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.posterior_noise >= 0.0) {
            return Err(Error::Config("posterior_noise must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("input_channels", self.input_channels);
        kv.set("embed_channels", self.embed_channels);
        kv.set("latent_length", self.latent_length);
        kv.set("prior_blocks", self.prior_blocks);
        kv.set("recognition_blocks", self.recognition_blocks);
        kv.set("kernel_size", self.kernel_size);
        kv.set("dropout", self.dropout);
        kv.set("posterior_noise", self.posterior_noise);
    }

    /// Reads the keys written by [`ModelConfig::to_kv`]; absent keys keep defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            input_channels: kv.get("input_channels")?.unwrap_or(d.input_channels),
            embed_channels: kv.get("embed_channels")?.unwrap_or(d.embed_channels),
            latent_length: kv.get("latent_length")?.unwrap_or(d.latent_length),
            prior_blocks: kv.get("prior_blocks")?.unwrap_or(d.prior_blocks),
            recognition_blocks: kv.get("recognition_blocks")?.unwrap_or(d.recognition_blocks),
            kernel_size: kv.get("kernel_size")?.unwrap_or(d.kernel_size),
            dropout: kv.get("dropout")?.unwrap_or(d.dropout),
            posterior_noise: kv.get("posterior_noise")?.unwrap_or(d.posterior_noise),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
