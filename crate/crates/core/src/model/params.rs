use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::config::ModelConfig;
use crate::diffcore::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::{OBS_LEN, SEQ_LEN};

/// The three parameter groups; every entry name starts with one of these.
pub const NETWORKS: [&str; 3] = ["prior", "recognition", "decoder"];

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a new entry. Names are unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Integrity(format!("duplicate parameter {name}")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries belonging to one network (`prior`, `recognition` or `decoder`).
    pub fn group<'a>(&'a self, network: &'a str) -> impl Iterator<Item = (&'a str, &'a Tensor)> + 'a {
        self.iter().filter(move |(k, _)| k.split('.').next() == Some(network))
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let entries = self.entries.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect();
        Self { entries }
    }

    /// `self += alpha * other` entry by entry.
    pub fn axpy(&mut self, alpha: f64, other: &ParamStore) -> Result<()> {
        for (k, v) in &mut self.entries {
            let o = other.entries.get(k).ok_or_else(|| Error::Integrity(format!("missing {k}")))?;
            v.axpy(alpha, o)?;
        }
        Ok(())
    }

    /// Euclidean norm over every entry.
    pub fn global_norm(&self) -> f64 {
        self.entries.values().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.entries.values_mut() {
            v.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Records every entry as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> ParamVars {
        let vars = self.entries.iter().map(|(k, v)| (k.clone(), tape.leaf(v.clone()))).collect();
        ParamVars { vars }
    }
}

/// Total number of scalar parameters.
pub fn count_params(store: &ParamStore) -> usize {
    store.entries.values().map(Tensor::numel).sum()
}

/// Tape handles of a bound [`ParamStore`].
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::Integrity(format!("no parameter named {name}")))
    }

    /// Gradient of every bound parameter, zero where disconnected.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> ParamStore {
        let entries = self.vars.iter().map(|(k, &v)| (k.clone(), grads.wrt(tape, v))).collect();
        ParamStore { entries }
    }
}

/// Shapes of every parameter for `config`, in no particular order.
pub fn param_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let c = config.embed_channels;
    let p = config.input_channels;
    let l = config.latent_length;
    let k = config.kernel_size;
    let mut shapes = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| shapes.push((name, shape));

    for (net, blocks) in [("prior", config.prior_blocks), ("recognition", config.recognition_blocks)] {
        for b in 0..blocks {
            let cin = if b == 0 { p } else { c };
            let reduce = net == "recognition" && b + 1 == blocks;
            let tk = if reduce { config.reduction_kernel() } else { k };
            let pre = format!("{net}.block{b}");
            push(format!("{pre}.gcn.weight"), vec![c, cin]);
            push(format!("{pre}.gcn.bias"), vec![c]);
            push(format!("{pre}.gcn.slope"), vec![1]);
            push(format!("{pre}.tcn.weight"), vec![c, c, tk]);
            push(format!("{pre}.tcn.bias"), vec![c]);
            if cin != c || reduce {
                push(format!("{pre}.res.weight"), vec![c, cin, if reduce { tk } else { 1 }]);
                push(format!("{pre}.res.bias"), vec![c]);
            }
            push(format!("{pre}.slope"), vec![1]);
        }
        for head in ["mu", "logvar"] {
            push(format!("{net}.{head}.weight"), vec![l, c, 1]);
            push(format!("{net}.{head}.bias"), vec![l]);
        }
    }

    let (obs_flat, out_flat) = (c * OBS_LEN, c * SEQ_LEN);
    push("decoder.obs.weight".into(), vec![c, p, k]);
    push("decoder.obs.bias".into(), vec![c]);
    push("decoder.obs.slope".into(), vec![1]);
    push("decoder.latent.weight".into(), vec![c, l, k]);
    push("decoder.latent.bias".into(), vec![c]);
    push("decoder.latent.slope".into(), vec![1]);
    push("decoder.fuse.weight".into(), vec![c, 2 * c, 1]);
    push("decoder.fuse.bias".into(), vec![c]);
    push("decoder.fuse.slope".into(), vec![1]);
    push("decoder.txp1.weight".into(), vec![out_flat, obs_flat]);
    push("decoder.txp1.bias".into(), vec![out_flat]);
    push("decoder.txp1.slope".into(), vec![1]);
    push("decoder.txp2.weight".into(), vec![out_flat, out_flat]);
    push("decoder.txp2.bias".into(), vec![out_flat]);
    push("decoder.txp2.slope".into(), vec![1]);
    push("decoder.graph.weight".into(), vec![c, c]);
    push("decoder.graph.bias".into(), vec![c]);
    push("decoder.graph.slope".into(), vec![1]);
    push("decoder.out.weight".into(), vec![5, c, 1]);
    push("decoder.out.bias".into(), vec![5]);
    shapes
}

/// Fresh parameters: weights uniform in `±sqrt(1 / fan_in)`, biases zero,
/// PReLU slopes 0.25. Deterministic for a given `rng` state.
pub fn init_params<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<ParamStore> {
    config.validate()?;
    let mut shapes = param_shapes(config);
    shapes.sort();
    let mut store = ParamStore::new();
    for (name, shape) in shapes {
        let value = if name.ends_with(".slope") {
            Tensor::full(&shape, 0.25)
        } else if name.ends_with(".bias") {
            Tensor::zeros(&shape)
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let bound = (1.0 / fan_in as f64).sqrt();
            Tensor::from_fn(&shape, |_| rng.random_range(-bound..bound))
        };
        store.insert(name, value)?;
    }
    Ok(store)
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"STGC";

/// Storage precision of a parameter checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// Version 1: float32 payload.
    F32,
    /// Version 2: float64 payload, used when training must resume bit-exactly.
    F64,
}

impl Precision {
    fn version(self) -> u8 {
        match self {
            Precision::F32 => 1,
            Precision::F64 => 2,
        }
    }
}

/// Writes `STGC | version u8 | count u32 | entries`, each entry being
/// `name len u16 | name | rank u8 | dims u32... | values`, little-endian.
pub fn save_params(path: &Path, store: &ParamStore, precision: Precision) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.push(precision.version());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.rank() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            match precision {
                Precision::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
                Precision::F64 => buf.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos + n;
        if end > bytes.len() {
            return Err(Error::Format(format!("{} is truncated", path.display())));
        }
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("{} is not a parameter checkpoint", path.display())));
    }
    let width = match take(1)?[0] {
        1 => 4,
        2 => 8,
        v => return Err(Error::Format(format!("unsupported checkpoint version {v}"))),
    };
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(numel.checked_mul(width).ok_or_else(|| Error::Format("bad dims".into()))?)?;
        let data = raw
            .chunks_exact(width)
            .map(|c| {
                if width == 4 {
                    f32::from_le_bytes(c.try_into().unwrap()) as f64
                } else {
                    f64::from_le_bytes(c.try_into().unwrap())
                }
            })
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("entry {name}: {e}")))?;
        store.insert(name, t).map_err(|e| Error::Format(e.to_string()))?;
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last parameter".into()));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn counting() {
        assert_eq!(count_params(&ParamStore::new()), 0);
        let mut s = ParamStore::new();
        s.insert("decoder.w", Tensor::zeros(&[3, 4])).unwrap();
        s.insert("decoder.b", Tensor::zeros(&[4])).unwrap();
        assert_eq!(count_params(&s), 16);
        assert!(s.insert("decoder.b", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let c = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_bounds_follow_fan_in() {
        let cfg = ModelConfig::default();
        let s = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        // txp2 is 100 x 100, so fan_in = 100 and weights lie in (-0.1, 0.1)
        let w = s.get("decoder.txp2.weight").unwrap();
        assert_eq!(w.shape(), &[100, 100]);
        assert!(w.data().iter().all(|v| v.abs() < 0.1));
        assert!(s.get("decoder.txp2.bias").unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(s.get("prior.block0.slope").unwrap().item(), 0.25);
    }

    #[test]
    fn every_entry_belongs_to_a_network() {
        let s = init_params(&ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let grouped: usize = NETWORKS.iter().map(|n| s.group(n).count()).sum();
        assert_eq!(grouped, s.len());
    }

    #[test]
    fn default_parameter_budget() {
        let count = |l| {
            let cfg = ModelConfig::with_latent_length(l);
            count_params(&init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap())
        };
        let (c10, c20, c30) = (count(10), count(20), count(30));
        assert!((15_000..=35_000).contains(&c20), "{c20}");
        assert!(c10 < c20 && c20 < c30);
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let s = init_params(&ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let p64 = dir.path().join("a.stgc");
        save_params(&p64, &s, Precision::F64).unwrap();
        assert_eq!(load_params(&p64).unwrap(), s);

        let p32 = dir.path().join("b.stgc");
        save_params(&p32, &s, Precision::F32).unwrap();
        let back = load_params(&p32).unwrap();
        for ((_, a), (_, b)) in s.iter().zip(back.iter()) {
            assert!(a.max_abs_diff(b) < 1e-7);
        }
        let bytes = std::fs::read(&p32).unwrap();
        assert_eq!(&bytes[..5], b"STGC\x01");
    }

    #[test]
    fn corrupt_checkpoint_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let s = init_params(&ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let p = dir.path().join("a.stgc");
        save_params(&p, &s, Precision::F32).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_params(&p), Err(Error::Format(_))));
        std::fs::write(&p, b"NOPE").unwrap();
        assert!(matches!(load_params(&p), Err(Error::Format(_))));
    }
}
