//! Per-frame interaction graphs.
//!
//! Edge weights are inverse Euclidean distances between agents. Before
//! graph convolution each frame is replaced by `D^-1/2 (A + I) D^-1/2` with
//! `D` the degree matrix of `A + I`.

use std::rc::Rc;

use crate::diffcore::Tensor;
use crate::error::{dim_err, Result};

/// Agents closer than this (meters) get no edge between them.
pub const COLOCATION_EPS: f64 = 1e-6;

/// One `N x N` weight matrix per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencySeries {
    matrices: Tensor,
    normalized: bool,
}

/// Raw inverse-distance kernel for one frame.
///
/// `a_ij = 1 / |p_i - p_j|` for distinct agents further apart than
/// [`COLOCATION_EPS`], zero otherwise (including the diagonal).
pub fn kernel_adjacency(positions: &[[f64; 2]]) -> Tensor {
    let n = positions.len();
    let mut a = Tensor::zeros(&[n.max(1), n.max(1)]);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let d = dx.hypot(dy);
            let w = if d > COLOCATION_EPS { 1.0 / d } else { 0.0 };
            a.set(&[i, j], w);
            a.set(&[j, i], w);
        }
    }
    a
}

impl AdjacencySeries {
    /// Raw series from per-frame positions (`frames[t][agent]`).
    pub fn from_positions(frames: &[Vec<[f64; 2]>]) -> Result<Self> {
        let Some(first) = frames.first() else {
            return dim_err("adjacency series needs at least one frame");
        };
        let n = first.len();
        if n == 0 || frames.iter().any(|f| f.len() != n) {
            return dim_err("every frame must hold the same nonzero number of agents");
        }
        let mut data = Vec::with_capacity(frames.len() * n * n);
        for f in frames {
            data.extend_from_slice(kernel_adjacency(f).data());
        }
        Ok(Self { matrices: Tensor::new(vec![frames.len(), n, n], data)?, normalized: false })
    }

    /// Wraps a `T x N x N` tensor of raw weights.
    pub fn from_raw(matrices: Tensor) -> Result<Self> {
        let s = matrices.shape();
        if s.len() != 3 || s[1] != s[2] {
            return dim_err(format!("adjacency must be T x N x N, got {s:?}"));
        }
        Ok(Self { matrices, normalized: false })
    }

    pub fn frames(&self) -> usize {
        self.matrices.shape()[0]
    }

    pub fn agents(&self) -> usize {
        self.matrices.shape()[1]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn tensor(&self) -> &Tensor {
        &self.matrices
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.agents();
        &self.matrices.data()[t * n * n..][..n * n]
    }

    /// Symmetric normalization of `A + I` per frame. Idempotent on an
    /// already-normalized series.
    pub fn normalize(&self) -> Self {
        if self.normalized {
            return self.clone();
        }
        let n = self.agents();
        let mut out = self.matrices.clone();
        for chunk in out.data_mut().chunks_mut(n * n) {
            for i in 0..n {
                chunk[i * n + i] += 1.0;
            }
            let inv_sqrt: Vec<f64> = (0..n)
                .map(|i| 1.0 / chunk[i * n..][..n].iter().sum::<f64>().sqrt())
                .collect();
            for i in 0..n {
                for j in 0..n {
                    chunk[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
                }
            }
        }
        Self { matrices: out, normalized: true }
    }

    /// First `len` frames.
    pub fn truncate(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.frames() {
            return dim_err(format!("cannot keep {len} of {} frames", self.frames()));
        }
        let n = self.agents();
        let data = self.matrices.data()[..len * n * n].to_vec();
        Ok(Self { matrices: Tensor::new(vec![len, n, n], data)?, normalized: self.normalized })
    }

    /// Pads to `len` frames by repeating the last frame.
    pub fn extend_with_last(&self, len: usize) -> Result<Self> {
        if len < self.frames() {
            return dim_err(format!("cannot extend {} frames to {len}", self.frames()));
        }
        let last = self.frame(self.frames() - 1).to_vec();
        let mut data = self.matrices.data().to_vec();
        for _ in self.frames()..len {
            data.extend_from_slice(&last);
        }
        let n = self.agents();
        Ok(Self { matrices: Tensor::new(vec![len, n, n], data)?, normalized: self.normalized })
    }

    /// Shared handle for graph convolution on a tape.
    pub fn shared(&self) -> Rc<Tensor> {
        Rc::new(self.matrices.clone())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn two_agents_two_meters() {
        let a = kernel_adjacency(&[[0.0, 0.0], [2.0, 0.0]]);
        assert_eq!(a.data(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn single_agent_is_zero() {
        let a = kernel_adjacency(&[[3.0, 1.0]]);
        assert_eq!(a.data(), &[0.0]);
        let s = AdjacencySeries::from_raw(a.reshape(&[1, 1, 1]).unwrap()).unwrap();
        assert_eq!(s.normalize().tensor().data(), &[1.0]);
    }

    #[test]
    fn right_triangle_by_hand() {
        let a = kernel_adjacency(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(a.at(&[0, 1]), 1.0);
        assert_eq!(a.at(&[0, 2]), 1.0);
        assert!((a.at(&[1, 2]) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn colocated_agents_have_no_edge() {
        let a = kernel_adjacency(&[[1.0, 1.0], [1.0, 1.0 + 1e-9]]);
        assert_eq!(a.data(), &[0.0; 4]);
    }

    #[test]
    fn unit_weight_pair_normalizes_to_half() {
        let a = kernel_adjacency(&[[0.0, 0.0], [1.0, 0.0]]);
        let s = AdjacencySeries::from_raw(a.reshape(&[1, 2, 2]).unwrap()).unwrap().normalize();
        assert!(s.is_normalized());
        for v in s.tensor().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn extend_repeats_last_frame() {
        let frames = vec![vec![[0.0, 0.0], [1.0, 0.0]], vec![[0.0, 0.0], [4.0, 0.0]]];
        let s = AdjacencySeries::from_positions(&frames).unwrap().extend_with_last(5).unwrap();
        assert_eq!(s.frames(), 5);
        assert_eq!(s.frame(4), s.frame(1));
        assert_eq!(s.frame(4)[1], 0.25);
    }

    /// Largest |eigenvalue| of a symmetric matrix by Jacobi rotations.
    fn spectral_radius(m: &[f64], n: usize) -> f64 {
        let mut a = m.to_vec();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p * n + q].powi(2);
                    if a[p * n + q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * a[p * n + q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k * n + p], a[k * n + q]);
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
            if off < 1e-24 {
                break;
            }
        }
        (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max)
    }

    fn positions(max_agents: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec(prop::array::uniform2(-10.0..10.0f64), 1..max_agents)
    }

    proptest! {
        #[test]
        fn normalized_frames_are_symmetric_with_unit_spectral_radius(p in positions(9)) {
            let n = p.len();
            let s = AdjacencySeries::from_positions(&[p]).unwrap().normalize();
            let m = s.frame(0);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((m[i * n + j] - m[j * n + i]).abs() < 1e-12);
                }
            }
            prop_assert!(spectral_radius(m, n) <= 1.0 + 1e-9);
        }

        #[test]
        fn normalization_commutes_with_permutation(p in positions(8), seed in any::<u64>()) {
            let n = p.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut state = seed;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (state >> 33) as usize % (i + 1));
            }
            let permuted: Vec<[f64; 2]> = perm.iter().map(|&k| p[k]).collect();
            let a = AdjacencySeries::from_positions(&[p]).unwrap().normalize();
            let b = AdjacencySeries::from_positions(&[permuted]).unwrap().normalize();
            for i in 0..n {
                for j in 0..n {
                    let lhs = b.frame(0)[i * n + j];
                    let rhs = a.frame(0)[perm[i] * n + perm[j]];
                    prop_assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn kernel_is_homogeneous_of_degree_minus_one(p in positions(7), c in 0.1..10.0f64) {
            let scaled: Vec<[f64; 2]> = p.iter().map(|q| [q[0] * c, q[1] * c]).collect();
            let a = kernel_adjacency(&p);
            let b = kernel_adjacency(&scaled);
            for (x, y) in a.data().iter().zip(b.data()) {
                if *x > 0.0 && *y > 0.0 {
                    prop_assert!((y - x / c).abs() <= 1e-9 * x.abs().max(1.0));
                }
            }
        }
    }
}
