//! Closed rectangular tensor networks.
//!
//! A closed network is a grid of tensors whose labels pair up exactly: every
//! label appears on precisely two tensors, so contracting everything leaves a
//! single scalar. Grids arise from PEPS double layers and from the synthetic
//! generators here.

use std::collections::HashMap;

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::tensor::{IndexLabel, LabelId, Tensor};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("expected {expected} tensors for the grid, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("label {id} appears on {count} tensors; a closed network needs exactly two")]
    UnpairedLabel { id: LabelId, count: usize },
    #[error("label {id} is carried with dims {left} and {right}")]
    DimMismatch {
        id: LabelId,
        left: usize,
        right: usize,
    },
}

/// Rectangular grid of tensors forming a closed (scalar-valued) network.
#[derive(Clone, Debug)]
pub struct ClosedNetwork {
    height: usize,
    width: usize,
    tensors: Vec<Tensor>,
}

impl ClosedNetwork {
    /// Validates the pairing invariant: each label on exactly two tensors,
    /// with matching extents.
    pub fn new(height: usize, width: usize, tensors: Vec<Tensor>) -> Result<Self, NetworkError> {
        if tensors.len() != height * width {
            return Err(NetworkError::WrongCount {
                expected: height * width,
                got: tensors.len(),
            });
        }
        let mut seen: HashMap<LabelId, (usize, usize)> = HashMap::new();
        for t in &tensors {
            for l in t.labels() {
                let e = seen.entry(l.id).or_insert((0, l.dim));
                e.0 += 1;
                if e.1 != l.dim {
                    return Err(NetworkError::DimMismatch {
                        id: l.id,
                        left: e.1,
                        right: l.dim,
                    });
                }
            }
        }
        for (id, (count, _)) in seen {
            if count != 2 {
                return Err(NetworkError::UnpairedLabel { id, count });
            }
        }
        Ok(ClosedNetwork {
            height,
            width,
            tensors,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, row: usize, col: usize) -> &Tensor {
        &self.tensors[row * self.width + col]
    }

    /// Uniform grid with every bond of extent `chi` and every entry `1.0`.
    ///
    /// Full contraction of an `h x w` instance equals `chi` raised to the
    /// number of edges, `h*(w-1) + w*(h-1)`.
    pub fn all_ones(height: usize, width: usize, chi: usize) -> Self {
        Self::generate(height, width, chi, || 1.0)
    }

    /// Grid with entries drawn uniformly from `[-1, 1)`.
    ///
    /// Entries are consumed from [`SplitMix64`] with sites visited row-major
    /// and each site filled in row-major order over its `(up, down, left,
    /// right)` axes, so a seed pins the whole network.
    pub fn random(height: usize, width: usize, chi: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        Self::generate(height, width, chi, move || rng.next_symmetric())
    }

    fn generate(
        height: usize,
        width: usize,
        chi: usize,
        mut fill: impl FnMut() -> f64,
    ) -> Self {
        assert!(height >= 1 && width >= 1 && chi >= 1);
        // Deterministic edge identities: even ids run down, odd ids run right.
        let vid = |r: usize, c: usize| (r * width + c) as LabelId * 2;
        let hid = |r: usize, c: usize| (r * width + c) as LabelId * 2 + 1;
        let mut tensors = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let mut labels = Vec::with_capacity(4);
                if r > 0 {
                    labels.push(IndexLabel::new(vid(r - 1, c), chi));
                }
                if r + 1 < height {
                    labels.push(IndexLabel::new(vid(r, c), chi));
                }
                if c > 0 {
                    labels.push(IndexLabel::new(hid(r, c - 1), chi));
                }
                if c + 1 < width {
                    labels.push(IndexLabel::new(hid(r, c), chi));
                }
                let n: usize = labels.iter().map(|l| l.dim).product();
                let data: Vec<f64> = (0..n).map(|_| fill()).collect();
                tensors.push(Tensor::new(labels, data).expect("generated tensor is valid"));
            }
        }
        ClosedNetwork {
            height,
            width,
            tensors,
        }
    }
}
