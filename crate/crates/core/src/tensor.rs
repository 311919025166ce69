//! Labeled dense tensors over `f64`.
//!
//! A tensor is an ordered list of labels plus a row-major data vector; the
//! label order *is* the axis order. Pairwise contraction permutes the shared
//! labels to the inner edge of each operand, matricizes both, and runs one
//! dense matrix product, so every contraction is a GEMM plus data movement.
//! Truncated SVD splits a matricized tensor and absorbs the square root of
//! each kept singular value into both factors.
//!
//! All numeric state is real `f64`; operations reject non-finite results so
//! downstream code never has to re-check.

use nalgebra::DMatrix;
use thiserror::Error;

/// Opaque identity of a tensor index. Two tensors carrying the same id are
/// contractable along that index.
pub type LabelId = u64;

/// One tensor axis: identity plus extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IndexLabel {
    pub id: LabelId,
    pub dim: usize,
}

impl IndexLabel {
    pub fn new(id: LabelId, dim: usize) -> Self {
        IndexLabel { id, dim }
    }
}

/// Cap on the element count of any single allocated result tensor.
///
/// The default of `2^30` elements (8 GiB of `f64`) marks the point where a
/// contraction is treated as out of memory rather than attempted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemLimit {
    pub max_elements: u64,
}

impl Default for MemLimit {
    fn default() -> Self {
        MemLimit {
            max_elements: 1 << 30,
        }
    }
}

impl MemLimit {
    pub const fn new(max_elements: u64) -> Self {
        MemLimit { max_elements }
    }

    /// No cap; useful for small fixed-size work where failure is impossible.
    pub const fn unbounded() -> Self {
        MemLimit {
            max_elements: u64::MAX,
        }
    }
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("label {0} appears more than once on a single tensor")]
    DuplicateLabel(LabelId),
    #[error("label {0} has extent zero")]
    ZeroDim(LabelId),
    #[error("data length {got} does not match the label extents (expected {expected})")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("label {id} has dim {left} on one operand but {right} on the other")]
    DimMismatch {
        id: LabelId,
        left: usize,
        right: usize,
    },
    #[error("{0:?} is not a valid axis permutation")]
    BadPermutation(Vec<usize>),
    #[error("labels {0:?} are not carried by this tensor")]
    UnknownLabels(Vec<LabelId>),
    #[error("result would hold {required} elements, above the memory ceiling of {ceiling}")]
    MemoryCeiling { required: u64, ceiling: u64 },
    #[error("operation produced a non-finite value")]
    NonFinite,
    #[error("singular value decomposition failed to converge")]
    SvdFailed,
    #[error("cannot split a tensor whose entries are all zero")]
    ZeroMatrix,
}

/// Dense tensor with labeled axes and row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    labels: Vec<IndexLabel>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating label uniqueness, extents and finiteness.
    pub fn new(labels: Vec<IndexLabel>, data: Vec<f64>) -> Result<Self, TensorError> {
        let mut expected = 1usize;
        for (i, l) in labels.iter().enumerate() {
            if l.dim == 0 {
                return Err(TensorError::ZeroDim(l.id));
            }
            if labels[..i].iter().any(|p| p.id == l.id) {
                return Err(TensorError::DuplicateLabel(l.id));
            }
            expected = expected
                .checked_mul(l.dim)
                .ok_or(TensorError::MemoryCeiling {
                    required: u64::MAX,
                    ceiling: u64::MAX,
                })?;
        }
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                expected,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite);
        }
        Ok(Tensor { labels, data })
    }

    /// Rank-zero tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            labels: Vec::new(),
            data: vec![value],
        }
    }

    pub fn labels(&self) -> &[IndexLabel] {
        &self.labels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    pub fn elements(&self) -> usize {
        self.data.len()
    }

    pub fn has_label(&self, id: LabelId) -> bool {
        self.labels.iter().any(|l| l.id == id)
    }

    pub fn dim_of(&self, id: LabelId) -> Option<usize> {
        self.labels.iter().find(|l| l.id == id).map(|l| l.dim)
    }

    /// The value of a rank-zero tensor, if this is one.
    pub fn as_scalar(&self) -> Option<f64> {
        if self.labels.is_empty() {
            Some(self.data[0])
        } else {
            None
        }
    }

    /// Multiplies every entry in place.
    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Row-major strides matching the current label order.
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.labels.len()];
        for i in (1..self.labels.len()).rev() {
            s[i - 1] = s[i] * self.labels[i].dim;
        }
        s
    }

    /// Reorders axes; `order[i]` names the current axis that becomes axis `i`.
    pub fn permute(&self, order: &[usize]) -> Result<Tensor, TensorError> {
        let rank = self.labels.len();
        if order.len() != rank {
            return Err(TensorError::BadPermutation(order.to_vec()));
        }
        let mut seen = vec![false; rank];
        for &ax in order {
            if ax >= rank || seen[ax] {
                return Err(TensorError::BadPermutation(order.to_vec()));
            }
            seen[ax] = true;
        }
        if order.iter().enumerate().all(|(i, &ax)| i == ax) {
            return Ok(self.clone());
        }
        let old_strides = self.strides();
        let new_labels: Vec<IndexLabel> = order.iter().map(|&ax| self.labels[ax]).collect();
        let dims: Vec<usize> = new_labels.iter().map(|l| l.dim).collect();
        let strides: Vec<usize> = order.iter().map(|&ax| old_strides[ax]).collect();

        let mut out = vec![0.0; self.data.len()];
        let mut counters = vec![0usize; rank];
        let mut src = 0usize;
        for slot in out.iter_mut() {
            *slot = self.data[src];
            for ax in (0..rank).rev() {
                counters[ax] += 1;
                src += strides[ax];
                if counters[ax] < dims[ax] {
                    break;
                }
                counters[ax] = 0;
                src -= strides[ax] * dims[ax];
            }
        }
        Ok(Tensor {
            labels: new_labels,
            data: out,
        })
    }

    /// Reorders axes so the labels appear in the id order given.
    pub fn permute_to_ids(&self, ids: &[LabelId]) -> Result<Tensor, TensorError> {
        if ids.len() != self.labels.len() {
            return Err(TensorError::UnknownLabels(ids.to_vec()));
        }
        let mut order = Vec::with_capacity(ids.len());
        for &id in ids {
            match self.labels.iter().position(|l| l.id == id) {
                Some(p) => order.push(p),
                None => return Err(TensorError::UnknownLabels(vec![id])),
            }
        }
        self.permute(&order)
    }

    /// Gives the axis `old` a new identity, keeping its extent and position.
    pub fn rename_label(&mut self, old: LabelId, new: LabelId) -> Result<(), TensorError> {
        if old == new {
            return Ok(());
        }
        if self.has_label(new) {
            return Err(TensorError::DuplicateLabel(new));
        }
        match self.labels.iter_mut().find(|l| l.id == old) {
            Some(l) => {
                l.id = new;
                Ok(())
            }
            None => Err(TensorError::UnknownLabels(vec![old])),
        }
    }

    /// Fuses `count` consecutive axes starting at `start` into one axis whose
    /// extent is their product. Row-major layout makes this metadata-only: the
    /// first fused axis varies slowest, the last varies fastest.
    pub fn merge_adjacent(
        &self,
        start: usize,
        count: usize,
        new_id: LabelId,
    ) -> Result<Tensor, TensorError> {
        let rank = self.labels.len();
        if count == 0 || start + count > rank {
            return Err(TensorError::BadPermutation(vec![start, count]));
        }
        let merged_dim: usize = self.labels[start..start + count].iter().map(|l| l.dim).product();
        let mut labels = Vec::with_capacity(rank - count + 1);
        labels.extend_from_slice(&self.labels[..start]);
        labels.push(IndexLabel::new(new_id, merged_dim));
        labels.extend_from_slice(&self.labels[start + count..]);
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].iter().any(|p| p.id == l.id) {
                return Err(TensorError::DuplicateLabel(l.id));
            }
        }
        Ok(Tensor {
            labels,
            data: self.data.clone(),
        })
    }

    /// Matrix view with `row_ids` (in the order given) as the row axes and
    /// the remaining labels, in their current order, as the column axes.
    pub fn matricize(&self, row_ids: &[LabelId]) -> Result<Matricized, TensorError> {
        let mut order = Vec::with_capacity(self.labels.len());
        for (i, &id) in row_ids.iter().enumerate() {
            if row_ids[..i].contains(&id) {
                return Err(TensorError::DuplicateLabel(id));
            }
            match self.labels.iter().position(|l| l.id == id) {
                Some(p) => order.push(p),
                None => return Err(TensorError::UnknownLabels(vec![id])),
            }
        }
        for ax in 0..self.labels.len() {
            if !order.contains(&ax) {
                order.push(ax);
            }
        }
        let p = self.permute(&order)?;
        let split = row_ids.len();
        let row_labels = p.labels[..split].to_vec();
        let col_labels = p.labels[split..].to_vec();
        let rows: usize = row_labels.iter().map(|l| l.dim).product();
        let cols: usize = col_labels.iter().map(|l| l.dim).product();
        Ok(Matricized {
            rows,
            cols,
            row_labels,
            col_labels,
            data: p.data,
        })
    }
}

/// Row-major matrix view of a tensor with its axis bookkeeping retained.
#[derive(Clone, Debug, PartialEq)]
pub struct Matricized {
    pub rows: usize,
    pub cols: usize,
    pub row_labels: Vec<IndexLabel>,
    pub col_labels: Vec<IndexLabel>,
    pub data: Vec<f64>,
}

impl Matricized {
    /// Reinterprets the view as a tensor; the data vector is reused bit for
    /// bit, so `t.matricize(ids)?.to_tensor()` is a pure axis reordering.
    pub fn to_tensor(&self) -> Tensor {
        let mut labels = self.row_labels.clone();
        labels.extend_from_slice(&self.col_labels);
        Tensor {
            labels,
            data: self.data.clone(),
        }
    }
}

/// Contracts all labels shared by `a` and `b` in one dense matrix product.
///
/// Result labels are `a`'s free labels followed by `b`'s free labels, each
/// side keeping its original relative order. Shared labels must agree on
/// extent. A result larger than `limit` is refused before allocation.
pub fn contract_pair(a: &Tensor, b: &Tensor, limit: MemLimit) -> Result<Tensor, TensorError> {
    let shared: Vec<IndexLabel> = a
        .labels
        .iter()
        .filter(|l| b.has_label(l.id))
        .copied()
        .collect();
    for l in &shared {
        let bd = b.dim_of(l.id).expect("shared label present in b");
        if bd != l.dim {
            return Err(TensorError::DimMismatch {
                id: l.id,
                left: l.dim,
                right: bd,
            });
        }
    }
    let k: u128 = shared.iter().map(|l| l.dim as u128).product();
    let m = a.elements() as u128 / k;
    let n = b.elements() as u128 / k;
    let required = m * n;
    if required > limit.max_elements as u128 {
        return Err(TensorError::MemoryCeiling {
            required: required.min(u64::MAX as u128) as u64,
            ceiling: limit.max_elements,
        });
    }

    let free_a: Vec<IndexLabel> = a
        .labels
        .iter()
        .filter(|l| !shared.iter().any(|s| s.id == l.id))
        .copied()
        .collect();
    let free_b: Vec<IndexLabel> = b
        .labels
        .iter()
        .filter(|l| !shared.iter().any(|s| s.id == l.id))
        .copied()
        .collect();

    let a_order: Vec<LabelId> = free_a
        .iter()
        .chain(shared.iter())
        .map(|l| l.id)
        .collect();
    let b_order: Vec<LabelId> = shared
        .iter()
        .chain(free_b.iter())
        .map(|l| l.id)
        .collect();
    let pa = a.permute_to_ids(&a_order)?;
    let pb = b.permute_to_ids(&b_order)?;

    // Row-major (m,k) data read column-major is the transpose, so computing
    // B^T * A^T in nalgebra's column-major world yields A*B laid out
    // row-major without any transposition copies.
    let (m, k, n) = (m as usize, k as usize, n as usize);
    let ta = DMatrix::from_vec(k, m, pa.data);
    let tb = DMatrix::from_vec(n, k, pb.data);
    let tc = &tb * &ta;
    let data = tc.as_slice().to_vec();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite);
    }

    let mut labels = free_a;
    labels.extend_from_slice(&free_b);
    Ok(Tensor { labels, data })
}

/// Split of a matricized tensor with its truncation bookkeeping.
#[derive(Clone, Debug)]
pub struct SvdOutcome {
    /// Row factor carrying the row labels plus the new bond as its last axis.
    pub left: Tensor,
    /// Column factor carrying the new bond as its first axis.
    pub right: Tensor,
    /// The new bond label; its extent equals `kept_rank`.
    pub bond: IndexLabel,
    pub kept_rank: usize,
    /// Sum of discarded squared singular values over the total.
    pub discarded_weight: f64,
}

/// Truncated SVD of `m`.
///
/// Keeps every singular value `s_k` with `s_k >= epsilon * s_0` (ties at the
/// threshold stay), capped at `chi_max` and floored at one. The square root
/// of each kept value is absorbed into both factors, so `left * right`
/// reconstructs `m` up to the discarded weight. `bond_id` names the fresh
/// index joining the factors and must not collide with `m`'s labels.
pub fn svd_truncate(
    m: &Matricized,
    epsilon: f64,
    chi_max: usize,
    bond_id: LabelId,
) -> Result<SvdOutcome, TensorError> {
    assert!(
        (0.0..1.0).contains(&epsilon),
        "epsilon must lie in [0, 1), got {epsilon}"
    );
    assert!(chi_max >= 1, "chi_max must be at least 1");
    if m.row_labels.iter().chain(&m.col_labels).any(|l| l.id == bond_id) {
        return Err(TensorError::DuplicateLabel(bond_id));
    }

    let mat = DMatrix::from_row_slice(m.rows, m.cols, &m.data);
    let svd = mat.svd(true, true);
    let u = svd.u.ok_or(TensorError::SvdFailed)?;
    let v_t = svd.v_t.ok_or(TensorError::SvdFailed)?;
    let sv = svd.singular_values;

    // nalgebra already orders descending; re-sorting keeps that a local
    // guarantee instead of an upstream one.
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).expect("finite singular values"));
    let top = sv[idx[0]];
    if !(top > 0.0) {
        return Err(TensorError::ZeroMatrix);
    }

    let qualifying = idx.iter().take_while(|&&i| sv[i] >= epsilon * top).count();
    let kept = qualifying.min(chi_max).max(1);

    let total: f64 = idx.iter().map(|&i| sv[i] * sv[i]).sum();
    let discarded: f64 = idx[kept..].iter().map(|&i| sv[i] * sv[i]).sum();
    let discarded_weight = discarded / total;

    let mut left_data = vec![0.0; m.rows * kept];
    for (r, &i) in idx[..kept].iter().enumerate() {
        let w = sv[i].sqrt();
        for row in 0..m.rows {
            left_data[row * kept + r] = u[(row, i)] * w;
        }
    }
    let mut right_data = vec![0.0; kept * m.cols];
    for (r, &i) in idx[..kept].iter().enumerate() {
        let w = sv[i].sqrt();
        for col in 0..m.cols {
            right_data[r * m.cols + col] = v_t[(i, col)] * w;
        }
    }
    if left_data.iter().chain(right_data.iter()).any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite);
    }

    let bond = IndexLabel::new(bond_id, kept);
    let mut left_labels = m.row_labels.clone();
    left_labels.push(bond);
    let mut right_labels = vec![bond];
    right_labels.extend_from_slice(&m.col_labels);
    Ok(SvdOutcome {
        left: Tensor {
            labels: left_labels,
            data: left_data,
        },
        right: Tensor {
            labels: right_labels,
            data: right_data,
        },
        bond,
        kept_rank: kept,
        discarded_weight,
    })
}
