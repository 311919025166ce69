//! PEPS state over a rectangular spin lattice.
//!
//! Each site holds one tensor with up to four bond legs toward its neighbors
//! plus one physical leg of extent two. Site tensors always keep their legs
//! in the canonical order (up, down, left, right, physical), skipping absent
//! directions; every routine that rebuilds a site restores that order, and
//! the checkpoint format relies on it.
//!
//! Physical index 0 is spin up (+1), index 1 is spin down (-1), so the spin
//! operators read `Sx = [[0,1],[1,0]]` and `Sz = [[1,0],[0,-1]]`.
//!
//! Expectation values come from the double-layer construction: bra and ket
//! copies of each site are contracted over the physical leg, optionally
//! through an operator insertion, and the paired bond legs are fused with
//! the bra index slow and the ket index fast. The result is a closed network
//! whose bond extents are the squares of the PEPS bond extents.

use thiserror::Error;

use crate::network::{ClosedNetwork, NetworkError};
use crate::plan::{execute_sequential, plan_row, PlanError};
use crate::rng::SplitMix64;
use crate::tensor::{contract_pair, IndexLabel, LabelId, MemLimit, Tensor, TensorError};

/// Lattice coordinate, row-major from the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SiteCoord {
    pub row: usize,
    pub col: usize,
}

impl SiteCoord {
    pub fn new(row: usize, col: usize) -> Self {
        SiteCoord { row, col }
    }
}

/// Single-site spin operators available as insertions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    Identity,
    Sx,
    Sz,
}

impl Operator {
    /// Row-major 2x2 matrix in the (up, down) physical basis.
    pub fn matrix(self) -> [f64; 4] {
        match self {
            Operator::Identity => [1.0, 0.0, 0.0, 1.0],
            Operator::Sx => [0.0, 1.0, 1.0, 0.0],
            Operator::Sz => [1.0, 0.0, 0.0, -1.0],
        }
    }
}

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("lattice dims must both be at least 2, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("configuration has {got} spins, lattice has {expected}")]
    BadConfigLength { expected: usize, got: usize },
    #[error("spin value {0} is not +1 or -1")]
    BadSpin(i8),
    #[error("site ({row}, {col}) is outside the lattice")]
    OutOfRange { row: usize, col: usize },
    #[error("more than one insertion at site ({row}, {col})")]
    DuplicateInsertion { row: usize, col: usize },
    #[error("site ({row}, {col}) does not carry the canonical legs in order")]
    CanonicalOrder { row: usize, col: usize },
    #[error("site ({row}, {col}) has physical extent {dim}, expected 2")]
    PhysicalDim { row: usize, col: usize, dim: usize },
    #[error("bond between ({row}, {col}) and its neighbor has extents {a} and {b}")]
    BondMismatch { row: usize, col: usize, a: usize, b: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Bond below site `(r, c)`, toward `(r + 1, c)`.
pub(crate) fn vbond_id(width: usize, r: usize, c: usize) -> LabelId {
    3 * (r * width + c) as LabelId
}

/// Bond to the right of site `(r, c)`, toward `(r, c + 1)`.
pub(crate) fn hbond_id(width: usize, r: usize, c: usize) -> LabelId {
    3 * (r * width + c) as LabelId + 1
}

/// Physical leg of site `(r, c)`.
pub(crate) fn phys_id(width: usize, r: usize, c: usize) -> LabelId {
    3 * (r * width + c) as LabelId + 2
}

/// Offset for ephemeral label ids (bra copies, gate legs). Lattice ids are
/// linear in the site index, so anything this large cannot collide.
pub(crate) const SCRATCH_OFFSET: LabelId = 1 << 32;

/// Label ids of site `(r, c)` in canonical leg order.
pub(crate) fn site_label_ids(height: usize, width: usize, r: usize, c: usize) -> Vec<LabelId> {
    let mut ids = Vec::with_capacity(5);
    if r > 0 {
        ids.push(vbond_id(width, r - 1, c));
    }
    if r + 1 < height {
        ids.push(vbond_id(width, r, c));
    }
    if c > 0 {
        ids.push(hbond_id(width, r, c - 1));
    }
    if c + 1 < width {
        ids.push(hbond_id(width, r, c));
    }
    ids.push(phys_id(width, r, c));
    ids
}

/// Nearest-neighbor bonds of a `height x width` grid: horizontal pairs in
/// row-major order, then vertical pairs in row-major order. Sweeps and
/// per-bond reports all follow this order.
pub fn bond_list(height: usize, width: usize) -> Vec<(SiteCoord, SiteCoord)> {
    let mut bonds = Vec::with_capacity(height * (width - 1) + width * (height - 1));
    for r in 0..height {
        for c in 0..width - 1 {
            bonds.push((SiteCoord::new(r, c), SiteCoord::new(r, c + 1)));
        }
    }
    for r in 0..height - 1 {
        for c in 0..width {
            bonds.push((SiteCoord::new(r, c), SiteCoord::new(r + 1, c)));
        }
    }
    bonds
}

/// PEPS over a `height x width` grid of spin-1/2 sites.
#[derive(Clone, Debug)]
pub struct PepsLattice {
    height: usize,
    width: usize,
    sites: Vec<Tensor>,
}

impl PepsLattice {
    /// Product state with every spin along +x: all bonds have extent one and
    /// each amplitude is `2^(-n/2)`.
    pub fn init_uniform(height: usize, width: usize) -> Result<Self, LatticeError> {
        Self::build(height, width, 1, || std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Lattice with every bond of extent `chi` and entries drawn uniformly
    /// from `[-1, 1)`, site by site in row-major order.
    pub fn random(
        height: usize,
        width: usize,
        chi: usize,
        seed: u64,
    ) -> Result<Self, LatticeError> {
        let mut rng = SplitMix64::new(seed);
        Self::build(height, width, chi, move || rng.next_symmetric())
    }

    fn build(
        height: usize,
        width: usize,
        chi: usize,
        mut fill: impl FnMut() -> f64,
    ) -> Result<Self, LatticeError> {
        if height < 2 || width < 2 {
            return Err(LatticeError::TooSmall(height, width));
        }
        let mut sites = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let labels: Vec<IndexLabel> = site_label_ids(height, width, r, c)
                    .into_iter()
                    .map(|id| {
                        let dim = if id == phys_id(width, r, c) { 2 } else { chi };
                        IndexLabel::new(id, dim)
                    })
                    .collect();
                let n: usize = labels.iter().map(|l| l.dim).product();
                let data: Vec<f64> = (0..n).map(|_| fill()).collect();
                sites.push(Tensor::new(labels, data)?);
            }
        }
        Ok(PepsLattice {
            height,
            width,
            sites,
        })
    }

    /// Rebuilds a lattice from site tensors, checking the canonical leg
    /// order, physical extents, and bond extent agreement between neighbors.
    pub fn from_parts(
        height: usize,
        width: usize,
        sites: Vec<Tensor>,
    ) -> Result<Self, LatticeError> {
        if height < 2 || width < 2 {
            return Err(LatticeError::TooSmall(height, width));
        }
        if sites.len() != height * width {
            return Err(LatticeError::BadConfigLength {
                expected: height * width,
                got: sites.len(),
            });
        }
        let lat = PepsLattice {
            height,
            width,
            sites,
        };
        for r in 0..height {
            for c in 0..width {
                let t = lat.site(r, c);
                let ids: Vec<LabelId> = t.labels().iter().map(|l| l.id).collect();
                if ids != site_label_ids(height, width, r, c) {
                    return Err(LatticeError::CanonicalOrder { row: r, col: c });
                }
                let pdim = t.dim_of(phys_id(width, r, c)).unwrap_or(0);
                if pdim != 2 {
                    return Err(LatticeError::PhysicalDim {
                        row: r,
                        col: c,
                        dim: pdim,
                    });
                }
                // Shared bonds: compare against the down and right neighbor.
                if r + 1 < height {
                    let id = vbond_id(width, r, c);
                    let (a, b) = (t.dim_of(id).unwrap(), lat.site(r + 1, c).dim_of(id).unwrap());
                    if a != b {
                        return Err(LatticeError::BondMismatch { row: r, col: c, a, b });
                    }
                }
                if c + 1 < width {
                    let id = hbond_id(width, r, c);
                    let (a, b) = (t.dim_of(id).unwrap(), lat.site(r, c + 1).dim_of(id).unwrap());
                    if a != b {
                        return Err(LatticeError::BondMismatch { row: r, col: c, a, b });
                    }
                }
            }
        }
        Ok(lat)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_sites(&self) -> usize {
        self.height * self.width
    }

    pub fn site(&self, r: usize, c: usize) -> &Tensor {
        assert!(r < self.height && c < self.width, "site ({r}, {c}) out of range");
        &self.sites[r * self.width + c]
    }

    pub fn sites(&self) -> &[Tensor] {
        &self.sites
    }

    /// Replaces a site tensor; the caller must hand it back in canonical leg
    /// order, which is asserted here.
    pub(crate) fn set_site(&mut self, r: usize, c: usize, t: Tensor) {
        let ids: Vec<LabelId> = t.labels().iter().map(|l| l.id).collect();
        assert_eq!(
            ids,
            site_label_ids(self.height, self.width, r, c),
            "site ({r}, {c}) replaced out of canonical order"
        );
        self.sites[r * self.width + c] = t;
    }

    /// Multiplies every site tensor by `factor`.
    pub fn scale_sites(&mut self, factor: f64) {
        for t in &mut self.sites {
            t.scale(factor);
        }
    }

    /// Largest bond extent anywhere on the lattice.
    pub fn max_bond_dim(&self) -> usize {
        let mut chi = 1;
        for (i, t) in self.sites.iter().enumerate() {
            let p = phys_id(self.width, i / self.width, i % self.width);
            for l in t.labels() {
                if l.id != p {
                    chi = chi.max(l.dim);
                }
            }
        }
        chi
    }

    pub(crate) fn canonical_ids(&self, r: usize, c: usize) -> Vec<LabelId> {
        site_label_ids(self.height, self.width, r, c)
    }

    /// Coefficient of one spin configuration, `config` row-major with
    /// entries +1 or -1. Fixes every physical leg and contracts the closed
    /// bond network row by row.
    pub fn amplitude(&self, config: &[i8], limit: MemLimit) -> Result<f64, LatticeError> {
        if config.len() != self.n_sites() {
            return Err(LatticeError::BadConfigLength {
                expected: self.n_sites(),
                got: config.len(),
            });
        }
        let mut fixed = Vec::with_capacity(self.n_sites());
        for (i, (&sigma, t)) in config.iter().zip(&self.sites).enumerate() {
            let basis = match sigma {
                1 => vec![1.0, 0.0],
                -1 => vec![0.0, 1.0],
                other => return Err(LatticeError::BadSpin(other)),
            };
            let p = phys_id(self.width, i / self.width, i % self.width);
            let e = Tensor::new(vec![IndexLabel::new(p, 2)], basis)?;
            fixed.push(contract_pair(t, &e, limit)?);
        }
        let net = ClosedNetwork::new(self.height, self.width, fixed)?;
        let plan = plan_row(&net);
        let (value, _) = execute_sequential(&net, &plan, limit)?;
        Ok(value)
    }

    /// Closed network for `<psi| O |psi>` where `O` is a product of the given
    /// single-site insertions (at most one per site) and identities elsewhere.
    /// Fused bond extents are the squares of the PEPS bond extents; within a
    /// fused index the bra component is the slow digit.
    pub fn build_double_layer(
        &self,
        insertions: &[(SiteCoord, Operator)],
        limit: MemLimit,
    ) -> Result<ClosedNetwork, LatticeError> {
        let mut ops = vec![Operator::Identity; self.n_sites()];
        let mut seen = vec![false; self.n_sites()];
        for &(at, op) in insertions {
            if at.row >= self.height || at.col >= self.width {
                return Err(LatticeError::OutOfRange {
                    row: at.row,
                    col: at.col,
                });
            }
            let i = at.row * self.width + at.col;
            if seen[i] {
                return Err(LatticeError::DuplicateInsertion {
                    row: at.row,
                    col: at.col,
                });
            }
            seen[i] = true;
            ops[i] = op;
        }

        let mut doubled = Vec::with_capacity(self.n_sites());
        for r in 0..self.height {
            for c in 0..self.width {
                doubled.push(self.double_site(r, c, ops[r * self.width + c], limit)?);
            }
        }
        Ok(ClosedNetwork::new(self.height, self.width, doubled)?)
    }

    /// One double-layer tensor: `sum_{p', p} bra[b', p'] O[p', p] ket[b, p]`
    /// with each `(b', b)` pair fused under the ket bond's id.
    fn double_site(
        &self,
        r: usize,
        c: usize,
        op: Operator,
        limit: MemLimit,
    ) -> Result<Tensor, LatticeError> {
        let ket = self.site(r, c);
        let p = phys_id(self.width, r, c);
        let bp = SCRATCH_OFFSET + p;
        let bond_ids: Vec<LabelId> = self
            .canonical_ids(r, c)
            .into_iter()
            .filter(|&id| id != p)
            .collect();

        // mid[b, p'] = sum_p ket[b, p] O[p', p]
        let op_t = Tensor::new(
            vec![IndexLabel::new(bp, 2), IndexLabel::new(p, 2)],
            op.matrix().to_vec(),
        )?;
        let mid = contract_pair(ket, &op_t, limit)?;

        let mut bra = ket.clone();
        for &id in &bond_ids {
            bra.rename_label(id, SCRATCH_OFFSET + id)?;
        }
        bra.rename_label(p, bp)?;

        // Free labels come out bra bonds first, then ket bonds, both in
        // canonical order; interleave them so each pair sits adjacent.
        let d = contract_pair(&bra, &mid, limit)?;
        let mut interleaved = Vec::with_capacity(2 * bond_ids.len());
        for &id in &bond_ids {
            interleaved.push(SCRATCH_OFFSET + id);
            interleaved.push(id);
        }
        let mut fused = d.permute_to_ids(&interleaved)?;
        for (k, &id) in bond_ids.iter().enumerate() {
            // The pair occupies (k, k + 1) after k earlier merges. Reusing the
            // ket id keeps neighbor tensors agreeing on the fused bond name.
            fused = fused.merge_adjacent(k, 2, id)?;
        }
        Ok(fused)
    }
}
