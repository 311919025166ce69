//! Imaginary-time evolution of a PEPS toward the ground state.
//!
//! One time step of extent `dt = tau / steps` applies a second-order
//! splitting of `exp(-H dt)`: a half-step transverse-field gate on every
//! site, the bond gate on every nearest-neighbor pair, and another
//! half-step field gate, with a global renormalization after each sweep.
//! Bond gates grow the shared bond, so each application is followed by a
//! truncated SVD that caps the bond at `chi_max` and drops relative
//! singular values below `epsilon`.
//!
//! Two-body sweeps visit horizontal bonds row-major and then vertical bonds
//! row-major ([`bond_list`] order). Exact evolution is order-free because
//! the bond terms commute, but truncation is not, so the fixed order keeps
//! runs deterministic.
//!
//! The energy is evaluated every `energy_eval_period` steps and at the last
//! step, appending to a trace of `(step, energy, pre-normalization norm,
//! max bond dim, elapsed seconds)`.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::lattice::{
    bond_list, hbond_id, phys_id, vbond_id, LatticeError, PepsLattice, SiteCoord, SCRATCH_OFFSET,
};
use crate::observables::{self, ObsError, ObsOptions};
use crate::tensor::{contract_pair, svd_truncate, IndexLabel, MemLimit, Tensor, TensorError};

#[derive(Clone, Copy, Debug)]
pub struct IteConfig {
    pub j: f64,
    pub gamma: f64,
    /// Total imaginary time; the step extent is `tau / steps`.
    pub tau: f64,
    pub steps: usize,
    /// Relative singular-value cutoff in `[0, 1)`.
    pub epsilon: f64,
    pub chi_max: usize,
    /// Trace cadence in steps; the final step is always evaluated.
    pub energy_eval_period: usize,
    /// Stop once `|dE / E|` between consecutive evaluations drops below the
    /// threshold; `None` runs all configured steps.
    pub early_stop: Option<f64>,
}

impl IteConfig {
    pub fn validate(&self) -> Result<(), IteError> {
        let mut bad: Vec<&str> = Vec::new();
        if !self.j.is_finite() {
            bad.push("j");
        }
        if !self.gamma.is_finite() {
            bad.push("gamma");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            bad.push("tau");
        }
        if self.steps == 0 {
            bad.push("steps");
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            bad.push("epsilon");
        }
        if self.chi_max == 0 {
            bad.push("chi_max");
        }
        if self.energy_eval_period == 0 {
            bad.push("energy_eval_period");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(IteError::BadConfig(bad.join(", ")))
        }
    }

    pub fn delta_tau(&self) -> f64 {
        self.tau / self.steps as f64
    }
}

/// Trotter gates for one step extent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSet {
    /// Row-major 2x2 half-step field gate
    /// `[[cosh, sinh], [sinh, cosh]](gamma dt / 2)`.
    pub one_body: [f64; 4],
    /// Diagonal of the bond gate in the product basis (uu, ud, du, dd):
    /// `(e^{J dt}, e^{-J dt}, e^{-J dt}, e^{J dt})`.
    pub two_body: [f64; 4],
}

pub fn build_gates(cfg: &IteConfig) -> GateSet {
    let half = cfg.gamma * cfg.delta_tau() / 2.0;
    let jt = cfg.j * cfg.delta_tau();
    GateSet {
        one_body: [half.cosh(), half.sinh(), half.sinh(), half.cosh()],
        two_body: [jt.exp(), (-jt).exp(), (-jt).exp(), jt.exp()],
    }
}

#[derive(Debug, Error)]
pub enum IteError {
    #[error("invalid configuration field(s): {0}")]
    BadConfig(String),
    #[error("sites ({0}, {1}) and ({2}, {3}) are not nearest neighbors")]
    NotAdjacent(usize, usize, usize, usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Obs(#[from] ObsError),
}

/// One point of the energy trace.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub energy: f64,
    /// Norm measured just before the renormalization that closed this step.
    pub norm: f64,
    pub max_chi: usize,
    pub elapsed_s: f64,
}

/// Wall time spent per algorithm phase; sweep normalizations count toward
/// the sweep that triggered them.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct PhaseTimings {
    pub one_body_s: f64,
    pub two_body_s: f64,
    pub expectation_s: f64,
}

pub struct IteOutcome {
    pub lattice: PepsLattice,
    pub trace: Vec<TracePoint>,
    pub phases: PhaseTimings,
}

/// Multiplies the physical leg of one site by a 2x2 gate; bonds are
/// untouched.
pub fn apply_one_body(
    lat: &mut PepsLattice,
    at: SiteCoord,
    gate: &[f64; 4],
    limit: MemLimit,
) -> Result<(), IteError> {
    let (r, c) = (at.row, at.col);
    let p = phys_id(lat.width(), r, c);
    let out = SCRATCH_OFFSET + p;
    let g = Tensor::new(
        vec![IndexLabel::new(out, 2), IndexLabel::new(p, 2)],
        gate.to_vec(),
    )?;
    let mut updated = contract_pair(lat.site(r, c), &g, limit)?;
    updated.rename_label(out, p)?;
    let updated = updated.permute_to_ids(&lat.canonical_ids(r, c))?;
    lat.set_site(r, c, updated);
    Ok(())
}

/// Applies the diagonal bond gate to an adjacent pair, then splits the pair
/// again with a truncated SVD: site `a` legs as rows, site `b` legs as
/// columns, `sqrt(singular value)` absorbed into both factors, and the old
/// bond id reused at the kept rank. Returns the discarded relative weight.
pub fn apply_two_body(
    lat: &mut PepsLattice,
    a: SiteCoord,
    b: SiteCoord,
    gate_diag: &[f64; 4],
    epsilon: f64,
    chi_max: usize,
    limit: MemLimit,
) -> Result<f64, IteError> {
    let w = lat.width();
    for at in [a, b] {
        if at.row >= lat.height() || at.col >= w {
            return Err(IteError::Lattice(LatticeError::OutOfRange {
                row: at.row,
                col: at.col,
            }));
        }
    }
    // Either orientation works; the first site always supplies the rows of
    // the split.
    let bond = if a.row == b.row && a.col + 1 == b.col {
        hbond_id(w, a.row, a.col)
    } else if a.row == b.row && b.col + 1 == a.col {
        hbond_id(w, a.row, b.col)
    } else if a.col == b.col && a.row + 1 == b.row {
        vbond_id(w, a.row, a.col)
    } else if a.col == b.col && b.row + 1 == a.row {
        vbond_id(w, b.row, a.col)
    } else {
        return Err(IteError::NotAdjacent(a.row, a.col, b.row, b.col));
    };
    let (p1, p2) = (phys_id(w, a.row, a.col), phys_id(w, b.row, b.col));
    let (o1, o2) = (SCRATCH_OFFSET + p1, SCRATCH_OFFSET + p2);

    // Four-leg gate tensor, nonzero only where output and input spins agree.
    let mut gdata = vec![0.0; 16];
    for s1 in 0..2 {
        for s2 in 0..2 {
            gdata[((s1 * 2 + s2) * 2 + s1) * 2 + s2] = gate_diag[s1 * 2 + s2];
        }
    }
    let gate = Tensor::new(
        vec![
            IndexLabel::new(o1, 2),
            IndexLabel::new(o2, 2),
            IndexLabel::new(p1, 2),
            IndexLabel::new(p2, 2),
        ],
        gdata,
    )?;

    let theta = contract_pair(lat.site(a.row, a.col), lat.site(b.row, b.col), limit)?;
    let mut theta = contract_pair(&theta, &gate, limit)?;
    theta.rename_label(o1, p1)?;
    theta.rename_label(o2, p2)?;

    let row_ids: Vec<_> = lat
        .canonical_ids(a.row, a.col)
        .into_iter()
        .filter(|&id| id != bond)
        .collect();
    let m = theta.matricize(&row_ids)?;
    let split = svd_truncate(&m, epsilon, chi_max, bond)?;

    let new_a = split.left.permute_to_ids(&lat.canonical_ids(a.row, a.col))?;
    let new_b = split.right.permute_to_ids(&lat.canonical_ids(b.row, b.col))?;
    lat.set_site(a.row, a.col, new_a);
    lat.set_site(b.row, b.col, new_b);
    Ok(split.discarded_weight)
}

/// Rescales the state to unit norm, spreading the factor evenly over all
/// sites, and returns the norm measured before rescaling.
pub fn normalize(lat: &mut PepsLattice, opts: &ObsOptions) -> Result<f64, IteError> {
    let n = observables::norm(lat, opts)?;
    lat.scale_sites(n.powf(-1.0 / (2.0 * lat.n_sites() as f64)));
    Ok(n)
}

/// Runs the configured number of steps from `initial`, tracing the energy.
pub fn ite_run(
    cfg: &IteConfig,
    initial: PepsLattice,
    opts: &ObsOptions,
) -> Result<IteOutcome, IteError> {
    ite_run_observed(cfg, initial, opts, &mut |_| {})
}

/// [`ite_run`] with a callback fired as each trace point lands, so a caller
/// can stream the trace to durable storage and keep the points produced
/// before a failure.
pub fn ite_run_observed(
    cfg: &IteConfig,
    initial: PepsLattice,
    opts: &ObsOptions,
    observer: &mut dyn FnMut(&TracePoint),
) -> Result<IteOutcome, IteError> {
    cfg.validate()?;
    let gates = build_gates(cfg);
    let mut lat = initial;
    let bonds = bond_list(lat.height(), lat.width());
    let sites: Vec<SiteCoord> = (0..lat.height())
        .flat_map(|r| (0..lat.width()).map(move |c| SiteCoord::new(r, c)))
        .collect();

    let started = Instant::now();
    let mut phases = PhaseTimings::default();
    let mut trace = Vec::new();
    let mut last_energy: Option<f64> = None;

    for step in 1..=cfg.steps {
        let t0 = Instant::now();
        for &at in &sites {
            apply_one_body(&mut lat, at, &gates.one_body, opts.limit)?;
        }
        normalize(&mut lat, opts)?;
        phases.one_body_s += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        for &(a, b) in &bonds {
            apply_two_body(&mut lat, a, b, &gates.two_body, cfg.epsilon, cfg.chi_max, opts.limit)?;
        }
        normalize(&mut lat, opts)?;
        phases.two_body_s += t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        for &at in &sites {
            apply_one_body(&mut lat, at, &gates.one_body, opts.limit)?;
        }
        let norm_before = normalize(&mut lat, opts)?;
        phases.one_body_s += t0.elapsed().as_secs_f64();

        if step % cfg.energy_eval_period == 0 || step == cfg.steps {
            let t0 = Instant::now();
            let energy = observables::energy(&lat, cfg.j, cfg.gamma, opts)?;
            phases.expectation_s += t0.elapsed().as_secs_f64();
            let point = TracePoint {
                step,
                energy,
                norm: norm_before,
                max_chi: lat.max_bond_dim(),
                elapsed_s: started.elapsed().as_secs_f64(),
            };
            observer(&point);
            trace.push(point);
            if let (Some(tol), Some(prev)) = (cfg.early_stop, last_energy) {
                if ((energy - prev) / energy.abs().max(f64::MIN_POSITIVE)).abs() < tol {
                    break;
                }
            }
            last_energy = Some(energy);
        }
    }

    Ok(IteOutcome {
        lattice: lat,
        trace,
        phases,
    })
}
