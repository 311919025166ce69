//! Contraction schedules for closed grid networks.
//!
//! A plan is an ordered list of pairwise contraction steps over tensor ids,
//! each annotated with the worker meant to run it. Ids `0..h*w` name the grid
//! tensors row-major; step `k` writes id `h*w + k`. Three schedules exist:
//!
//! - `row`: absorb row 0 into row 1 column by column, the merged boundary
//!   into row 2, and so on; the final chain is contracted left to right.
//!   Every step sits on worker 0.
//! - `quadrant`: split the grid into four quadrants at the ceiling midpoint,
//!   sweep each quadrant from its outer edge toward the center on its own
//!   worker, then merge top-left with top-right, bottom-left with
//!   bottom-right, and finally top with bottom. Exactly three merge steps
//!   cross workers regardless of grid size.
//! - `row-bands`: the row schedule split into contiguous horizontal bands,
//!   one band per worker round-robin, band results merged top to bottom; the
//!   number of cross-worker transfers grows with the band count.
//!
//! [`estimate_cost`] replays a plan symbolically over label extents only;
//! [`execute_sequential`] runs it numerically in plan order. Both report the
//! same peak, FLOP and bottleneck accounting, so predictions can be checked
//! against measurements exactly.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::network::ClosedNetwork;
use crate::tensor::{contract_pair, IndexLabel, MemLimit, Tensor, TensorError};

pub type TensorId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanStep {
    pub a: TensorId,
    pub b: TensorId,
    pub out: TensorId,
    pub worker: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanKind {
    Row,
    Quadrant,
    RowBands,
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanKind::Row => write!(f, "row"),
            PlanKind::Quadrant => write!(f, "quadrant"),
            PlanKind::RowBands => write!(f, "row-bands"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub kind: PlanKind,
    pub num_inputs: usize,
    /// Worker that initially holds each grid tensor, indexed by tensor id.
    /// A schedule owns its data layout, so transfer counts are a property of
    /// the plan alone.
    pub home: Vec<usize>,
    pub steps: Vec<PlanStep>,
}

impl Plan {
    /// One line per step: `step <k>: contract <idA> <idB> -> <idC> on worker <w>`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "step {}: contract {} {} -> {} on worker {}\n",
                k, s.a, s.b, s.out, s.worker
            ));
        }
        out
    }

    /// Number of operand transfers a message-passing execution must perform:
    /// tensors consumed on a worker other than the one holding them, which is
    /// the home worker for grid tensors and the producing worker for
    /// intermediates.
    pub fn planned_messages(&self) -> u64 {
        let mut producer: HashMap<TensorId, usize> = HashMap::new();
        for s in &self.steps {
            producer.insert(s.out, s.worker);
        }
        let mut count = 0;
        for s in &self.steps {
            for id in [s.a, s.b] {
                let held_on = match producer.get(&id) {
                    Some(&w) => w,
                    None => self.home[id],
                };
                if held_on != s.worker {
                    count += 1;
                }
            }
        }
        count
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("step {step} references tensor {id}, which is not live")]
    DeadTensor { step: usize, id: TensorId },
    #[error("step {step} writes id {id}, which is already in use")]
    DuplicateOutput { step: usize, id: TensorId },
    #[error("plan leaves {live} live tensors instead of one scalar")]
    NotScalar { live: usize },
    #[error("quadrant split needs both grid dims >= 2, got {0}x{1}")]
    GridTooSmall(usize, usize),
    #[error("band count {bands} is invalid for {rows} rows")]
    BadBands { bands: usize, rows: usize },
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: TensorError,
    },
}

/// Cost accounting for one plan over one network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostReport {
    /// Largest element count held by any single tensor, inputs included.
    pub peak_elements: u64,
    /// One multiply-add per elementary product term: for each step, result
    /// elements times the product of shared extents.
    pub total_flops: u128,
    /// First step whose result element count attains the maximum over steps.
    pub bottleneck_step: usize,
}

/// Sequential row schedule; every step on worker 0.
pub fn plan_row(net: &ClosedNetwork) -> Plan {
    let (h, w) = (net.height(), net.width());
    let mut steps = Vec::with_capacity(h * w);
    let mut next = h * w;
    let id = |r: usize, c: usize| r * w + c;
    let mut cur: Vec<TensorId> = (0..w).map(|c| id(0, c)).collect();
    for r in 1..h {
        for (c, slot) in cur.iter_mut().enumerate() {
            steps.push(PlanStep {
                a: *slot,
                b: id(r, c),
                out: next,
                worker: 0,
            });
            *slot = next;
            next += 1;
        }
    }
    let mut acc = cur[0];
    for &t in &cur[1..] {
        steps.push(PlanStep {
            a: acc,
            b: t,
            out: next,
            worker: 0,
        });
        acc = next;
        next += 1;
    }
    Plan {
        kind: PlanKind::Row,
        num_inputs: h * w,
        home: vec![0; h * w],
        steps,
    }
}

/// Quadrant schedule: four independent sweeps, then three merges.
pub fn plan_quadrant(net: &ClosedNetwork) -> Result<Plan, PlanError> {
    let (h, w) = (net.height(), net.width());
    if h < 2 || w < 2 {
        return Err(PlanError::GridTooSmall(h, w));
    }
    let rh = h.div_ceil(2);
    let cw = w.div_ceil(2);
    let mut steps = Vec::new();
    let mut next = h * w;

    // rows/cols are listed outer edge first so the sweep runs toward the cut.
    let mut sweep = |rows: Vec<usize>, cols: Vec<usize>, worker: usize| -> TensorId {
        let id = |r: usize, c: usize| r * w + c;
        let mut cur: Vec<TensorId> = cols.iter().map(|&c| id(rows[0], c)).collect();
        for &r in &rows[1..] {
            for (i, &c) in cols.iter().enumerate() {
                steps.push(PlanStep {
                    a: cur[i],
                    b: id(r, c),
                    out: next,
                    worker,
                });
                cur[i] = next;
                next += 1;
            }
        }
        let mut acc = cur[0];
        for &t in &cur[1..] {
            steps.push(PlanStep {
                a: acc,
                b: t,
                out: next,
                worker,
            });
            acc = next;
            next += 1;
        }
        acc
    };

    let top: Vec<usize> = (0..rh).collect();
    let bottom_up: Vec<usize> = (rh..h).rev().collect();
    let left: Vec<usize> = (0..cw).collect();
    let right_in: Vec<usize> = (cw..w).rev().collect();

    let tl = sweep(top.clone(), left.clone(), 0);
    let tr = sweep(top, right_in.clone(), 1);
    let bl = sweep(bottom_up.clone(), left, 2);
    let br = sweep(bottom_up, right_in, 3);

    let top_half = next;
    steps.push(PlanStep {
        a: tl,
        b: tr,
        out: top_half,
        worker: 0,
    });
    next += 1;
    let bottom_half = next;
    steps.push(PlanStep {
        a: bl,
        b: br,
        out: bottom_half,
        worker: 2,
    });
    next += 1;
    steps.push(PlanStep {
        a: top_half,
        b: bottom_half,
        out: next,
        worker: 0,
    });
    // Each tile starts on the worker owning its quadrant, so even a quadrant
    // that is a single tile costs the same one transfer at merge time.
    let mut home = vec![0; h * w];
    for (i, slot) in home.iter_mut().enumerate() {
        let (r, c) = (i / w, i % w);
        *slot = match (r < rh, c < cw) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
    }
    Ok(Plan {
        kind: PlanKind::Quadrant,
        num_inputs: h * w,
        home,
        steps,
    })
}

/// Row schedule split into `bands` contiguous horizontal bands, band `b` on
/// worker `b % 4`, band results merged top to bottom.
pub fn plan_row_bands(net: &ClosedNetwork, bands: usize) -> Result<Plan, PlanError> {
    let (h, w) = (net.height(), net.width());
    if bands == 0 || bands > h {
        return Err(PlanError::BadBands { bands, rows: h });
    }
    let mut steps = Vec::new();
    let mut next = h * w;
    let id = |r: usize, c: usize| r * w + c;

    let mut band_results = Vec::with_capacity(bands);
    for b in 0..bands {
        let worker = b % 4;
        let r0 = b * h / bands;
        let r1 = (b + 1) * h / bands;
        let mut cur: Vec<TensorId> = (0..w).map(|c| id(r0, c)).collect();
        for r in r0 + 1..r1 {
            for (c, slot) in cur.iter_mut().enumerate() {
                steps.push(PlanStep {
                    a: *slot,
                    b: id(r, c),
                    out: next,
                    worker,
                });
                *slot = next;
                next += 1;
            }
        }
        let mut acc = cur[0];
        for &t in &cur[1..] {
            steps.push(PlanStep {
                a: acc,
                b: t,
                out: next,
                worker,
            });
            acc = next;
            next += 1;
        }
        band_results.push((acc, worker));
    }

    let (mut acc, _) = band_results[0];
    for &(t, worker) in &band_results[1..] {
        steps.push(PlanStep {
            a: acc,
            b: t,
            out: next,
            worker,
        });
        acc = next;
        next += 1;
    }
    let mut home = vec![0; h * w];
    for b in 0..bands {
        for r in b * h / bands..(b + 1) * h / bands {
            for c in 0..w {
                home[id(r, c)] = b % 4;
            }
        }
    }
    Ok(Plan {
        kind: PlanKind::RowBands,
        num_inputs: h * w,
        home,
        steps,
    })
}

fn result_labels(a: &[IndexLabel], b: &[IndexLabel]) -> (Vec<IndexLabel>, u128) {
    let shared: Vec<IndexLabel> = a
        .iter()
        .filter(|l| b.iter().any(|m| m.id == l.id))
        .copied()
        .collect();
    let shared_prod: u128 = shared.iter().map(|l| l.dim as u128).product();
    let mut out: Vec<IndexLabel> = a
        .iter()
        .filter(|l| !shared.iter().any(|s| s.id == l.id))
        .copied()
        .collect();
    out.extend(b.iter().filter(|l| !shared.iter().any(|s| s.id == l.id)));
    (out, shared_prod)
}

/// Symbolic replay over label extents only: no tensor data is touched.
pub fn estimate_cost(net: &ClosedNetwork, plan: &Plan) -> Result<CostReport, PlanError> {
    let mut live: HashMap<TensorId, Vec<IndexLabel>> = net
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.labels().to_vec()))
        .collect();
    let mut peak: u128 = net.tensors().iter().map(|t| t.elements() as u128).max().unwrap_or(1);
    let mut step_peak: u128 = 0;
    let mut bottleneck = 0usize;
    let mut flops: u128 = 0;
    for (k, s) in plan.steps.iter().enumerate() {
        let a = live
            .remove(&s.a)
            .ok_or(PlanError::DeadTensor { step: k, id: s.a })?;
        let b = live
            .remove(&s.b)
            .ok_or(PlanError::DeadTensor { step: k, id: s.b })?;
        let (out, shared_prod) = result_labels(&a, &b);
        let elements: u128 = out.iter().map(|l| l.dim as u128).product();
        flops += elements * shared_prod;
        if elements > step_peak {
            step_peak = elements;
            bottleneck = k;
        }
        peak = peak.max(elements);
        if live.insert(s.out, out).is_some() {
            return Err(PlanError::DuplicateOutput { step: k, id: s.out });
        }
    }
    let scalar_ok = live.len() == 1 && live.values().next().map(|l| l.is_empty()) == Some(true);
    if !scalar_ok {
        return Err(PlanError::NotScalar { live: live.len() });
    }
    Ok(CostReport {
        peak_elements: u64::try_from(peak).unwrap_or(u64::MAX),
        total_flops: flops,
        bottleneck_step: bottleneck,
    })
}

/// Runs the plan in order on one thread, enforcing the memory ceiling, and
/// measures the same accounting [`estimate_cost`] predicts.
pub fn execute_sequential(
    net: &ClosedNetwork,
    plan: &Plan,
    limit: MemLimit,
) -> Result<(f64, CostReport), PlanError> {
    let mut live: HashMap<TensorId, Tensor> = net
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.clone()))
        .collect();
    let mut peak: u64 = live.values().map(|t| t.elements() as u64).max().unwrap_or(1);
    let mut step_peak: u64 = 0;
    let mut bottleneck = 0usize;
    let mut flops: u128 = 0;
    for (k, s) in plan.steps.iter().enumerate() {
        let a = live
            .remove(&s.a)
            .ok_or(PlanError::DeadTensor { step: k, id: s.a })?;
        let b = live
            .remove(&s.b)
            .ok_or(PlanError::DeadTensor { step: k, id: s.b })?;
        let (_, shared_prod) = result_labels(a.labels(), b.labels());
        let t = contract_pair(&a, &b, limit).map_err(|source| PlanError::Step { step: k, source })?;
        let elements = t.elements() as u64;
        flops += elements as u128 * shared_prod;
        if elements > step_peak {
            step_peak = elements;
            bottleneck = k;
        }
        peak = peak.max(elements);
        if live.insert(s.out, t).is_some() {
            return Err(PlanError::DuplicateOutput { step: k, id: s.out });
        }
    }
    if live.len() != 1 {
        return Err(PlanError::NotScalar { live: live.len() });
    }
    let last = live.into_values().next().expect("one live tensor");
    match last.as_scalar() {
        Some(v) => Ok((
            v,
            CostReport {
                peak_elements: peak,
                total_flops: flops,
                bottleneck_step: bottleneck,
            },
        )),
        None => Err(PlanError::NotScalar { live: 1 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_plan_shape_and_dump_format() {
        let net = ClosedNetwork::all_ones(3, 3, 2);
        let plan = plan_row(&net);
        assert_eq!(plan.steps.len(), 8);
        assert!(plan.steps.iter().all(|s| s.worker == 0));
        let dump = plan.render();
        assert!(dump.starts_with("step 0: contract 0 3 -> 9 on worker 0\n"));
        assert!(dump.ends_with("step 7: contract 15 14 -> 16 on worker 0\n"));
        assert_eq!(plan.planned_messages(), 0);
    }

    #[test]
    fn quadrant_plan_on_two_by_two_is_three_merges() {
        let net = ClosedNetwork::all_ones(2, 2, 2);
        let plan = plan_quadrant(&net).unwrap();
        assert_eq!(
            plan.steps,
            vec![
                PlanStep { a: 0, b: 1, out: 4, worker: 0 },
                PlanStep { a: 2, b: 3, out: 5, worker: 2 },
                PlanStep { a: 4, b: 5, out: 6, worker: 0 },
            ]
        );
        assert_eq!(plan.planned_messages(), 3);
    }

    #[test]
    fn quadrant_plan_rejects_thin_grids() {
        let net = ClosedNetwork::all_ones(1, 4, 2);
        assert!(matches!(
            plan_quadrant(&net),
            Err(PlanError::GridTooSmall(1, 4))
        ));
    }

    #[test]
    fn quadrant_messages_stay_constant_as_the_grid_grows() {
        for l in [2, 3, 4, 5, 6, 7] {
            let net = ClosedNetwork::all_ones(l, l, 2);
            let plan = plan_quadrant(&net).unwrap();
            assert_eq!(plan.planned_messages(), 3, "L={l}");
            assert_eq!(plan.steps.len(), l * l - 1);
        }
    }

    #[test]
    fn band_messages_grow_with_band_count() {
        let net = ClosedNetwork::all_ones(8, 8, 2);
        let mut last = 0;
        for bands in 1..=8 {
            let plan = plan_row_bands(&net, bands).unwrap();
            let msgs = plan.planned_messages();
            assert_eq!(msgs, bands as u64 - 1);
            assert!(bands == 1 || msgs > last);
            last = msgs;
        }
        assert!(matches!(
            plan_row_bands(&net, 9),
            Err(PlanError::BadBands { bands: 9, rows: 8 })
        ));
    }

    #[test]
    fn all_plans_contract_all_ones_to_the_edge_power() {
        // h*(w-1) + w*(h-1) edges, each of extent chi; the scalar is exact in
        // f64 because every partial sum is an integer power.
        for (h, w, chi) in [(4, 4, 2), (4, 4, 3), (3, 5, 2), (5, 3, 2)] {
            let net = ClosedNetwork::all_ones(h, w, chi);
            let edges = (h * (w - 1) + w * (h - 1)) as i32;
            let want = (chi as f64).powi(edges);
            let (row, _) = execute_sequential(&net, &plan_row(&net), MemLimit::default()).unwrap();
            let (quad, _) =
                execute_sequential(&net, &plan_quadrant(&net).unwrap(), MemLimit::default())
                    .unwrap();
            let (banded, _) =
                execute_sequential(&net, &plan_row_bands(&net, h.min(4)).unwrap(), MemLimit::default())
                    .unwrap();
            assert_eq!(row, want, "row {h}x{w} chi={chi}");
            assert_eq!(quad, want, "quadrant {h}x{w} chi={chi}");
            assert_eq!(banded, want, "row-bands {h}x{w} chi={chi}");
        }
    }

    #[test]
    fn row_and_quadrant_agree_on_random_networks() {
        let net = ClosedNetwork::random(4, 4, 2, 7);
        let (row, _) = execute_sequential(&net, &plan_row(&net), MemLimit::default()).unwrap();
        let (quad, _) =
            execute_sequential(&net, &plan_quadrant(&net).unwrap(), MemLimit::default()).unwrap();
        let tol = 1e-10 * row.abs().max(1.0);
        assert!((row - quad).abs() <= tol, "row={row} quad={quad}");
    }

    #[test]
    fn estimate_matches_measured_cost_exactly() {
        let net = ClosedNetwork::random(4, 5, 2, 3);
        for plan in [
            plan_row(&net),
            plan_quadrant(&net).unwrap(),
            plan_row_bands(&net, 3).unwrap(),
        ] {
            let est = estimate_cost(&net, &plan).unwrap();
            let (_, measured) = execute_sequential(&net, &plan, MemLimit::default()).unwrap();
            assert_eq!(est, measured, "{}", plan.kind);
        }
    }

    #[test]
    fn estimate_matches_independent_symbolic_replay() {
        // Replay the plan with a second, deliberately simple implementation:
        // sets of labels in a map, no ordering logic shared with the crate.
        let net = ClosedNetwork::random(5, 4, 2, 11);
        let plan = plan_quadrant(&net).unwrap();
        let mut live: HashMap<TensorId, Vec<IndexLabel>> = net
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| (i, t.labels().to_vec()))
            .collect();
        let mut peak: u128 = live
            .values()
            .map(|ls| ls.iter().map(|l| l.dim as u128).product())
            .max()
            .unwrap();
        for s in &plan.steps {
            let a = live.remove(&s.a).unwrap();
            let b = live.remove(&s.b).unwrap();
            let mut out = Vec::new();
            for l in a.iter().chain(b.iter()) {
                let in_a = a.iter().filter(|m| m.id == l.id).count();
                let in_b = b.iter().filter(|m| m.id == l.id).count();
                if in_a + in_b == 1 {
                    out.push(*l);
                }
            }
            peak = peak.max(out.iter().map(|l| l.dim as u128).product());
            live.insert(s.out, out);
        }
        let est = estimate_cost(&net, &plan).unwrap();
        assert_eq!(est.peak_elements as u128, peak);
    }

    #[test]
    fn quadrant_peak_stays_at_or_below_row_peak() {
        // Single layer chi=2 from L=6 up, and a fused-bond (chi=4) 6x6 case
        // where the gap is strict.
        for l in [6, 7, 8] {
            let net = ClosedNetwork::all_ones(l, l, 2);
            let row = estimate_cost(&net, &plan_row(&net)).unwrap();
            let quad = estimate_cost(&net, &plan_quadrant(&net).unwrap()).unwrap();
            assert!(quad.peak_elements <= row.peak_elements, "L={l}");
        }
        let fused = ClosedNetwork::all_ones(6, 6, 4);
        let row = estimate_cost(&fused, &plan_row(&fused)).unwrap();
        let quad = estimate_cost(&fused, &plan_quadrant(&fused).unwrap()).unwrap();
        assert!(quad.peak_elements < row.peak_elements);
        assert_eq!(row.peak_elements, 4u64.pow(12));
    }

    #[test]
    fn executor_reports_the_offending_step_on_ceiling_breach() {
        let net = ClosedNetwork::all_ones(4, 4, 2);
        let plan = plan_row(&net);
        let est = estimate_cost(&net, &plan).unwrap();
        let limit = MemLimit::new(est.peak_elements - 1);
        match execute_sequential(&net, &plan, limit) {
            Err(PlanError::Step {
                step,
                source: TensorError::MemoryCeiling { .. },
            }) => assert_eq!(step, est.bottleneck_step),
            other => panic!("expected ceiling failure, got {other:?}"),
        }
    }

    #[test]
    fn malformed_plans_are_rejected() {
        let net = ClosedNetwork::all_ones(2, 2, 2);
        let mut plan = plan_row(&net);
        plan.steps[1].a = 0; // already consumed by step 0
        assert!(matches!(
            estimate_cost(&net, &plan),
            Err(PlanError::DeadTensor { step: 1, id: 0 })
        ));
    }
}
