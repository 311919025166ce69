//! Full-system checks, one test per release criterion. Each prints a single
//! PASS or FAIL line, so `cargo test --test acceptance -- --nocapture` reads
//! as a checklist.

use peps_core::ed;
use peps_core::engine::execute_parallel;
use peps_core::ite::{self, IteConfig};
use peps_core::lattice::PepsLattice;
use peps_core::network::ClosedNetwork;
use peps_core::observables::{self, full_report, ObsOptions};
use peps_core::plan::{
    estimate_cost, execute_sequential, plan_quadrant, plan_row, plan_row_bands, PlanKind,
};
use peps_core::rng::SplitMix64;
use peps_core::tensor::{contract_pair, svd_truncate, IndexLabel, MemLimit, Tensor};

const LIMIT: MemLimit = MemLimit::unbounded();

fn opts() -> ObsOptions {
    ObsOptions {
        limit: LIMIT,
        plan: PlanKind::Quadrant,
        parallel: false,
    }
}

fn verdict(n: usize, name: &str, result: Result<(), String>) {
    match &result {
        Ok(()) => println!("ACCEPTANCE {n} ({name}): PASS"),
        Err(e) => println!("ACCEPTANCE {n} ({name}): FAIL: {e}"),
    }
    if let Err(e) = result {
        panic!("criterion {n} ({name}): {e}");
    }
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn evolve(cfg: &IteConfig, h: usize, w: usize) -> Result<ite::IteOutcome, String> {
    let initial = PepsLattice::init_uniform(h, w).map_err(|e| e.to_string())?;
    ite::ite_run(cfg, initial, &opts()).map_err(|e| e.to_string())
}

fn ite_cfg(gamma: f64, j: f64, steps: usize, chi_max: usize) -> IteConfig {
    IteConfig {
        j,
        gamma,
        tau: 3.0,
        steps,
        epsilon: 0.01,
        chi_max,
        // The trace is not under test here; evaluating rarely keeps the
        // final-state assertions identical while cutting the wall time.
        energy_eval_period: 50,
        early_stop: None,
    }
}

#[test]
fn criterion_1_schedule_equivalence() {
    verdict(
        1,
        "row and quadrant schedules agree; engine is bitwise equal",
        (|| {
            for l in [4usize, 6, 8] {
                for seed in 0..10u64 {
                    let net = ClosedNetwork::random(l, l, 2, 31 * seed + l as u64);
                    let row = plan_row(&net);
                    let quad = plan_quadrant(&net).map_err(|e| e.to_string())?;
                    let (vr, _) =
                        execute_sequential(&net, &row, LIMIT).map_err(|e| e.to_string())?;
                    let (vq, _) =
                        execute_sequential(&net, &quad, LIMIT).map_err(|e| e.to_string())?;
                    let scale = vr.abs().max(vq.abs()).max(f64::MIN_POSITIVE);
                    ensure(
                        (vr - vq).abs() / scale <= 1e-10,
                        format!("L={l} seed={seed}: row {vr} vs quadrant {vq}"),
                    )?;
                    for (name, plan) in [("row", &row), ("quadrant", &quad)] {
                        let (vs, _) =
                            execute_sequential(&net, plan, LIMIT).map_err(|e| e.to_string())?;
                        let (vp, _, _) =
                            execute_parallel(&net, plan, LIMIT).map_err(|e| e.to_string())?;
                        ensure(
                            vs.to_bits() == vp.to_bits(),
                            format!("L={l} seed={seed} {name}: workers {vp} differ from {vs}"),
                        )?;
                    }
                }
            }
            Ok(())
        })(),
    );
}

#[test]
fn criterion_2_all_ones_exponents_exact() {
    verdict(
        2,
        "all-ones scalars hit chi^(2L(L-1)) exactly in log2",
        (|| {
            // The row schedule holds full-width strips whose size grows as
            // chi^(2L), 34 GB at L=8 chi=4, so the row cross-check only runs
            // where its predicted peak fits; the quadrant schedule verifies
            // the identity at every point.
            const ROW_BUDGET: u64 = 1 << 25;
            for l in 4usize..=8 {
                for chi in [2usize, 4] {
                    let net = ClosedNetwork::all_ones(l, l, chi);
                    let expected = (2 * l * (l - 1)) as f64 * (chi as f64).log2();
                    let row = plan_row(&net);
                    let quad = plan_quadrant(&net).map_err(|e| e.to_string())?;
                    let row_peak = estimate_cost(&net, &row)
                        .map_err(|e| e.to_string())?
                        .peak_elements;
                    let mut plans = vec![("quadrant", quad)];
                    if row_peak <= ROW_BUDGET {
                        plans.push(("row", row));
                    }
                    for (name, plan) in &plans {
                        let (v, _) =
                            execute_sequential(&net, plan, LIMIT).map_err(|e| e.to_string())?;
                        ensure(
                            v.log2() == expected,
                            format!("L={l} chi={chi} {name}: log2 {} != {expected}", v.log2()),
                        )?;
                    }
                }
            }
            Ok(())
        })(),
    );
}

#[test]
fn criterion_3_message_count_law() {
    verdict(
        3,
        "quadrant transfers constant, banded rows strictly increasing",
        (|| {
            let mut quad = Vec::new();
            let mut bands = Vec::new();
            for l in 4usize..=10 {
                let net = ClosedNetwork::all_ones(l, l, 2);
                quad.push(
                    plan_quadrant(&net)
                        .map_err(|e| e.to_string())?
                        .planned_messages(),
                );
                bands.push(
                    plan_row_bands(&net, l)
                        .map_err(|e| e.to_string())?
                        .planned_messages(),
                );
            }
            ensure(
                quad.iter().all(|&c| c == quad[0]),
                format!("quadrant counts vary: {quad:?}"),
            )?;
            ensure(
                bands.windows(2).all(|w| w[1] > w[0]),
                format!("band counts not strictly increasing over L: {bands:?}"),
            )?;
            let net = ClosedNetwork::all_ones(8, 8, 2);
            let per_bands: Vec<u64> = [2usize, 4, 8]
                .iter()
                .map(|&b| {
                    plan_row_bands(&net, b)
                        .map(|p| p.planned_messages())
                        .map_err(|e| e.to_string())
                })
                .collect::<Result<_, _>>()?;
            ensure(
                per_bands.windows(2).all(|w| w[1] > w[0]),
                format!("band counts not strictly increasing over bands: {per_bands:?}"),
            )
        })(),
    );
}

#[test]
fn criterion_4_quadrant_peak_bounded_by_row_peak() {
    verdict(
        4,
        "predicted quadrant peak at most row peak; measurements match predictions",
        (|| {
            for l in 6usize..=10 {
                let net = ClosedNetwork::all_ones(l, l, 2);
                let row = plan_row(&net);
                let quad = plan_quadrant(&net).map_err(|e| e.to_string())?;
                let pr = estimate_cost(&net, &row).map_err(|e| e.to_string())?;
                let pq = estimate_cost(&net, &quad).map_err(|e| e.to_string())?;
                ensure(
                    pq.peak_elements <= pr.peak_elements,
                    format!(
                        "L={l}: quadrant peak {} exceeds row peak {}",
                        pq.peak_elements, pr.peak_elements
                    ),
                )?;
                let (_, mr) = execute_sequential(&net, &row, LIMIT).map_err(|e| e.to_string())?;
                let (_, mq) = execute_sequential(&net, &quad, LIMIT).map_err(|e| e.to_string())?;
                ensure(
                    mr.peak_elements == pr.peak_elements,
                    format!(
                        "L={l} row: measured {} != predicted {}",
                        mr.peak_elements, pr.peak_elements
                    ),
                )?;
                ensure(
                    mq.peak_elements == pq.peak_elements,
                    format!(
                        "L={l} quadrant: measured {} != predicted {}",
                        mq.peak_elements, pq.peak_elements
                    ),
                )?;
            }
            Ok(())
        })(),
    );
}

#[test]
fn criterion_5_evolution_matches_dense_reference() {
    verdict(
        5,
        "evolved energies within 2% of the dense solver",
        (|| {
            for (h, w) in [(2usize, 2usize), (3, 3)] {
                for gamma in [0.0, 0.5, 1.0, 1.5, 2.0] {
                    let reference = ed::ground_state(h, w, 1.0, gamma)
                        .map_err(|e| e.to_string())?
                        .ground_energy;
                    let out = evolve(&ite_cfg(gamma, 1.0, 200, 2), h, w)?;
                    let energy = out.trace.last().expect("trace nonempty").energy;
                    let rel = ((energy - reference) / reference).abs();
                    ensure(
                        rel <= 0.02,
                        format!(
                            "{h}x{w} gamma={gamma}: evolved {energy} vs reference {reference} (rel {rel:.4})"
                        ),
                    )?;
                }
            }
            Ok(())
        })(),
    );
}

#[test]
fn criterion_6_exact_limits() {
    verdict(
        6,
        "coupling-only and field-only limits reached",
        (|| {
            for l in [2usize, 3, 4] {
                let out = evolve(&ite_cfg(0.0, 1.0, 100, 2), l, l)?;
                let energy = out.trace.last().unwrap().energy;
                let target = -2.0 * (l * (l - 1)) as f64;
                ensure(
                    ((energy - target) / target).abs() <= 1e-3,
                    format!("L={l} coupling-only: {energy} vs {target}"),
                )?;

                let out = evolve(&ite_cfg(1.0, 0.0, 100, 2), l, l)?;
                let energy = out.trace.last().unwrap().energy;
                let target = -((l * l) as f64);
                ensure(
                    ((energy - target) / target).abs() <= 1e-3,
                    format!("L={l} field-only: {energy} vs {target}"),
                )?;
                let (rep, _) =
                    full_report(&out.lattice, 0.0, 1.0, &opts()).map_err(|e| e.to_string())?;
                for (i, &mx) in rep.mx.iter().enumerate() {
                    ensure(
                        (mx - 1.0).abs() <= 1e-6,
                        format!("L={l} field-only site {i}: mx {mx}"),
                    )?;
                }
            }
            Ok(())
        })(),
    );
}

#[test]
fn criterion_7_field_sweep_signature() {
    verdict(
        7,
        "sweep magnetizes along x and loses z correlation as the field grows",
        (|| {
            let gammas: Vec<f64> = (0..=8).map(|k| k as f64 * 0.5).collect();
            let mut mxs = Vec::new();
            let mut czzs = Vec::new();
            for &gamma in &gammas {
                let out = evolve(&ite_cfg(gamma, 1.0, 100, 4), 4, 4)?;
                let (rep, _) =
                    full_report(&out.lattice, 1.0, gamma, &opts()).map_err(|e| e.to_string())?;
                mxs.push(rep.avg_mx);
                czzs.push(rep.paper_czz);
            }
            ensure(
                mxs.windows(2).all(|w| w[1] >= w[0] - 1e-6),
                format!("avg_mx not nondecreasing: {mxs:?}"),
            )?;
            ensure(
                mxs[8] > 0.9,
                format!("avg_mx at the strongest field is only {}", mxs[8]),
            )?;
            ensure(
                czzs.windows(2).all(|w| w[1] <= w[0] + 1e-6),
                format!("paper_czz not nonincreasing: {czzs:?}"),
            )?;
            let peak = czzs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            ensure(
                gammas[peak] <= 1.0,
                format!("largest correlation sits at gamma {}", gammas[peak]),
            )
        })(),
    );
}

#[test]
fn criterion_8_property_suites() {
    verdict(
        8,
        "contraction, truncation, observable, bound, and norm properties",
        (|| {
            contraction_against_triple_loop()?;
            truncation_reconstruction_bound()?;
            observables_against_dense_enumeration()?;
            variational_bound()?;
            norm_stability()
        })(),
    );
}

fn random_tensor(labels: Vec<IndexLabel>, rng: &mut SplitMix64) -> Tensor {
    let n = labels.iter().map(|l| l.dim).product();
    let data = (0..n).map(|_| rng.next_symmetric()).collect();
    Tensor::new(labels, data).expect("consistent shape")
}

fn contraction_against_triple_loop() -> Result<(), String> {
    let mut rng = SplitMix64::new(99);
    let (li, lj, lk, lm) = (
        IndexLabel::new(1, 3),
        IndexLabel::new(2, 4),
        IndexLabel::new(3, 5),
        IndexLabel::new(4, 2),
    );
    // Two shared labels (j, m), two free (i, k); the oracle sums products
    // directly from index arithmetic with no matrix machinery.
    let a = random_tensor(vec![li, lj, lm], &mut rng);
    let b = random_tensor(vec![lj, lk, lm], &mut rng);
    let c = contract_pair(&a, &b, LIMIT).map_err(|e| e.to_string())?;
    ensure(
        c.labels().iter().map(|l| l.id).collect::<Vec<_>>() == vec![1, 3],
        format!("free labels wrong: {:?}", c.labels()),
    )?;
    for i in 0..3 {
        for k in 0..5 {
            let mut want = 0.0;
            for j in 0..4 {
                for m in 0..2 {
                    want += a.data()[(i * 4 + j) * 2 + m] * b.data()[(j * 5 + k) * 2 + m];
                }
            }
            let got = c.data()[i * 5 + k];
            ensure(
                (got - want).abs() <= 1e-12,
                format!("element ({i},{k}): {got} vs {want}"),
            )?;
        }
    }
    Ok(())
}

fn truncation_reconstruction_bound() -> Result<(), String> {
    let mut rng = SplitMix64::new(7);
    let rows = IndexLabel::new(10, 8);
    let cols = IndexLabel::new(11, 6);
    let t = random_tensor(vec![rows, cols], &mut rng);
    let m = t.matricize(&[10]).map_err(|e| e.to_string())?;
    let total: f64 = t.data().iter().map(|x| x * x).sum();
    for chi_max in [6usize, 3, 1] {
        let svd = svd_truncate(&m, 0.0, chi_max, 77).map_err(|e| e.to_string())?;
        let back = contract_pair(&svd.left, &svd.right, LIMIT).map_err(|e| e.to_string())?;
        let back = back.permute_to_ids(&[10, 11]).map_err(|e| e.to_string())?;
        let err2: f64 = back
            .data()
            .iter()
            .zip(t.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        ensure(
            (err2 - svd.discarded_weight * total).abs() <= 1e-8 * total,
            format!(
                "chi_max={chi_max}: reconstruction error {err2:.3e} vs discarded {:.3e}",
                svd.discarded_weight * total
            ),
        )?;
        ensure(
            svd.kept_rank <= chi_max,
            format!("kept {} over cap {chi_max}", svd.kept_rank),
        )?;
    }
    Ok(())
}

fn observables_against_dense_enumeration() -> Result<(), String> {
    for (h, w, seed) in [(2usize, 2usize, 5u64), (2, 3, 6), (3, 3, 7)] {
        let lat = PepsLattice::random(h, w, 2, seed).map_err(|e| e.to_string())?;
        let n = h * w;
        // Bit k of the basis index is site k row-major, set meaning spin
        // down, matching the dense solver's convention.
        let mut psi = vec![0.0; 1 << n];
        let mut config = vec![0i8; n];
        for (s, amp) in psi.iter_mut().enumerate() {
            for (k, c) in config.iter_mut().enumerate() {
                *c = if (s >> k) & 1 == 0 { 1 } else { -1 };
            }
            *amp = lat.amplitude(&config, LIMIT).map_err(|e| e.to_string())?;
        }
        let dense = ed::ed_observables(h, w, 1.0, 0.7, &psi).map_err(|e| e.to_string())?;
        let (rep, _) = full_report(&lat, 1.0, 0.7, &opts()).map_err(|e| e.to_string())?;
        let scale = dense.energy_total.abs().max(1.0);
        ensure(
            (rep.energy_total - dense.energy_total).abs() <= 1e-8 * scale,
            format!(
                "{h}x{w}: energy {} vs dense {}",
                rep.energy_total, dense.energy_total
            ),
        )?;
        for i in 0..n {
            ensure(
                (rep.mx[i] - dense.mx[i]).abs() <= 1e-8,
                format!("{h}x{w} site {i}: mx {} vs {}", rep.mx[i], dense.mx[i]),
            )?;
            ensure(
                (rep.mz[i] - dense.mz[i]).abs() <= 1e-8,
                format!("{h}x{w} site {i}: mz {} vs {}", rep.mz[i], dense.mz[i]),
            )?;
        }
        for (k, (a, b)) in rep.czz_nn.iter().zip(&dense.czz_nn).enumerate() {
            ensure(
                (a - b).abs() <= 1e-8,
                format!("{h}x{w} bond {k}: czz {a} vs {b}"),
            )?;
        }
    }
    Ok(())
}

fn variational_bound() -> Result<(), String> {
    for (h, w, seed) in [(2usize, 2usize, 21u64), (2, 3, 22), (3, 3, 23)] {
        for gamma in [0.3, 1.0] {
            let lat = PepsLattice::random(h, w, 2, seed).map_err(|e| e.to_string())?;
            let (rep, _) = full_report(&lat, 1.0, gamma, &opts()).map_err(|e| e.to_string())?;
            let ground = ed::ground_state(h, w, 1.0, gamma)
                .map_err(|e| e.to_string())?
                .ground_energy;
            ensure(
                rep.energy_total >= ground - 1e-9,
                format!(
                    "{h}x{w} gamma={gamma}: state energy {} below ground {ground}",
                    rep.energy_total
                ),
            )?;
        }
    }
    Ok(())
}

fn norm_stability() -> Result<(), String> {
    for seed in 40u64..44 {
        let mut lat = PepsLattice::random(3, 3, 2, seed).map_err(|e| e.to_string())?;
        ite::normalize(&mut lat, &opts()).map_err(|e| e.to_string())?;
        let n = observables::norm(&lat, &opts()).map_err(|e| e.to_string())?;
        ensure(
            (n - 1.0).abs() <= 1e-8,
            format!("seed {seed}: norm {n} after normalization"),
        )?;
    }
    let out = evolve(&ite_cfg(1.0, 1.0, 10, 2), 3, 3)?;
    let n = observables::norm(&out.lattice, &opts()).map_err(|e| e.to_string())?;
    ensure(
        (n - 1.0).abs() <= 1e-8,
        format!("evolved state norm {n} drifted"),
    )
}

#[test]
fn criterion_9_expectation_phase_dominates() {
    verdict(
        9,
        "expectation evaluation outweighs operator application",
        (|| {
            for l in [5usize, 6] {
                let cfg = IteConfig {
                    j: 1.0,
                    gamma: 1.0,
                    tau: 0.6,
                    steps: 6,
                    epsilon: 0.01,
                    chi_max: 2,
                    energy_eval_period: 2,
                    early_stop: None,
                };
                let out = evolve(&cfg, l, l)?;
                let operators = out.phases.one_body_s + out.phases.two_body_s;
                ensure(
                    out.phases.expectation_s > operators,
                    format!(
                        "L={l}: expectation {:.3}s vs operators {:.3}s",
                        out.phases.expectation_s, operators
                    ),
                )?;
            }
            Ok(())
        })(),
    );
}
