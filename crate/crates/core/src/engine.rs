//! Four-worker message-passing plan executor.
//!
//! Workers are plain threads joined by in-process channels; a tensor that is
//! produced on one worker and consumed on another is serialized, sent as one
//! message, and deserialized on arrival, so message and byte counts model a
//! distributed run faithfully. Every step uses the same operands in the same
//! order as the sequential executor, which makes the parallel scalar
//! bitwise-identical to the sequential one for any plan.
//!
//! Grid tensors start on the home worker the plan assigns them; a home
//! worker forwards any tensor consumed elsewhere before running its own
//! steps. Deadlock freedom comes from the plan being a topological order:
//! initial forwards go out first and each worker walks its own step
//! subsequence in plan order, sending every crossing tensor immediately
//! after producing it, so a blocked receive can always be satisfied. The
//! worker count is fixed at four to match the quadrant schedule; plans may
//! simply leave workers idle.

use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::network::ClosedNetwork;
use crate::plan::{estimate_cost, execute_sequential, CostReport, Plan, PlanError, TensorId};
use crate::tensor::{contract_pair, IndexLabel, MemLimit, Tensor, TensorError};

pub const NUM_WORKERS: usize = 4;

/// One tensor in flight, identified by its plan tensor id.
#[derive(Clone, Debug)]
pub struct WorkerMsg {
    pub tensor: TensorId,
    pub from: usize,
    pub to: usize,
    pub payload: Vec<u8>,
}

enum Envelope {
    Tensor(WorkerMsg),
    Abort,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("step {step} on worker {worker} failed: {source}")]
    Step {
        step: usize,
        worker: usize,
        #[source]
        source: TensorError,
    },
    #[error("step {step} names worker {worker}; only {NUM_WORKERS} workers exist")]
    BadWorker { step: usize, worker: usize },
    #[error("plan assigns tensor {tensor} to worker {worker}; only {NUM_WORKERS} workers exist")]
    BadHome { tensor: TensorId, worker: usize },
    #[error("plan lists {got} home workers for {expected} grid tensors")]
    HomeLength { expected: usize, got: usize },
    #[error("malformed tensor payload: {0}")]
    Decode(String),
    #[error("worker {0} stopped because a peer failed")]
    Aborted(usize),
    #[error("worker {0} panicked")]
    WorkerPanic(usize),
}

/// Byte-exact tensor wire format: label count (u32 LE), then per label the
/// id (u64 LE) and dim (u32 LE), then the element count (u64 LE) and the
/// data as f64 LE words. Round-trips preserve every bit.
pub fn serialize_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 12 * t.rank() + 8 + 8 * t.elements());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for l in t.labels() {
        out.extend_from_slice(&l.id.to_le_bytes());
        out.extend_from_slice(&(l.dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(t.elements() as u64).to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn deserialize_tensor(bytes: &[u8]) -> Result<Tensor, EngineError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], EngineError> {
        if *pos + n > bytes.len() {
            return Err(EngineError::Decode(format!(
                "need {} bytes at offset {}, have {}",
                n,
                *pos,
                bytes.len()
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut labels = Vec::with_capacity(rank);
    for _ in 0..rank {
        let id = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let dim = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        labels.push(IndexLabel::new(id, dim));
    }
    let count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let expect: usize = labels.iter().map(|l| l.dim).product();
    if count != expect {
        return Err(EngineError::Decode(format!(
            "element count {count} does not match label extents {expect}"
        )));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
    }
    if pos != bytes.len() {
        return Err(EngineError::Decode(format!(
            "{} trailing bytes after tensor",
            bytes.len() - pos
        )));
    }
    Tensor::new(labels, data).map_err(|e| EngineError::Decode(e.to_string()))
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct WorkerStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub comm_seconds: f64,
    pub local_seconds: f64,
    pub peak_elements: u64,
}

/// Aggregate transport accounting for one parallel execution.
#[derive(Clone, Debug, Serialize)]
pub struct MessageStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub comm_seconds: f64,
    pub local_seconds: f64,
    pub peak_elements: u64,
    pub per_worker: Vec<WorkerStats>,
}

#[derive(Clone, Copy)]
enum Action {
    Contract(usize),
    Send { tensor: TensorId, to: usize },
}

struct WorkerOutcome {
    stats: WorkerStats,
    /// (plan step, result elements) for every step this worker ran.
    step_sizes: Vec<(usize, u64)>,
    flops: u128,
    final_scalar: Option<f64>,
}

struct WorkerCtx<'p> {
    wid: usize,
    plan: &'p Plan,
    limit: MemLimit,
    store: HashMap<TensorId, Tensor>,
    inbox: Receiver<Envelope>,
    peers: Vec<Sender<Envelope>>,
}

impl WorkerCtx<'_> {
    fn run(mut self, script: &[Action], final_out: TensorId) -> Result<WorkerOutcome, EngineError> {
        let mut stats = WorkerStats {
            peak_elements: self
                .store
                .values()
                .map(|t| t.elements() as u64)
                .max()
                .unwrap_or(0),
            ..WorkerStats::default()
        };
        let mut step_sizes = Vec::new();
        let mut flops: u128 = 0;
        for action in script {
            match *action {
                Action::Contract(k) => {
                    let s = self.plan.steps[k];
                    for id in [s.a, s.b] {
                        self.wait_for(id, &mut stats)?;
                    }
                    let a = self.store.remove(&s.a).expect("operand present");
                    let b = self.store.remove(&s.b).expect("operand present");
                    let shared: u128 = a
                        .labels()
                        .iter()
                        .filter(|l| b.has_label(l.id))
                        .map(|l| l.dim as u128)
                        .product();
                    let t0 = Instant::now();
                    let out = contract_pair(&a, &b, self.limit).map_err(|source| {
                        EngineError::Step {
                            step: k,
                            worker: self.wid,
                            source,
                        }
                    })?;
                    stats.local_seconds += t0.elapsed().as_secs_f64();
                    let elements = out.elements() as u64;
                    flops += elements as u128 * shared;
                    stats.peak_elements = stats.peak_elements.max(elements);
                    step_sizes.push((k, elements));
                    self.store.insert(s.out, out);
                }
                Action::Send { tensor, to } => {
                    let t = self.store.remove(&tensor).expect("send follows hold");
                    let t0 = Instant::now();
                    let payload = serialize_tensor(&t);
                    stats.bytes_sent += payload.len() as u64;
                    stats.messages_sent += 1;
                    let msg = WorkerMsg {
                        tensor,
                        from: self.wid,
                        to,
                        payload,
                    };
                    if self.peers[to].send(Envelope::Tensor(msg)).is_err() {
                        return Err(EngineError::Aborted(self.wid));
                    }
                    stats.comm_seconds += t0.elapsed().as_secs_f64();
                }
            }
        }
        let final_scalar = self
            .store
            .get(&final_out)
            .and_then(|t| t.as_scalar());
        Ok(WorkerOutcome {
            stats,
            step_sizes,
            flops,
            final_scalar,
        })
    }

    /// Blocks on the inbox until `id` is in the local store, filing away any
    /// other tensors that arrive first.
    fn wait_for(&mut self, id: TensorId, stats: &mut WorkerStats) -> Result<(), EngineError> {
        while !self.store.contains_key(&id) {
            let t0 = Instant::now();
            match self.inbox.recv() {
                Ok(Envelope::Tensor(msg)) => {
                    let t = deserialize_tensor(&msg.payload)?;
                    stats.peak_elements = stats.peak_elements.max(t.elements() as u64);
                    self.store.insert(msg.tensor, t);
                    stats.comm_seconds += t0.elapsed().as_secs_f64();
                }
                Ok(Envelope::Abort) | Err(_) => return Err(EngineError::Aborted(self.wid)),
            }
        }
        Ok(())
    }
}

/// Runs `plan` on four worker threads and returns the scalar, transport
/// statistics, and the same cost accounting the sequential executor reports.
pub fn execute_parallel(
    net: &ClosedNetwork,
    plan: &Plan,
    limit: MemLimit,
) -> Result<(f64, MessageStats, CostReport), EngineError> {
    estimate_cost(net, plan)?;
    for (k, s) in plan.steps.iter().enumerate() {
        if s.worker >= NUM_WORKERS {
            return Err(EngineError::BadWorker {
                step: k,
                worker: s.worker,
            });
        }
    }
    if plan.steps.is_empty() {
        let (scalar, cost) = execute_sequential(net, plan, limit)?;
        return Ok((
            scalar,
            MessageStats {
                messages_sent: 0,
                bytes_sent: 0,
                comm_seconds: 0.0,
                local_seconds: 0.0,
                peak_elements: cost.peak_elements,
                per_worker: vec![WorkerStats::default(); NUM_WORKERS],
            },
            cost,
        ));
    }

    if plan.home.len() != net.tensors().len() {
        return Err(EngineError::HomeLength {
            expected: net.tensors().len(),
            got: plan.home.len(),
        });
    }
    for (i, &hw) in plan.home.iter().enumerate() {
        if hw >= NUM_WORKERS {
            return Err(EngineError::BadHome {
                tensor: i,
                worker: hw,
            });
        }
    }

    // Who consumes each tensor id; plans are trees so the answer is unique.
    let mut consumer_worker: HashMap<TensorId, usize> = HashMap::new();
    for s in &plan.steps {
        consumer_worker.insert(s.a, s.worker);
        consumer_worker.insert(s.b, s.worker);
    }

    // Home workers forward misplaced grid tensors first, then run their own
    // steps in plan order, forwarding each crossing intermediate on the spot.
    let mut scripts: Vec<Vec<Action>> = vec![Vec::new(); NUM_WORKERS];
    for (i, &hw) in plan.home.iter().enumerate() {
        let cw = *consumer_worker
            .get(&i)
            .expect("closed-network plan consumes every grid tensor");
        if cw != hw {
            scripts[hw].push(Action::Send { tensor: i, to: cw });
        }
    }
    for (k, s) in plan.steps.iter().enumerate() {
        scripts[s.worker].push(Action::Contract(k));
        if let Some(&cw) = consumer_worker.get(&s.out) {
            if cw != s.worker {
                scripts[s.worker].push(Action::Send {
                    tensor: plan.num_inputs + k,
                    to: cw,
                });
            }
        }
    }

    let mut initial: Vec<HashMap<TensorId, Tensor>> = (0..NUM_WORKERS).map(|_| HashMap::new()).collect();
    for (i, t) in net.tensors().iter().enumerate() {
        initial[plan.home[i]].insert(i, t.clone());
    }

    let final_out = plan.num_inputs + plan.steps.len() - 1;
    let final_worker = plan.steps.last().expect("nonempty plan").worker;

    let mut senders: Vec<Sender<Envelope>> = Vec::with_capacity(NUM_WORKERS);
    let mut inboxes: Vec<Option<Receiver<Envelope>>> = Vec::with_capacity(NUM_WORKERS);
    for _ in 0..NUM_WORKERS {
        let (tx, rx) = channel();
        senders.push(tx);
        inboxes.push(Some(rx));
    }
    let (result_tx, result_rx) = channel::<(usize, Result<WorkerOutcome, EngineError>)>();

    let outcomes = std::thread::scope(|scope| {
        for wid in 0..NUM_WORKERS {
            let ctx = WorkerCtx {
                wid,
                plan,
                limit,
                store: std::mem::take(&mut initial[wid]),
                inbox: inboxes[wid].take().expect("inbox handed out once"),
                peers: senders.clone(),
            };
            let script = &scripts[wid];
            let result_tx = result_tx.clone();
            scope.spawn(move || {
                let outcome = ctx.run(script, final_out);
                let _ = result_tx.send((wid, outcome));
            });
        }
        drop(result_tx);

        let mut outcomes: Vec<Option<Result<WorkerOutcome, EngineError>>> =
            (0..NUM_WORKERS).map(|_| None).collect();
        let mut aborted = false;
        for _ in 0..NUM_WORKERS {
            match result_rx.recv() {
                Ok((wid, outcome)) => {
                    if outcome.is_err() && !aborted {
                        aborted = true;
                        for tx in &senders {
                            let _ = tx.send(Envelope::Abort);
                        }
                    }
                    outcomes[wid] = Some(outcome);
                }
                Err(_) => break,
            }
        }
        outcomes
    });

    let mut per_worker = Vec::with_capacity(NUM_WORKERS);
    let mut step_sizes: Vec<(usize, u64)> = Vec::with_capacity(plan.steps.len());
    let mut flops: u128 = 0;
    let mut scalar: Option<f64> = None;
    let mut first_error: Option<EngineError> = None;
    for (wid, slot) in outcomes.into_iter().enumerate() {
        match slot {
            Some(Ok(outcome)) => {
                per_worker.push(outcome.stats);
                step_sizes.extend(outcome.step_sizes);
                flops += outcome.flops;
                if wid == final_worker {
                    scalar = outcome.final_scalar;
                }
            }
            Some(Err(e)) => {
                per_worker.push(WorkerStats::default());
                let trivial = matches!(e, EngineError::Aborted(_));
                match (&first_error, trivial) {
                    (None, _) => first_error = Some(e),
                    (Some(EngineError::Aborted(_)), false) => first_error = Some(e),
                    _ => {}
                }
            }
            None => {
                per_worker.push(WorkerStats::default());
                if first_error.is_none() {
                    first_error = Some(EngineError::WorkerPanic(wid));
                }
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let scalar = scalar.ok_or(EngineError::Plan(PlanError::NotScalar { live: 1 }))?;

    step_sizes.sort_unstable_by_key(|&(k, _)| k);
    let mut peak: u64 = per_worker.iter().map(|w| w.peak_elements).max().unwrap_or(1);
    peak = peak.max(1);
    let mut step_peak = 0u64;
    let mut bottleneck = 0usize;
    for &(k, elements) in &step_sizes {
        if elements > step_peak {
            step_peak = elements;
            bottleneck = k;
        }
    }
    let stats = MessageStats {
        messages_sent: per_worker.iter().map(|w| w.messages_sent).sum(),
        bytes_sent: per_worker.iter().map(|w| w.bytes_sent).sum(),
        comm_seconds: per_worker.iter().map(|w| w.comm_seconds).sum(),
        local_seconds: per_worker.iter().map(|w| w.local_seconds).sum(),
        peak_elements: peak,
        per_worker,
    };
    let cost = CostReport {
        peak_elements: peak,
        total_flops: flops,
        bottleneck_step: bottleneck,
    };
    Ok((scalar, stats, cost))
}
