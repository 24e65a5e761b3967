//! Deterministic message passing between logical ranks.
//!
//! Algorithms are written SPMD-style: one closure runs per logical rank and
//! calls collectives through its [`RankCtx`]. Two execution modes share the
//! same observable behaviour:
//!
//! * `Sequential` — ranks take turns in rank order; a rank runs until its next
//!   collective, then hands control to the next rank (round-robin).
//! * `Threaded` — one free-running thread per rank, with collectives acting as
//!   barriers.
//!
//! Every collective result is a pure function of the rank-indexed inputs, so
//! both modes produce identical results; tests pin that contract. Collectives
//! must be invoked by every rank exactly once per epoch — mismatched
//! participation, bad routes, and bad broadcast roots poison the ensemble and
//! panic on all ranks rather than deadlock.

use std::any::{Any, TypeId};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::{Condvar, Mutex};

/// How rank programs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Single runnable rank at a time, visited in rank order.
    Sequential,
    /// One thread per rank; collectives synchronize.
    Threaded,
}

impl std::str::FromStr for ExecMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sequential" => Ok(ExecMode::Sequential),
            "threaded" => Ok(ExecMode::Threaded),
            other => Err(format!(
                "unknown exec mode `{other}` (expected `sequential` or `threaded`)"
            )),
        }
    }
}

/// A fixed-size group of logical ranks sharing a collective context.
pub struct RankEnsemble {
    np: usize,
    mode: ExecMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpKind {
    ExscanSum,
    AllGatherV,
    Broadcast,
    Route,
}

/// Shared collective state: one slot reused across epochs.
struct Slot {
    /// Completed-collective count.
    epoch: u64,
    arrived: usize,
    op: Option<(OpKind, TypeId)>,
    inputs: Vec<Option<Box<dyn Any + Send>>>,
    outputs: Vec<Option<Box<dyn Any + Send>>>,
    /// Sequential mode: the rank currently allowed to run.
    turn: usize,
    finished: Vec<bool>,
    poison: Option<String>,
}

struct Shared {
    np: usize,
    mode: ExecMode,
    slot: Mutex<Slot>,
    cv: Condvar,
}

impl Shared {
    fn new(np: usize, mode: ExecMode) -> Self {
        Shared {
            np,
            mode,
            slot: Mutex::new(Slot {
                epoch: 0,
                arrived: 0,
                op: None,
                inputs: (0..np).map(|_| None).collect(),
                outputs: (0..np).map(|_| None).collect(),
                turn: 0,
                finished: vec![false; np],
                poison: None,
            }),
            cv: Condvar::new(),
        }
    }

    /// Record the first failure, wake everyone, and panic here.
    fn poison(&self, slot: &mut Slot, msg: String) -> ! {
        if slot.poison.is_none() {
            slot.poison = Some(msg.clone());
        }
        let msg = slot.poison.clone().unwrap();
        self.cv.notify_all();
        panic!("{msg}");
    }
}

/// Per-rank handle passed to SPMD closures.
pub struct RankCtx<'a> {
    rank: usize,
    shared: &'a Shared,
}

impl RankCtx<'_> {
    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn np(&self) -> usize {
        self.shared.np
    }

    /// Exclusive prefix sum: rank i receives the sum of ranks 0..i's values
    /// (rank 0 receives 0.0). Summation runs in rank order.
    pub fn exscan_sum(&mut self, value: f64) -> f64 {
        self.collective(OpKind::ExscanSum, value, |inputs: Vec<f64>| {
            let mut acc = 0.0;
            inputs
                .into_iter()
                .map(|v| {
                    let before = acc;
                    acc += v;
                    before
                })
                .collect()
        })
    }

    /// Variable-count gather: every rank receives all ranks' items
    /// concatenated in rank order.
    pub fn allgatherv<T: Clone + Send + 'static>(&mut self, items: Vec<T>) -> Vec<T> {
        let np = self.shared.np;
        self.collective(OpKind::AllGatherV, items, move |inputs: Vec<Vec<T>>| {
            let all: Vec<T> = inputs.into_iter().flatten().collect();
            (0..np).map(|_| all.clone()).collect()
        })
    }

    /// Root's value delivered to every rank. Non-root ranks pass `None`.
    pub fn broadcast<T: Clone + Send + 'static>(&mut self, root: usize, value: Option<T>) -> T {
        let np = self.shared.np;
        self.fallible_collective(
            OpKind::Broadcast,
            (root, value),
            move |inputs: Vec<(usize, Option<T>)>| {
                let claimed = inputs[0].0;
                if claimed >= np || inputs.iter().any(|(r, _)| *r != claimed) {
                    return Err("broadcast root disagreement or out of range".to_string());
                }
                match inputs.into_iter().nth(claimed).and_then(|(_, v)| v) {
                    Some(v) => Ok((0..np).map(|_| v.clone()).collect::<Vec<T>>()),
                    None => Err(format!("broadcast root {claimed} supplied no value")),
                }
            },
        )
    }

    /// Keyed exchange: each `(dest, payload)` is delivered to `dest` exactly
    /// once, tagged with the source rank; a rank's inbound list is ordered by
    /// (source rank, send order).
    pub fn route<T: Send + 'static>(&mut self, outbound: Vec<(usize, T)>) -> Vec<(usize, T)> {
        let np = self.shared.np;
        self.fallible_collective(
            OpKind::Route,
            outbound,
            move |inputs: Vec<Vec<(usize, T)>>| {
                for msgs in &inputs {
                    if let Some((d, _)) = msgs.iter().find(|(d, _)| *d >= np) {
                        return Err(format!("route destination {d} out of range (np = {np})"));
                    }
                }
                let mut inbound: Vec<Vec<(usize, T)>> = (0..np).map(|_| Vec::new()).collect();
                for (src, msgs) in inputs.into_iter().enumerate() {
                    for (dest, payload) in msgs {
                        inbound[dest].push((src, payload));
                    }
                }
                Ok(inbound)
            },
        )
    }

    fn collective<In, Out, F>(&mut self, kind: OpKind, input: In, reduce: F) -> Out
    where
        In: Send + 'static,
        Out: Send + 'static,
        F: FnOnce(Vec<In>) -> Vec<Out>,
    {
        self.fallible_collective(kind, input, |inputs| Ok(reduce(inputs)))
    }

    fn fallible_collective<In, Out, F>(&mut self, kind: OpKind, input: In, reduce: F) -> Out
    where
        In: Send + 'static,
        Out: Send + 'static,
        F: FnOnce(Vec<In>) -> Result<Vec<Out>, String>,
    {
        let shared = self.shared;
        let np = shared.np;
        let rank = self.rank;
        let tag = (kind, TypeId::of::<(In, Out)>());
        let mut slot = shared.slot.lock().unwrap();

        if let Some(msg) = slot.poison.clone() {
            drop(slot);
            panic!("{msg}");
        }
        if let Some(done) = slot.finished.iter().position(|&f| f) {
            let msg = format!(
                "mismatched collective participation: rank {rank} entered {kind:?} after rank {done} completed"
            );
            shared.poison(&mut slot, msg);
        }
        match slot.op {
            None => slot.op = Some(tag),
            Some(existing) if existing != tag => {
                let msg = format!(
                    "mismatched collective participation: rank {rank} called {kind:?} against {:?}",
                    existing.0
                );
                shared.poison(&mut slot, msg);
            }
            Some(_) => {}
        }
        debug_assert!(slot.inputs[rank].is_none());
        slot.inputs[rank] = Some(Box::new(input));
        slot.arrived += 1;

        if slot.arrived == np {
            let inputs: Vec<In> = slot
                .inputs
                .iter_mut()
                .map(|i| *i.take().unwrap().downcast::<In>().unwrap())
                .collect();
            match reduce(inputs) {
                Ok(outputs) => {
                    assert_eq!(outputs.len(), np, "collective reducer must cover all ranks");
                    for (cell, out) in slot.outputs.iter_mut().zip(outputs) {
                        debug_assert!(cell.is_none());
                        *cell = Some(Box::new(out));
                    }
                    slot.arrived = 0;
                    slot.op = None;
                    slot.epoch += 1;
                    if shared.mode == ExecMode::Sequential {
                        slot.turn = 0;
                    }
                    shared.cv.notify_all();
                }
                Err(msg) => shared.poison(&mut slot, msg),
            }
        } else if shared.mode == ExecMode::Sequential {
            // Hand the token to the next rank and wait our turn to resume.
            slot.turn = rank + 1;
            shared.cv.notify_all();
        }

        loop {
            if let Some(msg) = slot.poison.clone() {
                drop(slot);
                panic!("{msg}");
            }
            let my_turn = shared.mode == ExecMode::Threaded || slot.turn == rank;
            if my_turn && slot.outputs[rank].is_some() {
                let out = slot.outputs[rank].take().unwrap();
                return *out.downcast::<Out>().unwrap();
            }
            slot = shared.cv.wait(slot).unwrap();
        }
    }
}

impl RankEnsemble {
    pub fn new(np: usize, mode: ExecMode) -> Self {
        assert!(np >= 1, "an ensemble needs at least one rank");
        RankEnsemble { np, mode }
    }

    #[inline]
    pub fn np(&self) -> usize {
        self.np
    }

    #[inline]
    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    /// Run one SPMD program with a per-rank input; results come back in rank
    /// order. Panics (contract violations included) propagate to the caller.
    pub fn run_with<I, T, F>(&self, inputs: Vec<I>, f: F) -> Vec<T>
    where
        I: Send,
        T: Send,
        F: Fn(&mut RankCtx, I) -> T + Sync,
    {
        assert_eq!(inputs.len(), self.np, "one input per rank required");
        let shared = Shared::new(self.np, self.mode);
        // Reset: Shared::new starts at turn 0, which is exactly the entry
        // condition for sequential scheduling.
        let f = &f;
        let shared_ref = &shared;
        let results: Vec<std::thread::Result<T>> = std::thread::scope(|scope| {
            let handles: Vec<_> = inputs
                .into_iter()
                .enumerate()
                .map(|(rank, input)| {
                    scope.spawn(move || {
                        let mut ctx = RankCtx {
                            rank,
                            shared: shared_ref,
                        };
                        wait_for_start(shared_ref, rank);
                        let out = catch_unwind(AssertUnwindSafe(|| f(&mut ctx, input)));
                        match out {
                            Ok(v) => {
                                finish_rank(shared_ref, rank);
                                v
                            }
                            Err(payload) => {
                                let mut slot = shared_ref.slot.lock().unwrap();
                                if slot.poison.is_none() {
                                    slot.poison = Some(format!("rank {rank} panicked"));
                                }
                                shared_ref.cv.notify_all();
                                drop(slot);
                                resume_unwind(payload);
                            }
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join()).collect()
        });
        let mut out = Vec::with_capacity(self.np);
        let mut first_panic = None;
        for r in results {
            match r {
                Ok(v) => out.push(v),
                Err(p) => {
                    if first_panic.is_none() {
                        first_panic = Some(p);
                    }
                }
            }
        }
        if let Some(p) = first_panic {
            resume_unwind(p);
        }
        out
    }

    /// Run one SPMD program with no per-rank input.
    pub fn run<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut RankCtx) -> T + Sync,
    {
        self.run_with(vec![(); self.np], |ctx, ()| f(ctx))
    }
}

fn wait_for_start(shared: &Shared, rank: usize) {
    if shared.mode != ExecMode::Sequential {
        return;
    }
    let mut slot = shared.slot.lock().unwrap();
    loop {
        if let Some(msg) = slot.poison.clone() {
            drop(slot);
            panic!("{msg}");
        }
        if slot.turn == rank {
            return;
        }
        slot = shared.cv.wait(slot).unwrap();
    }
}

fn finish_rank(shared: &Shared, rank: usize) {
    let mut slot = shared.slot.lock().unwrap();
    slot.finished[rank] = true;
    if slot.arrived > 0 {
        // Peers are mid-collective; this rank will never join it.
        let msg = format!(
            "mismatched collective participation: rank {rank} completed while an epoch was open"
        );
        shared.poison(&mut slot, msg);
    }
    if shared.mode == ExecMode::Sequential {
        slot.turn = rank + 1;
    }
    shared.cv.notify_all();
}
