//! Thread layer: loop chunking and a fork-join `parallel_for` with
//! per-worker private scratch.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::grid::balanced_piece;
use crate::perf::RegionSample;

/// A work item waiting to be claimed by a worker.
type Slot<P> = Mutex<Option<(Range<usize>, P)>>;

/// Loop scheduling policy of the thread layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Schedule {
    /// One contiguous balanced chunk per thread.
    Static,
    /// Shrinking chunks claimed on demand.
    Guided { min_chunk: usize },
}

/// Executor variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// Parallel speed scan, right-hand side and update; private scratch.
    Optimized,
    /// Only the right-hand side runs in a parallel region, and its workers
    /// share one scratch arena that they must take turns on.
    Baseline,
}

/// `threads` contiguous chunks of `0..n`, sized by the balanced-split rule.
pub fn static_chunks(n: usize, threads: usize) -> Vec<Range<usize>> {
    assert!(threads >= 1, "need at least one thread");
    (0..threads)
        .map(|t| {
            let (offset, count) = balanced_piece(n, threads, t);
            offset..offset + count
        })
        .collect()
}

/// Chunk sizes of guided scheduling: `max(min_chunk, ceil(remaining / T))`,
/// the last one truncated to what remains.
pub fn guided_chunks(n: usize, threads: usize, min_chunk: usize) -> Vec<usize> {
    assert!(threads >= 1 && min_chunk >= 1, "threads and min_chunk must be positive");
    let mut sizes = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        let size = min_chunk.max(remaining.div_ceil(threads)).min(remaining);
        sizes.push(size);
        remaining -= size;
    }
    sizes
}

impl Schedule {
    /// Ordered, contiguous chunks covering `0..n`.
    pub fn chunks(&self, n: usize, threads: usize) -> Vec<Range<usize>> {
        match *self {
            Schedule::Static => static_chunks(n, threads),
            Schedule::Guided { min_chunk } => {
                let mut start = 0;
                guided_chunks(n, threads, min_chunk)
                    .into_iter()
                    .map(|size| {
                        start += size;
                        start - size..start
                    })
                    .collect()
            }
        }
    }
}

/// The thread team of one rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreadTeam {
    pub threads: usize,
    pub schedule: Schedule,
    pub mode: Mode,
}

enum Access<'a, S> {
    Private(&'a mut S),
    Shared(&'a Mutex<&'a mut S>),
}

impl ThreadTeam {
    pub fn new(threads: usize, schedule: Schedule, mode: Mode) -> Self {
        assert!(threads >= 1, "need at least one thread");
        Self {
            threads,
            schedule,
            mode,
        }
    }

    pub fn chunks(&self, n: usize) -> Vec<Range<usize>> {
        self.schedule.chunks(n, self.threads)
    }

    /// Runs `body` once per chunk and joins.
    ///
    /// Each chunk carries a payload (typically the disjoint slice of the
    /// output it owns). Under [`Schedule::Static`] chunk `t` runs on worker
    /// `t`; under [`Schedule::Guided`] workers claim chunks in order. In
    /// [`Mode::Optimized`] worker `t` gets `scratch[t]`; in
    /// [`Mode::Baseline`] all workers share `scratch[0]` under a lock.
    ///
    /// After a failure no chunk with a higher index is started, so the
    /// error returned is always the one of the lowest failing chunk.
    pub fn parallel_for<P, S, E, F>(
        &self,
        chunks: Vec<(Range<usize>, P)>,
        scratch: &mut [S],
        body: F,
    ) -> Result<RegionSample, E>
    where
        P: Send,
        S: Send,
        E: Send,
        F: Fn(Range<usize>, P, &mut S) -> Result<(), E> + Sync,
    {
        let workers = self.threads;
        let needed = match self.mode {
            Mode::Optimized => workers,
            Mode::Baseline => 1,
        };
        assert!(scratch.len() >= needed, "need {needed} scratch arenas, got {}", scratch.len());
        if let Schedule::Static = self.schedule {
            assert!(chunks.len() <= workers, "static schedule expects one chunk per worker");
        }

        let start = Instant::now();
        let n_chunks = chunks.len();
        let slots: Vec<Slot<P>> =
            chunks.into_iter().map(|c| Mutex::new(Some(c))).collect();
        let next = AtomicUsize::new(0);
        let first_failed = AtomicUsize::new(usize::MAX);
        let errors: Mutex<Vec<(usize, E)>> = Mutex::new(Vec::new());

        let worker = |t: usize, mut access: Access<'_, S>| -> f64 {
            let mut busy = 0.0;
            let mut claimed_static = false;
            loop {
                let c = match self.schedule {
                    Schedule::Static if !claimed_static => {
                        claimed_static = true;
                        t
                    }
                    Schedule::Static => break,
                    Schedule::Guided { .. } => next.fetch_add(1, Ordering::Relaxed),
                };
                if c >= n_chunks || c > first_failed.load(Ordering::Relaxed) {
                    break;
                }
                let (range, payload) = slots[c]
                    .lock()
                    .expect("chunk slot poisoned")
                    .take()
                    .expect("chunk claimed twice");
                let result = match &mut access {
                    Access::Private(s) => {
                        let t0 = Instant::now();
                        let r = body(range, payload, s);
                        busy += t0.elapsed().as_secs_f64();
                        r
                    }
                    Access::Shared(m) => {
                        let mut guard = m.lock().expect("shared scratch poisoned");
                        let t0 = Instant::now();
                        let r = body(range, payload, &mut guard);
                        busy += t0.elapsed().as_secs_f64();
                        r
                    }
                };
                if let Err(e) = result {
                    first_failed.fetch_min(c, Ordering::Relaxed);
                    errors.lock().expect("error list poisoned").push((c, e));
                }
            }
            busy
        };

        let busy: Vec<f64> = match self.mode {
            Mode::Optimized => {
                let mut arenas = scratch.iter_mut();
                let first = arenas.next().expect("at least one arena");
                std::thread::scope(|s| {
                    let handles: Vec<_> = (1..workers)
                        .zip(arenas)
                        .map(|(t, arena)| {
                            let worker = &worker;
                            s.spawn(move || worker(t, Access::Private(arena)))
                        })
                        .collect();
                    let mut busy = vec![worker(0, Access::Private(first))];
                    busy.extend(handles.into_iter().map(|h| h.join().expect("worker panicked")));
                    busy
                })
            }
            Mode::Baseline => {
                let shared = Mutex::new(&mut scratch[0]);
                std::thread::scope(|s| {
                    let handles: Vec<_> = (1..workers)
                        .map(|t| {
                            let (worker, shared) = (&worker, &shared);
                            s.spawn(move || worker(t, Access::Shared(shared)))
                        })
                        .collect();
                    let mut busy = vec![worker(0, Access::Shared(&shared))];
                    busy.extend(handles.into_iter().map(|h| h.join().expect("worker panicked")));
                    busy
                })
            }
        };
        let wall = start.elapsed().as_secs_f64();

        let mut errors = errors.into_inner().expect("error list poisoned");
        if !errors.is_empty() {
            errors.sort_by_key(|(c, _)| *c);
            return Err(errors.swap_remove(0).1);
        }
        Ok(RegionSample {
            wall,
            busy: busy.into_iter().map(|b| b.min(wall)).collect(),
        })
    }
}

/// Splits `data` into consecutive pieces of `unit * len(range)` values, one
/// per range. The ranges must be ordered and contiguous from 0.
pub(crate) fn split_by_ranges<'a, T>(
    mut data: &'a mut [T],
    ranges: &[Range<usize>],
    unit: usize,
) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(ranges.len());
    for r in ranges {
        let (head, tail) = data.split_at_mut(r.len() * unit);
        out.push(head);
        data = tail;
    }
    out
}
