//! Rank layer halo exchange by value-copy messages.
//!
//! Axes are exchanged in order x, y, z. The slab sent along axis `a` spans
//! the padded range on axes already exchanged and the owned range on the
//! others, so after the z phase edge and corner ghosts are correct too.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::time::Duration;

use crate::grid::{RankLayout, Side};
use crate::physics::FieldBlock;

use super::ExecError;

/// Upper bound on how long a concurrent rank waits for one message.
const RECV_TIMEOUT: Duration = Duration::from_secs(120);

/// Ghost planes of one face, copied out of the sender's block.
#[derive(Debug, Clone, PartialEq)]
pub struct HaloMessage {
    pub source: usize,
    pub axis: usize,
    /// Direction of travel: the side of the sender's face.
    pub direction: Side,
    pub tag: u64,
    pub payload: Vec<f64>,
    /// Payload checksum; only filled and checked in debug builds.
    pub checksum: u64,
}

type MessageKey = (usize, usize, Side, u64);

impl HaloMessage {
    fn key(&self) -> MessageKey {
        (self.source, self.axis, self.direction, self.tag)
    }
}

fn checksum(payload: &[f64]) -> u64 {
    if !cfg!(debug_assertions) {
        return 0;
    }
    payload.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
        (h ^ x.to_bits()).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Index ranges of the slab along `axis`: the owned face on `side` when
/// sending, or the ghost layer on `side` when receiving.
fn slab(block: &FieldBlock, axis: usize, side: Side, ghost: bool) -> [Range<usize>; 3] {
    let w = block.halo;
    let full = block.full();
    std::array::from_fn(|b| {
        let n = block.count[b];
        if b < axis {
            0..full[b]
        } else if b > axis {
            w..w + n
        } else {
            match (side, ghost) {
                (Side::Minus, false) => w..2 * w,
                (Side::Plus, false) => n..n + w,
                (Side::Minus, true) => 0..w,
                (Side::Plus, true) => w + n..n + 2 * w,
            }
        }
    })
}

/// Number of values in the slab exchanged along `axis`.
pub fn payload_len(block: &FieldBlock, axis: usize) -> usize {
    slab(block, axis, Side::Minus, false)
        .iter()
        .map(|r| r.len())
        .product::<usize>()
        * block.nvars()
}

/// Copies the owned face on `side` of `axis` (order: var, k, j, i).
pub fn pack(block: &FieldBlock, axis: usize, side: Side) -> Vec<f64> {
    let [ri, rj, rk] = slab(block, axis, side, false);
    let mut out = Vec::with_capacity(payload_len(block, axis));
    for v in 0..block.nvars() {
        for k in rk.clone() {
            for j in rj.clone() {
                let start = block.idx(v, ri.start, j, k);
                out.extend_from_slice(&block.data[start..start + ri.len()]);
            }
        }
    }
    out
}

/// Writes a received slab into the ghost layer on `side` of `axis`.
pub fn unpack(block: &mut FieldBlock, axis: usize, side: Side, payload: &[f64]) -> Result<(), ExecError> {
    let expected = payload_len(block, axis);
    if payload.len() != expected {
        return Err(ExecError::Protocol(format!(
            "payload of {} values for axis {axis}, expected {expected}",
            payload.len()
        )));
    }
    let [ri, rj, rk] = slab(block, axis, side, true);
    let mut src = payload.chunks_exact(ri.len());
    for v in 0..block.nvars() {
        for k in rk.clone() {
            for j in rj.clone() {
                let start = block.idx(v, ri.start, j, k);
                let row = src.next().expect("length checked above");
                block.data[start..start + ri.len()].copy_from_slice(row);
            }
        }
    }
    Ok(())
}

/// One rank's endpoint: outgoing channels to every rank, its own inbox and
/// a buffer of messages that arrived before they were asked for.
#[derive(Debug)]
pub(crate) struct Endpoint {
    rank: usize,
    neighbors: [usize; 6],
    outboxes: Vec<Sender<HaloMessage>>,
    inbox: Receiver<HaloMessage>,
    pending: HashMap<MessageKey, HaloMessage>,
}

/// Creates connected endpoints for every rank of `layout`.
pub(crate) fn connect(layout: &RankLayout) -> Vec<Endpoint> {
    let (senders, receivers): (Vec<_>, Vec<_>) =
        (0..layout.ranks()).map(|_| std::sync::mpsc::channel()).unzip();
    receivers
        .into_iter()
        .enumerate()
        .map(|(rank, inbox)| Endpoint {
            rank,
            neighbors: layout.neighbors[rank],
            outboxes: senders.clone(),
            inbox,
            pending: HashMap::new(),
        })
        .collect()
}

impl Endpoint {
    fn neighbor(&self, axis: usize, side: Side) -> Result<usize, ExecError> {
        let nb = self.neighbors[side.slot(axis)];
        if nb >= self.outboxes.len() {
            return Err(ExecError::Topology(format!(
                "rank {} has no valid neighbor on side {side:?} of axis {axis}",
                self.rank
            )));
        }
        Ok(nb)
    }

    /// Sends both faces of `axis`.
    pub fn post(&self, block: &FieldBlock, axis: usize, tag: u64) -> Result<(), ExecError> {
        for side in Side::BOTH {
            let dest = self.neighbor(axis, side)?;
            let payload = pack(block, axis, side);
            let msg = HaloMessage {
                source: self.rank,
                axis,
                direction: side,
                tag,
                checksum: checksum(&payload),
                payload,
            };
            self.outboxes[dest]
                .send(msg)
                .map_err(|_| ExecError::Protocol(format!("rank {dest} hung up")))?;
        }
        Ok(())
    }

    /// Receives both ghost layers of `axis`. With `blocking == false` a
    /// message that has not been posted yet is a protocol error.
    pub fn complete(&mut self, block: &mut FieldBlock, axis: usize, tag: u64, blocking: bool) -> Result<(), ExecError> {
        for ghost in Side::BOTH {
            let source = self.neighbor(axis, ghost)?;
            // our minus ghosts come from the minus neighbor's plus face
            let key = (source, axis, ghost.opposite(), tag);
            let msg = self.receive(key, blocking)?;
            if msg.checksum != checksum(&msg.payload) {
                return Err(ExecError::Protocol(format!(
                    "checksum mismatch on message {key:?} to rank {}",
                    self.rank
                )));
            }
            unpack(block, axis, ghost, &msg.payload)?;
        }
        Ok(())
    }

    fn receive(&mut self, key: MessageKey, blocking: bool) -> Result<HaloMessage, ExecError> {
        if let Some(m) = self.pending.remove(&key) {
            return Ok(m);
        }
        loop {
            let msg = if blocking {
                self.inbox.recv_timeout(RECV_TIMEOUT).map_err(|e| match e {
                    RecvTimeoutError::Timeout => ExecError::Protocol(format!(
                        "rank {} timed out waiting for {key:?}",
                        self.rank
                    )),
                    RecvTimeoutError::Disconnected => ExecError::Protocol("inbox disconnected".into()),
                })?
            } else {
                self.inbox.try_recv().map_err(|e| match e {
                    TryRecvError::Empty => ExecError::Protocol(format!(
                        "rank {} expected message {key:?} but none was posted",
                        self.rank
                    )),
                    TryRecvError::Disconnected => ExecError::Protocol("inbox disconnected".into()),
                })?
            };
            if msg.key() == key {
                return Ok(msg);
            }
            if self.pending.insert(msg.key(), msg).is_some() {
                return Err(ExecError::Protocol(format!("duplicate message to rank {}", self.rank)));
            }
        }
    }
}

/// Fills the ghost layers of all blocks of `layout` (one block per rank,
/// in rank order) on the calling thread.
pub fn halo_exchange(layout: &RankLayout, blocks: &mut [FieldBlock], tag: u64) -> Result<(), ExecError> {
    if blocks.len() != layout.ranks() {
        return Err(ExecError::Topology(format!(
            "{} blocks for {} ranks",
            blocks.len(),
            layout.ranks()
        )));
    }
    let mut endpoints = connect(layout);
    for axis in 0..3 {
        for (ep, b) in endpoints.iter().zip(blocks.iter()) {
            ep.post(b, axis, tag)?;
        }
        for (ep, b) in endpoints.iter_mut().zip(blocks.iter_mut()) {
            ep.complete(b, axis, tag, false)?;
        }
    }
    Ok(())
}
