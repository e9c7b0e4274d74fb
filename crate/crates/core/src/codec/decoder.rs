//! Bubble decoding: beam search over the tree of message prefixes.
//!
//! Level `d` holds at most `B` prefixes of `k·d` bits. Every kept prefix is
//! expanded into its `2^k` children, each child is scored by its path cost
//! (sum of squared residuals against every received pass so far), and the
//! `B` cheapest children survive. Ties are broken by the lexicographically
//! smaller message prefix, so the kept set is a pure function of the input.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::encoder::check_pass_index;
use super::hash::{hash_state_unchecked, OneAtATime};
use super::{CodecConfig, Encoder, Message, PassBlock};

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub message: Message,
    /// Sum of squared residuals of `message` against the received passes.
    pub cost: f64,
    pub levels_expanded: usize,
    /// Children scored over the whole search.
    pub nodes_visited: usize,
}

#[derive(Clone, Copy, Debug)]
struct Child {
    cost: f64,
    parent_rank: u32,
    block: u8,
    state: u32,
}

impl Child {
    /// Cost first, then message prefix. Parents are ranked in prefix order,
    /// so `(parent_rank, block)` orders children by prefix.
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.parent_rank.cmp(&other.parent_rank))
            .then(self.block.cmp(&other.block))
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    state: u32,
    cost: f64,
}

/// Parents below this count are expanded on the calling thread.
const PAR_THRESHOLD: usize = 64;

pub fn bubble_decode(received: &[PassBlock], cfg: &CodecConfig) -> Result<DecodeResult> {
    Encoder::new(cfg.clone())?.decode(received)
}

impl Encoder {
    /// Bubble-decodes `received`; see [`bubble_decode`].
    pub fn decode(&self, received: &[PassBlock]) -> Result<DecodeResult> {
        let cfg = self.config();
        if received.is_empty() {
            return Err(Error::invalid("at least one pass is required"));
        }
        let spine_len = cfg.spine_len();
        for block in received {
            check_pass_index(block.pass_index, cfg)?;
            if block.symbols.len() != spine_len {
                return Err(Error::invalid(format!(
                    "pass {} has {} symbols, expected {spine_len}",
                    block.pass_index,
                    block.symbols.len()
                )));
            }
        }

        let fanout = 1usize << cfg.k;
        let beam = cfg.beam_width;
        let mut nodes = vec![Node { state: cfg.s0, cost: 0.0 }];
        // Per level, the kept children in prefix order: (parent index, block).
        let mut history: Vec<Vec<(u32, u8)>> = Vec::with_capacity(spine_len);
        let layout = PassLayout::new(received, cfg.seed_width);
        let mut observed = vec![0.0; received.len()];
        let mut nodes_visited = 0usize;

        for level in 0..spine_len {
            for (slot, block) in observed.iter_mut().zip(received) {
                *slot = block.symbols[level];
            }
            let expand = |(rank, node): (usize, &Node)| -> Vec<Child> {
                (0..fanout)
                    .map(|block| {
                        let state = hash_state_unchecked(node.state, block as u8);
                        Child {
                            cost: node.cost + self.branch_cost(state, &layout, &observed),
                            parent_rank: rank as u32,
                            block: block as u8,
                            state,
                        }
                    })
                    .collect()
            };
            let mut children: Vec<Child> = if nodes.len() >= PAR_THRESHOLD {
                nodes.par_iter().enumerate().flat_map_iter(expand).collect()
            } else {
                nodes.iter().enumerate().flat_map(expand).collect()
            };
            nodes_visited += children.len();

            if children.len() > beam {
                children.select_nth_unstable_by(beam - 1, Child::cmp_key);
                children.truncate(beam);
            }
            // Prefix order becomes the rank used by the next level's tie-break.
            children.sort_unstable_by_key(|c| (c.parent_rank, c.block));

            history.push(children.iter().map(|c| (c.parent_rank, c.block)).collect());
            nodes = children
                .iter()
                .map(|c| Node { state: c.state, cost: c.cost })
                .collect();
        }

        // Nodes are in prefix order, so the first minimum wins ties.
        let (mut index, best) = nodes
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
            .expect("beam is never empty");
        let cost = best.cost;

        let mut blocks = vec![0u32; spine_len];
        for level in (0..spine_len).rev() {
            let (parent, block) = history[level][index];
            blocks[level] = block as u32;
            index = parent as usize;
        }

        Ok(DecodeResult {
            message: Message::from_blocks(&blocks, cfg.k),
            cost,
            levels_expanded: spine_len,
            nodes_visited,
        })
    }

    /// Sum of squared residuals of one spine value against every pass.
    #[inline]
    fn branch_cost(&self, state: u32, layout: &PassLayout, observed: &[f64]) -> f64 {
        let mut prefix = OneAtATime::with_seed(self.config().rng_seed);
        prefix.write_u32_be(state);
        prefix.write(&layout.shared);
        match layout.tail_len {
            1 => self.residuals_lanes(prefix, &layout.tails, observed),
            _ => self.residuals(prefix, layout.tails.chunks_exact(layout.tail_len), observed),
        }
    }

    /// Single-byte tails: hash `LANES` passes side by side so the byte
    /// rounds vectorize.
    #[inline(always)]
    fn residuals_lanes(&self, prefix: OneAtATime, tails: &[u8], observed: &[f64]) -> f64 {
        const LANES: usize = 8;
        let mapper = self.mapper();
        let seed = prefix.state();
        let mut acc = [0.0f64; LANES];
        let mut tail_chunks = tails.chunks_exact(LANES);
        let mut y_chunks = observed.chunks_exact(LANES);
        for (tail, y) in (&mut tail_chunks).zip(&mut y_chunks) {
            let mut h = [seed; LANES];
            for j in 0..LANES {
                h[j] = OneAtATime::round(h[j], tail[j]);
            }
            for _ in 0..4 {
                for hj in h.iter_mut() {
                    *hj = OneAtATime::round(*hj, 0);
                }
            }
            for j in 0..LANES {
                let d = y[j] - mapper.from_word(OneAtATime::finalize(h[j]));
                acc[j] += d * d;
            }
        }
        let mut total = acc.iter().sum::<f64>();
        for (&tail, &y) in tail_chunks.remainder().iter().zip(y_chunks.remainder()) {
            let mut h = prefix;
            h.write_u8(tail);
            h.write_u32_be(0);
            let d = y - mapper.from_word(h.finish());
            total += d * d;
        }
        total
    }

    #[inline(always)]
    fn residuals<T: AsRef<[u8]>>(
        &self,
        prefix: OneAtATime,
        tails: impl Iterator<Item = T>,
        observed: &[f64],
    ) -> f64 {
        let mapper = self.mapper();
        // Four running sums so consecutive passes do not serialize on one add.
        let mut acc = [0.0f64; 4];
        for (j, (tail, &y)) in tails.zip(observed).enumerate() {
            let mut h = prefix;
            h.write(tail.as_ref());
            h.write_u32_be(0);
            let d = y - mapper.from_word(h.finish());
            acc[j & 3] += d * d;
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3])
    }
}

/// Pass-index bytes as the RNG hash absorbs them, with the leading bytes
/// common to every pass split off so they are hashed once per node.
struct PassLayout {
    shared: Vec<u8>,
    /// Remaining bytes of every pass, `tail_len` bytes each.
    tails: Vec<u8>,
    tail_len: usize,
}

impl PassLayout {
    fn new(received: &[PassBlock], seed_width: u32) -> Self {
        let width = (seed_width / 8) as usize;
        let indices: Vec<[u8; 4]> = received.iter().map(|b| b.pass_index.to_be_bytes()).collect();
        let first = &indices[0][4 - width..];
        let common = (0..width)
            .take_while(|&j| indices.iter().all(|b| b[4 - width + j] == first[j]))
            .count()
            .min(width - 1);
        PassLayout {
            shared: first[..common].to_vec(),
            tails: indices.iter().flat_map(|b| b[4 - width + common..].iter().copied()).collect(),
            tail_len: width - common,
        }
    }
}
