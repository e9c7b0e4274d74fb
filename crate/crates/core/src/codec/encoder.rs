use crate::error::{Error, Result};

use super::hash::{hash_state_unchecked, rng_word};
use super::{CodecConfig, Message, PassBlock, SymbolMapper};

/// The `n/k` spine values of a message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpineChain {
    pub states: Vec<u32>,
}

pub fn compute_spine(message: &Message, cfg: &CodecConfig) -> Result<SpineChain> {
    cfg.validate()?;
    if message.len() != cfg.n {
        return Err(Error::invalid(format!(
            "message has {} bits, expected n = {}",
            message.len(),
            cfg.n
        )));
    }
    Ok(spine_of_prefix(message, cfg))
}

/// Spine of a message whose length is any multiple of `k`.
pub(crate) fn spine_of_prefix(message: &Message, cfg: &CodecConfig) -> SpineChain {
    let mut state = cfg.s0;
    let states = message
        .blocks(cfg.k)
        .into_iter()
        .map(|block| {
            state = hash_state_unchecked(state, block as u8);
            state
        })
        .collect();
    SpineChain { states }
}

/// Encoder with the constellation table built once.
#[derive(Clone, Debug)]
pub struct Encoder {
    cfg: CodecConfig,
    mapper: SymbolMapper,
}

impl Encoder {
    pub fn new(cfg: CodecConfig) -> Result<Self> {
        cfg.validate()?;
        let mapper = SymbolMapper::new(&cfg);
        Ok(Encoder { cfg, mapper })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.cfg
    }

    pub(crate) fn mapper(&self) -> &SymbolMapper {
        &self.mapper
    }

    /// Symbol of spine value `spine` in pass `pass_index`: the first `c` bits
    /// of that pass's RNG stream, mapped onto the constellation.
    #[inline]
    pub fn symbol(&self, spine: u32, pass_index: u32) -> f64 {
        self.mapper.from_word(rng_word(spine, pass_index, 0, &self.cfg))
    }

    pub fn pass(&self, spine: &SpineChain, pass_index: u32) -> Result<PassBlock> {
        check_pass_index(pass_index, &self.cfg)?;
        Ok(PassBlock {
            pass_index,
            symbols: spine.states.iter().map(|&s| self.symbol(s, pass_index)).collect(),
        })
    }

    pub fn passes(&self, message: &Message, first: u32, last: u32) -> Result<Vec<PassBlock>> {
        if first == 0 || first > last {
            return Err(Error::invalid(format!("bad pass range [{first}, {last}]")));
        }
        let spine = compute_spine(message, &self.cfg)?;
        (first..=last).map(|l| self.pass(&spine, l)).collect()
    }
}

pub(crate) fn check_pass_index(pass_index: u32, cfg: &CodecConfig) -> Result<()> {
    if pass_index == 0 {
        return Err(Error::invalid("pass index is 1-based"));
    }
    if cfg.seed_width < 32 && pass_index >> cfg.seed_width != 0 {
        return Err(Error::invalid(format!(
            "pass index {pass_index} does not fit in {} bits",
            cfg.seed_width
        )));
    }
    Ok(())
}

/// One pass over an already computed spine.
pub fn encode_pass(spine: &SpineChain, pass_index: u32, cfg: &CodecConfig) -> Result<PassBlock> {
    Encoder::new(cfg.clone())?.pass(spine, pass_index)
}

/// Passes `first..=last` of `message`.
pub fn encode_passes(
    message: &Message,
    first: u32,
    last: u32,
    cfg: &CodecConfig,
) -> Result<Vec<PassBlock>> {
    Encoder::new(cfg.clone())?.passes(message, first, last)
}
