//! Seedable RNG streams.
//!
//! Every randomized stage draws from its own stream, derived from the run
//! seed plus a list of tags (stage name, step index, example index, ...).
//! Streams are therefore reproducible in isolation: the noise drawn for the
//! N task at step 17 does not depend on whether the NBT task is enabled,
//! which is what makes per-task loss decomposition testable.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; the standard 64-bit mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Tag component of a stream id.
#[derive(Clone, Copy, Debug)]
pub enum Tag<'a> {
    Name(&'a str),
    Index(u64),
}

impl<'a> From<&'a str> for Tag<'a> {
    fn from(s: &'a str) -> Self {
        Tag::Name(s)
    }
}

impl From<u64> for Tag<'_> {
    fn from(i: u64) -> Self {
        Tag::Index(i)
    }
}

impl From<usize> for Tag<'_> {
    fn from(i: usize) -> Self {
        Tag::Index(i as u64)
    }
}

fn fold_tag(state: &mut u64, tag: &Tag<'_>) {
    match tag {
        Tag::Name(name) => {
            // FNV-1a over the bytes, folded into the splitmix chain.
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for b in name.as_bytes() {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            *state ^= h;
            splitmix64(state);
        }
        Tag::Index(i) => {
            *state ^= i.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5851_f42d_4c95_7f2d;
            splitmix64(state);
        }
    }
}

/// Derives an independent RNG stream from a seed and a tag path.
pub fn stream(seed: u64, tags: &[Tag<'_>]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    splitmix64(&mut state);
    for tag in tags {
        fold_tag(&mut state, tag);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
