//! Per-run stream seeds.
//!
//! The seed of a run is `splitmix64(fnv1a(master, method, K, hyper, index))`,
//! with integers fed little-endian and the hyperparameter as its f64 bit
//! pattern (absent fields contribute a single 0xff byte). NMF runs leave the
//! threshold out, so one fit per `(K, seed)` serves every threshold.

use super::Method;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(state, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(master: u64, method: Method, k: Option<usize>, hyper: Option<f64>, index: usize) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    h = fnv1a(h, method.label().as_bytes());
    h = match k {
        Some(k) => fnv1a(h, &(k as u64).to_le_bytes()),
        None => fnv1a(h, &[0xff]),
    };
    h = match hyper {
        Some(x) => fnv1a(h, &x.to_bits().to_le_bytes()),
        None => fnv1a(h, &[0xff]),
    };
    h = fnv1a(h, &(index as u64).to_le_bytes());
    splitmix64(h)
}
