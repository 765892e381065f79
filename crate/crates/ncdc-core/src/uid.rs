//! 128-bit identifiers for axes, roots and parameters.
//!
//! Normally random; a counter mode exists so golden tests and the bundled
//! examples produce reproducible documents.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Uid(pub u128);

/// 0 = random mode; anything else is the next counter value.
static COUNTER: AtomicU64 = AtomicU64::new(0);

impl Uid {
    pub fn fresh() -> Uid {
        let c = COUNTER.load(Ordering::Relaxed);
        if c == 0 {
            Uid(rand::random::<u128>())
        } else {
            Uid(COUNTER.fetch_add(1, Ordering::Relaxed) as u128)
        }
    }

    /// Switch this process to deterministic minting, starting at `start`
    /// (must be nonzero). Used by golden tests and `ncdc examples`.
    pub fn set_deterministic(start: u64) {
        assert!(start != 0, "counter mode starts at a nonzero value");
        COUNTER.store(start, Ordering::Relaxed);
    }

    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }

    pub fn from_hex(s: &str) -> Option<Uid> {
        if s.len() > 32 || s.is_empty() {
            return None;
        }
        u128::from_str_radix(s, 16).ok().map(Uid)
    }
}

impl fmt::Debug for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Uid({:x})", self.0)
    }
}

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}
