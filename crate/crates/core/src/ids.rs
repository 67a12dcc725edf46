//! Identifier generation for participants, join tokens, messages and edit ops.
//!
//! Production engines draw random v4 UUIDs. A seeded generator makes every id
//! reproducible, which the simulator relies on for byte-identical results.

use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub struct IdGen {
    seeded: Option<Mutex<SplitMix64>>,
}

impl IdGen {
    pub fn random() -> Self {
        Self { seeded: None }
    }

    pub fn seeded(seed: u64) -> Self {
        Self {
            seeded: Some(Mutex::new(SplitMix64::seed_from_u64(seed))),
        }
    }

    /// 128 bits of identifier material as 32 lowercase hex digits.
    pub fn hex128(&self) -> String {
        match &self.seeded {
            Some(rng) => {
                let mut rng = rng.lock();
                format!("{:016x}{:016x}", rng.next_u64(), rng.next_u64())
            }
            None => uuid::Uuid::new_v4().simple().to_string(),
        }
    }

    pub fn prefixed(&self, prefix: &str) -> String {
        let h = self.hex128();
        format!("{prefix}-{}", &h[..16])
    }
}

impl Default for IdGen {
    fn default() -> Self {
        Self::random()
    }
}
