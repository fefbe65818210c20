use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{sha256, Digest, LAMBDA};

const STAR_DOMAIN: &[u8] = b"simulcast/star-oracle";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    #[default]
    Concrete,
    Simulated,
}

/// The two disjoint oracle tables: `Main` answers plain hash queries and
/// `Star` answers the puzzle queries that are rate limited by the wrapper.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Table {
    Main,
    Star,
}

/// Lazily sampled random oracle pair.
///
/// In concrete mode answers are SHA-256 (the star table prefixes a domain
/// label). In simulated mode every fresh query is answered with PRNG bytes
/// and remembered.
pub struct RandomOracle {
    mode: OracleMode,
    main: HashMap<Vec<u8>, Digest>,
    star: HashMap<Vec<u8>, Digest>,
    rng: ChaCha20Rng,
    queries: u64,
}

impl RandomOracle {
    pub fn new(mode: OracleMode, seed: u64) -> Self {
        Self {
            mode,
            main: HashMap::new(),
            star: HashMap::new(),
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0x6f72_6163_6c65_0000),
            queries: 0,
        }
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn query(&mut self, table: Table, x: &[u8]) -> Digest {
        self.queries += 1;
        match self.mode {
            OracleMode::Concrete => match table {
                Table::Main => sha256(&[x]),
                Table::Star => sha256(&[STAR_DOMAIN, x]),
            },
            OracleMode::Simulated => {
                let map = match table {
                    Table::Main => &mut self.main,
                    Table::Star => &mut self.star,
                };
                if let Some(h) = map.get(x) {
                    return *h;
                }
                let mut h = [0u8; LAMBDA];
                self.rng.fill_bytes(&mut h);
                map.insert(x.to_vec(), h);
                h
            }
        }
    }

    pub fn main(&mut self, x: &[u8]) -> Digest {
        self.query(Table::Main, x)
    }

    pub fn star(&mut self, x: &[u8]) -> Digest {
        self.query(Table::Star, x)
    }
}

/// Expands `rho` into `len` mask bytes by concatenating main-oracle answers
/// on `rho || ctr` with a 4-byte big-endian counter starting at zero.
pub fn mask_expand(oracle: &mut RandomOracle, rho: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + LAMBDA);
    let mut ctr: u32 = 0;
    let mut input = rho.to_vec();
    while out.len() < len {
        input.truncate(rho.len());
        input.extend_from_slice(&ctr.to_be_bytes());
        out.extend_from_slice(&oracle.main(&input));
        ctr += 1;
    }
    out.truncate(len);
    out
}
