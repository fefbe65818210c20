//! Hash, keystream, symmetric encryption, the random oracle tables, the
//! per-round query wrapper and the certification functionality.

mod cert;
mod oracle;
mod wrapper;

pub use cert::{CertAuthority, CertInstance, SIGNATURE_LEN};
pub use oracle::{mask_expand, OracleMode, RandomOracle, Table};
pub use wrapper::{BudgetLedger, Caller, Refused};

use rand::RngCore;
use sha2::{Digest as _, Sha256};

/// Security parameter in bytes.
pub const LAMBDA: usize = 32;

pub type Digest = [u8; LAMBDA];

pub fn sha256(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn xor_bytes(a: &[u8], b: &[u8]) -> Vec<u8> {
    assert_eq!(a.len(), b.len(), "xor operands differ in length");
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

pub fn xor_digest(a: &Digest, b: &Digest) -> Digest {
    let mut out = [0u8; LAMBDA];
    for i in 0..LAMBDA {
        out[i] = a[i] ^ b[i];
    }
    out
}

pub fn random_block<R: RngCore>(rng: &mut R) -> Digest {
    let mut b = [0u8; LAMBDA];
    rng.fill_bytes(&mut b);
    b
}

pub fn ske_gen<R: RngCore>(rng: &mut R) -> Digest {
    random_block(rng)
}

fn keystream(k: &Digest, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + LAMBDA);
    let mut ctr: u32 = 0;
    while out.len() < len {
        out.extend_from_slice(&sha256(&[k, &ctr.to_be_bytes()]));
        ctr += 1;
    }
    out.truncate(len);
    out
}

/// XOR with a SHA-256 counter-mode keystream. One-time use per key.
pub fn ske_enc(k: &Digest, m: &[u8]) -> Vec<u8> {
    xor_bytes(m, &keystream(k, m.len()))
}

pub fn ske_dec(k: &Digest, c: &[u8]) -> Vec<u8> {
    ske_enc(k, c)
}
