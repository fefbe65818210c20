//! Astrolabous time-lock encryption: a payload is encrypted under a fresh
//! key, and the key is hidden at the end of a hash chain of length
//! `q * tau_dec` that can only be unrolled one oracle query at a time.

use rand::RngCore;
use thiserror::Error;

use crate::crypto::{random_block, ske_dec, ske_enc, ske_gen, xor_digest, Digest, RandomOracle, LAMBDA};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AstError {
    #[error("chain has {got} blocks, expected {expected}")]
    ChainLength { got: usize, expected: usize },
    #[error("witness has {got} digests, expected {expected}")]
    WitnessLength { got: usize, expected: usize },
    #[error("truncated ciphertext")]
    Truncated,
    #[error("trailing bytes after ciphertext")]
    Trailing,
    #[error("q must be positive")]
    ZeroQ,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AstCiphertext {
    pub tau_dec: u32,
    pub q: u32,
    pub c_mk: Vec<u8>,
    pub chain: Vec<Digest>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Witness(pub Vec<Digest>);

pub fn steps(tau_dec: u32, q: u32) -> usize {
    tau_dec as usize * q as usize
}

impl AstCiphertext {
    pub fn steps(&self) -> usize {
        steps(self.tau_dec, self.q)
    }

    /// Builds the chain from pre-sampled blocks `rs` and their star-oracle
    /// answers `hs`, so callers can obtain the hashes through a wrapper batch.
    pub fn assemble(tau_dec: u32, q: u32, key: &Digest, payload: &[u8], rs: &[Digest], hs: &[Digest]) -> Self {
        let l = steps(tau_dec, q);
        assert_eq!(rs.len(), l);
        assert_eq!(hs.len(), l);
        let mut chain = Vec::with_capacity(l + 1);
        if l == 0 {
            chain.push(*key);
        } else {
            chain.push(rs[0]);
            for j in 1..l {
                chain.push(xor_digest(&rs[j], &hs[j - 1]));
            }
            chain.push(xor_digest(key, &hs[l - 1]));
        }
        Self {
            tau_dec,
            q,
            c_mk: ske_enc(key, payload),
            chain,
        }
    }

    pub fn check_shape(&self) -> Result<(), AstError> {
        if self.q == 0 {
            return Err(AstError::ZeroQ);
        }
        let expected = self.steps() + 1;
        if self.chain.len() != expected {
            return Err(AstError::ChainLength {
                got: self.chain.len(),
                expected,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.c_mk.len() + self.chain.len() * LAMBDA);
        out.extend_from_slice(&self.tau_dec.to_be_bytes());
        out.extend_from_slice(&self.q.to_be_bytes());
        out.extend_from_slice(&(self.c_mk.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.c_mk);
        for b in &self.chain {
            out.extend_from_slice(b);
        }
        out
    }

    /// Parses a ciphertext from the front of `bytes`, returning it together
    /// with the number of bytes consumed.
    pub fn parse_prefix(bytes: &[u8]) -> Result<(Self, usize), AstError> {
        let mut r = Reader::new(bytes);
        let tau_dec = r.u32()?;
        let q = r.u32()?;
        if q == 0 {
            return Err(AstError::ZeroQ);
        }
        let mk_len = r.u32()? as usize;
        let c_mk = r.take(mk_len)?.to_vec();
        let n = steps(tau_dec, q).checked_add(1).ok_or(AstError::Truncated)?;
        let mut chain = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            chain.push(r.digest()?);
        }
        Ok((Self { tau_dec, q, c_mk, chain }, r.pos))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AstError> {
        let (c, used) = Self::parse_prefix(bytes)?;
        if used != bytes.len() {
            return Err(AstError::Trailing);
        }
        Ok(c)
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], AstError> {
        let end = self.pos.checked_add(n).ok_or(AstError::Truncated)?;
        if end > self.buf.len() {
            return Err(AstError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, AstError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn digest(&mut self) -> Result<Digest, AstError> {
        Ok(self.take(LAMBDA)?.try_into().unwrap())
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn ast_enc<R: RngCore>(m: &[u8], tau_dec: u32, q: u32, rng: &mut R, oracle: &mut RandomOracle) -> AstCiphertext {
    assert!(q >= 1, "q must be positive");
    let key = ske_gen(rng);
    let l = steps(tau_dec, q);
    let rs: Vec<Digest> = (0..l).map(|_| random_block(rng)).collect();
    let hs: Vec<Digest> = rs.iter().map(|r| oracle.star(r)).collect();
    AstCiphertext::assemble(tau_dec, q, &key, m, &rs, &hs)
}

/// Incremental chain solver. Each step needs the previous answer, so a
/// caller holding a budget of `q` batches per round advances it `q` steps.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChainSolver {
    hashes: Vec<Digest>,
}

impl ChainSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn done(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_complete(&self, c: &AstCiphertext) -> bool {
        self.hashes.len() >= c.steps()
    }

    /// The value whose star-oracle answer is the next witness element.
    pub fn next_query(&self, c: &AstCiphertext) -> Option<Digest> {
        let j = self.hashes.len();
        if j >= c.steps() {
            return None;
        }
        Some(match j {
            0 => c.chain[0],
            _ => xor_digest(&c.chain[j], &self.hashes[j - 1]),
        })
    }

    pub fn absorb(&mut self, h: Digest) {
        self.hashes.push(h);
    }

    pub fn witness(&self) -> Witness {
        Witness(self.hashes.clone())
    }
}

/// Unrolls the chain, returning the witness and the number of dependent
/// oracle calls it took.
pub fn solve_witness(c: &AstCiphertext, oracle: &mut RandomOracle) -> Result<(Witness, u64), AstError> {
    c.check_shape()?;
    let mut s = ChainSolver::new();
    let mut calls = 0u64;
    while let Some(x) = s.next_query(c) {
        s.absorb(oracle.star(&x));
        calls += 1;
    }
    Ok((s.witness(), calls))
}

pub fn ast_dec(c: &AstCiphertext, w: &Witness) -> Result<Vec<u8>, AstError> {
    c.check_shape()?;
    let l = c.steps();
    if w.0.len() != l {
        return Err(AstError::WitnessLength {
            got: w.0.len(),
            expected: l,
        });
    }
    let key = if l == 0 { c.chain[0] } else { xor_digest(&w.0[l - 1], &c.chain[l]) };
    Ok(ske_dec(&key, &c.c_mk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OracleMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (ChaCha20Rng, RandomOracle) {
        (ChaCha20Rng::seed_from_u64(11), RandomOracle::new(OracleMode::Concrete, 11))
    }

    #[test]
    fn zero_difficulty_is_plain_key() {
        let (mut rng, mut o) = setup();
        let c = ast_enc(b"hi", 0, 3, &mut rng, &mut o);
        assert_eq!(c.chain.len(), 1);
        let (w, calls) = solve_witness(&c, &mut o).unwrap();
        assert_eq!(calls, 0);
        assert_eq!(ast_dec(&c, &w).unwrap(), b"hi");
    }

    #[test]
    fn chain_lengths_and_call_counts() {
        let (mut rng, mut o) = setup();
        let c = ast_enc(b"x", 2, 1, &mut rng, &mut o);
        assert_eq!(c.chain.len(), 3);
        let c = ast_enc(b"x", 3, 2, &mut rng, &mut o);
        assert_eq!(solve_witness(&c, &mut o).unwrap().1, 6);
    }

    #[test]
    fn hello_roundtrip() {
        let (mut rng, mut o) = setup();
        let c = ast_enc(b"hello", 2, 3, &mut rng, &mut o);
        let (w, _) = solve_witness(&c, &mut o).unwrap();
        assert_eq!(ast_dec(&c, &w).unwrap(), b"hello");
    }

    #[test]
    fn single_hash_witness() {
        let (mut rng, mut o) = setup();
        let c = ast_enc(b"one", 1, 1, &mut rng, &mut o);
        let (w, calls) = solve_witness(&c, &mut o).unwrap();
        assert_eq!((w.0.len(), calls), (1, 1));
        assert_eq!(ast_dec(&c, &w).unwrap(), b"one");
    }

    #[test]
    fn wrong_witness_length_rejected() {
        let (mut rng, mut o) = setup();
        let c = ast_enc(b"m", 2, 2, &mut rng, &mut o);
        assert!(matches!(ast_dec(&c, &Witness(vec![[0; 32]])), Err(AstError::WitnessLength { .. })));
        let mut bad = c.clone();
        bad.chain.pop();
        assert!(solve_witness(&bad, &mut o).is_err());
    }

    #[test]
    fn tampered_chain_garbles_payload() {
        let (mut rng, mut o) = setup();
        let mut c = ast_enc(b"payload!", 2, 2, &mut rng, &mut o);
        c.chain[1][0] ^= 1;
        let (w, _) = solve_witness(&c, &mut o).unwrap();
        assert_ne!(ast_dec(&c, &w).unwrap(), b"payload!");
    }

    #[test]
    fn byte_layout_roundtrip() {
        let (mut rng, mut o) = setup();
        let c = ast_enc(b"layout", 2, 2, &mut rng, &mut o);
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], &2u32.to_be_bytes());
        assert_eq!(&bytes[4..8], &2u32.to_be_bytes());
        assert_eq!(&bytes[8..12], &6u32.to_be_bytes());
        assert_eq!(bytes.len(), 12 + 6 + 5 * 32);
        assert_eq!(AstCiphertext::from_bytes(&bytes).unwrap(), c);
        assert!(AstCiphertext::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
