//! Time-lock encryption: the outer ciphertext built on Astrolabous, the
//! ideal functionality, and the protocol running over fair broadcast.

mod ideal;
mod protocol;

pub use ideal::{DecResult, IdealTle, TleIdealStack, TleRecord};
pub use protocol::TleProtocol;

use rand::RngCore;
use serde_json::{json, Value};

use crate::astrolabous::{ast_dec, ast_enc, solve_witness, AstCiphertext, AstError, Reader, Witness};
use crate::crypto::{mask_expand, xor_bytes, Digest, RandomOracle, LAMBDA};
use crate::kernel::hx;

/// `(c1, c2, c3)`: an Astrolabous encryption of a random `rho`, the message
/// masked under `rho`, and a binding digest of `rho || M`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TleCiphertext {
    pub c1: AstCiphertext,
    pub c2: Vec<u8>,
    pub c3: Digest,
}

impl TleCiphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.c1.to_bytes();
        out.extend_from_slice(&(self.c2.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.c2);
        out.extend_from_slice(&self.c3);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AstError> {
        let (c1, used) = AstCiphertext::parse_prefix(bytes)?;
        c1.check_shape()?;
        let mut r = Reader::new(&bytes[used..]);
        let len = r.u32()? as usize;
        let c2 = r.take(len)?.to_vec();
        let c3 = r.digest()?;
        if !r.is_empty() {
            return Err(AstError::Trailing);
        }
        Ok(Self { c1, c2, c3 })
    }

    /// Length in bytes of a ciphertext for a message of `msg_len` bytes.
    pub fn encoded_len(msg_len: usize, tau_dec: u32, q: u32) -> usize {
        12 + LAMBDA + LAMBDA * (tau_dec as usize * q as usize + 1) + 4 + msg_len + LAMBDA
    }
}

/// Completes a ciphertext around an already built `c1` hiding `rho`.
pub fn seal(oracle: &mut RandomOracle, c1: AstCiphertext, rho: &Digest, msg: &[u8]) -> TleCiphertext {
    let eta = mask_expand(oracle, rho, msg.len());
    let c3 = oracle.main(&[rho.as_slice(), msg].concat());
    TleCiphertext {
        c1,
        c2: xor_bytes(msg, &eta),
        c3,
    }
}

/// Opens `c` with a witness for `c1`; `None` when the binding digest fails.
pub fn open(oracle: &mut RandomOracle, c: &TleCiphertext, w: &Witness) -> Option<Vec<u8>> {
    let rho = ast_dec(&c.c1, w).ok()?;
    let eta = mask_expand(oracle, &rho, c.c2.len());
    let msg = xor_bytes(&c.c2, &eta);
    let check = oracle.main(&[rho.as_slice(), &msg].concat());
    (check == c.c3).then_some(msg)
}

/// Unbudgeted encryption, for tools and tests.
pub fn tle_encrypt<R: RngCore>(rng: &mut R, oracle: &mut RandomOracle, msg: &[u8], tau_dec: u32, q: u32) -> TleCiphertext {
    let mut rho = [0u8; LAMBDA];
    rng.fill_bytes(&mut rho);
    let c1 = ast_enc(&rho, tau_dec, q, rng, oracle);
    seal(oracle, c1, &rho, msg)
}

/// Unbudgeted decryption: solves the puzzle outright, then opens.
pub fn tle_decrypt(oracle: &mut RandomOracle, c: &TleCiphertext) -> Option<Vec<u8>> {
    let (w, _) = solve_witness(&c.c1, oracle).ok()?;
    open(oracle, c, &w)
}

/// Parses and fully decrypts a serialized ciphertext.
pub fn open_wire(oracle: &mut RandomOracle, c: &[u8]) -> Option<Vec<u8>> {
    let ct = TleCiphertext::from_bytes(c).ok()?;
    tle_decrypt(oracle, &ct)
}

/// Fair-broadcast payload `(c, tau)`.
pub fn encode_wire(c: &[u8], tau: i64) -> Vec<u8> {
    let mut out = tau.to_be_bytes().to_vec();
    out.extend_from_slice(c);
    out
}

pub fn decode_wire(bytes: &[u8]) -> Option<(Vec<u8>, i64)> {
    if bytes.len() < 8 {
        return None;
    }
    let tau = i64::from_be_bytes(bytes[..8].try_into().unwrap());
    Some((bytes[8..].to_vec(), tau))
}

pub(crate) fn dec_output(cipher: Value, tau: i64, res: &DecResult) -> Value {
    let mut v = json!({ "kind": "dec", "cipher": cipher, "tau": tau, "result": res.label() });
    if let DecResult::Msg(m) = res {
        v["msg"] = json!(hx(m));
    }
    v
}

pub(crate) fn retrieve_output(records: &[(Vec<u8>, Vec<u8>, i64)]) -> Value {
    json!({
        "kind": "retrieve",
        "records": records.iter().map(|(m, c, t)| json!({ "msg": hx(m), "cipher": hx(c), "tau": t })).collect::<Vec<_>>(),
    })
}

pub(crate) fn enc_output(result: &str) -> Value {
    json!({ "kind": "enc", "result": result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::OracleMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn roundtrip_and_layout() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut o = RandomOracle::new(OracleMode::Concrete, 3);
        let c = tle_encrypt(&mut rng, &mut o, b"attack at dawn", 2, 3);
        let bytes = c.to_bytes();
        assert_eq!(bytes.len(), TleCiphertext::encoded_len(14, 2, 3));
        assert_eq!(TleCiphertext::from_bytes(&bytes).unwrap(), c);
        assert_eq!(tle_decrypt(&mut o, &c), Some(b"attack at dawn".to_vec()));
    }

    #[test]
    fn tampered_mask_fails_binding() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut o = RandomOracle::new(OracleMode::Simulated, 4);
        let mut c = tle_encrypt(&mut rng, &mut o, b"m", 1, 1);
        c.c2[0] ^= 1;
        assert_eq!(tle_decrypt(&mut o, &c), None);
    }

    #[test]
    fn wire_roundtrip() {
        assert_eq!(decode_wire(&encode_wire(b"abc", -4)), Some((b"abc".to_vec(), -4)));
        assert_eq!(decode_wire(b"short"), None);
    }
}
