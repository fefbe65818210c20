use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};

pub const SIGNATURE_LEN: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
struct CertRecord {
    msg: Vec<u8>,
    sig: Vec<u8>,
    valid: bool,
}

/// One certification instance bound to a single signer. The record log is
/// authoritative; ed25519 only supplies realistic signature bytes and the
/// adversary's verdict for corrupted signers.
pub struct CertInstance {
    signer: usize,
    key: SigningKey,
    log: Vec<CertRecord>,
    halted: bool,
}

impl CertInstance {
    pub fn new(signer: usize, seed: [u8; 32]) -> Self {
        Self {
            signer,
            key: SigningKey::from_bytes(&seed),
            log: Vec::new(),
            halted: false,
        }
    }

    pub fn signer(&self) -> usize {
        self.signer
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Returns `None` once the instance has halted.
    pub fn sign(&mut self, msg: &[u8]) -> Option<Vec<u8>> {
        if self.halted {
            return None;
        }
        let sig = self.key.sign(msg).to_bytes().to_vec();
        if self
            .log
            .iter()
            .any(|r| !r.valid && r.msg == msg && r.sig == sig)
        {
            self.halted = true;
            return None;
        }
        if !self.log.iter().any(|r| r.valid && r.msg == msg && r.sig == sig) {
            self.log.push(CertRecord {
                msg: msg.to_vec(),
                sig: sig.clone(),
                valid: true,
            });
        }
        Some(sig)
    }

    /// The verification ladder. `phi` is consulted only for a corrupted
    /// signer on a pair the log has never seen.
    pub fn verify_with(
        &mut self,
        msg: &[u8],
        sig: &[u8],
        signer_corrupted: bool,
        phi: impl FnOnce() -> bool,
    ) -> bool {
        if self.log.iter().any(|r| r.valid && r.msg == msg && r.sig == sig) {
            return true;
        }
        if !signer_corrupted && !self.log.iter().any(|r| r.valid && r.msg == msg) {
            self.log.push(CertRecord {
                msg: msg.to_vec(),
                sig: sig.to_vec(),
                valid: false,
            });
            return false;
        }
        if let Some(r) = self.log.iter().find(|r| r.msg == msg && r.sig == sig) {
            return r.valid;
        }
        let f = if signer_corrupted { phi() } else { false };
        self.log.push(CertRecord {
            msg: msg.to_vec(),
            sig: sig.to_vec(),
            valid: f,
        });
        f
    }

    /// Verification where the adversary's verdict is the concrete signature check.
    pub fn verify(&mut self, msg: &[u8], sig: &[u8], signer_corrupted: bool) -> bool {
        let vk = self.verifying_key();
        self.verify_with(msg, sig, signer_corrupted, || {
            Signature::from_slice(sig)
                .map(|s| vk.verify(msg, &s).is_ok())
                .unwrap_or(false)
        })
    }
}

/// All certification instances of a simulation, one per party.
pub struct CertAuthority {
    instances: Vec<CertInstance>,
}

impl CertAuthority {
    pub fn new(seeds: Vec<[u8; 32]>) -> Self {
        Self {
            instances: seeds
                .into_iter()
                .enumerate()
                .map(|(i, s)| CertInstance::new(i, s))
                .collect(),
        }
    }

    pub fn sign(&mut self, signer: usize, msg: &[u8]) -> Option<Vec<u8>> {
        self.instances[signer].sign(msg)
    }

    pub fn verify(&mut self, signer: usize, msg: &[u8], sig: &[u8], corrupted: bool) -> bool {
        match self.instances.get_mut(signer) {
            Some(inst) => inst.verify(msg, sig, corrupted),
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_message_verifies() {
        let mut c = CertInstance::new(0, [1; 32]);
        let s = c.sign(b"m").unwrap();
        assert!(c.verify(b"m", &s, false));
    }

    #[test]
    fn honest_signer_unsigned_message_rejected_and_recorded() {
        let mut c = CertInstance::new(0, [1; 32]);
        let forged = vec![0u8; 64];
        assert!(!c.verify_with(b"m", &forged, false, || true));
        assert!(!c.verify_with(b"m", &forged, true, || true));
    }

    #[test]
    fn corrupted_signer_adversary_decides_and_is_recorded() {
        let mut c = CertInstance::new(0, [1; 32]);
        let sig = vec![9u8; 64];
        assert!(c.verify_with(b"m", &sig, true, || true));
        assert!(c.verify_with(b"m", &sig, true, || false));
    }

    #[test]
    fn signing_over_rejected_pair_halts() {
        let mut c = CertInstance::new(0, [2; 32]);
        let real = SigningKey::from_bytes(&[2; 32]).sign(b"m").to_bytes();
        assert!(!c.verify(b"m", &real, false));
        assert_eq!(c.sign(b"m"), None);
        assert!(c.is_halted());
    }
}
