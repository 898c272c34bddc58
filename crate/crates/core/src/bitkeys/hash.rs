use hmac::{Hmac, Mac};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{Bits, NoisyKey};
use crate::error::{check_flip_prob, invalid, Result};

type HmacSha256 = Hmac<Sha256>;

/// Random stream used for bit-flip noise.
pub type NoiseStream = ChaCha20Rng;

/// Output of the shared public hash for one value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashCode(pub Bits);

impl HashCode {
    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl AsRef<Bits> for HashCode {
    fn as_ref(&self) -> &Bits {
        &self.0
    }
}

/// Hashes `value` to `n` bits.
///
/// Block `j` (starting at 0) is `HMAC-SHA256(key = seed, msg = value || be32(j))`.
/// Blocks are concatenated and truncated to `n` bits, read low-order first
/// within each byte, so the code's wire bytes are a prefix of the HMAC output.
pub fn hash_value(value: &[u8], seed: &[u8], n: usize) -> Result<HashCode> {
    if n == 0 {
        return Err(invalid("hash length must be at least 1 bit"));
    }
    if seed.is_empty() {
        return Err(invalid("hash seed must be non-empty"));
    }
    let nbytes = n.div_ceil(8);
    let mut bytes = Vec::with_capacity(nbytes + 32);
    let mut block: u32 = 0;
    while bytes.len() < nbytes {
        let mut mac = HmacSha256::new_from_slice(seed).expect("HMAC accepts any key length");
        mac.update(value);
        mac.update(&block.to_be_bytes());
        bytes.extend_from_slice(&mac.finalize().into_bytes());
        block = block
            .checked_add(1)
            .ok_or_else(|| invalid("hash length exceeds counter range"))?;
    }
    bytes.truncate(nbytes);
    if !n.is_multiple_of(8) {
        *bytes.last_mut().expect("non-empty") &= (1u8 << (n % 8)) - 1;
    }
    Ok(HashCode(Bits::from_bytes(&bytes, n)?))
}

/// Noise stream for one key, reproducible from the source's private seed
/// and the key's identifiers alone.
///
/// The ChaCha20 seed is `SHA-256("noisykey/noise/v1" || le64(len(seed)) ||
/// seed || le32(source_id) || le64(key_id))`.
pub fn noise_stream(noise_seed: &[u8], source_id: u32, key_id: u64) -> NoiseStream {
    let mut h = Sha256::new();
    h.update(b"noisykey/noise/v1");
    h.update((noise_seed.len() as u64).to_le_bytes());
    h.update(noise_seed);
    h.update(source_id.to_le_bytes());
    h.update(key_id.to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Flips each bit of `code` independently with probability `p_f`.
pub fn add_noise<R: Rng + ?Sized>(code: &Bits, p_f: f64, rng: &mut R) -> Result<Bits> {
    check_flip_prob(p_f)?;
    let mut out = code.clone();
    if p_f == 0.0 {
        return Ok(out);
    }
    for i in 0..out.len() {
        if rng.gen_bool(p_f) {
            out.flip(i);
        }
    }
    Ok(out)
}

/// Per-source settings for turning values into noisy keys.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    n: usize,
    p_f: f64,
    hash_seed: Vec<u8>,
    noise_seed: Vec<u8>,
}

impl NoiseConfig {
    pub fn new(n: usize, p_f: f64, hash_seed: Vec<u8>, noise_seed: Vec<u8>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("key length must be at least 1 bit"));
        }
        check_flip_prob(p_f)?;
        if hash_seed.is_empty() {
            return Err(invalid("hash seed must be non-empty"));
        }
        Ok(NoiseConfig {
            n,
            p_f,
            hash_seed,
            noise_seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_f(&self) -> f64 {
        self.p_f
    }

    pub fn hash_seed(&self) -> &[u8] {
        &self.hash_seed
    }

    pub fn hash(&self, value: &[u8]) -> Result<HashCode> {
        hash_value(value, &self.hash_seed, self.n)
    }

    /// Hash then noise; the noise depends only on this config and the ids.
    pub fn noisy_key(&self, value: &[u8], source_id: u32, key_id: u64) -> Result<NoisyKey> {
        let code = self.hash(value)?;
        let mut rng = noise_stream(&self.noise_seed, source_id, key_id);
        let bits = add_noise(code.bits(), self.p_f, &mut rng)?;
        Ok(NoisyKey::new(bits, source_id, key_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitkeys::hamming;

    #[test]
    fn hash_is_deterministic() {
        let a = hash_value(b"x", b"S", 64).unwrap();
        let b = hash_value(b"x", b"S", 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn hash_prefix_property() {
        // Longer outputs extend shorter ones: counter mode truncation.
        let short = hash_value(b"value", b"seed", 100).unwrap();
        let long = hash_value(b"value", b"seed", 700).unwrap();
        for i in 0..100 {
            assert_eq!(short.bits().get(i), long.bits().get(i));
        }
    }

    #[test]
    fn hash_rejects_bad_params() {
        assert!(hash_value(b"x", b"S", 0).is_err());
        assert!(hash_value(b"x", b"", 8).is_err());
    }

    #[test]
    fn hash_published_vectors() {
        // HMAC-SHA256(key = "noisykey", msg = "abc" || be32(j)), j = 0, 1.
        let code = hash_value(b"abc", b"noisykey", 64).unwrap();
        assert_eq!(hex::encode(code.bits().to_bytes()), "c31cc79fb2892e50");
        let code = hash_value(b"abc", b"noisykey", 300).unwrap();
        assert_eq!(
            hex::encode(code.bits().to_bytes()),
            "c31cc79fb2892e5030e13d4edf3696eef8714768958bba720950b6f67f0a18db517aebdd4101"
        );
    }

    #[test]
    fn zero_noise_is_identity() {
        let code = hash_value(b"v", b"S", 257).unwrap();
        let mut rng = noise_stream(b"private", 3, 9);
        assert_eq!(&add_noise(code.bits(), 0.0, &mut rng).unwrap(), code.bits());
    }

    #[test]
    fn noise_rejects_out_of_range() {
        let code = Bits::zeros(8).unwrap();
        let mut rng = noise_stream(b"p", 0, 0);
        assert!(add_noise(&code, 0.51, &mut rng).is_err());
        assert!(add_noise(&code, -0.01, &mut rng).is_err());
        assert!(add_noise(&code, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn noise_stream_depends_on_ids() {
        let code = Bits::zeros(256).unwrap();
        let a = add_noise(&code, 0.5, &mut noise_stream(b"p", 1, 1)).unwrap();
        let b = add_noise(&code, 0.5, &mut noise_stream(b"p", 1, 1)).unwrap();
        let c = add_noise(&code, 0.5, &mut noise_stream(b"p", 1, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn config_keys_reproducible() {
        let cfg = NoiseConfig::new(128, 0.2, b"h".to_vec(), b"n".to_vec()).unwrap();
        let k1 = cfg.noisy_key(b"alice", 2, 5).unwrap();
        let k2 = cfg.noisy_key(b"alice", 2, 5).unwrap();
        assert_eq!(k1, k2);
        let code = cfg.hash(b"alice").unwrap();
        assert!(hamming(&k1.bits, code.bits()).unwrap() > 0);
        assert!(NoiseConfig::new(128, 0.6, b"h".to_vec(), vec![]).is_err());
    }
}
