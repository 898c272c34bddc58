//! Text wire format for noisy keys.
//!
//! ```text
//! nkf1,n=<bits>,session=<hex>
//! <source_id>,<key_id>,<hex>
//! ...
//! ```
//!
//! `<hex>` is exactly `ceil(n / 8)` bytes in lowercase hex, bit `i` stored in
//! bit `i % 8` of byte `i / 8`. Unused high bits of the last byte are zero.
//! `session` is a fingerprint of the shared hash seed (see [`session_id`]) so
//! the merge process can reject files hashed under different seeds.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{Bits, NoisyKey};
use crate::error::{invalid, Error, Result};

pub const KEYSET_MAGIC: &str = "nkf1";

/// First eight bytes of `SHA-256("noisykey/session/v1" || hash_seed)`.
pub fn session_id(hash_seed: &[u8]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"noisykey/session/v1");
    h.update(hash_seed);
    h.finalize()[..8].to_vec()
}

/// One record line, without the trailing newline.
pub fn encode_key(key: &NoisyKey) -> String {
    format!(
        "{},{},{}",
        key.source_id,
        key.key_id,
        hex::encode(key.bits.to_bytes())
    )
}

/// Parses one record line for keys of `n` bits. `line_no` is used in errors.
pub fn decode_key(line: &str, n: usize, line_no: usize) -> Result<NoisyKey> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let mut fields = line.trim_end_matches('\r').split(',');
    let (Some(src), Some(id), Some(hex_bits), None) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(err(format!(
            "expected `source_id,key_id,hex`, got {line:?}"
        )));
    };
    let source_id: u32 = src
        .parse()
        .map_err(|_| err(format!("bad source_id {src:?}")))?;
    let key_id: u64 = id.parse().map_err(|_| err(format!("bad key_id {id:?}")))?;
    let want = 2 * n.div_ceil(8);
    if hex_bits.len() != want {
        return Err(err(format!(
            "{n}-bit key needs {want} hex digits, got {}",
            hex_bits.len()
        )));
    }
    let bytes = hex::decode(hex_bits).map_err(|e| err(format!("malformed hex: {e}")))?;
    let bits = Bits::from_bytes(&bytes, n).map_err(|e| err(e.to_string()))?;
    Ok(NoisyKey::new(bits, source_id, key_id))
}

/// A complete key-set file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySetFile {
    pub n: usize,
    pub session: Vec<u8>,
    pub keys: Vec<NoisyKey>,
}

impl KeySetFile {
    pub fn new(n: usize, session: Vec<u8>, keys: Vec<NoisyKey>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("key length must be at least 1 bit"));
        }
        if session.is_empty() {
            return Err(invalid("session fingerprint must be non-empty"));
        }
        let mut seen = BTreeSet::new();
        for k in &keys {
            if k.bits.len() != n {
                return Err(Error::InvalidInput(format!(
                    "key {} has {} bits, file declares {n}",
                    k.key_ref(),
                    k.bits.len()
                )));
            }
            if !seen.insert(k.key_ref()) {
                return Err(Error::InvalidInput(format!("duplicate key {}", k.key_ref())));
            }
        }
        Ok(KeySetFile { n, session, keys })
    }

    pub fn header(&self) -> String {
        format!(
            "{KEYSET_MAGIC},n={},session={}",
            self.n,
            hex::encode(&self.session)
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for k in &self.keys {
            let _ = writeln!(out, "{}", encode_key(k));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty key-set file".into(),
        })?;
        let (n, session) = parse_header(header.trim_end_matches('\r'))?;
        let mut keys = Vec::new();
        let mut seen = BTreeSet::new();
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "blank line".into(),
                });
            }
            let key = decode_key(line, n, line_no)?;
            if !seen.insert(key.key_ref()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate key {}", key.key_ref()),
                });
            }
            keys.push(key);
        }
        Ok(KeySetFile { n, session, keys })
    }
}

fn parse_header(line: &str) -> Result<(usize, Vec<u8>)> {
    let err = |message: String| Error::Parse { line: 1, message };
    let mut fields = line.split(',');
    if fields.next() != Some(KEYSET_MAGIC) {
        return Err(err(format!("header must start with `{KEYSET_MAGIC},`")));
    }
    let n = fields
        .next()
        .and_then(|f| f.strip_prefix("n="))
        .ok_or_else(|| err("missing `n=` field".into()))?;
    let n: usize = n
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| err(format!("bad key length {n:?}")))?;
    let session = fields
        .next()
        .and_then(|f| f.strip_prefix("session="))
        .ok_or_else(|| err("missing `session=` field".into()))?;
    let session = hex::decode(session)
        .ok()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| err(format!("bad session {session:?}")))?;
    if fields.next().is_some() {
        return Err(err("unexpected trailing header fields".into()));
    }
    Ok((n, session))
}
