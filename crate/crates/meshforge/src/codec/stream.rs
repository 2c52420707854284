//! Token stream file format (little-endian): magic `P3TK`, version `u8`,
//! `B: u16`, `O: u16`, token count `u64`, then each token as `u32`.

use std::io::{Read, Write};

use super::{CodecConfig, CodecError, TokenSequence};

pub const TOKEN_MAGIC: [u8; 4] = *b"P3TK";
pub const TOKEN_VERSION: u8 = 1;

/// Guard against absurd allocations when reading untrusted files.
const MAX_TOKENS: u64 = 1 << 28;

pub fn write_tokens<W: Write>(ts: &TokenSequence, mut w: W) -> Result<(), CodecError> {
    w.write_all(&TOKEN_MAGIC)?;
    w.write_all(&[TOKEN_VERSION])?;
    w.write_all(&(ts.config.blocks() as u16).to_le_bytes())?;
    w.write_all(&(ts.config.block_size() as u16).to_le_bytes())?;
    w.write_all(&(ts.tokens.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(ts.tokens.len() * 4);
    for t in &ts.tokens {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read and validate the header and token payload. Grammar validation is
/// [`super::decode`]'s job; this only guarantees a well-formed container.
pub fn read_tokens<R: Read>(mut r: R) -> Result<TokenSequence, CodecError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != TOKEN_MAGIC {
        return Err(CodecError::Stream("bad magic, not a token file".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != TOKEN_VERSION {
        return Err(CodecError::Stream(format!(
            "unsupported version {}",
            version[0]
        )));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf)?;
    let blocks = u16::from_le_bytes(u16buf) as u32;
    r.read_exact(&mut u16buf)?;
    let block_size = u16::from_le_bytes(u16buf) as u32;
    let config = CodecConfig::new(blocks, block_size)?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf);
    if count > MAX_TOKENS {
        return Err(CodecError::Stream(format!("token count {count} too large")));
    }
    let mut data = vec![0u8; count as usize * 4];
    r.read_exact(&mut data)?;
    let tokens = data
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(TokenSequence { config, tokens })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let config = CodecConfig::new(16, 8).unwrap();
        let ts = TokenSequence {
            config,
            tokens: vec![4096, 8192, 0, 8193, 1, 8194],
        };
        let mut buf = Vec::new();
        write_tokens(&ts, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"P3TK");
        let back = read_tokens(buf.as_slice()).unwrap();
        assert_eq!(back, ts);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_tokens(&b"P3T"[..]).is_err());
        assert!(read_tokens(&b"XXXX\x01\x10\x00\x08\x00\x00\x00\x00\x00\x00\x00\x00\x00"[..]).is_err());
        // Zero block size.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"P3TK\x01");
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&8u16.to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
        assert!(matches!(
            read_tokens(buf.as_slice()),
            Err(CodecError::BadConfig { .. })
        ));
        // Huge count must not allocate.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"P3TK\x01");
        buf.extend_from_slice(&16u16.to_le_bytes());
        buf.extend_from_slice(&8u16.to_le_bytes());
        buf.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(read_tokens(buf.as_slice()).is_err());
        // Truncated payload.
        let config = CodecConfig::new(16, 8).unwrap();
        let ts = TokenSequence {
            config,
            tokens: vec![4096, 8192],
        };
        let mut buf = Vec::new();
        write_tokens(&ts, &mut buf).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(read_tokens(buf.as_slice()).is_err());
    }
}
