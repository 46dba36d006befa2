//! Binary raster cache.
//!
//! Layout (little-endian): magic `SBRS`, u32 version = 1, u64 resolution in
//! nano-arc-seconds, u64 col0, u64 row0, u64 width, u64 height, then the
//! packed row-major bit words.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BinaryRaster, GridSpec};

const MAGIC: &[u8; 4] = b"SBRS";
const VERSION: u32 = 1;

pub fn encode_binary_raster(r: &BinaryRaster, mut w: impl Write) -> std::io::Result<()> {
    let s = r.spec();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [s.resolution_nano(), s.col0(), s.row0(), s.width() as u64, s.height() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for word in r.words() {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_binary_raster(mut rd: impl Read) -> Result<BinaryRaster> {
    let bad = |e: std::io::Error| Error::format("cache", format!("truncated raster cache: {e}"));
    let mut head = [0u8; 48];
    rd.read_exact(&mut head).map_err(bad)?;
    if &head[..4] != MAGIC {
        return Err(Error::format("cache", "not a binary raster cache"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format("cache", format!("unsupported cache version {version}")));
    }
    let field = |i: usize| u64::from_le_bytes(head[8 + 8 * i..16 + 8 * i].try_into().unwrap());
    let spec = GridSpec::from_lattice(field(0), field(1), field(2), field(3) as usize, field(4) as usize)?;
    let n = spec.len().div_ceil(64);
    let mut bytes = vec![0u8; n * 8];
    rd.read_exact(&mut bytes).map_err(bad)?;
    let words = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    BinaryRaster::from_words(spec, words)
}

pub fn write_binary_raster(path: impl AsRef<Path>, r: &BinaryRaster) -> Result<()> {
    let path = path.as_ref();
    let mut w = File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))?;
    encode_binary_raster(r, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_binary_raster(path: impl AsRef<Path>) -> Result<BinaryRaster> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_binary_raster(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let spec = GridSpec::new(12.0, 3.0, 3.0, 70, 5).unwrap();
        let r = BinaryRaster::from_fn(spec, |row, col| (row * 31 + col * 7) % 5 == 0);
        let mut buf = Vec::new();
        encode_binary_raster(&r, &mut buf).unwrap();
        assert_eq!(decode_binary_raster(buf.as_slice()).unwrap(), r);
        assert!(decode_binary_raster(&buf[..buf.len() - 1]).is_err());
    }
}
