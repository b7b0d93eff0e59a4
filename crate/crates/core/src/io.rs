//! Field files: a one-line JSON header followed by a little-endian binary
//! payload of interleaved `(re, im)` 8-byte reals in row-major order.
//!
//! The header records the magic string, grid size, side length, boundary tag
//! and a SHA-256 checksum of the payload, so files are self-describing and
//! truncation or corruption is detected on load.

use crate::error::{GlError, Result};
use crate::field::{Bc, ComplexField};
use crate::grid::GridSpec;
use crate::scalar::Scalar;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &str = "glfield-v1";

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    m: usize,
    side_length: f64,
    bc: String,
    n_flux: u32,
    checksum: String,
}

fn bc_to_tag(bc: Bc) -> (String, u32) {
    match bc {
        Bc::Dirichlet => ("dirichlet".into(), 0),
        Bc::Natural => ("natural".into(), 0),
        Bc::MagneticPeriodic(n) => ("magnetic_periodic".into(), n),
    }
}

fn tag_to_bc(tag: &str, n_flux: u32) -> Result<Bc> {
    match tag {
        "dirichlet" => Ok(Bc::Dirichlet),
        "natural" => Ok(Bc::Natural),
        "magnetic_periodic" => Ok(Bc::MagneticPeriodic(n_flux)),
        other => Err(GlError::FileFormat(format!("unknown bc tag {other:?}"))),
    }
}

pub fn save_field<T: Scalar>(path: impl AsRef<Path>, u: &ComplexField<T>) -> Result<()> {
    let m = u.grid().points_per_side();
    let mut payload = Vec::with_capacity(16 * u.values().len());
    for v in u.values() {
        payload.extend_from_slice(&v.re.f64().to_le_bytes());
        payload.extend_from_slice(&v.im.f64().to_le_bytes());
    }
    let checksum = hex_digest(&payload);
    let (bc, n_flux) = bc_to_tag(u.bc());
    let header = Header {
        magic: MAGIC.into(),
        m,
        side_length: u.grid().side_length().f64(),
        bc,
        n_flux,
        checksum,
    };
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &header).map_err(|e| GlError::FileFormat(e.to_string()))?;
    w.write_all(b"\n")?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn load_field<T: Scalar>(path: impl AsRef<Path>) -> Result<ComplexField<T>> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())
        .map_err(|e| GlError::FileFormat(format!("bad header: {e}")))?;
    if header.magic != MAGIC {
        return Err(GlError::FileFormat(format!(
            "bad magic string {:?} (expected {MAGIC:?})",
            header.magic
        )));
    }
    let expected_len = header
        .m
        .checked_mul(header.m)
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| GlError::FileFormat("grid size overflow".into()))?;
    let mut payload = Vec::with_capacity(expected_len);
    r.read_to_end(&mut payload)?;
    if payload.len() != expected_len {
        return Err(GlError::FileFormat(format!(
            "payload truncated: {} bytes for m = {} (expected {expected_len})",
            payload.len(),
            header.m
        )));
    }
    if hex_digest(&payload) != header.checksum {
        return Err(GlError::FileFormat("checksum mismatch".into()));
    }
    let grid = GridSpec::new(T::of(header.side_length), header.m)?;
    let bc = tag_to_bc(&header.bc, header.n_flux)?;
    let values: Vec<Complex<T>> = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[0..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..16].try_into().unwrap());
            Complex::new(T::of(re), T::of(im))
        })
        .collect();
    ComplexField::from_values(grid, bc, values)
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("gl_core_io_{}_{}", std::process::id(), name));
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let g = GridSpec::<f64>::new(2.507, 16).unwrap();
        let u = ComplexField::random_normal(g, Bc::MagneticPeriodic(1), 42, 1.3);
        let p = tmp("rt.fld");
        save_field(&p, &u).unwrap();
        let v = load_field::<f64>(&p).unwrap();
        assert_eq!(u.bc(), v.bc());
        assert_eq!(u.grid().points_per_side(), v.grid().points_per_side());
        assert_eq!(
            u.grid().side_length().to_bits(),
            v.grid().side_length().to_bits()
        );
        for (a, b) in u.values().iter().zip(v.values().iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn f32_round_trip_exact() {
        let g = GridSpec::<f32>::new(1.0f32, 8).unwrap();
        let u = ComplexField::random_normal(g, Bc::Natural, 1, 0.7f32);
        let p = tmp("rt32.fld");
        save_field(&p, &u).unwrap();
        let v = load_field::<f32>(&p).unwrap();
        for (a, b) in u.values().iter().zip(v.values().iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn wrong_magic_rejected() {
        let p = tmp("magic.fld");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(
            f,
            "{{\"magic\":\"nope\",\"m\":8,\"side_length\":1.0,\"bc\":\"natural\",\"n_flux\":0,\"checksum\":\"00\"}}"
        )
        .unwrap();
        drop(f);
        let err = load_field::<f64>(&p).unwrap_err();
        assert!(err.to_string().contains("magic"));
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn truncated_payload_rejected() {
        let g = GridSpec::<f64>::new(1.0, 8).unwrap();
        let u = ComplexField::zeros(g, Bc::Natural);
        let p = tmp("trunc.fld");
        save_field(&p, &u).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 24]).unwrap();
        let err = load_field::<f64>(&p).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let g = GridSpec::<f64>::new(1.0, 8).unwrap();
        let u = ComplexField::random_normal(g, Bc::Natural, 9, 1.0);
        let p = tmp("crc.fld");
        save_field(&p, &u).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        let n = bytes.len();
        bytes[n - 5] ^= 0x40;
        std::fs::write(&p, &bytes).unwrap();
        let err = load_field::<f64>(&p).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        std::fs::remove_file(p).ok();
    }
}
