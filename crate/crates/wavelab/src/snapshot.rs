//! Binary snapshot format "CWV1".
//!
//! Layout: an 8-byte magic (`CWV1` followed by the little-endian marker
//! `0x1A2B3C4D`), a header of little-endian 64-bit fields
//! (mode, d, n, h, dt, t), then the `u` and `ut` payloads as little-endian
//! f64 in axis-major order. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::grid::{FieldState, GridMode, GridSpec};

const MAGIC_TAG: &[u8; 4] = b"CWV1";
const ENDIAN_MARKER: u32 = 0x1A2B_3C4D;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a CWV1 snapshot")]
    BadMagic,
    #[error("endianness marker mismatch: file is not little-endian CWV1")]
    Endianness,
    #[error("truncated snapshot: expected {expected} payload bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("bad header: {0}")]
    BadHeader(String),
}

pub fn write_snapshot(
    state: &FieldState,
    grid: &GridSpec,
    path: &Path,
) -> Result<(), SnapshotError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC_TAG)?;
    w.write_all(&ENDIAN_MARKER.to_le_bytes())?;
    let (mode, d) = match grid.mode {
        GridMode::Radial { d } => (0u64, u64::from(d)),
        GridMode::Cartesian3d => (1u64, 3u64),
    };
    w.write_all(&mode.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&(grid.n as u64).to_le_bytes())?;
    w.write_all(&grid.h.to_le_bytes())?;
    w.write_all(&grid.dt.to_le_bytes())?;
    w.write_all(&state.t.to_le_bytes())?;
    for v in state.u.iter().chain(state.ut.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(GridSpec, FieldState), SnapshotError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| SnapshotError::BadMagic)?;
    if &magic[..4] != MAGIC_TAG {
        return Err(SnapshotError::BadMagic);
    }
    let marker = u32::from_le_bytes(magic[4..8].try_into().unwrap());
    if marker != ENDIAN_MARKER {
        if marker.swap_bytes() == ENDIAN_MARKER {
            return Err(SnapshotError::Endianness);
        }
        return Err(SnapshotError::BadMagic);
    }

    let mut buf8 = [0u8; 8];
    let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64, SnapshotError> {
        r.read_exact(&mut buf8)
            .map_err(|_| SnapshotError::BadHeader("header truncated".into()))?;
        Ok(u64::from_le_bytes(buf8))
    };
    let mode_tag = read_u64(&mut r)?;
    let d = read_u64(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    let h = f64::from_bits(read_u64(&mut r)?);
    let dt = f64::from_bits(read_u64(&mut r)?);
    let t = f64::from_bits(read_u64(&mut r)?);

    let mode = match mode_tag {
        0 => {
            if !(3..=5).contains(&d) {
                return Err(SnapshotError::BadHeader(format!("bad dimension {d}")));
            }
            GridMode::Radial { d: d as u32 }
        }
        1 => GridMode::Cartesian3d,
        other => return Err(SnapshotError::BadHeader(format!("bad mode tag {other}"))),
    };
    if n < 2 || !h.is_finite() || h <= 0.0 || !dt.is_finite() || !t.is_finite() {
        return Err(SnapshotError::BadHeader("inconsistent header fields".into()));
    }
    let grid = GridSpec { mode, h, n, dt };
    let count = grid.node_count();

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = 2 * count * 8;
    if payload.len() != expected {
        return Err(SnapshotError::Truncated {
            expected,
            got: payload.len(),
        });
    }
    let read_field = |offset: usize| -> Vec<f64> {
        (0..count)
            .map(|i| {
                let b: [u8; 8] = payload[offset + 8 * i..offset + 8 * i + 8]
                    .try_into()
                    .unwrap();
                f64::from_le_bytes(b)
            })
            .collect()
    };
    let u = read_field(0);
    let ut = read_field(count * 8);
    Ok((grid, FieldState { u, ut, t }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("wavelab-snap-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_bit_exact() {
        let grid = make_grid(GridMode::Radial { d: 4 }, 0.1, 3.0, 0.05).unwrap();
        let mut state = FieldState::zero(&grid);
        for i in 0..grid.n {
            state.u[i] = (i as f64).sin() * 1e-3 + 0.1;
            state.ut[i] = -(i as f64).cos();
        }
        state.t = 2.375;
        let path = tmp("roundtrip.cwv");
        write_snapshot(&state, &grid, &path).unwrap();
        let (g2, s2) = read_snapshot(&path).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(s2.t.to_bits(), state.t.to_bits());
        for (a, b) in state.u.iter().zip(&s2.u) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in state.ut.iter().zip(&s2.ut) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_errors() {
        let grid = make_grid(GridMode::Radial { d: 3 }, 0.1, 2.0, 0.05).unwrap();
        let state = FieldState::zero(&grid);
        let path = tmp("truncated.cwv");
        write_snapshot(&state, &grid, &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 9]).unwrap();
        assert!(matches!(
            read_snapshot(&path),
            Err(SnapshotError::Truncated { .. })
        ));
    }

    #[test]
    fn endianness_and_magic_errors() {
        let grid = make_grid(GridMode::Radial { d: 3 }, 0.1, 2.0, 0.05).unwrap();
        let state = FieldState::zero(&grid);
        let path = tmp("endian.cwv");
        write_snapshot(&state, &grid, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].reverse(); // big-endian marker
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_snapshot(&path),
            Err(SnapshotError::Endianness)
        ));
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_snapshot(&path), Err(SnapshotError::BadMagic)));
    }

    proptest! {
        #[test]
        fn prop_roundtrip(vals in proptest::collection::vec(-1e3f64..1e3, 16), t in -10.0f64..10.0) {
            let grid = make_grid(GridMode::Radial { d: 3 }, 0.25, 2.0, 0.1).unwrap();
            let n = grid.n;
            let mut state = FieldState::zero(&grid);
            for i in 0..n {
                state.u[i] = vals[i % vals.len()];
                state.ut[i] = vals[(i * 7 + 3) % vals.len()];
            }
            state.t = t;
            let path = tmp(&format!("prop-{}.cwv", std::process::id()));
            write_snapshot(&state, &grid, &path).unwrap();
            let (_, s2) = read_snapshot(&path).unwrap();
            prop_assert_eq!(s2.u, state.u);
            prop_assert_eq!(s2.ut, state.ut);
        }
    }
}
