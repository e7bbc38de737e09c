//! Binary window cache.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "STGW" | version u8 | window count u32
//! per window:
//!   N u32 | T u32 | scene name (u16 length + UTF-8)
//!   agent ids i64 x N | robot index i32 (-1 if none)
//!   positions f32 x (T * N * 2), row-major (T, N, 2)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::SequenceWindow;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"STGW";
pub const CACHE_VERSION: u8 = 1;

pub fn write_windows(path: &Path, windows: &[SequenceWindow]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.push(CACHE_VERSION);
    buf.extend_from_slice(&(windows.len() as u32).to_le_bytes());
    for w in windows {
        buf.extend_from_slice(&(w.agents() as u32).to_le_bytes());
        buf.extend_from_slice(&(w.frames() as u32).to_le_bytes());
        let name = w.scene.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(Error::Format("scene name too long".into()));
        }
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        for id in &w.agent_ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        let robot = w.robot_index.map_or(-1, |r| r as i32);
        buf.extend_from_slice(&robot.to_le_bytes());
        for p in &w.positions {
            buf.extend_from_slice(&(p[0] as f32).to_le_bytes());
            buf.extend_from_slice(&(p[1] as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("window cache truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const K: usize>(&mut self) -> Result<[u8; K]> {
        Ok(self.take(K)?.try_into().expect("length checked"))
    }
}

pub fn read_windows(path: &Path) -> Result<Vec<SequenceWindow>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(4)? != CACHE_MAGIC {
        return Err(Error::Format(format!("{} is not a window cache", path.display())));
    }
    let version = r.array::<1>()?[0];
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported window cache version {version}")));
    }
    let count = u32::from_le_bytes(r.array()?) as usize;
    let mut windows = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let n = u32::from_le_bytes(r.array()?) as usize;
        let t = u32::from_le_bytes(r.array()?) as usize;
        let name_len = u16::from_le_bytes(r.array()?) as usize;
        let scene = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("scene name is not UTF-8".into()))?
            .to_string();
        let agent_ids = (0..n).map(|_| r.array().map(i64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        let robot = i32::from_le_bytes(r.array()?);
        let robot_index = (robot >= 0).then_some(robot as usize);
        let mut positions = Vec::with_capacity(t * n);
        for _ in 0..t * n {
            let x = f32::from_le_bytes(r.array()?) as f64;
            let y = f32::from_le_bytes(r.array()?) as f64;
            positions.push([x, y]);
        }
        let w = SequenceWindow::new(scene, agent_ids, positions, robot_index)
            .map_err(|e| Error::Format(format!("invalid window record: {e}")))?;
        windows.push(w);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last window".into()));
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<SequenceWindow> {
        vec![
            SequenceWindow::new("eth", vec![4, 7], (0..40).map(|i| [i as f64 * 0.25, -1.5]).collect(), Some(1))
                .unwrap(),
            SequenceWindow::new("hotel", vec![1], (0..20).map(|i| [0.0, i as f64]).collect(), None).unwrap(),
        ]
    }

    #[test]
    fn round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.stgw");
        write_windows(&path, &sample()).unwrap();
        assert_eq!(read_windows(&path).unwrap(), sample());
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.stgw");
        write_windows(&path, &sample()[1..]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"STGW");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &1u32.to_le_bytes());
        // N, T, name, 1 id, robot, 20 * 2 floats
        assert_eq!(bytes.len(), 9 + 4 + 4 + 2 + 5 + 8 + 4 + 160);
        assert_eq!(&bytes[bytes.len() - 164..bytes.len() - 160], &(-1i32).to_le_bytes());
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.stgw");
        write_windows(&path, &sample()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_windows(&path), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_windows(&path), Err(Error::Format(_))));
        let mut bad = bytes;
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_windows(&path), Err(Error::Format(_))));
    }
}
