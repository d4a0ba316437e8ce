use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::FrameSequence;

/// Frame-stack file magic.
const MAGIC: &[u8; 4] = b"AVFS";

/// Writes the raw grayscale stack: magic, u32 LE height/width/frame count,
/// then frame-major pixel bytes.
pub fn write_frame_stack(path: &Path, seq: &FrameSequence) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&(seq.height as u32).to_le_bytes());
    header.extend_from_slice(&(seq.width as u32).to_le_bytes());
    header.extend_from_slice(&(seq.n_frames() as u32).to_le_bytes());
    file.write_all(&header).map_err(|e| Error::io(path, e))?;
    file.write_all(seq.bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_frame_stack(path: &Path) -> Result<FrameSequence> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Parse {
            what: "frame stack magic",
            input: path.display().to_string(),
        });
    }
    let read_u32 = |offset: usize| {
        u32::from_le_bytes(header[offset..offset + 4].try_into().unwrap()) as usize
    };
    let height = read_u32(4);
    let width = read_u32(8);
    let n_frames = read_u32(12);
    if height == 0 || width == 0 || n_frames == 0 {
        return Err(Error::Parse {
            what: "frame stack dimensions",
            input: format!("{height}x{width}x{n_frames} in {}", path.display()),
        });
    }
    let mut data = vec![0u8; height * width * n_frames];
    file.read_exact(&mut data).map_err(|e| Error::io(path, e))?;
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Parse {
            what: "frame stack trailing bytes",
            input: path.display().to_string(),
        });
    }
    FrameSequence::from_frames(height, width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.frames");
        let mut seq = FrameSequence::new(7, 9, 3);
        for t in 0..3 {
            for y in 0..7 {
                for x in 0..9 {
                    seq.set(t, y, x, ((t * 63 + y * 9 + x) % 256) as u8);
                }
            }
        }
        write_frame_stack(&path, &seq).unwrap();
        let back = read_frame_stack(&path).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.frames");
        std::fs::write(&bad, b"NOTAFRAMESTACK").unwrap();
        assert!(read_frame_stack(&bad).is_err());

        let path = dir.path().join("trunc.frames");
        let seq = FrameSequence::new(4, 4, 2);
        write_frame_stack(&path, &seq).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_frame_stack(&path).is_err());
    }
}
