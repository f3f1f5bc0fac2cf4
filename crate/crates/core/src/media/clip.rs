use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::RealArray;

pub const CLIP_MAGIC: &[u8; 5] = b"VCLP1";
const HEADER_LEN: usize = 5 + 4 * 4 + 8;

/// True iff `frames` satisfies `(T - 1) mod 8 = 0`.
pub fn validate_temporal(frames: usize) -> bool {
    frames >= 1 && (frames - 1).is_multiple_of(8)
}

fn temporal_error(frames: usize) -> Error {
    let base = frames.saturating_sub(1) / 8 * 8 + 1;
    Error::TemporalConstraint {
        frames,
        lower: base,
        upper: base + 8,
    }
}

/// Start time in seconds of the regenerated suffix when the first
/// `preserved` frames are kept.
pub fn retake_start(preserved: usize, fps: f64) -> Result<f64> {
    if preserved < 1 {
        return Err(Error::Precondition("preserved frame count K must be >= 1".into()));
    }
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::Precondition(format!("fps must be positive, got {fps}")));
    }
    Ok(preserved as f64 / fps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ClipDims {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }

    /// Values per frame.
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn numel(&self) -> usize {
        self.frames * self.frame_len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::InvalidShape {
                shape: self.shape().to_vec(),
                reason: "clip dimensions must be positive".into(),
            });
        }
        if !validate_temporal(self.frames) {
            return Err(temporal_error(self.frames));
        }
        Ok(())
    }
}

/// Parsed container header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipHeader {
    pub dims: ClipDims,
    pub fps: f64,
}

impl ClipHeader {
    /// Parses and validates the fixed-size header at the start of `bytes`.
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < CLIP_MAGIC.len() || &bytes[..5] != CLIP_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "VCLP1",
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let u = |i: usize| {
            let o = 5 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
        };
        let dims = ClipDims::new(u(0), u(1), u(2), u(3));
        let fps = f64::from_le_bytes(bytes[21..29].try_into().unwrap());
        dims.validate()?;
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::OutOfRange(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { dims, fps })
    }

    pub fn payload_len(&self) -> u64 {
        self.dims.numel() as u64 * 8
    }
}

/// A clip of `T` frames with values in `[0, 1]`, stored as a (T, H, W, C)
/// array in frame-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: RealArray,
    fps: f64,
}

impl VideoClip {
    pub fn new(frames: RealArray, fps: f64) -> Result<Self> {
        if frames.ndim() != 4 {
            return Err(Error::InvalidShape {
                shape: frames.shape().to_vec(),
                reason: "clip frames must be (T, H, W, C)".into(),
            });
        }
        let s = frames.shape();
        ClipDims::new(s[0], s[1], s[2], s[3]).validate()?;
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::OutOfRange(format!("fps must be positive, got {fps}")));
        }
        if let Some(i) = frames.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange(format!(
                "pixel value {} at flat index {i} outside [0, 1]",
                frames.data()[i]
            )));
        }
        Ok(Self { frames, fps })
    }

    pub fn dims(&self) -> ClipDims {
        let s = self.frames.shape();
        ClipDims::new(s[0], s[1], s[2], s[3])
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &RealArray {
        &self.frames
    }

    pub fn into_frames(self) -> RealArray {
        self.frames
    }

    /// Pixel values of frame `t`, flattened as (H, W, C).
    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.dims().frame_len();
        &self.frames.data()[t * n..(t + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dims();
        let mut out = Vec::with_capacity(HEADER_LEN + d.numel() * 8);
        out.extend_from_slice(CLIP_MAGIC);
        for v in [d.frames, d.height, d.width, d.channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.fps.to_le_bytes());
        for v in self.frames.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a container; `path` is only used in diagnostics.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let header = ClipHeader::parse(bytes, path)?;
        let expected = HEADER_LEN as u64 + header.payload_len();
        if (bytes.len() as u64) < expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                found: bytes.len() as u64,
            });
        }
        let data: Vec<f64> = bytes[HEADER_LEN..expected as usize]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let frames = RealArray::new(header.dims.shape().to_vec(), data)?;
        Self::new(frames, header.fps)
    }
}

pub fn write_clip(clip: &VideoClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, clip.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_clip(path: impl AsRef<Path>) -> Result<VideoClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    VideoClip::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_clip(dims: ClipDims, seed: u64) -> VideoClip {
        let mut rng = SplitMix64::new(seed);
        let frames = RealArray::from_fn(&dims.shape(), |_| rng.next_f64());
        VideoClip::new(frames, 25.0).unwrap()
    }

    fn header_bytes(t: u32, h: u32, w: u32, c: u32, fps: f64) -> Vec<u8> {
        let mut b = CLIP_MAGIC.to_vec();
        for v in [t, h, w, c] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&fps.to_le_bytes());
        b
    }

    #[test]
    fn temporal_constraint() {
        assert!(validate_temporal(89));
        assert!(validate_temporal(1));
        assert!(validate_temporal(17));
        assert!(!validate_temporal(90));
        assert!(!validate_temporal(0));
    }

    #[test]
    fn retake_start_examples() {
        assert_eq!(retake_start(25, 25.0).unwrap(), 1.0);
        assert!((retake_start(3, 25.0).unwrap() - 0.12).abs() < 1e-15);
        assert!(retake_start(0, 25.0).is_err());
        assert!(retake_start(3, 0.0).is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let clip = random_clip(ClipDims::new(9, 8, 8, 3), 1);
        let bytes = clip.to_bytes();
        let back = VideoClip::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, clip);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_bad_frame_count_with_hint() {
        let bytes = header_bytes(90, 4, 4, 3, 25.0);
        match ClipHeader::parse(&bytes, Path::new("x.vclip")) {
            Err(Error::TemporalConstraint { frames, lower, upper }) => {
                assert_eq!((frames, lower, upper), (90, 89, 97));
            }
            other => panic!("expected temporal error, got {other:?}"),
        }
    }

    #[test]
    fn full_scale_header_is_accepted() {
        let bytes = header_bytes(89, 320, 512, 3, 25.0);
        let h = ClipHeader::parse(&bytes, Path::new("big.vclip")).unwrap();
        assert_eq!(h.dims, ClipDims::new(89, 320, 512, 3));
        assert_eq!(h.fps, 25.0);
        assert_eq!(h.payload_len(), 89 * 320 * 512 * 3 * 8);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let clip = random_clip(ClipDims::new(1, 2, 2, 3), 2);
        let mut bytes = clip.to_bytes();
        assert!(matches!(
            VideoClip::from_bytes(&bytes[..bytes.len() - 1], Path::new("t")),
            Err(Error::Truncated { .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(
            VideoClip::from_bytes(&bytes, Path::new("t")),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn rejects_values_outside_unit_interval() {
        let clip = random_clip(ClipDims::new(1, 2, 2, 3), 3);
        let mut bytes = clip.to_bytes();
        let off = bytes.len() - 8;
        bytes[off..].copy_from_slice(&1.5f64.to_le_bytes());
        assert!(matches!(
            VideoClip::from_bytes(&bytes, Path::new("t")),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.vclip");
        let clip = random_clip(ClipDims::new(17, 4, 4, 3), 4);
        write_clip(&clip, &path).unwrap();
        assert_eq!(read_clip(&path).unwrap(), clip);
    }
}
