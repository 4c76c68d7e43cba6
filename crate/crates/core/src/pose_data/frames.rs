//! 8-bit grayscale frames and binary PGM (P5) I/O.
//!
//! Frame files are named by zero-padded frame index, e.g. `000017.pgm`.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("missing frame {0}")]
    MissingFrame(u32),
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: String, reason: String },
    #[error("frame {index}: dimensions {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        index: u32,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("no frames found in {0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == (width as usize) * (height as usize)).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.data[(y * self.width + x) as usize] = value;
    }

    /// Saturating add, used when accumulating rendered blobs.
    pub fn add(&mut self, x: u32, y: u32, value: u8) {
        let px = &mut self.data[(y * self.width + x) as usize];
        *px = px.saturating_add(value);
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() + 32);
        out.extend_from_slice(format!("P5\n{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), FrameError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.encode_pgm())?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<Self, FrameError> {
        let bytes = fs::read(path)?;
        decode_pgm(&bytes).map_err(|reason| FrameError::CorruptImage {
            path: path.display().to_string(),
            reason,
        })
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (P5) file".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and '#' comment lines between header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err("malformed header field".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| "malformed header".to_string())?
            .parse::<usize>()
            .map_err(|_| "malformed header field".to_string())?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, expected 255"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing separator after header".into()),
    }
    let expected = width * height;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(format!(
            "pixel data truncated: {} of {} bytes",
            data.len(),
            expected
        ));
    }
    GrayImage::from_raw(width as u32, height as u32, data[..expected].to_vec())
        .ok_or_else(|| "inconsistent dimensions".into())
}

/// The frames of one sequence, all with identical dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameStore {
    frames: Vec<GrayImage>,
}

impl FrameStore {
    pub fn new(frames: Vec<GrayImage>) -> Option<Self> {
        if frames.is_empty() {
            return None;
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        frames
            .iter()
            .all(|f| f.width() == w && f.height() == h)
            .then_some(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.frames[0].width()
    }

    pub fn height(&self) -> u32 {
        self.frames[0].height()
    }

    pub fn frame(&self, index: u32) -> Option<&GrayImage> {
        self.frames.get(index as usize)
    }

    pub fn frames(&self) -> &[GrayImage] {
        &self.frames
    }

    /// Write all frames as `%06d.pgm` files under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), FrameError> {
        fs::create_dir_all(dir)?;
        for (i, frame) in self.frames.iter().enumerate() {
            frame.write_pgm(&dir.join(format!("{i:06}.pgm")))?;
        }
        Ok(())
    }
}

/// Load all frames from a directory of PGM files named by frame index.
///
/// The frame count is inferred from the highest index present; any gap below
/// it is reported as [`FrameError::MissingFrame`]. All frames must share the
/// dimensions of frame 0.
pub fn load_frames(dir: &Path) -> Result<FrameStore, FrameError> {
    let mut indexed: Vec<(u32, std::path::PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if let Some(stem) = name.strip_suffix(".pgm") {
            if let Ok(index) = stem.parse::<u32>() {
                indexed.push((index, path));
            }
        }
    }
    if indexed.is_empty() {
        return Err(FrameError::Empty(dir.display().to_string()));
    }
    indexed.sort_by_key(|(i, _)| *i);
    let max_index = indexed.last().unwrap().0;
    let mut frames = Vec::with_capacity(max_index as usize + 1);
    let mut iter = indexed.into_iter().peekable();
    for want in 0..=max_index {
        match iter.peek() {
            Some(&(idx, _)) if idx == want => {
                let (_, path) = iter.next().unwrap();
                let img = GrayImage::read_pgm(&path)?;
                if let Some(first) = frames.first() {
                    let first: &GrayImage = first;
                    if img.width() != first.width() || img.height() != first.height() {
                        return Err(FrameError::DimensionMismatch {
                            index: want,
                            got_w: img.width(),
                            got_h: img.height(),
                            want_w: first.width(),
                            want_h: first.height(),
                        });
                    }
                }
                frames.push(img);
            }
            _ => return Err(FrameError::MissingFrame(want)),
        }
    }
    Ok(FrameStore { frames })
}
