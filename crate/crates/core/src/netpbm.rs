//! Binary Netpbm readers/writers: P5 graymaps for prior maps and instance
//! masks, P6 pixmaps for RGB inputs. Maxval is fixed at 255 and round-trips
//! are bit-exact.

use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetpbmError {
    #[error("bad netpbm data: {0}")]
    Format(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A raw gray image (one byte per pixel, row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// A raw RGB image (three bytes per pixel, row-major, interleaved).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Header tokens are separated by whitespace and `#` comments, per the
/// Netpbm convention.
struct HeaderReader<'a, R: Read> {
    source: &'a mut R,
}

impl<'a, R: Read> HeaderReader<'a, R> {
    fn byte(&mut self) -> Result<Option<u8>, NetpbmError> {
        let mut b = [0u8; 1];
        match self.source.read(&mut b)? {
            0 => Ok(None),
            _ => Ok(Some(b[0])),
        }
    }

    fn token(&mut self) -> Result<String, NetpbmError> {
        let mut tok = Vec::new();
        loop {
            match self.byte()? {
                None => break,
                Some(b'#') if tok.is_empty() => {
                    // comment runs to end of line
                    while let Some(c) = self.byte()? {
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => {
                    if !tok.is_empty() {
                        break;
                    }
                }
                Some(c) => tok.push(c),
            }
        }
        if tok.is_empty() {
            return Err(NetpbmError::Format("unexpected end of header".into()));
        }
        String::from_utf8(tok).map_err(|_| NetpbmError::Format("non-ASCII header token".into()))
    }

    fn dimension(&mut self, what: &str) -> Result<usize, NetpbmError> {
        let tok = self.token()?;
        let value: usize = tok
            .parse()
            .map_err(|_| NetpbmError::Format(format!("bad {what} `{tok}`")))?;
        if value == 0 {
            return Err(NetpbmError::Format(format!("{what} must be positive")));
        }
        Ok(value)
    }
}

fn read_header<R: Read>(source: &mut R, magic: &str) -> Result<(usize, usize), NetpbmError> {
    let mut header = HeaderReader { source };
    let found = header.token()?;
    if found != magic {
        return Err(NetpbmError::Format(format!("expected magic `{magic}`, found `{found}`")));
    }
    let width = header.dimension("width")?;
    let height = header.dimension("height")?;
    let maxval = header.dimension("maxval")?;
    if maxval != 255 {
        return Err(NetpbmError::Format(format!("unsupported maxval {maxval}, expected 255")));
    }
    Ok((width, height))
}

fn read_payload<R: Read>(source: &mut R, expected: usize) -> Result<Vec<u8>, NetpbmError> {
    let mut pixels = vec![0u8; expected];
    let mut filled = 0;
    while filled < expected {
        match source.read(&mut pixels[filled..])? {
            0 => return Err(NetpbmError::TruncatedData { expected, found: filled }),
            n => filled += n,
        }
    }
    Ok(pixels)
}

/// Read a binary P5 graymap with maxval 255.
pub fn read_p5<R: Read>(source: &mut R) -> Result<GrayImage, NetpbmError> {
    let (width, height) = read_header(source, "P5")?;
    let pixels = read_payload(source, width * height)?;
    Ok(GrayImage { width, height, pixels })
}

/// Write a binary P5 graymap with maxval 255.
pub fn write_p5<W: Write>(sink: &mut W, image: &GrayImage) -> Result<(), NetpbmError> {
    assert_eq!(image.pixels.len(), image.width * image.height, "pixel buffer size mismatch");
    write!(sink, "P5\n{} {}\n255\n", image.width, image.height)?;
    sink.write_all(&image.pixels)?;
    Ok(())
}

/// Read a binary P6 pixmap with maxval 255.
pub fn read_p6<R: Read>(source: &mut R) -> Result<RgbImage, NetpbmError> {
    let (width, height) = read_header(source, "P6")?;
    let pixels = read_payload(source, width * height * 3)?;
    Ok(RgbImage { width, height, pixels })
}

/// Write a binary P6 pixmap with maxval 255.
pub fn write_p6<W: Write>(sink: &mut W, image: &RgbImage) -> Result<(), NetpbmError> {
    assert_eq!(image.pixels.len(), image.width * image.height * 3, "pixel buffer size mismatch");
    write!(sink, "P6\n{} {}\n255\n", image.width, image.height)?;
    sink.write_all(&image.pixels)?;
    Ok(())
}
