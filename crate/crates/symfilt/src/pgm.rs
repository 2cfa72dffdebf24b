//! Binary greyscale PGM (`P5`, 8-bit) reading and writing.

use std::fs;
use std::path::Path;

use symfilt_core::image::Image;

use crate::{Error, Result};

struct Header<'a> {
    rest: &'a [u8],
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        loop {
            match self.rest.first() {
                Some(b) if b.is_ascii_whitespace() => self.rest = &self.rest[1..],
                Some(b'#') => {
                    let end = self.rest.iter().position(|&b| b == b'\n').unwrap_or(self.rest.len());
                    self.rest = &self.rest[end..];
                }
                _ => return,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space();
        let len = self.rest.iter().take_while(|b| b.is_ascii_digit()).count();
        if len == 0 {
            return Err(Error::Malformed("expected a header number"));
        }
        let text = std::str::from_utf8(&self.rest[..len]).expect("ascii digits");
        self.rest = &self.rest[len..];
        text.parse().map_err(|_| Error::Malformed("header number out of range"))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let magic = bytes.get(..2).unwrap_or(bytes);
    match magic {
        b"P5" => {}
        b"P2" => return Err(Error::Unsupported("ASCII PGM (P2); only binary P5 is read")),
        b"P3" | b"P6" => return Err(Error::Unsupported("colour PPM; convert to greyscale PGM first")),
        _ => return Err(Error::NotPgm(String::from_utf8_lossy(magic).into_owned())),
    }
    let mut h = Header { rest: &bytes[2..] };
    let width = h.number()?;
    let height = h.number()?;
    let maxval = h.number()?;
    if maxval == 0 {
        return Err(Error::Malformed("maxval must be positive"));
    }
    if maxval > 255 {
        return Err(Error::Unsupported("16-bit PGM; only 8-bit samples are read"));
    }
    if width == 0 || height == 0 {
        return Err(Error::Malformed("empty image"));
    }
    match h.rest.first() {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::Malformed("missing whitespace after maxval")),
    }
    let pixels = &h.rest[1..];
    let n = width * height;
    if pixels.len() < n {
        return Err(Error::Malformed("truncated pixel data"));
    }
    let max = maxval as f64;
    let data = pixels[..n].iter().map(|&b| b as f64 / max).collect();
    Ok(Image::new(height, width, data)?)
}

/// 8-bit `P5` encoding of the clamped, rounded image.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}
