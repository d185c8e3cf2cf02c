//! Binary PPM (P6) and PGM (P5) images with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageU8;

pub fn encode(img: &ImageU8) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn decode(bytes: &[u8]) -> Result<ImageU8> {
    let mut pos = 0usize;
    let magic = token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P6" => 3,
        "P5" => 1,
        other => return Err(Error::parse(0, format!("bad magic `{other}`, expected P5 or P6"))),
    };
    let width = number(bytes, &mut pos)?;
    let height = number(bytes, &mut pos)?;
    let maxval = number(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::parse(pos, format!("unsupported maxval {maxval}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::parse(pos, "expected whitespace after header")),
    }
    let need = width * height * channels;
    let have = bytes.len() - pos;
    if have < need {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated pixel data: expected {need} bytes, found {have}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(pos, "zero image dimension"));
    }
    ImageU8::new(width, height, channels, bytes[pos..pos + need].to_vec())
}

fn skip_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    skip_space(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(start, "unexpected end of header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let start = *pos;
    let t = token(bytes, pos)?;
    t.parse()
        .map_err(|_| Error::parse(start, format!("expected integer, found `{t}`")))
}

pub fn read(path: &Path) -> Result<ImageU8> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: &Path, img: &ImageU8) -> Result<()> {
    super::write_atomic(path, &encode(img))
}
