//! Binary PGM (P5) and PPM (P6) image files, 8 bits per sample.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use numerics::Array;

use crate::error::{CitySimError, Result};

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a [1, h, w] array in [0, 1] as a P5 file.
pub fn write_pgm(path: &Path, img: &Array<f32>) -> Result<()> {
    let s = img.shape();
    if s.len() != 3 || s[0] != 1 {
        return Err(CitySimError::Format(format!("P5 wants one channel, got shape {:?}", s)));
    }
    let (h, w) = (s[1], s[2]);
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", w, h)?;
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Write a [3, h, w] array in [0, 1] as a P6 file (interleaving channels).
pub fn write_ppm(path: &Path, img: &Array<f32>) -> Result<()> {
    let s = img.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(CitySimError::Format(format!("P6 wants three channels, got shape {:?}", s)));
    }
    let (h, w) = (s[1], s[2]);
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{} {}\n255\n", w, h)?;
    let mut bytes = Vec::with_capacity(3 * h * w);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                bytes.push(quantize(img.at3(c, y, x)));
            }
        }
    }
    out.write_all(&bytes)?;
    Ok(())
}

/// One whitespace-delimited ASCII field, skipping `#` comments.
fn field(r: &mut impl Read) -> Result<String> {
    let mut buf = [0u8; 1];
    let mut s = String::new();
    let mut in_comment = false;
    loop {
        if r.read(&mut buf)? == 0 {
            if s.is_empty() {
                return Err(CitySimError::Format("truncated header".into()));
            }
            return Ok(s);
        }
        let c = buf[0];
        if in_comment {
            if c == b'\n' {
                in_comment = false;
            }
            continue;
        }
        match c {
            b'#' if s.is_empty() => in_comment = true,
            c if c.is_ascii_whitespace() => {
                if !s.is_empty() {
                    return Ok(s);
                }
            }
            c => s.push(c as char),
        }
    }
}

fn header(r: &mut impl Read, magic: &str) -> Result<(usize, usize)> {
    let m = field(r)?;
    if m != magic {
        return Err(CitySimError::Format(format!("expected {}, got {}", magic, m)));
    }
    let w: usize =
        field(r)?.parse().map_err(|_| CitySimError::Format("bad width".into()))?;
    let h: usize =
        field(r)?.parse().map_err(|_| CitySimError::Format("bad height".into()))?;
    let maxval: usize =
        field(r)?.parse().map_err(|_| CitySimError::Format("bad maxval".into()))?;
    if maxval != 255 {
        return Err(CitySimError::Format(format!("only maxval 255 is supported, got {}", maxval)));
    }
    if w == 0 || h == 0 {
        return Err(CitySimError::Format("zero image dimension".into()));
    }
    Ok((w, h))
}

/// Read a P5 file into a [1, h, w] array in [0, 1].
pub fn read_pgm(path: &Path) -> Result<Array<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let (w, h) = header(&mut r, "P5")?;
    let mut bytes = vec![0u8; h * w];
    r.read_exact(&mut bytes)?;
    let mut img = Array::zeros(vec![1, h, w]);
    for (dst, &b) in img.data_mut().iter_mut().zip(&bytes) {
        *dst = b as f32 / 255.0;
    }
    Ok(img)
}

/// Read a P6 file into a [3, h, w] array in [0, 1].
pub fn read_ppm(path: &Path) -> Result<Array<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let (w, h) = header(&mut r, "P6")?;
    let mut bytes = vec![0u8; 3 * h * w];
    r.read_exact(&mut bytes)?;
    let mut img = Array::zeros(vec![3, h, w]);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                img.set3(c, y, x, bytes[(y * w + x) * 3 + c] as f32 / 255.0);
            }
        }
    }
    Ok(img)
}
