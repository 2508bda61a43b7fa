//! Netpbm grayscale (PGM) reading and writing, P2 (ASCII) and P5 (binary).

use std::io::{Read, Write};

use crate::error::{AppError, Result};

pub struct PgmImage {
    pub rows: usize,
    pub cols: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

/// Pull the next whitespace-separated token, skipping `#` comments.
fn next_token(data: &[u8], pos: &mut usize) -> Result<String> {
    let mut tok = String::new();
    while *pos < data.len() {
        let b = data[*pos];
        if b == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            if !tok.is_empty() {
                return Ok(tok);
            }
            *pos += 1;
        } else {
            tok.push(b as char);
            *pos += 1;
        }
    }
    if tok.is_empty() {
        Err(AppError::data("truncated PGM header"))
    } else {
        Ok(tok)
    }
}

fn parse_usize(tok: &str, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| AppError::data(format!("bad PGM {what}: '{tok}'")))
}

pub fn read_pgm(mut reader: impl Read) -> Result<PgmImage> {
    let mut data = Vec::new();
    reader
        .read_to_end(&mut data)
        .map_err(|e| AppError::data(format!("reading PGM: {e}")))?;
    let mut pos = 0usize;
    let magic = next_token(&data, &mut pos)?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(AppError::data(format!("not a PGM file (magic '{other}')"))),
    };
    let cols = parse_usize(&next_token(&data, &mut pos)?, "width")?;
    let rows = parse_usize(&next_token(&data, &mut pos)?, "height")?;
    let maxval = parse_usize(&next_token(&data, &mut pos)?, "maxval")?;
    if cols == 0 || rows == 0 {
        return Err(AppError::data("PGM dimensions must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(AppError::data(format!("unsupported PGM maxval {maxval}")));
    }

    let n = rows * cols;
    let mut pixels = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        if data.len() < pos + need {
            return Err(AppError::data("truncated PGM raster"));
        }
        if wide {
            for i in 0..n {
                pixels.push(u16::from_be_bytes([data[pos + 2 * i], data[pos + 2 * i + 1]]));
            }
        } else {
            pixels.extend(data[pos..pos + n].iter().map(|&b| b as u16));
        }
    } else {
        for _ in 0..n {
            let v = parse_usize(&next_token(&data, &mut pos)?, "pixel")?;
            pixels.push(v as u16);
        }
    }
    if pixels.iter().any(|&p| p as usize > maxval) {
        return Err(AppError::data("PGM pixel exceeds maxval"));
    }
    Ok(PgmImage {
        rows,
        cols,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn write_pgm_binary(mut w: impl Write, img: &PgmImage) -> Result<()> {
    let head = format!("P5\n{} {}\n{}\n", img.cols, img.rows, img.maxval);
    let mut bytes = head.into_bytes();
    if img.maxval > 255 {
        for &p in &img.pixels {
            bytes.extend_from_slice(&p.to_be_bytes());
        }
    } else {
        bytes.extend(img.pixels.iter().map(|&p| p as u8));
    }
    w.write_all(&bytes)
        .map_err(|e| AppError::data(format!("writing PGM: {e}")))
}

pub fn write_pgm_ascii(mut w: impl Write, img: &PgmImage) -> Result<()> {
    let mut out = format!("P2\n{} {}\n{}\n", img.cols, img.rows, img.maxval);
    for row in img.pixels.chunks(img.cols) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    w.write_all(out.as_bytes())
        .map_err(|e| AppError::data(format!("writing PGM: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_and_binary_load_identically() {
        let img = PgmImage {
            rows: 2,
            cols: 3,
            maxval: 255,
            pixels: vec![0, 17, 255, 128, 64, 3],
        };
        let mut bin = Vec::new();
        write_pgm_binary(&mut bin, &img).unwrap();
        let mut asc = Vec::new();
        write_pgm_ascii(&mut asc, &img).unwrap();
        let a = read_pgm(&bin[..]).unwrap();
        let b = read_pgm(&asc[..]).unwrap();
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(a.rows, 2);
        assert_eq!(b.cols, 3);
    }

    #[test]
    fn sixteen_bit_binary_roundtrip() {
        let img = PgmImage {
            rows: 1,
            cols: 4,
            maxval: 65535,
            pixels: vec![0, 1, 65535, 1000],
        };
        let mut bin = Vec::new();
        write_pgm_binary(&mut bin, &img).unwrap();
        let back = read_pgm(&bin[..]).unwrap();
        assert_eq!(back.pixels, img.pixels);
        assert_eq!(back.maxval, 65535);
    }

    #[test]
    fn comments_are_skipped() {
        let text = "P2\n# a comment\n2 1\n# another\n255\n7 9\n";
        let img = read_pgm(text.as_bytes()).unwrap();
        assert_eq!(img.pixels, vec![7, 9]);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(read_pgm(&b"P6\n1 1\n255\nxxx"[..]).is_err());
    }
}
