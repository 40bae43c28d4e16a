//! Binary greyscale PGM (P5) images. Pixel values map linearly between
//! `[-1, 1]` and `[0, maxval]`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::SignalGrid;

/// `[-1, 1] -> [0, 255]`, clamped, rounded half-up.
pub fn to_byte(v: f64) -> u8 {
    let x = ((v + 1.0) * 127.5).clamp(0.0, 255.0);
    (x + 0.5).floor().min(255.0) as u8
}

pub fn from_byte(b: u16, maxval: u16) -> f64 {
    b as f64 / maxval as f64 * 2.0 - 1.0
}

pub fn encode_pgm(pixels: &[f64], h: usize, w: usize) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| to_byte(v)));
    out
}

pub fn write_pgm(path: &Path, pixels: &[f64], h: usize, w: usize) -> Result<()> {
    fs::write(path, encode_pgm(pixels, h, w))?;
    Ok(())
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Image {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Parses a P5 file into `(height, width, pixels)`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(malformed(path, format!("expected P5 magic, found `{}`", fields[0])));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| malformed(path, format!("invalid {what} `{s}`")))
    };
    let w = num(&fields[1], "width")?;
    let h = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if maxval > 65535 {
        return Err(malformed(path, format!("maxval {maxval} exceeds 65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let wide = maxval > 255;
    let need = h * w * if wide { 2 } else { 1 };
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != need {
        return Err(malformed(path, format!("expected {need} raster bytes, found {}", raster.len())));
    }
    let pixels = if wide {
        raster
            .chunks(2)
            .map(|p| from_byte(u16::from_be_bytes([p[0], p[1]]), maxval as u16))
            .collect()
    } else {
        raster.iter().map(|&b| from_byte(b as u16, maxval as u16)).collect()
    };
    Ok((h, w, pixels))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes, path)
}

/// Sorted `.pgm` files of a directory.
pub fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every `.pgm` in `dir` (sorted by file name) into one batch. All
/// images must share a size.
pub fn load_pgm_dir(dir: &Path) -> Result<SignalGrid> {
    let files = pgm_files(dir)?;
    if files.is_empty() {
        return Err(malformed(dir, "directory contains no .pgm files"));
    }
    let mut geometry = None;
    let mut data = Vec::new();
    for f in &files {
        let (h, w, px) = read_pgm(f)?;
        match geometry {
            None => geometry = Some((h, w)),
            Some(g) if g != (h, w) => {
                return Err(Error::Usage(format!(
                    "{} is {h}x{w} but earlier images are {}x{}",
                    f.display(),
                    g.0,
                    g.1
                )))
            }
            _ => {}
        }
        data.extend(px);
    }
    let (h, w) = geometry.expect("at least one file");
    SignalGrid::from_vec(vec![files.len(), h, w], data)
}

/// Writes `{prefix}{index:05}.pgm` per image and returns the paths.
pub fn export_samples_pgm(batch: &SignalGrid, prefix: &Path) -> Result<Vec<PathBuf>> {
    let &[h, w] = batch.spatial() else {
        return Err(Error::Usage(format!("PGM export needs 2-D signals, got {:?}", batch.spatial())));
    };
    let stem = prefix.as_os_str().to_string_lossy().into_owned();
    let mut paths = Vec::with_capacity(batch.batch());
    for i in 0..batch.batch() {
        let p = PathBuf::from(format!("{stem}{i:05}.pgm"));
        write_pgm(&p, batch.sample(i), h, w)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_mapping() {
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.0), 128);
        assert_eq!(to_byte(-7.0), 0);
        assert_eq!(to_byte(3.0), 255);
    }

    #[test]
    fn constant_images() {
        let neg = encode_pgm(&[-1.0; 6], 2, 3);
        assert!(neg.starts_with(b"P5\n3 2\n255\n"));
        assert!(neg[11..].iter().all(|&b| b == 0));
        let pos = encode_pgm(&[1.0; 6], 2, 3);
        assert!(pos[11..].iter().all(|&b| b == 255));
    }

    #[test]
    fn round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let g = SignalGrid::from_vec(vec![2, 2, 3], vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, -1.0, 1.0]).unwrap();
        let paths = export_samples_pgm(&g, &dir.path().join("s_")).unwrap();
        assert!(paths[1].ends_with("s_00001.pgm"));
        assert_eq!(load_pgm_dir(dir.path()).unwrap(), g);

        let p = dir.path().join("bad.pgm");
        fs::write(&p, b"P2\n1 1\n255\n0").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Image { .. })));
        fs::write(&p, b"P5\n2 2\n255\n\x00\x00").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Image { .. })));
        fs::write(&p, b"P5\n# note\n1 1\n255\n\x80").unwrap();
        assert_eq!(read_pgm(&p).unwrap().2, vec![from_byte(128, 255)]);
        write_pgm(&p, &[0.0; 4], 2, 2).unwrap();
        assert!(matches!(load_pgm_dir(dir.path()), Err(Error::Usage(_))));
    }
}
