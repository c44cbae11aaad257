//! Reader for the IDX image/label files used by MNIST.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

fn check_magic(found: u32, expected: u32, what: &str) -> Result<()> {
    if found != expected {
        return Err(Error::invalid(format!(
            "{what}: bad IDX magic {found}, expected {expected}"
        )));
    }
    Ok(())
}

/// Images scaled to `[0, 1]`, row-major, plus the pixel count per image.
pub fn parse_images<R: Read>(mut r: R) -> Result<(Vec<f64>, usize)> {
    check_magic(read_u32(&mut r)?, IMAGE_MAGIC, "images")?;
    let n = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let pixels = rows * cols;
    let mut raw = vec![0u8; n * pixels];
    r.read_exact(&mut raw)
        .map_err(|e| Error::invalid(format!("images: truncated IDX payload ({e})")))?;
    Ok((raw.into_iter().map(|p| f64::from(p) / 255.0).collect(), pixels))
}

pub fn parse_labels<R: Read>(mut r: R) -> Result<Vec<usize>> {
    check_magic(read_u32(&mut r)?, LABEL_MAGIC, "labels")?;
    let n = read_u32(&mut r)? as usize;
    let mut raw = vec![0u8; n];
    r.read_exact(&mut raw)
        .map_err(|e| Error::invalid(format!("labels: truncated IDX payload ({e})")))?;
    Ok(raw.into_iter().map(usize::from).collect())
}

/// Loads an image file and its label file.
pub fn load(images: &Path, labels: &Path) -> Result<(Vec<f64>, usize, Vec<usize>)> {
    let (pixels, dim) = parse_images(BufReader::new(File::open(images)?))?;
    let labels = parse_labels(BufReader::new(File::open(labels)?))?;
    if pixels.len() != labels.len() * dim {
        return Err(Error::invalid(format!(
            "{} images but {} labels",
            pixels.len() / dim.max(1),
            labels.len()
        )));
    }
    Ok((pixels, dim, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    #[test]
    fn parses_tiny_files() {
        let mut img = header(IMAGE_MAGIC, &[2, 2, 2]);
        img.extend_from_slice(&[0, 255, 51, 102, 1, 2, 3, 4]);
        let (pixels, dim) = parse_images(img.as_slice()).unwrap();
        assert_eq!(dim, 4);
        assert_eq!(pixels[1], 1.0);
        assert_eq!(pixels[2], 0.2);

        let mut lab = header(LABEL_MAGIC, &[2]);
        lab.extend_from_slice(&[7, 3]);
        assert_eq!(parse_labels(lab.as_slice()).unwrap(), vec![7, 3]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let lab = header(IMAGE_MAGIC, &[1]);
        assert!(parse_labels(lab.as_slice()).is_err());
        let mut img = header(IMAGE_MAGIC, &[3, 2, 2]);
        img.extend_from_slice(&[0; 5]);
        assert!(parse_images(img.as_slice()).is_err());
    }
}
