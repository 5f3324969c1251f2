//! File formats: PFM/PGM rasters, ASCII PLY clouds, CSV tables, JSON documents.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GroundPoint, ImagePoint};
use crate::sgm::Image;
use crate::triangulate::{CloudPoint, PointCloud};

/// Writes a single-channel little-endian PFM. Rows are stored bottom-up as
/// the format requires; `data` is row-major top-down.
pub fn write_pfm(path: impl AsRef<Path>, width: usize, height: usize, data: &[f32]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::invalid("PFM buffer size does not match dimensions"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{width} {height}\n-1.0\n")?;
    for r in (0..height).rev() {
        for v in &data[r * width..(r + 1) * width] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok).map_err(|_| Error::format("header", "non-UTF8 token"))
}

/// Reads a single-channel PFM into `(width, height, top-down data)`.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_token(&mut r)?;
    if magic != "Pf" {
        return Err(Error::format(
            "PFM",
            format!("expected single-channel 'Pf', got {magic:?}"),
        ));
    }
    let parse = |s: String| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::format("PFM", format!("bad dimension {s:?}")))
    };
    let width = parse(read_token(&mut r)?)?;
    let height = parse(read_token(&mut r)?)?;
    let scale: f64 = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::format("PFM", "bad scale"))?;
    let little = scale < 0.0;
    let mut raw = vec![0u8; width * height * 4];
    r.read_exact(&mut raw)?;
    let mut data = vec![0.0f32; width * height];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let (row_from_bottom, col) = (i / width, i % width);
        data[(height - 1 - row_from_bottom) * width + col] = v;
    }
    Ok((width, height, data))
}

pub fn write_image_pfm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    write_pfm(path, img.width, img.height, &img.data)
}

pub fn read_image_pfm(path: impl AsRef<Path>) -> Result<Image> {
    let (w, h, data) = read_pfm(path)?;
    Image::from_vec(w, h, data)
}

/// Writes an 8-bit binary PGM, linearly stretching the image range to 0..255.
pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let (lo, hi) = img.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Reads an 8- or 16-bit binary PGM.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_token(&mut r)?;
    if magic != "P5" {
        return Err(Error::format("PGM", format!("expected binary 'P5', got {magic:?}")));
    }
    let num = |s: String| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::format("PGM", format!("bad header value {s:?}")))
    };
    let width = num(read_token(&mut r)?)?;
    let height = num(read_token(&mut r)?)?;
    let maxval = num(read_token(&mut r)?)?;
    let n = width * height;
    let data = if maxval < 256 {
        let mut raw = vec![0u8; n];
        r.read_exact(&mut raw)?;
        raw.into_iter().map(f32::from).collect()
    } else {
        let mut raw = vec![0u8; 2 * n];
        r.read_exact(&mut raw)?;
        raw.chunks_exact(2)
            .map(|c| f32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    Image::from_vec(width, height, data)
}

/// Writes an ASCII PLY with `x y z quality row col` vertex properties.
pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.points.len())?;
    for name in ["x", "y", "z", "quality", "row", "col"] {
        writeln!(w, "property double {name}")?;
    }
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            p.position.x, p.position.y, p.position.h, p.residual, p.source_pixel.row, p.source_pixel.col
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an ASCII PLY. `x y z` are required; `quality`, `row`, `col` are optional.
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let mut props = Vec::new();
    let mut count = None;
    let mut ascii = false;
    for line in lines.by_ref() {
        let line = line?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "ascii", ..] => ascii = true,
            ["element", "vertex", n] => {
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::format("PLY", "bad vertex count"))?,
                )
            }
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    if !ascii {
        return Err(Error::format("PLY", "only ASCII PLY is supported"));
    }
    let count = count.ok_or_else(|| Error::format("PLY", "missing vertex element"))?;
    let idx = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (idx("x"), idx("y"), idx("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::format("PLY", "x, y, z properties are required")),
    };
    let (iq, ir, ic) = (idx("quality"), idx("row"), idx("col"));
    let mut points = Vec::with_capacity(count);
    for line in lines.take(count) {
        let line = line?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("PLY", format!("bad vertex line {line:?}")))?;
        if vals.len() < props.len() {
            return Err(Error::format("PLY", "short vertex line"));
        }
        let opt = |i: Option<usize>| i.map(|i| vals[i]).unwrap_or(0.0);
        points.push(CloudPoint {
            position: GroundPoint::new(vals[ix], vals[iy], vals[iz]),
            residual: opt(iq),
            source_pixel: ImagePoint::new(opt(ir), opt(ic)),
        });
    }
    if points.len() != count {
        return Err(Error::format("PLY", "fewer vertices than declared"));
    }
    Ok(PointCloud { points })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::format("CSV", format!("{other:?}")),
        }
    } else {
        Error::format("CSV", e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_roundtrip_preserves_orientation_and_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pfm");
        let data = vec![1.0, 2.0, 3.0, f32::NAN, 5.0, 6.0];
        write_pfm(&path, 3, 2, &data).unwrap();
        let (w, h, back) = read_pfm(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back[0], 1.0);
        assert!(back[3].is_nan());
        assert_eq!(back[5], 6.0);
        // Bottom row is stored first.
        let bytes = std::fs::read(&path).unwrap();
        let header_len = "Pf\n3 2\n-1.0\n".len();
        assert!(f32::from_le_bytes(bytes[header_len..header_len + 4].try_into().unwrap()).is_nan());
    }

    #[test]
    fn pgm_roundtrip_stretches_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = Image::from_fn(4, 2, |r, c| (r * 4 + c) as f32 / 7.0);
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.get(0, 0), 0.0);
        assert_eq!(back.get(1, 3), 255.0);
    }

    #[test]
    fn ply_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud {
            points: vec![
                CloudPoint {
                    position: GroundPoint::new(1.5, -2.0, 30.25),
                    residual: 0.125,
                    source_pixel: ImagePoint::new(3.0, 4.0),
                },
                CloudPoint {
                    position: GroundPoint::new(0.0, 0.0, 0.0),
                    residual: 0.0,
                    source_pixel: ImagePoint::new(0.0, 1.0),
                },
            ],
        };
        write_ply(&path, &cloud).unwrap();
        assert_eq!(read_ply(&path).unwrap(), cloud);
    }
}
