//! Raster file IO.
//!
//! FPR1 is the toolkit's lossless interchange format: one ASCII header line
//! `FPR1 <width> <height> <kind-tag>\n` followed by `width*height`
//! little-endian IEEE-754 f64 values, row-major, top-left origin.
//! Write-then-read is bit-identical for all finite data.
//!
//! PNG is the 8-bit boundary: grayscale, no alpha, values quantized with
//! round-half-away. Callers clamp before writing; out-of-range is an error.

use crate::error::{FppError, Result};
use crate::raster::{round_half_away, Raster, RasterKind};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn write_raster_to(raster: &Raster, w: &mut impl Write) -> Result<()> {
    writeln!(w, "FPR1 {} {} {}", raster.width(), raster.height(), raster.kind().tag())?;
    for &x in raster.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_raster_from(r: &mut impl Read) -> Result<Raster> {
    let mut br = BufReader::new(r);
    let mut header = String::new();
    br.read_line(&mut header)?;
    let header = header.trim_end_matches('\n');
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 4 || parts[0] != "FPR1" {
        return Err(FppError::MalformedHeader(header.to_string()));
    }
    let width: u64 = parts[1]
        .parse()
        .map_err(|_| FppError::MalformedHeader(format!("bad width `{}`", parts[1])))?;
    let height: u64 = parts[2]
        .parse()
        .map_err(|_| FppError::MalformedHeader(format!("bad height `{}`", parts[2])))?;
    let kind = RasterKind::from_tag(parts[3])?;
    if width == 0 || height == 0 || width.checked_mul(height).is_none_or(|n| n > (1 << 34)) {
        return Err(FppError::DimensionOverflow { width, height });
    }
    let len = (width * height) as usize;
    let mut payload = vec![0u8; len * 8];
    let mut filled = 0;
    while filled < payload.len() {
        let n = br.read(&mut payload[filled..])?;
        if n == 0 {
            return Err(FppError::TruncatedPayload { expected: len * 8, got: filled });
        }
        filled += n;
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Raster::from_data(width as usize, height as usize, kind, data)
}

pub fn write_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    write_raster_to(raster, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let mut f = std::fs::File::open(path)?;
    read_raster_from(&mut f)
}

/// Writes an intensity raster as an 8-bit grayscale PNG.
/// Values must already be in `[0, 255]`; quantization rounds half away
/// from zero. Invalid pixels are written as 0.
pub fn write_png8(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(raster.len());
    for (i, &x) in raster.data().iter().enumerate() {
        if !raster.validity()[i] {
            buf.push(0u8);
            continue;
        }
        if !(0.0..=255.0).contains(&x) {
            return Err(FppError::OutOfRange(x, 0.0, 255.0));
        }
        buf.push(round_half_away(x)? as u8);
    }
    let img = image::GrayImage::from_raw(raster.width() as u32, raster.height() as u32, buf)
        .expect("buffer sized from raster");
    img.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// Reads an 8-bit grayscale PNG as an intensity raster (values 0..=255).
pub fn read_png8(path: impl AsRef<Path>) -> Result<Raster> {
    let img = image::open(path.as_ref())?.into_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(f64::from).collect();
    Raster::from_data(w as usize, h as usize, RasterKind::Intensity, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn round_trip(r: &Raster) -> Raster {
        let mut buf = Vec::new();
        write_raster_to(r, &mut buf).unwrap();
        read_raster_from(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn zeros_2x2_payload_and_round_trip() {
        let r = Raster::new(2, 2, RasterKind::Intensity).unwrap();
        let mut buf = Vec::new();
        write_raster_to(&r, &mut buf).unwrap();
        let header_len = "FPR1 2 2 intensity\n".len();
        assert_eq!(buf.len(), header_len + 4 * 8);
        assert_eq!(round_trip(&r).data(), r.data());
    }

    #[test]
    fn pi_round_trips_bit_exact() {
        let r = Raster::constant(3, 1, RasterKind::WrappedPhase, PI).unwrap();
        let back = round_trip(&r);
        assert_eq!(back.data()[0].to_bits(), PI.to_bits());
        assert_eq!(back.kind(), RasterKind::WrappedPhase);
    }

    #[test]
    fn zero_width_header_rejected() {
        let mut buf = b"FPR1 0 4 intensity\n".to_vec();
        buf.extend_from_slice(&[0u8; 32]);
        match read_raster_from(&mut buf.as_slice()) {
            Err(FppError::DimensionOverflow { width: 0, height: 4 }) => {}
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_and_truncated_are_distinct() {
        let mut junk = b"NOPE 2 2 intensity\n".to_vec();
        junk.extend_from_slice(&[0u8; 32]);
        assert!(matches!(read_raster_from(&mut junk.as_slice()), Err(FppError::MalformedHeader(_))));

        let mut short = b"FPR1 2 2 intensity\n".to_vec();
        short.extend_from_slice(&[0u8; 16]);
        assert!(matches!(
            read_raster_from(&mut short.as_slice()),
            Err(FppError::TruncatedPayload { expected: 32, got: 16 })
        ));
    }

    #[test]
    fn png_round_trip_and_tie() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut r = Raster::constant(4, 3, RasterKind::Intensity, 255.0).unwrap();
        r.set(1, 1, 127.5);
        write_png8(&r, &path).unwrap();
        let back = read_png8(&path).unwrap();
        assert_eq!(back.get(0, 0), 255.0);
        assert_eq!(back.get(1, 1), 128.0); // tie away from zero
    }

    #[test]
    fn png_out_of_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::constant(2, 2, RasterKind::Intensity, -1.0).unwrap();
        assert!(matches!(
            write_png8(&r, dir.path().join("bad.png")),
            Err(FppError::OutOfRange(..))
        ));
    }

    proptest! {
        #[test]
        fn fpr1_round_trip_bit_exact(
            w in 1usize..12,
            h in 1usize..12,
            seed in any::<u64>(),
        ) {
            let mut state = seed | 1;
            let data: Vec<f64> = (0..w * h)
                .map(|_| {
                    // splitmix-style scramble into a finite f64
                    state = state.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0xBF58476D1CE4E5B9);
                    let bits = state ^ (state >> 31);
                    f64::from_bits((bits & 0x7FEF_FFFF_FFFF_FFFF) | (bits & 0x8000_0000_0000_0000))
                })
                .collect();
            let r = Raster::from_data(w, h, RasterKind::Depth, data).unwrap();
            let back = round_trip(&r);
            for (a, b) in r.data().iter().zip(back.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
