//! HSC1 cube files.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes            | content                                  |
//! |------------------|------------------------------------------|
//! | 4                | magic `HSC1`                             |
//! | 3 × u32          | height, width, channels                  |
//! | 2 × f64          | axis start, axis end (cm⁻¹)              |
//! | H·W·C × f32      | cube, row-major, channel-last            |
//! | H·W × u8         | mask (0/1)                               |
//! | u16 + bytes      | sample_id (UTF-8)                        |
//! | u16 + bytes      | patient_id (UTF-8)                       |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{HyperMosaic, SpectraError, WavenumberAxis};

pub const MAGIC: &[u8; 4] = b"HSC1";
pub const HEADER_LEN: usize = 4 + 3 * 4 + 2 * 8;

/// Total file size for a cube of the given shape and id lengths.
pub fn encoded_len(height: usize, width: usize, channels: usize, ids: (usize, usize)) -> usize {
    HEADER_LEN + height * width * channels * 4 + height * width + 2 + ids.0 + 2 + ids.1
}

pub fn encode_cube(mosaic: &HyperMosaic) -> Result<Vec<u8>, SpectraError> {
    let (h, w, c) = (mosaic.height(), mosaic.width(), mosaic.channels());
    let mut out = Vec::with_capacity(encoded_len(
        h,
        w,
        c,
        (mosaic.sample_id.len(), mosaic.patient_id.len()),
    ));
    out.extend_from_slice(MAGIC);
    for dim in [h, w, c] {
        let dim = u32::try_from(dim)
            .map_err(|_| SpectraError::Validation(format!("dimension {dim} exceeds u32")))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    out.extend_from_slice(&mosaic.axis().start().to_le_bytes());
    out.extend_from_slice(&mosaic.axis().end().to_le_bytes());
    for v in mosaic.cube() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(mosaic.mask().iter().map(|&m| m as u8));
    for text in [&mosaic.sample_id, &mosaic.patient_id] {
        let len = u16::try_from(text.len())
            .map_err(|_| SpectraError::Validation("identifier longer than 65535 bytes".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(text.as_bytes());
    }
    Ok(out)
}

pub fn write_cube(mosaic: &HyperMosaic, path: impl AsRef<Path>) -> Result<(), SpectraError> {
    let bytes = encode_cube(mosaic)?;
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<HyperMosaic, SpectraError> {
    let mut reader = BufReader::new(File::open(path)?);
    decode_cube(&mut reader)
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], SpectraError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_text(r: &mut impl Read) -> Result<String, SpectraError> {
    let len = u16::from_le_bytes(read_array(r)?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| SpectraError::Format("identifier is not UTF-8".into()))
}

pub fn decode_cube(r: &mut impl Read) -> Result<HyperMosaic, SpectraError> {
    let magic: [u8; 4] = read_array(r)?;
    if &magic != MAGIC {
        return Err(SpectraError::Format(format!(
            "bad magic {magic:?}, expected HSC1"
        )));
    }
    let h = u32::from_le_bytes(read_array(r)?) as usize;
    let w = u32::from_le_bytes(read_array(r)?) as usize;
    let c = u32::from_le_bytes(read_array(r)?) as usize;
    let start = f64::from_le_bytes(read_array(r)?);
    let end = f64::from_le_bytes(read_array(r)?);
    let axis = WavenumberAxis::new(start, end, c)?;

    let mut raw = vec![0u8; h * w * c * 4];
    r.read_exact(&mut raw)?;
    let cube: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let mut mask_bytes = vec![0u8; h * w];
    r.read_exact(&mut mask_bytes)?;
    let mask = mask_bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(SpectraError::Format(format!(
                "mask byte {other} is not 0/1"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let sample_id = read_text(r)?;
    let patient_id = read_text(r)?;
    HyperMosaic::new(h, w, axis, cube, mask, sample_id, patient_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> HyperMosaic {
        let axis = WavenumberAxis::new(1800.0, 900.0, 3).unwrap();
        let mut m = HyperMosaic::zeros(2, 2, axis).unwrap();
        for p in 0..4 {
            m.set_pixel(p, &[1.0, 1.0, 1.0]);
        }
        m.sample_id = "s1".into();
        m.patient_id = "p1".into();
        m
    }

    #[test]
    fn round_trip_sum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.hsc");
        write_cube(&tiny(), &path).unwrap();
        let back = read_cube(&path).unwrap();
        assert_eq!(back, tiny());
        let sum: f64 = back.cube().iter().map(|&v| v as f64).sum();
        assert_eq!(sum, 12.0);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = encode_cube(&tiny()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = decode_cube(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, SpectraError::Format(_)), "{err}");
    }

    #[test]
    fn truncated_payload_is_io_error() {
        let bytes = encode_cube(&tiny()).unwrap();
        let err = decode_cube(&mut &bytes[..40]).unwrap_err();
        assert!(matches!(err, SpectraError::Io(_)), "{err}");
    }

    #[test]
    fn non_finite_payload_is_validation_error() {
        let mut bytes = encode_cube(&tiny()).unwrap();
        bytes[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = decode_cube(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, SpectraError::Validation(_)), "{err}");
    }

    #[test]
    fn deterministic_bytes_and_size() {
        let a = encode_cube(&tiny()).unwrap();
        let b = encode_cube(&tiny()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), encoded_len(2, 2, 3, (2, 2)));
    }

    #[test]
    fn full_scale_payload_size() {
        // header + 320·320·467 float32 + 320·320 mask bytes + empty ids
        let len = encoded_len(320, 320, 467, (0, 0));
        assert_eq!(len, 32 + 320 * 320 * 467 * 4 + 320 * 320 + 4);
    }

    #[test]
    fn minimal_mosaic_header_reads_back() {
        let axis = WavenumberAxis::new(2.0, 1.0, 2).unwrap();
        let m = HyperMosaic::zeros(1, 1, axis).unwrap();
        let bytes = encode_cube(&m).unwrap();
        let back = decode_cube(&mut bytes.as_slice()).unwrap();
        assert_eq!((back.height(), back.width(), back.channels()), (1, 1, 2));
    }
}
