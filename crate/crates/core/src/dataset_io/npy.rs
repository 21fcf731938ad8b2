//! Reader and writer for the v1.0 `.npy` array layout.
//!
//! Only two-dimensional C-order arrays are supported. Probabilities are
//! written as `<f4` and masks as `|u1`; on read, `<f8` probabilities and
//! `|b1` masks from third-party tooling are accepted as well.

use std::path::Path;

use super::{GroundTruthMask, ProbabilityMap};
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// A decoded array file.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    Probabilities(ProbabilityMap),
    Mask(GroundTruthMask),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
    U1,
    B1,
}

impl Dtype {
    fn parse(descr: &str) -> Result<Self> {
        match descr {
            "<f4" => Ok(Dtype::F4),
            "<f8" => Ok(Dtype::F8),
            "|u1" | "<u1" => Ok(Dtype::U1),
            "|b1" => Ok(Dtype::B1),
            other => Err(Error::Format(format!("unsupported dtype '{other}'"))),
        }
    }

    fn item_size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
            Dtype::U1 | Dtype::B1 => 1,
        }
    }
}

pub fn encode_array(array: &ArrayData) -> Vec<u8> {
    let (descr, height, width) = match array {
        ArrayData::Probabilities(p) => ("<f4", p.height(), p.width()),
        ArrayData::Mask(m) => ("|u1", m.height(), m.width()),
    };
    let mut header = format!(
        "{{'descr': '{descr}', 'fortran_order': False, 'shape': ({height}, {width}), }}"
    );
    // magic + version + u16 length + header + trailing newline
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', padding));
    header.push('\n');

    let mut out = Vec::with_capacity(unpadded + padding + height * width * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match array {
        ArrayData::Probabilities(p) => {
            for v in p.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        ArrayData::Mask(m) => out.extend_from_slice(m.values()),
    }
    out
}

pub fn decode_array(bytes: &[u8]) -> Result<ArrayData> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing \\x93NUMPY magic".into()));
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Format("truncated header length".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(Error::Format(format!("unsupported format version {v}"))),
    };
    let data_start = header_start + header_len;
    if bytes.len() < data_start {
        return Err(Error::Format("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[header_start..data_start])
        .map_err(|_| Error::Format("header is not valid text".into()))?;
    let dict = HeaderDict::parse(header)?;
    if dict.fortran_order {
        return Err(Error::Format("Fortran-order arrays are not supported".into()));
    }
    let (height, width) = dict.shape;
    let n = height
        .checked_mul(width)
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let data = &bytes[data_start..];
    if data.len() != n * dict.dtype.item_size() {
        return Err(Error::Format(format!(
            "expected {} data bytes for shape ({height}, {width}), found {}",
            n * dict.dtype.item_size(),
            data.len()
        )));
    }

    match dict.dtype {
        Dtype::F4 => {
            let values = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            ProbabilityMap::new(height, width, values).map(ArrayData::Probabilities)
        }
        Dtype::F8 => {
            let wide: Vec<f64> = data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            if let Some(v) = wide.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
                return Err(Error::Validation(format!(
                    "probability {v} outside [0, 1]"
                )));
            }
            let values = wide.into_iter().map(|v| v as f32).collect();
            ProbabilityMap::new(height, width, values).map(ArrayData::Probabilities)
        }
        Dtype::U1 | Dtype::B1 => {
            GroundTruthMask::new(height, width, data.to_vec()).map(ArrayData::Mask)
        }
    }
}

pub fn read_array(path: impl AsRef<Path>) -> Result<ArrayData> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_array(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_array(path: impl AsRef<Path>, array: &ArrayData) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_array(array)).map_err(|e| Error::io(path, e))
}

pub fn read_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    match read_array(path.as_ref())? {
        ArrayData::Probabilities(p) => Ok(p),
        ArrayData::Mask(_) => Err(Error::Format(format!(
            "{}: expected a float probability array, found an integer mask",
            path.as_ref().display()
        ))),
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<GroundTruthMask> {
    match read_array(path.as_ref())? {
        ArrayData::Mask(m) => Ok(m),
        ArrayData::Probabilities(_) => Err(Error::Format(format!(
            "{}: expected an integer mask array, found floats",
            path.as_ref().display()
        ))),
    }
}

pub fn write_probability_map(path: impl AsRef<Path>, probs: &ProbabilityMap) -> Result<()> {
    write_array(path, &ArrayData::Probabilities(probs.clone()))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &GroundTruthMask) -> Result<()> {
    write_array(path, &ArrayData::Mask(mask.clone()))
}

struct HeaderDict {
    dtype: Dtype,
    fortran_order: bool,
    shape: (usize, usize),
}

impl HeaderDict {
    fn parse(header: &str) -> Result<Self> {
        let header = header.trim();
        if !(header.starts_with('{') && header.ends_with('}')) {
            return Err(Error::Format(format!("header is not a dictionary: {header}")));
        }
        let descr = quoted_value(header, "descr")?;
        let fortran_order = match raw_value(header, "fortran_order")? {
            v if v.starts_with("False") => false,
            v if v.starts_with("True") => true,
            v => return Err(Error::Format(format!("bad fortran_order '{v}'"))),
        };
        let shape_src = raw_value(header, "shape")?;
        let shape_src = shape_src
            .strip_prefix('(')
            .and_then(|s| s.split_once(')'))
            .map(|(inner, _)| inner)
            .ok_or_else(|| Error::Format("shape is not a tuple".into()))?;
        let dims = shape_src
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad shape entry '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let shape = match dims.as_slice() {
            [h, w] => (*h, *w),
            _ => {
                return Err(Error::Format(format!(
                    "expected a 2-D array, found shape {dims:?}"
                )))
            }
        };
        Ok(Self {
            dtype: Dtype::parse(&descr)?,
            fortran_order,
            shape,
        })
    }
}

fn raw_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}':");
    let start = header
        .find(&needle)
        .ok_or_else(|| Error::Format(format!("header lacks key '{key}'")))?;
    Ok(header[start + needle.len()..].trim_start())
}

fn quoted_value(header: &str, key: &str) -> Result<String> {
    let rest = raw_value(header, key)?;
    let rest = rest
        .strip_prefix('\'')
        .ok_or_else(|| Error::Format(format!("value of '{key}' is not quoted")))?;
    let end = rest
        .find('\'')
        .ok_or_else(|| Error::Format(format!("unterminated value for '{key}'")))?;
    Ok(rest[..end].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_aligned_and_well_formed() {
        let p = ProbabilityMap::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let bytes = encode_array(&ArrayData::Probabilities(p));
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        assert_eq!(bytes[10 + header_len - 1], b'\n');
        let header = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(header.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }"));
        assert_eq!(bytes.len(), 10 + header_len + 16);
    }

    #[test]
    fn decodes_probability_example() {
        let p = ProbabilityMap::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let decoded = decode_array(&encode_array(&ArrayData::Probabilities(p))).unwrap();
        match decoded {
            ArrayData::Probabilities(p) => {
                assert_eq!((p.height(), p.width()), (2, 2));
                assert_eq!(p.values(), &[0.1, 0.2, 0.3, 0.4]);
            }
            _ => panic!("expected probabilities"),
        }
    }

    #[test]
    fn decodes_single_pixel_mask() {
        let m = GroundTruthMask::new(1, 1, vec![1]).unwrap();
        let decoded = decode_array(&encode_array(&ArrayData::Mask(m.clone()))).unwrap();
        assert_eq!(decoded, ArrayData::Mask(m));
    }

    #[test]
    fn rejects_mask_value_two() {
        let m = GroundTruthMask::new(1, 2, vec![0, 1]).unwrap();
        let mut bytes = encode_array(&ArrayData::Mask(m));
        *bytes.last_mut().unwrap() = 2;
        assert!(matches!(decode_array(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let p = ProbabilityMap::new(1, 1, vec![0.5]).unwrap();
        let mut bytes = encode_array(&ArrayData::Probabilities(p));
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(decode_array(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(decode_array(b"NOTNUMPY.."), Err(Error::Format(_))));
        let m = GroundTruthMask::new(2, 2, vec![0; 4]).unwrap();
        let bytes = encode_array(&ArrayData::Mask(m));
        assert!(matches!(
            decode_array(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn accepts_float64_and_bool_from_other_writers() {
        let mut header = "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 2), }".to_string();
        while !(10 + header.len() + 1).is_multiple_of(64) {
            header.push(' ');
        }
        header.push('\n');
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        bytes.extend_from_slice(&0.25f64.to_le_bytes());
        bytes.extend_from_slice(&0.75f64.to_le_bytes());
        match decode_array(&bytes).unwrap() {
            ArrayData::Probabilities(p) => assert_eq!(p.values(), &[0.25, 0.75]),
            _ => panic!("expected probabilities"),
        }

        let header = "{'descr': '|b1', 'fortran_order': False, 'shape': (1, 3), }\n";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        bytes.extend_from_slice(&[1, 0, 1]);
        assert_eq!(
            decode_array(&bytes).unwrap(),
            ArrayData::Mask(GroundTruthMask::new(1, 3, vec![1, 0, 1]).unwrap())
        );
    }

    #[test]
    fn rejects_fortran_order_and_3d() {
        let header = "{'descr': '|u1', 'fortran_order': True, 'shape': (1, 1), }\n";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        bytes.push(1);
        assert!(matches!(decode_array(&bytes), Err(Error::Format(_))));

        let header = "{'descr': '|u1', 'fortran_order': False, 'shape': (1, 1, 1), }\n";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        bytes.push(1);
        assert!(matches!(decode_array(&bytes), Err(Error::Format(_))));
    }
}
