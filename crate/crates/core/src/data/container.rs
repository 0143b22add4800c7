//! The `LFAB` bag container and CSV import.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! magic    4 bytes  "LFAB"
//! version  u32      1
//! classes  u32      M
//! dim      u32      D
//! count    u32      number of bags
//! per bag:
//!   id_len u16, id (UTF-8, id_len bytes)
//!   label  u32      < M
//!   n      u32      descriptors in this bag (>= 1)
//!   values n*D f32  row-major
//! ```
//!
//! Descriptors are stored in single precision; writing rounds each value to
//! the nearest `f32`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{BagContainer, FormatError};
use crate::encoders::FeatureBag;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const BAG_MAGIC: &[u8; 4] = b"LFAB";
pub const BAG_VERSION: u32 = 1;

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                FormatError::Truncated(format!(
                    "needed {n} bytes for {what} at offset {}, {} left",
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4, "magic")?;
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub(crate) fn version(&mut self, supported: u32) -> Result<(), FormatError> {
        let found = self.u32("version")?;
        if found != supported {
            return Err(FormatError::UnsupportedVersion { found, supported });
        }
        Ok(())
    }
}

/// Serializes a container.
pub fn to_bytes(container: &BagContainer) -> Result<Vec<u8>> {
    container.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(BAG_MAGIC);
    let count = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in u32")))
    };
    out.extend_from_slice(&BAG_VERSION.to_le_bytes());
    out.extend_from_slice(&count(container.classes, "class count")?.to_le_bytes());
    out.extend_from_slice(&count(container.dim, "dimension")?.to_le_bytes());
    out.extend_from_slice(&count(container.bags.len(), "bag count")?.to_le_bytes());
    for bag in &container.bags {
        let id = bag.id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::InvalidArgument(format!("bag id `{}` longer than 65535 bytes", bag.id)))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&count(bag.label, "label")?.to_le_bytes());
        out.extend_from_slice(&count(bag.len(), "descriptor count")?.to_le_bytes());
        for &v in bag.descriptors.as_slice() {
            let single = v as f32;
            if !single.is_finite() {
                return Err(FormatError::NonFiniteValue { bag: bag.id.clone() }.into());
            }
            out.extend_from_slice(&single.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a container, rejecting trailing bytes.
pub fn from_bytes(bytes: &[u8]) -> Result<BagContainer, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(BAG_MAGIC)?;
    r.version(BAG_VERSION)?;
    let classes = r.u32("class count")?;
    let dim = r.u32("dimension")? as usize;
    let count = r.u32("bag count")? as usize;
    if dim == 0 {
        return Err(FormatError::Malformed("descriptor dimension is 0".into()));
    }
    let mut bags = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let id_len = r.u16("bag id length")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "bag id")?)
            .map_err(|_| FormatError::Malformed(format!("bag {i} id is not UTF-8")))?
            .to_owned();
        let label = r.u32("label")?;
        if label >= classes {
            return Err(FormatError::LabelOutOfRange {
                bag: id,
                label,
                classes,
            });
        }
        let n = r.u32("descriptor count")? as usize;
        if n == 0 {
            return Err(FormatError::Malformed(format!("bag `{id}` has no descriptors")));
        }
        let len = n
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| FormatError::Malformed(format!("bag `{id}` size overflows")))?;
        let raw = r.take(len, "descriptor payload")?;
        let mut data = Vec::with_capacity(n * dim);
        for chunk in raw.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::NonFiniteValue { bag: id });
            }
            data.push(v as f64);
        }
        let m = Matrix::from_vec(n, dim, data).expect("payload size checked");
        let bag = FeatureBag::new(id, label as usize, m).map_err(|e| FormatError::Malformed(e.to_string()))?;
        bags.push(bag);
    }
    if r.remaining() != 0 {
        return Err(FormatError::Malformed(format!(
            "{} trailing bytes after the last bag",
            r.remaining()
        )));
    }
    Ok(BagContainer {
        classes: classes as usize,
        dim,
        bags,
    })
}

pub fn write_bags(container: &BagContainer, path: impl AsRef<Path>) -> Result<()> {
    let bytes = to_bytes(container)?;
    fs::write(path, bytes).map_err(FormatError::from)?;
    Ok(())
}

pub fn read_bags(path: impl AsRef<Path>) -> Result<BagContainer> {
    let bytes = fs::read(path).map_err(FormatError::from)?;
    Ok(from_bytes(&bytes)?)
}

/// CSV with header `bag_id,label,f1,...,fD`, one descriptor per row. Rows of
/// one bag need not be contiguous; bags keep their first-appearance order.
/// The class count is one more than the largest label.
pub fn read_bags_csv(path: impl AsRef<Path>) -> Result<BagContainer> {
    let text = fs::read_to_string(path).map_err(FormatError::from)?;
    Ok(parse_csv(&text)?)
}

pub fn parse_csv(text: &str) -> Result<BagContainer, FormatError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| FormatError::Malformed(format!("csv header: {e}")))?
        .clone();
    if header.len() < 3 || &header[0] != "bag_id" || &header[1] != "label" {
        return Err(FormatError::Malformed(
            "csv header must be `bag_id,label,f1,...,fD`".into(),
        ));
    }
    let dim = header.len() - 2;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (usize, Vec<f64>)> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| FormatError::Malformed(format!("csv line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(FormatError::Malformed(format!(
                "csv line {line}: {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let id = record[0].to_owned();
        let label: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| FormatError::Malformed(format!("csv line {line}: bad label `{}`", &record[1])))?;
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (label, Vec::new())
        });
        if entry.0 != label {
            return Err(FormatError::Malformed(format!(
                "csv line {line}: bag `{id}` has conflicting labels {} and {label}",
                entry.0
            )));
        }
        for field in record.iter().skip(2) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| FormatError::Malformed(format!("csv line {line}: bad value `{field}`")))?;
            if !v.is_finite() {
                return Err(FormatError::NonFiniteValue { bag: id });
            }
            entry.1.push(v);
        }
    }
    if order.is_empty() {
        return Err(FormatError::Malformed("csv has no data rows".into()));
    }
    let mut classes = 0;
    let mut bags = Vec::with_capacity(order.len());
    for id in order {
        let (label, data) = rows.remove(&id).expect("recorded id");
        classes = classes.max(label + 1);
        let m = Matrix::from_vec(data.len() / dim, dim, data).expect("row width checked");
        bags.push(FeatureBag::new(id, label, m).map_err(|e| FormatError::Malformed(e.to_string()))?);
    }
    Ok(BagContainer { classes, dim, bags })
}

/// Reads CSV when the path ends in `.csv`, the binary container otherwise.
pub fn read_bags_auto(path: impl AsRef<Path>) -> Result<BagContainer> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_bags_csv(path)
    } else {
        read_bags(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate, SyntheticConfig};
    use proptest::prelude::*;

    fn header(magic: &[u8], version: u32, classes: u32, dim: u32, count: u32) -> Vec<u8> {
        let mut b = magic.to_vec();
        for v in [version, classes, dim, count] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    fn hand_built() -> Vec<u8> {
        let mut b = header(b"LFAB", 1, 2, 2, 1);
        b.extend_from_slice(&2u16.to_le_bytes());
        b.extend_from_slice(b"b0");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&2u32.to_le_bytes());
        for v in [1.5f32, -2.0, 0.25, 8.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn decodes_hand_built_file() {
        let c = from_bytes(&hand_built()).unwrap();
        assert_eq!((c.classes, c.dim, c.len()), (2, 2, 1));
        let bag = &c.bags[0];
        assert_eq!(bag.id, "b0");
        assert_eq!(bag.label, 1);
        assert_eq!(bag.descriptors, Matrix::from_rows(&[[1.5, -2.0], [0.25, 8.0]]).unwrap());
        assert_eq!(to_bytes(&c).unwrap(), hand_built());
    }

    #[test]
    fn distinct_error_kinds() {
        let mut bad_magic = hand_built();
        bad_magic[..4].copy_from_slice(b"XXXX");
        assert!(matches!(from_bytes(&bad_magic), Err(FormatError::BadMagic { .. })));

        let mut bad_version = hand_built();
        bad_version[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bad_version),
            Err(FormatError::UnsupportedVersion { found: 7, .. })
        ));

        let full = hand_built();
        assert!(matches!(
            from_bytes(&full[..full.len() - 1]),
            Err(FormatError::Truncated(_))
        ));
        assert!(matches!(from_bytes(&full[..10]), Err(FormatError::Truncated(_))));

        let mut bad_label = hand_built();
        // label field follows header (20 bytes) + id length (2) + id (2)
        bad_label[24..28].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bad_label),
            Err(FormatError::LabelOutOfRange {
                label: 2,
                classes: 2,
                ..
            })
        ));

        let mut nan = hand_built();
        let at = nan.len() - 4;
        nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(from_bytes(&nan), Err(FormatError::NonFiniteValue { .. })));

        let mut trailing = hand_built();
        trailing.push(0);
        assert!(matches!(from_bytes(&trailing), Err(FormatError::Malformed(_))));
    }

    #[test]
    fn file_round_trip() {
        let c = generate(&SyntheticConfig {
            bags_per_class: 5,
            features_per_bag: 7,
            ..Default::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bags.lfab");
        write_bags(&c, &path).unwrap();
        assert_eq!(read_bags(&path).unwrap(), c);
    }

    #[test]
    fn csv_import() {
        let text = "bag_id,label,f1,f2\na,0,1,2\nb,1,3,4\na,0,5,6\n";
        let c = parse_csv(text).unwrap();
        assert_eq!((c.classes, c.dim), (2, 2));
        assert_eq!(c.bags[0].id, "a");
        assert_eq!(
            c.bags[0].descriptors,
            Matrix::from_rows(&[[1.0, 2.0], [5.0, 6.0]]).unwrap()
        );
        assert_eq!(c.bags[1].descriptors.row(0), &[3.0, 4.0]);
    }

    #[test]
    fn csv_errors() {
        assert!(parse_csv("id,label,f1\na,0,1\n").is_err());
        assert!(parse_csv("bag_id,label,f1\na,0,1\na,1,2\n").is_err());
        assert!(parse_csv("bag_id,label,f1\na,0,x\n").is_err());
        assert!(parse_csv("bag_id,label,f1\na,0,NaN\n").is_err());
        assert!(parse_csv("bag_id,label,f1\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            bags in prop::collection::vec(
                ("[a-z0-9-]{0,12}", 0usize..4, 1usize..5, prop::collection::vec(-1e6f32..1e6, 15)),
                0..6,
            ),
        ) {
            let dim = 3;
            let bags: Vec<FeatureBag> = bags
                .into_iter()
                .map(|(id, label, n, vals)| {
                    let data = vals[..n * dim].iter().map(|&v| v as f64).collect();
                    FeatureBag::new(id, label, Matrix::from_vec(n, dim, data).unwrap()).unwrap()
                })
                .collect();
            let c = BagContainer::new(4, dim, bags).unwrap();
            prop_assert_eq!(from_bytes(&to_bytes(&c).unwrap()).unwrap(), c);
        }
    }
}
