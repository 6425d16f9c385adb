//! Versioned binary checkpoint.
//!
//! Little-endian layout:
//!
//! ```text
//! magic              4 bytes  "ICON"
//! version            u32      1
//! patch_size         u32
//! revision           u64
//! validation_acc     f64
//! array_count        u32      16
//! arrays             weights in PARAM_NAMES order, then velocities in the same order;
//!                    each is rank: u32, dims: rank x u32, data: product(dims) x f32
//! ```

use std::io::Write;
use std::path::Path;

use super::network::{Architecture, CnnModel, Network, Params, PARAM_NAMES};
use super::tensor::Tensor;
use super::NnError;

pub const MAGIC: &[u8; 4] = b"ICON";
pub const VERSION: u32 = 1;
const ARRAY_COUNT: u32 = 16;

fn array_label(i: usize) -> String {
    if i < 8 {
        PARAM_NAMES[i].to_string()
    } else {
        format!("{}_velocity", PARAM_NAMES[i - 8])
    }
}

pub fn encode(model: &CnnModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.patch_size() as u32).to_le_bytes());
    out.extend_from_slice(&model.revision.to_le_bytes());
    out.extend_from_slice(&model.validation_accuracy.to_le_bytes());
    out.extend_from_slice(&ARRAY_COUNT.to_le_bytes());
    for arr in model.params.arrays().into_iter().chain(model.velocity.arrays()) {
        out.extend_from_slice(&(arr.shape().len() as u32).to_le_bytes());
        for &d in arr.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in arr.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8], NnError> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::Format { field: field.to_string(), reason: "truncated".into() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &str) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<CnnModel, NnError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(NnError::Format { field: "magic".into(), reason: "not an ICON checkpoint".into() });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let patch_size = r.u32("patch_size")? as usize;
    let revision = r.u64("revision")?;
    let validation_accuracy = r.f64("validation_accuracy")?;
    let count = r.u32("array_count")?;
    if count != ARRAY_COUNT {
        return Err(NnError::Format {
            field: "array_count".into(),
            reason: format!("expected {ARRAY_COUNT}, found {count}"),
        });
    }
    let mut arrays = Vec::with_capacity(16);
    for i in 0..ARRAY_COUNT as usize {
        let label = array_label(i);
        let rank = r.u32(&format!("{label}.rank"))? as usize;
        if rank == 0 || rank > 4 {
            return Err(NnError::Format { field: format!("{label}.rank"), reason: format!("invalid rank {rank}") });
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32(&format!("{label}.dims"))? as usize);
        }
        let len: usize = dims.iter().product();
        let raw = r.take(len * 4, &format!("{label}.data"))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        arrays.push(Tensor::from_vec(&dims, data));
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format { field: "trailer".into(), reason: "unexpected bytes after last array".into() });
    }
    let dim = |i: usize, j: usize| arrays[i].shape().get(j).copied().unwrap_or(0);
    let arch = Architecture {
        patch_size,
        conv1_filters: dim(0, 0),
        conv2_filters: dim(2, 0),
        fc_units: dim(4, 0),
    };
    let velocity = Params::from_arrays(arrays.split_off(8));
    let params = Params::from_arrays(arrays);
    Network::from_parts(arch, params, velocity, validation_accuracy, revision)
}

/// Writes to a temporary file in the destination directory, syncs it, and
/// renames it over `path`, so readers see either the old or the new file.
pub fn save_checkpoint(model: &CnnModel, path: &Path) -> Result<(), NnError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&encode(model))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| NnError::Io(e.error))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CnnModel, NnError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CnnModel {
        let mut m = Network::new(
            Architecture { patch_size: 23, conv1_filters: 3, conv2_filters: 4, fc_units: 7 },
            11,
        )
        .unwrap();
        m.revision = 42;
        m.validation_accuracy = 0.8125;
        m.velocity.fc_bias.data_mut()[2] = -0.25;
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.architecture(), m.architecture());
        for (a, b) in back.params.arrays().iter().zip(m.params.arrays()) {
            let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert_eq!(back, m);
        assert_eq!(encode(&back), encode(&m));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&model());
        assert_eq!(&bytes[0..4], b"ICON");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 23);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 42);
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 0.8125);
    }

    #[test]
    fn truncated_file_names_the_array() {
        let bytes = encode(&model());
        let cut = &bytes[..bytes.len() / 2];
        match decode(cut) {
            Err(NnError::Format { field, reason }) => {
                assert!(field.ends_with(".data") || field.ends_with(".dims") || field.ends_with(".rank"), "{field}");
                assert_eq!(reason, "truncated");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode(&model());
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(NnError::UnsupportedVersion(99))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(NnError::Format { ref field, .. }) if field == "magic"));
    }

    #[test]
    fn overwrite_replaces_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut m = model();
        save_checkpoint(&m, &path).unwrap();
        m.revision = 43;
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap().revision, 43);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
