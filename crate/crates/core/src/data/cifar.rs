use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Dataset, Provenance, Split};

/// One label byte followed by a 3x32x32 channel-planar image.
pub const CIFAR_RECORD_BYTES: usize = 3073;
const IMAGE_BYTES: usize = CIFAR_RECORD_BYTES - 1;
const TRAIN_FILES: [&str; 5] = ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
const TEST_FILE: &str = "test_batch.bin";

/// Splits `bytes` into labels and concatenated pixel bytes.
pub fn parse_cifar_records(bytes: &[u8], path: &Path) -> Result<(Vec<usize>, Vec<u8>), DataError> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        return Err(DataError::TruncatedRecord {
            path: path.to_path_buf(),
            offset: bytes.len() / CIFAR_RECORD_BYTES * CIFAR_RECORD_BYTES,
            len: bytes.len(),
        });
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * IMAGE_BYTES);
    for (record, chunk) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if chunk[0] > 9 {
            return Err(DataError::LabelOutOfRange { path: path.to_path_buf(), record, label: chunk[0] });
        }
        labels.push(usize::from(chunk[0]));
        pixels.extend_from_slice(&chunk[1..]);
    }
    Ok((labels, pixels))
}

/// Inverse of [`parse_cifar_records`].
pub fn encode_cifar_records(labels: &[usize], pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(labels.len() * CIFAR_RECORD_BYTES);
    for (label, image) in labels.iter().zip(pixels.chunks_exact(IMAGE_BYTES)) {
        out.push(*label as u8);
        out.extend_from_slice(image);
    }
    out
}

fn load_files(dir: &Path, names: &[&str], split: Split) -> Result<Dataset, DataError> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    let mut files = Vec::new();
    for name in names {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(DataError::FileMissing(path));
        }
        let bytes = fs::read(&path).map_err(|source| DataError::Io { path: path.clone(), source })?;
        let (l, p) = parse_cifar_records(&bytes, &path)?;
        labels.extend(l);
        pixels.extend(p);
        files.push(path);
    }
    Dataset::from_bytes(split, Provenance::Cifar10 { files }, 10, [3, 32, 32], pixels, labels)
}

/// Reads `data_batch_1..5.bin` and `test_batch.bin` from `dir`.
pub fn load_cifar10(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset), DataError> {
    let dir: PathBuf = dir.as_ref().to_path_buf();
    let train = load_files(&dir, &TRAIN_FILES, Split::Train)?;
    let test = load_files(&dir, &[TEST_FILE], Split::Test)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut bytes = Vec::new();
        for (label, base) in [(3u8, 0usize), (9, 7)] {
            bytes.push(label);
            bytes.extend((0..IMAGE_BYTES).map(|i| ((i * 31 + base) % 256) as u8));
        }
        bytes
    }

    #[test]
    fn fixture_pixels_are_byte_over_255() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = fixture();
        for name in TRAIN_FILES.iter().chain([&TEST_FILE]) {
            fs::write(dir.path().join(name), &bytes).unwrap();
        }
        let (train, test) = load_cifar10(dir.path()).unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 2);
        assert_eq!(test.labels(), &[3, 9]);
        let b = test.gather(&[0, 1]);
        let d = b.images.data();
        // Record 1, channel G (offset 1024), row 2, column 5.
        let idx = 1024 + 2 * 32 + 5;
        assert_eq!(d[IMAGE_BYTES + idx], ((idx * 31 + 7) % 256) as f64 / 255.0);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 31.0 / 255.0);
        assert_eq!(b.images.shape(), &[2, 3, 32, 32]);
    }

    #[test]
    fn truncation_names_offset() {
        let mut bytes = fixture();
        bytes.truncate(CIFAR_RECORD_BYTES + 100);
        match parse_cifar_records(&bytes, Path::new("x.bin")) {
            Err(DataError::TruncatedRecord { offset, .. }) => assert_eq!(offset, CIFAR_RECORD_BYTES),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_label_and_missing_file() {
        let mut bytes = fixture();
        bytes[CIFAR_RECORD_BYTES] = 10;
        assert!(matches!(
            parse_cifar_records(&bytes, Path::new("x.bin")),
            Err(DataError::LabelOutOfRange { record: 1, label: 10, .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_cifar10(dir.path()), Err(DataError::FileMissing(p)) if p.ends_with("data_batch_1.bin")));
    }

    #[test]
    fn round_trip_is_exact() {
        let bytes = fixture();
        let (labels, pixels) = parse_cifar_records(&bytes, Path::new("x.bin")).unwrap();
        assert_eq!(encode_cifar_records(&labels, &pixels), bytes);
    }
}
