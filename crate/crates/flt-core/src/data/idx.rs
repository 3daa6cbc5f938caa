//! IDX (MNIST/EMNIST) file loading. Big-endian headers, standard magics:
//! 0x00000803 for image files, 0x00000801 for label files.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], off: usize, path: &Path) -> Result<u32> {
    let end = off + 4;
    if bytes.len() < end {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
            needed: end,
            got: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]))
}

/// Loads an IDX image/label file pair into a dataset with feature shape
/// `[1, rows, cols]` and pixel values scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;

    let magic = read_u32_be(&images, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::IdxBadMagic {
            path: images_path.display().to_string(),
            expected: IMAGES_MAGIC,
            got: magic,
        });
    }
    let n_images = read_u32_be(&images, 4, images_path)? as usize;
    let rows = read_u32_be(&images, 8, images_path)? as usize;
    let cols = read_u32_be(&images, 12, images_path)? as usize;
    let pixel_bytes = n_images * rows * cols;
    if images.len() < 16 + pixel_bytes {
        return Err(Error::IdxTruncated {
            path: images_path.display().to_string(),
            needed: 16 + pixel_bytes,
            got: images.len(),
        });
    }

    let magic = read_u32_be(&labels, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::IdxBadMagic {
            path: labels_path.display().to_string(),
            expected: LABELS_MAGIC,
            got: magic,
        });
    }
    let n_labels = read_u32_be(&labels, 4, labels_path)? as usize;
    if labels.len() < 8 + n_labels {
        return Err(Error::IdxTruncated {
            path: labels_path.display().to_string(),
            needed: 8 + n_labels,
            got: labels.len(),
        });
    }
    if n_images != n_labels {
        return Err(Error::IdxCountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let label_bytes = &labels[8..8 + n_labels];
    let num_classes = label_bytes.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut ds = Dataset::empty(vec![1, rows, cols], num_classes);
    let mut buf = vec![0.0; rows * cols];
    for i in 0..n_images {
        let base = 16 + i * rows * cols;
        for (b, &px) in buf.iter_mut().zip(&images[base..base + rows * cols]) {
            *b = px as f64 / 255.0;
        }
        ds.push_flat(&buf, label_bytes[i] as usize)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_pair(dir: &Path, pixels: &[u8], labels: &[u8], rows: u32, cols: u32) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images-idx3-ubyte");
        let lp = dir.join("labels-idx1-ubyte");
        let n = labels.len() as u32;
        let mut f = fs::File::create(&ip).unwrap();
        f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&n.to_be_bytes()).unwrap();
        f.write_all(&rows.to_be_bytes()).unwrap();
        f.write_all(&cols.to_be_bytes()).unwrap();
        f.write_all(pixels).unwrap();
        let mut f = fs::File::create(&lp).unwrap();
        f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&n.to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn parses_hand_built_fixture_and_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        // two 2x2 images; pixel endpoints 0 and 255 map to 0.0 and 1.0
        let pixels = [0u8, 255, 10, 20, 30, 40, 50, 60];
        let (ip, lp) = write_idx_pair(dir.path(), &pixels, &[1, 0], 2, 2);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_shape, vec![1, 2, 2]);
        assert_eq!(ds.label(0), 1);
        assert_eq!(ds.feature(0)[0], 0.0);
        assert_eq!(ds.feature(0)[1], 1.0);
        assert_eq!(ds.num_classes, 2);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[0; 4], &[0], 2, 2);
        // corrupt the images magic
        let mut bytes = fs::read(&ip).unwrap();
        bytes[3] = 0x99;
        fs::write(&ip, bytes).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::IdxBadMagic { .. })));
    }

    #[test]
    fn rejects_truncation_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[0; 8], &[0, 1], 2, 2);
        let bytes = fs::read(&ip).unwrap();
        fs::write(&ip, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::IdxTruncated { .. })));

        let (ip2, _) = write_idx_pair(dir.path(), &[0; 8], &[0, 1], 2, 2);
        let lp_short = dir.path().join("short-labels");
        let mut f = fs::File::create(&lp_short).unwrap();
        f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        f.write_all(&[0]).unwrap();
        assert!(matches!(
            load_idx(&ip2, &lp_short),
            Err(Error::IdxCountMismatch { .. })
        ));
    }
}
