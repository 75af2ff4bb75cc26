//! CIFAR-10 binary batches, augmentation and batching.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IMAGE_SIZE: usize = 32;
pub const CHANNELS: usize = 3;
pub const IMAGE_BYTES: usize = CHANNELS * IMAGE_SIZE * IMAGE_SIZE;
pub const RECORD_BYTES: usize = 1 + IMAGE_BYTES;
pub const RECORDS_PER_FILE: usize = 10_000;
pub const TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const TEST_FILE: &str = "test_batch.bin";
pub const NUM_CLASSES: usize = 10;

pub const MEAN: [f32; 3] = [0.4914, 0.4822, 0.4465];
pub const STD: [f32; 3] = [0.2023, 0.1994, 0.2010];
/// Zero padding before the random crop.
pub const CROP_PAD: usize = 4;

/// Labelled `3 x size x size` images stored as raw bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    size: usize,
    images: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(size: usize, images: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let per = CHANNELS * size * size;
        if size == 0 || images.len() != per * labels.len() {
            return Err(Error::invalid(format!(
                "{} image bytes do not hold {} images of 3x{size}x{size}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::invalid(format!("label {l} out of range")));
        }
        Ok(Dataset { size, images, labels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn image_bytes(&self) -> usize {
        CHANNELS * self.size * self.size
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.image_bytes();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// First `n` records (all of them if `n` exceeds the length).
    pub fn subset(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            size: self.size,
            images: self.images[..n * self.image_bytes()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    fn extend(&mut self, other: Dataset) {
        self.images.extend(other.images);
        self.labels.extend(other.labels);
    }
}

/// Parses one binary batch file of 3073-byte records.
pub fn load_batch_file(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::Dataset { file: path.to_path_buf(), reason: e.to_string() })?;
    parse_batch(&bytes, path)
}

fn parse_batch(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let err = |reason: String| Error::Dataset { file: path.to_path_buf(), reason };
    if bytes.is_empty() {
        return Err(err("file is empty".into()));
    }
    let rem = bytes.len() % RECORD_BYTES;
    if rem != 0 {
        let offset = bytes.len() - rem;
        return Err(err(format!(
            "truncated record at byte offset {offset}: {rem} of {RECORD_BYTES} bytes present"
        )));
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut images = Vec::with_capacity(n * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        if rec[0] as usize >= NUM_CLASSES {
            return Err(err(format!("label {} > 9 at byte offset {}", rec[0], i * RECORD_BYTES)));
        }
        labels.push(rec[0]);
        images.extend_from_slice(&rec[1..]);
    }
    Ok(Dataset { size: IMAGE_SIZE, images, labels })
}

/// Loads the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let load = |name: &str| -> Result<Dataset> {
        let path = dir.join(name);
        let ds = load_batch_file(&path)?;
        if ds.len() != RECORDS_PER_FILE {
            return Err(Error::Dataset {
                file: path,
                reason: format!("expected {RECORDS_PER_FILE} records, found {}", ds.len()),
            });
        }
        Ok(ds)
    };
    let mut train = load(TRAIN_FILES[0])?;
    for name in &TRAIN_FILES[1..] {
        train.extend(load(name)?);
    }
    let test = load(TEST_FILE)?;
    for (ds, per_class, name) in [(&train, 5000, "training"), (&test, 1000, TEST_FILE)] {
        let h = ds.class_histogram();
        if h.iter().any(|&c| c != per_class) {
            return Err(Error::Dataset {
                file: dir.join(name),
                reason: format!("class histogram {h:?}, expected {per_class} per class"),
            });
        }
    }
    Ok((train, test))
}

/// Scales to [0, 1] and normalizes each channel.
pub fn normalize(image: &[u8], size: usize, out: &mut [f32]) {
    let plane = size * size;
    for c in 0..CHANNELS {
        for i in 0..plane {
            out[c * plane + i] = (image[c * plane + i] as f32 / 255.0 - MEAN[c]) / STD[c];
        }
    }
}

/// Pad-crop-flip with explicit choices; `(dy, dx)` is the crop corner in the
/// padded image, so `(CROP_PAD, CROP_PAD)` without flip is the identity.
pub fn augment_with(image: &[u8], size: usize, dy: usize, dx: usize, flip: bool, out: &mut [f32]) {
    let plane = size * size;
    for c in 0..CHANNELS {
        for r in 0..size {
            for col in 0..size {
                let sr = (r + dy) as isize - CROP_PAD as isize;
                let sc0 = (col + dx) as isize - CROP_PAD as isize;
                let sc = if flip { size as isize - 1 - sc0 } else { sc0 };
                // zero padding normalizes like a black pixel
                let v = if sr < 0 || sc < 0 || sr >= size as isize || sc >= size as isize {
                    0.0
                } else {
                    image[c * plane + sr as usize * size + sc as usize] as f32 / 255.0
                };
                out[c * plane + r * size + col] = (v - MEAN[c]) / STD[c];
            }
        }
    }
}

/// Random crop from the zero-padded image and horizontal flip with p = 0.5.
pub fn augment<R: Rng + ?Sized>(image: &[u8], size: usize, rng: &mut R, out: &mut [f32]) {
    let dy = rng.gen_range(0..=2 * CROP_PAD);
    let dx = rng.gen_range(0..=2 * CROP_PAD);
    let flip = rng.gen_bool(0.5);
    augment_with(image, size, dy, dx, flip, out);
}

/// Assembles a normalized `[B, 3, S, S]` batch; augments when `rng` is given.
pub fn make_batch<T: Scalar, R: Rng + ?Sized>(
    ds: &Dataset,
    indices: &[usize],
    mut rng: Option<&mut R>,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let per = ds.image_bytes();
    let mut buf = vec![0f32; per];
    let mut data = Vec::with_capacity(indices.len() * per);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        match rng.as_deref_mut() {
            Some(r) => augment(ds.image(i), ds.size, r, &mut buf),
            None => normalize(ds.image(i), ds.size, &mut buf),
        }
        data.extend(buf.iter().map(|&v| T::from_f64_lossy(v as f64)));
        labels.push(ds.label(i));
    }
    Ok((Tensor::from_vec(&[indices.len(), CHANNELS, ds.size, ds.size], data)?, labels))
}

/// Noisy copies of one random prototype per class, labels cycling through
/// the classes. Prototypes depend only on `size`, so sets drawn with
/// different seeds share classes (a stand-in when no archive is available).
pub fn synthetic(n: usize, size: usize, seed: u64) -> Dataset {
    use rand::SeedableRng;
    let per = CHANNELS * size * size;
    let mut proto_rng = rand_chacha::ChaCha8Rng::seed_from_u64(size as u64);
    let protos: Vec<u8> = (0..NUM_CLASSES * per).map(|_| proto_rng.gen()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * per);
    for i in 0..n {
        let proto = &protos[(i % NUM_CLASSES) * per..][..per];
        images.extend(proto.iter().map(|&p| ((p as u16 + rng.gen::<u8>() as u16) / 2) as u8));
    }
    let labels = (0..n).map(|i| (i % NUM_CLASSES) as u8).collect();
    Dataset { size, images, labels }
}

/// Encodes records in the binary batch layout (used to build test archives).
pub fn encode_records(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(ds.len() * (1 + ds.image_bytes()));
    for i in 0..ds.len() {
        out.push(ds.labels[i]);
        out.extend_from_slice(ds.image(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let images = (0..2 * IMAGE_BYTES).map(|_| rng.gen()).collect();
        Dataset::new(IMAGE_SIZE, images, vec![3, 9]).unwrap()
    }

    #[test]
    fn parse_round_trip() {
        let ds = tiny();
        let bytes = encode_records(&ds);
        assert_eq!(parse_batch(&bytes, Path::new("x.bin")).unwrap(), ds);
    }

    #[test]
    fn truncated_and_bad_label() {
        let ds = tiny();
        let mut bytes = encode_records(&ds);
        bytes.truncate(RECORD_BYTES + 100);
        let msg = parse_batch(&bytes, Path::new("data_batch_9.bin")).unwrap_err().to_string();
        assert!(msg.contains("data_batch_9.bin") && msg.contains("offset 3073"), "{msg}");
        let mut bytes = encode_records(&ds);
        bytes[RECORD_BYTES] = 10;
        let msg = parse_batch(&bytes, Path::new("b.bin")).unwrap_err().to_string();
        assert!(msg.contains("label 10") && msg.contains("offset 3073"), "{msg}");
    }

    #[test]
    fn centre_crop_without_flip_is_normalization() {
        let ds = tiny();
        let mut a = vec![0f32; IMAGE_BYTES];
        let mut b = vec![0f32; IMAGE_BYTES];
        augment_with(ds.image(0), IMAGE_SIZE, CROP_PAD, CROP_PAD, false, &mut a);
        normalize(ds.image(0), IMAGE_SIZE, &mut b);
        assert_eq!(a, b);
    }
}
