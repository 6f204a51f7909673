//! The built-in synthetic image task and an IDX-format loader.
//!
//! The synthetic task is ten parametric 16x16 grayscale shape families with
//! seeded jitter (position, thickness, intensity) and pixel noise. The jitter
//! makes several class pairs genuinely confusable, which keeps decision
//! margins small enough for perturbation budgets in image-value units.

use super::zoo::{CLASSES, IMAGE_SIDE};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::fs;
use std::path::Path;

/// A labelled image set; images are flattened rows in [0,1].
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<f32>,
    labels: Vec<usize>,
    n: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<f32>, labels: Vec<usize>, n: usize, classes: usize) -> Result<Self> {
        if images.len() != labels.len() * n {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                detail: format!(
                    "{} pixels for {} labels of dim {}",
                    images.len(),
                    labels.len(),
                    n
                ),
            });
        }
        if !images.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig(
                "dataset images must lie in [0,1]".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            images,
            labels,
            n,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * self.n..(i + 1) * self.n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn images_flat(&self) -> &[f32] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// New dataset keeping only the given indices.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(idx.len() * self.n);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            images,
            labels,
            n: self.n,
            classes: self.classes,
        }
    }
}

/// Train/test halves with disjoint generation streams.
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub train: Dataset,
    pub test: Dataset,
}

/// Generate the built-in task. Samples cycle through the classes so both
/// splits are balanced.
pub fn synthetic(seed: u64, n_train: usize, n_test: usize) -> DatasetPair {
    let train = generate(seed, 0, n_train);
    let test = generate(seed, 1, n_test);
    DatasetPair { train, test }
}

fn generate(seed: u64, split_tag: u64, count: usize) -> Dataset {
    generate_tuned(seed, split_tag, count, SHAPE_AMPLITUDE, NOISE_SIGMA)
}

fn generate_tuned(
    seed: u64,
    split_tag: u64,
    count: usize,
    amp: (f32, f32),
    sigma: f32,
) -> Dataset {
    let n = IMAGE_SIDE * IMAGE_SIDE;
    let mut images = Vec::with_capacity(count * n);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % CLASSES;
        let mut rng = crate::rng::stream(seed, &[0xda7a, split_tag, i as u64]);
        images.extend_from_slice(&render(class, &mut rng, amp, sigma));
        labels.push(class);
    }
    Dataset::new(images, labels, n, CLASSES).expect("generator emits valid images")
}

/// Generator with explicit overlay amplitude and noise; used for
/// calibration experiments.
#[doc(hidden)]
pub fn synthetic_tuned(
    seed: u64,
    n_train: usize,
    n_test: usize,
    amp: (f32, f32),
    sigma: f32,
) -> DatasetPair {
    DatasetPair {
        train: generate_tuned(seed, 0, n_train, amp, sigma),
        test: generate_tuned(seed, 1, n_test, amp, sigma),
    }
}

/// Rasterize one sample of the given class with per-sample jitter and noise.
fn render(class: usize, rng: &mut impl Rng, amp: (f32, f32), sigma: f32) -> Vec<f32> {
    let s = IMAGE_SIDE as i32;
    // Class identity rides on a low-amplitude overlay over a mid-gray
    // canvas: the shape is detectable through the noise by pooling many
    // pixels, yet per-pixel evidence stays comparable to the perturbation
    // budgets, which keeps decision margins small. The amplitude is
    // normalized by the shape's pixel count so every class carries about
    // the same total evidence.
    let bg: f32 = rng.random_range(0.35..0.55);
    let base: f32 = rng.random_range(amp.0..amp.1);
    let cx: i32 = 8 + rng.random_range(-1..=1);
    let cy: i32 = 8 + rng.random_range(-1..=1);
    let th: i32 = rng.random_range(1..=2);
    let mut mask = vec![false; (s * s) as usize];

    let put = |x: i32, y: i32, mask: &mut Vec<bool>| {
        if (0..s).contains(&x) && (0..s).contains(&y) {
            mask[(y * s + x) as usize] = true;
        }
    };

    match class {
        0 => {
            // horizontal bar
            for y in (cy - th)..=(cy + th) {
                for x in 0..s {
                    put(x, y, &mut mask);
                }
            }
        }
        1 => {
            // vertical bar
            for x in (cx - th)..=(cx + th) {
                for y in 0..s {
                    put(x, y, &mut mask);
                }
            }
        }
        2 => {
            // main diagonal stripe
            let off = rng.random_range(-2..=2);
            for y in 0..s {
                for x in 0..s {
                    if (x - y - off).abs() <= th {
                        put(x, y, &mut mask);
                    }
                }
            }
        }
        3 => {
            // anti-diagonal stripe
            let off = rng.random_range(-2..=2);
            for y in 0..s {
                for x in 0..s {
                    if (x + y - (s - 1) - off).abs() <= th {
                        put(x, y, &mut mask);
                    }
                }
            }
        }
        4 => {
            // filled disk
            let r = rng.random_range(3..=5);
            for y in 0..s {
                for x in 0..s {
                    if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                        put(x, y, &mut mask);
                    }
                }
            }
        }
        5 => {
            // ring
            let r = rng.random_range(4..=6);
            for y in 0..s {
                for x in 0..s {
                    let d2 = (x - cx).pow(2) + (y - cy).pow(2);
                    if d2 <= r * r && d2 >= (r - th - 1) * (r - th - 1) {
                        put(x, y, &mut mask);
                    }
                }
            }
        }
        6 => {
            // square outline
            let half = rng.random_range(4..=6);
            for y in (cy - half)..=(cy + half) {
                for x in (cx - half)..=(cx + half) {
                    if (x - cx).abs().max((y - cy).abs()) > half - th {
                        put(x, y, &mut mask);
                    }
                }
            }
        }
        7 => {
            // plus sign
            for d in -6..=6 {
                for w in -th..=th {
                    put(cx + d, cy + w, &mut mask);
                    put(cx + w, cy + d, &mut mask);
                }
            }
        }
        8 => {
            // x cross
            for d in -6..=6 {
                for w in -th..=th {
                    put(cx + d + w, cy + d, &mut mask);
                    put(cx + d + w, cy - d, &mut mask);
                }
            }
        }
        _ => {
            // checkerboard with jittered phase
            let block = 4;
            let (px, py) = (rng.random_range(0..block), rng.random_range(0..block));
            for y in 0..s {
                for x in 0..s {
                    if (((x + px) / block) + ((y + py) / block)) % 2 == 0 {
                        put(x, y, &mut mask);
                    }
                }
            }
        }
    }

    let count = mask.iter().filter(|&&v| v).count().max(1) as f32;
    let fg = bg + base * (52.0 / count).sqrt();
    let noise = Normal::new(0.0f32, sigma).expect("valid sigma");
    let mut img = Vec::with_capacity((s * s) as usize);
    for on in mask {
        let v = if on { fg } else { bg };
        img.push((v + noise.sample(rng)).clamp(0.0, 1.0));
    }
    img
}

/// Overlay amplitude range and pixel-noise level of the generator. Tuned
/// together so trained models stay above 90% test accuracy while decision
/// margins remain small relative to the perturbation budgets.
pub const SHAPE_AMPLITUDE: (f32, f32) = (0.08, 0.15);
pub const NOISE_SIGMA: f32 = 0.058;

// ---------------------------------------------------------------------------
// IDX loader

fn read_be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Load an IDX image/label file pair (the classic big-endian digit format).
/// Images are rescaled to [0,1] and resized to 16x16 when needed.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images_path)
        .map_err(|e| Error::io(images_path.display().to_string(), e))?;
    let lab_bytes = fs::read(labels_path)
        .map_err(|e| Error::io(labels_path.display().to_string(), e))?;

    if img_bytes.len() < 16 || read_be_u32(&img_bytes, 0) != 0x0000_0803 {
        return Err(Error::Format {
            what: "idx images",
            detail: "expected magic 0x00000803".into(),
        });
    }
    if lab_bytes.len() < 8 || read_be_u32(&lab_bytes, 0) != 0x0000_0801 {
        return Err(Error::Format {
            what: "idx labels",
            detail: "expected magic 0x00000801".into(),
        });
    }
    let count = read_be_u32(&img_bytes, 4) as usize;
    let rows = read_be_u32(&img_bytes, 8) as usize;
    let cols = read_be_u32(&img_bytes, 12) as usize;
    if lab_bytes.len() != 8 + count || read_be_u32(&lab_bytes, 4) as usize != count {
        return Err(Error::Format {
            what: "idx labels",
            detail: "label count disagrees with image count".into(),
        });
    }
    if img_bytes.len() != 16 + count * rows * cols {
        return Err(Error::Format {
            what: "idx images",
            detail: "payload size disagrees with header".into(),
        });
    }

    let n = IMAGE_SIDE * IMAGE_SIDE;
    let mut images = Vec::with_capacity(count * n);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let raw = &img_bytes[16 + i * rows * cols..16 + (i + 1) * rows * cols];
        let gray: Vec<f32> = raw.iter().map(|&b| b as f32 / 255.0).collect();
        if rows == IMAGE_SIDE && cols == IMAGE_SIDE {
            images.extend_from_slice(&gray);
        } else {
            images.extend_from_slice(&resize_bilinear(&gray, rows, cols));
        }
        labels.push(lab_bytes[8 + i] as usize);
    }
    let classes = labels.iter().max().map_or(CLASSES, |&m| (m + 1).max(CLASSES));
    Dataset::new(images, labels, n, classes)
}

/// Write a dataset as an IDX image/label file pair (pixels quantized to u8).
pub fn save_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let mut img = Vec::with_capacity(16 + ds.len() * ds.dim());
    img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    img.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    for &v in ds.images_flat() {
        img.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &y in ds.labels() {
        lab.push(y as u8);
    }
    crate::fileio::write_atomic(images_path, &img)?;
    crate::fileio::write_atomic(labels_path, &lab)
}

fn resize_bilinear(src: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; IMAGE_SIDE * IMAGE_SIDE];
    for oy in 0..IMAGE_SIDE {
        for ox in 0..IMAGE_SIDE {
            let fy = (oy as f32 + 0.5) * rows as f32 / IMAGE_SIDE as f32 - 0.5;
            let fx = (ox as f32 + 0.5) * cols as f32 / IMAGE_SIDE as f32 - 0.5;
            let y0 = fy.floor().max(0.0) as usize;
            let x0 = fx.floor().max(0.0) as usize;
            let y1 = (y0 + 1).min(rows - 1);
            let x1 = (x0 + 1).min(cols - 1);
            let ty = (fy - y0 as f32).clamp(0.0, 1.0);
            let tx = (fx - x0 as f32).clamp(0.0, 1.0);
            let v = src[y0 * cols + x0] * (1.0 - ty) * (1.0 - tx)
                + src[y0 * cols + x1] * (1.0 - ty) * tx
                + src[y1 * cols + x0] * ty * (1.0 - tx)
                + src[y1 * cols + x1] * ty * tx;
            out[oy * IMAGE_SIDE + ox] = v.clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = synthetic(7, 40, 20);
        let b = synthetic(7, 40, 20);
        assert_eq!(a.train.images_flat(), b.train.images_flat());
        assert_eq!(a.test.labels(), b.test.labels());
        assert!(a.train.images_flat().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.train.len(), 40);
        assert_eq!(a.test.len(), 20);
    }

    #[test]
    fn train_and_test_streams_differ() {
        let pair = synthetic(7, 20, 20);
        // Same index, same class, different split stream: pixels must differ.
        assert_ne!(pair.train.image(0), pair.test.image(0));
    }

    #[test]
    fn idx_round_trip_and_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs.idx");
        let lab_path = dir.path().join("labs.idx");

        // two 16x16 images, labels 3 and 9
        let mut img = vec![0u8, 0, 8, 3];
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&16u32.to_be_bytes());
        img.extend_from_slice(&16u32.to_be_bytes());
        img.extend(std::iter::repeat(128u8).take(2 * 256));
        let mut lab = vec![0u8, 0, 8, 1];
        lab.extend_from_slice(&2u32.to_be_bytes());
        lab.extend_from_slice(&[3u8, 9u8]);
        std::fs::write(&img_path, &img).unwrap();
        std::fs::write(&lab_path, &lab).unwrap();

        let ds = load_idx(&img_path, &lab_path).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.label(1), 9);
        assert!((ds.image(0)[0] - 128.0 / 255.0).abs() < 1e-6);

        // corrupt the magic
        let mut bad = img.clone();
        bad[3] = 9;
        std::fs::write(&img_path, &bad).unwrap();
        assert!(matches!(
            load_idx(&img_path, &lab_path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn resize_maps_28x28_to_16x16() {
        let src = vec![0.5f32; 28 * 28];
        let out = resize_bilinear(&src, 28, 28);
        assert_eq!(out.len(), 256);
        assert!(out.iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }
}
