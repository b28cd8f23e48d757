//! Dataset ingestion: CIFAR-10 binary batches, MNIST IDX files and
//! class-conditional Gaussian data.
//!
//! Inputs are stored as `f32` and widened to `f64` on access. Image pixels are
//! scaled to `[0, 1]` by dividing by 255.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::testing::rng;
use crate::{Error, Result};

pub const CIFAR10_DIM: usize = 3072;
pub const CIFAR10_RECORD: usize = 1 + CIFAR10_DIM;
pub const MNIST_DIM: usize = 784;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const CIFAR10_URL: &str = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz";
pub const MNIST_URLS: [&str; 4] = [
    "https://storage.googleapis.com/cvdf-datasets/mnist/train-images-idx3-ubyte.gz",
    "https://storage.googleapis.com/cvdf-datasets/mnist/train-labels-idx1-ubyte.gz",
    "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-images-idx3-ubyte.gz",
    "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-labels-idx1-ubyte.gz",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    split: Split,
    dim: usize,
    classes: usize,
    inputs: Vec<f32>,
    labels: Vec<usize>,
}

/// Unlabeled, row-major view of dataset inputs.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> Inputs<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::shape(format!(
                "{} values do not split into rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn iter_f64(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.row_f64(i))
    }

    /// Rows `start..end` as an `f64` matrix.
    pub fn rows_matrix(&self, start: usize, end: usize) -> Matrix {
        let data = self.data[start * self.dim..end * self.dim]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        Matrix::from_vec(end - start, self.dim, data).unwrap()
    }

    /// Rows `indices` packed into a row-major `f64` buffer.
    pub fn gather_f64(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            out.extend(self.row(i).iter().map(|&v| f64::from(v)));
        }
        out
    }
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        dim: usize,
        classes: usize,
        inputs: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 || inputs.len() != labels.len() * dim {
            return Err(Error::shape(format!(
                "{} input values for {} labels of dimension {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        Ok(Self {
            name: name.into(),
            split,
            dim,
            classes,
            inputs,
            labels,
        })
    }

    /// Builds a dataset from `f64` rows (stored as `f32`).
    pub fn from_rows(
        name: impl Into<String>,
        split: Split,
        classes: usize,
        rows: &[Vec<f64>],
        labels: Vec<usize>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::shape("rows have different lengths"));
        }
        let inputs = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(name, split, dim, classes, inputs, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> Inputs<'_> {
        Inputs {
            data: &self.inputs,
            dim: self.dim,
        }
    }

    pub fn raw_inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(&self.inputs[i * self.dim..(i + 1) * self.dim]);
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name.clone(),
            split: self.split,
            dim: self.dim,
            classes: self.classes,
            inputs,
            labels,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })
}

fn format_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

/// Parses CIFAR-10 binary records (1 label byte + 3072 pixel bytes each).
pub fn parse_cifar10_records(bytes: &[u8], path: &Path) -> Result<(Vec<f32>, Vec<usize>)> {
    if bytes.len() % CIFAR10_RECORD != 0 {
        let full = bytes.len() / CIFAR10_RECORD;
        return Err(format_err(
            path,
            (full * CIFAR10_RECORD) as u64,
            format!("truncated record (file is {} bytes)", bytes.len()),
        ));
    }
    let n = bytes.len() / CIFAR10_RECORD;
    let mut inputs = Vec::with_capacity(n * CIFAR10_DIM);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR10_RECORD).enumerate() {
        let label = rec[0] as usize;
        if label > 9 {
            return Err(format_err(
                path,
                (i * CIFAR10_RECORD) as u64,
                format!("label byte {label} out of range"),
            ));
        }
        labels.push(label);
        inputs.extend(rec[1..].iter().map(|&b| f32::from(b) / 255.0));
    }
    Ok((inputs, labels))
}

fn cifar_root(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if !dir.join("test_batch.bin").exists() && nested.join("test_batch.bin").exists() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// Files [`load_cifar10`] reads from `dir`.
pub fn cifar10_files(dir: &Path) -> Vec<PathBuf> {
    let root = cifar_root(dir);
    (1..=5)
        .map(|b| root.join(format!("data_batch_{b}.bin")))
        .chain([root.join("test_batch.bin")])
        .collect()
}

/// Files [`load_mnist`] reads from `dir`.
pub fn mnist_files(dir: &Path) -> Vec<PathBuf> {
    MNIST_FILES.iter().map(|f| dir.join(f)).collect()
}

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads `data_batch_1..5.bin` as the training set and `test_batch.bin` as the
/// test set. `dir` may also be the parent of `cifar-10-batches-bin/`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let root = cifar_root(dir);
    let mut train_inputs = Vec::new();
    let mut train_labels = Vec::new();
    for b in 1..=5 {
        let path = root.join(format!("data_batch_{b}.bin"));
        let (x, y) = parse_cifar10_records(&read_file(&path)?, &path)?;
        train_inputs.extend(x);
        train_labels.extend(y);
    }
    let path = root.join("test_batch.bin");
    let (test_inputs, test_labels) = parse_cifar10_records(&read_file(&path)?, &path)?;
    Ok((
        Dataset::new("cifar10", Split::Train, CIFAR10_DIM, 10, train_inputs, train_labels)?,
        Dataset::new("cifar10", Split::Test, CIFAR10_DIM, 10, test_inputs, test_labels)?,
    ))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format_err(path, offset as u64, "truncated IDX header"))
}

/// Parses an IDX3 image file into `(pixels / 255, rows * cols)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(Vec<f32>, usize)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(path, 0, format!("bad IDX image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * dim {
        return Err(format_err(
            path,
            (16 + body.len().min(n * dim)) as u64,
            format!("expected {} pixel bytes, found {}", n * dim, body.len()),
        ));
    }
    Ok((body.iter().map(|&b| f32::from(b) / 255.0).collect(), dim))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err(path, 0, format!("bad IDX label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(format_err(
            path,
            (8 + body.len().min(n)) as u64,
            format!("expected {n} labels, found {}", body.len()),
        ));
    }
    if let Some(pos) = body.iter().position(|&b| b > 9) {
        return Err(format_err(path, (8 + pos) as u64, "label out of range"));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads the four uncompressed MNIST IDX files from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let load = |images: &str, labels: &str, split| -> Result<Dataset> {
        let ip = dir.join(images);
        let lp = dir.join(labels);
        let (x, dim) = parse_idx_images(&read_file(&ip)?, &ip)?;
        let y = parse_idx_labels(&read_file(&lp)?, &lp)?;
        if x.len() != y.len() * dim {
            return Err(format_err(&lp, 4, "image and label counts differ"));
        }
        Dataset::new("mnist", split, dim, 10, x, y)
    };
    Ok((
        load(MNIST_FILES[0], MNIST_FILES[1], Split::Train)?,
        load(MNIST_FILES[2], MNIST_FILES[3], Split::Test)?,
    ))
}

/// Class-conditional Gaussians with unit covariance around fixed random means.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    means: Vec<Vec<f64>>,
}

impl GaussianMixture {
    /// Class means are drawn coordinate-wise from `N(0, spread^2)`.
    pub fn new(dim: usize, classes: usize, seed: u64, spread: f64) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::InvalidConfig("dimension and class count must be positive".into()));
        }
        let mut r = rng(seed);
        let means = (0..classes)
            .map(|_| {
                (0..dim)
                    .map(|_| spread * Distribution::<f64>::sample(&StandardNormal, &mut r))
                    .collect()
            })
            .collect();
        Ok(Self { dim, means })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// `n` samples; sample `i` belongs to class `i % classes`.
    pub fn sample(&self, n: usize, seed: u64, split: Split) -> Result<Dataset> {
        let classes = self.means.len();
        let mut r = rng(seed);
        let mut inputs = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % classes;
            for &m in &self.means[c] {
                let z: f64 = StandardNormal.sample(&mut r);
                inputs.push((m + z) as f32);
            }
            labels.push(c);
        }
        Dataset::new("synthetic", split, self.dim, classes, inputs, labels)
    }
}

/// `n` samples from a Gaussian mixture with unit-spread random means.
pub fn synthetic_gaussian(d_in: usize, classes: usize, n: usize, seed: u64) -> Result<Dataset> {
    if n < classes {
        return Err(Error::InvalidConfig(format!(
            "need at least one sample per class ({n} < {classes})"
        )));
    }
    GaussianMixture::new(d_in, classes, seed, 1.0)?.sample(n, seed.wrapping_add(1), Split::Train)
}

/// Train and test sets drawn from the same mixture.
pub fn synthetic_gaussian_split(
    d_in: usize,
    classes: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
    spread: f64,
) -> Result<(Dataset, Dataset)> {
    if n_train < classes || n_test < classes {
        return Err(Error::InvalidConfig("need at least one sample per class".into()));
    }
    let mix = GaussianMixture::new(d_in, classes, seed, spread)?;
    Ok((
        mix.sample(n_train, seed.wrapping_add(1), Split::Train)?,
        mix.sample(n_test, seed.wrapping_add(2), Split::Test)?,
    ))
}

/// Deterministic stratified subsample of `n` rows. Each class receives
/// `n / classes` rows (the remainder goes to the lowest class indices); a class
/// that runs short hands its quota to the others. Original order is kept.
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot take {n} samples from a dataset of {}",
            ds.len()
        )));
    }
    let mut r = rng(seed);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); ds.classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        groups[l].push(i);
    }
    for g in &mut groups {
        g.shuffle(&mut r);
    }
    let present: Vec<usize> = (0..groups.len()).filter(|&c| !groups[c].is_empty()).collect();
    let mut quota = vec![0usize; groups.len()];
    if !present.is_empty() {
        let base = n / present.len();
        let extra = n % present.len();
        for (j, &c) in present.iter().enumerate() {
            quota[c] = base + usize::from(j < extra);
        }
    }
    let mut spill = 0;
    for c in 0..groups.len() {
        if quota[c] > groups[c].len() {
            spill += quota[c] - groups[c].len();
            quota[c] = groups[c].len();
        }
    }
    while spill > 0 {
        let before = spill;
        for c in 0..groups.len() {
            if spill > 0 && quota[c] < groups[c].len() {
                quota[c] += 1;
                spill -= 1;
            }
        }
        debug_assert!(spill < before);
    }
    let mut chosen: Vec<usize> = groups
        .iter()
        .zip(&quota)
        .flat_map(|(g, &q)| g[..q].iter().copied())
        .collect();
    chosen.sort_unstable();
    Ok(ds.select(&chosen))
}

/// Per-feature standardization using statistics of `train`, applied to both sets.
pub fn standardize(train: &mut Dataset, test: &mut Dataset) -> Result<()> {
    if train.dim != test.dim {
        return Err(Error::shape("train and test dimensions differ"));
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = train.dim;
    let n = train.len() as f64;
    let mut mean = vec![0.0f64; d];
    for row in train.inputs.chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; d];
    for row in train.inputs.chunks_exact(d) {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (f64::from(v) - m).powi(2);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt().max(1e-12)).collect();
    for ds in [train, test] {
        for row in ds.inputs.chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&mean).zip(&std) {
                *v = ((f64::from(*v) - m) / s) as f32;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cifar_record_parsing() {
        let mut bytes = vec![0u8; CIFAR10_RECORD];
        let mut second = vec![3u8; CIFAR10_RECORD];
        second[1] = 255;
        bytes.extend(&second);
        let (x, y) = parse_cifar10_records(&bytes, Path::new("batch.bin")).unwrap();
        assert_eq!(y, vec![0, 3]);
        assert!(x[..CIFAR10_DIM].iter().all(|&v| v == 0.0));
        assert_eq!(x[CIFAR10_DIM], 1.0);

        let err = parse_cifar10_records(&bytes[..CIFAR10_RECORD + 10], Path::new("batch.bin"))
            .unwrap_err();
        match err {
            Error::Format { offset, path, .. } => {
                assert_eq!(offset, CIFAR10_RECORD as u64);
                assert_eq!(path, Path::new("batch.bin"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn cifar_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("cifar-10-batches-bin");
        fs::create_dir(&nested).unwrap();
        for name in (1..=5)
            .map(|b| format!("data_batch_{b}.bin"))
            .chain(["test_batch.bin".to_string()])
        {
            let mut rec = vec![7u8; CIFAR10_RECORD * 2];
            rec[CIFAR10_RECORD] = 2;
            fs::write(nested.join(name), rec).unwrap();
        }
        let (train, test) = load_cifar10(dir.path()).unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 2);
        assert_eq!(train.class_counts()[7], 5);
        assert!(train.raw_inputs().iter().all(|&v| (0.0..=1.0).contains(&v)));

        fs::remove_file(nested.join("data_batch_3.bin")).unwrap();
        let err = load_cifar10(dir.path()).unwrap_err();
        assert!(err.to_string().contains("data_batch_3.bin"), "{err}");
    }

    fn idx_images(n: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        b.extend(n.to_be_bytes());
        b.extend(rows.to_be_bytes());
        b.extend(cols.to_be_bytes());
        b.extend(std::iter::repeat_n(fill, (n * rows * cols) as usize));
        b
    }

    #[test]
    fn idx_magic_checks() {
        let p = Path::new("imgs");
        let (x, dim) = parse_idx_images(&idx_images(2, 28, 28, 0), p).unwrap();
        assert_eq!(dim, MNIST_DIM);
        assert!(x.iter().all(|&v| v == 0.0));

        let mut bad = idx_images(1, 2, 2, 0);
        bad[3] = 0x01;
        assert!(matches!(parse_idx_images(&bad, p), Err(Error::Format { offset: 0, .. })));

        let mut labels = Vec::new();
        labels.extend(IDX_LABELS_MAGIC.to_be_bytes());
        labels.extend(3u32.to_be_bytes());
        labels.extend([1u8, 9, 0]);
        assert_eq!(parse_idx_labels(&labels, p).unwrap(), vec![1, 9, 0]);
        assert!(parse_idx_labels(&idx_images(1, 1, 1, 0), p).is_err());
    }

    #[test]
    fn mnist_files() {
        let dir = tempfile::tempdir().unwrap();
        let label_file = |n: u32| {
            let mut b = Vec::new();
            b.extend(IDX_LABELS_MAGIC.to_be_bytes());
            b.extend(n.to_be_bytes());
            b.extend((0..n).map(|i| (i % 10) as u8));
            b
        };
        fs::write(dir.path().join("train-images-idx3-ubyte"), idx_images(20, 28, 28, 51)).unwrap();
        fs::write(dir.path().join("train-labels-idx1-ubyte"), label_file(20)).unwrap();
        fs::write(dir.path().join("t10k-images-idx3-ubyte"), idx_images(5, 28, 28, 255)).unwrap();
        fs::write(dir.path().join("t10k-labels-idx1-ubyte"), label_file(5)).unwrap();
        let (train, test) = load_mnist(dir.path()).unwrap();
        assert_eq!((train.len(), train.dim()), (20, MNIST_DIM));
        assert!((train.inputs().row(0)[0] - 0.2).abs() < 1e-7);
        assert!(test.raw_inputs().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gaussian_basics() {
        let a = synthetic_gaussian(5, 3, 3, 11).unwrap();
        assert_eq!(a.labels(), &[0, 1, 2]);
        assert_eq!(a, synthetic_gaussian(5, 3, 3, 11).unwrap());
        assert!(synthetic_gaussian(5, 3, 2, 11).is_err());
    }

    #[test]
    fn gaussian_class_means_concentrate() {
        let n = 20_000;
        let mix = GaussianMixture::new(4, 2, 5, 1.0).unwrap();
        let ds = mix.sample(n, 6, Split::Train).unwrap();
        let per_class = (n / 2) as f64;
        for c in 0..2 {
            let mut mean = [0.0f64; 4];
            for i in (c..n).step_by(2) {
                for (m, &v) in mean.iter_mut().zip(ds.inputs().row(i)) {
                    *m += f64::from(v) / per_class;
                }
            }
            for (m, t) in mean.iter().zip(&mix.means()[c]) {
                assert!((m - t).abs() < 3.0 / per_class.sqrt(), "{m} vs {t}");
            }
        }
    }

    #[test]
    fn stratified_subsample() {
        let ds = synthetic_gaussian(2, 10, 1000, 1).unwrap();
        let s = subsample(&ds, 10, 4).unwrap();
        assert_eq!(s.class_counts(), vec![1; 10]);
        let s = subsample(&ds, 500, 4).unwrap();
        assert_eq!(s.class_counts(), vec![50; 10]);
        assert_eq!(s, subsample(&ds, 500, 4).unwrap());
        let all = subsample(&ds, 1000, 9).unwrap();
        assert_eq!(all, ds);
        assert!(subsample(&ds, 1001, 0).is_err());
    }

    #[test]
    fn subsample_redistributes_short_classes() {
        let labels = vec![0, 0, 0, 0, 0, 0, 1, 2];
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_rows("t", Split::Train, 3, &rows, labels).unwrap();
        let s = subsample(&ds, 6, 0).unwrap();
        assert_eq!(s.class_counts(), vec![4, 1, 1]);
    }

    #[test]
    fn standardization() {
        let rows = vec![vec![1.0, 10.0], vec![3.0, 10.0]];
        let mut train = Dataset::from_rows("t", Split::Train, 2, &rows, vec![0, 1]).unwrap();
        let mut test = train.clone();
        standardize(&mut train, &mut test).unwrap();
        assert_eq!(train.inputs().row(0), &[-1.0, 0.0]);
        assert_eq!(test.inputs().row(1), &[1.0, 0.0]);
    }
}
