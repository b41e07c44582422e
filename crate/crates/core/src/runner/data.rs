//! Datasets: synthetic Gaussian blobs and IDX-format image/label files.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::config::DatasetSpec;
use crate::error::SimError;
use crate::num::{Matrix, RandomStream};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.x.cols()
    }

    fn subset_by_index(&self, idx: &[usize]) -> Dataset {
        let mut x = Matrix::zeros(idx.len(), self.x.cols());
        let mut labels = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            x.row_mut(row).copy_from_slice(self.x.row(i));
            labels.push(self.labels[i]);
        }
        Dataset { x, labels, classes: self.classes }
    }

    /// Deterministic random subset of `n` samples (all when n = 0).
    pub fn subset(&self, n: usize, stream: &mut RandomStream) -> Result<Dataset, SimError> {
        if n == 0 {
            return Ok(self.clone());
        }
        if n > self.len() {
            return Err(SimError::DataFormat(format!(
                "requested subset of {n} from a dataset of {}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        stream.shuffle(&mut idx);
        idx.truncate(n);
        Ok(self.subset_by_index(&idx))
    }
}

fn read_u32_be(r: &mut impl Read, what: &str) -> Result<u32, SimError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| SimError::DataFormat(format!("truncated IDX file reading {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse an IDX image file (magic 0x00000803) into [0, 1] floats.
pub fn read_idx_images(path: &Path) -> Result<Matrix, SimError> {
    let mut f = File::open(path)
        .map_err(|e| SimError::DataFormat(format!("cannot open {}: {e}", path.display())))?;
    let magic = read_u32_be(&mut f, "magic")?;
    if magic != 0x0000_0803 {
        return Err(SimError::DataFormat(format!(
            "bad image magic 0x{magic:08x} in {} (expected 0x00000803)",
            path.display()
        )));
    }
    let n = read_u32_be(&mut f, "count")? as usize;
    let rows = read_u32_be(&mut f, "rows")? as usize;
    let cols = read_u32_be(&mut f, "cols")? as usize;
    let mut bytes = vec![0u8; n * rows * cols];
    f.read_exact(&mut bytes)
        .map_err(|_| SimError::DataFormat(format!("truncated image data in {}", path.display())))?;
    let data: Vec<f64> = bytes.iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(n, rows * cols, data)
}

/// Parse an IDX label file (magic 0x00000801).
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>, SimError> {
    let mut f = File::open(path)
        .map_err(|e| SimError::DataFormat(format!("cannot open {}: {e}", path.display())))?;
    let magic = read_u32_be(&mut f, "magic")?;
    if magic != 0x0000_0801 {
        return Err(SimError::DataFormat(format!(
            "bad label magic 0x{magic:08x} in {} (expected 0x00000801)",
            path.display()
        )));
    }
    let n = read_u32_be(&mut f, "count")? as usize;
    let mut bytes = vec![0u8; n];
    f.read_exact(&mut bytes)
        .map_err(|_| SimError::DataFormat(format!("truncated label data in {}", path.display())))?;
    Ok(bytes.iter().map(|&b| b as usize).collect())
}

/// Load a train/test pair of IDX datasets from a directory using the
/// conventional file names.
pub fn load_idx_dataset(dir: &Path) -> Result<(Dataset, Dataset), SimError> {
    let load_pair = |images: &str, labels: &str| -> Result<Dataset, SimError> {
        let x = read_idx_images(&dir.join(images))?;
        let labels = read_idx_labels(&dir.join(labels))?;
        if x.rows() != labels.len() {
            return Err(SimError::DataFormat(format!(
                "{images}: {} images vs {} labels",
                x.rows(),
                labels.len()
            )));
        }
        let classes = labels.iter().copied().max().unwrap_or(0) + 1;
        Ok(Dataset { x, labels, classes })
    };
    let train = load_pair("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    let mut test = load_pair("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    test.classes = test.classes.max(train.classes);
    Ok((train, test))
}

/// Deterministic Gaussian-blob classification set.
pub fn synthetic_blobs(
    features: usize,
    classes: usize,
    spread: f64,
    n: usize,
    stream: &mut RandomStream,
) -> Dataset {
    let centers = Matrix::from_fn(classes, features, |_, _| stream.normal());
    let mut x = Matrix::zeros(n, features);
    let mut labels = Vec::with_capacity(n);
    for s in 0..n {
        let c = s % classes;
        for j in 0..features {
            x.set(s, j, centers.get(c, j) + spread * stream.normal());
        }
        labels.push(c);
    }
    Dataset { x, labels, classes }
}

/// Build train/test datasets from a spec; subsets are drawn with the given
/// stream so the split is a pure function of the seed.
pub fn build_datasets(
    spec: &DatasetSpec,
    stream: &mut RandomStream,
) -> Result<(Dataset, Dataset), SimError> {
    match spec.kind.as_str() {
        "synthetic_blobs" => {
            let n_train = if spec.train_size == 0 { 200 * spec.classes } else { spec.train_size };
            let n_test = if spec.test_size == 0 { 50 * spec.classes } else { spec.test_size };
            let all = synthetic_blobs(
                spec.features,
                spec.classes,
                spec.spread,
                n_train + n_test,
                stream,
            );
            let train_idx: Vec<usize> = (0..n_train).collect();
            let test_idx: Vec<usize> = (n_train..n_train + n_test).collect();
            Ok((all.subset_by_index(&train_idx), all.subset_by_index(&test_idx)))
        }
        "mnist_idx" => {
            let (train, test) = load_idx_dataset(Path::new(&spec.path))?;
            let train = train.subset(spec.train_size, &mut stream.derive(1))?;
            let test = test.subset(spec.test_size, &mut stream.derive(2))?;
            Ok((train, test))
        }
        other => Err(SimError::config("dataset.kind", format!("unknown kind '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture_dir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("crossbar_idx_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn write_images(path: &Path, magic: u32, n: u32, imgs: &[u8]) {
        let mut f = File::create(path).unwrap();
        f.write_all(&magic.to_be_bytes()).unwrap();
        f.write_all(&n.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(imgs).unwrap();
    }

    #[test]
    fn well_formed_fixture_parses() {
        let dir = fixture_dir();
        let img_path = dir.join("imgs");
        // 4 images of 2x2 pixels.
        let pixels: Vec<u8> = (0..16).map(|i| (i * 17) as u8).collect();
        write_images(&img_path, 0x0000_0803, 4, &pixels);
        let m = read_idx_images(&img_path).unwrap();
        assert_eq!(m.rows(), 4);
        assert_eq!(m.cols(), 4);
        assert!(m.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!((m.get(0, 1) - 17.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = fixture_dir();
        let img_path = dir.join("bad_magic");
        write_images(&img_path, 0x0000_0804, 1, &[0u8; 4]);
        let err = read_idx_images(&img_path).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = fixture_dir();
        let img_path = dir.join("truncated");
        write_images(&img_path, 0x0000_0803, 4, &[0u8; 3]);
        let err = read_idx_images(&img_path).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn oversized_subset_rejected() {
        let mut stream = RandomStream::new(1, 0);
        let ds = synthetic_blobs(4, 2, 0.1, 10, &mut stream);
        assert!(ds.subset(11, &mut stream).is_err());
        assert_eq!(ds.subset(6, &mut stream).unwrap().len(), 6);
    }

    #[test]
    fn blobs_are_deterministic() {
        let mut s1 = RandomStream::new(9, 1);
        let mut s2 = RandomStream::new(9, 1);
        let a = synthetic_blobs(5, 3, 0.2, 30, &mut s1);
        let b = synthetic_blobs(5, 3, 0.2, 30, &mut s2);
        assert_eq!(a.x, b.x);
        assert_eq!(a.labels, b.labels);
    }
}
