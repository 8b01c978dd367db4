//! MNIST (IDX) and CIFAR-10 (binary batch) readers.
//!
//! Readers return raw pixel intensities in `0..=255`; [`normalize_and_subset`]
//! scales them to `[0, 1]`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_SIDE: usize = 32;
pub const NUM_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<Tensor3>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(|t| t.shape())
    }

    /// One flattened image per row.
    pub fn to_matrix(&self) -> Matrix {
        let cols = self.images.first().map_or(0, |t| t.as_slice().len());
        let mut data = Vec::with_capacity(self.len() * cols);
        for img in &self.images {
            data.extend_from_slice(img.as_slice());
        }
        Matrix::new(self.len(), cols, data).expect("uniform image sizes")
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }
}

// ---------------------------------------------------------------------------
// IDX

/// An unsigned-byte IDX array: dimension sizes plus row-major payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    const WHAT: &str = "IDX file";
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            what: WHAT,
            offset: 0,
            needed: (4 - bytes.len()) as u64,
        });
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let ndims = match magic {
        IDX_IMAGES_MAGIC => 3,
        IDX_LABELS_MAGIC => 1,
        _ => {
            return Err(Error::BadMagic {
                what: WHAT,
                expected: IDX_IMAGES_MAGIC.to_be_bytes().to_vec(),
                found: bytes[0..4].to_vec(),
            })
        }
    };
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::Truncated {
            what: WHAT,
            offset: bytes.len() as u64,
            needed: (header - bytes.len()) as u64,
        });
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Malformed {
            what: WHAT,
            offset: 4,
            reason: format!("dimension product {dims:?} overflows"),
        })?;
    let have = bytes.len() - header;
    if have < payload {
        return Err(Error::Truncated {
            what: WHAT,
            offset: bytes.len() as u64,
            needed: (payload - have) as u64,
        });
    }
    if have > payload {
        return Err(Error::Malformed {
            what: WHAT,
            offset: (header + payload) as u64,
            reason: format!("{} trailing bytes", have - payload),
        });
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn encode_idx(arr: &IdxArray) -> Result<Vec<u8>> {
    let magic = match arr.dims.len() {
        3 => IDX_IMAGES_MAGIC,
        1 => IDX_LABELS_MAGIC,
        n => return Err(Error::InvalidArgument(format!("IDX arrays with {n} dims unsupported"))),
    };
    let mut out = Vec::with_capacity(4 + 4 * arr.dims.len() + arr.data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in &arr.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidArgument(format!("IDX dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&arr.data);
    Ok(out)
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    parse_idx(&read_file(path.as_ref())?)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    Ok(std::fs::read(path)?)
}

fn check_labels(labels: &[u8], what: &'static str, base: usize, stride: usize) -> Result<()> {
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
        return Err(Error::Malformed {
            what,
            offset: (base + i * stride) as u64,
            reason: format!("label {l} outside 0..=9"),
        });
    }
    Ok(())
}

/// Pairs an image array (`n x rows x cols`) with a label array (`n`).
pub fn mnist_from_idx(images: &IdxArray, labels: &IdxArray, split: Split) -> Result<Dataset> {
    if images.dims.len() != 3 || labels.dims.len() != 1 {
        return Err(Error::InvalidArgument("expected 3-d images and 1-d labels".into()));
    }
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        return Err(Error::InvalidArgument(format!(
            "{n} images but {} labels",
            labels.dims[0]
        )));
    }
    check_labels(&labels.data, "IDX label file", 8, 1)?;
    let plane = h * w;
    let images = (0..n)
        .map(|i| {
            let px = images.data[i * plane..(i + 1) * plane].iter().map(|&b| b as f64).collect();
            Tensor3::new(1, h, w, px)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        images,
        labels: labels.data.clone(),
        split,
    })
}

/// Reads `train-*-ubyte` or `t10k-*-ubyte` from `dir`.
pub fn load_mnist(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let stem = match split {
        Split::Train => "train",
        Split::Validation => "t10k",
    };
    let dir = dir.as_ref();
    let images = read_idx(dir.join(format!("{stem}-images-idx3-ubyte")))?;
    let labels = read_idx(dir.join(format!("{stem}-labels-idx1-ubyte")))?;
    mnist_from_idx(&images, &labels, split)
}

// ---------------------------------------------------------------------------
// CIFAR-10

pub fn parse_cifar10(bytes: &[u8], split: Split) -> Result<Dataset> {
    const WHAT: &str = "CIFAR-10 batch";
    if bytes.is_empty() {
        return Err(Error::Truncated {
            what: WHAT,
            offset: 0,
            needed: CIFAR_RECORD as u64,
        });
    }
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Malformed {
            what: WHAT,
            offset: (bytes.len() - bytes.len() % CIFAR_RECORD) as u64,
            reason: format!("length {} is not a multiple of {CIFAR_RECORD}", bytes.len()),
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        labels.push(rec[0]);
        let px = rec[1..].iter().map(|&b| b as f64).collect();
        images.push(Tensor3::new(3, CIFAR_SIDE, CIFAR_SIDE, px)?);
    }
    check_labels(&labels, WHAT, 0, CIFAR_RECORD)?;
    Ok(Dataset {
        images,
        labels,
        split,
    })
}

pub fn encode_cifar10(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD);
    for (img, &l) in ds.images.iter().zip(&ds.labels) {
        if img.shape() != (3, CIFAR_SIDE, CIFAR_SIDE) {
            return Err(Error::InvalidArgument(format!("CIFAR image of shape {:?}", img.shape())));
        }
        out.push(l);
        out.extend(img.as_slice().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

/// Concatenates several binary batch files.
pub fn read_cifar10<P: AsRef<Path>>(paths: &[P], split: Split) -> Result<Dataset> {
    let mut all = Dataset {
        images: vec![],
        labels: vec![],
        split,
    };
    for p in paths {
        let ds = parse_cifar10(&read_file(p.as_ref())?, split).map_err(|e| match e {
            Error::Malformed { offset, reason, .. } => Error::Malformed {
                what: "CIFAR-10 batch",
                offset,
                reason: format!("{}: {reason}", p.as_ref().display()),
            },
            e => e,
        })?;
        all.images.extend(ds.images);
        all.labels.extend(ds.labels);
    }
    Ok(all)
}

/// `data_batch_{1..5}.bin` or `test_batch.bin` under `dir` (or under
/// `dir/cifar-10-batches-bin`).
pub fn load_cifar10(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let mut dir = dir.as_ref().to_path_buf();
    if !dir.join("test_batch.bin").exists() && dir.join("cifar-10-batches-bin").exists() {
        dir = dir.join("cifar-10-batches-bin");
    }
    let files: Vec<PathBuf> = match split {
        Split::Train => (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
        Split::Validation => vec![dir.join("test_batch.bin")],
    };
    read_cifar10(&files, split)
}

// ---------------------------------------------------------------------------

/// Scales pixels by 1/255 and keeps a seeded, class-stratified `fraction`
/// of the samples (original order preserved).
pub fn normalize_and_subset(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subset fraction {fraction} outside (0, 1]"
        )));
    }
    let mut keep = Vec::new();
    if fraction == 1.0 {
        keep.extend(0..ds.len());
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for class in 0..NUM_CLASSES as u8 {
            let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
            let take = (idx.len() as f64 * fraction).round() as usize;
            idx.shuffle(&mut rng);
            keep.extend_from_slice(&idx[..take]);
        }
        keep.sort_unstable();
    }
    let images = keep
        .iter()
        .map(|&i| {
            let img = &ds.images[i];
            let (c, h, w) = img.shape();
            Tensor3::new(c, h, w, img.as_slice().iter().map(|v| v / 255.0).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        images,
        labels: keep.iter().map(|&i| ds.labels[i]).collect(),
        split: ds.split,
    })
}
