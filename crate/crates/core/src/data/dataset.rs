use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Smallest side accepted into a training pool.
pub const DEFAULT_MIN_SIDE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split `{other}`"))),
        }
    }
}

/// Where a dataset lives and which images qualify.
///
/// When `<root>/<split>.txt` exists it lists image paths relative to the
/// root, one per line; otherwise every `.pgm` file directly inside the root
/// belongs to the split.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub root: PathBuf,
    pub split: Split,
    pub min_side: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(root: impl Into<PathBuf>, split: Split) -> Self {
        Self {
            root: root.into(),
            split,
            min_side: DEFAULT_MIN_SIDE,
            seed: 0,
        }
    }

    pub fn with_min_side(mut self, min_side: usize) -> Self {
        self.min_side = min_side;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn split_file(&self) -> PathBuf {
        self.root.join(format!("{}.txt", self.split))
    }

    /// Relative paths of the split's members, before size filtering.
    pub fn list(&self) -> Result<Vec<String>> {
        let split_file = self.split_file();
        if split_file.is_file() {
            let text = fs::read_to_string(&split_file).map_err(|e| Error::io(&split_file, e))?;
            return Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect());
        }
        let entries = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let path = entry.path();
            let is_pgm = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
            if is_pgm && path.is_file() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        Ok(names)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    /// Path relative to the dataset root, as listed.
    pub path: String,
    pub image: GrayImage,
}

/// Decoded images of one split, in listing order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    entries: Vec<DatasetEntry>,
    /// Listed images dropped by the minimum-side filter.
    pub skipped: Vec<String>,
}

impl Dataset {
    pub fn open(spec: &DatasetSpec) -> Result<Self> {
        let mut entries = Vec::new();
        let mut skipped = Vec::new();
        for rel in spec.list()? {
            let image = GrayImage::load(spec.root.join(&rel))?;
            if image.height().min(image.width()) >= spec.min_side {
                entries.push(DatasetEntry { path: rel, image });
            } else {
                skipped.push(rel);
            }
        }
        Ok(Self { entries, skipped })
    }

    pub fn from_images(images: impl IntoIterator<Item = (String, GrayImage)>) -> Self {
        Self {
            entries: images
                .into_iter()
                .map(|(path, image)| DatasetEntry { path, image })
                .collect(),
            skipped: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image(&self, i: usize) -> &GrayImage {
        &self.entries[i].image
    }

    /// Smallest side over all images, if any.
    pub fn min_side(&self) -> Option<usize> {
        self.entries
            .iter()
            .map(|e| e.image.height().min(e.image.width()))
            .min()
    }
}

/// Writes `images` as `name.pgm` files under `dir` (created if missing).
pub fn write_images(dir: &Path, images: &[(String, GrayImage)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, image) in images {
        image.save(dir.join(name))?;
    }
    Ok(())
}
