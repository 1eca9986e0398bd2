//! Sections, datasets and their on-disk format.
//!
//! A dataset is a JSON manifest next to per-section files: grayscale and
//! membrane-probability PNGs (8- or 16-bit, decoded to `[0, 1]`) and raw
//! little-endian `u32` label maps in row-major order. Paths inside the
//! manifest are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FloatMap, LabelMap};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionGeometry {
    pub width: usize,
    pub height: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub geometry: SectionGeometry,
    pub gray: FloatMap,
    pub membrane: FloatMap,
    pub labels: LabelMap,
    pub gt_labels: Option<LabelMap>,
}

impl Section {
    /// Builds a section after checking shapes and value ranges.
    pub fn new(
        index: usize,
        gray: FloatMap,
        membrane: FloatMap,
        labels: LabelMap,
        gt_labels: Option<LabelMap>,
    ) -> Result<Self> {
        let (width, height) = gray.dims();
        let geometry = SectionGeometry {
            width,
            height,
            index,
        };
        let section = Self {
            geometry,
            gray,
            membrane,
            labels,
            gt_labels,
        };
        section.validate()?;
        Ok(section)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = (self.geometry.width, self.geometry.height);
        let idx = self.geometry.index;
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::InvalidSection(format!("section {idx} is empty")));
        }
        let shapes = [
            ("gray", self.gray.dims()),
            ("membrane", self.membrane.dims()),
            ("labels", self.labels.dims()),
        ];
        for (name, d) in shapes {
            if d != dims {
                return Err(Error::GeometryMismatch(format!(
                    "section {idx}: {name} is {}x{}, expected {}x{}",
                    d.0, d.1, dims.0, dims.1
                )));
            }
        }
        if let Some(gt) = &self.gt_labels {
            if gt.dims() != dims {
                return Err(Error::GeometryMismatch(format!(
                    "section {idx}: gt_labels is {}x{}, expected {}x{}",
                    gt.width(),
                    gt.height(),
                    dims.0,
                    dims.1
                )));
            }
        }
        for (name, map) in [("gray", &self.gray), ("membrane", &self.membrane)] {
            if let Some(v) = map.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidSection(format!(
                    "section {idx}: {name} value {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn index(&self) -> usize {
        self.geometry.index
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub manifest_path: PathBuf,
    pub sections: Vec<Section>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, sections: Vec<Section>) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            manifest_path: PathBuf::new(),
            sections,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .sections
            .first()
            .ok_or_else(|| Error::InvalidManifest("dataset has no sections".into()))?;
        let dims = (first.width(), first.height());
        let mut seen = std::collections::HashSet::new();
        for s in &self.sections {
            s.validate()?;
            if (s.width(), s.height()) != dims {
                return Err(Error::GeometryMismatch(format!(
                    "section {} is {}x{}, dataset is {}x{}",
                    s.index(),
                    s.width(),
                    s.height(),
                    dims.0,
                    dims.1
                )));
            }
            if !seen.insert(s.index()) {
                return Err(Error::InvalidManifest(format!(
                    "duplicate section index {}",
                    s.index()
                )));
            }
        }
        Ok(())
    }

    pub fn has_ground_truth(&self) -> bool {
        self.sections.iter().all(|s| s.gt_labels.is_some())
    }

    pub fn width(&self) -> usize {
        self.sections[0].width()
    }

    pub fn height(&self) -> usize {
        self.sections[0].height()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub sections: Vec<ManifestSection>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSection {
    pub index: usize,
    pub gray: String,
    pub membrane: String,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_labels: Option<String>,
}

/// Accepts either a manifest file or a directory containing `manifest.json`.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = resolve_manifest_path(manifest_path.as_ref());
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidManifest(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut sections = Vec::with_capacity(manifest.sections.len());
    for entry in &manifest.sections {
        let (w, h) = (manifest.width, manifest.height);
        let gray = read_png_unit(&base.join(&entry.gray))?;
        let membrane = read_png_unit(&base.join(&entry.membrane))?;
        let labels = read_labels(&base.join(&entry.labels), w, h)?;
        let gt_labels = entry
            .gt_labels
            .as_ref()
            .map(|p| read_labels(&base.join(p), w, h))
            .transpose()?;
        for (name, map) in [("gray", &gray), ("membrane", &membrane)] {
            if map.dims() != (w, h) {
                return Err(Error::GeometryMismatch(format!(
                    "section {}: {name} image is {}x{}, manifest declares {w}x{h}",
                    entry.index,
                    map.width(),
                    map.height()
                )));
            }
        }
        sections.push(Section::new(
            entry.index,
            gray,
            membrane,
            labels,
            gt_labels,
        )?);
    }

    let dataset = Dataset {
        name: manifest.name,
        manifest_path,
        sections,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes every section (images, labels, ground truth) plus a fresh manifest
/// into `out_dir` and returns the manifest path.
pub fn save_labels(dataset: &Dataset, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::IoFailure {
        path: out_dir.to_path_buf(),
        source: e,
    })?;

    let mut entries = Vec::with_capacity(dataset.sections.len());
    for s in &dataset.sections {
        let stem = format!("section_{:04}", s.index());
        let entry = ManifestSection {
            index: s.index(),
            gray: format!("{stem}_gray.png"),
            membrane: format!("{stem}_membrane.png"),
            labels: format!("{stem}_labels.u32"),
            gt_labels: s.gt_labels.as_ref().map(|_| format!("{stem}_gt.u32")),
        };
        write_png_unit(&out_dir.join(&entry.gray), &s.gray)?;
        write_png_unit(&out_dir.join(&entry.membrane), &s.membrane)?;
        write_labels(&out_dir.join(&entry.labels), &s.labels)?;
        if let (Some(gt), Some(name)) = (&s.gt_labels, &entry.gt_labels) {
            write_labels(&out_dir.join(name), gt)?;
        }
        entries.push(entry);
    }

    let manifest = Manifest {
        name: dataset.name.clone(),
        width: dataset.width(),
        height: dataset.height(),
        sections: entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_labels(path: &Path, width: usize, height: usize) -> Result<LabelMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = 4 * width * height;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(LabelMap::from_vec(width, height, data).expect("length checked"))
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let bytes: Vec<u8> = labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_file(path, &bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

/// Decodes an 8-bit (`v / 255`) or 16-bit (`v / 65535`) grayscale PNG.
pub fn read_png_unit(path: &Path) -> Result<FloatMap> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect(),
        DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 255.0)
            .collect(),
        DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect(),
        other => other
            .into_luma8()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 255.0)
            .collect(),
    };
    Ok(FloatMap::from_vec(w, h, data).expect("image buffer matches its dimensions"))
}

/// Encodes as 8-bit when every value sits exactly on the `k / 255` grid,
/// otherwise as 16-bit. Values decoded from either depth re-encode losslessly.
pub fn write_png_unit(path: &Path, map: &FloatMap) -> Result<()> {
    let (w, h) = (map.width() as u32, map.height() as u32);
    let on_8bit_grid = map.iter().all(|&v| (v * 255.0).round() / 255.0 == v);
    let result = if on_8bit_grid {
        let raw: Vec<u8> = map.iter().map(|&v| (v * 255.0).round() as u8).collect();
        ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
            .expect("buffer size")
            .save(path)
    } else {
        let raw: Vec<u16> = map
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw)
            .expect("buffer size")
            .save(path)
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(source) => Error::IoFailure {
            path: path.to_path_buf(),
            source,
        },
        other => Error::IoFailure {
            path: path.to_path_buf(),
            source: std::io::Error::other(other.to_string()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section(index: usize, w: usize, h: usize) -> Section {
        let gray = FloatMap::from_fn(w, h, |r, c| ((r * 7 + c * 3) % 256) as f32 / 255.0);
        let membrane = FloatMap::filled(w, h, 0.5);
        let labels = LabelMap::from_fn(w, h, |r, c| (1 + r / 10 + 10 * (c / 25)) as u32);
        Section::new(index, gray, membrane, labels.clone(), Some(labels)).unwrap()
    }

    #[test]
    fn one_section_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new("one", vec![section(0, 100, 100)]).unwrap();
        let manifest = save_labels(&ds, dir.path()).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back.sections.len(), 1);
        assert_eq!(back.sections[0].labels, ds.sections[0].labels);
        assert_eq!(back.sections[0].gray, ds.sections[0].gray);
        assert_eq!(back.sections[0].gt_labels, ds.sections[0].gt_labels);
        assert_eq!(back.name, "one");
    }

    #[test]
    fn three_sections_write_three_label_files() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new("three", (0..3).map(|i| section(i, 80, 80)).collect()).unwrap();
        save_labels(&ds, dir.path()).unwrap();
        let label_files = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .ends_with("_labels.u32")
            })
            .count();
        assert_eq!(label_files, 3);
        assert!(dir.path().join(MANIFEST_FILE).exists());
        // directory form of the path also loads
        assert_eq!(load_dataset(dir.path()).unwrap().sections.len(), 3);
    }

    #[test]
    fn missing_labels_file() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new("m", vec![section(0, 100, 100)]).unwrap();
        let manifest = save_labels(&ds, dir.path()).unwrap();
        fs::remove_file(dir.path().join("section_0000_labels.u32")).unwrap();
        assert!(matches!(
            load_dataset(&manifest),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn short_labels_file() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new("m", vec![section(0, 100, 100)]).unwrap();
        let manifest = save_labels(&ds, dir.path()).unwrap();
        fs::write(
            dir.path().join("section_0000_labels.u32"),
            vec![0u8; 4 * 100 * 99],
        )
        .unwrap();
        match load_dataset(&manifest) {
            Err(Error::SizeMismatch {
                expected, found, ..
            }) => {
                assert_eq!(expected, 40_000);
                assert_eq!(found, 39_600);
            }
            other => panic!("expected SizeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_section_shapes() {
        let a = section(0, 80, 80);
        let b = section(1, 90, 80);
        assert!(matches!(
            Dataset::new("x", vec![a, b]),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn image_size_disagreeing_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new("m", vec![section(0, 100, 100)]).unwrap();
        let manifest = save_labels(&ds, dir.path()).unwrap();
        write_png_unit(
            &dir.path().join("section_0000_gray.png"),
            &FloatMap::filled(100, 90, 0.0),
        )
        .unwrap();
        assert!(matches!(
            load_dataset(&manifest),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn unwritable_target_is_io_failure() {
        let dir = tempfile::tempdir().unwrap();
        // a regular file where the output directory should go
        let blocker = dir.path().join("blocked");
        fs::write(&blocker, b"x").unwrap();
        let ds = Dataset::new("m", vec![section(0, 80, 80)]).unwrap();
        assert!(matches!(
            save_labels(&ds, &blocker),
            Err(Error::IoFailure { .. })
        ));
    }

    #[test]
    fn sixteen_bit_png_decodes_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let raw: Vec<u16> = vec![0, 65535, 32768, 1];
        ImageBuffer::<Luma<u16>, _>::from_raw(2, 2, raw)
            .unwrap()
            .save(&path)
            .unwrap();
        let map = read_png_unit(&path).unwrap();
        assert_eq!(map.as_slice()[0], 0.0);
        assert_eq!(map.as_slice()[1], 1.0);
        assert_eq!(map.as_slice()[2], 32768.0 / 65535.0);
        // off-grid values survive a write/read cycle through the 16-bit path
        write_png_unit(&path, &map).unwrap();
        assert_eq!(read_png_unit(&path).unwrap(), map);
    }
}
