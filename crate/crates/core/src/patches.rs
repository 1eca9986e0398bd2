//! Four-channel classifier inputs cut around a boundary.
//!
//! Channels, in order: grayscale, membrane probability, the merged mask of
//! the two segments, and the boundary between them dilated by
//! `border_dilation`. Windows are shifted to stay inside the image rather
//! than padded.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::dataset::{Dataset, Section};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, LabelId, Pixel};
use crate::imageops::{adjacency_pairs, boundary_between, dilate};
use crate::metrics::max_overlap_map;

pub const CHANNELS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch4 {
    pub size: usize,
    /// Channel-major `CHANNELS x size x size` values in `[0, 1]`.
    pub data: Vec<f32>,
    /// 0 = correct boundary, 1 = split error.
    pub label: Option<u8>,
}

impl Patch4 {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; CHANNELS * size * size],
            label: None,
        }
    }

    pub fn channel(&self, ch: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[ch * n..(ch + 1) * n]
    }

    #[inline]
    pub fn at(&self, ch: usize, r: usize, c: usize) -> f32 {
        self.data[(ch * self.size + r) * self.size + c]
    }
}

/// Top-left corner of the `size`-wide window centered at `center`, shifted to
/// lie inside a `width x height` image.
pub fn window_origin(center: Pixel, size: usize, width: usize, height: usize) -> Pixel {
    let half = size / 2;
    let r0 = center.0.saturating_sub(half).min(height - size);
    let c0 = center.1.saturating_sub(half).min(width - size);
    (r0, c0)
}

fn windows_overlap(a: Pixel, b: Pixel, size: usize) -> bool {
    a.0 < b.0 + size && b.0 < a.0 + size && a.1 < b.1 + size && b.1 < a.1 + size
}

fn in_window(p: Pixel, origin: Pixel, size: usize) -> bool {
    p.0 >= origin.0 && p.0 < origin.0 + size && p.1 >= origin.1 && p.1 < origin.1 + size
}

fn check_fits(section: &Section, size: usize) -> Result<()> {
    if section.width() < size || section.height() < size {
        return Err(Error::ShapeMismatch(format!(
            "section {} is {}x{}, smaller than a {size}x{size} patch",
            section.index(),
            section.width(),
            section.height()
        )));
    }
    Ok(())
}

/// Cuts one patch with its top-left corner at `origin` from precomputed
/// full-image masks.
pub fn cut_patch(
    section: &Section,
    merged: &BinaryMask,
    border: &BinaryMask,
    origin: Pixel,
    size: usize,
) -> Patch4 {
    let mut patch = Patch4::zeros(size);
    let plane = size * size;
    for r in 0..size {
        for c in 0..size {
            let p = (origin.0 + r, origin.1 + c);
            let i = r * size + c;
            patch.data[i] = *section.gray.get(p);
            patch.data[plane + i] = *section.membrane.get(p);
            patch.data[2 * plane + i] = f32::from(u8::from(*merged.get(p)));
            patch.data[3 * plane + i] = f32::from(u8::from(*border.get(p)));
        }
    }
    patch
}

/// Full-image masks a boundary's patches are cut from.
#[derive(Clone, Debug)]
pub struct BoundaryContext {
    pub merged: BinaryMask,
    pub boundary: BinaryMask,
    pub border: BinaryMask,
}

impl BoundaryContext {
    pub fn new(merged: BinaryMask, boundary: BinaryMask, border_dilation: usize) -> Self {
        let border = dilate(&boundary, border_dilation);
        Self {
            merged,
            boundary,
            border,
        }
    }

    /// Context for the boundary between two labeled segments.
    pub fn for_pair(section: &Section, a: LabelId, b: LabelId, cfg: &EngineConfig) -> Result<Self> {
        let labels = &section.labels;
        if a == b || a == 0 || b == 0 {
            return Err(Error::InvalidPair(a, b));
        }
        let boundary = boundary_between(labels, a, b);
        if !boundary.any() {
            return Err(Error::InvalidPair(a, b));
        }
        let merged = labels.mask_of_any(&[a, b]);
        Ok(Self::new(merged, boundary, cfg.border_dilation))
    }
}

pub fn render_patch(
    section: &Section,
    a: LabelId,
    b: LabelId,
    center: Pixel,
    cfg: &EngineConfig,
) -> Result<Patch4> {
    check_fits(section, cfg.patch_size)?;
    let ctx = BoundaryContext::for_pair(section, a, b, cfg)?;
    let origin = window_origin(center, cfg.patch_size, section.width(), section.height());
    Ok(cut_patch(
        section,
        &ctx.merged,
        &ctx.border,
        origin,
        cfg.patch_size,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPatchSet {
    pub patches: Vec<Patch4>,
    /// Share of the covered boundary falling in each window; sums to 1.
    pub weights: Vec<f64>,
    pub centers: Vec<Pixel>,
    pub origins: Vec<Pixel>,
}

/// Greedy cover of a boundary by non-overlapping windows, centroid outward.
///
/// Repeatedly takes the uncovered boundary pixel nearest the boundary
/// centroid whose window would not overlap an emitted one, emits that window
/// and marks the boundary pixels inside it covered. Returns `(center, origin,
/// covered pixel count)` per window.
pub fn cover_boundary(
    boundary: &BinaryMask,
    size: usize,
    max_windows: usize,
) -> Vec<(Pixel, Pixel, usize)> {
    let (width, height) = boundary.dims();
    let mut pixels: Vec<Pixel> = boundary.pixels().collect();
    let Some((cr, cc)) = boundary.centroid() else {
        return Vec::new();
    };
    let dist = |p: &Pixel| (p.0 as f64 - cr).powi(2) + (p.1 as f64 - cc).powi(2);
    pixels.sort_by(|p, q| dist(p).total_cmp(&dist(q)).then(p.cmp(q)));

    let mut covered = vec![false; pixels.len()];
    let mut n_covered = 0;
    let mut out: Vec<(Pixel, Pixel, usize)> = Vec::new();
    for i in 0..pixels.len() {
        if out.len() == max_windows || n_covered == pixels.len() {
            break;
        }
        if covered[i] {
            continue;
        }
        let origin = window_origin(pixels[i], size, width, height);
        if out
            .iter()
            .any(|&(_, o, _)| windows_overlap(o, origin, size))
        {
            continue;
        }
        let mut count = 0;
        for (j, &p) in pixels.iter().enumerate() {
            if !covered[j] && in_window(p, origin, size) {
                covered[j] = true;
                count += 1;
            }
        }
        n_covered += count;
        out.push((pixels[i], origin, count));
    }
    out
}

/// Patches along an arbitrary boundary with coverage weights.
pub fn sample_patches(
    section: &Section,
    ctx: &BoundaryContext,
    cfg: &EngineConfig,
) -> Result<WeightedPatchSet> {
    check_fits(section, cfg.patch_size)?;
    let windows = cover_boundary(&ctx.boundary, cfg.patch_size, cfg.max_patches_per_boundary);
    if windows.is_empty() {
        return Err(Error::EmptySet);
    }
    let total: usize = windows.iter().map(|w| w.2).sum();
    let mut set = WeightedPatchSet {
        patches: Vec::with_capacity(windows.len()),
        weights: Vec::with_capacity(windows.len()),
        centers: Vec::with_capacity(windows.len()),
        origins: Vec::with_capacity(windows.len()),
    };
    for (center, origin, count) in windows {
        set.patches.push(cut_patch(
            section,
            &ctx.merged,
            &ctx.border,
            origin,
            cfg.patch_size,
        ));
        set.weights.push(count as f64 / total as f64);
        set.centers.push(center);
        set.origins.push(origin);
    }
    Ok(set)
}

pub fn sample_boundary_patches(
    section: &Section,
    a: LabelId,
    b: LabelId,
    cfg: &EngineConfig,
) -> Result<WeightedPatchSet> {
    let ctx = BoundaryContext::for_pair(section, a, b, cfg)?;
    sample_patches(section, &ctx, cfg)
}

/// Rotates every channel by `k * 90` degrees counter-clockwise.
pub fn augment_rotate(patch: &Patch4, k: i32) -> Patch4 {
    let k = k.rem_euclid(4);
    if k == 0 {
        return patch.clone();
    }
    let n = patch.size;
    let mut out = Patch4 {
        size: n,
        data: vec![0.0; patch.data.len()],
        label: patch.label,
    };
    for ch in 0..CHANNELS {
        let base = ch * n * n;
        for r in 0..n {
            for c in 0..n {
                let (sr, sc) = match k {
                    1 => (c, n - 1 - r),
                    2 => (n - 1 - r, n - 1 - c),
                    _ => (n - 1 - c, r),
                };
                out.data[base + r * n + c] = patch.data[base + sr * n + sc];
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub section: usize,
    pub pair: (LabelId, LabelId),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub correct: Vec<Patch4>,
    pub errors: Vec<Patch4>,
    pub correct_provenance: Vec<Provenance>,
    pub error_provenance: Vec<Provenance>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.correct.len() + self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All patches with their class labels, correct ones first.
    pub fn labeled(&self) -> Vec<(&Patch4, u8)> {
        self.correct
            .iter()
            .map(|p| (p, 0))
            .chain(self.errors.iter().map(|p| (p, 1)))
            .collect()
    }
}

/// Pairs whose dominant ground-truth overlap is below this are skipped.
pub const AMBIGUITY_FLOOR: f64 = 0.5;

/// Labels every adjacent segment pair against ground truth and keeps one
/// centered patch per pair; the larger class is subsampled to balance.
///
/// A pair is a split error when both segments map to the same ground-truth
/// cell by maximum overlap, and correct when they map to different cells.
pub fn build_training_set(
    dataset: &Dataset,
    cfg: &EngineConfig,
    rng_seed: u64,
) -> Result<TrainingSet> {
    let mut correct = Vec::new();
    let mut errors = Vec::new();
    for section in &dataset.sections {
        let gt = section
            .gt_labels
            .as_ref()
            .ok_or(Error::MissingGroundTruth(section.index()))?;
        check_fits(section, cfg.patch_size)?;
        let overlap = max_overlap_map(&section.labels, gt)?;
        for (a, b) in adjacency_pairs(&section.labels) {
            let (Some(&(ga, fa)), Some(&(gb, fb))) = (overlap.get(&a), overlap.get(&b)) else {
                continue;
            };
            if fa < AMBIGUITY_FLOOR || fb < AMBIGUITY_FLOOR {
                continue;
            }
            let ctx = BoundaryContext::for_pair(section, a, b, cfg)?;
            let Some(&(_, origin, _)) = cover_boundary(&ctx.boundary, cfg.patch_size, 1).first()
            else {
                continue;
            };
            let mut patch = cut_patch(section, &ctx.merged, &ctx.border, origin, cfg.patch_size);
            let prov = Provenance {
                section: section.index(),
                pair: (a, b),
            };
            if ga == gb {
                patch.label = Some(1);
                errors.push((patch, prov));
            } else {
                patch.label = Some(0);
                correct.push((patch, prov));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = correct.len().min(errors.len());
    let balance = |items: Vec<(Patch4, Provenance)>, rng: &mut ChaCha8Rng| {
        if items.len() == n {
            return items;
        }
        let mut idx: Vec<usize> = (0..items.len()).collect();
        idx.shuffle(rng);
        let mut keep = idx[..n].to_vec();
        keep.sort_unstable();
        let mut slots: Vec<Option<(Patch4, Provenance)>> = items.into_iter().map(Some).collect();
        keep.into_iter().map(|i| slots[i].take().unwrap()).collect()
    };
    let correct = balance(correct, &mut rng);
    let errors = balance(errors, &mut rng);
    let (correct, correct_provenance) = correct.into_iter().unzip();
    let (errors, error_provenance) = errors.into_iter().unzip();
    Ok(TrainingSet {
        correct,
        errors,
        correct_provenance,
        error_provenance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrainingSidecar {
    n: usize,
    patch_size: usize,
    channels: usize,
    /// One entry per patch in file order, `None` when unknown.
    provenance: Vec<Option<Provenance>>,
}

/// Writes `patches.bin` (f32-LE, N x 4 x S x S), `labels.bin` (u8, N) and
/// `training_set.json` into `dir`.
pub fn export_training_set(set: &TrainingSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let items = set.labeled();
    let size = items.first().map_or(0, |(p, _)| p.size);
    let mut patches = Vec::with_capacity(items.len() * CHANNELS * size * size * 4);
    let mut labels = Vec::with_capacity(items.len());
    for (p, l) in &items {
        patches.extend(p.data.iter().flat_map(|v| v.to_le_bytes()));
        labels.push(*l);
    }
    let provenance = set
        .correct_provenance
        .iter()
        .chain(&set.error_provenance)
        .map(|p| Some(*p))
        .collect();
    let sidecar = TrainingSidecar {
        n: items.len(),
        patch_size: size,
        channels: CHANNELS,
        provenance,
    };
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write("patches.bin", &patches)?;
    write("labels.bin", &labels)?;
    write(
        "training_set.json",
        serde_json::to_string_pretty(&sidecar)
            .expect("sidecar serializes")
            .as_bytes(),
    )
}

pub fn import_training_set(dir: &Path) -> Result<TrainingSet> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read(&path).map_err(|e| Error::io(path, e))
    };
    let sidecar: TrainingSidecar = serde_json::from_slice(&read("training_set.json")?)
        .map_err(|e| Error::InvalidManifest(format!("training_set.json: {e}")))?;
    let patches = read("patches.bin")?;
    let labels = read("labels.bin")?;
    let per = CHANNELS * sidecar.patch_size * sidecar.patch_size;
    if labels.len() != sidecar.n || patches.len() != sidecar.n * per * 4 {
        return Err(Error::SizeMismatch {
            path: dir.join("patches.bin"),
            expected: sidecar.n * per * 4,
            found: patches.len(),
        });
    }
    let mut set = TrainingSet::default();
    for (i, chunk) in patches.chunks_exact(per * 4).enumerate() {
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let patch = Patch4 {
            size: sidecar.patch_size,
            data,
            label: Some(labels[i]),
        };
        let prov = sidecar
            .provenance
            .get(i)
            .copied()
            .flatten()
            .unwrap_or(Provenance {
                section: usize::MAX,
                pair: (0, 0),
            });
        match labels[i] {
            0 => {
                set.correct.push(patch);
                set.correct_provenance.push(prov);
            }
            _ => {
                set.errors.push(patch);
                set.error_provenance.push(prov);
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FloatMap, Grid, LabelMap};
    use crate::synth::{corrupt, generate_section, SynthSpec};
    use proptest::prelude::*;

    fn section_from(labels: LabelMap) -> Section {
        let (w, h) = labels.dims();
        let gray = FloatMap::from_fn(w, h, |r, c| ((r * 31 + c * 17) % 97) as f32 / 96.0);
        let membrane = FloatMap::from_fn(w, h, |r, c| ((r + c) % 11) as f32 / 10.0);
        Section::new(0, gray, membrane, labels, None).unwrap()
    }

    fn halves(w: usize, h: usize) -> Section {
        section_from(Grid::from_fn(w, h, |_, c| if c < w / 2 { 1 } else { 2 }))
    }

    #[test]
    fn interior_window_is_centered() {
        let s = halves(200, 200);
        let cfg = EngineConfig::default();
        let center = (100, 99);
        let patch = render_patch(&s, 1, 2, center, &cfg).unwrap();
        assert_eq!(window_origin(center, 75, 200, 200), (63, 62));
        assert_eq!(patch.at(0, 0, 0), *s.gray.get((63, 62)));
        // every undilated boundary pixel in the window is in channel 4
        let boundary = boundary_between(&s.labels, 1, 2);
        for r in 0..75 {
            for c in 0..75 {
                if *boundary.get((63 + r, 62 + c)) {
                    assert_eq!(patch.at(3, r, c), 1.0);
                }
            }
        }
        // border channel extends 5 px beyond the 2-px boundary on each side
        assert_eq!(patch.at(3, 10, 99 - 62 - 5), 1.0);
        assert_eq!(patch.at(3, 10, 99 - 62 - 6), 0.0);
        assert!(patch.channel(2).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn window_near_left_edge_is_shifted() {
        let s = halves(200, 200);
        let cfg = EngineConfig::default();
        let patch = render_patch(&s, 1, 2, (100, 10), &cfg);
        // (100, 10) is not on the boundary but rendering only needs a valid pair
        let patch = patch.unwrap();
        assert_eq!(window_origin((100, 10), 75, 200, 200), (63, 0));
        assert_eq!(patch.at(1, 0, 0), *s.membrane.get((63, 0)));
    }

    #[test]
    fn constant_gray_channel() {
        let mut s = halves(100, 100);
        s.gray = FloatMap::filled(100, 100, 0.5);
        let patch = render_patch(&s, 1, 2, (50, 50), &EngineConfig::default()).unwrap();
        assert!(patch.channel(0).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn render_rejects_bad_pairs() {
        let s = halves(100, 100);
        let cfg = EngineConfig::default();
        assert!(matches!(
            render_patch(&s, 1, 1, (50, 50), &cfg),
            Err(Error::InvalidPair(1, 1))
        ));
        assert!(matches!(
            render_patch(&s, 1, 9, (50, 50), &cfg),
            Err(Error::InvalidPair(1, 9))
        ));
    }

    #[test]
    fn short_boundary_gives_one_window() {
        // 30-row strip: a 2 x 30 = 60 pixel boundary
        let labels = Grid::from_fn(120, 100, |r, c| {
            if (35..65).contains(&r) && c >= 60 {
                2
            } else {
                1
            }
        });
        let s = section_from(labels);
        let b = boundary_between(&s.labels, 1, 2);
        let set = sample_boundary_patches(&s, 1, 2, &EngineConfig::default()).unwrap();
        assert!(b.count() >= 60);
        assert_eq!(set.patches.len(), 1);
        assert_eq!(set.weights, vec![1.0]);
    }

    #[test]
    fn long_straight_boundary_needs_several_windows() {
        // vertical boundary, 2 px wide and 300 px tall = 600 boundary pixels
        let s = halves(100, 300);
        let boundary = boundary_between(&s.labels, 1, 2);
        assert_eq!(boundary.count(), 600);
        let cfg = EngineConfig::default();
        let set = sample_boundary_patches(&s, 1, 2, &cfg).unwrap();
        // centroid row 149.5 ties to row 149, window rows 112..187; the next
        // windows abut it, starting at the first row whose window fits
        assert_eq!(set.origins, vec![(112, 12), (187, 12), (37, 12)]);
        let sum: f64 = set.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        // coverage arithmetic: each weight is the window's share of covered pixels
        let counts: Vec<usize> = set
            .origins
            .iter()
            .map(|&o| boundary.pixels().filter(|&p| in_window(p, o, 75)).count())
            .collect();
        let total: usize = counts.iter().sum();
        for (w, c) in set.weights.iter().zip(&counts) {
            assert!((w - *c as f64 / total as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn snake_boundary_is_capped_at_ten_windows() {
        // horizontal bands 80 px apart; the boundaries are joined so segment 2
        // is one serpentine region
        let labels = Grid::from_fn(560, 460, |r, c| {
            let band = r / 80;
            let in_band = r % 80 >= 40;
            let connector = (band % 2 == 0 && c >= 540) || (band % 2 == 1 && c < 20);
            if in_band || connector {
                2
            } else {
                1
            }
        });
        let s = section_from(labels);
        let boundary = boundary_between(&s.labels, 1, 2);
        let uncapped = cover_boundary(&boundary, 75, usize::MAX);
        assert!(uncapped.len() >= 14, "{} windows", uncapped.len());
        let set = sample_boundary_patches(&s, 1, 2, &EngineConfig::default()).unwrap();
        assert_eq!(set.patches.len(), 10);
    }

    #[test]
    fn rotation_group_properties() {
        let s = halves(80, 80);
        let p = render_patch(&s, 1, 2, (40, 40), &EngineConfig::default()).unwrap();
        assert_eq!(augment_rotate(&p, 0), p);
        assert_eq!(augment_rotate(&p, 4), p);
        let mut q = p.clone();
        for _ in 0..4 {
            q = augment_rotate(&q, 1);
        }
        assert_eq!(q, p);
        assert_eq!(augment_rotate(&p, -1), augment_rotate(&p, 3));
    }

    proptest! {
        #[test]
        fn rotation_matches_index_remap(k in 0i32..4, vals in proptest::collection::vec(0f32..1.0, 4 * 5 * 5)) {
            let p = Patch4 { size: 5, data: vals, label: Some(1) };
            let out = augment_rotate(&p, k);
            // rotate coordinates counter-clockwise k times: (r, c) -> (n-1-c, r)
            for ch in 0..4 {
                for r in 0..5 {
                    for c in 0..5 {
                        let (mut rr, mut cc) = (r, c);
                        for _ in 0..k {
                            (rr, cc) = (4 - cc, rr);
                        }
                        prop_assert_eq!(out.at(ch, rr, cc), p.at(ch, r, c));
                    }
                }
            }
            prop_assert_eq!(out.label, Some(1));
        }

        #[test]
        fn sampled_patches_are_valid(seed in 0u64..40) {
            let spec = SynthSpec { width: 160, height: 160, n_cells: 6, seed, ..Default::default() };
            let s = generate_section(&spec, 0).unwrap();
            let cfg = EngineConfig { patch_size: 41, ..Default::default() };
            for (a, b) in adjacency_pairs(&s.labels) {
                let set = sample_boundary_patches(&s, a, b, &cfg).unwrap();
                prop_assert!(set.patches.len() <= cfg.max_patches_per_boundary);
                prop_assert!((set.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for (i, &o) in set.origins.iter().enumerate() {
                    for &o2 in &set.origins[i + 1..] {
                        prop_assert!(!windows_overlap(o, o2, cfg.patch_size));
                    }
                }
                for p in &set.patches {
                    prop_assert!(p.data.iter().all(|v| (0.0..=1.0).contains(v)));
                    for ch in [2, 3] {
                        prop_assert!(p.channel(ch).iter().all(|&v| v == 0.0 || v == 1.0));
                    }
                }
            }
        }
    }

    fn synth_dataset_with(splits: usize, seed: u64) -> Dataset {
        let spec = SynthSpec {
            width: 256,
            height: 256,
            n_cells: 16,
            seed,
            ..Default::default()
        };
        let mut s = generate_section(&spec, 0).unwrap();
        let (auto, _) = corrupt(&s, splits, 0, seed).unwrap();
        s.labels = auto;
        Dataset::new("t", vec![s]).unwrap()
    }

    #[test]
    fn perfect_segmentation_has_no_errors() {
        let ds = synth_dataset_with(0, 4);
        let set = build_training_set(&ds, &EngineConfig::default(), 1).unwrap();
        assert!(set.errors.is_empty());
        assert!(set.correct.is_empty());
    }

    #[test]
    fn planted_splits_become_error_patches() {
        let ds = synth_dataset_with(3, 5);
        let n_pairs = adjacency_pairs(&ds.sections[0].labels).len();
        assert!(n_pairs > 6);
        let set = build_training_set(&ds, &EngineConfig::default(), 1).unwrap();
        assert_eq!(set.errors.len(), 3);
        assert_eq!(set.correct.len(), 3);
        assert!(set.errors.iter().all(|p| p.label == Some(1)));
        assert!(set.correct.iter().all(|p| p.label == Some(0)));
        // provenance classes are disjoint
        for p in &set.error_provenance {
            assert!(!set.correct_provenance.contains(p));
        }
        // same seed, same selection
        assert_eq!(
            build_training_set(&ds, &EngineConfig::default(), 1).unwrap(),
            set
        );
    }

    #[test]
    fn split_of_one_cell_is_labeled_error() {
        let gt = Grid::from_fn(100, 100, |_, c| if c < 50 { 1 } else { 2 });
        let auto = Grid::from_fn(100, 100, |r, c| match (c < 50, r < 50) {
            (true, true) => 1,
            (true, false) => 3,
            _ => 2,
        });
        let mut s = section_from(auto);
        s.gt_labels = Some(gt);
        let ds = Dataset::new("t", vec![s]).unwrap();
        let set = build_training_set(&ds, &EngineConfig::default(), 0).unwrap();
        assert_eq!(set.error_provenance[0].pair, (1, 3));
        assert_eq!(set.errors.len(), 1);
    }

    #[test]
    fn missing_ground_truth() {
        let ds = Dataset::new("t", vec![halves(100, 100)]).unwrap();
        assert!(matches!(
            build_training_set(&ds, &EngineConfig::default(), 0),
            Err(Error::MissingGroundTruth(0))
        ));
    }

    #[test]
    fn export_import_roundtrip() {
        let ds = synth_dataset_with(2, 6);
        let set = build_training_set(&ds, &EngineConfig::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_training_set(&set, dir.path()).unwrap();
        let bytes = fs::metadata(dir.path().join("patches.bin")).unwrap().len();
        assert_eq!(bytes as usize, set.len() * 4 * 75 * 75 * 4);
        assert_eq!(import_training_set(dir.path()).unwrap(), set);
    }
}
