//! Synthetic EM-like sections with exact ground truth, and a corruptor that
//! plants known split and merge errors.
//!
//! Cells come from a seeded multi-source flood (each cell grows from one
//! site, so every cell is 4-connected). Membranes are a dark band along cell
//! borders; the membrane-probability map is a blurred, noisy copy of that band.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Section};
use crate::error::{Error, Result};
use crate::grid::{FloatMap, Grid, LabelId, LabelMap, Pixel};
use crate::imageops::{adjacency_pairs, boundary_between, count_components, dilate};
use crate::patches::{Patch4, TrainingSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub n_cells: usize,
    pub membrane_width: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            n_cells: 12,
            membrane_width: 3,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

const INTERIOR_GRAY: f64 = 0.75;
const MEMBRANE_GRAY: f64 = 0.2;

fn quantize(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with extra words into an independent stream seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |x, &p| splitmix64(x ^ splitmix64(p)))
}

fn grow_cells(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> LabelMap {
    let (w, h) = (spec.width, spec.height);
    let spacing = 0.6 * ((w * h) as f64 / spec.n_cells as f64).sqrt();
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(spec.n_cells);
    let mut min_dist = spacing;
    while sites.len() < spec.n_cells {
        let mut placed = false;
        for _ in 0..200 {
            let p = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
            if sites
                .iter()
                .all(|s| (s.0 - p.0).hypot(s.1 - p.1) >= min_dist)
            {
                sites.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            min_dist *= 0.8;
        }
    }
    let weights: Vec<f64> = (0..spec.n_cells)
        .map(|_| rng.gen_range(0.85..1.15))
        .collect();

    let mut labels = LabelMap::new(w, h);
    let mut heap = BinaryHeap::new();
    let key = |cell: usize, (r, c): Pixel| {
        let (sr, sc) = sites[cell];
        let d = (r as f64 - sr).hypot(c as f64 - sc) * weights[cell];
        (d * 1024.0) as u64
    };
    for (cell, &(sr, sc)) in sites.iter().enumerate() {
        let p = ((sr as usize).min(h - 1), (sc as usize).min(w - 1));
        heap.push(Reverse((key(cell, p), p, cell)));
    }
    while let Some(Reverse((_, p, cell))) = heap.pop() {
        if *labels.get(p) != 0 {
            continue;
        }
        labels.set(p, cell as LabelId + 1);
        for q in labels.neighbors4(p) {
            if *labels.get(q) == 0 {
                heap.push(Reverse((key(cell, q), q, cell)));
            }
        }
    }
    labels
}

/// Pixels within the membrane band along every cell border.
pub fn membrane_band(labels: &LabelMap, membrane_width: usize) -> crate::grid::BinaryMask {
    let edges = Grid::from_fn(labels.width(), labels.height(), |r, c| {
        let l = *labels.get((r, c));
        labels.neighbors4((r, c)).any(|q| *labels.get(q) != l)
    });
    dilate(&edges, membrane_width.saturating_sub(1) / 2)
}

fn box_blur(map: &Grid<f64>, radius: usize) -> Grid<f64> {
    let (w, h) = map.dims();
    let r = radius as isize;
    Grid::from_fn(w, h, |row, col| {
        let (mut s, mut n) = (0.0, 0.0);
        for dr in -r..=r {
            for dc in -r..=r {
                let (rr, cc) = (row as isize + dr, col as isize + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    s += *map.get((rr as usize, cc as usize));
                    n += 1.0;
                }
            }
        }
        s / n
    })
}

/// Generates one section; `labels` and `gt_labels` are both the true cells.
pub fn generate_section(spec: &SynthSpec, index: usize) -> Result<Section> {
    if spec.n_cells < 2 || spec.membrane_width < 1 {
        return Err(Error::InvalidConfig(
            "synthetic sections need n_cells >= 2 and membrane_width >= 1".into(),
        ));
    }
    if spec.n_cells > spec.width * spec.height / 16 {
        return Err(Error::InvalidConfig(
            "too many cells for the image size".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[index as u64]));
    let labels = grow_cells(spec, &mut rng);
    let band = membrane_band(&labels, spec.membrane_width);

    let cell_offset: Vec<f64> = (0..=spec.n_cells)
        .map(|_| rng.gen_range(-0.05..0.05))
        .collect();
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.02..0.12),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");

    let (w, h) = (spec.width, spec.height);
    let mut gray = FloatMap::new(w, h);
    for r in 0..h {
        for c in 0..w {
            let p = (r, c);
            let base = if *band.get(p) {
                MEMBRANE_GRAY
            } else {
                let texture: f64 = waves
                    .iter()
                    .map(|&(f, a, ph)| {
                        0.03 * (f * (r as f64 * a.cos() + c as f64 * a.sin()) + ph).sin()
                    })
                    .sum();
                INTERIOR_GRAY + cell_offset[*labels.get(p) as usize] + texture
            };
            gray.set(p, quantize(base + noise.sample(&mut rng)));
        }
    }

    let indicator = band.map(|&b| if b { 1.0 } else { 0.0 });
    let blurred = box_blur(&box_blur(&indicator, 1), 1);
    let prob_noise = Normal::new(0.0, 0.05).expect("finite sigma");
    let membrane = blurred.map(|&v| quantize(v + prob_noise.sample(&mut rng)));

    Section::new(index, gray, membrane, labels.clone(), Some(labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedSplit {
    pub gt_id: LabelId,
    /// Endpoints of the cutting chord, clipped to the cell's bounding box, as `(row, col)`.
    pub chord: [(f64, f64); 2],
    /// The id kept by one side and the fresh id given to the other.
    pub child_ids: (LabelId, LabelId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedMerge {
    pub gt_ids: (LabelId, LabelId),
    pub erased_boundary: Vec<Pixel>,
    pub auto_id: LabelId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorManifest {
    pub section: usize,
    pub splits: Vec<PlantedSplit>,
    pub merges: Vec<PlantedMerge>,
}

/// Cells smaller than this are never cut by a planted split.
const MIN_SPLIT_AREA: usize = 400;
const MIN_SPLIT_SIDE: f64 = 0.25;
/// Planted merges join cells whose sizes differ by at most this factor so
/// each keeps a substantial share of the merged segment.
const MAX_MERGE_RATIO: f64 = 3.0;
const MIN_MERGE_BOUNDARY: usize = 16;

/// Plants `n_merges` merges (erasing the border between two adjacent true
/// cells) and `n_splits` splits (cutting a true cell with a chord through its
/// centroid) into a copy of the section's ground truth.
pub fn corrupt(
    section: &Section,
    n_splits: usize,
    n_merges: usize,
    seed: u64,
) -> Result<(LabelMap, ErrorManifest)> {
    let gt = section
        .gt_labels
        .as_ref()
        .ok_or(Error::MissingGroundTruth(section.index()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[section.index() as u64, 0xC0]));
    let mut auto = gt.clone();
    let mut manifest = ErrorManifest {
        section: section.index(),
        ..Default::default()
    };
    let mut used: BTreeSet<LabelId> = BTreeSet::new();
    let area = |id: LabelId| gt.area_of(id);

    let mut pairs: Vec<(LabelId, LabelId)> = adjacency_pairs(gt).into_iter().collect();
    pairs.shuffle(&mut rng);
    for (a, b) in pairs {
        if manifest.merges.len() == n_merges {
            break;
        }
        if used.contains(&a) || used.contains(&b) {
            continue;
        }
        let (sa, sb) = (area(a) as f64, area(b) as f64);
        if sa.max(sb) / sa.min(sb) > MAX_MERGE_RATIO {
            continue;
        }
        let erased: Vec<Pixel> = boundary_between(gt, a, b).pixels().collect();
        if erased.len() < MIN_MERGE_BOUNDARY {
            continue;
        }
        for v in auto.as_mut_slice() {
            if *v == b {
                *v = a;
            }
        }
        used.extend([a, b]);
        manifest.merges.push(PlantedMerge {
            gt_ids: (a, b),
            erased_boundary: erased,
            auto_id: a,
        });
    }
    if manifest.merges.len() < n_merges {
        return Err(Error::InfeasibleCorruption {
            requested: n_merges,
            available: manifest.merges.len(),
        });
    }

    let mut cells: Vec<LabelId> = gt
        .label_ids()
        .into_iter()
        .filter(|id| !used.contains(id) && area(*id) >= MIN_SPLIT_AREA)
        .collect();
    cells.shuffle(&mut rng);
    let mut next_id = gt.max_label() + 1;
    for cell in cells {
        if manifest.splits.len() == n_splits {
            break;
        }
        let mask = gt.mask_of(cell);
        let (cr, cc) = mask.centroid().expect("cell is nonempty");
        let total = mask.count();
        for _attempt in 0..20 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (nr, nc) = (theta.cos(), theta.sin());
            let side = Grid::from_fn(mask.width(), mask.height(), |r, c| {
                *mask.get((r, c)) && (r as f64 - cr) * nr + (c as f64 - cc) * nc > 0.0
            });
            let rest = mask.difference(&side);
            let n_side = side.count();
            let balanced = n_side as f64 >= MIN_SPLIT_SIDE * total as f64
                && (total - n_side) as f64 >= MIN_SPLIT_SIDE * total as f64;
            if !balanced || count_components(&side) != 1 || count_components(&rest) != 1 {
                continue;
            }
            for p in side.pixels() {
                auto.set(p, next_id);
            }
            // chord direction is perpendicular to the side normal
            let (r0, c0, r1, c1) = mask.bounding_box().expect("nonempty");
            let extent = ((r1 - r0) as f64).hypot((c1 - c0) as f64);
            let (dr, dc) = (-nc, nr);
            manifest.splits.push(PlantedSplit {
                gt_id: cell,
                chord: [
                    (cr - dr * extent / 2.0, cc - dc * extent / 2.0),
                    (cr + dr * extent / 2.0, cc + dc * extent / 2.0),
                ],
                child_ids: (cell, next_id),
            });
            used.insert(cell);
            next_id += 1;
            break;
        }
    }
    if manifest.splits.len() < n_splits {
        return Err(Error::InfeasibleCorruption {
            requested: n_splits,
            available: manifest.splits.len(),
        });
    }
    Ok((auto, manifest))
}

/// Spreads `total` items over `n` slots round-robin: the first `total % n`
/// slots get one extra.
pub fn round_robin(total: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| total / n + usize::from(i < total % n))
        .collect()
}

/// A multi-section dataset whose `labels` carry planted errors.
pub fn synth_dataset(
    name: &str,
    spec: &SynthSpec,
    n_sections: usize,
    n_splits: usize,
    n_merges: usize,
) -> Result<(Dataset, Vec<ErrorManifest>)> {
    let splits = round_robin(n_splits, n_sections.max(1));
    let merges = round_robin(n_merges, n_sections.max(1));
    let mut sections = Vec::with_capacity(n_sections);
    let mut manifests = Vec::with_capacity(n_sections);
    for i in 0..n_sections {
        let mut section = generate_section(spec, i)?;
        let (auto, manifest) = corrupt(&section, splits[i], merges[i], spec.seed)?;
        section.labels = auto;
        sections.push(section);
        manifests.push(manifest);
    }
    Ok((Dataset::new(name, sections)?, manifests))
}

/// Balanced toy classifier set: `n` patches of side `size` whose border
/// channel marks a straight band. Correct boundaries (label 0) draw that band
/// dark in gray and high in membrane probability; split errors (label 1)
/// leave it as bright interior.
pub fn planted_border_patches(n: usize, size: usize, seed: u64) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let mut set = TrainingSet::default();
    for i in 0..n {
        let label = (i % 2) as u8;
        let vertical = rng.gen_bool(0.5);
        let at = rng.gen_range(size / 4..size - size / 4);
        let mut patch = Patch4::zeros(size);
        let plane = size * size;
        for r in 0..size {
            for c in 0..size {
                let d = if vertical {
                    c.abs_diff(at)
                } else {
                    r.abs_diff(at)
                };
                let on_band = d <= 1;
                let j = r * size + c;
                let dark = on_band && label == 0;
                let gray = if dark { MEMBRANE_GRAY } else { INTERIOR_GRAY };
                patch.data[j] = quantize(gray + noise.sample(&mut rng));
                patch.data[plane + j] =
                    quantize(if dark { 0.9 } else { 0.1 } + noise.sample(&mut rng));
                patch.data[2 * plane + j] = 1.0;
                patch.data[3 * plane + j] = f32::from(u8::from(d <= 3));
            }
        }
        patch.label = Some(label);
        if label == 0 {
            set.correct.push(patch);
        } else {
            set.errors.push(patch);
        }
    }
    set
}
