//! Ranked split-error and merge-error candidates.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{score_boundary, CnnWeights};
use crate::config::EngineConfig;
use crate::dataset::Section;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, FloatMap, LabelId, Pixel};
use crate::imageops::{
    adjacency_pairs, dilate, largest_component, perimeter, watershed_two_seed, Bipartition,
};
use crate::patches::{sample_patches, BoundaryContext};
use crate::synth::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub section: usize,
    pub a: LabelId,
    pub b: LabelId,
    /// Probability that the boundary between `a` and `b` is a split error.
    pub p: f64,
    pub patch_centers: Vec<Pixel>,
    pub patch_weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeCandidate {
    pub section: usize,
    pub segment: LabelId,
    /// Best hypothesis, restricted to the segment's own pixels.
    pub bipartition: Bipartition,
    /// `1 - p` of the best hypothesis.
    pub score: f64,
    pub candidate_scores: Vec<f64>,
    pub seed: u64,
}

/// Orders splits by descending `p`, then section, then pair.
pub fn sort_splits(splits: &mut [SplitCandidate]) {
    splits.sort_by(|x, y| {
        y.p.total_cmp(&x.p)
            .then(x.section.cmp(&y.section))
            .then((x.a, x.b).cmp(&(y.a, y.b)))
    });
}

/// Orders merges by descending score, then section, then segment id.
pub fn sort_merges(merges: &mut [MergeCandidate]) {
    merges.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then(x.section.cmp(&y.section))
            .then(x.segment.cmp(&y.segment))
    });
}

pub fn score_pair(
    section: &Section,
    weights: &CnnWeights,
    a: LabelId,
    b: LabelId,
    cfg: &EngineConfig,
) -> Result<SplitCandidate> {
    let ctx = BoundaryContext::for_pair(section, a, b, cfg)?;
    let set = sample_patches(section, &ctx, cfg)?;
    let p = score_boundary(weights, &set)?;
    Ok(SplitCandidate {
        section: section.index(),
        a: a.min(b),
        b: a.max(b),
        p,
        patch_centers: set.centers,
        patch_weights: set.weights,
    })
}

pub fn rank_splits(
    section: &Section,
    weights: &CnnWeights,
    cfg: &EngineConfig,
) -> Result<Vec<SplitCandidate>> {
    let pairs: Vec<_> = adjacency_pairs(&section.labels).into_iter().collect();
    let mut out = pairs
        .par_iter()
        .map(|&(a, b)| score_pair(section, weights, a, b, cfg))
        .collect::<Result<Vec<_>>>()?;
    sort_splits(&mut out);
    Ok(out)
}

const SEED_RETRIES: usize = 16;

/// Draws `n` pairs of antipodal perimeter pixels of `mask`.
///
/// Each draw picks an angle uniformly; the first seed is the perimeter pixel
/// closest to the ray from the mask centroid at that angle (the outermost one
/// on ties) and the second is the same for the opposite ray. Angles are
/// measured counter-clockwise from east.
pub fn opposite_seed_pairs(
    mask: &BinaryMask,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<(Pixel, Pixel)>> {
    let (cr, cc) = mask.centroid().ok_or(Error::DegenerateSegment)?;
    let rim = perimeter(mask);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pair = None;
        for _ in 0..SEED_RETRIES {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let a = nearest_on_ray(&rim, (cr, cc), theta);
            let b = nearest_on_ray(&rim, (cr, cc), theta + std::f64::consts::PI);
            if let (Some(a), Some(b)) = (a, b) {
                if a != b {
                    pair = Some((a, b));
                    break;
                }
            }
        }
        out.push(pair.ok_or(Error::DegenerateSegment)?);
    }
    Ok(out)
}

fn nearest_on_ray(rim: &[Pixel], (cr, cc): (f64, f64), theta: f64) -> Option<Pixel> {
    let (dx, dy) = (theta.cos(), -theta.sin());
    rim.iter()
        .filter_map(|&p| {
            let (x, y) = (p.1 as f64 - cc, p.0 as f64 - cr);
            let along = x * dx + y * dy;
            (along > 0.0).then(|| ((x * dy - y * dx).abs(), along, p))
        })
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(b.1.total_cmp(&a.1))
                .then(a.2.cmp(&b.2))
        })
        .map(|(_, _, p)| p)
}

/// One unscored merge hypothesis for a segment.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeHypothesis {
    /// Watershed result clipped to the segment mask.
    pub bipartition: Bipartition,
    /// Watershed boundary over the whole dilated region.
    pub full_boundary: BinaryMask,
}

/// Seed for a segment's merge hypotheses in a given section.
pub fn merge_seed(base: u64, section: usize, segment: LabelId) -> u64 {
    derive_seed(base, &[section as u64, u64::from(segment)])
}

/// Watershed bipartitions of segment `s`, clipped to its mask and
/// deduplicated by boundary.
///
/// Each side keeps only its largest connected piece inside the segment;
/// stray pieces join the boundary. Hypotheses with a side smaller than
/// `min_side_fraction` of the segment are dropped. Returns an empty list for
/// segments below `min_segment_area` or too thin to seed.
pub fn merge_hypotheses(
    section: &Section,
    s: LabelId,
    cfg: &EngineConfig,
    rng_seed: u64,
) -> Result<Vec<MergeHypothesis>> {
    let mask = section.labels.mask_of(s);
    let area = mask.count();
    if area < cfg.min_segment_area {
        return Ok(Vec::new());
    }
    let region = dilate(&mask, cfg.merge_dilation);
    let height: FloatMap = section.gray.map(|v| 1.0 - v);
    let seeds = match opposite_seed_pairs(&region, cfg.n_merge_candidates, rng_seed) {
        Ok(s) => s,
        Err(Error::DegenerateSegment) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let min_side = (cfg.min_side_fraction * area as f64).ceil() as usize;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (a, b) in seeds {
        let full = watershed_two_seed(&height, &region, a, b)?;
        if !seen.insert(full.boundary.clone()) {
            continue;
        }
        let side_a = largest_component(&full.side_a.intersection(&mask));
        let side_b = largest_component(&full.side_b.intersection(&mask));
        if side_a.count() < min_side.max(1) || side_b.count() < min_side.max(1) {
            continue;
        }
        let boundary = mask.difference(&side_a).difference(&side_b);
        out.push(MergeHypothesis {
            bipartition: Bipartition {
                side_a,
                side_b,
                boundary,
                seed_a: a,
                seed_b: b,
            },
            full_boundary: full.boundary,
        });
    }
    Ok(out)
}

/// Split-classifier `p` of a hypothetical boundary: the dilated region
/// stands in for the merged labels and windows are placed along the part of
/// the boundary inside the segment.
pub fn score_hypothesis(
    section: &Section,
    weights: &CnnWeights,
    region: &BinaryMask,
    hyp: &MergeHypothesis,
    cfg: &EngineConfig,
) -> Result<f64> {
    let inside = hyp.bipartition.boundary.clone();
    let ctx = BoundaryContext {
        merged: region.clone(),
        border: dilate(&hyp.full_boundary, cfg.border_dilation),
        boundary: if inside.any() {
            inside
        } else {
            hyp.full_boundary.clone()
        },
    };
    let set = sample_patches(section, &ctx, cfg)?;
    score_boundary(weights, &set)
}

pub fn generate_merge_candidates(
    section: &Section,
    s: LabelId,
    weights: &CnnWeights,
    cfg: &EngineConfig,
    rng_seed: u64,
) -> Result<Option<MergeCandidate>> {
    let hyps = merge_hypotheses(section, s, cfg, rng_seed)?;
    if hyps.is_empty() {
        return Ok(None);
    }
    let region = dilate(&section.labels.mask_of(s), cfg.merge_dilation);
    let scores = hyps
        .par_iter()
        .map(|h| score_hypothesis(section, weights, &region, h, cfg).map(|p| 1.0 - p))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    let bipartition = hyps
        .into_iter()
        .nth(best)
        .expect("index in range")
        .bipartition;
    Ok(Some(MergeCandidate {
        section: section.index(),
        segment: s,
        bipartition,
        score: scores[best],
        candidate_scores: scores,
        seed: rng_seed,
    }))
}

/// Best merge hypothesis for every eligible segment, sorted.
pub fn rank_merges(
    section: &Section,
    weights: &CnnWeights,
    cfg: &EngineConfig,
    rng_seed: u64,
) -> Result<Vec<MergeCandidate>> {
    let mut out = Vec::new();
    for s in section.labels.label_ids() {
        let seed = merge_seed(rng_seed, section.index(), s);
        if let Some(c) = generate_merge_candidates(section, s, weights, cfg, seed)? {
            out.push(c);
        }
    }
    sort_merges(&mut out);
    Ok(out)
}

/// One line of a ranking export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    #[serde(rename = "type")]
    pub kind: String,
    pub section: usize,
    pub ids: Vec<LabelId>,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

impl From<&SplitCandidate> for RankingRecord {
    fn from(c: &SplitCandidate) -> Self {
        Self {
            kind: "split".into(),
            section: c.section,
            ids: vec![c.a, c.b],
            score: c.p,
            seed: None,
        }
    }
}

impl From<&MergeCandidate> for RankingRecord {
    fn from(c: &MergeCandidate) -> Self {
        Self {
            kind: "merge".into(),
            section: c.section,
            ids: vec![c.segment],
            score: c.score,
            seed: Some(c.seed),
        }
    }
}

/// Writes merges then splits, one JSON object per line.
pub fn write_rankings(
    path: &Path,
    splits: &[SplitCandidate],
    merges: &[MergeCandidate],
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut buf = Vec::new();
    let records = merges
        .iter()
        .map(RankingRecord::from)
        .chain(splits.iter().map(RankingRecord::from));
    for r in records {
        serde_json::to_writer(&mut buf, &r).expect("record serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_rankings(path: &Path) -> Result<Vec<RankingRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| Error::InvalidManifest(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::CnnArch;
    use crate::grid::{Grid, LabelMap};
    use crate::imageops::count_components;
    use crate::synth::{generate_section, SynthSpec};

    fn section_from(labels: LabelMap) -> Section {
        let (w, h) = labels.dims();
        let gray = FloatMap::filled(w, h, 0.7);
        let membrane = FloatMap::filled(w, h, 0.1);
        Section::new(0, gray, membrane, labels, None).unwrap()
    }

    fn small_cfg() -> EngineConfig {
        EngineConfig {
            patch_size: 21,
            ..Default::default()
        }
    }

    fn small_weights(seed: u64) -> CnnWeights {
        let arch = CnnArch {
            input_size: 21,
            conv_filters: vec![4, 4],
            dense_units: 8,
            ..CnnArch::default()
        };
        CnnWeights::init(arch, seed).unwrap()
    }

    #[test]
    fn single_segment_has_no_split_candidates() {
        let s = section_from(LabelMap::filled(40, 40, 1));
        assert!(rank_splits(&s, &small_weights(0), &small_cfg())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn tri_band_has_two_candidates() {
        let s = section_from(Grid::from_fn(60, 30, |_, c| 1 + (c / 20) as u32));
        let ranked = rank_splits(&s, &small_weights(1), &small_cfg()).unwrap();
        let pairs: Vec<_> = ranked.iter().map(|c| (c.a, c.b)).collect();
        assert_eq!(ranked.len(), 2);
        assert!(pairs.contains(&(1, 2)) && pairs.contains(&(2, 3)));
    }

    #[test]
    fn ranking_is_a_sorted_permutation_of_adjacencies() {
        let spec = SynthSpec {
            width: 96,
            height: 96,
            n_cells: 8,
            seed: 3,
            ..Default::default()
        };
        let s = generate_section(&spec, 0).unwrap();
        let w = small_weights(2);
        let cfg = small_cfg();
        let ranked = rank_splits(&s, &w, &cfg).unwrap();
        let mut got: Vec<_> = ranked.iter().map(|c| (c.a, c.b)).collect();
        got.sort_unstable();
        let want: Vec<_> = adjacency_pairs(&s.labels).into_iter().collect();
        assert_eq!(got, want);
        // oracle: score every pair independently and re-sort
        let mut resorted: Vec<SplitCandidate> = want
            .iter()
            .map(|&(a, b)| score_pair(&s, &w, a, b, &cfg).unwrap())
            .collect();
        sort_splits(&mut resorted);
        assert_eq!(resorted, ranked);
        assert!(ranked.windows(2).all(|w| w[0].p >= w[1].p));
    }

    fn disk(n: usize, r: f64) -> BinaryMask {
        let c = (n / 2) as f64;
        Grid::from_fn(n, n, |i, j| {
            let (dy, dx) = (i as f64 - c, j as f64 - c);
            dy * dy + dx * dx <= r * r
        })
    }

    #[test]
    fn disk_seeds_at_zero_angle_are_east_and_west() {
        let mask = disk(41, 12.0);
        let rim = perimeter(&mask);
        assert_eq!(nearest_on_ray(&rim, (20.0, 20.0), 0.0), Some((20, 32)));
        assert_eq!(
            nearest_on_ray(&rim, (20.0, 20.0), std::f64::consts::PI),
            Some((20, 8))
        );
        assert_eq!(
            nearest_on_ray(&rim, (20.0, 20.0), std::f64::consts::FRAC_PI_2),
            Some((8, 20))
        );
    }

    #[test]
    fn seed_pairs_are_deterministic_and_antipodal() {
        let mask = disk(41, 12.0);
        let a = opposite_seed_pairs(&mask, 20, 5).unwrap();
        assert_eq!(a, opposite_seed_pairs(&mask, 20, 5).unwrap());
        assert_ne!(a, opposite_seed_pairs(&mask, 20, 6).unwrap());
        for (p, q) in a {
            assert!(*mask.get(p) && *mask.get(q));
            // antipodal through the center: midpoint near the centroid
            let mid = ((p.0 + q.0) as f64 / 2.0, (p.1 + q.1) as f64 / 2.0);
            assert!(
                (mid.0 - 20.0).abs() <= 1.0 && (mid.1 - 20.0).abs() <= 1.0,
                "{p:?} {q:?}"
            );
        }
    }

    #[test]
    fn one_pixel_mask_is_degenerate() {
        let mut mask = BinaryMask::filled(5, 5, false);
        mask.set((2, 2), true);
        assert!(matches!(
            opposite_seed_pairs(&mask, 3, 0),
            Err(Error::DegenerateSegment)
        ));
    }

    #[test]
    fn small_segment_has_no_merge_candidate() {
        let labels = Grid::from_fn(40, 40, |r, c| if r < 2 && c < 5 { 2 } else { 1 });
        let s = section_from(labels);
        let cfg = small_cfg();
        assert_eq!(s.labels.area_of(2), 10);
        assert!(generate_merge_candidates(&s, 2, &small_weights(0), &cfg, 1)
            .unwrap()
            .is_none());
    }

    #[test]
    fn hypotheses_are_valid_bipartitions_of_the_segment() {
        let spec = SynthSpec {
            width: 128,
            height: 128,
            n_cells: 6,
            seed: 9,
            ..Default::default()
        };
        let s = generate_section(&spec, 0).unwrap();
        let cfg = small_cfg();
        for id in s.labels.label_ids() {
            let mask = s.labels.mask_of(id);
            let hyps = merge_hypotheses(&s, id, &cfg, 4).unwrap();
            let mut boundaries = HashSet::new();
            for h in &hyps {
                let bp = &h.bipartition;
                assert!(boundaries.insert(h.full_boundary.clone()));
                assert!(bp.side_a.is_disjoint(&bp.side_b));
                assert!(bp.boundary.is_disjoint(&bp.side_a) && bp.boundary.is_disjoint(&bp.side_b));
                assert_eq!(bp.region(), mask);
                assert_eq!(count_components(&bp.side_a), 1);
                assert_eq!(count_components(&bp.side_b), 1);
                assert_eq!(count_components(&bp.side_a.union(&bp.side_b)), 2);
            }
            assert_eq!(hyps, merge_hypotheses(&s, id, &cfg, 4).unwrap());
        }
    }

    #[test]
    fn rankings_roundtrip_through_json_lines() {
        let s = section_from(Grid::from_fn(60, 30, |_, c| 1 + (c / 20) as u32));
        let cfg = EngineConfig {
            min_segment_area: 100,
            ..small_cfg()
        };
        let w = small_weights(3);
        let splits = rank_splits(&s, &w, &cfg).unwrap();
        let merges = rank_merges(&s, &w, &cfg, 7).unwrap();
        assert!(!merges.is_empty());
        assert!(merges.windows(2).all(|m| m[0].score >= m[1].score));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rankings.jsonl");
        write_rankings(&path, &splits, &merges).unwrap();
        let back = read_rankings(&path).unwrap();
        assert_eq!(back.len(), splits.len() + merges.len());
        assert_eq!(back[0].kind, "merge");
        assert_eq!(
            back.last().unwrap().ids,
            vec![splits.last().unwrap().a, splits.last().unwrap().b]
        );
    }
}
