//! Pixel-level primitives. Everything uses 4-connectivity.

mod watershed;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid, LabelId, LabelMap, Pixel};

pub use watershed::{watershed_two_seed, Bipartition};

/// Dilation by a Euclidean disk: every pixel within distance `radius` of a
/// set pixel, clipped to the image.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 || !mask.any() {
        return mask.clone();
    }
    let d2 = squared_distance_transform(mask);
    let r2 = (radius * radius) as f64;
    d2.map(|&d| d <= r2)
}

/// Exact squared Euclidean distance from every pixel to the nearest set pixel
/// (separable lower-envelope transform). Pixels of an empty mask map to infinity.
pub fn squared_distance_transform(mask: &BinaryMask) -> Grid<f64> {
    let (w, h) = mask.dims();
    let mut out = mask.map(|&b| if b { 0.0 } else { f64::INFINITY });
    let mut buf = vec![0.0; w.max(h)];
    let mut res = vec![0.0; w.max(h)];

    for c in 0..w {
        for (r, b) in buf[..h].iter_mut().enumerate() {
            *b = *out.get((r, c));
        }
        edt_1d(&buf[..h], &mut res[..h]);
        for (r, &v) in res[..h].iter().enumerate() {
            out.set((r, c), v);
        }
    }
    for r in 0..h {
        buf[..w].copy_from_slice(&out.as_slice()[r * w..(r + 1) * w]);
        edt_1d(&buf[..w], &mut res[..w]);
        out.as_mut_slice()[r * w..(r + 1) * w].copy_from_slice(&res[..w]);
    }
    out
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let finite: Vec<usize> = (0..f.len()).filter(|&i| f[i].is_finite()).collect();
    let Some((&first, rest)) = finite.split_first() else {
        d.fill(f64::INFINITY);
        return;
    };
    let key = |p: usize| f[p] + (p * p) as f64;
    // parabola vertices `v`; `z[i]` is where parabola `v[i]` starts to win
    let mut v = vec![first];
    let mut z = vec![f64::NEG_INFINITY];
    for &q in rest {
        let mut s;
        loop {
            let p = *v.last().unwrap();
            s = (key(q) - key(p)) / (2.0 * (q as f64 - p as f64));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                break;
            }
        }
        v.push(q);
        z.push(s);
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

fn check_pair(labels: &LabelMap, a: LabelId, b: LabelId) -> Result<()> {
    if a == b || a == 0 || b == 0 || !labels.contains_label(a) || !labels.contains_label(b) {
        return Err(Error::InvalidPair(a, b));
    }
    Ok(())
}

/// Pixels of `a` touching `b` plus pixels of `b` touching `a`; empty when the
/// two segments are not adjacent.
pub fn extract_boundary(labels: &LabelMap, a: LabelId, b: LabelId) -> Result<BinaryMask> {
    check_pair(labels, a, b)?;
    Ok(boundary_between(labels, a, b))
}

pub(crate) fn boundary_between(labels: &LabelMap, a: LabelId, b: LabelId) -> BinaryMask {
    Grid::from_fn(labels.width(), labels.height(), |r, c| {
        let l = *labels.get((r, c));
        let other = if l == a {
            b
        } else if l == b {
            a
        } else {
            return false;
        };
        labels.neighbors4((r, c)).any(|q| *labels.get(q) == other)
    })
}

/// Boundary between the pixels of `mask` and its complement, drawn on both
/// sides, the same construction as [`extract_boundary`] for a two-label map.
pub fn mask_edge(mask: &BinaryMask) -> BinaryMask {
    Grid::from_fn(mask.width(), mask.height(), |r, c| {
        let v = *mask.get((r, c));
        mask.neighbors4((r, c)).any(|q| *mask.get(q) != v)
    })
}

/// All unordered pairs of distinct nonzero labels sharing a 4-adjacent edge,
/// as `(min, max)` in ascending order.
pub fn adjacency_pairs(labels: &LabelMap) -> BTreeSet<(LabelId, LabelId)> {
    let (w, h) = labels.dims();
    let data = labels.as_slice();
    let mut pairs = BTreeSet::new();
    let mut push = |x: LabelId, y: LabelId| {
        if x != y && x != 0 && y != 0 {
            pairs.insert((x.min(y), x.max(y)));
        }
    };
    for r in 0..h {
        for c in 0..w {
            let l = data[r * w + c];
            if c + 1 < w {
                push(l, data[r * w + c + 1]);
            }
            if r + 1 < h {
                push(l, data[(r + 1) * w + c]);
            }
        }
    }
    pairs
}

/// Pixel co-occurrence counts between two label maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contingency {
    /// `(x, y) -> count`, sorted by key so that sums are order-stable.
    pub counts: BTreeMap<(LabelId, LabelId), u64>,
    pub total: u64,
}

impl Contingency {
    pub fn row_sums(&self) -> BTreeMap<LabelId, u64> {
        let mut out = BTreeMap::new();
        for (&(x, _), &n) in &self.counts {
            *out.entry(x).or_insert(0) += n;
        }
        out
    }

    pub fn col_sums(&self) -> BTreeMap<LabelId, u64> {
        let mut out = BTreeMap::new();
        for (&(_, y), &n) in &self.counts {
            *out.entry(y).or_insert(0) += n;
        }
        out
    }
}

pub fn contingency(x: &LabelMap, y: &LabelMap, ignore_zero_y: bool) -> Result<Contingency> {
    if !x.same_dims(y) {
        return Err(Error::GeometryMismatch(format!(
            "{}x{} vs {}x{}",
            x.width(),
            x.height(),
            y.width(),
            y.height()
        )));
    }
    let mut counts: HashMap<(LabelId, LabelId), u64> = HashMap::new();
    let mut total = 0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        if ignore_zero_y && b == 0 {
            continue;
        }
        *counts.entry((a, b)).or_insert(0) += 1;
        total += 1;
    }
    Ok(Contingency {
        counts: counts.into_iter().collect(),
        total,
    })
}

/// 4-connected components of a mask. Returns the component index per pixel
/// (`usize::MAX` outside the mask) and the component sizes, numbered in
/// row-major order of their first pixel.
pub fn connected_components(mask: &BinaryMask) -> (Grid<usize>, Vec<usize>) {
    let mut comp = mask.map(|_| usize::MAX);
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask.as_slice()[start] || comp.as_slice()[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        comp.as_mut_slice()[start] = id;
        queue.push_back(mask.pixel_of(start));
        while let Some(p) = queue.pop_front() {
            size += 1;
            for q in mask.neighbors4(p) {
                if *mask.get(q) && *comp.get(q) == usize::MAX {
                    comp.set(q, id);
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

pub fn count_components(mask: &BinaryMask) -> usize {
    connected_components(mask).1.len()
}

/// Keeps only the largest 4-connected component (ties go to the first in
/// row-major order).
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (comp, sizes) = connected_components(mask);
    let Some(best) = (0..sizes.len()).max_by_key(|&i| (sizes[i], std::cmp::Reverse(i))) else {
        return mask.clone();
    };
    comp.map(|&c| c == best)
}

/// Mask pixels having a 4-neighbor outside the mask or lying on the image border.
pub fn perimeter(mask: &BinaryMask) -> Vec<Pixel> {
    let (w, h) = mask.dims();
    mask.pixels()
        .filter(|&(r, c)| {
            r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || mask.neighbors4((r, c)).any(|q| !*mask.get(q))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point_mask(w: usize, h: usize, p: Pixel) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        m.set(p, true);
        m
    }

    fn brute_dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
        let set: Vec<Pixel> = mask.pixels().collect();
        let r2 = (radius * radius) as i64;
        Grid::from_fn(mask.width(), mask.height(), |r, c| {
            set.iter().any(|&(pr, pc)| {
                let dr = r as i64 - pr as i64;
                let dc = c as i64 - pc as i64;
                dr * dr + dc * dc <= r2
            })
        })
    }

    #[test]
    fn dilate_radius_zero_is_identity() {
        let m = point_mask(9, 9, (4, 4));
        assert_eq!(dilate(&m, 0), m);
    }

    #[test]
    fn dilate_single_pixel_radius_one() {
        let m = point_mask(9, 9, (4, 4));
        let d = dilate(&m, 1);
        assert_eq!(d.count(), 5);
        assert!(!*d.get((3, 3)));
    }

    #[test]
    fn dilate_single_pixel_radius_five_counts_lattice_disk() {
        // lattice points with x^2 + y^2 <= 25
        let oracle = (-5i32..=5)
            .flat_map(|x| (-5i32..=5).map(move |y| (x, y)))
            .filter(|(x, y)| x * x + y * y <= 25)
            .count();
        assert_eq!(oracle, 81);
        let d = dilate(&point_mask(31, 31, (15, 15)), 5);
        assert_eq!(d.count(), oracle);
    }

    #[test]
    fn dilate_clips_at_image_edge() {
        let d = dilate(&point_mask(10, 10, (0, 0)), 1);
        assert_eq!(d.count(), 3);
    }

    fn arb_mask(max: usize) -> impl Strategy<Value = BinaryMask> {
        (1..max, 1..max).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::bool::weighted(0.1), w * h)
                .prop_map(move |v| Grid::from_vec(w, h, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn dilate_matches_brute_force(mask in arb_mask(24), radius in 0usize..7) {
            prop_assert_eq!(dilate(&mask, radius), brute_dilate(&mask, radius));
        }

        #[test]
        fn dilate_is_extensive_and_monotone(mask in arb_mask(20), r1 in 0usize..5, extra in 0usize..5) {
            let a = dilate(&mask, r1);
            let b = dilate(&mask, r1 + extra);
            prop_assert!(mask.is_subset_of(&a));
            prop_assert!(a.is_subset_of(&b));
        }

        #[test]
        fn adjacency_matches_pixel_pair_scan(
            v in proptest::collection::vec(1u32..6, 20 * 20)
        ) {
            let labels = Grid::from_vec(20, 20, v).unwrap();
            let mut oracle = BTreeSet::new();
            for (p, &l) in labels.indexed() {
                for q in labels.neighbors4(p) {
                    let m = *labels.get(q);
                    if m != l {
                        oracle.insert((l.min(m), l.max(m)));
                    }
                }
            }
            prop_assert_eq!(adjacency_pairs(&labels), oracle);
        }

        #[test]
        fn boundary_is_symmetric(v in proptest::collection::vec(1u32..4, 12 * 9)) {
            let labels = Grid::from_vec(12, 9, v).unwrap();
            let ids = labels.label_ids();
            for &a in &ids {
                for &b in &ids {
                    if a != b {
                        prop_assert_eq!(
                            extract_boundary(&labels, a, b).unwrap(),
                            extract_boundary(&labels, b, a).unwrap()
                        );
                    }
                }
            }
        }

        #[test]
        fn contingency_matches_tally(
            x in proptest::collection::vec(0u32..4, 64),
            y in proptest::collection::vec(0u32..4, 64),
            ignore in any::<bool>(),
        ) {
            let xm = Grid::from_vec(8, 8, x.clone()).unwrap();
            let ym = Grid::from_vec(8, 8, y.clone()).unwrap();
            let t = contingency(&xm, &ym, ignore).unwrap();
            let mut oracle: BTreeMap<(u32, u32), u64> = BTreeMap::new();
            let mut total = 0;
            for i in 0..64 {
                if ignore && y[i] == 0 {
                    continue;
                }
                *oracle.entry((x[i], y[i])).or_default() += 1;
                total += 1;
            }
            prop_assert_eq!(t.counts, oracle);
            prop_assert_eq!(t.total, total);
        }
    }

    #[test]
    fn boundary_of_two_halves() {
        let labels = Grid::from_fn(4, 4, |_, c| if c < 2 { 1 } else { 2 });
        let b = extract_boundary(&labels, 1, 2).unwrap();
        assert_eq!(b.count(), 8);
        assert!(b.pixels().all(|(_, c)| c == 1 || c == 2));
    }

    #[test]
    fn boundary_of_non_adjacent_pair_is_empty() {
        let labels = Grid::from_fn(6, 2, |_, c| (c / 2 + 1) as u32);
        assert_eq!(extract_boundary(&labels, 1, 3).unwrap().count(), 0);
    }

    #[test]
    fn boundary_rejects_invalid_pairs() {
        let labels = Grid::from_fn(4, 4, |_, c| if c < 2 { 1 } else { 2 });
        assert!(matches!(
            extract_boundary(&labels, 1, 1),
            Err(Error::InvalidPair(1, 1))
        ));
        assert!(matches!(
            extract_boundary(&labels, 1, 7),
            Err(Error::InvalidPair(1, 7))
        ));
    }

    #[test]
    fn adjacency_of_simple_maps() {
        let single = LabelMap::filled(5, 5, 3);
        assert!(adjacency_pairs(&single).is_empty());
        let bands = Grid::from_fn(9, 4, |_, c| [7u32, 2, 5][c / 3]);
        let pairs: Vec<_> = adjacency_pairs(&bands).into_iter().collect();
        assert_eq!(pairs, vec![(2, 5), (2, 7)]);
    }

    #[test]
    fn adjacency_ignores_background() {
        let labels = Grid::from_vec(3, 1, vec![1u32, 0, 2]).unwrap();
        assert!(adjacency_pairs(&labels).is_empty());
    }

    #[test]
    fn contingency_simple_cases() {
        let x = Grid::from_fn(4, 4, |r, _| r as u32 + 1);
        let t = contingency(&x, &x, false).unwrap();
        assert_eq!(t.counts.len(), 4);
        assert!(t.counts.keys().all(|(a, b)| a == b));

        let c1 = LabelMap::filled(5, 3, 9);
        let c2 = LabelMap::filled(5, 3, 4);
        let t = contingency(&c1, &c2, false).unwrap();
        assert_eq!(t.counts.into_iter().collect::<Vec<_>>(), vec![((9, 4), 15)]);

        let small = LabelMap::filled(2, 2, 1);
        assert!(matches!(
            contingency(&c1, &small, false),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn components_and_perimeter() {
        let mask = Grid::from_vec(5, 1, vec![true, true, false, true, false]).unwrap();
        let (_, sizes) = connected_components(&mask);
        assert_eq!(sizes, vec![2, 1]);
        assert_eq!(largest_component(&mask).count(), 2);

        let block = Grid::from_fn(7, 7, |r, c| (1..6).contains(&r) && (1..6).contains(&c));
        assert_eq!(perimeter(&block).len(), 16);
    }
}
