use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, FloatMap, Grid, Pixel};

/// One two-way split of a region: two sides plus the line separating them.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Bipartition {
    pub side_a: BinaryMask,
    pub side_b: BinaryMask,
    pub boundary: BinaryMask,
    pub seed_a: Pixel,
    pub seed_b: Pixel,
}

impl Bipartition {
    pub fn region(&self) -> BinaryMask {
        self.side_a.union(&self.side_b).union(&self.boundary)
    }
}

const FREE: u8 = 0;
const SIDE_A: u8 = 1;
const SIDE_B: u8 = 2;
const LINE: u8 = 3;

#[derive(Clone, Copy, Debug)]
struct Entry {
    height: f32,
    /// Steps taken on the current height level; makes plateaus fill
    /// breadth-first instead of in raster order.
    plateau: u32,
    pixel: Pixel,
    side: u8,
}

impl Entry {
    fn key(&self) -> (u32, usize, usize, u8) {
        (self.plateau, self.pixel.0, self.pixel.1, self.side)
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap and we pop the lowest entry first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .height
            .total_cmp(&self.height)
            .then_with(|| other.key().cmp(&self.key()))
    }
}

/// Priority-flood watershed from two markers, restricted to `region`.
///
/// Pixels are claimed in ascending `height`; a pixel reached by one front
/// while already touching the other becomes part of the boundary. Region
/// pixels neither front can reach are added to the boundary so the three
/// masks always cover the region.
pub fn watershed_two_seed(
    height: &FloatMap,
    region: &BinaryMask,
    seed_a: Pixel,
    seed_b: Pixel,
) -> Result<Bipartition> {
    if !height.same_dims(region) {
        return Err(Error::GeometryMismatch(
            "height map and region differ in size".into(),
        ));
    }
    for seed in [seed_a, seed_b] {
        if !region.contains(seed) || !*region.get(seed) {
            return Err(Error::SeedOutsideRegion(seed));
        }
    }
    if seed_a == seed_b {
        return Err(Error::IdenticalSeeds(seed_a));
    }

    let mut state: Grid<u8> = Grid::new(region.width(), region.height());
    let mut heap = BinaryHeap::new();
    state.set(seed_a, SIDE_A);
    state.set(seed_b, SIDE_B);

    let push_neighbors = |heap: &mut BinaryHeap<Entry>, state: &Grid<u8>, from: Entry| {
        for q in region.neighbors4(from.pixel) {
            if *region.get(q) && *state.get(q) == FREE {
                let h = *height.get(q);
                let plateau = if h == from.height {
                    from.plateau + 1
                } else {
                    0
                };
                heap.push(Entry {
                    height: h,
                    plateau,
                    pixel: q,
                    side: from.side,
                });
            }
        }
    };
    for (seed, side) in [(seed_a, SIDE_A), (seed_b, SIDE_B)] {
        let e = Entry {
            height: *height.get(seed),
            plateau: 0,
            pixel: seed,
            side,
        };
        push_neighbors(&mut heap, &state, e);
    }

    while let Some(e) = heap.pop() {
        if *state.get(e.pixel) != FREE {
            continue;
        }
        let other = if e.side == SIDE_A { SIDE_B } else { SIDE_A };
        if region.neighbors4(e.pixel).any(|q| *state.get(q) == other) {
            state.set(e.pixel, LINE);
            continue;
        }
        state.set(e.pixel, e.side);
        push_neighbors(&mut heap, &state, e);
    }

    let side_a = state.map(|&s| s == SIDE_A);
    let side_b = state.map(|&s| s == SIDE_B);
    let boundary = Grid::from_fn(region.width(), region.height(), |r, c| {
        *region.get((r, c)) && matches!(*state.get((r, c)), LINE | FREE)
    });
    Ok(Bipartition {
        side_a,
        side_b,
        boundary,
        seed_a,
        seed_b,
    })
}
