//! Dense row-major 2D arrays used for every per-pixel quantity.

use serde::{Deserialize, Serialize};

/// Pixel coordinate as `(row, col)`.
pub type Pixel = (usize, usize);

/// Segment id. 0 is reserved for unlabeled pixels.
pub type LabelId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type LabelMap = Grid<LabelId>;
pub type BinaryMask = Grid<bool>;
pub type FloatMap = Grid<f32>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T: Clone + Default> Grid<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::default())
    }
}

impl<T> Grid<T> {
    /// Wraps a row-major buffer. Returns `None` when the length disagrees with the shape.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index_of(&self, (r, c): Pixel) -> usize {
        r * self.width + c
    }

    #[inline]
    pub fn pixel_of(&self, idx: usize) -> Pixel {
        (idx / self.width, idx % self.width)
    }

    #[inline]
    pub fn contains(&self, (r, c): Pixel) -> bool {
        r < self.height && c < self.width
    }

    #[inline]
    pub fn get(&self, (r, c): Pixel) -> &T {
        &self.data[r * self.width + c]
    }

    #[inline]
    pub fn get_mut(&mut self, (r, c): Pixel) -> &mut T {
        &mut self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, (r, c): Pixel, value: T) {
        self.data[r * self.width + c] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Iterates `((row, col), &value)` in row-major order.
    pub fn indexed(&self) -> impl Iterator<Item = (Pixel, &T)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| ((i / w, i % w), v))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// In-bounds 4-neighbors of `p` in the order up, left, right, down.
    #[inline]
    pub fn neighbors4(&self, (r, c): Pixel) -> impl Iterator<Item = Pixel> {
        let (w, h) = (self.width, self.height);
        let up = (r > 0).then(|| (r - 1, c));
        let left = (c > 0).then(|| (r, c - 1));
        let right = (c + 1 < w).then_some((r, c + 1));
        let down = (r + 1 < h).then_some((r + 1, c));
        [up, left, right, down].into_iter().flatten()
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.indexed().filter(|(_, &b)| b).map(|(p, _)| p)
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !(a && b))
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
        assert!(self.same_dims(other), "mask dimensions differ");
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Mean pixel position `(row, col)`; `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sr, mut sc, mut n) = (0.0, 0.0, 0usize);
        for (r, c) in self.pixels() {
            sr += r as f64;
            sc += c as f64;
            n += 1;
        }
        (n > 0).then(|| (sr / n as f64, sc / n as f64))
    }

    /// Inclusive bounding box `(r0, c0, r1, c1)`.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (r, c) in self.pixels() {
            bb = Some(match bb {
                None => (r, c, r, c),
                Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
            });
        }
        bb
    }
}

impl LabelMap {
    pub fn mask_of(&self, id: LabelId) -> BinaryMask {
        self.map(|&l| l == id)
    }

    pub fn mask_of_any(&self, ids: &[LabelId]) -> BinaryMask {
        self.map(|l| ids.contains(l))
    }

    pub fn contains_label(&self, id: LabelId) -> bool {
        self.data.contains(&id)
    }

    pub fn area_of(&self, id: LabelId) -> usize {
        self.data.iter().filter(|&&l| l == id).count()
    }

    pub fn max_label(&self) -> LabelId {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Sorted distinct nonzero ids.
    pub fn label_ids(&self) -> Vec<LabelId> {
        let mut ids: Vec<LabelId> = self.data.iter().copied().filter(|&l| l != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}
