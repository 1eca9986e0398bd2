//! Server-side rendering of the three candidate views.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use proofread_core::grid::{BinaryMask, FloatMap, LabelId, LabelMap};
use proofread_core::synth::derive_seed;

/// Pixels of context kept around the candidate's segments.
pub const MARGIN: usize = 24;

const OUTLINE: Rgb<u8> = Rgb([255, 214, 0]);
const SOLID_ALPHA: f32 = 0.45;

/// Two side-by-side panels per image, each `2 * width` by `height`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedViews {
    pub outline: RgbImage,
    pub solid: RgbImage,
    pub plain: RgbImage,
}

impl RenderedViews {
    pub fn encode(&self) -> [Vec<u8>; 3] {
        [&self.outline, &self.solid, &self.plain].map(|img| {
            let mut out = Cursor::new(Vec::new());
            img.write_to(&mut out, ImageFormat::Png)
                .expect("in-memory PNG encoding");
            out.into_inner()
        })
    }
}

/// Crop rectangle `(r0, c0, r1, c1)`, inclusive, around `focus`.
pub fn crop_around(focus: &BinaryMask) -> (usize, usize, usize, usize) {
    let (h, w) = (focus.height(), focus.width());
    match focus.bounding_box() {
        Some((r0, c0, r1, c1)) => (
            r0.saturating_sub(MARGIN),
            c0.saturating_sub(MARGIN),
            (r1 + MARGIN).min(h - 1),
            (c1 + MARGIN).min(w - 1),
        ),
        None => (0, 0, h - 1, w - 1),
    }
}

pub fn palette(id: LabelId) -> Rgb<u8> {
    let h = derive_seed(0x5EED, &[u64::from(id)]);
    let channel = |shift: u32| 64 + ((h >> shift) & 0xBF) as u8;
    Rgb([channel(0), channel(8), channel(16)])
}

fn gray_px(v: f32) -> Rgb<u8> {
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([g, g, g])
}

fn is_edge(labels: &LabelMap, p: (usize, usize)) -> bool {
    let l = *labels.get(p);
    l != 0 && labels.neighbors4(p).any(|q| *labels.get(q) != l)
}

fn panel(
    gray: &FloatMap,
    labels: Option<&LabelMap>,
    solid: bool,
    crop: (usize, usize, usize, usize),
    img: &mut RgbImage,
    x0: u32,
) {
    let (r0, c0, r1, c1) = crop;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let g = gray_px(*gray.get((r, c)));
            let px = match labels {
                None => g,
                Some(l) if solid => {
                    let id = *l.get((r, c));
                    if id == 0 {
                        g
                    } else {
                        let col = palette(id);
                        Rgb(std::array::from_fn(|i| {
                            (f32::from(col.0[i]) * SOLID_ALPHA
                                + f32::from(g.0[i]) * (1.0 - SOLID_ALPHA))
                                .round() as u8
                        }))
                    }
                }
                Some(l) => {
                    if is_edge(l, (r, c)) {
                        OUTLINE
                    } else {
                        g
                    }
                }
            };
            img.put_pixel(x0 + (c - c0) as u32, (r - r0) as u32, px);
        }
    }
}

/// Renders current and proposed labelings side by side. Which one lands on
/// the left is decided by the caller.
pub fn render(
    gray: &FloatMap,
    current: &LabelMap,
    proposed: &LabelMap,
    focus: &BinaryMask,
    current_on_left: bool,
) -> RenderedViews {
    let crop = crop_around(focus);
    let w = (crop.3 - crop.1 + 1) as u32;
    let h = (crop.2 - crop.0 + 1) as u32;
    let (left, right) = if current_on_left {
        (current, proposed)
    } else {
        (proposed, current)
    };
    let mut outline = RgbImage::new(2 * w, h);
    let mut solid = RgbImage::new(2 * w, h);
    let mut plain = RgbImage::new(2 * w, h);
    for (x0, labels) in [(0, left), (w, right)] {
        panel(gray, Some(labels), false, crop, &mut outline, x0);
        panel(gray, Some(labels), true, crop, &mut solid, x0);
        panel(gray, None, false, crop, &mut plain, x0);
    }
    RenderedViews {
        outline,
        solid,
        plain,
    }
}
