//! Landmark glyph archetypes: shape x tint x fill, painted into RGB rasters.

use serde::{Deserialize, Serialize};

pub const SHAPE_COUNT: usize = 8;
pub const TINT_COUNT: usize = 6;
pub const FILL_COUNT: usize = 4;
pub const ARCHETYPE_COUNT: usize = SHAPE_COUNT * TINT_COUNT * FILL_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Diamond,
    Bar,
    Cross,
    Ring,
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tint {
    Red,
    Blue,
    Green,
    Yellow,
    Purple,
    Orange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fill {
    Plain,
    Striped,
    Dotted,
    Checked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Archetype {
    pub shape: Shape,
    pub tint: Tint,
    pub fill: Fill,
}

const SHAPES: [Shape; SHAPE_COUNT] = [
    Shape::Circle,
    Shape::Square,
    Shape::Triangle,
    Shape::Diamond,
    Shape::Bar,
    Shape::Cross,
    Shape::Ring,
    Shape::Star,
];
const TINTS: [Tint; TINT_COUNT] =
    [Tint::Red, Tint::Blue, Tint::Green, Tint::Yellow, Tint::Purple, Tint::Orange];
const FILLS: [Fill; FILL_COUNT] = [Fill::Plain, Fill::Striped, Fill::Dotted, Fill::Checked];

impl Archetype {
    pub fn from_index(i: usize) -> Archetype {
        let shape = SHAPES[i % SHAPE_COUNT];
        let tint = TINTS[(i / SHAPE_COUNT) % TINT_COUNT];
        let fill = FILLS[(i / (SHAPE_COUNT * TINT_COUNT)) % FILL_COUNT];
        Archetype { shape, tint, fill }
    }

    pub fn index(&self) -> usize {
        let s = SHAPES.iter().position(|x| *x == self.shape).unwrap();
        let t = TINTS.iter().position(|x| *x == self.tint).unwrap();
        let f = FILLS.iter().position(|x| *x == self.fill).unwrap();
        (f * TINT_COUNT + t) * SHAPE_COUNT + s
    }

    /// The three describing words, in the order they appear in text:
    /// tint, fill, shape noun.
    pub fn words(&self) -> [&'static str; 3] {
        [tint_word(self.tint), fill_word(self.fill), shape_noun(self.shape)]
    }

    pub fn from_words(tint: &str, fill: &str, noun: &str) -> Option<Archetype> {
        let t = TINTS.iter().copied().find(|&t| tint_word(t) == tint)?;
        let f = FILLS.iter().copied().find(|&f| fill_word(f) == fill)?;
        let s = SHAPES.iter().copied().find(|&s| shape_noun(s) == noun)?;
        Some(Archetype { shape: s, tint: t, fill: f })
    }
}

pub fn shape_noun(s: Shape) -> &'static str {
    match s {
        Shape::Circle => "fountain",
        Shape::Square => "kiosk",
        Shape::Triangle => "tower",
        Shape::Diamond => "statue",
        Shape::Bar => "bench",
        Shape::Cross => "sign",
        Shape::Ring => "arch",
        Shape::Star => "booth",
    }
}

pub fn tint_word(t: Tint) -> &'static str {
    match t {
        Tint::Red => "red",
        Tint::Blue => "blue",
        Tint::Green => "green",
        Tint::Yellow => "yellow",
        Tint::Purple => "purple",
        Tint::Orange => "orange",
    }
}

pub fn fill_word(f: Fill) -> &'static str {
    match f {
        Fill::Plain => "plain",
        Fill::Striped => "striped",
        Fill::Dotted => "dotted",
        Fill::Checked => "checked",
    }
}

pub fn tint_rgb(t: Tint) -> [f32; 3] {
    match t {
        Tint::Red => [0.95, 0.15, 0.15],
        Tint::Blue => [0.15, 0.25, 0.95],
        Tint::Green => [0.10, 0.85, 0.20],
        Tint::Yellow => [0.95, 0.90, 0.10],
        Tint::Purple => [0.70, 0.15, 0.90],
        Tint::Orange => [0.95, 0.55, 0.10],
    }
}

fn inside(shape: Shape, dx: f64, dy: f64, r: f64) -> bool {
    match shape {
        Shape::Circle => dx * dx + dy * dy <= r * r,
        Shape::Square => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
        // apex at the top (dy = -r), base at the bottom
        Shape::Triangle => dy >= -r && dy <= 0.8 * r && dx.abs() <= 0.62 * (dy + r),
        Shape::Diamond => dx.abs() + dy.abs() <= r,
        Shape::Bar => dx.abs() <= 0.35 * r && dy.abs() <= r,
        Shape::Cross => {
            dx.abs() <= r && dy.abs() <= r && (dx.abs() <= 0.32 * r || dy.abs() <= 0.32 * r)
        }
        Shape::Ring => {
            let d2 = dx * dx + dy * dy;
            d2 <= r * r && d2 >= 0.55 * 0.55 * r * r
        }
        Shape::Star => {
            let d = (dx * dx + dy * dy).sqrt();
            let th = dy.atan2(dx);
            let lobe = 0.55 + 0.45 * (5.0 * th).cos().powi(2);
            d <= r * lobe
        }
    }
}

fn fill_mask(fill: Fill, x: usize, y: usize) -> bool {
    match fill {
        Fill::Plain => true,
        Fill::Striped => ((x + y) / 3) % 2 == 0,
        Fill::Dotted => x % 3 < 2 && y % 3 < 2,
        Fill::Checked => (x / 3 + y / 3) % 2 == 0,
    }
}

/// Paint one glyph into an RGB canvas laid out [3, h, w]. Pixels inside the
/// shape-and-fill mask are overwritten (callers paint far to near).
pub fn paint(canvas: &mut [f32], h: usize, w: usize, cx: f64, cy: f64, r: f64, a: Archetype) {
    debug_assert_eq!(canvas.len(), 3 * h * w);
    let rgb = tint_rgb(a.tint);
    let y0 = ((cy - r).floor().max(0.0)) as usize;
    let y1 = ((cy + r).ceil().min(h as f64 - 1.0)) as usize;
    let x0 = ((cx - r).floor().max(0.0)) as usize;
    let x1 = ((cx + r).ceil().min(w as f64 - 1.0)) as usize;
    if (cy + r) < 0.0 || (cx + r) < 0.0 {
        return;
    }
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if inside(a.shape, dx, dy, r) && fill_mask(a.fill, x, y) {
                for c in 0..3 {
                    canvas[c * h * w + y * w + x] = rgb[c];
                }
            }
        }
    }
}
