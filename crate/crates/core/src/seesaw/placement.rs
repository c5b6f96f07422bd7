use serde::{Deserialize, Serialize};

use crate::corpus::BBox;

/// Integer pixel rectangle `(x, y, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> i64 {
        self.w * self.h
    }

    /// Interiors overlap. Shared edges do not count.
    pub fn overlaps(&self, o: &Rect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn as_array(&self) -> [i64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Scale both sides to 3/5 and center inside the original.
    pub fn shrink_centered(&self) -> Rect {
        let (w, h) = (self.w * 3 / 5, self.h * 3 / 5);
        Rect { x: self.x + (self.w - w) / 2, y: self.y + (self.h - h) / 2, w, h }
    }
}

pub const MIN_FREE_SIDE: i64 = 64;

/// Snap a float box outward to whole pixels and clip it to the image.
pub fn snap(b: &BBox, width: i64, height: i64) -> Option<Rect> {
    let x0 = (b.x.floor() as i64).clamp(0, width);
    let y0 = (b.y.floor() as i64).clamp(0, height);
    let x1 = ((b.x + b.w).ceil() as i64).clamp(0, width);
    let y1 = ((b.y + b.h).ceil() as i64).clamp(0, height);
    (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
}

/// Ordering for candidate rectangles: larger area, then top-most, then
/// left-most, then wider.
fn better(a: &Rect, b: &Rect) -> bool {
    (a.area(), -a.y, -a.x, a.w) > (b.area(), -b.y, -b.x, b.w)
}

/// Largest axis-aligned rectangle inside `width × height` that overlaps none
/// of `obstacles`, with every side at least `min_side`.
///
/// Every maximal free rectangle has its left and right edges on the image
/// border or on a box edge, so it is enough to try each pair of x edges and
/// scan the vertical gaps between the boxes that cross that column strip.
pub fn largest_free_rect(width: i64, height: i64, obstacles: &[Rect], min_side: i64) -> Option<Rect> {
    let mut xs: Vec<i64> = vec![0, width];
    for r in obstacles {
        xs.push(r.x);
        xs.push(r.x + r.w);
    }
    xs.sort_unstable();
    xs.dedup();
    let mut best: Option<Rect> = None;
    for (i, &xa) in xs.iter().enumerate() {
        for &xb in &xs[i + 1..] {
            if xb - xa < min_side {
                continue;
            }
            let mut blocked: Vec<(i64, i64)> =
                obstacles.iter().filter(|r| r.x < xb && r.x + r.w > xa).map(|r| (r.y, r.y + r.h)).collect();
            blocked.sort_unstable();
            let mut cursor = 0;
            let mut consider = |y0: i64, y1: i64| {
                if y1 - y0 >= min_side {
                    let cand = Rect::new(xa, y0, xb - xa, y1 - y0);
                    if best.as_ref().is_none_or(|b| better(&cand, b)) {
                        best = Some(cand);
                    }
                }
            };
            for (y0, y1) in blocked {
                if y0 > cursor {
                    consider(cursor, y0);
                }
                cursor = cursor.max(y1);
            }
            if height > cursor {
                consider(cursor, height);
            }
        }
    }
    best
}
