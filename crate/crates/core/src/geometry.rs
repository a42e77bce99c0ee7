use serde::{Deserialize, Serialize};

/// A point in the surveillance plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Position, frac: f64) -> Position {
        Position::new(self.x + (other.x - self.x) * frac, self.y + (other.y - self.y) * frac)
    }
}

impl From<[f64; 2]> for Position {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Position> for [f64; 2] {
    fn from(p: Position) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned closed rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn corners(&self) -> [Position; 4] {
        [
            Position::new(self.x0, self.y0),
            Position::new(self.x1, self.y0),
            Position::new(self.x1, self.y1),
            Position::new(self.x0, self.y1),
        ]
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn clamp(&self, p: &Position) -> Position {
        Position::new(p.x.clamp(self.x0, self.x1), p.y.clamp(self.y0, self.y1))
    }

    /// Minimum and maximum distance from `p` to any point of the rectangle.
    pub fn distance_range(&self, p: &Position) -> (f64, f64) {
        let near = self.clamp(p).distance(p);
        let far = self.corners().iter().map(|c| c.distance(p)).fold(0.0, f64::max);
        (near, far)
    }

    /// Minimum and maximum of `|q - f1| + |q - f2|` over the rectangle.
    ///
    /// The sum of focal distances is convex, so the maximum sits on a corner
    /// and the minimum is either `|f1 - f2|` (segment meets the rectangle) or
    /// lies on one of the four edges.
    pub fn focal_sum_range(&self, f1: &Position, f2: &Position) -> (f64, f64) {
        let sum = |q: &Position| q.distance(f1) + q.distance(f2);
        let far = self.corners().iter().map(sum).fold(0.0, f64::max);
        if self.intersects_segment(f1, f2) {
            return (f1.distance(f2), far);
        }
        let c = self.corners();
        let near = (0..4)
            .map(|i| sum(&min_focal_sum_on_segment(&c[i], &c[(i + 1) % 4], f1, f2)))
            .fold(f64::INFINITY, f64::min);
        (near, far)
    }

    /// Whether the closed segment `a`–`b` meets the closed rectangle.
    pub fn intersects_segment(&self, a: &Position, b: &Position) -> bool {
        // Liang–Barsky clipping
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-dx, a.x - self.x0),
            (dx, self.x1 - a.x),
            (-dy, a.y - self.y0),
            (dy, self.y1 - a.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

/// Point of the segment `a`–`b` minimising the focal distance sum to `f1`, `f2`.
///
/// Along a line the focal sum is convex; its unconstrained minimiser is the
/// crossing with `f1`–`f2` when the foci are on opposite sides, otherwise the
/// crossing with the segment to the mirror image of `f2`. Clamping that
/// minimiser to the segment gives the constrained one.
fn min_focal_sum_on_segment(a: &Position, b: &Position, f1: &Position, f2: &Position) -> Position {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return *a;
    }
    // signed offsets from the supporting line
    let side = |p: &Position| (p.x - a.x) * dy - (p.y - a.y) * dx;
    let s1 = side(f1);
    let mut s2 = side(f2);
    let mut g2 = *f2;
    if s1 * s2 > 0.0 {
        // reflect f2 across the line
        let proj = ((f2.x - a.x) * dx + (f2.y - a.y) * dy) / len2;
        let foot = Position::new(a.x + proj * dx, a.y + proj * dy);
        g2 = Position::new(2.0 * foot.x - f2.x, 2.0 * foot.y - f2.y);
        s2 = -s2;
    }
    let param = |p: &Position| ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    let t = if s1 == s2 {
        // both foci on the line
        let (p1, p2) = (param(f1), param(&g2));
        let (lo, hi) = (p1.min(p2), p1.max(p2));
        if hi < 0.0 {
            0.0
        } else if lo > 1.0 {
            1.0
        } else {
            lo.max(0.0)
        }
    } else {
        let w = s1 / (s1 - s2);
        param(f1) + w * (param(&g2) - param(f1))
    };
    let t = t.clamp(0.0, 1.0);
    Position::new(a.x + t * dx, a.y + t * dy)
}
