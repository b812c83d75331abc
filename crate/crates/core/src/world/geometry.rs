//! Planar footprints and overlap tests in table coordinates.

use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    /// Unit vector at `angle` radians.
    pub fn heading(angle: f64) -> Vec2 {
        Vec2::new(math::cos(angle), math::sin(angle))
    }
}

/// Convex planar shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Disc { center: Vec2, radius: f64 },
    /// Oriented rectangle; `half_u` runs along `heading(angle)`.
    Rect {
        center: Vec2,
        angle: f64,
        half_u: f64,
        half_v: f64,
    },
}

impl Shape {
    pub fn contains(&self, p: Vec2) -> bool {
        match *self {
            Shape::Disc { center, radius } => {
                let d = p.sub(center);
                d.dot(d) <= radius * radius
            }
            Shape::Rect {
                center,
                angle,
                half_u,
                half_v,
            } => {
                let (u, v) = frame(angle);
                let d = p.sub(center);
                d.dot(u).abs() <= half_u && d.dot(v).abs() <= half_v
            }
        }
    }

    pub fn intersects(&self, other: &Shape) -> bool {
        match (*self, *other) {
            (Shape::Disc { center: a, radius: ra }, Shape::Disc { center: b, radius: rb }) => {
                let d = a.sub(b);
                d.dot(d) <= (ra + rb) * (ra + rb)
            }
            (Shape::Disc { center, radius }, rect @ Shape::Rect { .. })
            | (rect @ Shape::Rect { .. }, Shape::Disc { center, radius }) => {
                let Shape::Rect {
                    center: rc,
                    angle,
                    half_u,
                    half_v,
                } = rect
                else {
                    unreachable!()
                };
                let (u, v) = frame(angle);
                let d = center.sub(rc);
                let cu = d.dot(u).clamp(-half_u, half_u);
                let cv = d.dot(v).clamp(-half_v, half_v);
                let du = d.dot(u) - cu;
                let dv = d.dot(v) - cv;
                du * du + dv * dv <= radius * radius
            }
            (a @ Shape::Rect { .. }, b @ Shape::Rect { .. }) => rects_overlap(&a, &b),
        }
    }
}

/// Orthonormal (u, v) axes of a frame rotated by `angle`.
pub fn frame(angle: f64) -> (Vec2, Vec2) {
    let u = Vec2::heading(angle);
    (u, Vec2::new(-u.y, u.x))
}

fn corners(r: &Shape) -> [Vec2; 4] {
    let Shape::Rect {
        center,
        angle,
        half_u,
        half_v,
    } = *r
    else {
        unreachable!()
    };
    let (u, v) = frame(angle);
    let mut out = [center; 4];
    for (k, (su, sv)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)].iter().enumerate() {
        out[k] = Vec2::new(
            center.x + su * half_u * u.x + sv * half_v * v.x,
            center.y + su * half_u * u.y + sv * half_v * v.y,
        );
    }
    out
}

/// Separating-axis test for two oriented rectangles.
fn rects_overlap(a: &Shape, b: &Shape) -> bool {
    let (ca, cb) = (corners(a), corners(b));
    let axes = |s: &Shape| match *s {
        Shape::Rect { angle, .. } => {
            let (u, v) = frame(angle);
            [u, v]
        }
        Shape::Disc { .. } => unreachable!(),
    };
    for axis in axes(a).into_iter().chain(axes(b)) {
        let proj = |pts: &[Vec2; 4]| {
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let d = p.dot(axis);
                (lo.min(d), hi.max(d))
            })
        };
        let (alo, ahi) = proj(&ca);
        let (blo, bhi) = proj(&cb);
        if ahi < blo || bhi < alo {
            return false;
        }
    }
    true
}
