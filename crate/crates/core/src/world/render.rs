//! Orthographic rasterisation of the overhead and wrist cameras.

use alloc::vec;

use super::geometry::{frame, Shape, Vec2};
use super::{WorldConfig, WorldState, FINGER_HALF_LENGTH, FINGER_THICKNESS};
use crate::tensornet::Tensor;

pub const TABLE_COLOR: [f64; 3] = [0.8, 0.78, 0.7];
pub const GRIPPER_COLOR: [f64; 3] = [0.25, 0.25, 0.3];
/// Floor beyond the table edge, only visible to the wrist camera.
pub const FLOOR_COLOR: [f64; 3] = [0.1, 0.1, 0.1];

/// Shape with its axes resolved once per frame.
struct Region {
    center: Vec2,
    u: Vec2,
    v: Vec2,
    half_u: f64,
    half_v: f64,
    radius: Option<f64>,
}

impl Region {
    fn new(shape: Shape) -> Self {
        match shape {
            Shape::Disc { center, radius } => Self {
                center,
                u: Vec2::new(1.0, 0.0),
                v: Vec2::new(0.0, 1.0),
                half_u: radius,
                half_v: radius,
                radius: Some(radius),
            },
            Shape::Rect {
                center,
                angle,
                half_u,
                half_v,
            } => {
                let (u, v) = frame(angle);
                Self {
                    center,
                    u,
                    v,
                    half_u,
                    half_v,
                    radius: None,
                }
            }
        }
    }

    fn contains(&self, p: Vec2) -> bool {
        let d = p.sub(self.center);
        match self.radius {
            Some(r) => d.dot(d) <= r * r,
            None => d.dot(self.u).abs() <= self.half_u && d.dot(self.v).abs() <= self.half_v,
        }
    }
}

fn gripper_regions(config: &WorldConfig, state: &WorldState) -> [Region; 3] {
    let g = state.gripper;
    let (u, _) = frame(g.yaw);
    let half_gap = if state.gripper_open {
        config.aperture / 2.0
    } else if state.object_held {
        state.object_kind.width_across(state.object.yaw, g.yaw) / 2.0
    } else {
        FINGER_THICKNESS
    };
    let finger = |sign: f64| {
        Region::new(Shape::Rect {
            center: Vec2::new(g.x + sign * half_gap * u.x, g.y + sign * half_gap * u.y),
            angle: g.yaw,
            half_u: FINGER_THICKNESS / 2.0,
            half_v: FINGER_HALF_LENGTH,
        })
    };
    let palm = Region::new(Shape::Rect {
        center: Vec2::new(g.x, g.y),
        angle: g.yaw,
        half_u: half_gap,
        half_v: FINGER_THICKNESS / 2.0,
    });
    [finger(1.0), finger(-1.0), palm]
}

/// Top-down view of the whole table: `[4, N, N]` with rows along y and
/// columns along x. Channel 3 holds the height of the visible surface.
pub fn render_overhead(config: &WorldConfig, state: &WorldState) -> Tensor {
    let n = config.image_size;
    let s = config.supersample;
    let gripper = gripper_regions(config, state);
    let object = Region::new(state.object_kind.footprint(&state.object));
    let object_height = if state.object_held {
        state.gripper.z
    } else {
        state.object_kind.height()
    };
    let object_color = state.object_kind.color();
    let gripper_height = state.gripper.z.clamp(0.0, 1.0);

    let plane = n * n;
    let mut data = vec![0.0; 4 * plane];
    let weight = 1.0 / (s * s) as f64;
    for row in 0..n {
        for col in 0..n {
            let mut acc = [0.0; 4];
            for sy in 0..s {
                for sx in 0..s {
                    let p = Vec2::new(
                        (col as f64 + (sx as f64 + 0.5) / s as f64) / n as f64,
                        (row as f64 + (sy as f64 + 0.5) / s as f64) / n as f64,
                    );
                    let (color, height) = if gripper.iter().any(|r| r.contains(p)) {
                        (GRIPPER_COLOR, gripper_height)
                    } else if object.contains(p) {
                        (object_color, object_height)
                    } else {
                        (TABLE_COLOR, 0.0)
                    };
                    acc[0] += color[0];
                    acc[1] += color[1];
                    acc[2] += color[2];
                    acc[3] += height;
                }
            }
            for (ch, a) in acc.iter().enumerate() {
                data[ch * plane + row * n + col] = a * weight;
            }
        }
    }
    Tensor::new(vec![4, n, n], data).expect("4·N·N values")
}

/// Gripper-mounted view: `[3, N, N]` covering `±wrist_half_extent` around the
/// gripper in its own frame (columns along the closing axis).
pub fn render_wrist(config: &WorldConfig, state: &WorldState) -> Tensor {
    let n = config.image_size;
    let s = config.supersample;
    let g = state.gripper;
    let (u, v) = frame(g.yaw);
    let half = config.wrist_half_extent;
    let object = Region::new(state.object_kind.footprint(&state.object));
    let object_color = state.object_kind.color();
    let show_object = !state.object_held;

    let plane = n * n;
    let mut data = vec![0.0; 3 * plane];
    let weight = 1.0 / (s * s) as f64;
    for row in 0..n {
        for col in 0..n {
            let mut acc = [0.0; 3];
            for sy in 0..s {
                for sx in 0..s {
                    let du = ((col as f64 + (sx as f64 + 0.5) / s as f64) / n as f64 * 2.0 - 1.0) * half;
                    let dv = ((row as f64 + (sy as f64 + 0.5) / s as f64) / n as f64 * 2.0 - 1.0) * half;
                    let p = Vec2::new(g.x + du * u.x + dv * v.x, g.y + du * u.y + dv * v.y);
                    let color = if show_object && object.contains(p) {
                        object_color
                    } else if (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y) {
                        TABLE_COLOR
                    } else {
                        FLOOR_COLOR
                    };
                    acc[0] += color[0];
                    acc[1] += color[1];
                    acc[2] += color[2];
                }
            }
            for (ch, a) in acc.iter().enumerate() {
                data[ch * plane + row * n + col] = a * weight;
            }
        }
    }
    Tensor::new(vec![3, n, n], data).expect("3·N·N values")
}
