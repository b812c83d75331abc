//! Kinematic tabletop grasping world.
//!
//! The gripper moves on a lattice of fixed translation and yaw steps above a
//! unit table. Closing the gripper ends the episode; the grasp succeeds when
//! the object centre lies inside the kind-specific capture rectangle, the
//! object's width across the jaws fits the aperture and the fingers are low
//! enough. A successful grasp is followed by an automatic lift.

pub mod geometry;
mod render;

use core::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensornet::Tensor;
use crate::{math, Error, Result};
use geometry::{Shape, Vec2};
pub use render::{render_overhead, render_wrist};

pub const ACTION_COUNT: usize = 9;

pub const SUCCESS_REWARD: f64 = 10.0;
pub const CONTACT_REWARD: f64 = 1.0;
pub const NOT_EXECUTED_REWARD: f64 = -1.0;
pub const STEP_PENALTY: f64 = -0.025;

const EDGE_EPS: f64 = 1e-9;
/// Finger thickness along the closing axis.
const FINGER_THICKNESS: f64 = 0.02;
/// Half length of a finger along the jaw axis.
const FINGER_HALF_LENGTH: f64 = 0.03;

/// One of the nine discrete commands; the index is the Q-vector slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    XPlus = 0,
    XMinus = 1,
    YPlus = 2,
    YMinus = 3,
    ZPlus = 4,
    ZMinus = 5,
    YawPlus = 6,
    YawMinus = 7,
    Close = 8,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::XPlus,
        Action::XMinus,
        Action::YPlus,
        Action::YMinus,
        Action::ZPlus,
        Action::ZMinus,
        Action::YawPlus,
        Action::YawMinus,
        Action::Close,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectKind {
    Cube,
    Sphere,
    Cylinder,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 3] = [ObjectKind::Cube, ObjectKind::Sphere, ObjectKind::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Cube => "cube",
            ObjectKind::Sphere => "sphere",
            ObjectKind::Cylinder => "cylinder",
        }
    }

    /// Height of the object's top surface above the table.
    pub fn height(self) -> f64 {
        match self {
            ObjectKind::Cube => 0.08,
            ObjectKind::Sphere => 0.07,
            ObjectKind::Cylinder => 0.06,
        }
    }

    pub fn color(self) -> [f64; 3] {
        match self {
            ObjectKind::Cube => [0.9, 0.15, 0.1],
            ObjectKind::Sphere => [0.15, 0.8, 0.2],
            ObjectKind::Cylinder => [0.15, 0.25, 0.9],
        }
    }

    /// Table footprint at `pose`. The cylinder lies on its side with its
    /// long axis along the pose yaw.
    pub fn footprint(self, pose: &ObjectPose) -> Shape {
        let center = Vec2::new(pose.x, pose.y);
        match self {
            ObjectKind::Cube => Shape::Rect {
                center,
                angle: pose.yaw,
                half_u: 0.04,
                half_v: 0.04,
            },
            ObjectKind::Sphere => Shape::Disc {
                center,
                radius: 0.035,
            },
            ObjectKind::Cylinder => Shape::Rect {
                center,
                angle: pose.yaw,
                half_u: 0.09,
                half_v: 0.03,
            },
        }
    }

    /// Extent of the footprint along a closing axis at `axis_angle`.
    pub fn width_across(self, object_yaw: f64, axis_angle: f64) -> f64 {
        let e = axis_angle - object_yaw;
        let (c, s) = (math::cos(e).abs(), math::sin(e).abs());
        match self {
            ObjectKind::Cube => 0.08 * (c + s),
            ObjectKind::Sphere => 0.07,
            ObjectKind::Cylinder => 0.18 * c + 0.06 * s,
        }
    }

    /// Half extents `(u, v)` of the capture rectangle in the gripper frame
    /// (u along the closing axis). The sphere rolls out of anything but a
    /// centred grasp, so its region is the smallest.
    pub fn capture_half_extents(self) -> (f64, f64) {
        match self {
            ObjectKind::Cube => (0.05, 0.05),
            ObjectKind::Sphere => (0.03, 0.03),
            ObjectKind::Cylinder => (0.04, 0.06),
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown object kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GripperPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Complete simulator ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub gripper: GripperPose,
    pub gripper_open: bool,
    pub object_kind: ObjectKind,
    pub object: ObjectPose,
    pub object_held: bool,
    pub step_count: u32,
    /// The once-per-episode contact reward has been paid.
    pub contact_rewarded: bool,
    pub terminal: bool,
}

/// What happened during one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Executed,
    NotExecuted,
    Contact,
    Success,
    Partial,
    Failure,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
    pub event: Event,
}

/// Inputs of the reward function for one evaluated step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RewardContext {
    pub event: Event,
    /// No contact reward has been paid earlier in the episode.
    pub first_contact: bool,
}

/// One reward per step, by priority success > contact > not executed > step penalty.
pub fn reward(ctx: RewardContext) -> f64 {
    match ctx.event {
        Event::Success => SUCCESS_REWARD,
        Event::Contact => CONTACT_REWARD,
        Event::Partial if ctx.first_contact => CONTACT_REWARD,
        Event::NotExecuted => NOT_EXECUTED_REWARD,
        Event::Executed | Event::Partial | Event::Failure => STEP_PENALTY,
    }
}

/// Camera images plus motor state, the network's view of a [`WorldState`].
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// `[4, H, W]`: RGB plus a height channel.
    pub overhead: Tensor,
    /// `[3, H, W]`: RGB from the gripper-mounted camera.
    pub wrist: Tensor,
    /// `[x, y, z, yaw/π + 1/2, aperture fraction]`, all in `[0, 1]`.
    pub motor: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub image_size: usize,
    pub translation_step: f64,
    pub rotation_step: f64,
    pub max_steps: u32,
    pub home: GripperPose,
    /// Objects spawn uniformly within `home ± spawn_half_extent` in x and y.
    pub spawn_half_extent: f64,
    /// Fingers must be at or below this height for a grasp.
    pub grasp_height: f64,
    /// Height the gripper is lifted to after a closed grasp.
    pub success_height: f64,
    /// Jaw opening of the open gripper.
    pub aperture: f64,
    /// Half side of the table square seen by the wrist camera.
    pub wrist_half_extent: f64,
    /// Sub-samples per pixel side for anti-aliased rendering.
    pub supersample: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            translation_step: 0.05,
            rotation_step: FRAC_PI_8,
            max_steps: 50,
            home: GripperPose {
                x: 0.5,
                y: 0.5,
                z: 0.15,
                yaw: 0.0,
            },
            spawn_half_extent: 0.2,
            grasp_height: 0.1,
            success_height: 0.6,
            aperture: 0.12,
            wrist_half_extent: 0.2,
            supersample: 3,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let h = self.home;
        let ok = self.image_size >= 4
            && self.translation_step > 0.0
            && self.rotation_step > 0.0
            && self.max_steps >= 1
            && (0.0..=1.0).contains(&h.x)
            && (0.0..=1.0).contains(&h.y)
            && (0.0..=1.0).contains(&h.z)
            && h.yaw.abs() <= FRAC_PI_2
            && self.spawn_half_extent >= 0.0
            && h.x - self.spawn_half_extent >= 0.0
            && h.x + self.spawn_half_extent <= 1.0
            && h.y - self.spawn_half_extent >= 0.0
            && h.y + self.spawn_half_extent <= 1.0
            && self.success_height <= 1.0
            && self.aperture > 0.0
            && self.wrist_half_extent > 0.0
            && self.supersample >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!("invalid world configuration {self:?}")))
        }
    }
}

/// Stateless simulator: every method is a pure function of its arguments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraspWorld {
    pub config: WorldConfig,
}

impl GraspWorld {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Gripper at home and open, object uniformly placed in the spawn square.
    pub fn reset_state(&self, seed: u64, kind: ObjectKind) -> WorldState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &self.config;
        let r = c.spawn_half_extent;
        let sample = |rng: &mut ChaCha8Rng, mid: f64| {
            if r > 0.0 {
                rng.gen_range(mid - r..=mid + r)
            } else {
                mid
            }
        };
        let x = sample(&mut rng, c.home.x);
        let y = sample(&mut rng, c.home.y);
        let yaw = rng.gen_range(-PI..PI);
        WorldState {
            gripper: c.home,
            gripper_open: true,
            object_kind: kind,
            object: ObjectPose { x, y, yaw },
            object_held: false,
            step_count: 0,
            contact_rewarded: false,
            terminal: false,
        }
    }

    pub fn reset(&self, seed: u64, kind: ObjectKind) -> (WorldState, Observation) {
        let s = self.reset_state(seed, kind);
        let o = self.observe(&s);
        (s, o)
    }

    pub fn observe(&self, state: &WorldState) -> Observation {
        Observation {
            overhead: render_overhead(&self.config, state),
            wrist: render_wrist(&self.config, state),
            motor: motor_vector(&self.config, state),
        }
    }

    /// Jaw rectangle of the open gripper in table coordinates.
    pub fn jaw_region(&self, state: &WorldState) -> Shape {
        let g = state.gripper;
        Shape::Rect {
            center: Vec2::new(g.x, g.y),
            angle: g.yaw,
            half_u: self.config.aperture / 2.0 + FINGER_THICKNESS / 2.0,
            half_v: FINGER_HALF_LENGTH,
        }
    }

    /// Fingers reach the object's height and the jaw region overlaps its footprint.
    pub fn contact_check(&self, state: &WorldState) -> bool {
        state.gripper.z <= state.object_kind.height()
            && self
                .jaw_region(state)
                .intersects(&state.object_kind.footprint(&state.object))
    }

    /// Whether closing the gripper now would hold the object.
    pub fn graspable(&self, state: &WorldState) -> bool {
        let g = state.gripper;
        if !state.gripper_open || g.z > self.config.grasp_height + EDGE_EPS {
            return false;
        }
        let kind = state.object_kind;
        let (u_axis, v_axis) = geometry::frame(g.yaw);
        let d = Vec2::new(state.object.x - g.x, state.object.y - g.y);
        let (cap_u, cap_v) = kind.capture_half_extents();
        d.dot(u_axis).abs() <= cap_u
            && d.dot(v_axis).abs() <= cap_v
            && kind.width_across(state.object.yaw, g.yaw) <= self.config.aperture
    }

    /// Held object lifted to at least the success height.
    pub fn is_success(&self, state: &WorldState) -> bool {
        state.object_held && state.gripper.z >= self.config.success_height - EDGE_EPS
    }

    pub fn step(&self, state: &WorldState, action: Action) -> Result<(WorldState, StepOutcome)> {
        if state.terminal {
            return Err(Error::TerminalState);
        }
        let c = &self.config;
        let mut next = state.clone();
        next.step_count += 1;
        let first_contact = !state.contact_rewarded;

        let event = if action == Action::Close {
            next.terminal = true;
            if self.graspable(state) {
                next.object_held = true;
                next.gripper_open = false;
                next.gripper.z = next.gripper.z.max(c.success_height);
                if self.is_success(&next) {
                    Event::Success
                } else {
                    Event::Partial
                }
            } else {
                let touching = self.contact_check(state);
                next.gripper_open = false;
                if touching {
                    Event::Partial
                } else {
                    Event::Failure
                }
            }
        } else {
            let mut g = state.gripper;
            let (t, r) = (c.translation_step, c.rotation_step);
            match action {
                Action::XPlus => g.x += t,
                Action::XMinus => g.x -= t,
                Action::YPlus => g.y += t,
                Action::YMinus => g.y -= t,
                Action::ZPlus => g.z += t,
                Action::ZMinus => g.z -= t,
                Action::YawPlus => g.yaw += r,
                Action::YawMinus => g.yaw -= r,
                Action::Close => unreachable!(),
            }
            let inside = |v: f64, lo: f64, hi: f64| v >= lo - EDGE_EPS && v <= hi + EDGE_EPS;
            if inside(g.x, 0.0, 1.0)
                && inside(g.y, 0.0, 1.0)
                && inside(g.z, 0.0, 1.0)
                && inside(g.yaw, -FRAC_PI_2, FRAC_PI_2)
            {
                g.x = g.x.clamp(0.0, 1.0);
                g.y = g.y.clamp(0.0, 1.0);
                g.z = g.z.clamp(0.0, 1.0);
                g.yaw = g.yaw.clamp(-FRAC_PI_2, FRAC_PI_2);
                next.gripper = g;
                if first_contact && self.contact_check(&next) {
                    Event::Contact
                } else {
                    Event::Executed
                }
            } else {
                Event::NotExecuted
            }
        };

        let reward = reward(RewardContext {
            event,
            first_contact,
        });
        if reward == CONTACT_REWARD {
            next.contact_rewarded = true;
        }
        if next.step_count >= c.max_steps {
            next.terminal = true;
        }
        Ok((
            next.clone(),
            StepOutcome {
                reward,
                terminal: next.terminal,
                event,
            },
        ))
    }
}

/// `[x, y, z, yaw/π + 1/2, aperture fraction]`.
pub fn motor_vector(_config: &WorldConfig, state: &WorldState) -> Tensor {
    let g = state.gripper;
    let aperture = if state.gripper_open { 1.0 } else { 0.0 };
    Tensor::vector(alloc::vec![g.x, g.y, g.z, g.yaw / PI + 0.5, aperture])
}
