use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use crate::math::floor;
use crate::world::WorldState;

/// Packed grid cell of a [`WorldState`].
pub type StateCode = u64;

const POSITION_BINS: u64 = 10;
const YAW_BINS: u64 = 8;
const OFFSET_BINS: u64 = 10;
/// Object offsets are binned over `[-OFFSET_RANGE, OFFSET_RANGE]`.
const OFFSET_RANGE: f64 = 0.5;

fn bin(value: f64, lo: f64, hi: f64, bins: u64) -> u64 {
    let t = floor((value - lo) / (hi - lo) * bins as f64);
    if t <= 0.0 {
        0
    } else {
        (t as u64).min(bins - 1)
    }
}

/// Grid code from gripper `(x, y, z, yaw)` and the object position relative
/// to the gripper: 10 bins per axis, 8 yaw bins, plus the gripper/held flags.
pub fn discretize(state: &WorldState) -> StateCode {
    let g = &state.gripper;
    let fields = [
        (bin(g.x, 0.0, 1.0, POSITION_BINS), POSITION_BINS),
        (bin(g.y, 0.0, 1.0, POSITION_BINS), POSITION_BINS),
        (bin(g.z, 0.0, 1.0, POSITION_BINS), POSITION_BINS),
        (bin(g.yaw, -FRAC_PI_2, FRAC_PI_2, YAW_BINS), YAW_BINS),
        (
            bin(state.object.x - g.x, -OFFSET_RANGE, OFFSET_RANGE, OFFSET_BINS),
            OFFSET_BINS,
        ),
        (
            bin(state.object.y - g.y, -OFFSET_RANGE, OFFSET_RANGE, OFFSET_BINS),
            OFFSET_BINS,
        ),
        (state.gripper_open as u64, 2),
        (state.object_held as u64, 2),
    ];
    fields.iter().fold(0, |code, &(v, radix)| code * radix + v)
}

/// Sparse action-value table; unseen states read as all zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    actions: usize,
    rows: BTreeMap<StateCode, Vec<f64>>,
}

impl QTable {
    pub fn new(actions: usize) -> Self {
        Self {
            actions,
            rows: BTreeMap::new(),
        }
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: StateCode) -> Vec<f64> {
        self.rows
            .get(&s)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.actions])
    }

    pub fn get(&self, s: StateCode, a: usize) -> f64 {
        self.rows.get(&s).map_or(0.0, |r| r[a])
    }

    pub fn set(&mut self, s: StateCode, a: usize, value: f64) {
        let n = self.actions;
        self.rows.entry(s).or_insert_with(|| vec![0.0; n])[a] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateCode, &[f64])> {
        self.rows.iter().map(|(&s, r)| (s, r.as_slice()))
    }
}

/// `Q(s,a) += α (r + γ max Q(s',·) − Q(s,a))`, without bootstrap at terminal
/// transitions. Returns the TD error.
#[allow(clippy::too_many_arguments)]
pub fn qtable_update(
    table: &mut QTable,
    s: StateCode,
    a: usize,
    r: f64,
    next: StateCode,
    terminal: bool,
    alpha: f64,
    gamma: f64,
) -> f64 {
    let target = if terminal {
        r
    } else {
        let best = table.row(next).into_iter().fold(f64::NEG_INFINITY, f64::max);
        r + gamma * best
    };
    let old = table.get(s, a);
    let td = target - old;
    table.set(s, a, old + alpha * td);
    td
}
