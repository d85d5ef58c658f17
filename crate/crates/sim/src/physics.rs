//! Marbles sliding on a tilting plate.
//!
//! Translational disc-on-plane model integrated with semi-implicit Euler.
//! Gravity's in-plane component drives the marbles, Coulomb friction with
//! separate static and dynamic coefficients opposes them, and linear damping
//! bleeds speed. Ring walls, gate edges, the rim and other marbles are
//! resolved with impulses after every substep.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, PhysicsError};
use crate::geometry::MazeGeometry;

/// Largest tilt magnitude per axis, degrees.
pub const MAX_TILT_DEG: f64 = 5.0;
/// Tilt change per rotation action, degrees.
pub const TILT_STEP_DEG: f64 = 1.0;
/// Speeds below this count as resting for the static-friction rule.
pub const V_EPS: f64 = 1e-4;
/// Control interval of the 4.3 Hz camera loop, seconds.
pub const CONTROL_INTERVAL: f64 = 0.233;
pub const DEFAULT_SUBSTEPS: usize = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_polar(r: f64, angle: f64) -> Self {
        Vec2::new(r * angle.cos(), r * angle.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub mu_static: f64,
    pub mu_dynamic: f64,
    /// Linear velocity damping rate, 1/s.
    pub damping: f64,
    /// kg. Carried for completeness; every force in the sliding model
    /// scales with mass, so it cancels from the accelerations.
    pub marble_mass: f64,
    pub restitution: f64,
    pub gravity: f64,
}

impl PhysicsParams {
    pub fn nominal() -> Self {
        PhysicsParams {
            mu_static: 0.015,
            mu_dynamic: 0.010,
            damping: 0.3,
            marble_mass: 0.005,
            restitution: 0.3,
            gravity: 9.81,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::InvalidPhysics(m.to_string()));
        if !(self.mu_dynamic >= 0.0) || !(self.mu_static >= self.mu_dynamic) {
            return bad("need mu_static >= mu_dynamic >= 0");
        }
        if !(self.damping >= 0.0) {
            return bad("damping must be non-negative");
        }
        if !(self.marble_mass > 0.0) {
            return bad("marble mass must be positive");
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return bad("restitution must lie in [0, 1]");
        }
        if !(self.gravity > 0.0) {
            return bad("gravity must be positive");
        }
        Ok(())
    }
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Plate orientation in degrees about the x and y axes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tilt {
    pub x: f64,
    pub y: f64,
}

impl Tilt {
    pub fn new(x: f64, y: f64) -> Self {
        Tilt { x, y }
    }

    pub fn lerp(self, to: Tilt, t: f64) -> Tilt {
        Tilt::new(self.x + (to.x - self.x) * t, self.y + (to.y - self.y) * t)
    }

    /// In-plane gravity (m/s^2) and the normal component of gravity.
    ///
    /// Rotating about +x lifts the +y edge, so marbles accelerate towards -y;
    /// rotating about +y lowers the +x edge.
    pub fn gravity_components(self, g: f64) -> (Vec2, f64) {
        let (sx, cx) = self.x.to_radians().sin_cos();
        let (sy, cy) = self.y.to_radians().sin_cos();
        (Vec2::new(g * sy, -g * sx), g * cx * cy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    TiltXPos = 0,
    TiltXNeg = 1,
    TiltYPos = 2,
    TiltYNeg = 3,
    NoOp = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::TiltXPos,
        Action::TiltXNeg,
        Action::TiltYPos,
        Action::TiltYNeg,
        Action::NoOp,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Action> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Applies one rotation increment, clamped to the tilt limit.
pub fn apply_action(tilt: Tilt, action: Action) -> Tilt {
    let clamp = |v: f64| v.clamp(-MAX_TILT_DEG, MAX_TILT_DEG);
    match action {
        Action::TiltXPos => Tilt::new(clamp(tilt.x + TILT_STEP_DEG), tilt.y),
        Action::TiltXNeg => Tilt::new(clamp(tilt.x - TILT_STEP_DEG), tilt.y),
        Action::TiltYPos => Tilt::new(tilt.x, clamp(tilt.y + TILT_STEP_DEG)),
        Action::TiltYNeg => Tilt::new(tilt.x, clamp(tilt.y - TILT_STEP_DEG)),
        Action::NoOp => tilt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marble {
    pub pos: Vec2,
    pub vel: Vec2,
    /// Region the marble is recorded in; changes only through gate events.
    pub ring: usize,
}

impl Marble {
    pub fn at_rest(pos: Vec2, ring: usize) -> Self {
        Marble {
            pos,
            vel: Vec2::ZERO,
            ring,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub marbles: Vec<Marble>,
    pub tilt: Tilt,
    pub step_count: u64,
}

impl SimState {
    pub fn new(marbles: Vec<Marble>) -> Self {
        SimState {
            marbles,
            tilt: Tilt::default(),
            step_count: 0,
        }
    }

    pub fn kinetic_energy(&self, mass: f64) -> f64 {
        self.marbles.iter().map(|m| 0.5 * mass * m.vel.norm_sq()).sum()
    }

    pub fn all_home(&self) -> bool {
        self.marbles.iter().all(|m| m.ring == 0)
    }
}

/// A marble center passing a ring boundary through a gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateEvent {
    pub marble_index: usize,
    pub from_ring: usize,
    pub to_ring: usize,
    /// Seconds since the start of the control interval.
    pub substep_time: f64,
}

impl GateEvent {
    pub fn inward(&self) -> bool {
        self.to_ring < self.from_ring
    }

    /// Index of the boundary that was crossed.
    pub fn boundary(&self) -> usize {
        self.from_ring.min(self.to_ring)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub control_interval: f64,
    pub substeps: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator {
            control_interval: CONTROL_INTERVAL,
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

impl Integrator {
    pub fn dt(&self) -> f64 {
        self.control_interval / self.substeps as f64
    }
}

/// Advances the state by one control interval while the plate turns linearly
/// from `state.tilt` to `target`.
pub fn step_physics(
    state: &SimState,
    target: Tilt,
    params: &PhysicsParams,
    geometry: &MazeGeometry,
    integrator: &Integrator,
) -> Result<(SimState, Vec<GateEvent>), PhysicsError> {
    let mut next = state.clone();
    let mut events = Vec::new();
    let n = integrator.substeps.max(1);
    let dt = integrator.control_interval / n as f64;
    let start = state.tilt;
    let mut prev_pos: Vec<Vec2> = Vec::with_capacity(state.marbles.len());

    for k in 0..n {
        let tilt = start.lerp(target, (k + 1) as f64 / n as f64);
        let (drive, g_normal) = tilt.gravity_components(params.gravity);
        prev_pos.clear();
        prev_pos.extend(next.marbles.iter().map(|m| m.pos));
        for m in &mut next.marbles {
            integrate_marble(m, drive, g_normal, params, dt);
        }
        resolve_collisions(&mut next, geometry, params);
        update_rings(&mut next, &prev_pos, geometry, params, k, dt, &mut events);
        for (i, m) in next.marbles.iter().enumerate() {
            if !m.pos.is_finite() || !m.vel.is_finite() {
                return Err(PhysicsError::NumericalBlowup {
                    substep: k,
                    marble: i,
                });
            }
        }
    }
    next.tilt = target;
    next.step_count += 1;
    Ok((next, events))
}

fn integrate_marble(m: &mut Marble, drive: Vec2, g_normal: f64, p: &PhysicsParams, dt: f64) {
    if m.vel.norm() < V_EPS {
        // resting: held by static friction unless the drive exceeds it
        if drive.norm() <= p.mu_static * g_normal {
            m.vel = Vec2::ZERO;
            return;
        }
    }
    let v = m.vel + (drive - m.vel * p.damping) * dt;
    let friction = p.mu_dynamic * g_normal * dt;
    let speed = v.norm();
    m.vel = if speed <= friction {
        Vec2::ZERO
    } else {
        v * (1.0 - friction / speed)
    };
    m.pos += m.vel * dt;
}

/// Removes the approaching normal velocity component, scaled by restitution.
/// `normal` points from the obstacle towards the marble.
fn bounce(vel: &mut Vec2, normal: Vec2, restitution: f64) {
    let vn = vel.dot(normal);
    if vn < 0.0 {
        *vel -= normal * ((1.0 + restitution) * vn);
    }
}

/// Impulse-based contact resolution for rim, ring walls, gate edges and
/// marble pairs. Positions are pushed out along the contact normal.
pub fn resolve_collisions(state: &mut SimState, geometry: &MazeGeometry, params: &PhysicsParams) {
    let rho = geometry.marble_radius();
    let e = params.restitution;
    // a second pass settles wall contacts created by marble pushes
    for _ in 0..2 {
        for m in &mut state.marbles {
            resolve_walls(m, geometry, rho, e);
        }
        let n = state.marbles.len();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = state.marbles.split_at_mut(j);
                resolve_pair(&mut a[i], &mut b[0], rho, e);
            }
        }
    }
    // walls win over residual marble overlap
    for m in &mut state.marbles {
        resolve_walls(m, geometry, rho, e);
    }
}

fn resolve_walls(m: &mut Marble, geometry: &MazeGeometry, rho: f64, e: f64) {
    let d = m.pos.norm();
    let rim = geometry.outer_radius() - rho;
    if d > rim {
        let out = m.pos * (1.0 / d);
        m.pos = out * rim;
        bounce(&mut m.vel, -out, e);
    }
    for (b, boundary) in geometry.boundaries().iter().enumerate() {
        let r = boundary.radius;
        let d = m.pos.norm();
        if (d - r).abs() >= rho {
            continue;
        }
        let angle = m.pos.angle();
        if !boundary.in_gate(angle) {
            if d <= 0.0 {
                continue;
            }
            let radial = m.pos * (1.0 / d);
            if m.ring > b {
                m.pos = radial * (r + rho);
                bounce(&mut m.vel, radial, e);
            } else {
                m.pos = radial * (r - rho);
                bounce(&mut m.vel, -radial, e);
            }
        }
        // gate jambs act as point obstacles
        for g in &boundary.gates {
            for edge_angle in [g.center - g.half_width, g.center + g.half_width] {
                let edge = Vec2::from_polar(r, edge_angle);
                let off = m.pos - edge;
                let dist = off.norm();
                if dist < rho && dist > 0.0 {
                    let n = off * (1.0 / dist);
                    m.pos = edge + n * rho;
                    bounce(&mut m.vel, n, e);
                }
            }
        }
    }
}

fn resolve_pair(a: &mut Marble, b: &mut Marble, rho: f64, e: f64) {
    let off = b.pos - a.pos;
    let dist = off.norm();
    if dist >= 2.0 * rho || dist == 0.0 {
        return;
    }
    let n = off * (1.0 / dist);
    let push = 0.5 * (2.0 * rho - dist);
    a.pos -= n * push;
    b.pos += n * push;
    let vn = (b.vel - a.vel).dot(n);
    if vn < 0.0 {
        let j = 0.5 * (1.0 + e) * vn;
        a.vel += n * j;
        b.vel -= n * j;
    }
}

/// Parameter in [0,1] where segment a->b meets the circle of radius r.
fn circle_crossing(a: Vec2, b: Vec2, r: f64) -> Option<f64> {
    let d = b - a;
    let qa = d.norm_sq();
    if qa == 0.0 {
        return None;
    }
    let qb = 2.0 * a.dot(d);
    let qc = a.norm_sq() - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)]
        .into_iter()
        .filter(|t| (0.0..=1.0).contains(t))
        .reduce(f64::min)
}

fn update_rings(
    state: &mut SimState,
    prev: &[Vec2],
    geometry: &MazeGeometry,
    params: &PhysicsParams,
    substep: usize,
    dt: f64,
    events: &mut Vec<GateEvent>,
) {
    for (i, m) in state.marbles.iter_mut().enumerate() {
        let region = geometry.region_of_radius(m.pos.norm());
        if region == m.ring {
            continue;
        }
        let step_ok = region + 1 == m.ring || m.ring + 1 == region;
        let boundary_idx = region.min(m.ring);
        let boundary = &geometry.boundaries()[boundary_idx];
        let crossing = circle_crossing(prev[i], m.pos, boundary.radius);
        let through_gate = step_ok
            && (boundary.in_gate(m.pos.angle())
                || crossing
                    .map(|t| boundary.in_gate((prev[i] + (m.pos - prev[i]) * t).angle()))
                    .unwrap_or(false));
        if through_gate {
            events.push(GateEvent {
                marble_index: i,
                from_ring: m.ring,
                to_ring: region,
                substep_time: (substep as f64 + crossing.unwrap_or(1.0)) * dt,
            });
            m.ring = region;
        } else {
            // slipped past a wall: put it back on its recorded side
            let (lo, hi) = geometry.region_span(m.ring);
            let d = m.pos.norm();
            let radial = if d > 0.0 {
                m.pos * (1.0 / d)
            } else {
                Vec2::new(1.0, 0.0)
            };
            let target = if d > hi { hi } else { lo.max(0.0) };
            m.pos = radial * target;
            let inward = if d > hi { -radial } else { radial };
            bounce(&mut m.vel, inward, params.restitution);
        }
    }
}
