//! Planar vehicle physics: point mass, rectangular rigid body, a front-wheel
//! drive dynamic bicycle model, environmental forces and pairwise links.
//!
//! All integrators are semi-implicit Euler: the new acceleration is applied to
//! the velocity first and the new velocity moves the position.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec2};
use crate::map::Lane;

/// Penalty stiffness for rectangle overlap (N/m).
pub const CONTACT_STIFFNESS: f64 = 1.0e5;
/// Folded ½ρC_dA for a compact car (kg/m).
pub const DEFAULT_DRAG_COEFFICIENT: f64 = 0.4;
pub const DEFAULT_MASS: f64 = 1500.0;
pub const DEFAULT_CORNERING_STIFFNESS: f64 = 8.0e4;
pub const DEFAULT_WHEEL_RADIUS: f64 = 0.3;
/// Acceleration the default motor torque limit can produce at default mass.
pub const DEFAULT_MAX_ACCELERATION: f64 = 6.0;
pub const DEFAULT_MAX_STEER: f64 = 0.6;

/// Below this longitudinal speed the slip-angle denominator is held constant.
const SLIP_SPEED_FLOOR: f64 = 5.0;
/// Tyre lateral forces fade in linearly up to this speed.
const GRIP_BLEND_SPEED: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMassState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub mass: f64,
}

impl PointMassState {
    pub fn at_rest(position: Vec2, mass: f64) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            acceleration: Vec2::ZERO,
            mass,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.acceleration.is_finite() && self.mass.is_finite()
    }
}

/// A 2D rectangle with mass. `half_extents.x` lies along the heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub linear: PointMassState,
    pub rotation: f64,
    pub angular_velocity: f64,
    pub angular_acceleration: f64,
    pub moment_of_inertia: f64,
    pub half_extents: Vec2,
}

impl RigidBodyState {
    /// Box of `length × width` with default mass and the matching inertia.
    pub fn vehicle(length: f64, width: f64, position: Vec2, rotation: f64, velocity: Vec2) -> Self {
        let mass = DEFAULT_MASS;
        Self {
            linear: PointMassState {
                position,
                velocity,
                acceleration: Vec2::ZERO,
                mass,
            },
            rotation,
            angular_velocity: 0.0,
            angular_acceleration: 0.0,
            moment_of_inertia: mass * (length * length + width * width) / 12.0,
            half_extents: Vec2::new(length / 2.0, width / 2.0),
        }
    }

    pub fn position(&self) -> Vec2 {
        self.linear.position
    }

    pub fn velocity(&self) -> Vec2 {
        self.linear.velocity
    }

    pub fn speed(&self) -> f64 {
        self.linear.velocity.norm()
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.rotation)
    }

    /// Speed along the body heading.
    pub fn longitudinal_speed(&self) -> f64 {
        self.linear.velocity.dot(self.heading())
    }

    pub fn length(&self) -> f64 {
        2.0 * self.half_extents.x
    }

    pub fn is_finite(&self) -> bool {
        self.linear.is_finite()
            && self.rotation.is_finite()
            && self.angular_velocity.is_finite()
            && self.angular_acceleration.is_finite()
    }

    /// Half of the body's extent when projected on `axis` (unit vector).
    fn half_projection(&self, axis: Vec2) -> f64 {
        let h = self.heading();
        self.half_extents.x * h.dot(axis).abs() + self.half_extents.y * h.perp().dot(axis).abs()
    }

    /// True when `p` lies inside the rectangle (boundary inclusive).
    pub fn contains_point(&self, p: Vec2) -> bool {
        let h = self.heading();
        let rel = p - self.linear.position;
        rel.dot(h).abs() <= self.half_extents.x && rel.dot(h.perp()).abs() <= self.half_extents.y
    }
}

/// Dynamic bicycle-model parameters of a front-wheel drive vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    /// Distance from the centre of mass forward to the front axle.
    pub front_axle_offset: f64,
    pub cornering_stiffness_front: f64,
    pub cornering_stiffness_rear: f64,
    pub wheel_radius: f64,
    pub max_motor_torque: f64,
    pub max_steer: f64,
    pub drag_area_coefficient: f64,
}

impl VehicleParams {
    /// Rough parameters for a vehicle known only by its footprint.
    pub fn from_dimensions(length: f64, _width: f64) -> Self {
        let wheelbase = 0.6 * length;
        Self {
            wheelbase,
            front_axle_offset: wheelbase / 2.0,
            cornering_stiffness_front: DEFAULT_CORNERING_STIFFNESS,
            cornering_stiffness_rear: DEFAULT_CORNERING_STIFFNESS,
            wheel_radius: DEFAULT_WHEEL_RADIUS,
            max_motor_torque: DEFAULT_MASS * DEFAULT_MAX_ACCELERATION * DEFAULT_WHEEL_RADIUS,
            max_steer: DEFAULT_MAX_STEER,
            drag_area_coefficient: DEFAULT_DRAG_COEFFICIENT,
        }
    }

    pub fn rear_axle_offset(&self) -> f64 {
        self.wheelbase - self.front_axle_offset
    }
}

/// External force acting on a body from its surroundings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvForce {
    pub force: Vec2,
    pub torque: f64,
    pub magnitude: f64,
}

impl EnvForce {
    pub fn new(force: Vec2, torque: f64) -> Self {
        Self {
            force,
            torque,
            magnitude: force.norm(),
        }
    }
}

pub fn step_point_mass(s: &PointMassState, net_force: Vec2, dt: f64) -> PointMassState {
    let acceleration = net_force / s.mass;
    let velocity = s.velocity + acceleration * dt;
    PointMassState {
        position: s.position + velocity * dt,
        velocity,
        acceleration,
        mass: s.mass,
    }
}

pub fn step_rigid_body(s: &RigidBodyState, net_force: Vec2, net_torque: f64, dt: f64) -> RigidBodyState {
    let angular_acceleration = net_torque / s.moment_of_inertia;
    let angular_velocity = s.angular_velocity + angular_acceleration * dt;
    RigidBodyState {
        linear: step_point_mass(&s.linear, net_force, dt),
        rotation: wrap_angle(s.rotation + angular_velocity * dt),
        angular_velocity,
        angular_acceleration,
        moment_of_inertia: s.moment_of_inertia,
        half_extents: s.half_extents,
    }
}

/// Force (world frame) and yaw torque produced by the drivetrain and tyres.
///
/// The drive force `motor_torque / wheel_radius` acts along the steered front
/// wheel. Lateral tyre forces are linear in slip angle. Inputs beyond the
/// vehicle limits are clamped.
pub fn vehicle_forces(s: &RigidBodyState, p: &VehicleParams, motor_torque: f64, steer: f64) -> (Vec2, f64) {
    let motor_torque = motor_torque.clamp(-p.max_motor_torque, p.max_motor_torque);
    let steer = steer.clamp(-p.max_steer, p.max_steer);
    let heading = s.heading();
    let left = heading.perp();
    let u = s.linear.velocity.dot(heading);
    let w = s.linear.velocity.dot(left);
    let a = p.front_axle_offset;
    let b = p.rear_axle_offset();
    let omega = s.angular_velocity;

    let u_eff = u.abs().max(SLIP_SPEED_FLOOR);
    let grip = (u.abs() / GRIP_BLEND_SPEED).min(1.0);
    let slip_front = (w + a * omega).atan2(u_eff) - steer;
    let slip_rear = (w - b * omega).atan2(u_eff);
    let lateral_front = -p.cornering_stiffness_front * slip_front * grip;
    let lateral_rear = -p.cornering_stiffness_rear * slip_rear * grip;

    let drive = motor_torque / p.wheel_radius;
    let (sin, cos) = steer.sin_cos();
    let fx = drive * cos - lateral_front * sin;
    let front_y = drive * sin + lateral_front * cos;
    let fy = front_y + lateral_rear;
    let torque = a * front_y - b * lateral_rear;
    (heading * fx + left * fy, torque)
}

/// Quadratic air drag plus contact forces from every overlapping body.
pub fn environment_forces(body: &RigidBodyState, p: &VehicleParams, others: &[RigidBodyState]) -> EnvForce {
    let v = body.linear.velocity;
    let mut force = v * (-p.drag_area_coefficient * v.norm());
    for other in others {
        force += collision_force(body, other);
    }
    EnvForce::new(force, 0.0)
}

/// Penalty force on `a` from `b` with the default stiffness.
pub fn collision_force(a: &RigidBodyState, b: &RigidBodyState) -> Vec2 {
    collision_force_with_stiffness(a, b, CONTACT_STIFFNESS)
}

/// Linear penalty force on `a` along the minimum translation axis of the
/// oriented-rectangle overlap; zero when the rectangles are disjoint.
pub fn collision_force_with_stiffness(a: &RigidBodyState, b: &RigidBodyState, stiffness: f64) -> Vec2 {
    // Evaluate in a canonical argument order so that swapping the bodies
    // yields exactly the negated force.
    if canonical_order(a, b) == std::cmp::Ordering::Greater {
        -penetration(b, a).map_or(Vec2::ZERO, |(depth, n)| n * (stiffness * depth))
    } else {
        penetration(a, b).map_or(Vec2::ZERO, |(depth, n)| n * (stiffness * depth))
    }
}

fn canonical_order(a: &RigidBodyState, b: &RigidBodyState) -> std::cmp::Ordering {
    let key = |s: &RigidBodyState| {
        [
            s.linear.position.x,
            s.linear.position.y,
            s.rotation,
            s.half_extents.x,
            s.half_extents.y,
        ]
    };
    key(a)
        .iter()
        .zip(key(b).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Separating-axis test. Returns penetration depth and the unit normal
/// pointing from `b` towards `a`, or `None` when disjoint or touching.
pub fn penetration(a: &RigidBodyState, b: &RigidBodyState) -> Option<(f64, Vec2)> {
    let ha = a.heading();
    let hb = b.heading();
    let axes = [ha, ha.perp(), hb, hb.perp()];
    let centre = a.linear.position - b.linear.position;
    let mut best: Option<(f64, Vec2)> = None;
    for axis in axes {
        let d = centre.dot(axis);
        let overlap = a.half_projection(axis) + b.half_projection(axis) - d.abs();
        if overlap <= 0.0 {
            return None;
        }
        if best.is_none_or(|(depth, _)| overlap < depth) {
            let normal = if d < 0.0 { -axis } else { axis };
            best = Some((overlap, normal));
        }
    }
    best
}

/// Bumper-to-bumper distance from `a` to `b` along `lane_of_a`, when `b` is
/// on that lane and ahead of `a`.
pub fn headway(a: &RigidBodyState, b: &RigidBodyState, lane_of_a: &Lane) -> Option<f64> {
    let pa = lane_of_a.project(a.linear.position);
    let pb = lane_of_a.project(b.linear.position);
    if !pb.within || pb.offset.abs() > lane_of_a.width / 2.0 || pb.s <= pa.s {
        return None;
    }
    let along = |s: &RigidBodyState, lane_heading: f64| {
        let rel = s.rotation - lane_heading;
        s.half_extents.x * rel.cos().abs() + s.half_extents.y * rel.sin().abs()
    };
    let gap = pb.s - pa.s - along(a, pa.heading) - along(b, pb.heading);
    Some(gap.max(0.0))
}
