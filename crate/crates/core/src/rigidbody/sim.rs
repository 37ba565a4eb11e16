use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::mass::{mass_properties, MassProperties};
use crate::error::{Error, Result};
use crate::model::{Pose, PrimitiveObject, Trajectory, NUM_INTERACTIONS, TIME_STEP, TRAJECTORY_LEN};

/// Magnitude of the interaction force, in newtons.
pub const FORCE_MAGNITUDE: f64 = 1e5;

/// Simulation parameters. The defaults are the values every dataset is
/// generated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub steps: usize,
    pub gravity: f64,
    pub gravity_enabled: bool,
    pub ground_enabled: bool,
    pub ground_z: f64,
    pub friction: f64,
    pub restitution: f64,
    pub baumgarte: f64,
    pub solver_iterations: usize,
    pub force: f64,
    /// Penetration allowed before positional correction kicks in.
    pub slop: f64,
    /// Corners closer than this to the ground become speculative contacts.
    pub contact_margin: f64,
    /// Rollouts faster than this are reported as diverged.
    pub max_speed: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: TIME_STEP,
            steps: TRAJECTORY_LEN,
            gravity: 9.8,
            gravity_enabled: true,
            ground_enabled: true,
            ground_z: -0.5,
            friction: 0.5,
            restitution: 0.0,
            baumgarte: 0.2,
            solver_iterations: 10,
            force: FORCE_MAGNITUDE,
            slop: 1e-4,
            contact_margin: 1e-3,
            max_speed: 1e3,
        }
    }
}

impl SimConfig {
    /// No gravity and no ground.
    pub fn free_flight() -> Self {
        SimConfig {
            gravity_enabled: false,
            ground_enabled: false,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::Config(format!("sim: {reason}")));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.friction < 0.0 || !(0.0..=1.0).contains(&self.restitution) {
            return bad("friction must be >= 0 and restitution in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.baumgarte) || self.solver_iterations == 0 {
            return bad("baumgarte must be in [0, 1] and solver_iterations positive");
        }
        Ok(())
    }

    /// Impulse delivered by one interaction.
    pub fn impulse_magnitude(&self) -> f64 {
        self.force * self.dt
    }
}

/// A push from one of the four canonical source points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub id: usize,
    pub source: Vector3<f64>,
}

impl Interaction {
    pub const SOURCES: [[f64; 3]; NUM_INTERACTIONS] = [
        [1.0, -1.0, 1.0],
        [-1.0, -1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, -1.0, -1.0],
    ];

    pub fn canonical(id: usize) -> Result<Self> {
        let s = Self::SOURCES
            .get(id)
            .ok_or_else(|| Error::domain(format!("interaction id {id} outside 0..{NUM_INTERACTIONS}")))?;
        Ok(Interaction {
            id,
            source: Vector3::from(*s),
        })
    }

    pub fn all() -> [Interaction; NUM_INTERACTIONS] {
        std::array::from_fn(|i| Interaction {
            id: i,
            source: Vector3::from(Self::SOURCES[i]),
        })
    }

    /// Impulse and application point for an object at rest in its own frame.
    pub fn impulse(&self, object: &PrimitiveObject, mass: &MassProperties, config: &SimConfig) -> Impulse {
        let to_com = mass.center_of_mass - self.source;
        let direction = to_com.normalize();
        let point = ray_hit(object, &self.source, &direction).unwrap_or(mass.center_of_mass);
        Impulse {
            point,
            impulse: direction * config.impulse_magnitude(),
        }
    }
}

/// An instantaneous impulse at a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impulse {
    pub point: Vector3<f64>,
    pub impulse: Vector3<f64>,
}

/// First intersection of a ray with any primitive (slab test).
pub fn ray_hit(object: &PrimitiveObject, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Vector3<f64>> {
    let mut best: Option<f64> = None;
    for p in object.primitives() {
        let inv = p.rotation().inverse();
        let o = inv * (origin - p.translation());
        let d = inv * dir;
        let h = p.half_extents();
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut miss = false;
        for a in 0..3 {
            if d[a].abs() < 1e-15 {
                if o[a].abs() > h[a] {
                    miss = true;
                    break;
                }
                continue;
            }
            let (ta, tb) = ((-h[a] - o[a]) / d[a], (h[a] - o[a]) / d[a]);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        if miss || t0 > t1 || t1 < 0.0 {
            continue;
        }
        let t = t0.max(0.0);
        if best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best.map(|t| origin + dir * t)
}

/// Dynamic state of the composite body in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub velocity: Vector3<f64>,
    /// Angular momentum about the center of mass.
    pub angular_momentum: Vector3<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Contact {
    corner: usize,
    r: Vector3<f64>,
    normal_mass: f64,
    tangent_mass: [f64; 2],
    target: f64,
    lambda: [f64; 3],
}

const TANGENTS: [Vector3<f64>; 2] = [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];

/// Steps a composite object as a single rigid body.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    mass: MassProperties,
    inv_inertia_body: Matrix3<f64>,
    /// Corner positions relative to the center of mass, body frame.
    corners: Vec<Vector3<f64>>,
    state: BodyState,
    warm: Vec<Option<[f64; 3]>>,
    contacts: Vec<Contact>,
    step: usize,
}

impl Simulator {
    pub fn new(object: &PrimitiveObject, config: &SimConfig) -> Result<Self> {
        let mass = mass_properties(object)?;
        Self::with_mass(object, mass, config)
    }

    /// Builds a simulator from precomputed mass properties. The object is
    /// only used for its corners.
    pub fn with_mass(object: &PrimitiveObject, mass: MassProperties, config: &SimConfig) -> Result<Self> {
        config.validate()?;
        if !mass.is_physical() {
            return Err(Error::domain("mass properties are not physical"));
        }
        let inv_inertia_body = mass
            .inertia
            .try_inverse()
            .ok_or_else(|| Error::domain("singular inertia tensor"))?;
        let corners: Vec<Vector3<f64>> = object
            .primitives()
            .iter()
            .flat_map(|p| p.corners())
            .map(|c| c - mass.center_of_mass)
            .collect();
        if config.ground_enabled {
            let lowest = corners
                .iter()
                .map(|c| c.z + mass.center_of_mass.z)
                .fold(f64::INFINITY, f64::min);
            if (lowest - config.ground_z).abs() > 1e-6 {
                return Err(Error::domain(format!(
                    "object must rest on the ground at z = {}, lowest point is {lowest}",
                    config.ground_z
                )));
            }
        }
        let n = corners.len();
        Ok(Simulator {
            config: config.clone(),
            mass,
            inv_inertia_body,
            corners,
            state: BodyState {
                position: mass.center_of_mass,
                orientation: UnitQuaternion::identity(),
                velocity: Vector3::zeros(),
                angular_momentum: Vector3::zeros(),
            },
            warm: vec![None; n],
            contacts: Vec::with_capacity(n),
            step: 0,
        })
    }

    pub fn mass(&self) -> &MassProperties {
        &self.mass
    }

    pub fn state(&self) -> &BodyState {
        &self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn linear_momentum(&self) -> Vector3<f64> {
        self.state.velocity * self.mass.mass
    }

    pub fn angular_momentum(&self) -> Vector3<f64> {
        self.state.angular_momentum
    }

    pub fn angular_velocity(&self) -> Vector3<f64> {
        self.world_inv_inertia() * self.state.angular_momentum
    }

    /// Pose of the object frame.
    pub fn pose(&self) -> Pose {
        let q = self.state.orientation;
        Pose::new(self.state.position - q * self.mass.center_of_mass, q)
    }

    pub fn apply_impulse(&mut self, impulse: &Impulse) {
        let r = impulse.point - self.state.position;
        self.state.velocity += impulse.impulse / self.mass.mass;
        self.state.angular_momentum += r.cross(&impulse.impulse);
    }

    fn world_inv_inertia(&self) -> Matrix3<f64> {
        let r = self.state.orientation.to_rotation_matrix().into_inner();
        r * self.inv_inertia_body * r.transpose()
    }

    /// Advances one step and returns the resulting pose.
    pub fn step(&mut self) -> Result<Pose> {
        let dt = self.config.dt;
        if self.config.gravity_enabled {
            self.state.velocity.z -= self.config.gravity * dt;
        }
        let inv_i = self.world_inv_inertia();
        let mut omega = inv_i * self.state.angular_momentum;
        if self.config.ground_enabled {
            omega = self.solve_contacts(&inv_i, omega);
        }

        self.state.position += self.state.velocity * dt;
        let q = UnitQuaternion::from_scaled_axis(omega * dt) * self.state.orientation;
        self.state.orientation = UnitQuaternion::new_normalize(q.into_inner());

        let step = self.step;
        self.step += 1;
        let s = &self.state;
        let finite = s.position.iter().chain(s.velocity.iter()).chain(s.angular_momentum.iter()).all(|v| v.is_finite())
            && s.orientation.coords.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Simulation {
                step,
                reason: "non-finite state".into(),
            });
        }
        let speed = s.velocity.norm();
        if speed > self.config.max_speed {
            return Err(Error::Simulation {
                step,
                reason: format!("speed {speed:.3e} exceeds {:.0e}", self.config.max_speed),
            });
        }
        Ok(self.pose())
    }

    fn solve_contacts(&mut self, inv_i: &Matrix3<f64>, mut omega: Vector3<f64>) -> Vector3<f64> {
        let cfg = &self.config;
        let dt = cfg.dt;
        let inv_m = 1.0 / self.mass.mass;
        let rot = self.state.orientation.to_rotation_matrix();
        let x = self.state.position;
        let mut v = self.state.velocity;
        let mut l = self.state.angular_momentum;

        let effective = |r: &Vector3<f64>, dir: &Vector3<f64>| {
            let rn = r.cross(dir);
            inv_m + rn.dot(&(inv_i * rn))
        };

        self.contacts.clear();
        for (corner, rb) in self.corners.iter().enumerate() {
            let r = rot * rb;
            let sep = x.z + r.z - cfg.ground_z;
            let vn = v.z + omega.cross(&r).z;
            if sep >= cfg.contact_margin + (-vn).max(0.0) * dt {
                continue;
            }
            let mut target = if sep > 0.0 {
                -sep / dt
            } else {
                cfg.baumgarte / dt * (-sep - cfg.slop).max(0.0)
            };
            if cfg.restitution > 0.0 && vn < -1e-2 {
                target = target.max(-cfg.restitution * vn);
            }
            self.contacts.push(Contact {
                corner,
                r,
                normal_mass: 1.0 / effective(&r, &Vector3::z()),
                tangent_mass: [1.0 / effective(&r, &TANGENTS[0]), 1.0 / effective(&r, &TANGENTS[1])],
                target,
                lambda: self.warm[corner].unwrap_or([0.0; 3]),
            });
        }
        self.warm.iter_mut().for_each(|w| *w = None);

        let apply = |v: &mut Vector3<f64>, l: &mut Vector3<f64>, r: &Vector3<f64>, p: Vector3<f64>| {
            *v += p * inv_m;
            *l += r.cross(&p);
        };

        for c in &self.contacts {
            let p = Vector3::new(c.lambda[1], c.lambda[2], c.lambda[0]);
            if p != Vector3::zeros() {
                apply(&mut v, &mut l, &c.r, p);
            }
        }
        omega = inv_i * l;

        for _ in 0..cfg.solver_iterations {
            for c in self.contacts.iter_mut() {
                let vn = v.z + omega.cross(&c.r).z;
                let new = (c.lambda[0] + (c.target - vn) * c.normal_mass).max(0.0);
                let d = new - c.lambda[0];
                c.lambda[0] = new;
                apply(&mut v, &mut l, &c.r, Vector3::z() * d);
                omega = inv_i * l;

                let limit = cfg.friction * c.lambda[0];
                for (k, t) in TANGENTS.iter().enumerate() {
                    let vt = (v + omega.cross(&c.r)).dot(t);
                    let new = (c.lambda[k + 1] - vt * c.tangent_mass[k]).clamp(-limit, limit);
                    let d = new - c.lambda[k + 1];
                    c.lambda[k + 1] = new;
                    apply(&mut v, &mut l, &c.r, t * d);
                    omega = inv_i * l;
                }
            }
        }

        for c in &self.contacts {
            self.warm[c.corner] = Some(c.lambda);
        }
        self.state.velocity = v;
        self.state.angular_momentum = l;
        omega
    }

    /// Runs the configured number of steps and collects the poses.
    pub fn run(mut self, interaction_id: usize) -> Result<Trajectory> {
        let poses = (0..self.config.steps).map(|_| self.step()).collect::<Result<Vec<_>>>()?;
        Trajectory::new(poses, self.config.dt, interaction_id)
    }
}

/// Rolls out one canonical interaction.
pub fn simulate(object: &PrimitiveObject, interaction: &Interaction, config: &SimConfig) -> Result<Trajectory> {
    let mass = mass_properties(object)?;
    simulate_with_mass(object, &mass, interaction, config)
}

pub fn simulate_with_mass(
    object: &PrimitiveObject,
    mass: &MassProperties,
    interaction: &Interaction,
    config: &SimConfig,
) -> Result<Trajectory> {
    let mut sim = Simulator::with_mass(object, *mass, config)?;
    sim.apply_impulse(&interaction.impulse(object, mass, config));
    sim.run(interaction.id)
}

/// Rolls out the four canonical interactions in index order.
pub fn simulate_all(object: &PrimitiveObject, config: &SimConfig) -> Result<Vec<Trajectory>> {
    let mass = mass_properties(object)?;
    Interaction::all()
        .iter()
        .map(|i| simulate_with_mass(object, &mass, i, config))
        .collect()
}
