//! Planar two-legged walker on seeded uneven terrain.
//!
//! The hull is a rigid body carrying two massless legs, each with a hip and a
//! knee joint. Joints are velocity-driven by the controller's actions and the
//! feet interact with the terrain through penalty springs with viscous
//! friction, which is what turns leg motion into hull motion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChannelInfo, Task};
use crate::error::{Error, Result};
use crate::types::{Evaluation, Genome, ObservationMatrix};

const DT: f64 = 0.02;
const GRAVITY: f64 = 10.0;
const HULL_MASS: f64 = 1.0;
const HULL_INERTIA: f64 = 0.5;
const HULL_HALF_HEIGHT: f64 = 0.12;
const THIGH: f64 = 0.5;
const SHIN: f64 = 0.5;
const CONTACT_STIFFNESS: f64 = 400.0;
const CONTACT_DAMPING: f64 = 20.0;
const FRICTION_DAMPING: f64 = 30.0;
const FRICTION_COEFF: f64 = 1.0;
const LINEAR_DRAG: f64 = 0.1;
const ANGULAR_DRAG: f64 = 2.0;
const JOINT_GAIN: f64 = 15.0;
const JOINT_DAMPING: f64 = 6.0;
const HIP_LIMITS: (f64, f64) = (-0.8, 1.1);
const KNEE_LIMITS: (f64, f64) = (-1.6, -0.1);
const PROGRESS_WEIGHT: f64 = 10.0;
const ANGLE_WEIGHT: f64 = 5.0;
const EFFORT_WEIGHT: f64 = 0.028;
const FALL_PENALTY: f64 = -100.0;
const FALL_ANGLE: f64 = 1.0;
const TERRAIN_SPACING: f64 = 1.0;
const START_PAD: f64 = 3.0;
const GAIT_FREQUENCY: f64 = 1.0;
const MAX_PUSH: f64 = 0.3;
const N_INPUTS: usize = 16;
const N_ACTIONS: usize = 4;

pub const CHANNELS: [&str; 12] = [
    "displacement",
    "body_angle",
    "height",
    "vx",
    "hip0",
    "knee0",
    "hip1",
    "knee1",
    "effort",
    "contact0",
    "contact1",
    "airborne",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkerParams {
    pub episodes: u32,
    pub episode_steps: usize,
    pub window: usize,
    pub hidden: usize,
    pub arena_length: f64,
    /// Largest absolute terrain slope.
    pub max_slope: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        Self {
            episodes: 5,
            episode_steps: 300,
            window: 30,
            hidden: 8,
            arena_length: 30.0,
            max_slope: 0.15,
        }
    }
}

/// Piecewise-linear heightfield, flat over the start pad.
#[derive(Debug, Clone)]
pub struct Terrain {
    origin: f64,
    heights: Vec<f64>,
}

impl Terrain {
    pub fn generate<R: Rng + ?Sized>(length: f64, max_slope: f64, rng: &mut R) -> Self {
        let origin = -START_PAD;
        let n = ((length + 2.0 * START_PAD) / TERRAIN_SPACING).ceil() as usize + 1;
        let mut heights = Vec::with_capacity(n);
        let mut h = 0.0;
        for i in 0..n {
            let x = origin + i as f64 * TERRAIN_SPACING;
            if x > START_PAD {
                h += rng.random_range(-max_slope..=max_slope) * TERRAIN_SPACING;
            }
            heights.push(h);
        }
        Self { origin, heights }
    }

    pub fn flat(length: f64) -> Self {
        let n = ((length + 2.0 * START_PAD) / TERRAIN_SPACING).ceil() as usize + 1;
        Self {
            origin: -START_PAD,
            heights: vec![0.0; n],
        }
    }

    pub fn height(&self, x: f64) -> f64 {
        let pos = ((x - self.origin) / TERRAIN_SPACING).max(0.0);
        let i = pos.floor() as usize;
        if i + 1 >= self.heights.len() {
            return *self.heights.last().expect("terrain has points");
        }
        let f = pos - i as f64;
        self.heights[i] + f * (self.heights[i + 1] - self.heights[i])
    }
}

/// Per-episode randomness: the terrain and a horizontal push on the hull.
#[derive(Debug, Clone)]
pub struct EpisodeSetup {
    pub terrain: Terrain,
    pub push: f64,
}

impl EpisodeSetup {
    pub fn generate<R: Rng + ?Sized>(params: &WalkerParams, rng: &mut R) -> Self {
        let terrain = Terrain::generate(params.arena_length, params.max_slope, rng);
        Self {
            terrain,
            push: rng.random_range(-MAX_PUSH..=MAX_PUSH),
        }
    }

    pub fn flat(length: f64) -> Self {
        Self {
            terrain: Terrain::flat(length),
            push: 0.0,
        }
    }
}

/// One hidden-layer tanh controller; the genome holds its weights.
#[derive(Debug, Clone)]
struct Controller<'a> {
    hidden: usize,
    w: &'a [f64],
}

impl<'a> Controller<'a> {
    fn param_count(hidden: usize) -> usize {
        (N_INPUTS + 1) * hidden + (hidden + 1) * N_ACTIONS
    }

    fn act(&self, input: &[f64; N_INPUTS], hidden_buf: &mut [f64]) -> [f64; N_ACTIONS] {
        let (w1, w2) = self.w.split_at((N_INPUTS + 1) * self.hidden);
        for (h, row) in hidden_buf.iter_mut().zip(w1.chunks_exact(N_INPUTS + 1)) {
            let s = row[N_INPUTS] + row[..N_INPUTS].iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            *h = s.tanh();
        }
        let mut out = [0.0; N_ACTIONS];
        for (o, row) in out.iter_mut().zip(w2.chunks_exact(self.hidden + 1)) {
            let s = row[self.hidden] + row[..self.hidden].iter().zip(hidden_buf.iter()).map(|(a, b)| a * b).sum::<f64>();
            *o = s.tanh();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Leg {
    hip: f64,
    knee: f64,
    d_hip: f64,
    d_knee: f64,
}

#[derive(Debug, Clone)]
struct State {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    theta: f64,
    omega: f64,
    legs: [Leg; 2],
    contact: [bool; 2],
}

impl State {
    /// Foot position relative to the hull centre and its absolute velocity.
    fn foot(&self, leg: usize) -> ((f64, f64), (f64, f64)) {
        let l = &self.legs[leg];
        let phi_h = self.theta + l.hip;
        let phi_k = phi_h + l.knee;
        let dphi_h = self.omega + l.d_hip;
        let dphi_k = dphi_h + l.d_knee;
        let rx = THIGH * phi_h.sin() + SHIN * phi_k.sin();
        let ry = -THIGH * phi_h.cos() - SHIN * phi_k.cos();
        let vx = self.vx + THIGH * phi_h.cos() * dphi_h + SHIN * phi_k.cos() * dphi_k;
        let vy = self.vy + THIGH * phi_h.sin() * dphi_h + SHIN * phi_k.sin() * dphi_k;
        ((rx, ry), (vx, vy))
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.vx, self.vy, self.theta, self.omega]
            .iter()
            .all(|v| v.is_finite())
            && self
                .legs
                .iter()
                .all(|l| [l.hip, l.knee, l.d_hip, l.d_knee].iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ending {
    Running,
    Fell,
    Unstable,
}

struct EpisodeResult {
    reward: f64,
    /// `channels × steps`, channel-major.
    trace: Vec<f64>,
    unstable: bool,
}

#[derive(Debug, Clone)]
pub struct Walker {
    params: WalkerParams,
    channels: Vec<ChannelInfo>,
}

impl Walker {
    pub fn new(params: WalkerParams) -> Result<Self> {
        if params.window == 0 || !params.episode_steps.is_multiple_of(params.window) {
            return Err(Error::Config(format!(
                "episode length {} is not a multiple of the averaging window {}",
                params.episode_steps, params.window
            )));
        }
        if params.episodes == 0 || params.hidden == 0 {
            return Err(Error::Config("walker needs at least one episode and one hidden unit".into()));
        }
        let duration = params.episode_steps as f64 * DT;
        let bounds = [
            (-0.5 * duration, 1.5 * duration),
            (-FALL_ANGLE, FALL_ANGLE),
            (0.0, THIGH + SHIN + HULL_HALF_HEIGHT),
            (-3.0, 3.0),
            HIP_LIMITS,
            KNEE_LIMITS,
            HIP_LIMITS,
            KNEE_LIMITS,
            (0.0, 1.0),
            (0.0, 1.0),
            (0.0, 1.0),
            (0.0, 1.0),
        ];
        let channels = CHANNELS
            .iter()
            .zip(bounds)
            .map(|(n, b)| ChannelInfo::new(n, b))
            .collect();
        Ok(Self { params, channels })
    }

    pub fn params(&self) -> &WalkerParams {
        &self.params
    }

    fn initial_state(&self, setup: &EpisodeSetup) -> State {
        let terrain = &setup.terrain;
        let legs = [
            Leg {
                hip: 0.3,
                knee: -0.3,
                ..Leg::default()
            },
            Leg {
                hip: -0.2,
                knee: -0.3,
                ..Leg::default()
            },
        ];
        let mut s = State {
            x: 0.0,
            y: 0.0,
            vx: setup.push,
            vy: 0.0,
            theta: 0.0,
            omega: 0.0,
            legs,
            contact: [false; 2],
        };
        let lowest = (0..2).map(|i| s.foot(i).0 .1).fold(f64::INFINITY, f64::min);
        s.y = terrain.height(0.0) - lowest - 0.005;
        s
    }

    fn step(&self, s: &mut State, action: &[f64; N_ACTIONS], terrain: &Terrain) {
        for (i, leg) in s.legs.iter_mut().enumerate() {
            leg.d_hip += DT * (JOINT_GAIN * action[2 * i] - JOINT_DAMPING * leg.d_hip);
            leg.d_knee += DT * (JOINT_GAIN * action[2 * i + 1] - JOINT_DAMPING * leg.d_knee);
        }
        let mut fx = -LINEAR_DRAG * s.vx;
        let mut fy = -HULL_MASS * GRAVITY - LINEAR_DRAG * s.vy;
        let mut torque = -ANGULAR_DRAG * s.omega;
        for i in 0..2 {
            let ((rx, ry), (vx, vy)) = s.foot(i);
            let px = s.x + rx;
            let pen = terrain.height(px) - (s.y + ry);
            s.contact[i] = pen > 0.0;
            if pen > 0.0 {
                let normal = (CONTACT_STIFFNESS * pen - CONTACT_DAMPING * vy).max(0.0);
                let limit = FRICTION_COEFF * normal;
                let tangential = (-FRICTION_DAMPING * vx).clamp(-limit, limit);
                fx += tangential;
                fy += normal;
                torque += rx * normal - ry * tangential;
            }
        }
        s.vx += DT * fx / HULL_MASS;
        s.vy += DT * fy / HULL_MASS;
        s.omega += DT * torque / HULL_INERTIA;
        s.x += DT * s.vx;
        s.y += DT * s.vy;
        s.theta += DT * s.omega;
        for leg in &mut s.legs {
            leg.hip += DT * leg.d_hip;
            leg.knee += DT * leg.d_knee;
            clamp_joint(&mut leg.hip, &mut leg.d_hip, HIP_LIMITS);
            clamp_joint(&mut leg.knee, &mut leg.d_knee, KNEE_LIMITS);
        }
    }

    fn episode(&self, weights: &[f64], setup: &EpisodeSetup) -> EpisodeResult {
        let terrain = &setup.terrain;
        let steps = self.params.episode_steps;
        let n_ch = CHANNELS.len();
        let controller = Controller {
            hidden: self.params.hidden,
            w: weights,
        };
        let mut hidden_buf = vec![0.0; self.params.hidden];
        let mut s = self.initial_state(setup);
        let x0 = s.x;
        let shaping = |s: &State| PROGRESS_WEIGHT * s.x - ANGLE_WEIGHT * s.theta.abs();
        let mut prev_shaping = shaping(&s);
        let mut reward = 0.0;
        let mut ending = Ending::Running;
        let mut trace = vec![0.0; n_ch * steps];
        let mut last_effort = 0.0;
        for t in 0..steps {
            if ending == Ending::Running {
                let phase = 2.0 * std::f64::consts::PI * GAIT_FREQUENCY * t as f64 * DT;
                let l = &s.legs;
                let input = [
                    s.theta,
                    s.omega,
                    s.vx,
                    s.vy,
                    s.y - terrain.height(s.x),
                    l[0].hip,
                    l[0].knee,
                    l[1].hip,
                    l[1].knee,
                    l[0].d_hip / 5.0,
                    l[0].d_knee / 5.0,
                    l[1].d_hip / 5.0,
                    l[1].d_knee / 5.0,
                    (s.contact[0] as u8) as f64 + (s.contact[1] as u8) as f64 * 0.5,
                    phase.sin(),
                    phase.cos(),
                ];
                let action = controller.act(&input, &mut hidden_buf);
                self.step(&mut s, &action, terrain);
                let effort: f64 = action.iter().map(|a| a.abs()).sum();
                last_effort = effort / N_ACTIONS as f64;
                let sh = shaping(&s);
                reward += sh - prev_shaping - EFFORT_WEIGHT * effort;
                prev_shaping = sh;
                if !s.is_finite() {
                    ending = Ending::Unstable;
                    reward += FALL_PENALTY;
                } else if s.theta.abs() > FALL_ANGLE || s.y - HULL_HALF_HEIGHT <= terrain.height(s.x) {
                    ending = Ending::Fell;
                    reward += FALL_PENALTY;
                }
                if ending != Ending::Running {
                    last_effort = 0.0;
                }
            }
            let ground = terrain.height(s.x);
            let airborne = !s.contact[0] && !s.contact[1];
            let row = if ending == Ending::Unstable {
                [0.0; 12]
            } else {
                [
                    s.x - x0,
                    s.theta.clamp(-FALL_ANGLE, FALL_ANGLE),
                    s.y - ground,
                    s.vx,
                    s.legs[0].hip,
                    s.legs[0].knee,
                    s.legs[1].hip,
                    s.legs[1].knee,
                    last_effort,
                    s.contact[0] as u8 as f64,
                    s.contact[1] as u8 as f64,
                    airborne as u8 as f64,
                ]
            };
            for (c, v) in row.iter().enumerate() {
                trace[c * steps + t] = *v;
            }
        }
        EpisodeResult {
            reward,
            trace,
            unstable: ending == Ending::Unstable,
        }
    }

    /// Average `channels × steps` traces over non-overlapping windows.
    fn windowed(&self, trace: &[f64]) -> Vec<f64> {
        let steps = self.params.episode_steps;
        let w = self.params.window;
        let mut out = Vec::with_capacity(CHANNELS.len() * steps / w);
        for c in 0..CHANNELS.len() {
            let ch = &trace[c * steps..(c + 1) * steps];
            out.extend(ch.chunks_exact(w).map(|win| win.iter().sum::<f64>() / w as f64));
        }
        out
    }

    pub fn evaluate_on(&self, genome: &Genome, episodes: &[EpisodeSetup]) -> Result<Evaluation> {
        if genome.len() != self.genome_dim() {
            return Err(Error::Structural(format!(
                "walker genome has {} genes, controller needs {}",
                genome.len(),
                self.genome_dim()
            )));
        }
        let tp = self.timepoints();
        let mut fitness = 0.0;
        let mut obs = vec![0.0; CHANNELS.len() * tp];
        let mut unstable = 0;
        for setup in episodes {
            let ep = self.episode(genome.values(), setup);
            fitness += ep.reward;
            unstable += ep.unstable as u32;
            for (o, v) in obs.iter_mut().zip(self.windowed(&ep.trace)) {
                *o += v;
            }
        }
        let n = episodes.len() as f64;
        obs.iter_mut().for_each(|v| *v /= n);
        Ok(Evaluation {
            fitness: fitness / n,
            observations: ObservationMatrix::new(CHANNELS.len(), tp, obs)?,
            episode_count: episodes.len() as u32,
            unstable_episodes: unstable,
        })
    }
}

fn clamp_joint(q: &mut f64, dq: &mut f64, (lo, hi): (f64, f64)) {
    if *q < lo {
        *q = lo;
        *dq = dq.max(0.0);
    } else if *q > hi {
        *q = hi;
        *dq = dq.min(0.0);
    }
}

impl Task for Walker {
    fn name(&self) -> &str {
        "walker"
    }

    fn genome_dim(&self) -> usize {
        Controller::param_count(self.params.hidden)
    }

    fn genome_bounds(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn channels(&self) -> &[ChannelInfo] {
        &self.channels
    }

    fn timepoints(&self) -> usize {
        self.params.episode_steps / self.params.window
    }

    fn episodes_per_eval(&self) -> u32 {
        self.params.episodes
    }

    fn fitness_bounds(&self) -> (f64, f64) {
        (-150.0, 150.0)
    }

    fn evaluate(&self, genome: &Genome, seed: u64) -> Result<Evaluation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let episodes: Vec<EpisodeSetup> = (0..self.params.episodes)
            .map(|_| EpisodeSetup::generate(&self.params, &mut rng))
            .collect();
        self.evaluate_on(genome, &episodes)
    }
}
