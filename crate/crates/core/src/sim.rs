//! Quasi-static surrogate of a tracked vehicle with four flippers, and the two
//! ways of observing the terrain around it.
//!
//! The robot lives in the sagittal plane. Its support polyline is
//! `rear flipper tip → rear axle → front axle → front flipper tip`, rigidly
//! attached to the body; the left/right flippers of each pair are averaged
//! for contact purposes. For a fixed longitudinal position of the centre of
//! mass, [`settle`] picks the pitch and height that put the centre of mass as
//! low as possible without the polyline penetrating the terrain.
//!
//! [`step`] drives forward at constant speed in sub-steps of one terrain
//! sample. A sub-step stalls when sliding the robot forward would require a
//! lift steeper than the climb angle (a flipper or axle rammed into a riser).

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::terrain::World;

pub const DEM_ROWS: usize = 20;
pub const DEM_COLS: usize = 5;
pub const DEM_CELLS: usize = DEM_ROWS * DEM_COLS;
/// Edge length of a DEM cell (m).
pub const DEM_CELL: f64 = 0.1;
/// Longitudinal offset of the first DEM row from the centre of mass.
pub const DEM_BACK: f64 = -0.6;
/// Forward speed used for every traversal (m/s).
pub const SPEED: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("x = {0} lies outside the world")]
    OutOfWorld(f64),
    #[error("flipper angle {0} outside the mechanical range")]
    FlipperRange(f64),
    #[error("no resting pose found at x = {0}")]
    NoSupport(f64),
}

/// Flipper angles ordered front-left, front-right, rear-left, rear-right.
/// Zero is level with the track, positive is raised.
pub type Flippers = [f64; 4];

/// Body and flipper dimensions (m, rad).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RobotGeometry {
    /// Distance between rear and front axle along the track.
    pub support_span: f64,
    /// Protected body segment length, centred on the centre of mass.
    pub body_length: f64,
    /// Height of the protected segment above the track line.
    pub body_bottom: f64,
    pub flipper_length: f64,
    /// Centre of mass above the track line.
    pub com_height: f64,
    /// Range sensor above the track line, used for occlusion.
    pub sensor_height: f64,
    pub flipper_min: f64,
    pub flipper_max: f64,
    /// Steepest lift per unit of forward travel the tracks can climb.
    pub climb_angle: f64,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        Self {
            support_span: 0.45,
            body_length: 0.45,
            body_bottom: 0.05,
            flipper_length: 0.35,
            com_height: 0.1,
            sensor_height: 0.5,
            flipper_min: -PI,
            flipper_max: FRAC_PI_2,
            climb_angle: 55f64.to_radians(),
        }
    }
}

impl RobotGeometry {
    pub fn clamp_flipper(&self, angle: f64) -> f64 {
        angle.clamp(self.flipper_min, self.flipper_max)
    }

    fn in_range(&self, angle: f64) -> bool {
        angle >= self.flipper_min - 1e-12 && angle <= self.flipper_max + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SafetyLimits {
    /// Peak linear acceleration at the body ends (m/s²).
    pub max_accel: f64,
    pub max_pitch: f64,
    pub body_clearance: f64,
    pub max_flipper_rate: f64,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        Self {
            max_accel: 20.0,
            max_pitch: 0.7,
            body_clearance: 0.01,
            max_flipper_rate: 1.0,
        }
    }
}

impl SafetyLimits {
    pub fn is_valid(&self) -> bool {
        [self.max_accel, self.max_pitch, self.body_clearance, self.max_flipper_rate]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
    }

    /// Soft thresholds: 80% of each hard limit.
    pub fn soft(&self) -> SafetyLimits {
        SafetyLimits {
            max_accel: 0.8 * self.max_accel,
            max_pitch: 0.8 * self.max_pitch,
            body_clearance: self.body_clearance / 0.8,
            max_flipper_rate: self.max_flipper_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    pub geometry: RobotGeometry,
    pub limits: SafetyLimits,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RobotState {
    pub x: f64,
    /// Height of the centre of mass.
    pub z: f64,
    pub pitch: f64,
    pub flippers: Flippers,
    /// Mean forward speed over the last step.
    pub v: f64,
    /// Vertical and pitch rates at the end of the last sub-step.
    pub vz: f64,
    pub pitch_rate: f64,
    pub t: f64,
}

impl RobotState {
    /// Track-line height under the centre of mass when level; DEM heights are
    /// expressed relative to it.
    pub fn reference_height(&self, geometry: &RobotGeometry) -> f64 {
        self.z - geometry.com_height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Action {
    pub targets: Flippers,
}

impl Action {
    pub const fn new(targets: Flippers) -> Self {
        Self { targets }
    }

    pub fn is_valid(&self, geometry: &RobotGeometry) -> bool {
        self.targets.iter().all(|a| a.is_finite() && geometry.in_range(*a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Violation {
    Accel,
    Pitch,
    BodyContact,
}

/// What happened during one [`step`]. Peaks are kept for soft-threshold checks.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepEvent {
    pub violated: Option<Violation>,
    pub stuck: bool,
    pub peak_accel: f64,
    pub peak_pitch: f64,
    pub min_clearance: f64,
}

impl StepEvent {
    pub fn is_safe(&self) -> bool {
        self.violated.is_none() && !self.stuck
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    RearTip,
    RearFlipper,
    RearAxle,
    Track,
    FrontAxle,
    FrontFlipper,
    FrontTip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub part: Part,
    /// World x of the contact.
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub z: f64,
    pub pitch: f64,
    pub contacts: Vec<Contact>,
}

/// Support polyline in the body frame (origin at the centre of mass).
#[derive(Debug, Clone, Copy)]
struct Polyline {
    // rear tip, rear axle, front axle, front tip as (u forward, w up)
    pts: [(f64, f64); 4],
}

impl Polyline {
    fn new(geometry: &RobotGeometry, flippers: &Flippers) -> Self {
        let front = 0.5 * (flippers[0] + flippers[1]);
        let rear = 0.5 * (flippers[2] + flippers[3]);
        let half = 0.5 * geometry.support_span;
        let w0 = -geometry.com_height;
        let l = geometry.flipper_length;
        Self {
            pts: [
                (-half - l * libm::cos(rear), w0 + l * libm::sin(rear)),
                (-half, w0),
                (half, w0),
                (half + l * libm::cos(front), w0 + l * libm::sin(front)),
            ],
        }
    }
}

const VERTEX_PARTS: [Part; 4] = [Part::RearTip, Part::RearAxle, Part::FrontAxle, Part::FrontTip];
const SEGMENT_PARTS: [Part; 3] = [Part::RearFlipper, Part::Track, Part::FrontFlipper];

#[inline]
fn to_world(x: f64, cos: f64, sin: f64, (u, w): (f64, f64)) -> (f64, f64) {
    (x + u * cos - w * sin, u * sin + w * cos)
}

/// Smallest centre-of-mass height at which the transformed point set `pts`
/// (world x, height offset from the centre of mass) clears the terrain,
/// checking vertices against the surface and terrain samples against
/// segments. `segments` lists index pairs into `pts`.
fn required_height(world: &World, pts: &[(f64, f64)], segments: &[(usize, usize)]) -> f64 {
    let mut req = f64::NEG_INFINITY;
    for &(px, pw) in pts {
        req = req.max(world.height_clamped(px) - pw);
    }
    let g = world.grid_step;
    let last = world.heights.len() - 1;
    for &(a, b) in segments {
        let (xa, wa) = pts[a];
        let (xb, wb) = pts[b];
        let (lo, hi) = if xa <= xb { (xa, xb) } else { (xb, xa) };
        if hi - lo < 1e-12 {
            continue;
        }
        let first = libm::ceil(lo.max(0.0) / g) as usize;
        let end = libm::floor(hi / g);
        if end < 0.0 {
            continue;
        }
        let end = (end as usize).min(last);
        let slope = (wb - wa) / (xb - xa);
        for i in first..=end {
            let xi = i as f64 * g;
            if xi <= lo || xi >= hi {
                continue;
            }
            let w = wa + slope * (xi - xa);
            req = req.max(world.heights[i] - w);
        }
    }
    req
}

const SUPPORT_SEGMENTS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 3)];

fn support_points(x: f64, pitch: f64, poly: &Polyline) -> [(f64, f64); 4] {
    let (s, c) = (libm::sin(pitch), libm::cos(pitch));
    poly.pts.map(|p| to_world(x, c, s, p))
}

fn height_for_pitch(world: &World, x: f64, pitch: f64, poly: &Polyline) -> f64 {
    required_height(world, &support_points(x, pitch, poly), &SUPPORT_SEGMENTS)
}

const PITCH_GRID: usize = 181;

/// Quasi-static resting pose at centre-of-mass position `x`.
pub fn settle(world: &World, x: f64, flippers: &Flippers, geometry: &RobotGeometry) -> Result<Pose, SimError> {
    if !(x >= 0.0 && x <= world.extent()) {
        return Err(SimError::OutOfWorld(x));
    }
    if let Some(bad) = flippers.iter().find(|a| !geometry.in_range(**a)) {
        return Err(SimError::FlipperRange(*bad));
    }
    let poly = Polyline::new(geometry, flippers);
    let (z, pitch) = lowest_pose(world, x, &poly);
    if !z.is_finite() {
        return Err(SimError::NoSupport(x));
    }
    let contacts = contacts_at(world, x, z, pitch, &poly);
    Ok(Pose { z, pitch, contacts })
}

fn lowest_pose(world: &World, x: f64, poly: &Polyline) -> (f64, f64) {
    let step = PI / (PITCH_GRID - 1) as f64;
    let mut best = (f64::INFINITY, 0.0);
    let mut best_i = 0;
    for i in 0..PITCH_GRID {
        // exact zero at the middle of the grid
        let p = (i as f64 - ((PITCH_GRID - 1) / 2) as f64) * step;
        let z = height_for_pitch(world, x, p, poly);
        if z < best.0 {
            best = (z, p);
            best_i = i;
        }
    }
    // Golden-section refinement inside the neighbouring grid cells.
    let lo_i = best_i.saturating_sub(1);
    let hi_i = (best_i + 1).min(PITCH_GRID - 1);
    let to_p = |i: usize| (i as f64 - ((PITCH_GRID - 1) / 2) as f64) * step;
    let (mut a, mut b) = (to_p(lo_i), to_p(hi_i));
    let ratio = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = height_for_pitch(world, x, c, poly);
    let mut fd = height_for_pitch(world, x, d, poly);
    for _ in 0..48 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = height_for_pitch(world, x, c, poly);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = height_for_pitch(world, x, d, poly);
        }
    }
    let p = 0.5 * (a + b);
    let z = height_for_pitch(world, x, p, poly);
    if z < best.0 - 1e-12 {
        (z, p)
    } else {
        best
    }
}

fn contacts_at(world: &World, x: f64, z: f64, pitch: f64, poly: &Polyline) -> Vec<Contact> {
    const TOL: f64 = 1e-6;
    let pts = support_points(x, pitch, poly);
    let mut out = Vec::new();
    for (k, &(px, pw)) in pts.iter().enumerate() {
        if z + pw - world.height_clamped(px) < TOL {
            out.push(Contact { part: VERTEX_PARTS[k], x: px });
        }
    }
    let g = world.grid_step;
    for (k, &(a, b)) in SUPPORT_SEGMENTS.iter().enumerate() {
        let (xa, wa) = pts[a];
        let (xb, wb) = pts[b];
        let (lo, hi) = if xa <= xb { (xa, xb) } else { (xb, xa) };
        if hi - lo < 1e-12 {
            continue;
        }
        let first = libm::ceil(lo.max(0.0) / g) as usize;
        let last = libm::floor(hi / g);
        if last < 0.0 {
            continue;
        }
        for i in first..=(last as usize).min(world.heights.len() - 1) {
            let xi = i as f64 * g;
            if xi <= lo || xi >= hi {
                continue;
            }
            let w = wa + (wb - wa) * (xi - xa) / (xb - xa);
            if z + w - world.heights[i] < TOL {
                out.push(Contact { part: SEGMENT_PARTS[k], x: xi });
            }
        }
    }
    out
}

/// Smallest gap between the protected body segment and the terrain.
pub fn body_clearance(world: &World, x: f64, z: f64, pitch: f64, geometry: &RobotGeometry) -> f64 {
    let half = 0.5 * geometry.body_length;
    let w = -geometry.com_height + geometry.body_bottom;
    let (s, c) = (libm::sin(pitch), libm::cos(pitch));
    let pts = [to_world(x, c, s, (-half, w)), to_world(x, c, s, (half, w))];
    z - required_height(world, &pts, &[(0, 1)])
}

/// Settled state at rest at `x` with the given flippers.
pub fn initial_state(world: &World, x: f64, flippers: Flippers, geometry: &RobotGeometry) -> Result<RobotState, SimError> {
    let pose = settle(world, x, &flippers, geometry)?;
    Ok(RobotState {
        x,
        z: pose.z,
        pitch: pose.pitch,
        flippers,
        v: SPEED,
        vz: 0.0,
        pitch_rate: 0.0,
        t: 0.0,
    })
}

/// Number of sub-steps of one terrain sample each that make up `dt`.
pub fn substeps(world: &World, dt: f64) -> usize {
    let h = world.grid_step / SPEED;
    (libm::round(dt / h) as usize).max(1)
}

/// Advances the robot by `dt` seconds at [`SPEED`] while the flippers move
/// toward `action` at the rate limit. Violations are reported, not raised.
pub fn step(world: &World, s: &RobotState, action: &Action, dt: f64, cfg: &SimConfig) -> (RobotState, StepEvent) {
    let geometry = &cfg.geometry;
    let limits = &cfg.limits;
    let n = substeps(world, dt);
    let h = dt / n as f64;
    let dx = SPEED * h;
    let arm = 0.5 * geometry.body_length;
    let max_lift = dx * libm::tan(geometry.climb_angle);

    let mut x = s.x;
    let mut z = s.z;
    let mut pitch = s.pitch;
    let mut vz = s.vz;
    let mut wp = s.pitch_rate;
    let mut flippers = s.flippers;
    let mut event = StepEvent {
        violated: None,
        stuck: false,
        peak_accel: 0.0,
        peak_pitch: libm::fabs(s.pitch),
        min_clearance: f64::INFINITY,
    };

    for j in 1..=n {
        let elapsed = dt * j as f64 / n as f64;
        let reach = limits.max_flipper_rate * elapsed;
        for (k, f) in flippers.iter_mut().enumerate() {
            let target = geometry.clamp_flipper(action.targets[k]);
            *f = s.flippers[k] + (target - s.flippers[k]).clamp(-reach, reach);
        }
        let poly = Polyline::new(geometry, &flippers);

        // Can the robot slide forward at its current attitude?
        let next_x = (x + dx).min(world.extent());
        let here = height_for_pitch(world, x, pitch, &poly);
        let there = height_for_pitch(world, next_x, pitch, &poly);
        if there - here > max_lift {
            event.stuck = true;
        } else {
            x = next_x;
        }

        let (nz, np) = lowest_pose(world, x, &poly);
        let nvz = (nz - z) / h;
        let nwp = (np - pitch) / h;
        let accel = libm::fabs(nvz - vz) / h + arm * libm::fabs(nwp - wp) / h;
        z = nz;
        pitch = np;
        vz = nvz;
        wp = nwp;

        let clearance = body_clearance(world, x, z, pitch, geometry);
        event.peak_accel = event.peak_accel.max(accel);
        event.peak_pitch = event.peak_pitch.max(libm::fabs(pitch));
        event.min_clearance = event.min_clearance.min(clearance);
        if event.violated.is_none() {
            if accel > limits.max_accel {
                event.violated = Some(Violation::Accel);
            } else if libm::fabs(pitch) > limits.max_pitch {
                event.violated = Some(Violation::Pitch);
            } else if clearance < limits.body_clearance {
                event.violated = Some(Violation::BodyContact);
            }
        }
    }

    let next = RobotState {
        x,
        z,
        pitch,
        flippers,
        v: (x - s.x) / dt,
        vz,
        pitch_rate: wp,
        t: s.t + dt,
    };
    (next, event)
}

/// Fixed-size elevation map in the pitch-zeroed robot frame, rows running
/// forward from [`DEM_BACK`], plus the five scalar channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dem {
    /// Row-major `[row][col]`; NaN marks a missing measurement.
    pub cells: [f64; DEM_CELLS],
    pub pitch: f64,
    pub flippers: Flippers,
}

impl Dem {
    pub fn filled(value: f64) -> Self {
        Self {
            cells: [value; DEM_CELLS],
            pitch: 0.0,
            flippers: [0.0; 4],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.cells[row * DEM_COLS + col]
    }

    pub fn nan_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_nan()).count()
    }

    pub fn scalars(&self) -> [f64; 5] {
        [self.pitch, self.flippers[0], self.flippers[1], self.flippers[2], self.flippers[3]]
    }

    /// Equality that treats NaN cells as equal to each other.
    pub fn same_as(&self, other: &Dem) -> bool {
        self.pitch.to_bits() == other.pitch.to_bits()
            && self.flippers.iter().zip(&other.flippers).all(|(a, b)| a.to_bits() == b.to_bits())
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Dem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let cells: Vec<Option<f64>> = self.cells.iter().map(|c| if c.is_nan() { None } else { Some(*c) }).collect();
        let mut st = s.serialize_struct("Dem", 3)?;
        st.serialize_field("cells", &cells)?;
        st.serialize_field("pitch", &self.pitch)?;
        st.serialize_field("flippers", &self.flippers)?;
        st.end()
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Dem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        struct Raw {
            cells: Vec<Option<f64>>,
            pitch: f64,
            flippers: Flippers,
        }
        let raw = Raw::deserialize(d)?;
        if raw.cells.len() != DEM_CELLS {
            return Err(serde::de::Error::invalid_length(raw.cells.len(), &"100 DEM cells"));
        }
        let mut cells = [0.0; DEM_CELLS];
        for (c, v) in cells.iter_mut().zip(&raw.cells) {
            *c = v.unwrap_or(f64::NAN);
        }
        Ok(Dem {
            cells,
            pitch: raw.pitch,
            flippers: raw.flippers,
        })
    }
}

/// Longitudinal profile of a DEM: the highest terrain point in each row.
fn row_heights(world: &World, s: &RobotState) -> [f64; DEM_ROWS] {
    let mut rows = [0.0; DEM_ROWS];
    for (i, r) in rows.iter_mut().enumerate() {
        let x0 = s.x + DEM_BACK + DEM_CELL * i as f64;
        *r = world.max_height_clamped(x0, x0 + DEM_CELL);
    }
    rows
}

/// Ideal simulator DEM: every cell measured, no noise.
pub fn extract_dem_sim(world: &World, s: &RobotState, geometry: &RobotGeometry) -> Dem {
    let reference = s.reference_height(geometry);
    let rows = row_heights(world, s);
    let mut cells = [0.0; DEM_CELLS];
    for (i, h) in rows.iter().enumerate() {
        for j in 0..DEM_COLS {
            cells[i * DEM_COLS + j] = h - reference;
        }
    }
    Dem {
        cells,
        pitch: s.pitch,
        flippers: s.flippers,
    }
}

/// Pseudo-real sensing model: Gaussian height noise, random dropout and
/// shadowing behind height discontinuities.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SenseParams {
    pub noise_sigma: f64,
    pub dropout_base: f64,
    pub occlusion: bool,
    pub seed: u64,
}

impl SenseParams {
    pub const IDEAL: SenseParams = SenseParams {
        noise_sigma: 0.0,
        dropout_base: 0.0,
        occlusion: false,
        seed: 0,
    };

    pub fn is_valid(&self) -> bool {
        self.noise_sigma >= 0.0 && self.noise_sigma.is_finite() && (0.0..=1.0).contains(&self.dropout_base)
    }
}

/// Rows hidden from a sensor mounted `sensor_height` above the track line.
pub fn shadowed_rows(dem: &Dem, geometry: &RobotGeometry) -> [bool; DEM_ROWS] {
    let (s, c) = (libm::sin(dem.pitch), libm::cos(dem.pitch));
    let lift = geometry.sensor_height - geometry.com_height;
    // Sensor relative to the DEM frame (x from the centre of mass, heights from the reference).
    let sx = -lift * s;
    let sz = geometry.com_height + lift * c;
    let row_x = |i: usize| DEM_BACK + DEM_CELL * (i as f64 + 0.5);
    let row_h = |i: usize| {
        let row = &dem.cells[i * DEM_COLS..(i + 1) * DEM_COLS];
        row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let mut hidden = [false; DEM_ROWS];
    for i in 0..DEM_ROWS {
        let (xi, hi) = (row_x(i), row_h(i));
        let between = (0..DEM_ROWS).filter(|&k| {
            let xk = row_x(k);
            (xk - sx) * (xi - sx) > 0.0 && libm::fabs(xk - sx) < libm::fabs(xi - sx)
        });
        for k in between {
            let xk = row_x(k);
            let ray = sz + (hi - sz) * (xk - sx) / (xi - sx);
            if row_h(k) > ray + 1e-9 {
                hidden[i] = true;
                break;
            }
        }
    }
    hidden
}

/// Degrades an ideal DEM. With zero noise, zero dropout and no occlusion this
/// is the identity. Draws exactly two variates per cell from `rng`.
pub fn sense_dem<R: Rng + ?Sized>(dem: &Dem, p: &SenseParams, geometry: &RobotGeometry, rng: &mut R) -> Dem {
    let hidden = if p.occlusion {
        shadowed_rows(dem, geometry)
    } else {
        [false; DEM_ROWS]
    };
    let mut out = *dem;
    for (k, cell) in out.cells.iter_mut().enumerate() {
        let u: f64 = rng.random();
        let n: f64 = StandardNormal.sample(rng);
        let drop_p = if hidden[k / DEM_COLS] { 1.0 } else { p.dropout_base };
        if u < drop_p {
            *cell = f64::NAN;
        } else if p.noise_sigma > 0.0 {
            *cell += p.noise_sigma * n;
        }
    }
    out
}

/// Success level of one trajectory, valued 1.0 / 0.5 / 0.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    Good,
    Unclear,
    Fail,
}

impl Verdict {
    pub fn value(self) -> f64 {
        match self {
            Verdict::Good => 1.0,
            Verdict::Unclear => 0.5,
            Verdict::Fail => 0.0,
        }
    }
}

/// Grades a rollout. `states[0]` is the start state and `events[i]` belongs to
/// the step from `states[i]` to `states[i + 1]`. `time_budget` is in simulated
/// seconds.
pub fn check_safety(
    states: &[RobotState],
    events: &[StepEvent],
    limits: &SafetyLimits,
    world: &World,
    time_budget: f64,
) -> Verdict {
    let Some(last) = states.last() else {
        return Verdict::Fail;
    };
    let hard_problem = events.iter().any(|e| !e.is_safe());
    let completed = last.x >= world.goal_x() - 1e-9;
    if hard_problem || !completed || last.t > time_budget + 1e-9 {
        return Verdict::Fail;
    }
    let soft = limits.soft();
    let marginal = events.iter().any(|e| {
        e.peak_accel > soft.max_accel || e.peak_pitch > soft.max_pitch || e.min_clearance < soft.body_clearance
    });
    if marginal {
        Verdict::Unclear
    } else {
        Verdict::Good
    }
}

/// One control step: the state and observation the action was chosen from,
/// the action, and what the step reported.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryStep {
    pub state: RobotState,
    pub dem: Dem,
    pub action: Action,
    pub event: StepEvent,
}

/// Time-ordered rollout or plan. `end` is the state after the last step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub world_id: String,
    /// Which stage produced the trajectory, e.g. `plan/1` or `real/0`.
    pub provenance: String,
    pub dt: f64,
    pub steps: Vec<TrajectoryStep>,
    pub end: RobotState,
    pub verdict: Verdict,
}

impl Trajectory {
    pub fn states(&self) -> Vec<RobotState> {
        let mut v: Vec<RobotState> = self.steps.iter().map(|s| s.state).collect();
        v.push(self.end);
        v
    }

    pub fn events(&self) -> Vec<StepEvent> {
        self.steps.iter().map(|s| s.event).collect()
    }

    /// Re-simulates every action from the first state and checks that each
    /// logged state and event is reproduced bit for bit.
    pub fn replays(&self, world: &World, cfg: &SimConfig) -> bool {
        let Some(first) = self.steps.first() else {
            return true;
        };
        let mut s = first.state;
        for (i, st) in self.steps.iter().enumerate() {
            if !same_state(&s, &st.state) {
                return false;
            }
            let (next, ev) = step(world, &s, &st.action, self.dt, cfg);
            if !same_event(&ev, &st.event) {
                return false;
            }
            s = next;
            if i + 1 == self.steps.len() && !same_state(&s, &self.end) {
                return false;
            }
        }
        true
    }
}

fn same_state(a: &RobotState, b: &RobotState) -> bool {
    let fa = [a.x, a.z, a.pitch, a.v, a.vz, a.pitch_rate, a.t];
    let fb = [b.x, b.z, b.pitch, b.v, b.vz, b.pitch_rate, b.t];
    fa.iter().chain(&a.flippers).zip(fb.iter().chain(&b.flippers)).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn same_event(a: &StepEvent, b: &StepEvent) -> bool {
    a.violated == b.violated
        && a.stuck == b.stuck
        && [a.peak_accel, a.peak_pitch, a.min_clearance]
            .iter()
            .zip(&[b.peak_accel, b.peak_pitch, b.min_clearance])
            .all(|(x, y)| x.to_bits() == y.to_bits())
}
