//! Agent observations: top-down raster frames or normalized state vectors,
//! camera-delay emulation, additive Gaussian noise and pixel-change grids.

use std::collections::VecDeque;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::MazeGeometry;
use crate::physics::{SimState, Tilt, MAX_TILT_DEG};

pub const IMAGE_SIZE: usize = 84;
pub const CROP: usize = 80;
pub const GRID: usize = 20;
pub const CELL: usize = CROP / GRID;
/// Velocity normalization for state vectors, m/s.
pub const VELOCITY_SCALE: f64 = 0.5;
const PLATE_PX: f64 = 40.0;
const GAUGE_LEN: usize = 4;
const GAUGE_PX_PER_DEG: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub background: f64,
    pub marble: f64,
    pub wall: f64,
    pub gauge: f64,
}

impl Default for Appearance {
    fn default() -> Self {
        Appearance {
            background: 0.25,
            marble: 1.0,
            wall: 0.6,
            gauge: 0.9,
        }
    }
}

/// Single-channel 84x84 intensity image, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image(pub Vec<f32>);

impl Image {
    pub fn filled(v: f32) -> Self {
        Image(vec![v; IMAGE_SIZE * IMAGE_SIZE])
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.0[row * IMAGE_SIZE + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.0[row * IMAGE_SIZE + col] = v;
    }

    pub fn pixels(&self) -> &[f32] {
        &self.0
    }

    /// Writes the frame as a binary portable graymap.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n")?;
        let bytes: Vec<u8> = self.0.iter().map(|&v| quantize_u8(v)).collect();
        w.write_all(&bytes)
    }
}

pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObsData {
    Image(Image),
    LowDim(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub data: ObsData,
    pub frame_index: u64,
}

impl Observation {
    pub fn image(&self) -> Option<&Image> {
        match &self.data {
            ObsData::Image(img) => Some(img),
            ObsData::LowDim(_) => None,
        }
    }

    /// Flat view of the values regardless of kind.
    pub fn values(&self) -> &[f32] {
        match &self.data {
            ObsData::Image(img) => &img.0,
            ObsData::LowDim(v) => v,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self.data, ObsData::Image(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsKind {
    Image,
    Lowdim,
}

/// Length of a state vector for `marbles` marbles.
pub fn lowdim_len(marbles: usize) -> usize {
    4 * marbles + 2
}

/// Orthographic top-down rasterizer with a cached static layer.
#[derive(Debug, Clone)]
pub struct Renderer {
    geometry: MazeGeometry,
    appearance: Appearance,
    walls: Image,
}

impl Renderer {
    pub fn new(geometry: &MazeGeometry, appearance: Appearance) -> Self {
        let walls = draw_walls(geometry, &appearance);
        Renderer {
            geometry: geometry.clone(),
            appearance,
            walls,
        }
    }

    pub fn appearance(&self) -> &Appearance {
        &self.appearance
    }

    /// Static maze layer plus the tilt gauges, i.e. a frame with no marbles.
    pub fn background(&self, tilt: Tilt) -> Image {
        let mut img = self.walls.clone();
        draw_gauges(&mut img, tilt, self.appearance.gauge as f32);
        img
    }

    pub fn render(&self, state: &SimState) -> Observation {
        let mut img = self.background(state.tilt);
        let scale = PLATE_PX / self.geometry.outer_radius();
        let r_px = self.geometry.marble_radius() * scale;
        let v = self.appearance.marble as f32;
        for m in &state.marbles {
            let (cx, cy) = world_to_px(m.pos.x, m.pos.y, scale);
            let r0 = (cy - r_px - 1.0).floor().max(0.0) as usize;
            let r1 = ((cy + r_px + 1.0).ceil() as usize).min(IMAGE_SIZE);
            let c0 = (cx - r_px - 1.0).floor().max(0.0) as usize;
            let c1 = ((cx + r_px + 1.0).ceil() as usize).min(IMAGE_SIZE);
            for row in r0..r1 {
                for col in c0..c1 {
                    let dx = col as f64 + 0.5 - cx;
                    let dy = row as f64 + 0.5 - cy;
                    if dx * dx + dy * dy <= r_px * r_px {
                        img.set(row, col, v);
                    }
                }
            }
        }
        Observation {
            data: ObsData::Image(img),
            frame_index: state.step_count,
        }
    }
}

/// Pixel coordinates (column, row) of a plate point; y points up.
pub fn world_to_px(x: f64, y: f64, scale: f64) -> (f64, f64) {
    let c = IMAGE_SIZE as f64 / 2.0;
    (c + x * scale, c - y * scale)
}

fn draw_walls(geometry: &MazeGeometry, a: &Appearance) -> Image {
    let mut img = Image::filled(0.0);
    let scale = PLATE_PX / geometry.outer_radius();
    let half_wall = 0.75 / scale;
    let c = IMAGE_SIZE as f64 / 2.0;
    for row in 0..IMAGE_SIZE {
        for col in 0..IMAGE_SIZE {
            let x = (col as f64 + 0.5 - c) / scale;
            let y = (c - (row as f64 + 0.5)) / scale;
            let d = x.hypot(y);
            let rim = geometry.outer_radius();
            let v = if d > rim + half_wall {
                0.0
            } else if (d - rim).abs() <= half_wall
                || geometry
                    .boundaries()
                    .iter()
                    .any(|b| (d - b.radius).abs() <= half_wall && !b.in_gate(y.atan2(x)))
            {
                a.wall
            } else {
                a.background
            };
            img.set(row, col, v as f32);
        }
    }
    img
}

/// Two 4-pixel bars in the border band outside the central crop: the top
/// bar slides horizontally with the x tilt, the left bar vertically with y.
fn draw_gauges(img: &mut Image, tilt: Tilt, v: f32) {
    let mid = (IMAGE_SIZE / 2 - GAUGE_LEN / 2) as f64;
    let off = |deg: f64| (deg.clamp(-MAX_TILT_DEG, MAX_TILT_DEG) * GAUGE_PX_PER_DEG).round();
    let col0 = (mid + off(tilt.x)) as usize;
    let row0 = (mid - off(tilt.y)) as usize;
    for band in 0..2 {
        for k in 0..GAUGE_LEN {
            img.set(band, col0 + k, v);
            img.set(row0 + k, band, v);
        }
    }
}

/// Normalized state vector: per marble `(x, y, vx, vy)` then `(tilt_x, tilt_y)`.
///
/// Positions are divided by the rim radius, velocities by `VELOCITY_SCALE`
/// (clamped to [-1, 1]) and tilts by the tilt limit. Marbles are ordered by
/// ring, then polar angle, so the layout does not depend on input order.
pub fn observe_lowdim(state: &SimState, geometry: &MazeGeometry) -> Observation {
    let r = geometry.outer_radius();
    let mut order: Vec<usize> = (0..state.marbles.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&state.marbles[i], &state.marbles[j]);
        a.ring
            .cmp(&b.ring)
            .then(a.pos.angle().total_cmp(&b.pos.angle()))
            .then(a.pos.norm().total_cmp(&b.pos.norm()))
    });
    let mut v = Vec::with_capacity(lowdim_len(state.marbles.len()));
    for i in order {
        let m = &state.marbles[i];
        v.push((m.pos.x / r) as f32);
        v.push((m.pos.y / r) as f32);
        v.push((m.vel.x / VELOCITY_SCALE).clamp(-1.0, 1.0) as f32);
        v.push((m.vel.y / VELOCITY_SCALE).clamp(-1.0, 1.0) as f32);
    }
    v.push((state.tilt.x / MAX_TILT_DEG) as f32);
    v.push((state.tilt.y / MAX_TILT_DEG) as f32);
    Observation {
        data: ObsData::LowDim(v),
        frame_index: state.step_count,
    }
}

/// Adds i.i.d. zero-mean Gaussian noise. Images get standard deviation
/// `sigma` and are clamped to [0, 1]; state vectors get `0.05 * sigma` and
/// are left unclamped.
pub fn add_noise<R: Rng + ?Sized>(obs: &Observation, sigma: f64, rng: &mut R) -> Observation {
    if sigma <= 0.0 {
        return obs.clone();
    }
    let data = match &obs.data {
        ObsData::Image(img) => {
            let normal = Normal::new(0.0, sigma).expect("sigma is positive");
            let px = img
                .0
                .iter()
                .map(|&v| (v as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32)
                .collect();
            ObsData::Image(Image(px))
        }
        ObsData::LowDim(v) => {
            let normal = Normal::new(0.0, 0.05 * sigma).expect("sigma is positive");
            ObsData::LowDim(v.iter().map(|&x| (x as f64 + normal.sample(rng)) as f32).collect())
        }
    };
    Observation {
        data,
        frame_index: obs.frame_index,
    }
}

/// Mean absolute intensity change per 4x4 cell of the central 80x80 crop.
pub fn pixel_change(prev: &Image, next: &Image) -> Vec<f32> {
    let border = (IMAGE_SIZE - CROP) / 2;
    let mut grid = vec![0.0f32; GRID * GRID];
    for gy in 0..GRID {
        for gx in 0..GRID {
            let mut acc = 0.0f32;
            for dy in 0..CELL {
                for dx in 0..CELL {
                    let row = border + gy * CELL + dy;
                    let col = border + gx * CELL + dx;
                    acc += (next.get(row, col) - prev.get(row, col)).abs();
                }
            }
            grid[gy * GRID + gx] = acc / (CELL * CELL) as f32;
        }
    }
    grid
}

/// Emulated camera latency: the frame handed out at step `t` is the one
/// rendered at step `max(0, t - delay_k)`.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    delay_k: usize,
    queue: VecDeque<Observation>,
}

impl DelayBuffer {
    pub fn new(delay_k: usize, initial: Observation) -> Self {
        let queue = std::iter::repeat_n(initial, delay_k + 1).collect();
        DelayBuffer { delay_k, queue }
    }

    pub fn delay_k(&self) -> usize {
        self.delay_k
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// The frame currently visible to the agent.
    pub fn current(&self) -> &Observation {
        self.queue.front().expect("delay buffer never empty")
    }

    pub fn delayed(&mut self, fresh: Observation) -> Observation {
        self.queue.push_back(fresh);
        while self.queue.len() > self.delay_k + 1 {
            self.queue.pop_front();
        }
        self.current().clone()
    }
}

/// Writes `frame_NNNNN.pgm` into `dir`.
pub fn dump_frame(dir: &Path, index: u64, img: &Image) -> io::Result<PathBuf> {
    let path = dir.join(format!("frame_{index:05}.pgm"));
    let f = std::fs::File::create(&path)?;
    img.write_pgm(io::BufWriter::new(f))?;
    Ok(path)
}
