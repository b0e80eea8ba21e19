use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage_err, Result};
use crate::model::ModelConfig;
use crate::tensor::Tensor;

/// Extents of a `[F, C, H, W]` video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoDims {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoDims {
    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }
}

impl From<&ModelConfig> for VideoDims {
    fn from(c: &ModelConfig) -> Self {
        Self {
            frames: c.frames,
            channels: c.channels,
            height: c.height,
            width: c.width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Disc,
}

/// One object moving in a straight line over a flat background.
/// Positions are the top-left corner of the object's bounding box in
/// `(x, y)` = (column, row) cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub kind: ShapeKind,
    /// Bounding-box side in cells.
    pub size: usize,
    pub start: [f64; 2],
    /// Cells per frame, may be fractional.
    pub velocity: [f64; 2],
    pub intensity: f64,
    pub background: f64,
}

/// Number of direction buckets per shape kind.
pub const DIRECTIONS: usize = 4;
/// Classes produced by [`SceneSpec::class_id`].
pub const CLASSES: usize = 2 * DIRECTIONS;

const SUPERSAMPLE: usize = 4;

impl SceneSpec {
    /// Random scene that fits `dims`: size about a quarter to three
    /// eighths of the frame, speed between half a cell and one cell per
    /// frame in a uniform direction.
    pub fn random<R: Rng + ?Sized>(dims: &VideoDims, rng: &mut R) -> Self {
        let m = dims.height.min(dims.width);
        let lo = (m / 4).max(1);
        let hi = (3 * m / 8).max(lo);
        let size = rng.gen_range(lo..=hi);
        let kind = if rng.gen_bool(0.5) { ShapeKind::Square } else { ShapeKind::Disc };
        let span_x = (dims.width - size) as f64;
        let span_y = (dims.height - size) as f64;
        let start = [rng.gen::<f64>() * span_x, rng.gen::<f64>() * span_y];
        let speed = rng.gen_range(0.5..=1.0);
        let angle = rng.gen::<f64>() * TAU;
        Self {
            kind,
            size,
            start,
            velocity: [speed * angle.cos(), speed * angle.sin()],
            intensity: 2.0,
            background: -1.0,
        }
    }

    /// `kind · 4 + direction`, with directions right, down, left, up.
    /// A static object counts as moving right.
    pub fn class_id(&self) -> usize {
        let [vx, vy] = self.velocity;
        let bucket = if vx == 0.0 && vy == 0.0 {
            0
        } else {
            let a = (vy.atan2(vx) + FRAC_PI_4).rem_euclid(TAU);
            ((a / FRAC_PI_2) as usize).min(DIRECTIONS - 1)
        };
        let kind = match self.kind {
            ShapeKind::Square => 0,
            ShapeKind::Disc => 1,
        };
        kind * DIRECTIONS + bucket
    }

    pub fn validate(&self, dims: &VideoDims) -> Result<()> {
        if self.size == 0 || self.size > dims.height || self.size > dims.width {
            return Err(usage_err!(
                "object size {} does not fit a {}x{} frame",
                self.size,
                dims.height,
                dims.width
            ));
        }
        let finite = self.start.iter().chain(&self.velocity).all(|v| v.is_finite());
        if !finite {
            return Err(usage_err!("scene start and velocity must be finite"));
        }
        let top = self.background + self.intensity;
        if !(-1.0..=1.0).contains(&self.background) || !(-1.0..=1.0).contains(&top) {
            return Err(usage_err!(
                "background {} and object level {top} must lie in [-1, 1]",
                self.background
            ));
        }
        Ok(())
    }

    /// Largest top-left coordinate along x and y.
    pub fn span(&self, dims: &VideoDims) -> [f64; 2] {
        [(dims.width - self.size) as f64, (dims.height - self.size) as f64]
    }

    /// Linear trajectory with reflective clamping into the frame.
    pub fn position(&self, dims: &VideoDims, frame: usize) -> [f64; 2] {
        let span = self.span(dims);
        let f = frame as f64;
        [
            reflect(self.start[0] + self.velocity[0] * f, span[0]),
            reflect(self.start[1] + self.velocity[1] * f, span[1]),
        ]
    }

    /// Object coverage of its own bounding box, row-major `size×size`.
    pub fn mask(&self) -> Vec<f64> {
        let s = self.size;
        match self.kind {
            ShapeKind::Square => vec![1.0; s * s],
            ShapeKind::Disc => {
                let r = s as f64 / 2.0;
                let n = SUPERSAMPLE;
                let mut out = vec![0.0; s * s];
                for (i, cell) in out.iter_mut().enumerate() {
                    let (row, col) = (i / s, i % s);
                    let mut hits = 0;
                    for a in 0..n {
                        for b in 0..n {
                            let y = row as f64 + (a as f64 + 0.5) / n as f64 - r;
                            let x = col as f64 + (b as f64 + 0.5) / n as f64 - r;
                            if x * x + y * y <= r * r {
                                hits += 1;
                            }
                        }
                    }
                    *cell = hits as f64 / (n * n) as f64;
                }
                out
            }
        }
    }

    /// Renders the object at one top-left position per frame.
    pub fn render_at(&self, dims: &VideoDims, positions: &[[f64; 2]]) -> Result<Tensor<f32>> {
        self.validate(dims)?;
        if positions.len() != dims.frames {
            return Err(usage_err!(
                "{} positions for {} frames",
                positions.len(),
                dims.frames
            ));
        }
        let mask = self.mask();
        let (h, w, c) = (dims.height, dims.width, dims.channels);
        let mut data = Vec::with_capacity(dims.frames * c * h * w);
        for pos in positions {
            let cover = splat(&mask, self.size, *pos, h, w);
            for _ in 0..c {
                data.extend(
                    cover
                        .iter()
                        .map(|&v| (self.background + self.intensity * v) as f32),
                );
            }
        }
        Tensor::new(&dims.shape(), data)
    }

    /// The coherent clip of this scene.
    pub fn render(&self, dims: &VideoDims) -> Result<Tensor<f32>> {
        self.validate(dims)?;
        let positions: Vec<[f64; 2]> = (0..dims.frames).map(|f| self.position(dims, f)).collect();
        self.render_at(dims, &positions)
    }
}

/// Folds `p` into `[0, span]` by mirroring at both ends.
pub fn reflect(p: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let m = p.rem_euclid(2.0 * span);
    if m > span {
        2.0 * span - m
    } else {
        m
    }
}

/// Bilinear splat of a mask placed at a fractional top-left position.
/// Every mask cell spreads its value over the four cells it overlaps, so
/// the total is conserved whenever the object lies inside the frame.
fn splat(mask: &[f64], size: usize, pos: [f64; 2], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    let (x0, y0) = (pos[0].floor(), pos[1].floor());
    let (fx, fy) = (pos[0] - x0, pos[1] - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let taps = [
        (0, 0, (1.0 - fy) * (1.0 - fx)),
        (0, 1, (1.0 - fy) * fx),
        (1, 0, fy * (1.0 - fx)),
        (1, 1, fy * fx),
    ];
    for (i, &m) in mask.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let (r, c) = ((i / size) as isize, (i % size) as isize);
        for &(dy, dx, wgt) in &taps {
            if wgt == 0.0 {
                continue;
            }
            let (y, x) = (y0 + r + dy, x0 + c + dx);
            if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                out[y as usize * w + x as usize] += m * wgt;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DIMS: VideoDims = VideoDims {
        frames: 6,
        channels: 1,
        height: 8,
        width: 8,
    };

    fn square(velocity: [f64; 2]) -> SceneSpec {
        SceneSpec {
            kind: ShapeKind::Square,
            size: 2,
            start: [0.0, 1.0],
            velocity,
            intensity: 2.0,
            background: -1.0,
        }
    }

    fn centroid_x(video: &Tensor<f32>, frame: usize) -> f64 {
        let hw = DIMS.height * DIMS.width;
        let px = &video.data()[frame * hw..(frame + 1) * hw];
        let (mut m, mut mx) = (0.0, 0.0);
        for (i, &v) in px.iter().enumerate() {
            let mass = v as f64 + 1.0;
            m += mass;
            mx += mass * (i % DIMS.width) as f64;
        }
        mx / m
    }

    #[test]
    fn static_scene_repeats_frames() {
        let v = square([0.0, 0.0]).render(&DIMS).unwrap();
        let hw = 64;
        for f in 1..DIMS.frames {
            assert_eq!(&v.data()[..hw], &v.data()[f * hw..(f + 1) * hw]);
        }
    }

    #[test]
    fn unit_velocity_shifts_centroid_by_one() {
        let v = square([1.0, 0.0]).render(&DIMS).unwrap();
        for f in 1..DIMS.frames {
            let d = centroid_x(&v, f) - centroid_x(&v, f - 1);
            assert!((d - 1.0).abs() < 1e-6, "frame {f}: {d}");
        }
    }

    #[test]
    fn reflection_keeps_object_inside() {
        assert_eq!(reflect(7.0, 6.0), 5.0);
        assert_eq!(reflect(-1.5, 6.0), 1.5);
        assert_eq!(reflect(13.0, 6.0), 1.0);
        assert_eq!(reflect(3.0, 0.0), 0.0);
    }

    #[test]
    fn mass_is_conserved_and_range_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = SceneSpec::random(&DIMS, &mut rng);
            let v = s.render(&DIMS).unwrap();
            let hw = 64;
            let sums: Vec<f64> = (0..DIMS.frames)
                .map(|f| v.data()[f * hw..(f + 1) * hw].iter().map(|&x| x as f64).sum())
                .collect();
            for m in &sums {
                assert!((m - sums[0]).abs() < 1e-4, "{sums:?}");
            }
            assert!(v.data().iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn classes_cover_kinds_and_directions() {
        let mut s = square([1.0, 0.0]);
        assert_eq!(s.class_id(), 0);
        s.velocity = [0.0, 1.0];
        assert_eq!(s.class_id(), 1);
        s.velocity = [-1.0, 0.1];
        assert_eq!(s.class_id(), 2);
        s.kind = ShapeKind::Disc;
        s.velocity = [0.0, -1.0];
        assert_eq!(s.class_id(), 7);
    }

    #[test]
    fn oversized_object_is_rejected() {
        let mut s = square([0.0, 0.0]);
        s.size = 9;
        assert!(s.render(&DIMS).is_err());
    }
}
