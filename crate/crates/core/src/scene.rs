//! Synthetic orbital scene: a 2-D satellite model (body plus panels) over a dark
//! background, optionally with the sun in view, rendered to linear irradiance.
//!
//! Geometry is orthographic and axis-aligned. Pixel `(x, y)` covers the unit
//! square `[x, x + 1) x [y, y + 1)`; every part is blended by its exact box
//! coverage of that square so moving edges produce intermediate values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Illumination condition of a scenario; scales the whole scene multiplicatively.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IlluminancePreset {
    Hdr,
    ExtremeHdr,
    FastMotion,
}

impl IlluminancePreset {
    /// Ambient illuminance at the camera, in lux.
    pub fn ambient_lux(self) -> f64 {
        match self {
            IlluminancePreset::Hdr => 5.1,
            IlluminancePreset::ExtremeHdr => 2370.0,
            IlluminancePreset::FastMotion => 0.9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IlluminancePreset::Hdr => "hdr",
            IlluminancePreset::ExtremeHdr => "extreme_hdr",
            IlluminancePreset::FastMotion => "fast_motion",
        }
    }
}

impl std::str::FromStr for IlluminancePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hdr" => Ok(IlluminancePreset::Hdr),
            "extreme_hdr" => Ok(IlluminancePreset::ExtremeHdr),
            "fast_motion" => Ok(IlluminancePreset::FastMotion),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (expected hdr, extreme_hdr or fast_motion)"),
            )),
        }
    }
}

/// Axis-aligned rectangle in pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

impl Rect {
    pub fn new(cx: f64, cy: f64, hx: f64, hy: f64) -> Self {
        Rect {
            center: [cx, cy],
            half_extents: [hx, hy],
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let finite = self.center.iter().chain(&self.half_extents).all(|v| v.is_finite());
        if !finite || self.half_extents[0] <= 0.0 || self.half_extents[1] <= 0.0 {
            return Err(Error::config(field, "rectangle must be finite with positive extents"));
        }
        Ok(())
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.center[0] - self.half_extents[0], self.center[0] + self.half_extents[0])
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.center[1] - self.half_extents[1], self.center[1] + self.half_extents[1])
    }
}

/// A panel attached to the body. Its center is an offset from the body center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub rect: Rect,
    pub reflectance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetModel {
    pub body: Rect,
    pub body_reflectance: f64,
    #[serde(default)]
    pub panels: Vec<Panel>,
    /// Relative amplitude of a seeded per-cell reflectance texture on the body; 0 disables it.
    #[serde(default)]
    pub texture: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Static,
    LinearVelocity,
    Sinusoidal,
}

/// Target trajectory. The target is at its configured position until `onset_us`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionProfile {
    pub kind: MotionKind,
    /// Pixels per second.
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default)]
    pub amplitude: [f64; 2],
    #[serde(default)]
    pub period_s: f64,
    #[serde(default)]
    pub onset_us: u64,
}

impl MotionProfile {
    pub fn fixed() -> Self {
        MotionProfile {
            kind: MotionKind::Static,
            velocity: [0.0; 2],
            amplitude: [0.0; 2],
            period_s: 0.0,
            onset_us: 0,
        }
    }

    pub fn linear(vx: f64, vy: f64, onset_us: u64) -> Self {
        MotionProfile {
            kind: MotionKind::LinearVelocity,
            velocity: [vx, vy],
            onset_us,
            ..Self::fixed()
        }
    }

    /// Target displacement from its configured position at time `t_us`.
    pub fn offset(&self, t_us: u64) -> [f64; 2] {
        if t_us <= self.onset_us {
            return [0.0; 2];
        }
        let dt_s = (t_us - self.onset_us) as f64 * 1e-6;
        match self.kind {
            MotionKind::Static => [0.0; 2],
            MotionKind::LinearVelocity => [self.velocity[0] * dt_s, self.velocity[1] * dt_s],
            MotionKind::Sinusoidal => {
                let phase = (std::f64::consts::TAU * dt_s / self.period_s).sin();
                [self.amplitude[0] * phase, self.amplitude[1] * phase]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = self
            .velocity
            .iter()
            .chain(&self.amplitude)
            .chain(std::iter::once(&self.period_s))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("scene.motion", "values must be finite"));
        }
        match self.kind {
            MotionKind::Static if self.velocity != [0.0; 2] || self.amplitude != [0.0; 2] => Err(
                Error::config("scene.motion.velocity", "static motion must have zero velocity"),
            ),
            MotionKind::Sinusoidal if self.period_s <= 0.0 => Err(Error::config(
                "scene.motion.period_s",
                "sinusoidal motion needs a positive period",
            )),
            _ => Ok(()),
        }
    }
}

/// The sun as a static, fixed-radius disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SunModel {
    pub center: [f64; 2],
    pub radius: f64,
    /// Disk irradiance as a multiple of the background irradiance.
    #[serde(default = "SunModel::default_ratio")]
    pub irradiance_ratio: f64,
}

impl SunModel {
    pub const DEFAULT_RATIO: f64 = 2.0e6;

    fn default_ratio() -> f64 {
        Self::DEFAULT_RATIO
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub background_irradiance: f64,
    pub target: TargetModel,
    pub motion: MotionProfile,
    #[serde(default)]
    pub sun: Option<SunModel>,
    pub illuminance_preset: IlluminancePreset,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    /// The canonical scene for each illumination preset at DAVIS346 resolution.
    pub fn preset(preset: IlluminancePreset) -> Self {
        let panels = |reflectance: f64| {
            vec![
                Panel {
                    rect: Rect::new(-62.0, 0.0, 28.0, 8.0),
                    reflectance,
                },
                Panel {
                    rect: Rect::new(62.0, 0.0, 28.0, 8.0),
                    reflectance,
                },
            ]
        };
        let body_reflectance = 4.0;
        let (body_center, panel_reflectance, motion, sun) = match preset {
            // Glare off the panels: 50x the body.
            IlluminancePreset::Hdr => (
                [150.0, 130.0],
                50.0 * body_reflectance,
                MotionProfile::linear(20.0, 0.0, 500_000),
                None,
            ),
            IlluminancePreset::ExtremeHdr => (
                [120.0, 150.0],
                2.0 * body_reflectance,
                MotionProfile::linear(40.0, 0.0, 500_000),
                Some(SunModel {
                    center: [290.0, 50.0],
                    radius: 24.0,
                    irradiance_ratio: SunModel::DEFAULT_RATIO,
                }),
            ),
            IlluminancePreset::FastMotion => (
                [100.0, 130.0],
                0.5 * body_reflectance,
                MotionProfile::linear(100.0, 0.0, 500_000),
                None,
            ),
        };
        SceneConfig {
            width: 346,
            height: 260,
            background_irradiance: 1.0,
            target: TargetModel {
                body: Rect::new(body_center[0], body_center[1], 30.0, 20.0),
                body_reflectance,
                panels: panels(panel_reflectance),
                texture: 0.0,
            },
            motion,
            sun,
            illuminance_preset: preset,
            seed: 0,
        }
    }

    /// Same geometry with the target held still.
    pub fn static_variant(mut self) -> Self {
        self.motion = MotionProfile::fixed();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("scene.width", "width and height must be >= 1"));
        }
        if !(self.background_irradiance > 0.0 && self.background_irradiance.is_finite()) {
            return Err(Error::config(
                "scene.background_irradiance",
                "must be finite and > 0",
            ));
        }
        self.target.body.validate("scene.target.body")?;
        check_reflectance("scene.target.body_reflectance", self.target.body_reflectance)?;
        for (i, panel) in self.target.panels.iter().enumerate() {
            panel.rect.validate(&format!("scene.target.panels[{i}].rect"))?;
            check_reflectance(&format!("scene.target.panels[{i}].reflectance"), panel.reflectance)?;
        }
        if !(0.0..1.0).contains(&self.target.texture) {
            return Err(Error::config("scene.target.texture", "must be in [0, 1)"));
        }
        self.motion.validate()?;
        if let Some(sun) = &self.sun {
            if !(sun.radius > 0.0 && sun.radius.is_finite()) {
                return Err(Error::config("scene.sun.radius", "must be finite and > 0"));
            }
            if !(sun.irradiance_ratio > 0.0 && sun.irradiance_ratio.is_finite()) {
                return Err(Error::config("scene.sun.irradiance_ratio", "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

// Occluding parts with zero reflectance would produce zero irradiance, where the
// log intensity is undefined.
fn check_reflectance(field: &str, r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "reflectance must be finite and > 0"))
    }
}

/// Dense linear-irradiance image at time `t` (microseconds), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T = f64> {
    pub width: u32,
    pub height: u32,
    pub t: u64,
    pub pixels: Vec<T>,
}

impl<T: Real> Frame<T> {
    pub fn uniform(width: u32, height: u32, t: u64, value: T) -> Self {
        Frame {
            width,
            height,
            t,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> T {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn min_max(&self) -> (T, T) {
        self.pixels
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Scene dynamic range in decibels: `20 log10(max / min)`.
pub fn dynamic_range_db<T: Real>(frame: &Frame<T>) -> T {
    let (lo, hi) = frame.min_max();
    T::lit(20.0) * (hi / lo).log10()
}

#[derive(Clone, Copy, Debug)]
struct Layer<T> {
    rect: Rect,
    value: T,
}

/// An immutable, renderable scene.
#[derive(Clone, Debug)]
pub struct Scene<T = f64> {
    config: SceneConfig,
    ambient: f64,
    /// Background plus sun; the moving target is drawn over it.
    base: Vec<T>,
    layers: Vec<Layer<T>>,
}

pub fn build_scene<T: Real>(config: &SceneConfig) -> Result<Scene<T>> {
    Scene::new(config)
}

impl<T: Real> Scene<T> {
    pub fn new(config: &SceneConfig) -> Result<Self> {
        config.validate()?;
        let ambient = config.illuminance_preset.ambient_lux();
        let (w, h) = (config.width as usize, config.height as usize);
        let background = ambient * config.background_irradiance;
        let mut base = vec![T::lit(background); w * h];

        if let Some(sun) = &config.sun {
            let value = background * sun.irradiance_ratio;
            draw_disk(&mut base, w, h, sun.center, sun.radius, value);
        }

        let target = &config.target;
        let body = target.body;
        let mut layers = Vec::with_capacity(1 + target.panels.len());
        if target.texture > 0.0 {
            layers.extend(textured_body(target, config.seed, ambient));
        } else {
            layers.push(Layer {
                rect: body,
                value: T::lit(ambient * target.body_reflectance),
            });
        }
        for panel in &target.panels {
            let mut rect = panel.rect;
            rect.center[0] += body.center[0];
            rect.center[1] += body.center[1];
            layers.push(Layer {
                rect,
                value: T::lit(ambient * panel.reflectance),
            });
        }

        Ok(Scene {
            config: config.clone(),
            ambient,
            base,
            layers,
        })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn width(&self) -> u32 {
        self.config.width
    }

    pub fn height(&self) -> u32 {
        self.config.height
    }

    pub fn ambient_lux(&self) -> f64 {
        self.ambient
    }

    /// Background irradiance after illuminance scaling.
    pub fn background_level(&self) -> f64 {
        self.ambient * self.config.background_irradiance
    }

    /// Body irradiance after illuminance scaling.
    pub fn body_level(&self) -> f64 {
        self.ambient * self.config.target.body_reflectance
    }

    /// Target displacement at `t_us`.
    pub fn offset(&self, t_us: u64) -> [f64; 2] {
        self.config.motion.offset(t_us)
    }

    /// Body rectangle in image coordinates at `t_us`.
    pub fn body_at(&self, t_us: u64) -> Rect {
        let [dx, dy] = self.offset(t_us);
        let mut body = self.config.target.body;
        body.center[0] += dx;
        body.center[1] += dy;
        body
    }

    pub fn render(&self, t_us: u64) -> Frame<T> {
        let mut pixels = self.base.clone();
        let [dx, dy] = self.offset(t_us);
        let (w, h) = (self.config.width as usize, self.config.height as usize);
        let mut cov_x = Vec::new();
        let mut cov_y = Vec::new();
        for layer in &self.layers {
            let (x0, x1) = layer.rect.x_range();
            let (y0, y1) = layer.rect.y_range();
            let Some(cols) = coverage_1d(x0 + dx, x1 + dx, w, &mut cov_x) else {
                continue;
            };
            let Some(rows) = coverage_1d(y0 + dy, y1 + dy, h, &mut cov_y) else {
                continue;
            };
            for (row, &cy) in rows.clone().zip(&cov_y) {
                let line = &mut pixels[row * w..(row + 1) * w];
                for (col, &cx) in cols.clone().zip(&cov_x) {
                    let c = T::lit(cx * cy);
                    let p = &mut line[col];
                    if c >= T::one() {
                        *p = layer.value;
                    } else {
                        *p = *p * (T::one() - c) + c * layer.value;
                    }
                }
            }
        }
        Frame {
            width: self.config.width,
            height: self.config.height,
            t: t_us,
            pixels,
        }
    }
}

/// Free-function form of [`Scene::render`].
pub fn render_irradiance<T: Real>(scene: &Scene<T>, t_us: u64) -> Frame<T> {
    scene.render(t_us)
}

/// Per-pixel overlap of the interval `[a, b]` with each unit cell in `0..n`.
/// Fills `out` with the coverages of the returned index range.
fn coverage_1d(a: f64, b: f64, n: usize, out: &mut Vec<f64>) -> Option<std::ops::Range<usize>> {
    let lo = a.max(0.0);
    let hi = b.min(n as f64);
    if hi <= lo {
        return None;
    }
    let first = lo.floor() as usize;
    let last = (hi.ceil() as usize).min(n);
    out.clear();
    out.extend((first..last).map(|i| {
        let cell_lo = i as f64;
        (hi.min(cell_lo + 1.0) - lo.max(cell_lo)).max(0.0)
    }));
    Some(first..last)
}

fn draw_disk<T: Real>(pixels: &mut [T], w: usize, h: usize, center: [f64; 2], radius: f64, value: f64) {
    const SUB: usize = 16;
    let x_lo = ((center[0] - radius).floor().max(0.0)) as usize;
    let x_hi = ((center[0] + radius).ceil().max(0.0) as usize).min(w);
    let y_lo = ((center[1] - radius).floor().max(0.0)) as usize;
    let y_hi = ((center[1] + radius).ceil().max(0.0) as usize).min(h);
    let r2 = radius * radius;
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let mut inside = 0usize;
            for sy in 0..SUB {
                let py = y as f64 + (sy as f64 + 0.5) / SUB as f64 - center[1];
                for sx in 0..SUB {
                    let px = x as f64 + (sx as f64 + 0.5) / SUB as f64 - center[0];
                    if px * px + py * py <= r2 {
                        inside += 1;
                    }
                }
            }
            if inside > 0 {
                let c = inside as f64 / (SUB * SUB) as f64;
                let p = &mut pixels[y * w + x];
                *p = T::lit(p.as_f64() * (1.0 - c) + c * value);
            }
        }
    }
}

/// Splits the body into 4x4 px cells with seeded reflectance jitter.
fn textured_body<T: Real>(target: &TargetModel, seed: u64, ambient: f64) -> Vec<Layer<T>> {
    const CELL: f64 = 4.0;
    let body = target.body;
    let (x0, x1) = body.x_range();
    let (y0, y1) = body.y_range();
    let nx = ((x1 - x0) / CELL).ceil() as usize;
    let ny = ((y1 - y0) / CELL).ceil() as usize;
    let mut layers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx0 = x0 + i as f64 * CELL;
            let cy0 = y0 + j as f64 * CELL;
            let cx1 = (cx0 + CELL).min(x1);
            let cy1 = (cy0 + CELL).min(y1);
            let u = unit_hash(seed, (j * nx + i) as u64) * 2.0 - 1.0;
            let reflectance = target.body_reflectance * (1.0 + target.texture * u);
            layers.push(Layer {
                rect: Rect::new((cx0 + cx1) / 2.0, (cy0 + cy1) / 2.0, (cx1 - cx0) / 2.0, (cy1 - cy0) / 2.0),
                value: T::lit(ambient * reflectance),
            });
        }
    }
    layers
}

// splitmix64 finalizer mapped to [0, 1).
fn unit_hash(seed: u64, index: u64) -> f64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
