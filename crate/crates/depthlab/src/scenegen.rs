//! Deterministic procedural (image, depth) pairs.
//!
//! Scenes are built from analytic primitives — tilted rectangles, spheres,
//! and axis-aligned boxes — ray-cast against a constant background plane
//! through a pinhole camera. Depth is the hit distance along the optical
//! axis; the image is Lambertian shading under a fixed directional light
//! with a per-primitive albedo. Every geometric quantity therefore has a
//! closed-form oracle.
//!
//! Determinism is load-bearing: sample `index` under `spec.seed` is rendered
//! from its own [`SplitMix64`] stream, and the hot path uses only IEEE-754
//! basic operations (`+ - * /` and `sqrt`), so outputs are byte-identical
//! across runs, thread schedules, and platforms.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pfm;
use crate::raster::{DepthMap, DepthUnits, ImageMap};
use crate::rng::SplitMix64;

/// Primitive kinds available to the generator, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PrimitiveKind {
    Plane,
    Sphere,
    Box,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 3] = [PrimitiveKind::Plane, PrimitiveKind::Sphere, PrimitiveKind::Box];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Plane => "plane",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Box => "box",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(PrimitiveKind::Plane),
            "sphere" => Ok(PrimitiveKind::Sphere),
            "box" => Ok(PrimitiveKind::Box),
            other => Err(Error::Config(format!("unknown primitive kind {other:?}"))),
        }
    }
}

/// Pinhole camera: focal length in pixels and principal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    /// Camera centered on a raster with focal length equal to its width.
    pub fn centered(height: usize, width: usize) -> Self {
        Camera {
            focal_px: width as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }
}

/// Full description of a scene family; `(spec, index)` pins one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub n_primitives: usize,
    /// Sorted, deduplicated set of kinds the sampler may draw from.
    pub kinds: Vec<PrimitiveKind>,
    pub camera: Camera,
}

impl SceneSpec {
    pub fn new(seed: u64, height: usize, width: usize, n_primitives: usize) -> Self {
        SceneSpec {
            seed,
            height,
            width,
            n_primitives,
            kinds: PrimitiveKind::ALL.to_vec(),
            camera: Camera::centered(height, width),
        }
    }

    /// One-line `key=value` form used in manifests and config echoes.
    pub fn describe(&self) -> String {
        let kinds: Vec<&str> = self.kinds.iter().map(|k| k.name()).collect();
        format!(
            "seed={} height={} width={} n_primitives={} kinds={} focal_px={} cx={} cy={}",
            self.seed,
            self.height,
            self.width,
            self.n_primitives,
            kinds.join(","),
            self.camera.focal_px,
            self.camera.cx,
            self.camera.cy
        )
    }
}

/// One rendered training pair. Depth is metric and strictly positive.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub image: ImageMap,
    pub depth: DepthMap,
}

#[derive(Debug, Clone, Copy)]
struct Vec3 {
    x: f64,
    y: f64,
    z: f64,
}

impl Vec3 {
    fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    fn normalized(self) -> Vec3 {
        let n = self.dot(self).sqrt();
        self.scale(1.0 / n)
    }

    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A renderable primitive in camera space.
#[derive(Debug, Clone)]
pub enum Primitive {
    /// Finite rectangle: center, two orthonormal in-plane axes with
    /// half-extents, and the unit normal.
    Rect {
        center: Vec3Pub,
        axis_u: Vec3Pub,
        axis_v: Vec3Pub,
        half_u: f64,
        half_v: f64,
        albedo: [f64; 3],
    },
    Sphere {
        center: Vec3Pub,
        radius: f64,
        albedo: [f64; 3],
    },
    /// Axis-aligned box given by min/max corners.
    Box {
        min: Vec3Pub,
        max: Vec3Pub,
        albedo: [f64; 3],
    },
}

/// Public plain-old-data 3-vector for primitive placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3Pub {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3Pub {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3Pub { x, y, z }
    }

    fn v(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

const BACKGROUND_DEPTH: f64 = 10.0;
const NEAR_CLIP: f64 = 0.5;
const AMBIENT: f64 = 0.15;

/// Fixed directional light (unit vector pointing from surfaces toward the
/// light, tilted toward the camera so visible faces are lit).
fn light_dir() -> Vec3 {
    Vec3::new(0.35, -0.45, -0.82).normalized()
}

struct Hit {
    t: f64,
    normal: Vec3,
    albedo: [f64; 3],
}

fn intersect(prim: &Primitive, origin: Vec3, dir: Vec3) -> Option<Hit> {
    match prim {
        Primitive::Rect {
            center,
            axis_u,
            axis_v,
            half_u,
            half_v,
            albedo,
        } => {
            let n = axis_u.v().cross(axis_v.v()).normalized();
            let denom = dir.dot(n);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = center.v().sub(origin).dot(n) / denom;
            if t <= NEAR_CLIP {
                return None;
            }
            let p = origin.add(dir.scale(t));
            let rel = p.sub(center.v());
            if rel.dot(axis_u.v()).abs() <= *half_u && rel.dot(axis_v.v()).abs() <= *half_v {
                Some(Hit {
                    t,
                    normal: n,
                    albedo: *albedo,
                })
            } else {
                None
            }
        }
        Primitive::Sphere { center, radius, albedo } => {
            let oc = origin.sub(center.v());
            let a = dir.dot(dir);
            let b = 2.0 * oc.dot(dir);
            let c = oc.dot(oc) - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t0 = (-b - sq) / (2.0 * a);
            let t1 = (-b + sq) / (2.0 * a);
            let t = if t0 > NEAR_CLIP {
                t0
            } else if t1 > NEAR_CLIP {
                t1
            } else {
                return None;
            };
            let p = origin.add(dir.scale(t));
            Some(Hit {
                t,
                normal: p.sub(center.v()).scale(1.0 / radius),
                albedo: *albedo,
            })
        }
        Primitive::Box { min, max, albedo } => {
            // Slab method, tracking which axis bounds the entry point.
            let mut t_enter = f64::NEG_INFINITY;
            let mut t_exit = f64::INFINITY;
            let mut enter_axis = 0usize;
            let mins = [min.x, min.y, min.z];
            let maxs = [max.x, max.y, max.z];
            let o = [origin.x, origin.y, origin.z];
            let d = [dir.x, dir.y, dir.z];
            for axis in 0..3 {
                if d[axis].abs() < 1e-12 {
                    if o[axis] < mins[axis] || o[axis] > maxs[axis] {
                        return None;
                    }
                    continue;
                }
                let inv = 1.0 / d[axis];
                let mut t0 = (mins[axis] - o[axis]) * inv;
                let mut t1 = (maxs[axis] - o[axis]) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                if t0 > t_enter {
                    t_enter = t0;
                    enter_axis = axis;
                }
                t_exit = t_exit.min(t1);
                if t_enter > t_exit {
                    return None;
                }
            }
            if t_enter <= NEAR_CLIP {
                return None;
            }
            let mut n = [0.0f64; 3];
            n[enter_axis] = if d[enter_axis] > 0.0 { -1.0 } else { 1.0 };
            Some(Hit {
                t: t_enter,
                normal: Vec3::new(n[0], n[1], n[2]),
                albedo: *albedo,
            })
        }
    }
}

fn sample_albedo(rng: &mut SplitMix64) -> [f64; 3] {
    [
        rng.range_f64(0.15, 0.95),
        rng.range_f64(0.15, 0.95),
        rng.range_f64(0.15, 0.95),
    ]
}

/// Places a primitive of the given kind somewhere inside the view frustum.
fn sample_primitive(kind: PrimitiveKind, spec: &SceneSpec, rng: &mut SplitMix64) -> Primitive {
    let cam = spec.camera;
    // Anchor on a random pixel at a random depth so the primitive is framed.
    let u = rng.range_f64(0.1, 0.9) * spec.width as f64;
    let v = rng.range_f64(0.1, 0.9) * spec.height as f64;
    let z = rng.range_f64(2.5, 7.5);
    let center = Vec3Pub::new((u - cam.cx) / cam.focal_px * z, (v - cam.cy) / cam.focal_px * z, z);
    let albedo = sample_albedo(rng);
    match kind {
        PrimitiveKind::Sphere => Primitive::Sphere {
            center,
            radius: rng.range_f64(0.4, 1.3),
            albedo,
        },
        PrimitiveKind::Box => {
            let hx = rng.range_f64(0.3, 1.1);
            let hy = rng.range_f64(0.3, 1.1);
            let hz = rng.range_f64(0.3, 1.1);
            Primitive::Box {
                min: Vec3Pub::new(center.x - hx, center.y - hy, center.z - hz),
                max: Vec3Pub::new(center.x + hx, center.y + hy, center.z + hz),
                albedo,
            }
        }
        PrimitiveKind::Plane => {
            // Tilted rectangle with a random in-plane frame.
            let raw_n = Vec3::new(rng.range_f64(-0.6, 0.6), rng.range_f64(-0.6, 0.6), -1.0).normalized();
            // Build an orthonormal basis around the normal.
            let helper = if raw_n.x.abs() < 0.8 {
                Vec3::new(1.0, 0.0, 0.0)
            } else {
                Vec3::new(0.0, 1.0, 0.0)
            };
            let axis_u = raw_n.cross(helper).normalized();
            let axis_v = raw_n.cross(axis_u).normalized();
            Primitive::Rect {
                center,
                axis_u: Vec3Pub::new(axis_u.x, axis_u.y, axis_u.z),
                axis_v: Vec3Pub::new(axis_v.x, axis_v.y, axis_v.z),
                half_u: rng.range_f64(0.6, 2.0),
                half_v: rng.range_f64(0.6, 2.0),
                albedo,
            }
        }
    }
}

/// Renders an explicit primitive list (the entry point closed-form oracles
/// use; `generate_sample` is this plus deterministic placement).
pub fn render_scene(
    spec: &SceneSpec,
    primitives: &[Primitive],
    background_albedo: [f64; 3],
) -> SceneSample {
    let cam = spec.camera;
    let light = light_dir();
    let origin = Vec3::new(0.0, 0.0, 0.0);
    let n_px = spec.height * spec.width;
    let mut depth = vec![0f32; n_px];
    let mut image = vec![0f32; n_px * 3];

    for py in 0..spec.height {
        for px in 0..spec.width {
            // Ray through the pixel center with unit z so t equals z-depth.
            let dir = Vec3::new(
                (px as f64 + 0.5 - cam.cx) / cam.focal_px,
                (py as f64 + 0.5 - cam.cy) / cam.focal_px,
                1.0,
            );
            let mut best = Hit {
                t: BACKGROUND_DEPTH,
                normal: Vec3::new(0.0, 0.0, -1.0),
                albedo: background_albedo,
            };
            for prim in primitives {
                if let Some(hit) = intersect(prim, origin, dir) {
                    if hit.t < best.t {
                        best = hit;
                    }
                }
            }
            // Face the normal toward the camera before shading.
            let n = if best.normal.dot(dir) > 0.0 {
                best.normal.neg()
            } else {
                best.normal
            };
            let lambert = n.dot(light).max(0.0);
            let shade = AMBIENT + (1.0 - AMBIENT) * lambert;
            let idx = py * spec.width + px;
            depth[idx] = best.t as f32;
            for c in 0..3 {
                image[idx * 3 + c] = (best.albedo[c] * shade).clamp(0.0, 1.0) as f32;
            }
        }
    }

    SceneSample {
        image: ImageMap::new(spec.height, spec.width, 3, image).expect("shading stays in [0,1]"),
        depth: DepthMap::dense(spec.height, spec.width, depth, DepthUnits::Metric)
            .expect("depth is positive and finite"),
    }
}

/// Deterministically renders sample `index` of the scene family.
pub fn generate_sample(spec: &SceneSpec, index: u64) -> SceneSample {
    let mut rng = SplitMix64::derive(spec.seed, index);
    let background_albedo = sample_albedo(&mut rng);
    let mut primitives = Vec::with_capacity(spec.n_primitives);
    let kinds = if spec.kinds.is_empty() {
        PrimitiveKind::ALL.to_vec()
    } else {
        spec.kinds.clone()
    };
    for _ in 0..spec.n_primitives {
        let kind = kinds[rng.range_usize(kinds.len())];
        primitives.push(sample_primitive(kind, spec, &mut rng));
    }
    render_scene(spec, &primitives, background_albedo)
}

/// Relative file names of sample `index` within a split directory.
pub fn sample_file_names(index: u64) -> (String, String) {
    (format!("{index:05}_image.pfm"), format!("{index:05}_depth.pfm"))
}

/// A split on disk: directory plus (image, depth) relative path pairs.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub dir: PathBuf,
    pub spec_line: String,
    pub pairs: Vec<(String, String)>,
}

impl Manifest {
    pub fn path(&self) -> PathBuf {
        self.dir.join("manifest.txt")
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Loads the `index`-th pair from disk.
    pub fn load(&self, index: usize) -> Result<SceneSample> {
        let (img_rel, dep_rel) = &self.pairs[index];
        let image = pfm::read_image_pfm(&self.dir.join(img_rel))?;
        let depth = pfm::read_depth_pfm(&self.dir.join(dep_rel), DepthUnits::Metric)?;
        Ok(SceneSample { image, depth })
    }

    /// Loads every pair into memory.
    pub fn load_all(&self) -> Result<Vec<SceneSample>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}

/// Renders `count` samples to `out_dir` and writes `manifest.txt`.
///
/// Refuses to touch an existing non-empty directory unless `force` is set.
/// Rendering runs in parallel; outputs are identical regardless of schedule.
pub fn generate_split(spec: &SceneSpec, count: usize, out_dir: &Path, force: bool) -> Result<Manifest> {
    if count == 0 {
        return Err(Error::Config("split count must be >= 1".into()));
    }
    if out_dir.exists() {
        let non_empty = fs::read_dir(out_dir)
            .map_err(|e| Error::io(out_dir.display().to_string(), e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::io(
                out_dir.display().to_string(),
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "output directory is not empty (pass force to overwrite)",
                ),
            ));
        }
    } else {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    }

    let indices: Vec<u64> = (0..count as u64).collect();
    indices.par_iter().try_for_each(|&i| -> Result<()> {
        let sample = generate_sample(spec, i);
        let (img_rel, dep_rel) = sample_file_names(i);
        pfm::write_image_pfm(&out_dir.join(img_rel), &sample.image)?;
        pfm::write_depth_pfm(&out_dir.join(dep_rel), &sample.depth)?;
        Ok(())
    })?;

    let spec_line = spec.describe();
    let mut body = String::new();
    writeln!(body, "# spec: {spec_line}").expect("string write");
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let (img_rel, dep_rel) = sample_file_names(i);
        writeln!(body, "{img_rel}\t{dep_rel}").expect("string write");
        pairs.push((img_rel, dep_rel));
    }
    let manifest_path = out_dir.join("manifest.txt");
    fs::write(&manifest_path, body).map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    Ok(Manifest {
        dir: out_dir.to_path_buf(),
        spec_line,
        pairs,
    })
}

/// Parses a manifest file written by [`generate_split`].
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut spec_line = String::new();
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# spec:") {
            spec_line = rest.trim().to_string();
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(img), Some(dep)) => pairs.push((img.to_string(), dep.to_string())),
            _ => {
                return Err(Error::Format(format!(
                    "{}: line {} is not \"image<TAB>depth\"",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Format(format!("{}: manifest lists no samples", path.display())));
    }
    Ok(Manifest {
        dir,
        spec_line,
        pairs,
    })
}
