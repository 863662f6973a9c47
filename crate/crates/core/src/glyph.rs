//! Glyph images: a seeded procedural renderer and ingestion of external
//! glyph collections.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::symbol::Symbol;

pub const GLYPH_SIDE: usize = 28;
pub const GLYPH_PIXELS: usize = GLYPH_SIDE * GLYPH_SIDE;

/// A 28x28 grayscale image, row-major, intensities in `[0, 1]`.
#[derive(Clone, PartialEq)]
pub struct GlyphImage {
    pixels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GlyphError {
    #[error("expected {GLYPH_PIXELS} pixels, got {0}")]
    WrongSize(usize),
    #[error("pixel {index} has intensity {value} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

impl GlyphImage {
    pub fn new(pixels: Vec<f64>) -> Result<Self, GlyphError> {
        if pixels.len() != GLYPH_PIXELS {
            return Err(GlyphError::WrongSize(pixels.len()));
        }
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(GlyphError::OutOfRange { index, value });
        }
        Ok(GlyphImage { pixels })
    }

    pub fn blank() -> Self {
        GlyphImage {
            pixels: vec![0.0; GLYPH_PIXELS],
        }
    }

    /// Decodes an 8-bit block; each intensity is `raw / 255`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GlyphError> {
        if bytes.len() != GLYPH_PIXELS {
            return Err(GlyphError::WrongSize(bytes.len()));
        }
        Ok(GlyphImage {
            pixels: bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        })
    }

    /// Quantizes to 8 bits. Exact inverse of [`GlyphImage::from_bytes`]
    /// for images whose intensities are multiples of 1/255.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * GLYPH_SIDE + col]
    }
}

impl std::fmt::Debug for GlyphImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ink: f64 = self.pixels.iter().sum();
        f.debug_struct("GlyphImage").field("ink", &ink).finish()
    }
}

/// Random variation applied by the renderer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphStyle {
    /// Maximum translation of the glyph center, in pixels.
    pub max_offset: f64,
    /// Relative size jitter: scale is drawn from `1 ± scale_jitter`.
    pub scale_jitter: f64,
    /// Maximum horizontal shear (slant).
    pub max_shear: f64,
    /// Maximum displacement of each stroke endpoint, in glyph units.
    pub stroke_jitter: f64,
    pub min_thickness: f64,
    pub max_thickness: f64,
    /// Amplitude of additive pixel noise (approximately Gaussian).
    pub noise: f64,
}

impl GlyphStyle {
    /// Geometric jitter only; no pixel noise.
    pub fn clean() -> Self {
        GlyphStyle {
            noise: 0.0,
            ..GlyphStyle::mild()
        }
    }

    pub fn mild() -> Self {
        GlyphStyle {
            max_offset: 2.0,
            scale_jitter: 0.15,
            max_shear: 0.25,
            stroke_jitter: 0.12,
            min_thickness: 1.4,
            max_thickness: 2.6,
            noise: 0.15,
        }
    }
}

impl Default for GlyphStyle {
    fn default() -> Self {
        GlyphStyle::mild()
    }
}

#[derive(Debug, Clone, Copy)]
enum Stroke {
    Line([f64; 2], [f64; 2]),
    Ellipse { center: [f64; 2], rx: f64, ry: f64 },
}

fn base_strokes(symbol: Symbol) -> Vec<Stroke> {
    match symbol {
        Symbol::Zero => vec![Stroke::Ellipse {
            center: [0.0, 0.0],
            rx: 0.55,
            ry: 0.85,
        }],
        Symbol::One => vec![
            Stroke::Line([0.05, -0.85], [0.05, 0.85]),
            Stroke::Line([-0.3, -0.55], [0.05, -0.85]),
        ],
        Symbol::Plus => vec![
            Stroke::Line([-0.7, 0.0], [0.7, 0.0]),
            Stroke::Line([0.0, -0.7], [0.0, 0.7]),
        ],
        Symbol::Equals => vec![
            Stroke::Line([-0.7, -0.3], [0.7, -0.3]),
            Stroke::Line([-0.7, 0.3], [0.7, 0.3]),
        ],
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (ex, ey) = (p[0] - a[0] - t * dx, p[1] - a[1] - t * dy);
    (ex * ex + ey * ey).sqrt()
}

fn stroke_distance(p: [f64; 2], stroke: &Stroke) -> f64 {
    match *stroke {
        Stroke::Line(a, b) => segment_distance(p, a, b),
        Stroke::Ellipse { center, rx, ry } => {
            let (u, v) = ((p[0] - center[0]) / rx, (p[1] - center[1]) / ry);
            let r = (u * u + v * v).sqrt();
            (r - 1.0).abs() * 0.5 * (rx + ry)
        }
    }
}

/// Half the glyph extent in pixels at scale 1.
const GLYPH_RADIUS_PX: f64 = 10.0;

/// Renders `symbol` with the default [`GlyphStyle`].
pub fn render_glyph(symbol: Symbol, rng_seed: u64) -> GlyphImage {
    render_glyph_with(symbol, rng_seed, &GlyphStyle::default())
}

/// Deterministic procedural bitmap of `symbol`.
///
/// Only IEEE-exact operations (arithmetic and `sqrt`) are used so that the
/// quantized output is identical on every platform. Intensities are
/// clamped to `[0, 1]` and rounded to multiples of 1/255.
pub fn render_glyph_with(symbol: Symbol, rng_seed: u64, style: &GlyphStyle) -> GlyphImage {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let sym = |rng: &mut ChaCha8Rng, m: f64| if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };

    let dx = sym(&mut rng, style.max_offset);
    let dy = sym(&mut rng, style.max_offset);
    let scale = 1.0 + sym(&mut rng, style.scale_jitter);
    let shear = sym(&mut rng, style.max_shear);
    let thickness = if style.max_thickness > style.min_thickness {
        rng.gen_range(style.min_thickness..=style.max_thickness)
    } else {
        style.min_thickness
    };
    let strokes: Vec<Stroke> = base_strokes(symbol)
        .into_iter()
        .map(|s| {
            let j = style.stroke_jitter;
            match s {
                Stroke::Line(a, b) => Stroke::Line(
                    [a[0] + sym(&mut rng, j), a[1] + sym(&mut rng, j)],
                    [b[0] + sym(&mut rng, j), b[1] + sym(&mut rng, j)],
                ),
                Stroke::Ellipse { center, rx, ry } => Stroke::Ellipse {
                    center: [center[0] + sym(&mut rng, j * 0.5), center[1] + sym(&mut rng, j * 0.5)],
                    rx: rx * (1.0 + sym(&mut rng, j)),
                    ry: ry * (1.0 + sym(&mut rng, j)),
                },
            }
        })
        .collect();

    let unit = GLYPH_RADIUS_PX * scale;
    let half_width = thickness / 2.0;
    let mut pixels = Vec::with_capacity(GLYPH_PIXELS);
    for row in 0..GLYPH_SIDE {
        for col in 0..GLYPH_SIDE {
            let y = (row as f64 + 0.5 - 14.0 - dy) / unit;
            let x = (col as f64 + 0.5 - 14.0 - dx) / unit - shear * y;
            let d = strokes
                .iter()
                .map(|s| stroke_distance([x, y], s))
                .fold(f64::INFINITY, f64::min)
                * unit;
            let mut v = (half_width + 0.5 - d).clamp(0.0, 1.0);
            if style.noise > 0.0 {
                // Irwin-Hall(4), rescaled to unit variance.
                let u: f64 = (0..4).map(|_| rng.gen::<f64>()).sum::<f64>() - 2.0;
                v += style.noise * u * 3f64.sqrt();
            }
            pixels.push(((v.clamp(0.0, 1.0) * 255.0).round()) / 255.0);
        }
    }
    GlyphImage { pixels }
}

/// Images per symbol class, e.g. from an external handwriting collection.
#[derive(Debug, Clone, Default)]
pub struct GlyphPool {
    classes: BTreeMap<Symbol, Vec<GlyphImage>>,
}

impl GlyphPool {
    pub fn new() -> Self {
        GlyphPool::default()
    }

    pub fn insert(&mut self, symbol: Symbol, image: GlyphImage) {
        self.classes.entry(symbol).or_default().push(image);
    }

    pub fn images(&self, symbol: Symbol) -> &[GlyphImage] {
        self.classes.get(&symbol).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self, symbol: Symbol) -> usize {
        self.images(symbol).len()
    }

    pub fn is_complete(&self) -> bool {
        Symbol::ALL.iter().all(|s| self.len(*s) > 0)
    }

    /// Picks one image of `symbol` uniformly at random.
    pub fn sample(&self, symbol: Symbol, rng: &mut impl Rng) -> Option<&GlyphImage> {
        let images = self.images(symbol);
        if images.is_empty() {
            None
        } else {
            Some(&images[rng.gen_range(0..images.len())])
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cannot decode {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("no images for class {0}")]
    MissingClass(Symbol),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlyphFormat {
    Pgm,
    Raw784,
}

/// One record of a glyph ingestion manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlyphRecord {
    pub class: Symbol,
    pub path: String,
    pub format: GlyphFormat,
}

fn decode_pgm(bytes: &[u8]) -> Result<GlyphImage, String> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm).map_err(|e| e.to_string())?;
    let gray = img.to_luma8();
    let gray = if gray.width() as usize != GLYPH_SIDE || gray.height() as usize != GLYPH_SIDE {
        image::imageops::resize(&gray, GLYPH_SIDE as u32, GLYPH_SIDE as u32, image::imageops::FilterType::Triangle)
    } else {
        gray
    };
    GlyphImage::from_bytes(gray.as_raw()).map_err(|e| e.to_string())
}

/// Loads a JSONL manifest of `{class, path, format}` records into a pool.
/// Relative paths resolve against the manifest's directory. Every class
/// must end up with at least one image.
pub fn ingest_glyphs(manifest_path: &Path) -> Result<GlyphPool, IngestError> {
    let file = fs::File::open(manifest_path).map_err(|source| IngestError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut pool = GlyphPool::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: manifest_path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GlyphRecord = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let path = base.join(&record.path);
        let bytes = fs::read(&path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        let image = match record.format {
            GlyphFormat::Raw784 => GlyphImage::from_bytes(&bytes).map_err(|e| e.to_string()),
            GlyphFormat::Pgm => decode_pgm(&bytes),
        }
        .map_err(|message| IngestError::Unreadable { path, message })?;
        pool.insert(record.class, image);
    }
    if let Some(missing) = Symbol::ALL.iter().find(|s| pool.len(**s) == 0) {
        return Err(IngestError::MissingClass(*missing));
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(render_glyph(Symbol::Plus, 0), render_glyph(Symbol::Plus, 0));
        assert_ne!(render_glyph(Symbol::Plus, 0), render_glyph(Symbol::Plus, 1));
    }

    #[test]
    fn intensities_are_clamped() {
        for seed in 0..50 {
            let g = render_glyph(Symbol::One, seed);
            assert!(g.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn distinct_symbols_render_differently() {
        assert_ne!(render_glyph(Symbol::Zero, 0), render_glyph(Symbol::One, 0));
    }

    #[test]
    fn byte_round_trip() {
        let g = render_glyph(Symbol::Equals, 3);
        assert_eq!(GlyphImage::from_bytes(&g.to_bytes()).unwrap(), g);
    }

    #[test]
    fn glyphs_carry_ink() {
        for s in Symbol::ALL {
            let g = render_glyph_with(s, 9, &GlyphStyle::clean());
            let ink: f64 = g.pixels().iter().sum();
            assert!(ink > 20.0, "{s} ink {ink}");
        }
    }

    #[test]
    fn rejects_bad_images() {
        assert_eq!(GlyphImage::new(vec![0.0; 10]), Err(GlyphError::WrongSize(10)));
        let mut px = vec![0.0; GLYPH_PIXELS];
        px[5] = 1.5;
        assert!(matches!(GlyphImage::new(px), Err(GlyphError::OutOfRange { index: 5, .. })));
    }
}
