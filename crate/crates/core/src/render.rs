//! Printed-text conditioning images: glyph atlas, layouts and rasterization.
//!
//! A layout places glyph boxes by their *anchor*, the midpoint of the box's
//! left edge. Rotation turns the box about that point, so a horizontal layout
//! is a sequence of anchors on row 32 advancing by each glyph's advance.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use crate::charset::Charset;
use crate::error::{Error, Result};
use crate::image::{TextImage, HEIGHT, TRAIN_WIDTH};

/// Canvas widths are rounded up to a multiple of this.
pub const WIDTH_QUANTUM: usize = 16;
pub const DEFAULT_MAX_CANVAS: usize = 4096;
const CENTER_ROW: f64 = (HEIGHT / 2) as f64;

const BUILTIN_SHEET: &[u8] = include_bytes!("../assets/atlas.png");
const BUILTIN_METRICS: &str = include_str!("../assets/atlas.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    width: usize,
    height: usize,
    advance: usize,
    ink: Vec<bool>,
}

impl Glyph {
    pub fn new(width: usize, height: usize, advance: usize, ink: Vec<bool>) -> Result<Self> {
        if ink.len() != width * height {
            return Err(Error::Atlas(format!(
                "glyph bitmap has {} pixels, expected {width}x{height}",
                ink.len()
            )));
        }
        if height > HEIGHT {
            return Err(Error::Atlas(format!("glyph height {height} exceeds {HEIGHT}")));
        }
        Ok(Self {
            width,
            height,
            advance,
            ink,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn advance(&self) -> usize {
        self.advance
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.ink[y * self.width + x]
    }
}

/// Monochrome glyph bitmaps keyed by character.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphAtlas {
    glyphs: BTreeMap<char, Glyph>,
}

impl GlyphAtlas {
    /// The atlas shipped with the crate (DejaVu Sans, printable ASCII).
    pub fn builtin() -> &'static GlyphAtlas {
        static ATLAS: OnceLock<GlyphAtlas> = OnceLock::new();
        ATLAS.get_or_init(|| {
            let sheet = image::load_from_memory(BUILTIN_SHEET)
                .expect("built-in atlas sheet decodes")
                .to_luma8();
            GlyphAtlas::from_parts(&sheet, BUILTIN_METRICS).expect("built-in atlas is valid")
        })
    }

    /// Loads a raster sheet plus its metrics sidecar.
    pub fn load(sheet: impl AsRef<Path>, metrics: impl AsRef<Path>) -> Result<Self> {
        let sheet = image::open(sheet.as_ref())?.to_luma8();
        let metrics = std::fs::read_to_string(metrics.as_ref())?;
        Self::from_parts(&sheet, &metrics)
    }

    /// Metrics lines are tab-separated: character, x, y, w, h, advance.
    /// Sheet pixels darker than mid-gray are ink.
    pub fn from_parts(sheet: &image::GrayImage, metrics: &str) -> Result<Self> {
        let mut glyphs = BTreeMap::new();
        for (lineno, line) in metrics.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| Error::Atlas(format!("metrics line {}: {msg}", lineno + 1));
            if fields.len() != 6 {
                return Err(bad("expected 6 tab-separated fields"));
            }
            let mut chars = fields[0].chars();
            let c = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(bad("first field must be a single character")),
            };
            let nums = fields[1..]
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("non-integer metric"))?;
            let [x, y, w, h, advance] = [nums[0], nums[1], nums[2], nums[3], nums[4]];
            if x + w > sheet.width() as usize || y + h > sheet.height() as usize {
                return Err(bad("glyph box outside the sheet"));
            }
            let mut ink = Vec::with_capacity(w * h);
            for gy in 0..h {
                for gx in 0..w {
                    ink.push(sheet.get_pixel((x + gx) as u32, (y + gy) as u32)[0] < 128);
                }
            }
            let glyph = Glyph::new(w, h, advance, ink).map_err(|e| bad(&e.to_string()))?;
            if glyphs.insert(c, glyph).is_some() {
                return Err(bad("duplicate character"));
            }
        }
        if glyphs.is_empty() {
            return Err(Error::Atlas("no glyphs".into()));
        }
        Ok(Self { glyphs })
    }

    pub fn glyph(&self, c: char) -> Result<&Glyph> {
        self.glyphs
            .get(&c)
            .ok_or_else(|| Error::Atlas(format!("no glyph for {c:?}")))
    }

    pub fn advance(&self, c: char) -> Result<usize> {
        self.glyph(c).map(Glyph::advance)
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.glyphs.keys().copied()
    }

    /// Fails with the first charset symbol that has no glyph.
    pub fn covers(&self, charset: &Charset) -> Result<()> {
        match charset.symbols().iter().find(|c| !self.glyphs.contains_key(c)) {
            Some(c) => Err(Error::Atlas(format!("no glyph for {c:?}"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphPlacement {
    pub symbol: char,
    /// Anchor (left-edge midpoint of the glyph box) in canvas pixels.
    pub x: f64,
    pub y: f64,
    /// Clockwise rotation in radians (image y axis points down).
    pub rotation: f64,
}

/// Per-character placement plan over a 64-pixel-tall canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSpec {
    pub placements: Vec<GlyphPlacement>,
    pub nominal_em: usize,
    pub canvas_width: usize,
}

impl LayoutSpec {
    pub fn empty(canvas_width: usize) -> Self {
        Self {
            placements: Vec::new(),
            nominal_em: 0,
            canvas_width,
        }
    }

    pub fn text(&self) -> String {
        self.placements.iter().map(|p| p.symbol).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.canvas_width == 0 || self.canvas_width % WIDTH_QUANTUM != 0 {
            return Err(Error::Layout(format!(
                "canvas width {} is not a positive multiple of {WIDTH_QUANTUM}",
                self.canvas_width
            )));
        }
        for p in &self.placements {
            let inside = (0.0..=self.canvas_width as f64).contains(&p.x)
                && (0.0..=HEIGHT as f64).contains(&p.y);
            if !inside || !p.rotation.is_finite() {
                return Err(Error::Layout(format!(
                    "anchor of {:?} at ({:.1}, {:.1}) lies outside the {}x{HEIGHT} canvas",
                    p.symbol, p.x, p.y, self.canvas_width
                )));
            }
        }
        Ok(())
    }
}

fn round_up_width(w: f64) -> usize {
    let w = w.ceil().max(1.0) as usize;
    w.div_ceil(WIDTH_QUANTUM) * WIDTH_QUANTUM
}

fn nominal_em(text: &str, atlas: &GlyphAtlas) -> Result<usize> {
    let mut em = 0;
    for c in text.chars() {
        em = em.max(atlas.glyph(c)?.height());
    }
    Ok(em)
}

/// Left-to-right placement on the center row with `interval_px` pixels
/// between consecutive glyph boxes.
pub fn layout_linear(text: &str, interval_px: usize, atlas: &GlyphAtlas) -> Result<LayoutSpec> {
    layout_linear_bounded(text, interval_px, atlas, DEFAULT_MAX_CANVAS)
}

pub fn layout_linear_bounded(
    text: &str,
    interval_px: usize,
    atlas: &GlyphAtlas,
    max_canvas: usize,
) -> Result<LayoutSpec> {
    if text.is_empty() {
        return Err(Error::Layout("text is empty".into()));
    }
    let mut placements = Vec::new();
    let mut pen = 0usize;
    for (i, c) in text.chars().enumerate() {
        if i > 0 {
            pen += interval_px;
        }
        placements.push(GlyphPlacement {
            symbol: c,
            x: pen as f64,
            y: CENTER_ROW,
            rotation: 0.0,
        });
        pen += atlas.advance(c)?;
    }
    let canvas_width = round_up_width(pen as f64);
    if canvas_width > max_canvas {
        return Err(Error::Layout(format!(
            "text needs {canvas_width} px, more than the {max_canvas} px maximum"
        )));
    }
    Ok(LayoutSpec {
        placements,
        nominal_em: nominal_em(text, atlas)?,
        canvas_width,
    })
}

/// Places glyph anchors at equal arc-length spacing along a circular arc
/// of `radius_px` spanning `arc_span_rad`, apex up, each glyph rotated to
/// the local tangent. A zero span is the straight-line limit and yields the
/// zero-interval linear layout.
pub fn layout_curved(
    text: &str,
    radius_px: f64,
    arc_span_rad: f64,
    atlas: &GlyphAtlas,
) -> Result<LayoutSpec> {
    if text.is_empty() {
        return Err(Error::Layout("text is empty".into()));
    }
    if !(radius_px.is_finite() && radius_px > 0.0) {
        return Err(Error::Layout(format!("radius {radius_px} must be positive")));
    }
    if !(0.0..=std::f64::consts::PI).contains(&arc_span_rad) {
        return Err(Error::Layout(format!(
            "arc span {arc_span_rad} must lie in [0, pi]"
        )));
    }
    let chars: Vec<char> = text.chars().collect();
    if arc_span_rad == 0.0 || chars.len() == 1 {
        return layout_linear(text, 0, atlas);
    }

    let step = arc_span_rad / (chars.len() - 1) as f64;
    let chord = 2.0 * (step / 2.0).sin();
    let mut widest = 0usize;
    for &c in &chars[..chars.len() - 1] {
        widest = widest.max(atlas.advance(c)?);
    }
    let min_radius = widest as f64 / chord;
    if radius_px < min_radius {
        return Err(Error::CurveOverlap {
            radius: radius_px,
            min_radius,
        });
    }

    // Anchors on a circle centred at the origin, apex at angle 0.
    let mut raw = Vec::with_capacity(chars.len());
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &c) in chars.iter().enumerate() {
        let phi = -arc_span_rad / 2.0 + i as f64 * step;
        let (ax, ay) = (radius_px * phi.sin(), -radius_px * phi.cos());
        let g = atlas.glyph(c)?;
        let half = g.height() as f64 / 2.0;
        let (s, co) = phi.sin_cos();
        for (dx, dy) in [
            (0.0, -half),
            (g.width() as f64, -half),
            (0.0, half),
            (g.width() as f64, half),
        ] {
            let (px, py) = (ax + dx * co - dy * s, ay + dx * s + dy * co);
            min_x = min_x.min(px);
            max_x = max_x.max(px);
            min_y = min_y.min(py);
            max_y = max_y.max(py);
        }
        raw.push((c, ax, ay, phi));
    }
    if max_y - min_y > HEIGHT as f64 {
        return Err(Error::Layout(format!(
            "curved text is {:.1} px tall, more than the {HEIGHT} px canvas",
            max_y - min_y
        )));
    }
    let shift_x = -min_x;
    let shift_y = CENTER_ROW - (min_y + max_y) / 2.0;
    let canvas_width = round_up_width(max_x - min_x);
    if canvas_width > DEFAULT_MAX_CANVAS {
        return Err(Error::Layout(format!(
            "text needs {canvas_width} px, more than the {DEFAULT_MAX_CANVAS} px maximum"
        )));
    }
    let placements = raw
        .into_iter()
        .map(|(symbol, ax, ay, phi)| GlyphPlacement {
            symbol,
            x: ax + shift_x,
            y: ay + shift_y,
            rotation: phi,
        })
        .collect();
    Ok(LayoutSpec {
        placements,
        nominal_em: nominal_em(text, atlas)?,
        canvas_width,
    })
}

/// Rasterizes a layout: white background, glyph ink stamped at -1.
/// Pixels are sampled by inverse-mapping their centres into glyph space
/// (nearest neighbour), so the output depends only on the inputs.
pub fn render(layout: &LayoutSpec, atlas: &GlyphAtlas) -> Result<TextImage> {
    layout.validate()?;
    let width = layout.canvas_width;
    let mut img = TextImage::white(HEIGHT, width);
    for p in &layout.placements {
        let g = atlas.glyph(p.symbol)?;
        let half = g.height() as f64 / 2.0;
        let (s, c) = p.rotation.sin_cos();
        // Bounding box of the rotated glyph box.
        let corners = [
            (0.0, -half),
            (g.width() as f64, -half),
            (0.0, half),
            (g.width() as f64, half),
        ]
        .map(|(dx, dy)| (p.x + dx * c - dy * s, p.y + dx * s + dy * c));
        let x0 = corners.iter().map(|v| v.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (corners.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(width);
        let y0 = corners.iter().map(|v| v.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (corners.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(HEIGHT);
        for y in y0..y1 {
            for x in x0..x1 {
                let (rx, ry) = (x as f64 + 0.5 - p.x, y as f64 + 0.5 - p.y);
                let gx = (rx * c + ry * s).floor();
                let gy = (-rx * s + ry * c + half).floor();
                if gx < 0.0 || gy < 0.0 {
                    continue;
                }
                let (gx, gy) = (gx as usize, gy as usize);
                if gx < g.width() && gy < g.height() && g.is_ink(gx, gy) {
                    img.set_all_channels(y, x, -1.0);
                }
            }
        }
    }
    Ok(img)
}

/// Brings a 64-pixel-tall image to the training width: narrower images are
/// right-padded with white, wider ones are resampled.
pub fn normalize_size(image: &TextImage) -> Result<TextImage> {
    normalize_width(image, TRAIN_WIDTH)
}

pub fn normalize_width(image: &TextImage, width: usize) -> Result<TextImage> {
    if image.height() != HEIGHT {
        return Err(Error::Shape(format!(
            "expected height {HEIGHT}, got {}",
            image.height()
        )));
    }
    if width == 0 {
        return Err(Error::Shape("target width must be positive".into()));
    }
    match image.width().cmp(&width) {
        std::cmp::Ordering::Equal => Ok(image.clone()),
        std::cmp::Ordering::Greater => Ok(image.resize_width(width)),
        std::cmp::Ordering::Less => {
            let mut data = vec![1.0; 3 * HEIGHT * width];
            for c in 0..3 {
                for y in 0..HEIGHT {
                    for x in 0..image.width() {
                        data[(c * HEIGHT + y) * width + x] = image.get(c, y, x);
                    }
                }
            }
            TextImage::from_chw(HEIGHT, width, data)
        }
    }
}
