//! Binary PPM (P6) images plus the drawing primitives the corruption lab
//! needs: filled polygons, rectangles, a built-in 5×7 bitmap font, bilinear
//! resize, and separable Gaussian blur.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<u8>,
}

pub type Rgb = [u8; 3];

impl Image {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&fill);
        }
        Image { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Set with clipping: coordinates outside the image are ignored.
    pub fn set_clipped(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize, c);
        }
    }

    // ── PPM I/O ──────────────────────────────────────────────────────

    /// Canonical P6 encoding: `P6\n<w> <h>\n255\n` + raw RGB.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_ppm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Image::from_ppm(&bytes).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parse P6 with whitespace/comment-tolerant header.
    pub fn from_ppm(bytes: &[u8]) -> Result<Image> {
        if bytes.len() < 2 || &bytes[0..2] != b"P6" {
            return Err(Error::Parse("not a P6 PPM".into()));
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for field in &mut fields {
            // skip whitespace and comments
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse("malformed PPM header".into()));
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .unwrap()
                .parse()
                .map_err(|_| Error::Parse("bad PPM header number".into()))?;
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(Error::Parse(format!("only maxval 255 supported, got {maxval}")));
        }
        // single whitespace byte separates header from payload
        pos += 1;
        let need = width * height * 3;
        if bytes.len() < pos + need {
            return Err(Error::Parse(format!(
                "PPM payload truncated: want {need} bytes, have {}",
                bytes.len().saturating_sub(pos)
            )));
        }
        Ok(Image { width, height, pixels: bytes[pos..pos + need].to_vec() })
    }

    // ── Geometry ─────────────────────────────────────────────────────

    /// Centered square crop retaining `r` of the shorter side.
    /// s = ⌊r·min(W,H)⌋, offsets ⌊(W−s)/2⌋ and ⌊(H−s)/2⌋.
    pub fn center_crop(&self, r: f64) -> Result<Image> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Config(format!("center_crop ratio must be in (0, 1], got {r}")));
        }
        let side_in = self.width.min(self.height);
        let s = (r * side_in as f64).floor() as usize;
        if s < 1 {
            return Err(Error::Config(format!("center_crop side collapsed to {s}")));
        }
        let x0 = (self.width - s) / 2;
        let y0 = (self.height - s) / 2;
        let mut out = Image::new(s, s, [0, 0, 0]);
        for y in 0..s {
            for x in 0..s {
                out.set(x, y, self.get(x0 + x, y0 + y));
            }
        }
        Ok(out)
    }

    /// Bilinear resize with half-pixel centers.
    pub fn resize(&self, width: usize, height: usize) -> Image {
        let mut out = Image::new(width, height, [0, 0, 0]);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, self.height as f64 - 1.0);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, self.width as f64 - 1.0);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let mut c = [0u8; 3];
                for ch in 0..3 {
                    let p00 = self.get(x0, y0)[ch] as f64;
                    let p10 = self.get(x1, y0)[ch] as f64;
                    let p01 = self.get(x0, y1)[ch] as f64;
                    let p11 = self.get(x1, y1)[ch] as f64;
                    let top = p00 * (1.0 - wx) + p10 * wx;
                    let bot = p01 * (1.0 - wx) + p11 * wx;
                    c[ch] = (top * (1.0 - wy) + bot * wy).round().clamp(0.0, 255.0) as u8;
                }
                out.set(x, y, c);
            }
        }
        out
    }

    /// Separable Gaussian blur, sigma = radius/2, kernel truncated at 3 sigma,
    /// clamped at the edges.
    pub fn gaussian_blur(&self, radius: f64) -> Image {
        if radius <= 0.0 {
            return self.clone();
        }
        let sigma = radius / 2.0;
        let taps = (3.0 * sigma).ceil() as i64;
        let mut kernel = Vec::with_capacity((2 * taps + 1) as usize);
        for i in -taps..=taps {
            kernel.push((-0.5 * (i as f64 / sigma).powi(2)).exp());
        }
        let norm: f64 = kernel.iter().sum();
        for k in &mut kernel {
            *k /= norm;
        }

        let pass = |src: &Image, horizontal: bool| -> Image {
            let mut out = src.clone();
            for y in 0..src.height {
                for x in 0..src.width {
                    let mut acc = [0.0f64; 3];
                    for (ki, k) in kernel.iter().enumerate() {
                        let off = ki as i64 - taps;
                        let (sx, sy) = if horizontal {
                            ((x as i64 + off).clamp(0, src.width as i64 - 1), y as i64)
                        } else {
                            (x as i64, (y as i64 + off).clamp(0, src.height as i64 - 1))
                        };
                        let p = src.get(sx as usize, sy as usize);
                        for ch in 0..3 {
                            acc[ch] += p[ch] as f64 * k;
                        }
                    }
                    out.set(x, y, [
                        acc[0].round().clamp(0.0, 255.0) as u8,
                        acc[1].round().clamp(0.0, 255.0) as u8,
                        acc[2].round().clamp(0.0, 255.0) as u8,
                    ]);
                }
            }
            out
        };
        pass(&pass(self, true), false)
    }

    // ── Fill primitives (always clipped, never error) ────────────────

    pub fn fill_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, c: Rgb) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.set_clipped(x, y, c);
            }
        }
    }

    /// Fill a polygon by even-odd scanline.
    pub fn fill_polygon(&mut self, pts: &[(f64, f64)], c: Rgb) {
        if pts.len() < 3 {
            return;
        }
        let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor() as i64;
        let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        for y in ymin.max(0)..=ymax.min(self.height as i64 - 1) {
            let yc = y as f64 + 0.5;
            let mut xs: Vec<f64> = Vec::new();
            for i in 0..pts.len() {
                let (x1, y1) = pts[i];
                let (x2, y2) = pts[(i + 1) % pts.len()];
                if (y1 <= yc && y2 > yc) || (y2 <= yc && y1 > yc) {
                    xs.push(x1 + (yc - y1) / (y2 - y1) * (x2 - x1));
                }
            }
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in xs.chunks(2) {
                if let [a, b] = pair {
                    for x in a.round() as i64..=b.round() as i64 {
                        self.set_clipped(x, y, c);
                    }
                }
            }
        }
    }

    /// 8-point star polygon: outer radius `r`, inner radius `0.5·r`,
    /// rotated by `rot` radians.
    pub fn fill_star(&mut self, cx: f64, cy: f64, r: f64, rot: f64, c: Rgb) {
        let mut pts = Vec::with_capacity(16);
        for i in 0..16 {
            let radius = if i % 2 == 0 { r } else { 0.5 * r };
            let angle = rot + std::f64::consts::PI * i as f64 / 8.0;
            pts.push((cx + radius * angle.cos(), cy + radius * angle.sin()));
        }
        self.fill_polygon(&pts, c);
    }

    /// Draw text with the built-in 5×7 font (uppercased), scaled by `scale`,
    /// clipped at the borders.
    pub fn draw_text(&mut self, x: i64, y: i64, text: &str, scale: i64, c: Rgb) {
        let mut cx = x;
        for ch in text.chars() {
            if let Some(glyph) = glyph(ch.to_ascii_uppercase()) {
                for (row, bits) in glyph.iter().enumerate() {
                    for col in 0..5 {
                        if bits & (1 << (4 - col)) != 0 {
                            for dy in 0..scale {
                                for dx in 0..scale {
                                    self.set_clipped(
                                        cx + col as i64 * scale + dx,
                                        y + row as i64 * scale + dy,
                                        c,
                                    );
                                }
                            }
                        }
                    }
                }
            }
            cx += 6 * scale; // 5 columns + 1 space
        }
    }
}

/// Width in pixels of `text` at `scale` (trailing inter-glyph space dropped).
pub fn text_width(text: &str, scale: i64) -> i64 {
    if text.is_empty() {
        0
    } else {
        text.chars().count() as i64 * 6 * scale - scale
    }
}

/// 5×7 glyphs, one u8 per row, low 5 bits used.
fn glyph(ch: char) -> Option<[u8; 7]> {
    let g = match ch {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0E],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '%' => [0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ' ' => [0x00; 7],
        _ => return None,
    };
    Some(g)
}
