//! Grayscale rasters and 8-bit binary PGM (P5) I/O.

use std::fs;
use std::path::Path;

use msprl_tensor::{Element, Tensor};
use thiserror::Error;

use crate::error::{Error, Result};

/// Continuous-tone raster, row-major, every pixel in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("empty raster {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {height}x{width} raster",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidImage(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Like [`new`](Self::new) but clamps into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(height: usize, width: usize, pixels: impl IntoIterator<Item = f64>) -> Result<Self> {
        let pixels = pixels
            .into_iter()
            .map(|p| if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) })
            .collect();
        Self::new(height, width, pixels)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Copies the `height×width` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::InvalidImage(format!(
                "crop {height}x{width}+{top}+{left} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(height * width);
        for y in top..top + height {
            pixels.extend_from_slice(&self.pixels[y * self.width + left..y * self.width + left + width]);
        }
        Self::new(height, width, pixels)
    }

    /// Largest centered crop whose sides are multiples of `multiple`.
    /// Returns `None` when the image already conforms.
    pub fn center_crop_to_multiple(&self, multiple: usize) -> Result<Option<Self>> {
        let h = self.height / multiple * multiple;
        let w = self.width / multiple * multiple;
        if h == 0 || w == 0 {
            return Err(Error::InvalidImage(format!(
                "{}x{} is smaller than {multiple}",
                self.height, self.width
            )));
        }
        if (h, w) == (self.height, self.width) {
            return Ok(None);
        }
        self.crop((self.height - h) / 2, (self.width - w) / 2, h, w).map(Some)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks(self.width) {
            pixels.extend(row.iter().rev());
        }
        Self { pixels, ..*self }
    }

    /// 1×1×H×W tensor.
    pub fn to_tensor<E: Element>(&self) -> Tensor<E> {
        Tensor::from_fn([1, 1, self.height, self.width], |i| E::from_f64(self.pixels[i]))
    }

    /// Builds an image from one `H×W` plane, clamping into `[0, 1]`.
    pub fn from_plane<E: Element>(height: usize, width: usize, plane: &[E]) -> Result<Self> {
        Self::from_clamped(height, width, plane.iter().map(|v| v.to_f64()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(decode_pgm(&bytes)?)
    }

    /// Writes through a temporary file and a rename so no partial file is
    /// left behind on failure.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &encode_pgm(self))
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Bilevel raster, every pixel exactly 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HalftoneImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl HalftoneImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {height}x{width} halftone",
                pixels.len()
            )));
        }
        if pixels.iter().any(|&p| p > 1) {
            return Err(Error::InvalidImage("halftone pixels must be 0 or 1".into()));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&p| p as f64).collect(),
        }
    }

    /// Interprets a gray image whose pixels are exactly 0 or 1.
    pub fn from_gray(image: &GrayImage) -> Result<Self> {
        let pixels = image
            .pixels()
            .iter()
            .map(|&p| match p {
                0.0 => Ok(0),
                1.0 => Ok(1),
                other => Err(Error::InvalidImage(format!("pixel {other} is not bilevel"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(image.height(), image.width(), pixels)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PgmError {
    #[error("not a binary PGM (magic {0:?})")]
    BadMagic(String),
    #[error("colour PPM input is not supported; convert to grayscale first")]
    Color,
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}; only 8-bit (255) files are accepted")]
    Maxval(u32),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> std::result::Result<&'a [u8], PgmError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(PgmError::Header("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> std::result::Result<u32, PgmError> {
    let tok = header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<u32>().ok())
        .ok_or_else(|| PgmError::Header(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
}

/// Decodes an 8-bit P5 file; byte `v` maps to `v / 255`.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, PgmError> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos).map_err(|_| PgmError::BadMagic(String::new()))?;
    match magic {
        b"P5" => {}
        b"P6" | b"P3" => return Err(PgmError::Color),
        other => return Err(PgmError::BadMagic(String::from_utf8_lossy(other).into_owned())),
    }
    let width = header_number(bytes, &mut pos, "width")? as usize;
    let height = header_number(bytes, &mut pos, "height")? as usize;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::Header(format!("empty raster {width}x{height}")));
    }
    if maxval != 255 {
        return Err(PgmError::Maxval(maxval));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PgmError::Truncated {
            expected: width * height,
            found: 0,
        });
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = width * height;
    if payload.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok(GrayImage {
        height,
        width,
        pixels: payload[..expected].iter().map(|&b| b as f64 / 255.0).collect(),
    })
}

/// Quantizes `[0, 1]` to a byte with round-half-up.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Encodes with the canonical header `P5\n<w> <h>\n255\n`.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|&p| quantize(p)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(w: usize, h: usize, payload: &[u8]) -> Vec<u8> {
        let mut v = format!("P5\n{w} {h}\n255\n").into_bytes();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn decode_scales_bytes() {
        let img = decode_pgm(&pgm(2, 1, &[255, 128])).unwrap();
        assert_eq!(img.pixels()[0], 1.0);
        assert!((img.pixels()[1] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn decode_accepts_comments() {
        let bytes = b"P5\n# made by hand\n2 1 # width height\n255\n\x00\xff";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(PgmError::BadMagic(_))));
        assert_eq!(decode_pgm(b"P6\n1 1\n255\nabc"), Err(PgmError::Color));
        assert_eq!(decode_pgm(b"P5\n1 1\n65535\n\0\0"), Err(PgmError::Maxval(65535)));
        assert!(matches!(decode_pgm(b"P5\nx 1\n255\n\0"), Err(PgmError::Header(_))));
        assert_eq!(
            decode_pgm(&pgm(2, 2, &[1, 2, 3])),
            Err(PgmError::Truncated { expected: 4, found: 3 })
        );
        assert!(decode_pgm(b"P5\n2 2").is_err());
    }

    #[test]
    fn encode_round_trips_bytes() {
        let bytes = pgm(3, 2, &[0, 1, 127, 128, 254, 255]);
        assert_eq!(encode_pgm(&decode_pgm(&bytes).unwrap()), bytes);
    }

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 0);
    }

    #[test]
    fn gray_image_rejects_out_of_range() {
        assert!(GrayImage::new(1, 2, vec![0.0, 1.5]).is_err());
        assert!(GrayImage::new(0, 2, vec![]).is_err());
        assert!(GrayImage::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn center_crop_to_multiple_of_four() {
        let img = GrayImage::from_fn(10, 9, |y, x| (y * 9 + x) as f64 / 90.0).unwrap();
        let c = img.center_crop_to_multiple(4).unwrap().unwrap();
        assert_eq!((c.height(), c.width()), (8, 8));
        assert_eq!(c.get(0, 0), img.get(1, 0));
        assert!(c.center_crop_to_multiple(4).unwrap().is_none());
    }

    #[test]
    fn halftone_must_be_bilevel() {
        assert!(HalftoneImage::new(1, 2, vec![0, 2]).is_err());
        let h = HalftoneImage::new(1, 2, vec![0, 1]).unwrap();
        assert_eq!(HalftoneImage::from_gray(&h.to_gray()).unwrap(), h);
    }
}
