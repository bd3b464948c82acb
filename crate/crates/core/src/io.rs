//! Mask and image files, and overlay rendering.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, Luma, Rgb, RgbImage};

use crate::error::{Result, SegError};
use crate::mask::BinaryMask;
use crate::tensor::Tensor;

pub const DEFAULT_MASK_THRESHOLD: u8 = 128;

/// An 8-bit color.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Color(pub [u8; 3]);

impl Color {
    pub const RED: Color = Color([255, 0, 0]);
    pub const GREEN: Color = Color([0, 255, 0]);
    pub const YELLOW: Color = Color([255, 255, 0]);

    /// Parses `RRGGBB`, with or without a leading `#`.
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.strip_prefix('#').unwrap_or(s);
        let bad = || SegError::Config(format!("color `{s}` is not of the form RRGGBB"));
        if s.len() != 6 {
            return Err(bad());
        }
        let bytes = hex::decode(s).map_err(|_| bad())?;
        Ok(Color([bytes[0], bytes[1], bytes[2]]))
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(SegError::MissingFile(path.to_path_buf()));
    }
    let decode_err = |e: &dyn std::fmt::Display| SegError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    ImageReader::open(path)
        .map_err(|e| SegError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| SegError::io(path, e))?
        .decode()
        .map_err(|e| decode_err(&e))
}

/// Decodes a single-channel image; color images are accepted only when every pixel is gray.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = open(path)?;
    match img {
        DynamicImage::ImageLuma8(g) => Ok(g),
        DynamicImage::ImageLumaA8(_) => Ok(img.to_luma8()),
        DynamicImage::ImageLuma16(g) => Ok(GrayImage::from_fn(g.width(), g.height(), |x, y| {
            Luma([(g.get_pixel(x, y)[0] >> 8) as u8])
        })),
        other => {
            let rgb = other.to_rgb8();
            if rgb.pixels().any(|p| p[0] != p[1] || p[1] != p[2]) {
                return Err(SegError::NotGrayscale(path.to_path_buf()));
            }
            Ok(GrayImage::from_fn(rgb.width(), rgb.height(), |x, y| {
                Luma([rgb.get_pixel(x, y)[0]])
            }))
        }
    }
}

pub fn gray_to_mask(img: &GrayImage, threshold: u8) -> Result<BinaryMask> {
    let bits = img.pixels().map(|p| p[0] >= threshold).collect();
    BinaryMask::new(img.height() as usize, img.width() as usize, bits)
}

pub fn mask_to_gray(m: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(m.width() as u32, m.height() as u32, |x, y| {
        Luma([if m.get(y as usize, x as usize) { 255 } else { 0 }])
    })
}

/// Foreground iff intensity >= `threshold`.
pub fn read_mask(path: &Path, threshold: u8) -> Result<BinaryMask> {
    gray_to_mask(&read_gray(path)?, threshold)
}

/// Writes foreground as 255 and background as 0 in a grayscale PNG.
pub fn write_mask(m: &BinaryMask, path: &Path) -> Result<()> {
    save(&DynamicImage::ImageLuma8(mask_to_gray(m)), path)
}

pub fn write_gray(img: &GrayImage, path: &Path) -> Result<()> {
    save(&DynamicImage::ImageLuma8(img.clone()), path)
}

pub fn write_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    save(&DynamicImage::ImageRgb8(img.clone()), path)
}

fn save(img: &DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| SegError::Write {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Loads an image as a `channels × H × W` tensor scaled to `[0, 1]`.
pub fn read_image_tensor(path: &Path, channels: usize) -> Result<Tensor> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match channels {
        1 => {
            let g = read_gray(path)?;
            Tensor::from_fn(1, h, w, |_, y, x| g.get_pixel(x as u32, y as u32)[0] as f64 / 255.0)
        }
        3 => {
            let rgb = img.to_rgb8();
            Tensor::from_fn(3, h, w, |c, y, x| rgb.get_pixel(x as u32, y as u32)[c] as f64 / 255.0)
        }
        n => Err(SegError::Config(format!(
            "images can be read as 1 or 3 channels, not {n}"
        ))),
    }
}

fn check_dims(image: &GrayImage, m: &BinaryMask) -> Result<()> {
    if (image.height() as usize, image.width() as usize) != m.dims() {
        return Err(SegError::Contract(format!(
            "image is {}x{} but mask is {}x{}",
            image.height(),
            image.width(),
            m.height(),
            m.width()
        )));
    }
    Ok(())
}

#[inline]
fn blend(gray: u8, color: u8, alpha: f64) -> u8 {
    ((1.0 - alpha) * gray as f64 + alpha * color as f64 + 0.5).floor() as u8
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SegError::Config(format!("alpha {alpha} must lie in [0, 1]")));
    }
    Ok(())
}

/// Blends `color` over foreground pixels; background stays gray.
pub fn render_overlay(image: &GrayImage, m: &BinaryMask, color: Color, alpha: f64) -> Result<RgbImage> {
    check_dims(image, m)?;
    validate_alpha(alpha)?;
    Ok(RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let g = image.get_pixel(x, y)[0];
        if m.get(y as usize, x as usize) {
            Rgb(color.0.map(|c| blend(g, c, alpha)))
        } else {
            Rgb([g, g, g])
        }
    }))
}

/// Colors used by [`render_comparison`].
#[derive(Debug, Clone, Copy)]
pub struct ComparisonColors {
    pub agree: Color,
    pub missed: Color,
    pub spurious: Color,
}

impl Default for ComparisonColors {
    fn default() -> Self {
        ComparisonColors {
            agree: Color::YELLOW,
            missed: Color::GREEN,
            spurious: Color::RED,
        }
    }
}

/// Ground truth versus prediction: pixels in both, ground truth only and prediction
/// only are tinted with three distinct colors.
pub fn render_comparison(
    image: &GrayImage,
    gt: &BinaryMask,
    pred: &BinaryMask,
    colors: ComparisonColors,
    alpha: f64,
) -> Result<RgbImage> {
    check_dims(image, gt)?;
    check_dims(image, pred)?;
    validate_alpha(alpha)?;
    Ok(RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let g = image.get_pixel(x, y)[0];
        let (yy, xx) = (y as usize, x as usize);
        let color = match (gt.get(yy, xx), pred.get(yy, xx)) {
            (true, true) => colors.agree,
            (true, false) => colors.missed,
            (false, true) => colors.spurious,
            (false, false) => return Rgb([g, g, g]),
        };
        Rgb(color.0.map(|c| blend(g, c, alpha)))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blend_rounds_half_up() {
        let img = GrayImage::from_pixel(1, 1, Luma([100]));
        let m = BinaryMask::from_fn(1, 1, |_, _| true);
        let out = render_overlay(&img, &m, Color::RED, 0.5).unwrap();
        assert_eq!(out.get_pixel(0, 0).0, [178, 50, 50]);
    }

    #[test]
    fn alpha_extremes() {
        let img = GrayImage::from_fn(3, 2, |x, y| Luma([(x * 40 + y * 7) as u8]));
        let m = BinaryMask::from_fn(2, 3, |y, x| x > y);
        let out = render_overlay(&img, &m, Color([10, 200, 30]), 0.0).unwrap();
        for (x, y, p) in out.enumerate_pixels() {
            let g = img.get_pixel(x, y)[0];
            assert_eq!(p.0, [g, g, g]);
        }
        let out = render_overlay(&img, &m, Color([10, 200, 30]), 1.0).unwrap();
        assert_eq!(out.get_pixel(2, 0).0, [10, 200, 30]);
        assert_eq!(out.get_pixel(0, 0).0, [0, 0, 0]);
        assert!(render_overlay(&img, &m, Color::RED, 1.5).is_err());
        assert!(render_overlay(&img, &BinaryMask::empty(3, 2), Color::RED, 0.5).is_err());
    }

    #[test]
    fn comparison_colors_disagreement() {
        let img = GrayImage::from_pixel(4, 1, Luma([0]));
        let gt = BinaryMask::new(1, 4, vec![true, true, false, false]).unwrap();
        let pred = BinaryMask::new(1, 4, vec![true, false, true, false]).unwrap();
        let out = render_comparison(&img, &gt, &pred, ComparisonColors::default(), 1.0).unwrap();
        let px: Vec<[u8; 3]> = out.pixels().map(|p| p.0).collect();
        assert_eq!(px, vec![[255, 255, 0], [0, 255, 0], [255, 0, 0], [0, 0, 0]]);
    }

    #[test]
    fn color_parsing() {
        assert_eq!(Color::from_hex("ff0080").unwrap(), Color([255, 0, 128]));
        assert_eq!(Color::from_hex("#00FF00").unwrap(), Color::GREEN);
        assert!(Color::from_hex("fff").is_err());
        assert!(Color::from_hex("gg0000").is_err());
    }

    #[test]
    fn mask_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = BinaryMask::from_fn(5, 7, |y, x| (y * 3 + x) % 4 == 0);
        write_mask(&m, &path).unwrap();
        assert_eq!(read_mask(&path, DEFAULT_MASK_THRESHOLD).unwrap(), m);

        let one = BinaryMask::from_fn(1, 1, |_, _| true);
        write_mask(&one, &path).unwrap();
        assert_eq!(read_mask(&path, 128).unwrap(), one);

        let empty = BinaryMask::empty(3, 3);
        write_mask(&empty, &path).unwrap();
        let g = read_gray(&path).unwrap();
        assert!(g.pixels().all(|p| p[0] == 0));
    }

    #[test]
    fn read_mask_thresholds_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        write_gray(&GrayImage::from_pixel(4, 3, Luma([255])), &path).unwrap();
        assert_eq!(read_mask(&path, 128).unwrap().count(), 12);
        write_gray(&GrayImage::from_pixel(4, 3, Luma([0])), &path).unwrap();
        assert!(read_mask(&path, 128).unwrap().is_empty());
        write_gray(&GrayImage::from_pixel(2, 2, Luma([127])), &path).unwrap();
        assert!(read_mask(&path, 128).unwrap().is_empty());

        assert!(matches!(
            read_mask(&dir.path().join("nope.png"), 128),
            Err(SegError::MissingFile(_))
        ));

        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(read_mask(&junk, 128), Err(SegError::Decode { .. })));

        let color = dir.path().join("c.png");
        write_rgb(&RgbImage::from_pixel(2, 2, Rgb([10, 20, 30])), &color).unwrap();
        assert!(matches!(read_mask(&color, 128), Err(SegError::NotGrayscale(_))));

        let gray_rgb = dir.path().join("gr.png");
        write_rgb(&RgbImage::from_pixel(2, 2, Rgb([200, 200, 200])), &gray_rgb).unwrap();
        assert_eq!(read_mask(&gray_rgb, 128).unwrap().count(), 4);
    }
}
