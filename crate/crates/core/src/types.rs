//! Raster and interaction value types shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};

/// Whether a click marks the object (positive) or the background (negative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn is_positive(self) -> bool {
        matches!(self, Polarity::Positive)
    }
}

/// A single user interaction at an integer pixel.
///
/// `order` is the placement index within a session. Click generators that
/// produce a lone click (the evaluation clicker, the iterative sampler) leave
/// it at zero; whoever appends the click to a history assigns the real index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Click {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
    pub order: usize,
}

impl Click {
    pub fn new(row: usize, col: usize, polarity: Polarity) -> Self {
        Self {
            row,
            col,
            polarity,
            order: 0,
        }
    }

    pub fn positive(row: usize, col: usize) -> Self {
        Self::new(row, col, Polarity::Positive)
    }

    pub fn negative(row: usize, col: usize) -> Self {
        Self::new(row, col, Polarity::Negative)
    }

    pub fn with_order(self, order: usize) -> Self {
        Self { order, ..self }
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        if self.row < height && self.col < width {
            Ok(())
        } else {
            Err(Error::ClickOutOfBounds {
                row: self.row,
                col: self.col,
                height,
                width,
            })
        }
    }
}

/// Row-major {0,1} raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn filled(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "mask data has {} pixels, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Builds a mask from ASCII art: `#` or `1` is foreground, anything else
    /// background. Rows are separated by newlines; surrounding whitespace is
    /// trimmed.
    pub fn from_ascii(art: &str) -> Self {
        let rows: Vec<&str> = art
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        Self::from_fn(height, width, |r, c| {
            matches!(rows[r].chars().nth(c), Some('#') | Some('1'))
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Foreground pixels as (row, col), in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i / width, i % width))
    }

    pub fn contains(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| a || !b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        check_shape(self.dims(), other.dims())?;
        Ok(BinaryMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    /// Pixels set in `self` and not in `other`.
    pub fn minus(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| !v).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> BinaryMask {
        BinaryMask::from_fn(self.height, self.width, |r, c| {
            self.get(r, self.width - 1 - c)
        })
    }

    pub fn flip_vertical(&self) -> BinaryMask {
        BinaryMask::from_fn(self.height, self.width, |r, c| {
            self.get(self.height - 1 - r, c)
        })
    }

    /// The mask as a {0,1} probability map.
    pub fn to_prob(&self) -> ProbMap {
        ProbMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Row-major per-pixel probabilities in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ProbMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Fails when the length is wrong or a value is non-finite or outside [0, 1].
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "probability map has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Like [`ProbMap::from_vec`] but clamps into [0, 1] instead of failing;
    /// NaN becomes 0.
    pub fn from_vec_clamped(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::from_vec(height, width, data)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn flip_horizontal(&self) -> ProbMap {
        ProbMap::from_fn(self.height, self.width, |r, c| {
            self.get(r, self.width - 1 - c)
        })
    }
}

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColorImage {
    height: usize,
    width: usize,
    data: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn new(height: usize, width: usize, fill: [u8; 3]) -> Self {
        Self {
            height,
            width,
            data: vec![fill; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "image has {} pixels, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        Self {
            height: h as usize,
            width: w as usize,
            data: img.pixels().map(|p| p.0).collect(),
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Rgb(self.get(y as usize, x as usize))
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        self.data[row * self.width + col]
    }

    pub fn flip_horizontal(&self) -> ColorImage {
        ColorImage::from_fn(self.height, self.width, |r, c| {
            self.get(r, self.width - 1 - c)
        })
    }

    /// Interleaved RGB bytes, row-major.
    pub fn as_bytes(&self) -> Vec<u8> {
        self.data.iter().flatten().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_masks() {
        let m = BinaryMask::from_ascii(
            "
            .#.
            ##.
            ",
        );
        assert_eq!(m.dims(), (2, 3));
        assert_eq!(m.area(), 3);
        assert!(m.get(0, 1) && !m.get(1, 2));
    }

    #[test]
    fn prob_map_rejects_out_of_range() {
        assert!(ProbMap::from_vec(1, 2, vec![0.2, 1.5]).is_err());
        assert!(ProbMap::from_vec(1, 2, vec![0.2, f64::NAN]).is_err());
        assert!(ProbMap::from_vec(1, 1, vec![0.2, 0.3]).is_err());
        let p = ProbMap::from_vec_clamped(1, 2, vec![-1.0, 2.0]).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0]);
    }

    #[test]
    fn click_bounds() {
        assert!(Click::positive(3, 3).check_bounds(4, 4).is_ok());
        assert!(matches!(
            Click::negative(4, 0).check_bounds(4, 4),
            Err(Error::ClickOutOfBounds { .. })
        ));
    }
}
