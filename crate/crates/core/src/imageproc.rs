//! Raster primitives: connected components, exact Euclidean distance
//! transforms, binary erosion, IoU and polygon rasterization.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::types::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Label image of a binary mask. Label 0 is background; regions are numbered
/// 1.. in the row-major order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledRegions {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    areas: Vec<usize>,
    first_pixel: Vec<usize>,
    connectivity: Connectivity,
}

impl LabeledRegions {
    pub fn num_regions(&self) -> usize {
        self.areas.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Pixel count of region `label` (1-based).
    pub fn area(&self, label: u32) -> usize {
        self.areas[label as usize - 1]
    }

    /// Row-major index of the first pixel of region `label`.
    pub fn first_pixel(&self, label: u32) -> usize {
        self.first_pixel[label as usize - 1]
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn region_mask(&self, label: u32) -> BinaryMask {
        let data = self.labels.iter().map(|&l| l == label).collect();
        BinaryMask::from_vec(self.height, self.width, data).expect("label image matches dims")
    }

    /// Label of the largest region; ties go to the smaller label.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (i, &a) in self.areas.iter().enumerate() {
            if best.map_or(true, |(ba, _)| a > ba) {
                best = Some((a, i as u32 + 1));
            }
        }
        best.map(|(_, l)| l)
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabeledRegions {
    let (h, w) = mask.dims();
    let data = mask.data();
    let mut labels = vec![0u32; h * w];
    let mut areas = Vec::new();
    let mut first_pixel = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..h * w {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut area = 0;
        while let Some(idx) = queue.pop_front() {
            area += 1;
            let (r, c) = ((idx / w) as isize, (idx % w) as isize);
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let n = nr as usize * w + nc as usize;
                if data[n] && labels[n] == 0 {
                    labels[n] = label;
                    queue.push_back(n);
                }
            }
        }
        areas.push(area);
        first_pixel.push(start);
    }

    LabeledRegions {
        height: h,
        width: w,
        labels,
        areas,
        first_pixel,
        connectivity,
    }
}

/// Per-pixel Euclidean distances in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DistanceMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Squared distance transform of a 1-D sampled function (lower envelope of
/// parabolas). `f` uses `f64::INFINITY` for "no source".
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    let mut found = false;
    for q in 0..n {
        if f[q].is_finite() {
            v[0] = q;
            found = true;
            break;
        }
    }
    if !found {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in (v[0] + 1)..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] {
                // k > 0 here: z[0] is -inf
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared EDT to the `true` pixels of a row-major grid; entries with
/// no source anywhere are `INFINITY`.
fn squared_edt(h: usize, w: usize, source: &[bool]) -> Vec<f64> {
    let mut grid: Vec<f64> = source
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let n = h.max(w);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        let row = &mut grid[r * w..(r + 1) * w];
        f[..w].copy_from_slice(row);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        row.copy_from_slice(&out[..w]);
    }
    grid
}

/// Exact Euclidean distance from every pixel to the nearest foreground pixel.
///
/// An empty mask has no sources; every pixel then gets the finite cap
/// `height + width` in place of infinity.
pub fn distance_transform(mask: &BinaryMask) -> DistanceMap {
    let (h, w) = mask.dims();
    let cap = (h + w) as f64;
    let data = squared_edt(h, w, mask.data())
        .into_iter()
        .map(|d| if d.is_finite() { d.sqrt() } else { cap })
        .collect();
    DistanceMap {
        height: h,
        width: w,
        data,
    }
}

/// For pixels inside the mask, the Euclidean distance to the nearest pixel
/// outside it, where the ring just beyond the image border counts as outside.
/// Zero outside the mask.
pub fn interior_distance(mask: &BinaryMask) -> DistanceMap {
    let (h, w) = mask.dims();
    let (ph, pw) = (h + 2, w + 2);
    let mut outside = vec![true; ph * pw];
    for (r, c) in mask.pixels() {
        outside[(r + 1) * pw + c + 1] = false;
    }
    let sq = squared_edt(ph, pw, &outside);
    let mut data = vec![0.0; h * w];
    for (r, c) in mask.pixels() {
        data[r * w + c] = sq[(r + 1) * pw + c + 1].sqrt();
    }
    DistanceMap {
        height: h,
        width: w,
        data,
    }
}

/// Binary erosion by the 3x3 square; pixels beyond the border count as 0.
pub fn erode(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.dims();
    BinaryMask::from_fn(h, w, |r, c| {
        if r == 0 || c == 0 || r + 1 >= h || c + 1 >= w {
            return false;
        }
        (r - 1..=r + 1).all(|rr| (c - 1..=c + 1).all(|cc| mask.get(rr, cc)))
    })
}

/// Erodes until the area drops to at most a quarter of the input area. When
/// the next erosion would empty the mask first, the last nonempty mask is
/// returned instead. Also reports how many erosions were applied.
pub fn erode_to_quarter_counted(mask: &BinaryMask) -> Result<(BinaryMask, usize)> {
    let original = mask.area();
    if original == 0 {
        return Err(Error::EmptyMask("cannot erode an empty region".into()));
    }
    let mut current = mask.clone();
    let mut steps = 0;
    while 4 * current.area() > original {
        let next = erode(&current);
        if next.is_empty() {
            break;
        }
        current = next;
        steps += 1;
    }
    Ok((current, steps))
}

pub fn erode_to_quarter(mask: &BinaryMask) -> Result<BinaryMask> {
    erode_to_quarter_counted(mask).map(|(m, _)| m)
}

/// Intersection over union. Two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_shape(a.dims(), b.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Even-odd scanline fill of a polygon given as (x, y) vertices in pixel
/// coordinates. A pixel is set iff its center `(col + 0.5, row + 0.5)` is
/// inside; spans are half-open on the right.
pub fn rasterize_polygon(vertices: &[(f64, f64)], height: usize, width: usize) -> Result<BinaryMask> {
    if vertices.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "polygon needs at least 3 vertices, got {}",
            vertices.len()
        )));
    }
    if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("non-finite polygon vertex".into()));
    }
    let mut mask = BinaryMask::new(height, width);
    let mut crossings = Vec::new();
    for row in 0..height {
        let y = row as f64 + 0.5;
        crossings.clear();
        for i in 0..vertices.len() {
            let (x0, y0) = vertices[i];
            let (x1, y1) = vertices[(i + 1) % vertices.len()];
            if (y0 > y) != (y1 > y) {
                crossings.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            // first col with center >= span[0], up to center < span[1]
            let start = (span[0] - 0.5).ceil().max(0.0);
            let end = (span[1] - 0.5).ceil().min(width as f64);
            let mut col = start;
            while col < end {
                mask.set(row, col as usize, true);
                col += 1.0;
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn brute_distance(mask: &BinaryMask) -> Vec<f64> {
        let (h, w) = mask.dims();
        let src: Vec<(usize, usize)> = mask.pixels().collect();
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                let d = src
                    .iter()
                    .map(|&(sr, sc)| {
                        let dr = r as f64 - sr as f64;
                        let dc = c as f64 - sc as f64;
                        (dr * dr + dc * dc).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                out.push(if d.is_finite() { d } else { (h + w) as f64 });
            }
        }
        out
    }

    fn brute_interior(mask: &BinaryMask) -> Vec<f64> {
        let (h, w) = mask.dims();
        let mut outside = Vec::new();
        for r in -1..=h as isize {
            for c in -1..=w as isize {
                let inside = r >= 0
                    && c >= 0
                    && r < h as isize
                    && c < w as isize
                    && mask.get(r as usize, c as usize);
                if !inside {
                    outside.push((r, c));
                }
            }
        }
        let mut out = vec![0.0; h * w];
        for (r, c) in mask.pixels() {
            out[r * w + c] = outside
                .iter()
                .map(|&(orr, oc)| {
                    let dr = (r as isize - orr) as f64;
                    let dc = (c as isize - oc) as f64;
                    (dr * dr + dc * dc).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
        }
        out
    }

    fn brute_erode(mask: &BinaryMask) -> BinaryMask {
        let (h, w) = mask.dims();
        BinaryMask::from_fn(h, w, |r, c| {
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        return false;
                    }
                    if !mask.get(rr as usize, cc as usize) {
                        return false;
                    }
                }
            }
            true
        })
    }

    fn square(h: usize, w: usize, r0: usize, c0: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| {
            (r0..r0 + side).contains(&r) && (c0..c0 + side).contains(&c)
        })
    }

    #[test]
    fn components_basic() {
        assert_eq!(connected_components(&BinaryMask::new(5, 5), Connectivity::Eight).num_regions(), 0);
        let diag = BinaryMask::from_ascii("#.\n.#");
        assert_eq!(connected_components(&diag, Connectivity::Eight).num_regions(), 1);
        assert_eq!(connected_components(&diag, Connectivity::Four).num_regions(), 2);
    }

    #[test]
    fn checkerboard_has_eight_singletons() {
        let m = BinaryMask::from_fn(4, 4, |r, c| (r + c) % 2 == 0);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.num_regions(), 8);
        assert!((1..=8).all(|l| cc.area(l) == 1));
        assert_eq!(connected_components(&m, Connectivity::Eight).num_regions(), 1);
    }

    #[test]
    fn labels_follow_row_major_first_pixel() {
        let m = BinaryMask::from_ascii(
            "
            ....#
            ##...
            ##..#
            ",
        );
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.num_regions(), 3);
        assert_eq!(cc.label(0, 4), 1);
        assert_eq!(cc.label(1, 0), 2);
        assert_eq!(cc.label(2, 4), 3);
        assert_eq!(cc.largest(), Some(2));
        assert_eq!(cc.first_pixel(2), 5);
    }

    #[test]
    fn distance_transform_examples() {
        let mut m = BinaryMask::new(6, 6);
        m.set(0, 0, true);
        assert_eq!(distance_transform(&m).get(3, 4), 5.0);

        let full = distance_transform(&BinaryMask::filled(4, 5));
        assert!(full.data().iter().all(|&d| d == 0.0));

        let mut two = BinaryMask::new(1, 5);
        two.set(0, 0, true);
        two.set(0, 4, true);
        assert_eq!(distance_transform(&two).get(0, 2), 2.0);

        let empty = distance_transform(&BinaryMask::new(3, 4));
        assert!(empty.data().iter().all(|&d| d == 7.0));
    }

    #[test]
    fn interior_distance_examples() {
        let d = interior_distance(&BinaryMask::filled(5, 5));
        assert_eq!(d.get(2, 2), 3.0);
        assert_eq!(d.get(0, 0), 1.0);

        let mut single = BinaryMask::new(5, 5);
        single.set(2, 3, true);
        let d = interior_distance(&single);
        assert_eq!(d.get(2, 3), 1.0);

        let d = interior_distance(&BinaryMask::new(4, 4));
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn erosion_examples() {
        let sq = square(10, 10, 1, 1, 8);
        assert_eq!(erode(&sq), square(10, 10, 2, 2, 6));

        let mut single = BinaryMask::new(5, 5);
        single.set(2, 2, true);
        assert!(erode(&single).is_empty());

        let line = BinaryMask::from_fn(5, 5, |r, c| c == 2 && (1..4).contains(&r));
        assert!(erode(&line).is_empty());
        assert_eq!(erode(&line), brute_erode(&line));
    }

    #[test]
    fn erode_to_quarter_examples() {
        let sq = square(12, 12, 2, 2, 8);
        let (m, steps) = erode_to_quarter_counted(&sq).unwrap();
        assert_eq!((m.area(), steps), (16, 2));
        assert_eq!(m, square(12, 12, 4, 4, 4));

        let mut single = BinaryMask::new(5, 5);
        single.set(1, 3, true);
        assert_eq!(erode_to_quarter(&single).unwrap(), single);

        let two = square(6, 6, 2, 2, 2);
        assert_eq!(erode_to_quarter_counted(&two).unwrap(), (two.clone(), 0));

        assert!(matches!(
            erode_to_quarter(&BinaryMask::new(3, 3)),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn iou_examples() {
        let a = square(20, 20, 0, 0, 10);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &square(20, 20, 10, 10, 10)).unwrap(), 0.0);
        let b = square(20, 20, 5, 0, 10);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&BinaryMask::new(3, 3), &BinaryMask::new(3, 3)).unwrap(), 1.0);
        assert_eq!(iou(&BinaryMask::new(3, 3), &BinaryMask::filled(3, 3)).unwrap(), 0.0);
        assert!(iou(&a, &BinaryMask::new(3, 3)).is_err());
    }

    #[test]
    fn rasterize_examples() {
        let rect = [(0.0, 0.0), (4.0, 0.0), (4.0, 3.0), (0.0, 3.0)];
        let m = rasterize_polygon(&rect, 10, 10).unwrap();
        assert_eq!(m.area(), 12);
        assert_eq!(m, BinaryMask::from_fn(10, 10, |r, c| r < 3 && c < 4));

        assert!(rasterize_polygon(&[(0.0, 0.0), (1.0, 1.0)], 4, 4).is_err());

        let sliver = [(0.1, 0.1), (0.4, 0.1), (0.1, 0.4)];
        assert!(rasterize_polygon(&sliver, 4, 4).unwrap().is_empty());

        // clipped at the canvas
        let big = [(-5.0, -5.0), (20.0, -5.0), (20.0, 20.0), (-5.0, 20.0)];
        assert_eq!(rasterize_polygon(&big, 4, 6).unwrap().area(), 24);
    }

    fn mask_strategy(max: usize) -> impl Strategy<Value = BinaryMask> {
        (1..=max, 1..=max, 0.05f64..0.95).prop_flat_map(|(h, w, density)| {
            prop::collection::vec(prop::bool::weighted(density), h * w)
                .prop_map(move |d| BinaryMask::from_vec(h, w, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn distance_transform_is_exact(m in mask_strategy(16)) {
            let fast = distance_transform(&m);
            let slow = brute_distance(&m);
            for (a, b) in fast.data().iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }

        #[test]
        fn interior_distance_is_exact(m in mask_strategy(16)) {
            let fast = interior_distance(&m);
            let slow = brute_interior(&m);
            for (a, b) in fast.data().iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn erosion_properties(m in mask_strategy(16)) {
            let e = erode(&m);
            prop_assert_eq!(&e, &brute_erode(&m));
            prop_assert!(m.contains(&e));
            prop_assert_eq!(erode(&m.flip_horizontal()), e.flip_horizontal());
            prop_assert_eq!(erode(&m.flip_vertical()), e.flip_vertical());
        }

        #[test]
        fn erode_to_quarter_bound(m in mask_strategy(16)) {
            prop_assume!(!m.is_empty());
            let out = erode_to_quarter(&m).unwrap();
            prop_assert!(!out.is_empty());
            prop_assert!(m.contains(&out));
            prop_assert!(4 * out.area() <= m.area() || erode(&out).is_empty());
        }

        #[test]
        fn iou_properties(a in mask_strategy(8), seed in any::<u64>()) {
            let (h, w) = a.dims();
            let b = BinaryMask::from_fn(h, w, |r, c| (seed >> ((r * w + c) % 64)) & 1 == 1);
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            if !a.is_empty() {
                prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
            }
        }

        #[test]
        fn component_count_is_flip_invariant(m in mask_strategy(16)) {
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let n = connected_components(&m, conn).num_regions();
                prop_assert_eq!(n, connected_components(&m.flip_horizontal(), conn).num_regions());
                prop_assert_eq!(n, connected_components(&m.flip_vertical(), conn).num_regions());
                let cc = connected_components(&m, conn);
                let total: usize = (1..=n as u32).map(|l| cc.area(l)).sum();
                prop_assert_eq!(total, m.area());
            }
        }
    }
}
