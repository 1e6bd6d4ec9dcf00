use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Per-pixel forgery scores; higher means more likely forged.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    field: GrayImage,
    provenance: Vec<String>,
}

impl Heatmap {
    pub fn new(field: GrayImage, provenance: Vec<String>) -> Self {
        Heatmap { field, provenance }
    }

    pub fn width(&self) -> usize {
        self.field.width()
    }

    pub fn height(&self) -> usize {
        self.field.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.field.dims()
    }

    pub fn scores(&self) -> &[f64] {
        self.field.samples()
    }

    pub fn field(&self) -> &GrayImage {
        &self.field
    }

    pub fn into_field(self) -> GrayImage {
        self.field
    }

    /// Names of the fingerprints whose features produced this map.
    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }
}

/// Window grid placement: window `(r, c)` covers columns
/// `c*stride .. c*stride+window` and rows `r*stride .. r*stride+window`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    pub rows: usize,
    pub cols: usize,
    pub window: usize,
    pub stride: usize,
}

impl WindowGrid {
    /// Range of window indices along one axis that cover pixel `p`.
    fn covering(&self, p: usize, count: usize) -> Option<(usize, usize)> {
        let last = p / self.stride;
        let first = if p + 1 > self.window {
            (p + 1 - self.window).div_ceil(self.stride)
        } else {
            0
        };
        let last = last.min(count - 1);
        (first <= last).then_some((first, last))
    }
}

/// Spreads per-window scores to pixels: each pixel gets the mean over the
/// windows covering it; pixels outside every window copy the nearest
/// covered pixel.
pub fn posterior_to_heatmap(
    cell_scores: &[f64],
    grid: WindowGrid,
    width: usize,
    height: usize,
) -> Result<GrayImage> {
    let WindowGrid {
        rows,
        cols,
        window,
        stride,
    } = grid;
    if rows == 0 || cols == 0 || stride == 0 || cell_scores.len() != rows * cols {
        return Err(Error::invalid(format!(
            "{} scores for a {rows}x{cols} window grid",
            cell_scores.len()
        )));
    }
    let covered_w = (cols - 1) * stride + window;
    let covered_h = (rows - 1) * stride + window;
    if covered_w > width || covered_h > height {
        return Err(Error::invalid(format!(
            "window grid spans {covered_w}x{covered_h}, image is {width}x{height}"
        )));
    }
    let col_ranges: Vec<(usize, usize)> = (0..width)
        .map(|x| grid.covering(x.min(covered_w - 1), cols).expect("covered"))
        .collect();
    // mean over covering columns for every cell row, then over covering rows
    let mut row_means = vec![0.0; rows * width];
    for r in 0..rows {
        let cells = &cell_scores[r * cols..(r + 1) * cols];
        for (x, &(c0, c1)) in col_ranges.iter().enumerate() {
            row_means[r * width + x] = cells[c0..=c1].iter().sum::<f64>() / (c1 - c0 + 1) as f64;
        }
    }
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (r0, r1) = grid.covering(y.min(covered_h - 1), rows).expect("covered");
        for x in 0..width {
            let sum: f64 = (r0..=r1).map(|r| row_means[r * width + x]).sum();
            out.push(sum / (r1 - r0 + 1) as f64);
        }
    }
    GrayImage::new(width, height, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scores_give_a_constant_map() {
        let g = WindowGrid {
            rows: 3,
            cols: 4,
            window: 8,
            stride: 3,
        };
        let h = posterior_to_heatmap(&[0.7; 12], g, 20, 16).unwrap();
        assert!(h.samples().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn non_overlapping_windows_are_blockwise() {
        let g = WindowGrid {
            rows: 2,
            cols: 2,
            window: 4,
            stride: 4,
        };
        let h = posterior_to_heatmap(&[0.1, 0.2, 0.3, 0.4], g, 9, 8).unwrap();
        assert_eq!(h.get(3, 3), 0.1);
        assert_eq!(h.get(4, 0), 0.2);
        assert_eq!(h.get(0, 7), 0.3);
        assert_eq!(h.get(7, 7), 0.4);
        // uncovered last column copies its neighbour
        assert_eq!(h.get(8, 7), 0.4);
    }

    #[test]
    fn rejects_inconsistent_grids() {
        let g = WindowGrid {
            rows: 2,
            cols: 2,
            window: 8,
            stride: 4,
        };
        assert!(posterior_to_heatmap(&[0.0; 3], g, 12, 12).is_err());
        assert!(posterior_to_heatmap(&[0.0; 4], g, 11, 12).is_err());
    }
}
