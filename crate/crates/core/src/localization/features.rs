use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Rescales a fingerprint to zero mean and unit variance over the whole field.
pub fn normalize_fingerprint(fp: &GrayImage) -> Result<GrayImage> {
    let n = fp.samples().len() as f64;
    let mean = fp.mean();
    let var = fp.samples().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (lo, hi) = fp.min_max();
    if lo == hi || var <= 0.0 {
        return Err(Error::DegenerateInput("constant fingerprint cannot be normalized".into()));
    }
    let std = var.sqrt();
    Ok(fp.map(|v| (v - mean) / std))
}

/// Co-occurrence feature parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoocParams {
    /// Window side in pixels.
    pub window: usize,
    pub stride: usize,
    /// Symbols are clamped to `[-truncation, truncation]`.
    pub truncation: u8,
    /// Quantization step applied to the normalized fingerprint.
    pub quant_step: f64,
}

impl Default for CoocParams {
    fn default() -> Self {
        CoocParams {
            window: 128,
            stride: 8,
            truncation: 1,
            quant_step: 1.0,
        }
    }
}

impl CoocParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < PATTERN_LEN || self.stride == 0 {
            return Err(Error::Config(format!(
                "window must be at least {PATTERN_LEN} and stride positive, got {} and {}",
                self.window, self.stride
            )));
        }
        if self.truncation == 0 || self.truncation > 4 {
            return Err(Error::Config("truncation must be in 1..=4".into()));
        }
        if !(self.quant_step > 0.0 && self.quant_step.is_finite()) {
            return Err(Error::Config("quantization step must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        orbit_table(self.truncation).1
    }
}

/// Number of adjacent symbols in a pattern.
pub const PATTERN_LEN: usize = 4;

/// Orbit count of 4-symbol patterns over 3 symbols under reversal and
/// negation.
pub const ORBITS_T1: usize = 25;

/// Maps every pattern (base-`2T+1` digits, first symbol most significant)
/// to its orbit index under reversal and negation. Orbits are numbered in
/// order of their smallest pattern code.
pub fn orbit_table(truncation: u8) -> (&'static [usize], usize) {
    static TABLES: OnceLock<Vec<(Vec<usize>, usize)>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| (1..=4u8).map(build_orbits).collect());
    let (t, n) = &tables[truncation as usize - 1];
    (t, *n)
}

fn build_orbits(truncation: u8) -> (Vec<usize>, usize) {
    let base = 2 * truncation as usize + 1;
    let count = base.pow(PATTERN_LEN as u32);
    let decode = |code: usize| {
        let mut digits = [0usize; PATTERN_LEN];
        let mut c = code;
        for d in digits.iter_mut().rev() {
            *d = c % base;
            c /= base;
        }
        digits
    };
    let encode = |digits: &[usize; PATTERN_LEN]| digits.iter().fold(0, |acc, &d| acc * base + d);
    let mut orbit = vec![usize::MAX; count];
    let mut next = 0;
    for code in 0..count {
        if orbit[code] != usize::MAX {
            continue;
        }
        let d = decode(code);
        let mut rev = d;
        rev.reverse();
        let neg = d.map(|v| base - 1 - v);
        let mut negrev = neg;
        negrev.reverse();
        for member in [d, rev, neg, negrev] {
            orbit[encode(&member)] = next;
        }
        next += 1;
    }
    (orbit, next)
}

/// Quantized, truncated symbols of a normalized fingerprint, shifted to
/// `0..=2T`.
pub fn quantize_symbols(fp: &GrayImage, params: &CoocParams) -> Vec<u8> {
    let t = params.truncation as f64;
    fp.samples()
        .iter()
        .map(|&v| ((v / params.quant_step).round().clamp(-t, t) + t) as u8)
        .collect()
}

/// Where a named fingerprint's features sit inside a [`FeatureField`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureComponent {
    pub name: String,
    pub dim: usize,
}

/// Per-window feature vectors on a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    rows: usize,
    cols: usize,
    window: usize,
    stride: usize,
    dim: usize,
    /// Row-major cells, each `dim` values.
    values: Vec<f64>,
    provenance: Vec<FeatureComponent>,
}

impl FeatureField {
    /// Builds a field from per-cell vectors listed row-major.
    pub fn from_cells(
        rows: usize,
        cols: usize,
        window: usize,
        stride: usize,
        cells: Vec<Vec<f64>>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if cells.len() != rows * cols || cells.is_empty() {
            return Err(Error::invalid(format!(
                "{} cells for a {rows}x{cols} grid",
                cells.len()
            )));
        }
        let dim = cells[0].len();
        if cells.iter().any(|c| c.len() != dim) || dim == 0 {
            return Err(Error::invalid("cells differ in dimension"));
        }
        if cells.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(FeatureField {
            rows,
            cols,
            window,
            stride,
            dim,
            values: cells.concat(),
            provenance: vec![FeatureComponent {
                name: name.into(),
                dim,
            }],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let i = row * self.cols + col;
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// All cells, row-major, each `dim` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &[FeatureComponent] {
        &self.provenance
    }

    pub fn provenance_names(&self) -> Vec<String> {
        self.provenance.iter().map(|c| c.name.clone()).collect()
    }
}

/// Grid size along one axis.
fn grid_len(extent: usize, window: usize, stride: usize) -> usize {
    (extent - window) / stride + 1
}

/// Per-window L1-normalized orbit histograms of the horizontal and vertical
/// 4-symbol patterns lying entirely inside the window.
pub fn cooccurrence_histograms(
    fp: &GrayImage,
    params: &CoocParams,
    name: &str,
) -> Result<FeatureField> {
    params.validate()?;
    let (w, h) = fp.dims();
    let win = params.window;
    if w < win || h < win {
        return Err(Error::invalid(format!(
            "{w}x{h} field is smaller than the {win}px window"
        )));
    }
    let sym = quantize_symbols(fp, params);
    let (orbits, dim) = orbit_table(params.truncation);
    let base = 2 * params.truncation as usize + 1;
    const NONE: u16 = u16::MAX;
    let code = |s: &[u8]| s.iter().fold(0usize, |acc, &d| acc * base + d as usize);
    // orbit of the pattern anchored at each pixel, per direction
    let mut horiz = vec![NONE; w * h];
    let mut vert = vec![NONE; w * h];
    for y in 0..h {
        for x in 0..w {
            if x + PATTERN_LEN <= w {
                let s = &sym[y * w + x..y * w + x + PATTERN_LEN];
                horiz[y * w + x] = orbits[code(s)] as u16;
            }
            if y + PATTERN_LEN <= h {
                let s: [u8; PATTERN_LEN] = std::array::from_fn(|k| sym[(y + k) * w + x]);
                vert[y * w + x] = orbits[code(&s)] as u16;
            }
        }
    }
    let (rows, cols) = (grid_len(h, win, params.stride), grid_len(w, win, params.stride));
    let cells: Vec<Vec<f64>> = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let (x0, y0) = ((i % cols) * params.stride, (i / cols) * params.stride);
            let mut counts = vec![0u32; dim];
            for y in y0..y0 + win {
                for x in x0..x0 + win - PATTERN_LEN + 1 {
                    counts[horiz[y * w + x] as usize] += 1;
                }
            }
            for y in y0..y0 + win - PATTERN_LEN + 1 {
                for x in x0..x0 + win {
                    counts[vert[y * w + x] as usize] += 1;
                }
            }
            let total: u32 = counts.iter().sum();
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        })
        .collect();
    FeatureField::from_cells(rows, cols, win, params.stride, cells, name)
}

/// [`cooccurrence_histograms`] followed by an elementwise square root.
pub fn cooccurrence_features(fp: &GrayImage, params: &CoocParams, name: &str) -> Result<FeatureField> {
    let mut f = cooccurrence_histograms(fp, params, name)?;
    for v in &mut f.values {
        *v = v.sqrt();
    }
    Ok(f)
}

/// Concatenates the per-cell vectors of fields that share a grid.
pub fn stack_features(fields: &[FeatureField]) -> Result<FeatureField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::invalid("nothing to stack"))?;
    for f in &fields[1..] {
        if (f.rows, f.cols, f.window, f.stride) != (first.rows, first.cols, first.window, first.stride) {
            let name = f.provenance_names().join("+");
            return Err(Error::invalid(format!(
                "feature field {name} has grid {}x{} (window {}, stride {}), expected {}x{} (window {}, stride {})",
                f.rows, f.cols, f.window, f.stride, first.rows, first.cols, first.window, first.stride
            )));
        }
    }
    let dim = fields.iter().map(|f| f.dim).sum();
    let mut values = Vec::with_capacity(first.len() * dim);
    for i in 0..first.len() {
        for f in fields {
            values.extend_from_slice(&f.values[i * f.dim..(i + 1) * f.dim]);
        }
    }
    Ok(FeatureField {
        rows: first.rows,
        cols: first.cols,
        window: first.window,
        stride: first.stride,
        dim,
        values,
        provenance: fields.iter().flat_map(|f| f.provenance.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orbit_count_matches_burnside() {
        // identity fixes 81, reversal 9 (palindromes), negation 1 (all zero),
        // negated reversal 9
        assert_eq!((81 + 9 + 1 + 9) / 4, ORBITS_T1);
        assert_eq!(orbit_table(1).1, ORBITS_T1);
        assert_eq!(CoocParams::default().dim(), ORBITS_T1);
    }

    #[test]
    fn normalization_examples() {
        let fp = GrayImage::new(2, 2, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        assert_eq!(normalize_fingerprint(&fp).unwrap().samples(), &[-1.0, 1.0, 1.0, -1.0]);
        assert!(matches!(
            normalize_fingerprint(&GrayImage::filled(3, 3, 4.0)),
            Err(Error::DegenerateInput(_))
        ));
    }

    proptest! {
        #[test]
        fn normalization_is_affine_invariant(seed in any::<u64>(), a in 0.01f64..100.0, b in -100.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fp = GrayImage::from_fn(9, 7, |_, _| rng.random_range(-5.0..5.0));
            let n = normalize_fingerprint(&fp).unwrap();
            prop_assert!(n.mean().abs() < 1e-9);
            let var = n.samples().iter().map(|v| v * v).sum::<f64>() / 63.0;
            prop_assert!((var - 1.0).abs() < 1e-9);
            let again = normalize_fingerprint(&n).unwrap();
            let moved = normalize_fingerprint(&fp.map(|v| a * v + b)).unwrap();
            for i in 0..63 {
                prop_assert!((again.samples()[i] - n.samples()[i]).abs() < 1e-9);
                prop_assert!((moved.samples()[i] - n.samples()[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn histograms_are_distributions(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fp = GrayImage::from_fn(40, 33, |_, _| rng.random_range(-2.5..2.5));
            let params = CoocParams { window: 16, stride: 5, ..CoocParams::default() };
            let f = cooccurrence_histograms(&fp, &params, "x").unwrap();
            prop_assert_eq!((f.rows(), f.cols()), ((33 - 16) / 5 + 1, (40 - 16) / 5 + 1));
            for r in 0..f.rows() {
                for c in 0..f.cols() {
                    let cell = f.cell(r, c);
                    prop_assert!(cell.iter().all(|&v| v >= 0.0));
                    prop_assert!((cell.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_field_is_one_hot() {
        let params = CoocParams {
            window: 8,
            stride: 4,
            ..CoocParams::default()
        };
        let f = cooccurrence_features(&GrayImage::filled(16, 16, 0.0), &params, "z").unwrap();
        let zero_orbit = orbit_table(1).0[40]; // pattern 0000 has digits 1111
        for r in 0..f.rows() {
            for c in 0..f.cols() {
                for (k, &v) in f.cell(r, c).iter().enumerate() {
                    assert_eq!(v, if k == zero_orbit { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn stacking() {
        let a = FeatureField::from_cells(1, 2, 8, 8, vec![vec![1.0, 2.0], vec![3.0, 4.0]], "a").unwrap();
        let b = FeatureField::from_cells(1, 2, 8, 8, vec![vec![5.0], vec![6.0]], "b").unwrap();
        assert_eq!(stack_features(&[a.clone()]).unwrap(), a);
        let s = stack_features(&[a.clone(), b]).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.cell(0, 1), &[3.0, 4.0, 6.0]);
        assert_eq!(s.provenance_names(), vec!["a", "b"]);
        let c = FeatureField::from_cells(2, 1, 8, 8, vec![vec![5.0], vec![6.0]], "c").unwrap();
        let err = stack_features(&[a, c]).unwrap_err().to_string();
        assert!(err.contains("feature field c"), "{err}");
    }
}
