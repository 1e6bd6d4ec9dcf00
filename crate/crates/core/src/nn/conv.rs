use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{Real, Tensor4};
use crate::error::{Error, Result};

/// Stride-1 cross-correlation with `(k - 1) / 2` zero padding, so the output
/// has the spatial size of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub(crate) in_ch: usize,
    pub(crate) out_ch: usize,
    pub(crate) k: usize,
    /// `(out_ch, in_ch, k, k)`
    pub(crate) weight: Vec<T>,
    pub(crate) bias: Option<Vec<T>>,
    pub(crate) grad_weight: Vec<T>,
    pub(crate) grad_bias: Option<Vec<T>>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize, with_bias: bool) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::invalid(format!("kernel size {k} must be odd")));
        }
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::invalid("convolution without channels"));
        }
        let n = out_ch * in_ch * k * k;
        Ok(ConvLayer {
            in_ch,
            out_ch,
            k,
            weight: vec![T::ZERO; n],
            bias: with_bias.then(|| vec![T::ZERO; out_ch]),
            grad_weight: vec![T::ZERO; n],
            grad_bias: with_bias.then(|| vec![T::ZERO; out_ch]),
        })
    }

    /// Kaiming-normal weights (`std = sqrt(2 / fan_in)`), zero bias.
    pub fn kaiming<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_ch, out_ch, k, with_bias)?;
        let std = (2.0 / (in_ch * k * k) as f64).sqrt();
        for w in &mut layer.weight {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::from_f64(std * z);
        }
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn kernel_size(&self) -> usize {
        self.k
    }

    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [T] {
        &mut self.weight
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut [T]> {
        self.bias.as_deref_mut()
    }

    pub fn grad_weight(&self) -> &[T] {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> Option<&[T]> {
        self.grad_bias.as_deref()
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.in_ch {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_ch,
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let [n, _, h, w] = x.dims();
        let hw = h * w;
        let ck2 = self.in_ch * self.k * self.k;
        let mut out = Tensor4::zeros([n, self.out_ch, h, w]);
        out.data_mut()
            .par_chunks_mut(self.out_ch * hw)
            .enumerate()
            .for_each_init(
                || vec![T::ZERO; ck2 * hw],
                |cols, (s, y)| {
                    im2col(x.sample(s), self.in_ch, h, w, self.k, cols);
                    if let Some(b) = &self.bias {
                        for (row, &bv) in y.chunks_mut(hw).zip(b) {
                            row.fill(bv);
                        }
                        T::gemm(self.out_ch, ck2, hw, &self.weight, false, cols, false, T::ONE, y);
                    } else {
                        T::gemm(self.out_ch, ck2, hw, &self.weight, false, cols, false, T::ZERO, y);
                    }
                },
            );
        Ok(out)
    }

    /// Overwrites the parameter gradients and returns the input gradient.
    /// `x` is the input of the matching forward pass.
    pub fn backward(&mut self, x: &Tensor4<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let [n, _, h, w] = x.dims();
        if dy.dims() != [n, self.out_ch, h, w] {
            return Err(Error::Shape(format!(
                "convolution output gradient has dims {:?}, expected {:?}",
                dy.dims(),
                [n, self.out_ch, h, w]
            )));
        }
        let hw = h * w;
        let ck2 = self.in_ch * self.k * self.k;
        let mut dx = Tensor4::zeros(x.dims());
        let per_sample_dw: Vec<Vec<T>> = dx
            .data_mut()
            .par_chunks_mut(self.in_ch * hw)
            .enumerate()
            .map_init(
                || (vec![T::ZERO; ck2 * hw], vec![T::ZERO; ck2 * hw]),
                |(cols, dcols), (s, dx_s)| {
                    let dy_s = dy.sample(s);
                    im2col(x.sample(s), self.in_ch, h, w, self.k, cols);
                    let mut dw = vec![T::ZERO; self.out_ch * ck2];
                    T::gemm(self.out_ch, hw, ck2, dy_s, false, cols, true, T::ZERO, &mut dw);
                    T::gemm(ck2, self.out_ch, hw, &self.weight, true, dy_s, false, T::ZERO, dcols);
                    col2im(dcols, self.in_ch, h, w, self.k, dx_s);
                    dw
                },
            )
            .collect();
        // fixed-order reduction keeps the result independent of scheduling
        self.grad_weight.fill(T::ZERO);
        for dw in &per_sample_dw {
            for (g, &v) in self.grad_weight.iter_mut().zip(dw) {
                *g += v;
            }
        }
        if let Some(gb) = &mut self.grad_bias {
            gb.fill(T::ZERO);
            for s in 0..n {
                for (o, g) in gb.iter_mut().enumerate() {
                    *g += dy.sample(s)[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
                }
            }
        }
        Ok(dx)
    }

    pub(crate) fn cast<U: Real>(&self) -> ConvLayer<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::from_f64(x.to_f64())).collect::<Vec<U>>();
        ConvLayer {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            k: self.k,
            weight: c(&self.weight),
            bias: self.bias.as_ref().map(c),
            grad_weight: c(&self.grad_weight),
            grad_bias: self.grad_bias.as_ref().map(c),
        }
    }
}

/// Unfolds one `(c, h, w)` sample into a `(c * k * k, h * w)` matrix.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let p = (k - 1) / 2;
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let shift = kx as isize - p as isize;
                    for (x, o) in out.iter_mut().enumerate() {
                        let sx = x as isize + shift;
                        *o = if sx < 0 || sx >= w as isize {
                            T::ZERO
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters and sums columns back into a sample.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let p = (k - 1) / 2;
    let hw = h * w;
    dx.fill(T::ZERO);
    for ch in 0..c {
        let plane = &mut dx[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let shift = kx as isize - p as isize;
                    for (x, &v) in row[y * w..(y + 1) * w].iter().enumerate() {
                        let sx = x as isize + shift;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Six nested loops straight from the definition of zero-padded cross-correlation.
    fn brute_force(layer: &ConvLayer<f64>, x: &Tensor4<f64>) -> Vec<f64> {
        let [n, c, h, w] = x.dims();
        let (o_ch, k) = (layer.out_ch, layer.k);
        let p = (k - 1) / 2;
        let mut out = vec![0.0; n * o_ch * h * w];
        for s in 0..n {
            for o in 0..o_ch {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = layer.bias.as_ref().map_or(0.0, |b| b[o]);
                        for i in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - p as isize;
                                    let sx = xx as isize + kx as isize - p as isize;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    acc += layer.weight[((o * c + i) * k + ky) * k + kx]
                                        * x.data()[((s * c + i) * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                        out[((s * o_ch + o) * h + y) * w + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut layer = ConvLayer::<f64>::zeros(1, 1, 1, true).unwrap();
        layer.weight[0] = 1.0;
        let x = Tensor4::from_vec([2, 1, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut layer = ConvLayer::<f64>::kaiming(2, 3, 3, true, &mut rng).unwrap();
        layer.bias = Some(vec![0.5, -1.0, 2.0]);
        let y = layer.forward(&Tensor4::zeros([1, 2, 4, 4])).unwrap();
        for (o, b) in [0.5, -1.0, 2.0].iter().enumerate() {
            assert!(y.sample(0)[o * 16..(o + 1) * 16].iter().all(|v| v == b));
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut layer = ConvLayer::<f64>::kaiming(2, 3, 3, true, &mut rng).unwrap();
        for b in layer.bias.as_mut().unwrap() {
            *b = rng.random_range(-1.0..1.0);
        }
        let x = Tensor4::from_vec([1, 2, 5, 5], (0..50).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let fast = layer.forward(&x).unwrap();
        for (a, b) in fast.data().iter().zip(brute_force(&layer, &x)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let layer = ConvLayer::<f32>::zeros(2, 1, 3, false).unwrap();
        assert!(matches!(
            layer.forward(&Tensor4::zeros([1, 3, 4, 4])),
            Err(Error::Shape(_))
        ));
        assert!(ConvLayer::<f32>::zeros(1, 1, 4, false).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (c, h, w, k) = (2, 4, 5, 3);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..c * k * k * h * w).map(|_| rng.random()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, k, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, c, h, w, k, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
