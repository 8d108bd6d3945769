//! 2-D convolution, transposed convolution and zero padding on NHWC tensors,
//! lowered to GEMM through im2col.

use rand::Rng as _;

use super::init::init_normal;
use super::tensor::{gemm, Mat};
use super::{Layer, Mode, Param, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output size `ceil(in / stride)`; the zero padding is split evenly with
    /// the odd tap going to the leading side.
    Same,
    Valid,
}

/// Geometry of a convolution from an `in_h x in_w x cin` image to
/// `out_h x out_w` patch positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn axis(input: usize, k: usize, s: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(s);
            let total = ((out - 1) * s + k).saturating_sub(input);
            Ok((out, total.div_ceil(2)))
        }
        Padding::Valid => {
            if input < k {
                return Err(Error::Shape(format!("kernel {k} larger than unpadded input {input}")));
            }
            Ok(((input - k) / s + 1, 0))
        }
    }
}

impl ConvGeom {
    pub fn new(
        in_h: usize,
        in_w: usize,
        cin: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        if in_h == 0 || in_w == 0 {
            return Err(Error::Shape("empty convolution input".into()));
        }
        let (out_h, pad_top) = axis(in_h, kernel.0, stride.0, padding)?;
        let (out_w, pad_left) = axis(in_w, kernel.1, stride.1, padding)?;
        Ok(Self {
            in_h,
            in_w,
            cin,
            out_h,
            out_w,
            kh: kernel.0,
            kw: kernel.1,
            sh: stride.0,
            sw: stride.1,
            pad_top,
            pad_left,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, oh: usize, ow: usize, ki: usize, kj: usize) -> Option<usize> {
        let ih = (oh * self.sh + ki).checked_sub(self.pad_top)?;
        let iw = (ow * self.sw + kj).checked_sub(self.pad_left)?;
        (ih < self.in_h && iw < self.in_w).then(|| (ih * self.in_w + iw) * self.cin)
    }
}

/// Gathers every receptive field of `img` into a `positions x patch_len` matrix.
pub fn im2col<T: Real>(img: &[T], g: &ConvGeom, cols: &mut [T]) {
    let kc = g.patch_len();
    let cin = g.cin;
    for oh in 0..g.out_h {
        for ow in 0..g.out_w {
            let row = &mut cols[(oh * g.out_w + ow) * kc..][..kc];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let dst = &mut row[(ki * g.kw + kj) * cin..][..cin];
                    match g.source(oh, ow, ki, kj) {
                        Some(at) => dst.copy_from_slice(&img[at..at + cin]),
                        None => dst.fill(T::zero()),
                    }
                }
            }
        }
    }
}

/// Scatter-adds patch rows back onto the image; adjoint of [`im2col`].
pub fn col2im<T: Real>(cols: &[T], g: &ConvGeom, img: &mut [T]) {
    let kc = g.patch_len();
    let cin = g.cin;
    for oh in 0..g.out_h {
        for ow in 0..g.out_w {
            let row = &cols[(oh * g.out_w + ow) * kc..][..kc];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    if let Some(at) = g.source(oh, ow, ki, kj) {
                        let src = &row[(ki * g.kw + kj) * cin..][..cin];
                        for (d, &s) in img[at..at + cin].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T]) {
    for px in out.chunks_exact_mut(bias.len()) {
        for (v, &b) in px.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn accumulate_bias_grad<T: Real>(grad: &[T], db: &mut [T]) {
    for px in grad.chunks_exact(db.len()) {
        for (d, &g) in db.iter_mut().zip(px) {
            *d += g;
        }
    }
}

fn ensure_len<T: Real>(buf: &mut Vec<T>, len: usize) {
    if buf.len() < len {
        buf.resize(len, T::zero());
    }
}

/// Cross-correlation with kernel `[kh, kw, cin, cout]`.
pub struct Conv2d<T: Real> {
    name: String,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    input: Option<Tensor<T>>,
    geom: Option<ConvGeom>,
    scratch: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        bias: bool,
        init_std: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        validate_kernel(kernel, stride)?;
        let name = name.into();
        let weight = Param::new(
            format!("{name}/kernel"),
            init_normal(&[kernel.0, kernel.1, in_channels, out_channels], 0.0, init_std, rng),
        );
        let bias = bias.then(|| Param::new(format!("{name}/bias"), Tensor::zeros(&[out_channels])));
        Ok(Self {
            name,
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            weight,
            bias,
            input: None,
            geom: None,
            scratch: Vec::new(),
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let g = ConvGeom::new(h, w, self.in_channels, self.kernel, self.stride, self.padding)?;
        Ok((g.out_h, g.out_w))
    }
}

fn validate_kernel(kernel: (usize, usize), stride: (usize, usize)) -> Result<()> {
    if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Config(format!(
            "kernel {kernel:?} and stride {stride:?} must be positive"
        )));
    }
    Ok(())
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, h, w, c) = x.nhwc()?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {c}",
                self.name, self.in_channels
            )));
        }
        let g = ConvGeom::new(h, w, c, self.kernel, self.stride, self.padding)?;
        let (p, kc, co) = (g.positions(), g.patch_len(), self.out_channels);
        let mut out = Tensor::zeros(&[n, g.out_h, g.out_w, co]);
        ensure_len(&mut self.scratch, p * kc);
        let cols = &mut self.scratch[..p * kc];
        for i in 0..n {
            im2col(x.item(i), &g, cols);
            gemm(
                Mat::new(cols, p, kc),
                Mat::new(self.weight.value.data(), kc, co),
                T::zero(),
                out.item_mut(i),
            );
        }
        if let Some(b) = &self.bias {
            add_bias(out.data_mut(), b.value.data());
        }
        self.input = Some(x.clone());
        self.geom = Some(g);
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let (x, g) = match (&self.input, self.geom) {
            (Some(x), Some(g)) => (x, g),
            _ => return Err(Error::Shape(format!("{}: backward before forward", self.name))),
        };
        let (n, _, _, _) = x.nhwc()?;
        let (p, kc, co) = (g.positions(), g.patch_len(), self.out_channels);
        if grad_out.shape() != [n, g.out_h, g.out_w, co] {
            return Err(Error::Shape(format!(
                "{}: gradient shape {:?} does not match output",
                self.name,
                grad_out.shape()
            )));
        }
        let mut dx = Tensor::zeros(x.shape());
        ensure_len(&mut self.scratch, 2 * p * kc);
        let (cols, dcols) = self.scratch.split_at_mut(p * kc);
        let dcols = &mut dcols[..p * kc];
        for i in 0..n {
            let dy = grad_out.item(i);
            if param_grads {
                im2col(x.item(i), &g, cols);
                gemm(
                    Mat::new(&cols[..], p, kc).t(),
                    Mat::new(dy, p, co),
                    T::one(),
                    self.weight.grad.data_mut(),
                );
            }
            gemm(
                Mat::new(dy, p, co),
                Mat::new(self.weight.value.data(), kc, co).t(),
                T::zero(),
                dcols,
            );
            col2im(dcols, &g, dx.item_mut(i));
        }
        if param_grads {
            if let Some(b) = &mut self.bias {
                accumulate_bias_grad(grad_out.data(), b.grad.data_mut());
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Transposed convolution: the adjoint of a [`Conv2d`] taking the
/// `in * stride` output image down to the input grid. Kernel layout
/// `[kh, kw, cout, cin]`.
pub struct ConvTranspose2d<T: Real> {
    name: String,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    input: Option<Tensor<T>>,
    geom: Option<ConvGeom>,
    scratch: Vec<T>,
}

impl<T: Real> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        bias: bool,
        init_std: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        validate_kernel(kernel, stride)?;
        let name = name.into();
        let weight = Param::new(
            format!("{name}/kernel"),
            init_normal(&[kernel.0, kernel.1, out_channels, in_channels], 0.0, init_std, rng),
        );
        let bias = bias.then(|| Param::new(format!("{name}/bias"), Tensor::zeros(&[out_channels])));
        Ok(Self {
            name,
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            weight,
            bias,
            input: None,
            geom: None,
            scratch: Vec::new(),
        })
    }

    /// Geometry of the adjoint convolution (output image -> input grid).
    fn adjoint_geom(&self, h: usize, w: usize) -> Result<ConvGeom> {
        let (oh, ow) = self.output_hw(h, w)?;
        let g = ConvGeom::new(oh, ow, self.out_channels, self.kernel, self.stride, self.padding)?;
        if (g.out_h, g.out_w) != (h, w) {
            return Err(Error::Shape(format!(
                "{}: transposed geometry does not invert ({h}x{w} -> {oh}x{ow})",
                self.name
            )));
        }
        Ok(g)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok(match self.padding {
            Padding::Same => (h * self.stride.0, w * self.stride.1),
            Padding::Valid => ((h - 1) * self.stride.0 + self.kernel.0, (w - 1) * self.stride.1 + self.kernel.1),
        })
    }
}

impl<T: Real> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, h, w, c) = x.nhwc()?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {c}",
                self.name, self.in_channels
            )));
        }
        let g = self.adjoint_geom(h, w)?;
        let (p, kc, ci) = (g.positions(), g.patch_len(), self.in_channels);
        let mut out = Tensor::zeros(&[n, g.in_h, g.in_w, self.out_channels]);
        ensure_len(&mut self.scratch, p * kc);
        let cols = &mut self.scratch[..p * kc];
        for i in 0..n {
            gemm(
                Mat::new(x.item(i), p, ci),
                Mat::new(self.weight.value.data(), kc, ci).t(),
                T::zero(),
                cols,
            );
            col2im(cols, &g, out.item_mut(i));
        }
        if let Some(b) = &self.bias {
            add_bias(out.data_mut(), b.value.data());
        }
        self.input = Some(x.clone());
        self.geom = Some(g);
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let (x, g) = match (&self.input, self.geom) {
            (Some(x), Some(g)) => (x, g),
            _ => return Err(Error::Shape(format!("{}: backward before forward", self.name))),
        };
        let (n, _, _, _) = x.nhwc()?;
        if grad_out.shape() != [n, g.in_h, g.in_w, self.out_channels] {
            return Err(Error::Shape(format!(
                "{}: gradient shape {:?} does not match output",
                self.name,
                grad_out.shape()
            )));
        }
        let (p, kc, ci) = (g.positions(), g.patch_len(), self.in_channels);
        let mut dx = Tensor::zeros(x.shape());
        ensure_len(&mut self.scratch, p * kc);
        let cols = &mut self.scratch[..p * kc];
        for i in 0..n {
            im2col(grad_out.item(i), &g, cols);
            gemm(
                Mat::new(&cols[..], p, kc),
                Mat::new(self.weight.value.data(), kc, ci),
                T::zero(),
                dx.item_mut(i),
            );
            if param_grads {
                gemm(
                    Mat::new(&cols[..], p, kc).t(),
                    Mat::new(x.item(i), p, ci),
                    T::one(),
                    self.weight.grad.data_mut(),
                );
            }
        }
        if param_grads {
            if let Some(b) = &mut self.bias {
                accumulate_bias_grad(grad_out.data(), b.grad.data_mut());
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Zero padding of the two spatial axes.
pub struct ZeroPad2d {
    name: String,
    /// (top, bottom, left, right)
    pub pad: (usize, usize, usize, usize),
    in_shape: Option<(usize, usize, usize, usize)>,
}

impl ZeroPad2d {
    pub fn new(name: impl Into<String>, pad: usize) -> Self {
        Self::asymmetric(name, (pad, pad, pad, pad))
    }

    pub fn asymmetric(name: impl Into<String>, pad: (usize, usize, usize, usize)) -> Self {
        Self {
            name: name.into(),
            pad,
            in_shape: None,
        }
    }
}

impl<T: Real> Layer<T> for ZeroPad2d {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, h, w, c) = x.nhwc()?;
        let (t, b, l, r) = self.pad;
        let (oh, ow) = (h + t + b, w + l + r);
        let mut out = Tensor::zeros(&[n, oh, ow, c]);
        for i in 0..n {
            let src = x.item(i);
            let dst = out.item_mut(i);
            for y in 0..h {
                let s = &src[y * w * c..(y + 1) * w * c];
                let at = ((y + t) * ow + l) * c;
                dst[at..at + w * c].copy_from_slice(s);
            }
        }
        self.in_shape = Some((n, h, w, c));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, _param_grads: bool) -> Result<Tensor<T>> {
        let (n, h, w, c) = self
            .in_shape
            .ok_or_else(|| Error::Shape(format!("{}: backward before forward", self.name)))?;
        let (t, _, l, _) = self.pad;
        let (_, _, ow, _) = grad_out.nhwc()?;
        let mut dx = Tensor::zeros(&[n, h, w, c]);
        for i in 0..n {
            let src = grad_out.item(i);
            let dst = dx.item_mut(i);
            for y in 0..h {
                let at = ((y + t) * ow + l) * c;
                dst[y * w * c..(y + 1) * w * c].copy_from_slice(&src[at..at + w * c]);
            }
        }
        Ok(dx)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Uniform random tensor in `[-1, 1)`, for tests and benchmarks.
pub fn random_tensor<T: Real>(shape: &[usize], rng: &mut Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(2.0 * rng.random::<f64>() - 1.0)).collect();
    Tensor::from_vec(shape, data).expect("matching length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_layer;
    use crate::rng;

    #[test]
    fn same_padding_output_sizes() {
        let g = ConvGeom::new(8, 1200, 2, (5, 5), (2, 2), Padding::Same).unwrap();
        assert_eq!((g.out_h, g.out_w), (4, 600));
        assert_eq!((g.pad_top, g.pad_left), (2, 2));
        let g = ConvGeom::new(1, 6, 64, (5, 5), (1, 6), Padding::Same).unwrap();
        assert_eq!((g.out_h, g.out_w), (1, 1));
        let g = ConvGeom::new(10, 10, 1, (5, 5), (1, 1), Padding::Valid).unwrap();
        assert_eq!((g.out_h, g.out_w), (6, 6));
        assert!(ConvGeom::new(3, 3, 1, (5, 5), (1, 1), Padding::Valid).is_err());
    }

    #[test]
    fn one_by_one_identity_kernel_passes_input() {
        let mut r = rng::seeded(0);
        let mut conv = Conv2d::<f64>::new("c", 3, 3, (1, 1), (1, 1), Padding::Same, false, 0.1, &mut r).unwrap();
        let w = conv.weight.value.data_mut();
        w.fill(0.0);
        for k in 0..3 {
            w[k * 3 + k] = 1.0;
        }
        let x = random_tensor::<f64>(&[2, 4, 5, 3], &mut r);
        let y = conv.forward(&x, Mode::Train).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn strided_conv_matches_direct_sum() {
        let mut r = rng::seeded(1);
        let mut conv = Conv2d::<f64>::new("c", 2, 3, (3, 2), (2, 1), Padding::Same, true, 0.5, &mut r).unwrap();
        conv.bias.as_mut().unwrap().value.data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = random_tensor::<f64>(&[1, 5, 4, 2], &mut r);
        let y = conv.forward(&x, Mode::Train).unwrap();
        let g = ConvGeom::new(5, 4, 2, (3, 2), (2, 1), Padding::Same).unwrap();
        assert_eq!(y.shape(), &[1, 3, 4, 3]);
        let wv = conv.weight.value.data();
        for oh in 0..3 {
            for ow in 0..4 {
                for co in 0..3 {
                    let mut acc = conv.bias.as_ref().unwrap().value.data()[co];
                    for ki in 0..3 {
                        for kj in 0..2 {
                            let ih = (oh * 2 + ki) as isize - g.pad_top as isize;
                            let iw = (ow + kj) as isize - g.pad_left as isize;
                            if ih < 0 || iw < 0 || ih >= 5 || iw >= 4 {
                                continue;
                            }
                            for ci in 0..2 {
                                let xv = x.data()[((ih as usize) * 4 + iw as usize) * 2 + ci];
                                acc += xv * wv[((ki * 2 + kj) * 2 + ci) * 3 + co];
                            }
                        }
                    }
                    let got = y.data()[(oh * 4 + ow) * 3 + co];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> with shared weights.
        let mut r = rng::seeded(2);
        let mut conv = Conv2d::<f64>::new("c", 3, 4, (5, 5), (2, 3), Padding::Same, false, 0.3, &mut r).unwrap();
        let mut convt =
            ConvTranspose2d::<f64>::new("t", 4, 3, (5, 5), (2, 3), Padding::Same, false, 0.3, &mut r).unwrap();
        // Conv kernel [kh,kw,cin=3,cout=4]; transposed kernel [kh,kw,cout=3,cin=4]
        // indexes the same numbers.
        convt.weight.value = conv.weight.value.clone().reshape(&[5, 5, 3, 4]).unwrap();
        let x = random_tensor::<f64>(&[1, 4, 9, 3], &mut r);
        let y = random_tensor::<f64>(&[1, 2, 3, 4], &mut r);
        let cx = conv.forward(&x, Mode::Train).unwrap();
        assert_eq!(cx.shape(), y.shape());
        let ty = convt.forward(&y, Mode::Train).unwrap();
        assert_eq!(ty.shape(), x.shape());
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn conv_gradients() {
        let mut r = rng::seeded(3);
        for (shape, k, s, pad) in [
            ([2, 5, 6, 3], (3, 3), (1, 1), Padding::Same),
            ([1, 4, 7, 2], (5, 5), (2, 3), Padding::Same),
            ([2, 1, 5, 1], (5, 5), (1, 5), Padding::Same),
            ([1, 6, 6, 2], (5, 5), (1, 1), Padding::Valid),
        ] {
            let mut conv = Conv2d::<f64>::new("c", shape[3], 2, k, s, pad, true, 0.4, &mut r).unwrap();
            let x = random_tensor::<f64>(&shape, &mut r);
            check_layer(&mut conv, &x, 1e-4, &mut r).unwrap();
        }
    }

    #[test]
    fn conv_transpose_gradients() {
        let mut r = rng::seeded(4);
        for (shape, k, s) in [([2, 2, 3, 3], (3, 3), (2, 2)), ([1, 1, 2, 2], (5, 5), (1, 5)), ([1, 3, 3, 1], (5, 5), (1, 1))] {
            let mut convt =
                ConvTranspose2d::<f64>::new("t", shape[3], 2, k, s, Padding::Same, true, 0.4, &mut r).unwrap();
            let x = random_tensor::<f64>(&shape, &mut r);
            check_layer(&mut convt, &x, 1e-4, &mut r).unwrap();
        }
    }

    #[test]
    fn zero_pad_gradients_and_shape() {
        let mut r = rng::seeded(5);
        let mut pad = ZeroPad2d::new("p", 1);
        let x = random_tensor::<f64>(&[2, 3, 4, 2], &mut r);
        let y = Layer::<f64>::forward(&mut pad, &x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[2, 5, 6, 2]);
        assert!((y.sum() - x.sum()).abs() < 1e-12);
        check_layer(&mut pad, &x, 1e-4, &mut r).unwrap();
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let mut r = rng::seeded(6);
        let mut conv = Conv2d::<f64>::new("c", 3, 2, (3, 3), (1, 1), Padding::Same, false, 0.1, &mut r).unwrap();
        let x = Tensor::<f64>::zeros(&[1, 4, 4, 2]);
        assert!(conv.forward(&x, Mode::Train).is_err());
    }
}
