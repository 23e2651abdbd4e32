//! Layers, tensors and a sequential container generic over the float type.

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Float types the network runs in: `f32` for training, `f64` for gradient checks.
pub trait Scalar: Float + Default + Send + Sync + std::fmt::Debug + 'static {
    /// `C = alpha·A·B + beta·C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        ldc: usize,
    );
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        ldc: usize,
    ) {
        assert!(m == 0 || c.len() >= (m - 1) * ldc + n);
        // SAFETY: the strides describe in-bounds views of `a`, `b` and `c`; callers pass
        // exact shapes and the assert above guards the output.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                ldc as isize,
                1,
            );
        }
    }
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        ldc: usize,
    ) {
        assert!(m == 0 || c.len() >= (m - 1) * ldc + n);
        // SAFETY: as for f32.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                ldc as isize,
                1,
            );
        }
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// `c` channels of an `e × e × e` cube, channel-major then z, y, x.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub e: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(c: usize, e: usize) -> Self {
        Tensor {
            c,
            e,
            data: vec![T::zero(); c * e * e * e],
        }
    }

    pub fn from_vec(c: usize, e: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * e * e * e);
        Tensor { c, e, data }
    }
}

/// Layer description shared by the architecture JSON and the weight file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// 3×3×3 convolution, padding 1, stride 1.
    Conv3d {
        cin: usize,
        cout: usize,
    },
    /// Fully connected; the output is viewed as `out_c` channels of extent `out_e`.
    Dense {
        input: usize,
        out_c: usize,
        out_e: usize,
    },
    Relu,
    MaxPool2,
    Upsample2,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

enum Cache {
    None,
    Argmax(Vec<usize>),
}

/// Output of `forward_cached`: every layer input plus what its backward pass needs.
pub struct Trace<T> {
    inputs: Vec<Tensor<T>>,
    caches: Vec<Cache>,
    pub output: Tensor<T>,
}

/// Columns of the convolution's patch matrix for output planes `z0..z1`:
/// row `ci·27 + k`, column `(z - z0)·e² + y·e + x`.
fn im2col_slab<T: Scalar>(x: &Tensor<T>, z0: usize, z1: usize, col: &mut [T]) {
    let e = x.e;
    let (p, w) = (e * e * e, (z1 - z0) * e * e);
    col[..x.c * 27 * w].iter_mut().for_each(|v| *v = T::zero());
    for ci in 0..x.c {
        let src = &x.data[ci * p..(ci + 1) * p];
        for k in 0..27 {
            let (dz, dy, dx) = offsets(k);
            let dst = &mut col[(ci * 27 + k) * w..(ci * 27 + k + 1) * w];
            let xs = valid(e, dx);
            for z in valid(e, dz).filter(|z| (z0..z1).contains(z)) {
                let sz = (z as isize + dz) as usize;
                for y in valid(e, dy) {
                    let sy = (y as isize + dy) as usize;
                    let o = ((z - z0) * e + y) * e;
                    let i = (((sz * e + sy) * e) as isize + dx + xs.start as isize) as usize;
                    dst[o + xs.start..o + xs.end].copy_from_slice(&src[i..i + xs.len()]);
                }
            }
        }
    }
}

fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize, out: &mut [T]) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = a[r * cols + c];
                }
            }
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (d, &v) in y.iter_mut().zip(x) {
        *d = *d + alpha * v;
    }
}

/// Kernel tap `k` as a (z, y, x) offset in -1..=1.
#[inline]
fn offsets(k: usize) -> (isize, isize, isize) {
    ((k / 9) as isize - 1, ((k / 3) % 3) as isize - 1, (k % 3) as isize - 1)
}

/// Output planes per im2col slab, sized so a slab stays cache resident.
fn slab_planes(e: usize) -> usize {
    (SLAB_COLUMNS / (e * e)).clamp(1, e)
}

const SLAB_COLUMNS: usize = 512;

fn conv_im2col<T: Scalar>(x: &Tensor<T>, w: &[T], b: &[T], cout: usize) -> Tensor<T> {
    let e = x.e;
    let (p, k) = (e * e * e, x.c * 27);
    let mut out = Tensor::zeros(cout, e);
    for co in 0..cout {
        out.data[co * p..(co + 1) * p].iter_mut().for_each(|v| *v = b[co]);
    }
    let step = slab_planes(e);
    let mut col = vec![T::zero(); k * step * e * e];
    for z0 in (0..e).step_by(step) {
        let z1 = (z0 + step).min(e);
        let n = (z1 - z0) * e * e;
        im2col_slab(x, z0, z1, &mut col);
        T::gemm(
            cout,
            k,
            n,
            w,
            k as isize,
            1,
            &col,
            n as isize,
            1,
            T::one(),
            &mut out.data[z0 * e * e..],
            p,
        );
    }
    out
}

fn conv_im2col_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &[T],
    dy: &Tensor<T>,
    gw: &mut [T],
    gb: &mut [T],
    need_dx: bool,
) -> Tensor<T> {
    let (e, cin, cout) = (x.e, x.c, dy.c);
    let (p, k) = (e * e * e, cin * 27);
    for co in 0..cout {
        gb[co] = gb[co] + dy.data[co * p..(co + 1) * p].iter().fold(T::zero(), |a, &v| a + v);
    }
    let step = slab_planes(e);
    let mut col = vec![T::zero(); k * step * e * e];
    let mut col_t = col.clone();
    for z0 in (0..e).step_by(step) {
        let z1 = (z0 + step).min(e);
        let n = (z1 - z0) * e * e;
        im2col_slab(x, z0, z1, &mut col);
        // A row-major colᵀ keeps the gemm on its fast packing path.
        transpose(&col[..k * n], k, n, &mut col_t);
        // gW += dY · colᵀ
        T::gemm(
            cout,
            n,
            k,
            &dy.data[z0 * e * e..],
            p as isize,
            1,
            &col_t,
            k as isize,
            1,
            T::one(),
            gw,
            k,
        );
    }
    if !need_dx {
        return Tensor::zeros(cin, e);
    }
    // The input gradient is a same-padding convolution of dY with the
    // channel-transposed, spatially flipped kernel.
    let mut flipped = vec![T::zero(); w.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for t in 0..27 {
                flipped[(ci * cout + co) * 27 + 26 - t] = w[(co * cin + ci) * 27 + t];
            }
        }
    }
    conv_im2col(dy, &flipped, &vec![T::zero(); cin], cin)
}

/// Index range of `z` with `0 <= z + d < e`.
#[inline]
fn valid(e: usize, d: isize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (e as isize - d).min(e as isize) as usize;
    lo..hi
}

/// Direct 3×3×3 convolution accumulated row by row; cheaper than im2col when the
/// output has few channels.
fn conv_direct<T: Scalar>(x: &Tensor<T>, w: &[T], b: &[T], cout: usize) -> Tensor<T> {
    let (cin, e) = (x.c, x.e);
    let p = e * e * e;
    let mut out = Tensor::zeros(cout, e);
    for co in 0..cout {
        let dst = &mut out.data[co * p..(co + 1) * p];
        dst.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..cin {
            let src = &x.data[ci * p..(ci + 1) * p];
            for k in 0..27 {
                let wv = w[(co * cin + ci) * 27 + k];
                let (dz, dy, dx) = offsets(k);
                let xs = valid(e, dx);
                for z in valid(e, dz) {
                    let sz = (z as isize + dz) as usize;
                    for y in valid(e, dy) {
                        let sy = (y as isize + dy) as usize;
                        let o = (z * e + y) * e;
                        let i = ((sz * e + sy) * e) as isize + dx;
                        let orow = &mut dst[o + xs.start..o + xs.end];
                        let irow = &src[(i + xs.start as isize) as usize..(i + xs.end as isize) as usize];
                        for (a, &v) in orow.iter_mut().zip(irow) {
                            *a = *a + wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`conv_direct`]: returns dx and accumulates gw, gb.
fn conv_direct_backward<T: Scalar>(x: &Tensor<T>, w: &[T], dy: &Tensor<T>, gw: &mut [T], gb: &mut [T]) -> Tensor<T> {
    let (cin, e, cout) = (x.c, x.e, dy.c);
    let p = e * e * e;
    let mut dxt = Tensor::zeros(cin, e);
    for co in 0..cout {
        let g = &dy.data[co * p..(co + 1) * p];
        gb[co] = gb[co] + g.iter().fold(T::zero(), |a, &v| a + v);
        for ci in 0..cin {
            let src = &x.data[ci * p..(ci + 1) * p];
            let dsrc = &mut dxt.data[ci * p..(ci + 1) * p];
            for k in 0..27 {
                let wi = (co * cin + ci) * 27 + k;
                let wv = w[wi];
                let (dz, dyo, dx) = offsets(k);
                let xs = valid(e, dx);
                let mut acc = T::zero();
                for z in valid(e, dz) {
                    let sz = (z as isize + dz) as usize;
                    for y in valid(e, dyo) {
                        let sy = (y as isize + dyo) as usize;
                        let o = (z * e + y) * e;
                        let i = (((sz * e + sy) * e) as isize + dx + xs.start as isize) as usize;
                        let n = xs.end - xs.start;
                        let grow = &g[o + xs.start..o + xs.end];
                        let irow = &src[i..i + n];
                        acc = acc + grow.iter().zip(irow).fold(T::zero(), |a, (&gv, &v)| a + gv * v);
                        for (d, &gv) in dsrc[i..i + n].iter_mut().zip(grow) {
                            *d = *d + wv * gv;
                        }
                    }
                }
                gw[wi] = gw[wi] + acc;
            }
        }
    }
    dxt
}

/// Output channel count below which convolutions skip im2col.
const DIRECT_CONV_MAX_COUT: usize = 4;

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec) -> Self {
        let (nw, nb) = match spec {
            LayerSpec::Conv3d { cin, cout } => (cout * cin * 27, cout),
            LayerSpec::Dense { input, out_c, out_e } => {
                let out = out_c * out_e * out_e * out_e;
                (out * input, out)
            }
            _ => (0, 0),
        };
        Layer {
            spec,
            w: vec![T::zero(); nw],
            b: vec![T::zero(); nb],
        }
    }

    pub fn fan(&self) -> (usize, usize) {
        match self.spec {
            LayerSpec::Conv3d { cin, cout } => (cin * 27, cout * 27),
            LayerSpec::Dense { input, out_c, out_e } => (input, out_c * out_e * out_e * out_e),
            _ => (0, 0),
        }
    }

    fn forward(&self, x: &Tensor<T>, keep: bool) -> (Tensor<T>, Cache) {
        match self.spec {
            LayerSpec::Conv3d { cin, cout } => {
                assert_eq!(x.c, cin, "conv input channels");
                let out = if cout < DIRECT_CONV_MAX_COUT {
                    conv_direct(x, &self.w, &self.b, cout)
                } else {
                    conv_im2col(x, &self.w, &self.b, cout)
                };
                (out, Cache::None)
            }
            LayerSpec::Dense { input, out_c, out_e } => {
                assert_eq!(x.data.len(), input, "dense input size");
                let out = out_c * out_e * out_e * out_e;
                let y = (0..out)
                    .map(|o| self.b[o] + dot(&self.w[o * input..(o + 1) * input], &x.data))
                    .collect();
                (Tensor::from_vec(out_c, out_e, y), Cache::None)
            }
            LayerSpec::Relu => {
                let data = x
                    .data
                    .iter()
                    .map(|&v| if v > T::zero() { v } else { T::zero() })
                    .collect();
                (Tensor::from_vec(x.c, x.e, data), Cache::None)
            }
            LayerSpec::Sigmoid => {
                let data = x.data.iter().map(|&v| T::one() / (T::one() + (-v).exp())).collect();
                (Tensor::from_vec(x.c, x.e, data), Cache::None)
            }
            LayerSpec::MaxPool2 => {
                let (e, h) = (x.e, x.e / 2);
                let mut out = Tensor::zeros(x.c, h);
                let mut arg = vec![0usize; out.data.len()];
                for c in 0..x.c {
                    for z in 0..h {
                        for y in 0..h {
                            for xx in 0..h {
                                let mut best = usize::MAX;
                                for dz in 0..2 {
                                    for dy in 0..2 {
                                        for dx in 0..2 {
                                            let i = ((c * e + 2 * z + dz) * e + 2 * y + dy) * e + 2 * xx + dx;
                                            if best == usize::MAX || x.data[i] > x.data[best] {
                                                best = i;
                                            }
                                        }
                                    }
                                }
                                let o = ((c * h + z) * h + y) * h + xx;
                                out.data[o] = x.data[best];
                                arg[o] = best;
                            }
                        }
                    }
                }
                (out, if keep { Cache::Argmax(arg) } else { Cache::None })
            }
            LayerSpec::Upsample2 => {
                let (e, d) = (x.e, x.e * 2);
                let mut out = Tensor::zeros(x.c, d);
                for c in 0..x.c {
                    for z in 0..d {
                        for y in 0..d {
                            let src = ((c * e + z / 2) * e + y / 2) * e;
                            let dst = ((c * d + z) * d + y) * d;
                            for xx in 0..d {
                                out.data[dst + xx] = x.data[src + xx / 2];
                            }
                        }
                    }
                }
                (out, Cache::None)
            }
        }
    }

    /// Returns the input gradient and adds parameter gradients into `gw`, `gb`.
    fn backward(
        &self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        cache: &Cache,
        dy: &Tensor<T>,
        gw: &mut [T],
        gb: &mut [T],
        need_dx: bool,
    ) -> Tensor<T> {
        match self.spec {
            LayerSpec::Conv3d { cout, .. } => {
                if cout < DIRECT_CONV_MAX_COUT {
                    conv_direct_backward(x, &self.w, dy, gw, gb)
                } else {
                    conv_im2col_backward(x, &self.w, dy, gw, gb, need_dx)
                }
            }
            LayerSpec::Dense { input, .. } => {
                let out = self.b.len();
                for o in 0..out {
                    gb[o] = gb[o] + dy.data[o];
                }
                let mut dx = vec![T::zero(); input];
                for o in 0..out {
                    let g = dy.data[o];
                    axpy(g, &x.data, &mut gw[o * input..(o + 1) * input]);
                    axpy(g, &self.w[o * input..(o + 1) * input], &mut dx);
                }
                Tensor::from_vec(x.c, x.e, dx)
            }
            LayerSpec::Relu => {
                let data = x
                    .data
                    .iter()
                    .zip(&dy.data)
                    .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                Tensor::from_vec(x.c, x.e, data)
            }
            LayerSpec::Sigmoid => {
                let data = y
                    .data
                    .iter()
                    .zip(&dy.data)
                    .map(|(&s, &g)| g * s * (T::one() - s))
                    .collect();
                Tensor::from_vec(x.c, x.e, data)
            }
            LayerSpec::MaxPool2 => {
                let Cache::Argmax(arg) = cache else {
                    unreachable!("pool cache")
                };
                let mut dx = Tensor::zeros(x.c, x.e);
                for (o, &i) in arg.iter().enumerate() {
                    dx.data[i] = dx.data[i] + dy.data[o];
                }
                dx
            }
            LayerSpec::Upsample2 => {
                let (e, d) = (x.e, x.e * 2);
                let mut dx = Tensor::zeros(x.c, e);
                for c in 0..x.c {
                    for z in 0..d {
                        for yy in 0..d {
                            let dst = ((c * e + z / 2) * e + yy / 2) * e;
                            let src = ((c * d + z) * d + yy) * d;
                            for xx in 0..d {
                                dx.data[dst + xx / 2] = dx.data[dst + xx / 2] + dy.data[src + xx];
                            }
                        }
                    }
                }
                dx
            }
        }
    }
}

/// Parameter gradients, one `(w, b)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Grads<T> {
    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(specs: &[LayerSpec]) -> Self {
        Sequential {
            layers: specs.iter().map(|&s| Layer::new(s)).collect(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.forward(&cur, false).0;
        }
        cur
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Trace<T> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            let (out, cache) = l.forward(&cur, true);
            inputs.push(cur);
            caches.push(cache);
            cur = out;
        }
        Trace {
            inputs,
            caches,
            output: cur,
        }
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads {
            layers: self
                .layers
                .iter()
                .map(|l| (vec![T::zero(); l.w.len()], vec![T::zero(); l.b.len()]))
                .collect(),
        }
    }

    /// Back-propagates `dout` through a cached pass, accumulating into `grads`;
    /// returns the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace<T>, dout: Tensor<T>, grads: &mut Grads<T>) -> Tensor<T> {
        self.backward_with(trace, dout, grads, true)
    }

    /// As [`Sequential::backward`]; with `need_input_grad` unset the returned tensor is
    /// zero and the first layer skips its input gradient.
    pub fn backward_with(
        &self,
        trace: &Trace<T>,
        dout: Tensor<T>,
        grads: &mut Grads<T>,
        need_input_grad: bool,
    ) -> Tensor<T> {
        let mut d = dout;
        for i in (0..self.layers.len()).rev() {
            let y_owned;
            let y = if i + 1 < self.layers.len() {
                &trace.inputs[i + 1]
            } else {
                y_owned = &trace.output;
                y_owned
            };
            let (gw, gb) = &mut grads.layers[i];
            d = self.layers[i].backward(
                &trace.inputs[i],
                y,
                &trace.caches[i],
                &d,
                gw,
                gb,
                need_input_grad || i > 0,
            );
        }
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[T]) {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
    }
}
