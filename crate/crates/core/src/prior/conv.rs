//! Same-size 2-D convolution via im2col and GEMM.
//!
//! Feature maps are `[channels, height * width]` row-major arrays.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Zero,
    Circular,
}

/// Unfold `x` (`[c, h*w]`) into `[c*k*k, h*w]` patch columns.
pub fn im2col(x: ArrayView2<'_, f64>, h: usize, w: usize, k: usize, padding: Padding) -> Array2<f64> {
    let c = x.nrows();
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut col = Array2::<f64>::zeros((c * k * k, hw));
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    let out = col.as_slice_mut().expect("standard layout");
    for ch in 0..c {
        let src = &xs[ch * hw..(ch + 1) * hw];
        for di in 0..k {
            for dj in 0..k {
                let row = (ch * k + di) * k + dj;
                let dst = &mut out[row * hw..(row + 1) * hw];
                let oy = di as isize - pad;
                let ox = dj as isize - pad;
                for y in 0..h {
                    let sy = y as isize + oy;
                    let drow = &mut dst[y * w..(y + 1) * w];
                    match padding {
                        Padding::Zero => {
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                            let x0 = (-ox).max(0) as usize;
                            let x1 = ((w as isize - ox).min(w as isize)).max(0) as usize;
                            if x0 < x1 {
                                let s0 = (x0 as isize + ox) as usize;
                                drow[x0..x1].copy_from_slice(&srow[s0..s0 + (x1 - x0)]);
                            }
                        }
                        Padding::Circular => {
                            let sy = sy.rem_euclid(h as isize) as usize;
                            let srow = &src[sy * w..(sy + 1) * w];
                            for (x, d) in drow.iter_mut().enumerate() {
                                *d = srow[(x as isize + ox).rem_euclid(w as isize) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: fold columns back, summing overlaps.
pub fn col2im(col: ArrayView2<'_, f64>, c: usize, h: usize, w: usize, k: usize, padding: Padding) -> Array2<f64> {
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut x = Array2::<f64>::zeros((c, hw));
    let cs = col.as_standard_layout();
    let cs = cs.as_slice().expect("standard layout");
    let xs = x.as_slice_mut().expect("standard layout");
    for ch in 0..c {
        let dst = &mut xs[ch * hw..(ch + 1) * hw];
        for di in 0..k {
            for dj in 0..k {
                let row = (ch * k + di) * k + dj;
                let src = &cs[row * hw..(row + 1) * hw];
                let oy = di as isize - pad;
                let ox = dj as isize - pad;
                for y in 0..h {
                    let sy = y as isize + oy;
                    let srow = &src[y * w..(y + 1) * w];
                    match padding {
                        Padding::Zero => {
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let drow = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                            let x0 = (-ox).max(0) as usize;
                            let x1 = ((w as isize - ox).min(w as isize)).max(0) as usize;
                            if x0 < x1 {
                                let s0 = (x0 as isize + ox) as usize;
                                for (d, s) in drow[s0..s0 + (x1 - x0)].iter_mut().zip(&srow[x0..x1]) {
                                    *d += s;
                                }
                            }
                        }
                        Padding::Circular => {
                            let sy = sy.rem_euclid(h as isize) as usize;
                            let drow = &mut dst[sy * w..(sy + 1) * w];
                            for (x, s) in srow.iter().enumerate() {
                                drow[(x as isize + ox).rem_euclid(w as isize) as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// One convolution layer. `weight` is `[out, in * k * k]`, i.e. the
/// row-major flattening of `[out, in, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ConvLayer {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            k,
            weight: Array2::zeros((out_ch, in_ch * k * k)),
            bias: Array1::zeros(out_ch),
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>, h: usize, w: usize, padding: Padding) -> Array2<f64> {
        let col = im2col(x, h, w, self.k, padding);
        let mut out = self.weight.dot(&col);
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row += b;
        }
        out
    }

    /// Gradients with respect to weight, bias and input given the layer
    /// input `x` and the output gradient `g`.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        g: ArrayView2<'_, f64>,
        h: usize,
        w: usize,
        padding: Padding,
        need_input_grad: bool,
    ) -> (Array2<f64>, Array1<f64>, Option<Array2<f64>>) {
        let col = im2col(x, h, w, self.k, padding);
        let dw = g.dot(&col.t());
        let db = g.sum_axis(Axis(1));
        let dx = need_input_grad.then(|| {
            let dcol = self.weight.t().dot(&g);
            col2im(dcol.view(), self.in_ch, h, w, self.k, padding)
        });
        (dw, db, dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn direct_conv(x: &Array2<f64>, layer: &ConvLayer, h: usize, w: usize, padding: Padding) -> Array2<f64> {
        let k = layer.k as isize;
        let p = k / 2;
        let mut out = Array2::zeros((layer.out_ch, h * w));
        for o in 0..layer.out_ch {
            for y in 0..h as isize {
                for xx in 0..w as isize {
                    let mut acc = layer.bias[o];
                    for c in 0..layer.in_ch {
                        for di in 0..k {
                            for dj in 0..k {
                                let (mut sy, mut sx) = (y + di - p, xx + dj - p);
                                match padding {
                                    Padding::Zero => {
                                        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                            continue;
                                        }
                                    }
                                    Padding::Circular => {
                                        sy = sy.rem_euclid(h as isize);
                                        sx = sx.rem_euclid(w as isize);
                                    }
                                }
                                let widx = (c * layer.k + di as usize) * layer.k + dj as usize;
                                acc += layer.weight[(o, widx)] * x[(c, sy as usize * w + sx as usize)];
                            }
                        }
                    }
                    out[(o, y as usize * w + xx as usize)] = acc;
                }
            }
        }
        out
    }

    fn random_layer(rng: &mut Rng, i: usize, o: usize, k: usize) -> ConvLayer {
        let mut l = ConvLayer::zeros(i, o, k);
        l.weight.mapv_inplace(|_| rng.normal());
        l.bias.mapv_inplace(|_| rng.normal());
        l
    }

    #[test]
    fn matches_direct_loop_both_paddings() {
        let mut rng = Rng::new(1);
        for &(h, w, k) in &[(5, 7, 3), (4, 4, 5), (1, 1, 3), (6, 3, 1)] {
            let layer = random_layer(&mut rng, 2, 3, k);
            let x = Array2::from_shape_fn((2, h * w), |_| rng.normal());
            for pad in [Padding::Zero, Padding::Circular] {
                let a = layer.forward(x.view(), h, w, pad);
                let b = direct_conv(&x, &layer, h, w, pad);
                let err = (&a - &b).iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!(err < 1e-12, "h={h} w={w} k={k} {pad:?}: {err}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = Rng::new(2);
        for pad in [Padding::Zero, Padding::Circular] {
            let (c, h, w, k) = (3, 5, 6, 3);
            let x = Array2::from_shape_fn((c, h * w), |_| rng.normal());
            let y = Array2::from_shape_fn((c * k * k, h * w), |_| rng.normal());
            let lhs: f64 = (&im2col(x.view(), h, w, k, pad) * &y).sum();
            let rhs: f64 = (&x * &col2im(y.view(), c, h, w, k, pad)).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }
}
