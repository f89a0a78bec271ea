//! 3x3 "same" convolutions on zero-padded planes.
//!
//! A plane of `h x w` is stored as `(h + 2) x (w + 2)` with a zero border, so
//! every tap of the kernel is a single contiguous axpy over the interior
//! span. Writes that land in the left/right border columns are zeroed after
//! each pass.

use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geom {
    pub h: usize,
    pub w: usize,
}

impl Geom {
    pub fn stride(&self) -> usize {
        self.w + 2
    }

    pub fn plane(&self) -> usize {
        (self.h + 2) * (self.w + 2)
    }

    /// First interior index and span length covering all interior rows.
    pub fn span(&self) -> (usize, usize) {
        let s = self.stride();
        (s + 1, (self.h - 1) * s + self.w)
    }

    pub fn tap_offset(&self, ky: usize, kx: usize) -> isize {
        (ky as isize - 1) * self.stride() as isize + (kx as isize - 1)
    }

    pub fn index(&self, y: usize, x: usize) -> usize {
        (y + 1) * self.stride() + x + 1
    }

    pub fn zero_border_columns<T: Real>(&self, plane: &mut [T]) {
        let s = self.stride();
        for y in 1..=self.h {
            plane[y * s] = T::zero();
            plane[y * s + self.w + 1] = T::zero();
        }
    }
}

#[inline]
fn axpy<T: Real>(dst: &mut [T], a: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + a * s;
    }
}

const LANES: usize = 16;
const FLUSH: usize = 256;

/// Dot product with fixed 16-lane partial sums flushed to f64 every 256
/// elements; the summation order is independent of the target CPU.
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    let mut total = 0.0f64;
    for (ca, cb) in a.chunks(FLUSH).zip(b.chunks(FLUSH)) {
        let mut acc = [T::zero(); LANES];
        let mut ia = ca.chunks_exact(LANES);
        let mut ib = cb.chunks_exact(LANES);
        for (xa, xb) in (&mut ia).zip(&mut ib) {
            for l in 0..LANES {
                acc[l] = acc[l] + xa[l] * xb[l];
            }
        }
        let mut part = 0.0f64;
        for v in acc {
            part += v.to_f64().unwrap_or(0.0);
        }
        for (xa, xb) in ia.remainder().iter().zip(ib.remainder()) {
            part += (*xa * *xb).to_f64().unwrap_or(0.0);
        }
        total += part;
    }
    total
}

pub(crate) fn sum<T: Real>(a: &[T]) -> f64 {
    a.iter().map(|v| v.to_f64().unwrap_or(0.0)).sum()
}

/// One conv layer's view into the flat parameter vector.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerShape {
    pub cin: usize,
    pub cout: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * 9
    }

    pub fn len(&self) -> usize {
        self.weight_len() + self.cout
    }

    fn w_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        self.offset + ((o * self.cin + i) * 3 + ky) * 3 + kx
    }

    fn b_index(&self, o: usize) -> usize {
        self.offset + self.weight_len() + o
    }
}

/// `out = bias + conv(input)`, both padded.
pub(crate) fn forward<T: Real>(layer: &LayerShape, params: &[T], g: Geom, input: &[T]) -> Vec<T> {
    let p = g.plane();
    let (first, len) = g.span();
    let mut out = vec![T::zero(); layer.cout * p];
    for o in 0..layer.cout {
        let dst = &mut out[o * p..(o + 1) * p];
        let b = params[layer.b_index(o)];
        dst[first..first + len].iter_mut().for_each(|v| *v = b);
        for i in 0..layer.cin {
            let src = &input[i * p..(i + 1) * p];
            for ky in 0..3 {
                for kx in 0..3 {
                    let off = (first as isize + g.tap_offset(ky, kx)) as usize;
                    axpy(&mut dst[first..first + len], params[layer.w_index(o, i, ky, kx)], &src[off..off + len]);
                }
            }
        }
        g.zero_border_columns(dst);
    }
    out
}

/// Accumulate parameter gradients into `grad` and optionally return the
/// padded input gradient. `d_out` must have a zero border.
pub(crate) fn backward<T: Real>(
    layer: &LayerShape,
    params: &[T],
    g: Geom,
    input: &[T],
    d_out: &[T],
    grad: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let p = g.plane();
    let (first, len) = g.span();
    let mut d_in = want_input_grad.then(|| vec![T::zero(); layer.cin * p]);
    for o in 0..layer.cout {
        let dz = &d_out[o * p + first..o * p + first + len];
        grad[layer.b_index(o)] += sum(dz);
        for i in 0..layer.cin {
            let src = &input[i * p..(i + 1) * p];
            for ky in 0..3 {
                for kx in 0..3 {
                    let off = (first as isize + g.tap_offset(ky, kx)) as usize;
                    let wi = layer.w_index(o, i, ky, kx);
                    grad[wi] += dot(dz, &src[off..off + len]);
                    if let Some(d_in) = d_in.as_mut() {
                        axpy(&mut d_in[i * p + off..i * p + off + len], params[wi], dz);
                    }
                }
            }
        }
    }
    if let Some(d_in) = d_in.as_mut() {
        for i in 0..layer.cin {
            let plane = &mut d_in[i * p..(i + 1) * p];
            // top and bottom rows also collect spill-over
            let s = g.stride();
            plane[..s].iter_mut().for_each(|v| *v = T::zero());
            plane[(g.h + 1) * s..].iter_mut().for_each(|v| *v = T::zero());
            g.zero_border_columns(plane);
        }
    }
    d_in
}
