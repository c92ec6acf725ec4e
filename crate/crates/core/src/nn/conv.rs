//! 2-D convolution over channels-last `[B, T, F, C]` tensors with "same"
//! zero padding and a stride along time only.

use super::graph::{Graph, Var};
use super::kernels::{gemm, matmul};
use super::tensor::Tensor;
use super::NnError;

#[derive(Clone, Copy)]
struct Geometry {
    t_in: usize,
    f: usize,
    c_in: usize,
    kt: usize,
    kf: usize,
    stride: usize,
    t_out: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.kt * self.kf * self.c_in
    }

    /// Visits every (output position, patch column, input offset) triple
    /// whose input tap lies inside the signal.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (pt, pf) = (self.kt as isize / 2, self.kf as isize / 2);
        for to in 0..self.t_out {
            let centre = (to * self.stride) as isize;
            for fo in 0..self.f {
                let row = to * self.f + fo;
                for dt in 0..self.kt {
                    let ti = centre + dt as isize - pt;
                    if ti < 0 || ti >= self.t_in as isize {
                        continue;
                    }
                    for df in 0..self.kf {
                        let fi = fo as isize + df as isize - pf;
                        if fi < 0 || fi >= self.f as isize {
                            continue;
                        }
                        let col = (dt * self.kf + df) * self.c_in;
                        let src = (ti as usize * self.f + fi as usize) * self.c_in;
                        f(row, col, src);
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let patch = self.patch();
        let mut cols = vec![0.0; self.t_out * self.f * patch];
        let c = self.c_in;
        self.for_each_tap(|row, col, src| {
            cols[row * patch + col..row * patch + col + c].copy_from_slice(&x[src..src + c]);
        });
        cols
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let patch = self.patch();
        let c = self.c_in;
        self.for_each_tap(|row, col, src| {
            for (d, g) in dx[src..src + c].iter_mut().zip(&cols[row * patch + col..row * patch + col + c]) {
                *d += g;
            }
        });
    }
}

impl Graph {
    /// `x: [B,T,F,Cin]`, `w: [kt,kf,Cin,Cout]` (odd kernel sizes),
    /// `b: [Cout]`. Output `[B, ceil(T/stride), F, Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var, NnError> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let (&[bs, t_in, f, c_in], &[kt, kf, wc_in, c_out]) = (&xs[..], &ws[..]) else {
            return Err(NnError::Shape(format!("conv2d needs rank-4 input and kernel, got {xs:?}, {ws:?}")));
        };
        if wc_in != c_in || kt % 2 == 0 || kf % 2 == 0 || stride == 0 || self.shape(b) != [c_out] {
            return Err(NnError::Shape(format!(
                "conv2d: input {xs:?}, kernel {ws:?}, bias {:?}, stride {stride}",
                self.shape(b)
            )));
        }
        let geo = Geometry {
            t_in,
            f,
            c_in,
            kt,
            kf,
            stride,
            t_out: t_in.div_ceil(stride),
        };
        let (patch, rows) = (geo.patch(), geo.t_out * f);
        let in_item = t_in * f * c_in;
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = Vec::with_capacity(bs * rows * c_out);
        for item in 0..bs {
            let cols = geo.im2col(&xv[item * in_item..(item + 1) * in_item]);
            let mut y = matmul(&cols, wv, rows, patch, c_out);
            for r in y.chunks_exact_mut(c_out) {
                r.iter_mut().zip(bv).for_each(|(v, bias)| *v += bias);
            }
            out.extend(y);
        }
        let value = Tensor::new(&[bs, geo.t_out, f, c_out], out)?;
        Ok(self.record(
            value,
            &[x, w, b],
            Box::new(move |gy, ins, _, needs| {
                let (xv, wv, g) = (ins[0].data(), ins[1].data(), gy.data());
                let mut dx = needs[0].then(|| vec![0.0; bs * in_item]);
                let mut dw = vec![0.0; patch * c_out];
                let mut db = vec![0.0; c_out];
                for item in 0..bs {
                    let gi = &g[item * rows * c_out..(item + 1) * rows * c_out];
                    for r in gi.chunks_exact(c_out) {
                        db.iter_mut().zip(r).for_each(|(a, v)| *a += v);
                    }
                    if needs[1] {
                        let cols = geo.im2col(&xv[item * in_item..(item + 1) * in_item]);
                        // dW += colsᵀ · dY
                        gemm(patch, rows, c_out, &cols, (1, patch), gi, (c_out, 1), 1.0, &mut dw);
                    }
                    if let Some(dx) = dx.as_mut() {
                        let mut dcols = vec![0.0; rows * patch];
                        // dCols = dY · Wᵀ
                        gemm(rows, c_out, patch, gi, (c_out, 1), wv, (1, c_out), 0.0, &mut dcols);
                        geo.col2im(&dcols, &mut dx[item * in_item..(item + 1) * in_item]);
                    }
                }
                vec![
                    dx.map(|d| Tensor::new(ins[0].shape(), d).unwrap()),
                    needs[1].then(|| Tensor::new(ins[1].shape(), dw).unwrap()),
                    needs[2].then(|| Tensor::from_vec(db)),
                ]
            }),
        ))
    }
}
