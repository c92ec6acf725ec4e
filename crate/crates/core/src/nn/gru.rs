//! Single-direction GRU over padded batches, as one tape node with a
//! hand-written backward pass through time.
//!
//! Gate layout in the stacked weights is `[z | r | n]`:
//!
//! ```text
//! z  = σ(x·Wz + h·Uz + bz)
//! r  = σ(x·Wr + h·Ur + br)
//! n  = tanh(x·Wn + (r ∘ h)·Un + bn)
//! h' = z ∘ h + (1 − z) ∘ n
//! ```

use super::graph::{Graph, Var};
use super::kernels::{matmul, matmul_nt, matmul_tn, sigmoid};
use super::tensor::Tensor;
use super::NnError;

/// `h · U[:, cols]` for a row-major `H × 3H` matrix.
fn vec_mat_cols(h: &[f64], u: &[f64], cols: std::ops::Range<usize>, out: &mut [f64]) {
    let width = 3 * h.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &hj) in h.iter().enumerate() {
        if hj == 0.0 {
            continue;
        }
        let row = &u[j * width + cols.start..j * width + cols.end];
        for (o, w) in out.iter_mut().zip(row) {
            *o += hj * w;
        }
    }
}

/// `U[:, cols] · g` (i.e. `g · U[:, cols]ᵀ`) accumulated into `out`.
fn mat_cols_vec(u: &[f64], cols: std::ops::Range<usize>, g: &[f64], out: &mut [f64]) {
    let width = 3 * out.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &u[j * width + cols.start..j * width + cols.end];
        *o += row.iter().zip(g).map(|(w, gv)| w * gv).sum::<f64>();
    }
}

impl Graph {
    /// Runs a GRU over `x: [B,T,I]` from a zero state. Item `b` is read for
    /// its first `lengths[b]` steps (backwards when `reverse`); outputs past
    /// the length are zero. Returns `[B,T,H]`.
    #[allow(clippy::too_many_arguments)]
    pub fn gru(
        &mut self,
        x: Var,
        lengths: &[usize],
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        reverse: bool,
    ) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let [bs, t_max, inp] = xs[..] else {
            return Err(NnError::Shape(format!("gru input must be [B,T,I], got {xs:?}")));
        };
        let h3 = self.value(bias).len();
        let hid = h3 / 3;
        if h3 % 3 != 0
            || hid == 0
            || self.shape(w_ih) != [inp, h3]
            || self.shape(w_hh) != [hid, h3]
            || lengths.len() != bs
            || lengths.iter().any(|&l| l > t_max)
        {
            return Err(NnError::Shape(format!(
                "gru: x {xs:?}, w_ih {:?}, w_hh {:?}, bias {:?}, lengths {lengths:?}",
                self.shape(w_ih),
                self.shape(w_hh),
                self.shape(bias)
            )));
        }
        let rows = bs * t_max;
        let mut xp = matmul(self.value(x).data(), self.value(w_ih).data(), rows, inp, h3);
        let bv = self.value(bias).data();
        for r in xp.chunks_exact_mut(h3) {
            r.iter_mut().zip(bv).for_each(|(v, b)| *v += b);
        }
        let u = self.value(w_hh).data();

        let mut out = vec![0.0; rows * hid];
        let mut h_prev = vec![0.0; rows * hid];
        let mut zs = vec![0.0; rows * hid];
        let mut rs = vec![0.0; rows * hid];
        let mut ns = vec![0.0; rows * hid];
        let mut zr = vec![0.0; 2 * hid];
        let mut q = vec![0.0; hid];
        let mut rh = vec![0.0; hid];
        for b in 0..bs {
            let len = lengths[b];
            let mut h = vec![0.0; hid];
            for s in 0..len {
                let t = if reverse { len - 1 - s } else { s };
                let row = b * t_max + t;
                let xr = &xp[row * h3..(row + 1) * h3];
                vec_mat_cols(&h, u, 0..2 * hid, &mut zr);
                for j in 0..hid {
                    zs[row * hid + j] = sigmoid(xr[j] + zr[j]);
                    rs[row * hid + j] = sigmoid(xr[hid + j] + zr[hid + j]);
                    rh[j] = rs[row * hid + j] * h[j];
                }
                vec_mat_cols(&rh, u, 2 * hid..h3, &mut q);
                for j in 0..hid {
                    let n = (xr[2 * hid + j] + q[j]).tanh();
                    let z = zs[row * hid + j];
                    ns[row * hid + j] = n;
                    h_prev[row * hid + j] = h[j];
                    h[j] = z * h[j] + (1.0 - z) * n;
                }
                out[row * hid..(row + 1) * hid].copy_from_slice(&h);
            }
        }

        let lengths = lengths.to_vec();
        let value = Tensor::new(&[bs, t_max, hid], out)?;
        Ok(self.record(
            value,
            &[x, w_ih, w_hh, bias],
            Box::new(move |gy, ins, _, needs| {
                let (xv, wih, u) = (ins[0].data(), ins[1].data(), ins[2].data());
                let g = gy.data();
                let mut dxp = vec![0.0; rows * h3];
                let mut du = vec![0.0; hid * h3];
                let mut drh = vec![0.0; hid];
                let mut dh_prev = vec![0.0; hid];
                for b in 0..bs {
                    let len = lengths[b];
                    let mut dh = vec![0.0; hid];
                    for s in (0..len).rev() {
                        let t = if reverse { len - 1 - s } else { s };
                        let row = b * t_max + t;
                        let at = |v: &Vec<f64>, j: usize| v[row * hid + j];
                        let dxr = &mut dxp[row * h3..(row + 1) * h3];
                        for j in 0..hid {
                            let gt = g[row * hid + j] + dh[j];
                            let (z, n, hp) = (at(&zs, j), at(&ns, j), at(&h_prev, j));
                            dh_prev[j] = gt * z;
                            dxr[2 * hid + j] = gt * (1.0 - z) * (1.0 - n * n);
                            dxr[j] = gt * (hp - n) * z * (1.0 - z);
                        }
                        // Candidate path: n depends on (r ∘ h_prev)·Un.
                        drh.iter_mut().for_each(|v| *v = 0.0);
                        mat_cols_vec(u, 2 * hid..h3, &dxr[2 * hid..], &mut drh);
                        for j in 0..hid {
                            let (r, hp) = (at(&rs, j), at(&h_prev, j));
                            let rhj = r * hp;
                            if rhj != 0.0 {
                                let urow = &mut du[j * h3 + 2 * hid..(j + 1) * h3];
                                for (d, gn) in urow.iter_mut().zip(&dxr[2 * hid..]) {
                                    *d += rhj * gn;
                                }
                            }
                            dh_prev[j] += drh[j] * r;
                            dxr[hid + j] = drh[j] * hp * r * (1.0 - r);
                        }
                        // Gate path: z and r depend on h_prev·[Uz | Ur].
                        for j in 0..hid {
                            let hp = at(&h_prev, j);
                            if hp != 0.0 {
                                let urow = &mut du[j * h3..j * h3 + 2 * hid];
                                for (d, gz) in urow.iter_mut().zip(&dxr[..2 * hid]) {
                                    *d += hp * gz;
                                }
                            }
                        }
                        mat_cols_vec(u, 0..2 * hid, &dxr[..2 * hid], &mut dh_prev);
                        dh.copy_from_slice(&dh_prev);
                    }
                }
                let dx = needs[0].then(|| Tensor::new(ins[0].shape(), matmul_nt(&dxp, wih, rows, h3, inp)).unwrap());
                let dwih = needs[1].then(|| Tensor::new(ins[1].shape(), matmul_tn(xv, &dxp, rows, inp, h3)).unwrap());
                let mut db = vec![0.0; h3];
                for r in dxp.chunks_exact(h3) {
                    db.iter_mut().zip(r).for_each(|(a, v)| *a += v);
                }
                vec![
                    dx,
                    dwih,
                    needs[2].then(|| Tensor::new(ins[2].shape(), du).unwrap()),
                    needs[3].then(|| Tensor::from_vec(db)),
                ]
            }),
        ))
    }
}
