//! Differentiable primitives recorded on a [`Graph`].

use super::graph::{Graph, Var};
use super::kernels::{matmul, matmul_nt, matmul_tn, sigmoid};
use super::tensor::Tensor;
use super::NnError;

fn shape_err<T>(msg: String) -> Result<T, NnError> {
    Err(NnError::Shape(msg))
}

fn with_last(shape: &[usize], last: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    match s.last_mut() {
        Some(l) => *l = last,
        None => s.push(last),
    }
    s
}

fn batch3(shape: &[usize], what: &str) -> Result<(usize, usize, usize), NnError> {
    match *shape {
        [b, n, k] => Ok((b, n, k)),
        _ => shape_err(format!("{what} expects a rank-3 tensor, got {shape:?}")),
    }
}

impl Graph {
    /// `x·w` over the last axis of `x`; `w` is `k × n`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var, NnError> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let [k, n] = ws[..] else {
            return shape_err(format!("matmul weight must be 2-D, got {ws:?}"));
        };
        if xs.last() != Some(&k) {
            return shape_err(format!("matmul inner dims differ: {xs:?} · {ws:?}"));
        }
        let rows = self.value(x).len() / k.max(1);
        let out = matmul(self.value(x).data(), self.value(w).data(), rows, k, n);
        let value = Tensor::new(&with_last(&xs, n), out)?;
        Ok(self.record(
            value,
            &[x, w],
            Box::new(move |gy, ins, _, needs| {
                let dx = needs[0].then(|| {
                    let d = matmul_nt(gy.data(), ins[1].data(), rows, n, k);
                    Tensor::new(ins[0].shape(), d).unwrap()
                });
                let dw = needs[1].then(|| {
                    let d = matmul_tn(ins[0].data(), gy.data(), rows, k, n);
                    Tensor::new(ins[1].shape(), d).unwrap()
                });
                vec![dx, dw]
            }),
        ))
    }

    /// Adds `b` (length `n`) to every row of `x` (last axis `n`).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NnError> {
        let n = self.value(b).len();
        if self.value(x).last_dim() != n || self.value(b).ndim() != 1 {
            return shape_err(format!(
                "bias {:?} does not match {:?}",
                self.shape(b),
                self.shape(x)
            ));
        }
        let mut out = self.value(x).clone();
        let bias = self.value(b).data().to_vec();
        for row in out.data_mut().chunks_exact_mut(n) {
            for (v, bv) in row.iter_mut().zip(&bias) {
                *v += bv;
            }
        }
        Ok(self.record(
            out,
            &[x, b],
            Box::new(move |gy, _, _, needs| {
                let db = needs[1].then(|| {
                    let mut acc = vec![0.0; n];
                    for row in gy.data().chunks_exact(n) {
                        for (a, g) in acc.iter_mut().zip(row) {
                            *a += g;
                        }
                    }
                    Tensor::from_vec(acc)
                });
                vec![Some(gy.clone()), db]
            }),
        ))
    }

    /// Affine map on the last axis.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!("add: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.record(
            out,
            &[a, b],
            Box::new(|gy, _, _, _| vec![Some(gy.clone()), Some(gy.clone())]),
        ))
    }

    /// Element-wise product with a constant tensor (masks, dropout).
    pub fn mul_const(&mut self, x: Var, mask: Tensor) -> Result<Var, NnError> {
        if self.shape(x) != mask.shape() {
            return shape_err(format!("mask {:?} vs {:?}", mask.shape(), self.shape(x)));
        }
        let mut out = self.value(x).clone();
        for (v, m) in out.data_mut().iter_mut().zip(mask.data()) {
            *v *= m;
        }
        Ok(self.record(
            out,
            &[x],
            Box::new(move |gy, _, _, _| {
                let mut g = gy.clone();
                for (v, m) in g.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.record(
            out,
            &[x],
            Box::new(move |gy, _, _, _| {
                let mut g = gy.clone();
                g.data_mut().iter_mut().for_each(|v| *v *= s);
                vec![Some(g)]
            }),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        self.record(
            out,
            &[x],
            Box::new(|gy, _, y, _| {
                let mut g = gy.clone();
                for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv *= yv * (1.0 - yv);
                }
                vec![Some(g)]
            }),
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.record(
            out,
            &[x],
            Box::new(|gy, _, y, _| {
                let mut g = gy.clone();
                for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
                    if *yv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                vec![Some(g)]
            }),
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.record(
            out,
            &[x],
            Box::new(|gy, ins, _, _| vec![Some(gy.clone().reshape(ins[0].shape()).unwrap())]),
        ))
    }

    /// Concatenation along the last axis; leading shapes must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return shape_err(format!("concat: {sa:?} vs {sb:?}"));
        }
        let (p, q) = (self.value(a).last_dim(), self.value(b).last_dim());
        let mut out = Vec::with_capacity(self.value(a).len() + self.value(b).len());
        for (ra, rb) in self
            .value(a)
            .data()
            .chunks_exact(p)
            .zip(self.value(b).data().chunks_exact(q))
        {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        let value = Tensor::new(&with_last(&sa, p + q), out)?;
        Ok(self.record(
            value,
            &[a, b],
            Box::new(move |gy, ins, _, _| {
                let (mut ga, mut gb) = (Vec::new(), Vec::new());
                for row in gy.data().chunks_exact(p + q) {
                    ga.extend_from_slice(&row[..p]);
                    gb.extend_from_slice(&row[p..]);
                }
                vec![
                    Some(Tensor::new(ins[0].shape(), ga).unwrap()),
                    Some(Tensor::new(ins[1].shape(), gb).unwrap()),
                ]
            }),
        ))
    }

    /// Batched `a·b` for `a: [B,N,K]`, `b: [B,K,M]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (bs, n, k) = batch3(self.shape(a), "bmm")?;
        let (bs2, k2, m) = batch3(self.shape(b), "bmm")?;
        if bs != bs2 || k != k2 {
            return shape_err(format!("bmm: {:?} · {:?}", self.shape(a), self.shape(b)));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(bs * n * m);
        for i in 0..bs {
            out.extend(matmul(&av[i * n * k..(i + 1) * n * k], &bv[i * k * m..(i + 1) * k * m], n, k, m));
        }
        let value = Tensor::new(&[bs, n, m], out)?;
        Ok(self.record(
            value,
            &[a, b],
            Box::new(move |gy, ins, _, needs| {
                let (av, bv, g) = (ins[0].data(), ins[1].data(), gy.data());
                let (mut da, mut db) = (Vec::new(), Vec::new());
                for i in 0..bs {
                    let gi = &g[i * n * m..(i + 1) * n * m];
                    if needs[0] {
                        da.extend(matmul_nt(gi, &bv[i * k * m..(i + 1) * k * m], n, m, k));
                    }
                    if needs[1] {
                        db.extend(matmul_tn(&av[i * n * k..(i + 1) * n * k], gi, n, k, m));
                    }
                }
                vec![
                    needs[0].then(|| Tensor::new(&[bs, n, k], da).unwrap()),
                    needs[1].then(|| Tensor::new(&[bs, k, m], db).unwrap()),
                ]
            }),
        ))
    }

    /// Batched `a·bᵀ` for `a: [B,N,K]`, `b: [B,M,K]`.
    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (bs, n, k) = batch3(self.shape(a), "bmm_nt")?;
        let (bs2, m, k2) = batch3(self.shape(b), "bmm_nt")?;
        if bs != bs2 || k != k2 {
            return shape_err(format!("bmm_nt: {:?} · {:?}ᵀ", self.shape(a), self.shape(b)));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(bs * n * m);
        for i in 0..bs {
            out.extend(matmul_nt(&av[i * n * k..(i + 1) * n * k], &bv[i * m * k..(i + 1) * m * k], n, k, m));
        }
        let value = Tensor::new(&[bs, n, m], out)?;
        Ok(self.record(
            value,
            &[a, b],
            Box::new(move |gy, ins, _, needs| {
                let (av, bv, g) = (ins[0].data(), ins[1].data(), gy.data());
                let (mut da, mut db) = (Vec::new(), Vec::new());
                for i in 0..bs {
                    let gi = &g[i * n * m..(i + 1) * n * m];
                    if needs[0] {
                        da.extend(matmul(gi, &bv[i * m * k..(i + 1) * m * k], n, m, k));
                    }
                    if needs[1] {
                        db.extend(matmul_tn(gi, &av[i * n * k..(i + 1) * n * k], n, m, k));
                    }
                }
                vec![
                    needs[0].then(|| Tensor::new(&[bs, n, k], da).unwrap()),
                    needs[1].then(|| Tensor::new(&[bs, m, k], db).unwrap()),
                ]
            }),
        ))
    }

    /// Softmax over the last axis of `[B,N,M]`, restricted to the first
    /// `lengths[b]` positions; masked positions get weight exactly 0.
    pub fn masked_softmax(&mut self, x: Var, lengths: &[usize]) -> Result<Var, NnError> {
        let (bs, n, m) = batch3(self.shape(x), "masked_softmax")?;
        if lengths.len() != bs || lengths.iter().any(|&l| l == 0 || l > m) {
            return shape_err(format!("softmax lengths {lengths:?} invalid for {:?}", self.shape(x)));
        }
        let mut out = self.value(x).clone();
        for (i, block) in out.data_mut().chunks_exact_mut(n * m).enumerate() {
            let len = lengths[i];
            for row in block.chunks_exact_mut(m) {
                let max = row[..len].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in &mut row[..len] {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                row[..len].iter_mut().for_each(|v| *v /= sum);
                row[len..].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(self.record(
            out,
            &[x],
            Box::new(move |gy, _, y, _| {
                let mut g = gy.clone();
                for (grow, yrow) in g.data_mut().chunks_exact_mut(m).zip(y.data().chunks_exact(m)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for (gv, yv) in grow.iter_mut().zip(yrow) {
                        *gv = yv * (*gv - dot);
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Looks up rows of `table: [V,E]`, producing `[B, max_len, E]` with
    /// zero rows past each sequence's end.
    pub fn gather_rows(&mut self, table: Var, ids: &[Vec<usize>]) -> Result<Var, NnError> {
        let [vocab, e] = self.shape(table)[..] else {
            return shape_err(format!("embedding table must be 2-D, got {:?}", self.shape(table)));
        };
        if let Some(&bad) = ids.iter().flatten().find(|&&i| i >= vocab) {
            return shape_err(format!("token id {bad} outside vocabulary of {vocab}"));
        }
        let max_len = ids.iter().map(Vec::len).max().unwrap_or(0);
        let bs = ids.len();
        let tv = self.value(table).data();
        let mut out = vec![0.0; bs * max_len * e];
        for (b, seq) in ids.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                let o = (b * max_len + t) * e;
                out[o..o + e].copy_from_slice(&tv[id * e..(id + 1) * e]);
            }
        }
        let ids = ids.to_vec();
        let value = Tensor::new(&[bs, max_len, e], out)?;
        Ok(self.record(
            value,
            &[table],
            Box::new(move |gy, ins, _, _| {
                let mut gt = Tensor::zeros(ins[0].shape());
                let gd = gt.data_mut();
                for (b, seq) in ids.iter().enumerate() {
                    for (t, &id) in seq.iter().enumerate() {
                        let o = (b * max_len + t) * e;
                        for (acc, g) in gd[id * e..(id + 1) * e].iter_mut().zip(&gy.data()[o..o + e]) {
                            *acc += g;
                        }
                    }
                }
                vec![Some(gt)]
            }),
        ))
    }

    /// Picks time step `index[b]` from each sequence of `[B,T,H]`, giving `[B,H]`.
    pub fn select_time(&mut self, x: Var, index: &[usize]) -> Result<Var, NnError> {
        let (bs, t, h) = batch3(self.shape(x), "select_time")?;
        if index.len() != bs || index.iter().any(|&i| i >= t) {
            return shape_err(format!("time indices {index:?} invalid for {:?}", self.shape(x)));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(bs * h);
        for (b, &i) in index.iter().enumerate() {
            out.extend_from_slice(&xv[(b * t + i) * h..(b * t + i + 1) * h]);
        }
        let index = index.to_vec();
        let value = Tensor::new(&[bs, h], out)?;
        Ok(self.record(
            value,
            &[x],
            Box::new(move |gy, ins, _, _| {
                let mut gx = Tensor::zeros(ins[0].shape());
                for (b, &i) in index.iter().enumerate() {
                    let o = (b * t + i) * h;
                    gx.data_mut()[o..o + h].copy_from_slice(&gy.data()[b * h..(b + 1) * h]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 targets,
    /// in the overflow-free form `max(z,0) − z·y + ln(1 + e^{−|z|})`.
    pub fn sigmoid_bce(&mut self, logits: Var, targets: &[f64]) -> Result<Var, NnError> {
        let z = self.value(logits).data().to_vec();
        if z.len() != targets.len() || z.is_empty() {
            return shape_err(format!("{} logits for {} targets", z.len(), targets.len()));
        }
        let count = z.len() as f64;
        let loss: f64 = z
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / count;
        let targets = targets.to_vec();
        Ok(self.record(
            Tensor::scalar(loss),
            &[logits],
            Box::new(move |gy, ins, _, _| {
                let s = gy.item() / count;
                let g = ins[0]
                    .data()
                    .iter()
                    .zip(&targets)
                    .map(|(&z, &y)| s * (sigmoid(z) - y))
                    .collect();
                vec![Some(Tensor::new(ins[0].shape(), g).unwrap())]
            }),
        ))
    }

    /// `Σ x ⊙ w` for a constant `w`; handy for probing gradients.
    pub fn weighted_sum(&mut self, x: Var, w: Tensor) -> Result<Var, NnError> {
        if self.value(x).len() != w.len() {
            return shape_err(format!("weights {:?} vs {:?}", w.shape(), self.shape(x)));
        }
        let s = self.value(x).data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
        Ok(self.record(
            Tensor::scalar(s),
            &[x],
            Box::new(move |gy, ins, _, _| {
                let g = w.data().iter().map(|v| v * gy.item()).collect();
                vec![Some(Tensor::new(ins[0].shape(), g).unwrap())]
            }),
        ))
    }
}
