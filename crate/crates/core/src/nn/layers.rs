//! Parameterised layers. Each layer owns [`ParamId`]s into a shared
//! [`ParamStore`] and records its computation on a [`Graph`].

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::{Mode, NnError};

/// Running-moment momentum: `running ← m·running + (1 − m)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// `[B, T, ...]` mask with ones on the first `lengths[b]` steps of item `b`.
pub fn time_mask(shape: &[usize], lengths: &[usize]) -> Tensor {
    let (bs, t) = (shape[0], shape[1]);
    let inner: usize = shape[2..].iter().product();
    let mut data = vec![0.0; bs * t * inner];
    for (b, &len) in lengths.iter().enumerate() {
        let start = b * t * inner;
        data[start..start + len.min(t) * inner].fill(1.0);
    }
    Tensor::new(shape, data).expect("mask shape")
}

/// Inverted dropout: in `Train` mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1 − rate)`.
pub fn dropout(g: &mut Graph, x: Var, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var, NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::Invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = g.shape(x).to_vec();
    let n = g.value(x).len();
    let mask = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    g.mul_const(x, Tensor::new(&shape, mask)?)
}

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: store.add_xavier(format!("{name}.w"), &[in_dim, out_dim], in_dim, out_dim, rng),
            b: store.add_zeros(format!("{name}.b"), &[out_dim]),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.linear(x, w, b)
    }
}

/// Square-kernel convolution, "same" padding, stride along time only.
#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kernel: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let area = kernel * kernel;
        Self {
            w: store.add_xavier(format!("{name}.w"), &[kernel, kernel, c_in, c_out], area * c_in, area * c_out, rng),
            b: store.add_zeros(format!("{name}.b"), &[c_out]),
            stride,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.conv2d(x, w, b, self.stride)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0), true),
            beta: store.add_zeros(format!("{name}.beta"), &[channels]),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(&[channels], 1.0), false),
        }
    }

    /// In `Train` mode the updated running moments are queued on the graph
    /// (see [`Graph::take_buffer_updates`]).
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        lengths: Option<&[usize]>,
        mode: Mode,
    ) -> Result<Var, NnError> {
        let (gamma, beta) = (g.param(store, self.gamma), g.param(store, self.beta));
        match mode {
            Mode::Train => {
                let (y, mean, var) = g.batch_norm_train(x, gamma, beta, lengths)?;
                let blend = |old: &Tensor, new: &Tensor| {
                    let data = old
                        .data()
                        .iter()
                        .zip(new.data())
                        .map(|(o, n)| BN_MOMENTUM * o + (1.0 - BN_MOMENTUM) * n)
                        .collect();
                    Tensor::from_vec(data)
                };
                g.push_buffer_update(self.running_mean, blend(store.value(self.running_mean), &mean));
                g.push_buffer_update(self.running_var, blend(store.value(self.running_var), &var));
                Ok(y)
            }
            Mode::Eval => g.batch_norm_eval(
                x,
                gamma,
                beta,
                store.value(self.running_mean),
                store.value(self.running_var),
                lengths,
            ),
        }
    }
}

/// One GRU direction. Weights are stacked `[z | r | n]` along columns.
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
    pub reverse: bool,
}

impl Gru {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        reverse: bool,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            w_ih: store.add_xavier(format!("{name}.w_ih"), &[in_dim, 3 * hidden], in_dim, hidden, rng),
            w_hh: store.add_xavier(format!("{name}.w_hh"), &[hidden, 3 * hidden], hidden, hidden, rng),
            b: store.add_zeros(format!("{name}.b"), &[3 * hidden]),
            hidden,
            reverse,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, lengths: &[usize]) -> Result<Var, NnError> {
        let (wi, wh, b) = (g.param(store, self.w_ih), g.param(store, self.w_hh), g.param(store, self.b));
        g.gru(x, lengths, wi, wh, b, self.reverse)
    }
}

/// Forward and reverse GRUs, concatenated per step to `2·hidden`.
#[derive(Debug, Clone, Copy)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

impl BiGru {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            fwd: Gru::new(store, &format!("{name}.fwd"), in_dim, hidden, false, rng),
            bwd: Gru::new(store, &format!("{name}.bwd"), in_dim, hidden, true, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, lengths: &[usize]) -> Result<Var, NnError> {
        let f = self.fwd.forward(g, store, x, lengths)?;
        let b = self.bwd.forward(g, store, x, lengths)?;
        g.concat_last(f, b)
    }
}

/// Single-head scaled dot-product attention with learned query, key, value
/// and output projections.
#[derive(Debug, Clone, Copy)]
pub struct CrossAttention {
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub o: Dense,
}

impl CrossAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        proj_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            q: Dense::new(store, &format!("{name}.q"), query_dim, proj_dim, rng),
            k: Dense::new(store, &format!("{name}.k"), key_dim, proj_dim, rng),
            v: Dense::new(store, &format!("{name}.v"), key_dim, proj_dim, rng),
            o: Dense::new(store, &format!("{name}.o"), proj_dim, proj_dim, rng),
        }
    }

    /// `query: [B,N,Dq]`, `keys: [B,M,Dk]` whose first `key_lengths[b]` rows
    /// are real. Returns the `[B,N,P]` context and the `[B,N,M]` weights.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        query: Var,
        keys: Var,
        key_lengths: &[usize],
    ) -> Result<(Var, Var), NnError> {
        let q = self.q.forward(g, store, query)?;
        let k = self.k.forward(g, store, keys)?;
        let v = self.v.forward(g, store, keys)?;
        let scores = g.bmm_nt(q, k)?;
        let scores = g.scale(scores, 1.0 / (self.q.out_dim as f64).sqrt());
        let weights = g.masked_softmax(scores, key_lengths)?;
        let ctx = g.bmm(weights, v)?;
        Ok((self.o.forward(g, store, ctx)?, weights))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            table: store.add_xavier(format!("{name}.table"), &[vocab, dim], vocab, dim, rng),
            vocab,
            dim,
        }
    }

    /// Padded `[B, max_len, dim]` lookup.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ids: &[Vec<usize>]) -> Result<Var, NnError> {
        let t = g.param(store, self.table);
        g.gather_rows(t, ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn random(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn dense_identity_and_scalar() {
        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "d", 3, 3, &mut rng());
        *store.value_mut(d.w) = Tensor::new(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let y = d.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3., 4., 5., 6.]);

        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "s", 1, 1, &mut rng());
        *store.value_mut(d.w) = Tensor::new(&[1, 1], vec![3.0]).unwrap();
        *store.value_mut(d.b) = Tensor::from_vec(vec![1.0]);
        let mut g = Graph::new();
        let x = g.input(Tensor::new(&[1, 1], vec![2.0]).unwrap());
        let y = d.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).data(), &[7.0]);
        assert_eq!(g.backward(y).get(x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn dense_rejects_inner_mismatch() {
        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "d", 4, 2, &mut rng());
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(d.forward(&mut g, &store, x), Err(NnError::Shape(_))));
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let mut store = ParamStore::new();
        let c = Conv2d::new(&mut store, "c", 3, 1, 1, 1, &mut rng());
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        w.data_mut()[4] = 1.0;
        *store.value_mut(c.w) = w;
        let x = random(&[2, 6, 5, 1], &mut rng());
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = c.forward(&mut g, &store, xv).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn conv_stride_halves_time() {
        let mut store = ParamStore::new();
        let c = Conv2d::new(&mut store, "c", 3, 2, 4, 2, &mut rng());
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 98, 7, 2]));
        let y = c.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.shape(y), &[1, 49, 7, 4]);
        let x = g.constant(Tensor::zeros(&[1, 1, 7, 2]));
        let y = c.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 7, 4]);
    }

    #[test]
    fn batch_norm_train_standardises_each_channel() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 3);
        let mut r = rng();
        let mut x = random(&[4, 5, 2, 3], &mut r);
        x.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 3.0 * *v + (i % 3) as f64);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = bn.forward(&mut g, &store, xv, None, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = g.value(y).data().iter().skip(ch).step_by(3).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5);
            // ε in the denominator shrinks the variance by var/(var+ε).
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
        assert_eq!(g.take_buffer_updates().len(), 2);
    }

    #[test]
    fn batch_norm_eval_with_matching_running_mean_gives_zero() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2);
        *store.value_mut(bn.running_mean) = Tensor::from_vec(vec![4.0, 4.0]);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[3, 4, 2], 4.0));
        let y = bn.forward(&mut g, &store, x, None, Mode::Eval).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_norm_masks_padding() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 1);
        let mut r = rng();
        let short = random(&[1, 3, 2, 1], &mut r);
        let mut padded = Tensor::zeros(&[1, 5, 2, 1]);
        padded.data_mut()[..6].copy_from_slice(short.data());
        let mut g = Graph::new();
        let a = g.constant(short);
        let b = g.constant(padded);
        let ya = bn.forward(&mut g, &store, a, Some(&[3]), Mode::Train).unwrap();
        let yb = bn.forward(&mut g, &store, b, Some(&[3]), Mode::Train).unwrap();
        assert_eq!(&g.value(yb).data()[..6], g.value(ya).data());
        assert!(g.value(yb).data()[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_norm_rejects_empty_batch() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2);
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[0, 3, 2]));
        assert!(matches!(bn.forward(&mut g, &store, x, None, Mode::Train), Err(NnError::Shape(_))));
    }

    #[test]
    fn gru_with_zero_parameters_outputs_zero() {
        let mut store = ParamStore::new();
        let gru = BiGru::new(&mut store, "g", 3, 4, &mut rng());
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let shape = store.value(id).shape().to_vec();
            *store.value_mut(id) = Tensor::zeros(&shape);
        }
        let mut g = Graph::new();
        let x = g.constant(random(&[2, 6, 3], &mut rng()));
        let y = gru.forward(&mut g, &store, x, &[6, 4]).unwrap();
        assert_eq!(g.shape(y), &[2, 6, 8]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bigru_single_step_halves_agree() {
        let mut store = ParamStore::new();
        let gru = BiGru::new(&mut store, "g", 3, 4, &mut rng());
        for (f, b) in [(gru.fwd.w_ih, gru.bwd.w_ih), (gru.fwd.w_hh, gru.bwd.w_hh), (gru.fwd.b, gru.bwd.b)] {
            *store.value_mut(b) = store.value(f).clone();
        }
        let mut g = Graph::new();
        let x = g.constant(random(&[1, 1, 3], &mut rng()));
        let y = gru.forward(&mut g, &store, x, &[1]).unwrap();
        let out = g.value(y).data();
        assert_eq!(out[..4], out[4..]);
        assert!(out.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gru_ignores_padding() {
        let mut store = ParamStore::new();
        let gru = BiGru::new(&mut store, "g", 2, 3, &mut rng());
        let mut r = rng();
        let short = random(&[1, 4, 2], &mut r);
        let mut padded = Tensor::zeros(&[1, 7, 2]);
        padded.data_mut()[..8].copy_from_slice(short.data());
        let mut g = Graph::new();
        let a = g.constant(short);
        let b = g.constant(padded);
        let ya = gru.forward(&mut g, &store, a, &[4]).unwrap();
        let yb = gru.forward(&mut g, &store, b, &[4]).unwrap();
        assert_eq!(&g.value(yb).data()[..24], g.value(ya).data());
        assert!(g.value(yb).data()[24..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_single_key_copies_projected_value() {
        let mut store = ParamStore::new();
        let att = CrossAttention::new(&mut store, "a", 5, 6, 4, &mut rng());
        let mut r = rng();
        let mut g = Graph::new();
        let q = g.constant(random(&[1, 3, 5], &mut r));
        let kv = g.constant(random(&[1, 1, 6], &mut r));
        let (out, w) = att.forward(&mut g, &store, q, kv, &[1]).unwrap();
        assert!(g.value(w).data().iter().all(|&v| v == 1.0));
        let v = att.v.forward(&mut g, &store, kv).unwrap();
        let expect = att.o.forward(&mut g, &store, v).unwrap();
        let e = g.value(expect).data().to_vec();
        for row in g.value(out).data().chunks_exact(4) {
            assert_eq!(row, &e[..]);
        }
    }

    #[test]
    fn attention_identical_keys_give_uniform_weights() {
        let mut store = ParamStore::new();
        let att = CrossAttention::new(&mut store, "a", 5, 6, 4, &mut rng());
        let mut r = rng();
        let key = random(&[6], &mut r);
        let keys: Vec<f64> = (0..4).flat_map(|_| key.data().to_vec()).collect();
        let mut g = Graph::new();
        let q = g.constant(random(&[1, 3, 5], &mut r));
        let kv = g.constant(Tensor::new(&[1, 4, 6], keys).unwrap());
        let (_, w) = att.forward(&mut g, &store, q, kv, &[4]).unwrap();
        assert!(g.value(w).data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn attention_rows_are_stochastic_and_masked() {
        let mut store = ParamStore::new();
        let att = CrossAttention::new(&mut store, "a", 4, 4, 8, &mut rng());
        let mut r = rng();
        let mut g = Graph::new();
        let q = g.constant(random(&[2, 3, 4], &mut r));
        let kv = g.constant(random(&[2, 5, 4], &mut r));
        let (_, w) = att.forward(&mut g, &store, q, kv, &[5, 2]).unwrap();
        for (i, row) in g.value(w).data().chunks_exact(5).enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            if i >= 3 {
                assert!(row[2..].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let mut g = Graph::new();
        let t = random(&[10, 10], &mut rng());
        let x = g.constant(t.clone());
        let y = dropout(&mut g, x, 0.0, Mode::Train, &mut rng()).unwrap();
        assert_eq!(g.value(y), &t);
        let y = dropout(&mut g, x, 0.5, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(g.value(y), &t);
        let bad = dropout(&mut g, x, 1.0, Mode::Train, &mut rng());
        assert!(bad.is_err());
    }

    #[test]
    fn dropout_survivor_statistics() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[100_000], 1.0));
        let y = dropout(&mut g, x, 0.2, Mode::Train, &mut rng()).unwrap();
        let v = g.value(y).data();
        let survivors = v.iter().filter(|&&e| e != 0.0).count() as f64 / v.len() as f64;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((survivors - 0.8).abs() < 0.01, "survivors {survivors}");
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn bce_reference_values() {
        let mut g = Graph::new();
        let z = g.input(Tensor::from_vec(vec![0.0]));
        let l = g.sigmoid_bce(z, &[1.0]).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
        let z = g.input(Tensor::from_vec(vec![20.0]));
        let l = g.sigmoid_bce(z, &[1.0]).unwrap();
        assert!(g.value(l).item() < 1e-8 && g.value(l).item() >= 0.0);
    }

    #[test]
    fn bce_gradient_is_sigmoid_minus_target() {
        let mut r = rng();
        let logits: Vec<f64> = (0..8).map(|_| r.random_range(-6.0..6.0)).collect();
        let targets: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
        let mut g = Graph::new();
        let z = g.input(Tensor::from_vec(logits.clone()));
        let l = g.sigmoid_bce(z, &targets).unwrap();
        let grad = g.backward(l);
        for ((gz, z), y) in grad.get(z).unwrap().data().iter().zip(&logits).zip(&targets) {
            let expect = (1.0 / (1.0 + (-z).exp()) - y) / 8.0;
            assert!((gz - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn time_mask_layout() {
        let m = time_mask(&[2, 3, 2], &[1, 3]);
        assert_eq!(m.data(), &[1., 1., 0., 0., 0., 0., 1., 1., 1., 1., 1., 1.]);
    }
}
