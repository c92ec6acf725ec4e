use kws_core::nn::gradcheck::check;
use kws_core::nn::layers::{time_mask, BatchNorm, BiGru, Conv2d, CrossAttention, Dense};
use kws_core::nn::{Mode, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn randomise(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let shape = store.value(id).shape().to_vec();
        *store.value_mut(id) = random(&shape, rng);
    }
}

#[test]
fn dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (rows, i, o) in [(4, 8, 3), (1, 1, 1), (6, 5, 7)] {
        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "d", i, o, &mut rng);
        randomise(&mut store, &mut rng);
        let x = random(&[rows, i], &mut rng);
        let r = check(&mut store, &[x], H, |g, s, v| d.forward(g, s, v[0])).unwrap();
        assert!(r.max_rel_error < TOL, "{rows}x{i}->{o}: {r:?}");
    }
}

#[test]
fn conv2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (shape, c_out, stride) in [([1, 6, 5, 1], 1, 1), ([2, 5, 4, 2], 3, 2), ([1, 7, 3, 3], 2, 2)] {
        let mut store = ParamStore::new();
        let c = Conv2d::new(&mut store, "c", 3, shape[3], c_out, stride, &mut rng);
        randomise(&mut store, &mut rng);
        let x = random(&shape, &mut rng);
        let r = check(&mut store, &[x], H, |g, s, v| c.forward(g, s, v[0])).unwrap();
        assert!(r.max_rel_error < TOL, "{shape:?}: {r:?}");
    }
}

#[test]
fn batch_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases: [(&[usize], Option<Vec<usize>>); 3] = [
        (&[4, 3], None),
        (&[2, 5, 3, 2], Some(vec![5, 3])),
        (&[3, 4, 2], Some(vec![2, 4, 1])),
    ];
    for (shape, lengths) in cases {
        for mode in [Mode::Train, Mode::Eval] {
            let mut store = ParamStore::new();
            let c = *shape.last().unwrap();
            let bn = BatchNorm::new(&mut store, "bn", c);
            randomise(&mut store, &mut rng);
            let var: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
            *store.value_mut(bn.running_var) = Tensor::from_vec(var);
            let mut x = random(shape, &mut rng);
            if let Some(l) = &lengths {
                let m = time_mask(shape, l);
                x.data_mut().iter_mut().zip(m.data()).for_each(|(v, m)| *v *= m);
            }
            let r = check(&mut store, &[x], H, |g, s, v| bn.forward(g, s, v[0], lengths.as_deref(), mode)).unwrap();
            assert!(r.max_rel_error < TOL, "{shape:?} {mode:?}: {r:?}");
        }
    }
}

#[test]
fn bigru() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (b, t, i, hdim, lengths) in [(1, 5, 3, 4, vec![5]), (2, 4, 2, 3, vec![4, 2]), (3, 3, 4, 2, vec![1, 3, 2])] {
        let mut store = ParamStore::new();
        let gru = BiGru::new(&mut store, "g", i, hdim, &mut rng);
        randomise(&mut store, &mut rng);
        let x = random(&[b, t, i], &mut rng);
        let r = check(&mut store, &[x], H, |g, s, v| gru.forward(g, s, v[0], &lengths)).unwrap();
        assert!(r.max_rel_error < TOL, "b{b} t{t} i{i} h{hdim}: {r:?}");
    }
}

#[test]
fn cross_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (b, n, m, d, lengths) in [(1, 3, 4, 8, vec![4]), (2, 2, 5, 4, vec![5, 3]), (1, 4, 1, 3, vec![1])] {
        let mut store = ParamStore::new();
        let att = CrossAttention::new(&mut store, "a", d, d, d, &mut rng);
        randomise(&mut store, &mut rng);
        let q = random(&[b, n, d], &mut rng);
        let kv = random(&[b, m, d], &mut rng);
        let r = check(&mut store, &[q, kv], H, |g, s, v| {
            att.forward(g, s, v[0], v[1], &lengths).map(|(o, _)| o)
        })
        .unwrap();
        assert!(r.max_rel_error < TOL, "n{n} m{m} d{d}: {r:?}");
    }
}

#[test]
fn sigmoid_bce() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for n in [1, 5, 16] {
        let z = Tensor::from_vec((0..n).map(|_| rng.random_range(-4.0..4.0)).collect());
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let r = check(&mut ParamStore::new(), &[z], H, |g, _, v| g.sigmoid_bce(v[0], &y)).unwrap();
        assert!(r.max_rel_error < TOL, "n{n}: {r:?}");
    }
}

#[test]
fn elementwise_and_shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for shape in [[2, 3, 4], [1, 5, 2], [3, 2, 6]] {
        let a = random(&shape, &mut rng);
        let b = random(&shape, &mut rng);
        let r = check(&mut ParamStore::new(), &[a, b], H, |g, _, v| {
            let s = g.sigmoid(v[0]);
            let c = g.concat_last(s, v[1])?;
            let idx: Vec<usize> = (0..shape[0]).map(|i| i % shape[1]).collect();
            let picked = g.select_time(c, &idx)?;
            let r = g.relu(v[1]);
            let sum = g.add(r, s)?;
            let flat = g.reshape(sum, &[shape.iter().product()])?;
            let p = g.scale(picked, 0.5);
            let p = g.reshape(p, &[shape[0] * shape[2] * 2])?;
            g.concat_last(flat, p)
        })
        .unwrap();
        assert!(r.max_rel_error < TOL, "{shape:?}: {r:?}");
    }
}
