//! Per-channel batch normalisation over a channels-last tensor, with
//! optional per-item valid lengths along axis 1 so that zero-padded frames
//! neither contribute to the statistics nor receive non-zero outputs.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use super::NnError;

pub const BN_EPS: f64 = 1e-5;

/// Which positions of `x` are real data. Index `i` of a flattened
/// `[B, T, inner.., C]` tensor (ignoring the channel) is valid when its
/// time step is below the item's length.
#[derive(Clone)]
struct ValidMask {
    valid: Vec<bool>,
}

impl ValidMask {
    fn new(shape: &[usize], lengths: Option<&[usize]>) -> Result<Self, NnError> {
        if shape.len() < 2 || shape[0] == 0 {
            return Err(NnError::Shape(format!("batch norm needs a non-empty batch, got {shape:?}")));
        }
        let c = shape[shape.len() - 1];
        let positions = shape.iter().product::<usize>() / c.max(1);
        let Some(lengths) = lengths else {
            return Ok(Self {
                valid: vec![true; positions],
            });
        };
        if shape.len() < 3 || lengths.len() != shape[0] || lengths.iter().any(|&l| l > shape[1]) {
            return Err(NnError::Shape(format!("lengths {lengths:?} do not fit {shape:?}")));
        }
        let (t, inner) = (shape[1], positions / (shape[0] * shape[1]));
        let valid = (0..positions)
            .map(|p| (p / inner) % t < lengths[p / (inner * t)])
            .collect();
        Ok(Self { valid })
    }

    fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

fn moments(x: &[f64], c: usize, mask: &ValidMask) -> (Vec<f64>, Vec<f64>) {
    let n = mask.count() as f64;
    let mut mean = vec![0.0; c];
    for (row, _) in x.chunks_exact(c).zip(&mask.valid).filter(|(_, v)| **v) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for (row, _) in x.chunks_exact(c).zip(&mask.valid).filter(|(_, v)| **v) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

impl Graph {
    /// Normalises with the batch's own moments. Returns the output and the
    /// per-channel (mean, biased variance) used.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        lengths: Option<&[usize]>,
    ) -> Result<(Var, Tensor, Tensor), NnError> {
        let shape = self.shape(x).to_vec();
        let mask = ValidMask::new(&shape, lengths)?;
        let c = shape[shape.len() - 1];
        check_affine(self, gamma, beta, c)?;
        if mask.count() == 0 {
            return Err(NnError::Shape("batch norm over zero valid positions".into()));
        }
        let (mean, var) = moments(self.value(x).data(), c, &mask);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (g, b) = (self.value(gamma).data().to_vec(), self.value(beta).data().to_vec());
        let mut xhat = vec![0.0; self.value(x).len()];
        let mut out = vec![0.0; xhat.len()];
        for (p, row) in self.value(x).data().chunks_exact(c).enumerate() {
            if !mask.valid[p] {
                continue;
            }
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                xhat[p * c + ch] = h;
                out[p * c + ch] = g[ch] * h + b[ch];
            }
        }
        let n = mask.count() as f64;
        let value = Tensor::new(&shape, out)?;
        let y = self.record(
            value,
            &[x, gamma, beta],
            Box::new(move |gy, ins, _, _| {
                let gamma = ins[1].data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut mean_dxhat = vec![0.0; c];
                let mut mean_dxhat_xhat = vec![0.0; c];
                for (p, grow) in gy.data().chunks_exact(c).enumerate() {
                    if !mask.valid[p] {
                        continue;
                    }
                    for ch in 0..c {
                        let h = xhat[p * c + ch];
                        dgamma[ch] += grow[ch] * h;
                        dbeta[ch] += grow[ch];
                        let dh = grow[ch] * gamma[ch];
                        mean_dxhat[ch] += dh / n;
                        mean_dxhat_xhat[ch] += dh * h / n;
                    }
                }
                let mut dx = vec![0.0; gy.len()];
                for (p, grow) in gy.data().chunks_exact(c).enumerate() {
                    if !mask.valid[p] {
                        continue;
                    }
                    for ch in 0..c {
                        let dh = grow[ch] * gamma[ch];
                        dx[p * c + ch] =
                            inv_std[ch] * (dh - mean_dxhat[ch] - xhat[p * c + ch] * mean_dxhat_xhat[ch]);
                    }
                }
                vec![
                    Some(Tensor::new(ins[0].shape(), dx).unwrap()),
                    Some(Tensor::from_vec(dgamma)),
                    Some(Tensor::from_vec(dbeta)),
                ]
            }),
        );
        Ok((y, Tensor::from_vec(mean), Tensor::from_vec(var)))
    }

    /// Normalises with fixed (running) moments.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &Tensor,
        var: &Tensor,
        lengths: Option<&[usize]>,
    ) -> Result<Var, NnError> {
        let shape = self.shape(x).to_vec();
        let mask = ValidMask::new(&shape, lengths)?;
        let c = shape[shape.len() - 1];
        check_affine(self, gamma, beta, c)?;
        if mean.len() != c || var.len() != c {
            return Err(NnError::Shape(format!("running moments have {} channels, expected {c}", mean.len())));
        }
        let mean = mean.data().to_vec();
        let inv_std: Vec<f64> = var.data().iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0; self.value(x).len()];
        for (p, row) in self.value(x).data().chunks_exact(c).enumerate() {
            if mask.valid[p] {
                for ch in 0..c {
                    out[p * c + ch] = g[ch] * (row[ch] - mean[ch]) * inv_std[ch] + b[ch];
                }
            }
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.record(
            value,
            &[x, gamma, beta],
            Box::new(move |gy, ins, _, _| {
                let gamma = ins[1].data();
                let mut dx = vec![0.0; gy.len()];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (p, (grow, xrow)) in gy.data().chunks_exact(c).zip(ins[0].data().chunks_exact(c)).enumerate() {
                    if !mask.valid[p] {
                        continue;
                    }
                    for ch in 0..c {
                        let h = (xrow[ch] - mean[ch]) * inv_std[ch];
                        dgamma[ch] += grow[ch] * h;
                        dbeta[ch] += grow[ch];
                        dx[p * c + ch] = grow[ch] * gamma[ch] * inv_std[ch];
                    }
                }
                vec![
                    Some(Tensor::new(ins[0].shape(), dx).unwrap()),
                    Some(Tensor::from_vec(dgamma)),
                    Some(Tensor::from_vec(dbeta)),
                ]
            }),
        ))
    }
}

fn check_affine(g: &Graph, gamma: Var, beta: Var, c: usize) -> Result<(), NnError> {
    if g.shape(gamma) != [c] || g.shape(beta) != [c] {
        return Err(NnError::Shape(format!(
            "batch norm scale/shift {:?}/{:?} do not match {c} channels",
            g.shape(gamma),
            g.shape(beta)
        )));
    }
    Ok(())
}
