use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::{Hidden, ProbDist};
use crate::error::{Error, Result};
use crate::tagging::NUM_TAGS;

/// Linear layer from hidden states to tag logits, followed by softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationHead {
    dim: usize,
    /// 13 × dim, row-major.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl ClassificationHead {
    pub fn zeros(dim: usize) -> Self {
        ClassificationHead {
            dim,
            weight: vec![0.0; NUM_TAGS * dim],
            bias: vec![0.0; NUM_TAGS],
        }
    }

    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (dim + NUM_TAGS) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
        ClassificationHead {
            dim,
            weight: (0..NUM_TAGS * dim).map(|_| dist.sample(&mut rng)).collect(),
            bias: vec![0.0; NUM_TAGS],
        }
    }

    pub fn from_params(dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != NUM_TAGS * dim || bias.len() != NUM_TAGS {
            return Err(Error::Shape(format!(
                "head expects {}×{dim} weight and {NUM_TAGS} bias, got {} and {}",
                NUM_TAGS,
                weight.len(),
                bias.len()
            )));
        }
        Ok(ClassificationHead { dim, weight, bias })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weight, &mut self.bias)
    }

    pub fn logits(&self, h: &[f64]) -> Result<ProbDist> {
        if let Some(bad) = h.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("hidden state contains {bad}")));
        }
        let mut z = [0.0; NUM_TAGS];
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.weight[k * self.dim..(k + 1) * self.dim];
            *zk = self.bias[k] + row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(z)
    }

    /// softmax(W·h + b) for every valid position of every sentence.
    pub fn classify(&self, hidden: &Hidden) -> Result<Vec<Vec<ProbDist>>> {
        if hidden.dim() != self.dim {
            return Err(Error::Shape(format!(
                "hidden dim {} vs head dim {}",
                hidden.dim(),
                self.dim
            )));
        }
        hidden
            .lengths()
            .iter()
            .enumerate()
            .map(|(b, &n)| {
                (0..n)
                    .map(|t| self.logits(hidden.token(b, t)).map(|z| softmax(&z)))
                    .collect()
            })
            .collect()
    }

    /// Accumulates dW, db and writes dh for one token.
    pub(crate) fn backward(
        &self,
        h: &[f64],
        dz: &ProbDist,
        g_weight: &mut [f64],
        g_bias: &mut [f64],
        dh: &mut [f64],
    ) {
        for k in 0..NUM_TAGS {
            g_bias[k] += dz[k];
            let row = &self.weight[k * self.dim..(k + 1) * self.dim];
            let g_row = &mut g_weight[k * self.dim..(k + 1) * self.dim];
            for j in 0..self.dim {
                g_row[j] += dz[k] * h[j];
                dh[j] += dz[k] * row[j];
            }
        }
    }
}

pub fn softmax(z: &ProbDist) -> ProbDist {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_TAGS];
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Pulls a gradient w.r.t. softmax outputs back to the logits.
pub fn softmax_backward(g: &ProbDist, dg: &ProbDist) -> ProbDist {
    let dot: f64 = g.iter().zip(dg).map(|(a, b)| a * b).sum();
    std::array::from_fn(|k| g[k] * (dg[k] - dot))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_is_uniform() {
        let head = ClassificationHead::zeros(4);
        let h = Hidden::from_rows(4, vec![vec![0.3, -1.0, 2.0, 0.5]]);
        let p = head.classify(&h).unwrap();
        for v in p[0][0] {
            assert!((v - 1.0 / 13.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bias_on_o_dominates() {
        let mut head = ClassificationHead::zeros(4);
        head.bias_mut()[0] = 10.0;
        let h = Hidden::from_rows(4, vec![vec![1.0; 4]]);
        let p = head.classify(&h).unwrap()[0][0];
        let expected = 10f64.exp() / (10f64.exp() + 12.0);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!(p[0] > 0.999);
    }

    #[test]
    fn rows_sum_to_one_and_shift_invariant() {
        let head = ClassificationHead::init(6, 9);
        let h = Hidden::from_rows(6, vec![vec![3.0, -2.0, 0.1, 9.0, -7.0, 0.0]]);
        let p = head.classify(&h).unwrap()[0][0];
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let z = head.logits(h.token(0, 0)).unwrap();
        let shifted: ProbDist = std::array::from_fn(|k| z[k] + 123.0);
        let a = softmax(&z);
        let b = softmax(&shifted);
        for k in 0..NUM_TAGS {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_hidden_fails() {
        let head = ClassificationHead::zeros(2);
        let h = Hidden::from_rows(2, vec![vec![f64::NAN, 0.0]]);
        assert!(matches!(head.classify(&h), Err(Error::NonFinite(_))));
    }
}
