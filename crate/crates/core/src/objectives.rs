//! Training objectives on per-token tag distributions: sentence-averaged
//! cross-entropy, supervised contrastive loss over probability vectors at
//! token or sentiment granularity, and their weighted combination.
//!
//! Every loss comes in two forms: a value-only function, and a `*_grad`
//! variant that also returns the gradient w.r.t. the probability vectors.
//! Chain through [`crate::model::softmax_backward`] to reach the logits.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProbDist;
use crate::tagging::{sentiment_projection, LabelTag, NUM_TAGS};

/// Floor applied to probabilities inside the log of the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveLevel {
    /// Positives share the full 13-way tag.
    Token,
    /// Positives share the sentiment class (POS/NEU/NEG/O).
    Sentiment,
}

impl ContrastiveLevel {
    pub fn group(self, tag: LabelTag) -> usize {
        match self {
            ContrastiveLevel::Token => tag.index(),
            ContrastiveLevel::Sentiment => sentiment_projection(tag).index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub level: ContrastiveLevel,
    pub temperature: f64,
    pub alpha: f64,
    pub include_o: bool,
    pub max_o_per_batch: Option<usize>,
}

impl ContrastiveConfig {
    pub fn new(level: ContrastiveLevel) -> Self {
        ContrastiveConfig {
            level,
            temperature: 0.07,
            alpha: 0.5,
            include_o: true,
            max_o_per_batch: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// The token pool of one contrastive step: a distribution and a group key
/// per token.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub probs: Vec<ProbDist>,
    pub groups: Vec<usize>,
}

impl ContrastiveBatch {
    pub fn new(probs: Vec<ProbDist>, groups: Vec<usize>) -> Result<Self> {
        if probs.len() != groups.len() {
            return Err(Error::Shape(format!(
                "{} distributions vs {} group keys",
                probs.len(),
                groups.len()
            )));
        }
        Ok(ContrastiveBatch { probs, groups })
    }

    pub fn from_tags(probs: Vec<ProbDist>, tags: &[LabelTag], level: ContrastiveLevel) -> Result<Self> {
        Self::new(probs, tags.iter().map(|t| level.group(*t)).collect())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Chooses which tokens (by position in `tags`) enter the contrastive pool,
/// applying the `include_o` and `max_o_per_batch` settings in order.
pub fn select_pool(tags: &[LabelTag], config: &ContrastiveConfig) -> Vec<usize> {
    let mut o_kept = 0;
    let cap = if config.include_o {
        config.max_o_per_batch.unwrap_or(usize::MAX)
    } else {
        0
    };
    tags.iter()
        .enumerate()
        .filter(|(_, t)| {
            if **t != LabelTag::O {
                return true;
            }
            o_kept += 1;
            o_kept <= cap
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn cross_entropy(g: &[Vec<ProbDist>], gold: &[Vec<usize>], mask: &[Vec<bool>]) -> Result<f64> {
    cross_entropy_grad(g, gold, mask).map(|(v, _)| v)
}

/// Mean over sentences of the mean over valid tokens of `-log g[gold]`.
/// Sentences without valid tokens do not count towards the outer mean.
pub fn cross_entropy_grad(
    g: &[Vec<ProbDist>],
    gold: &[Vec<usize>],
    mask: &[Vec<bool>],
) -> Result<(f64, Vec<Vec<ProbDist>>)> {
    if g.len() != gold.len() || g.len() != mask.len() {
        return Err(Error::Shape("cross_entropy: batch sizes differ".into()));
    }
    let counts: Vec<usize> = mask.iter().map(|m| m.iter().filter(|v| **v).count()).collect();
    let sentences = counts.iter().filter(|c| **c > 0).count();
    if sentences == 0 {
        return Err(Error::Empty("cross_entropy: no valid tokens".into()));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(g.len());
    for (((rows, labels), m), &count) in g.iter().zip(gold).zip(mask).zip(&counts) {
        if rows.len() != labels.len() || rows.len() != m.len() {
            return Err(Error::Shape("cross_entropy: sentence lengths differ".into()));
        }
        let mut sent_grad = vec![[0.0; NUM_TAGS]; rows.len()];
        if count == 0 {
            grad.push(sent_grad);
            continue;
        }
        let scale = 1.0 / (count as f64 * sentences as f64);
        let mut sent_loss = 0.0;
        for ((row, &label), (&keep, gr)) in rows.iter().zip(labels).zip(m.iter().zip(&mut sent_grad)) {
            if !keep {
                continue;
            }
            if label >= NUM_TAGS {
                return Err(Error::Shape(format!("gold index {label} out of range")));
            }
            let p = row[label];
            if p > PROB_FLOOR {
                sent_loss -= p.ln();
                gr[label] = -scale / p;
            } else {
                sent_loss -= PROB_FLOOR.ln();
            }
        }
        total += sent_loss / count as f64;
        grad.push(sent_grad);
    }
    Ok((total / sentences as f64, grad))
}

pub fn contrastive_loss(batch: &ContrastiveBatch, config: &ContrastiveConfig) -> Result<f64> {
    contrastive_loss_grad(batch, config).map(|(v, _)| v)
}

/// Supervised contrastive loss with cosine similarity between probability
/// vectors, summed over anchors:
///
/// ```text
/// L = Σ_i  -1/|P_i| Σ_{p∈P_i} log( exp(s_ip/τ) / Σ_{k≠i} exp(s_ik/τ) )
/// ```
///
/// where `P_i` holds the other tokens in the anchor's group. Anchors with no
/// positives contribute nothing.
pub fn contrastive_loss_grad(
    batch: &ContrastiveBatch,
    config: &ContrastiveConfig,
) -> Result<(f64, Vec<ProbDist>)> {
    config.validate()?;
    let k = batch.len();
    let mut grad = vec![[0.0; NUM_TAGS]; k];
    if k < 2 {
        warn!("contrastive batch of {k} token(s); loss is 0");
        return Ok((0.0, grad));
    }
    let tau = config.temperature;
    let mut norms = Vec::with_capacity(k);
    let mut units: Vec<ProbDist> = Vec::with_capacity(k);
    for g in &batch.probs {
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::NonFinite(format!("distribution with norm {n}")));
        }
        norms.push(n);
        units.push(std::array::from_fn(|j| g[j] / n));
    }

    let mut group_sizes = std::collections::HashMap::new();
    for g in &batch.groups {
        *group_sizes.entry(*g).or_insert(0usize) += 1;
    }

    let mut total = 0.0;
    let mut sims = vec![0.0; k];
    let mut coef = vec![0.0; k];
    for i in 0..k {
        let positives = group_sizes[&batch.groups[i]] - 1;
        if positives == 0 {
            continue;
        }
        let ui = &units[i];
        let mut max = f64::NEG_INFINITY;
        let mut pos_sum = 0.0;
        for j in 0..k {
            if j == i {
                continue;
            }
            let s: f64 = ui.iter().zip(&units[j]).map(|(a, b)| a * b).sum();
            sims[j] = s;
            max = max.max(s / tau);
            if batch.groups[j] == batch.groups[i] {
                pos_sum += s / tau;
            }
        }
        let mut denom = 0.0;
        for j in (0..k).filter(|&j| j != i) {
            coef[j] = (sims[j] / tau - max).exp();
            denom += coef[j];
        }
        let lse = max + denom.ln();
        let inv_p = 1.0 / positives as f64;
        total += lse - pos_sum * inv_p;

        // dL_i/ds_ij = (softmax_j - [j∈P_i]/|P_i|) / τ, then through the cosine.
        let mut grad_i = [0.0; NUM_TAGS];
        for j in (0..k).filter(|&j| j != i) {
            let mut c = coef[j] / denom;
            if batch.groups[j] == batch.groups[i] {
                c -= inv_p;
            }
            c /= tau;
            let s = sims[j];
            let (ni, nj) = (norms[i], norms[j]);
            let uj = &units[j];
            for d in 0..NUM_TAGS {
                grad_i[d] += c * (uj[d] - s * ui[d]) / ni;
                grad[j][d] += c * (ui[d] - s * uj[d]) / nj;
            }
        }
        for d in 0..NUM_TAGS {
            grad[i][d] += grad_i[d];
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("contrastive loss {total}")));
    }
    Ok((total, grad))
}

/// `alpha * cl + (1 - alpha) * ce`.
pub fn combined_loss(ce: f64, cl: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return ce;
    }
    if alpha == 1.0 {
        return cl;
    }
    alpha * cl + (1.0 - alpha) * ce
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN13: f64 = 2.564_949_357_461_536_7;

    fn uniform() -> ProbDist {
        [1.0 / 13.0; NUM_TAGS]
    }

    #[test]
    fn cross_entropy_examples() {
        let ce = cross_entropy(&[vec![uniform(); 3]], &[vec![0, 5, 12]], &[vec![true; 3]]).unwrap();
        assert!((ce - LN13).abs() < 1e-12);
        assert!((ce - 13f64.ln()).abs() < 1e-12);

        let mut onehot = [0.0; NUM_TAGS];
        onehot[4] = 1.0;
        assert_eq!(cross_entropy(&[vec![onehot]], &[vec![4]], &[vec![true]]).unwrap(), 0.0);

        // per-sentence means 1.0 and 3.0
        let mut a = [0.0; NUM_TAGS];
        a[0] = (-1.0f64).exp();
        a[1] = 1.0 - a[0];
        let mut b = [0.0; NUM_TAGS];
        b[0] = (-3.0f64).exp();
        b[1] = 1.0 - b[0];
        let ce = cross_entropy(
            &[vec![a, a], vec![b]],
            &[vec![0, 0], vec![0]],
            &[vec![true, true], vec![true]],
        )
        .unwrap();
        assert!((ce - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_masks_and_errors() {
        let mut bad = [0.0; NUM_TAGS];
        bad[1] = 1.0;
        let ce = cross_entropy(&[vec![uniform(), bad]], &[vec![0, 0]], &[vec![true, false]]).unwrap();
        assert!((ce - LN13).abs() < 1e-12);
        // zero probability is floored, not infinite
        let ce = cross_entropy(&[vec![bad]], &[vec![0]], &[vec![true]]).unwrap();
        assert!((ce + PROB_FLOOR.ln()).abs() < 1e-9);
        assert!(cross_entropy(&[vec![uniform()]], &[vec![0]], &[vec![false]]).is_err());
        assert!(cross_entropy(&[], &[], &[]).is_err());
    }

    fn cfg(level: ContrastiveLevel) -> ContrastiveConfig {
        ContrastiveConfig::new(level)
    }

    #[test]
    fn contrastive_examples() {
        let g = [0.5, 0.2, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let two = ContrastiveBatch::new(vec![g, g], vec![4, 4]).unwrap();
        assert!(contrastive_loss(&two, &cfg(ContrastiveLevel::Token)).unwrap().abs() < 1e-12);

        let three = ContrastiveBatch::new(vec![g, g, g], vec![1, 1, 2]).unwrap();
        let l = contrastive_loss(&three, &cfg(ContrastiveLevel::Token)).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);

        let distinct = ContrastiveBatch::new(vec![g, uniform(), g], vec![0, 1, 2]).unwrap();
        assert_eq!(contrastive_loss(&distinct, &cfg(ContrastiveLevel::Token)).unwrap(), 0.0);

        let one = ContrastiveBatch::new(vec![g], vec![0]).unwrap();
        assert_eq!(contrastive_loss(&one, &cfg(ContrastiveLevel::Token)).unwrap(), 0.0);
    }

    #[test]
    fn contrastive_rejects_bad_temperature() {
        let b = ContrastiveBatch::new(vec![uniform(), uniform()], vec![0, 0]).unwrap();
        let mut c = cfg(ContrastiveLevel::Token);
        c.temperature = 0.0;
        assert!(matches!(contrastive_loss(&b, &c), Err(Error::Config(_))));
        c.temperature = -1.0;
        assert!(contrastive_loss(&b, &c).is_err());
    }

    #[test]
    fn levels_group_tags() {
        let bpos: LabelTag = "B-POS".parse().unwrap();
        let epos: LabelTag = "E-POS".parse().unwrap();
        assert_ne!(ContrastiveLevel::Token.group(bpos), ContrastiveLevel::Token.group(epos));
        assert_eq!(ContrastiveLevel::Sentiment.group(bpos), ContrastiveLevel::Sentiment.group(epos));
    }

    #[test]
    fn pool_selection_caps_o() {
        let tags: Vec<LabelTag> = ["O", "S-POS", "O", "O", "B-NEG"]
            .iter()
            .map(|t| t.parse().unwrap())
            .collect();
        let mut c = cfg(ContrastiveLevel::Token);
        assert_eq!(select_pool(&tags, &c), vec![0, 1, 2, 3, 4]);
        c.max_o_per_batch = Some(1);
        assert_eq!(select_pool(&tags, &c), vec![0, 1, 4]);
        c.include_o = false;
        assert_eq!(select_pool(&tags, &c), vec![1, 4]);
    }

    #[test]
    fn combined_examples() {
        assert_eq!(combined_loss(2.0, 1.0, 0.5), 1.5);
        assert_eq!(combined_loss(0.3, 9.0, 0.0), 0.3);
        assert_eq!(combined_loss(0.3, 9.0, 1.0), 9.0);
    }

    #[test]
    fn contrastive_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let k = 2 + trial % 5;
            let probs: Vec<ProbDist> = (0..k)
                .map(|_| {
                    let z: [f64; NUM_TAGS] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
                    crate::model::softmax(&z)
                })
                .collect();
            let groups: Vec<usize> = (0..k).map(|_| rng.random_range(0..3)).collect();
            let mut c = cfg(ContrastiveLevel::Token);
            c.temperature = 0.5;
            let batch = ContrastiveBatch::new(probs.clone(), groups.clone()).unwrap();
            let (_, grad) = contrastive_loss_grad(&batch, &c).unwrap();
            let h = 1e-6;
            for i in 0..k {
                for d in 0..NUM_TAGS {
                    let mut plus = probs.clone();
                    plus[i][d] += h;
                    let mut minus = probs.clone();
                    minus[i][d] -= h;
                    let lp = contrastive_loss(&ContrastiveBatch::new(plus, groups.clone()).unwrap(), &c).unwrap();
                    let lm = contrastive_loss(&ContrastiveBatch::new(minus, groups.clone()).unwrap(), &c).unwrap();
                    let fd = (lp - lm) / (2.0 * h);
                    assert!((fd - grad[i][d]).abs() < 1e-5 * (1.0 + fd.abs()), "k={k} i={i} d={d}: fd {fd} vs {}", grad[i][d]);
                }
            }
        }
    }
}
