//! L2-regularized logistic regression with hard-negative mining.

use serde::{Deserialize, Serialize};

use crate::dataset::LightClass;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub class: LightClass,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl ClassifierModel {
    /// Zero weights and bias: scores 0.5 everywhere.
    pub fn untrained(class: LightClass, dim: usize) -> Self {
        Self {
            class,
            weights: vec![0.0; dim],
            bias: 0.0,
            feature_mean: vec![0.0; dim],
            feature_scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.weights.len();
        if self.feature_mean.len() != d || self.feature_scale.len() != d {
            return Err(Error::dims("classifier normalization does not match weights"));
        }
        if self.feature_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::domain("feature scales must be positive"));
        }
        Ok(())
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut z = self.bias;
        for (((v, m), s), w) in x
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .zip(&self.weights)
        {
            z += w * (v - m) / s;
        }
        z
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub mining_rounds: usize,
    /// Upper bound on negatives added per mining round.
    pub hard_per_round: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            tolerance: 1e-6,
            max_iters: 10_000,
            mining_rounds: 2,
            hard_per_round: 400,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub final_loss: f64,
    pub grad_norm: f64,
    /// Objective value before every iteration and after the last one.
    #[serde(skip)]
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningRound {
    pub false_positives_before: usize,
    pub false_positives_after: usize,
    pub added: usize,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub positives: usize,
    pub negatives: usize,
    pub initial_fit: FitReport,
    pub rounds: Vec<MiningRound>,
}

struct Standardized {
    data: Vec<f64>,
    n: usize,
    d: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(x: &[&[f64]]) -> Result<Standardized> {
    let n = x.len();
    let d = x.first().map_or(0, |r| r.len());
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::dims("feature vectors have different lengths"));
    }
    let mut mean = vec![0.0; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for r in x {
        for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for r in x {
        for ((v, m), s) in r.iter().zip(&mean).zip(&scale) {
            data.push((v - m) / s);
        }
    }
    Ok(Standardized {
        data,
        n,
        d,
        mean,
        scale,
    })
}

struct Objective<'a> {
    x: &'a Standardized,
    y: &'a [f64],
    lambda: f64,
}

impl Objective<'_> {
    fn logits(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.x
            .data
            .chunks_exact(self.x.d)
            .map(|row| b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    fn value_from_logits(&self, z: &[f64], w: &[f64]) -> f64 {
        let data: f64 = z.iter().zip(self.y).map(|(z, y)| softplus(*z) - y * z).sum();
        data / self.x.n as f64 + 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn grad_from_logits(&self, z: &[f64], w: &[f64]) -> (Vec<f64>, f64) {
        let n = self.x.n as f64;
        let mut gw = vec![0.0; self.x.d];
        let mut gb = 0.0;
        for ((row, z), y) in self.x.data.chunks_exact(self.x.d).zip(z).zip(self.y) {
            let r = sigmoid(*z) - y;
            gb += r;
            for (g, a) in gw.iter_mut().zip(row) {
                *g += r * a;
            }
        }
        for (g, wi) in gw.iter_mut().zip(w) {
            *g = *g / n + self.lambda * wi;
        }
        (gw, gb / n)
    }

    /// Upper estimate of the gradient's Lipschitz constant:
    /// `λ_max(X̃ᵀX̃)/(4n) + λ`, with the bias column included.
    fn lipschitz(&self) -> f64 {
        let d = self.x.d + 1;
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut eig = 0.0;
        for _ in 0..100 {
            let mut out = vec![0.0; d];
            for row in self.x.data.chunks_exact(self.x.d) {
                let dot = v[self.x.d] + row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
                for (o, a) in out.iter_mut().zip(row) {
                    *o += dot * a;
                }
                out[self.x.d] += dot;
            }
            let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            eig = norm;
            for (vi, o) in v.iter_mut().zip(&out) {
                *vi = o / norm;
            }
        }
        1.1 * eig / (4.0 * self.x.n as f64) + self.lambda
    }
}

/// Full-batch gradient descent with step `1/L` and Nesterov momentum.
/// Momentum is reset whenever an update would raise the objective, and
/// the step is halved if a plain step still would, so the loss never goes
/// up.
pub fn fit_logistic(
    x: &[&[f64]],
    labels: &[bool],
    cfg: &TrainConfig,
    class: LightClass,
) -> Result<(ClassifierModel, FitReport)> {
    if x.len() != labels.len() {
        return Err(Error::dims("features and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::domain("training needs at least one positive and one negative"));
    }
    let std = standardize(x)?;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let obj = Objective {
        x: &std,
        y: &y,
        lambda: cfg.lambda,
    };
    let mut step = 1.0 / obj.lipschitz();
    let norm = |gw: &[f64], gb: f64| (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
    let mut w = vec![0.0; std.d];
    let mut b = 0.0;
    let mut prev_w = w.clone();
    let mut prev_b = b;
    let mut t = 1.0f64;
    let mut report = FitReport::default();
    let mut loss = obj.value_from_logits(&obj.logits(&w, b), &w);
    report.losses.push(loss);
    let mut halvings = 0;
    while report.iterations < cfg.max_iters {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let yw: Vec<f64> = w.iter().zip(&prev_w).map(|(a, p)| a + beta * (a - p)).collect();
        let yb = b + beta * (b - prev_b);
        let (gw, gb) = obj.grad_from_logits(&obj.logits(&yw, yb), &yw);
        if beta == 0.0 {
            let gnorm = norm(&gw, gb);
            if gnorm < cfg.tolerance {
                break;
            }
        }
        let nw: Vec<f64> = yw.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
        let nb = yb - step * gb;
        let nl = obj.value_from_logits(&obj.logits(&nw, nb), &nw);
        if nl > loss {
            if beta == 0.0 {
                if halvings >= 30 {
                    break;
                }
                step *= 0.5;
                halvings += 1;
            }
            // restart momentum from the current iterate
            prev_w.clone_from(&w);
            prev_b = b;
            t = 1.0;
            continue;
        }
        prev_w = std::mem::replace(&mut w, nw);
        prev_b = std::mem::replace(&mut b, nb);
        t = t_next;
        loss = nl;
        report.iterations += 1;
        report.losses.push(loss);
        if beta != 0.0 && report.iterations % 25 == 0 {
            let (gw, gb) = obj.grad_from_logits(&obj.logits(&w, b), &w);
            let gnorm = norm(&gw, gb);
            if gnorm < cfg.tolerance {
                break;
            }
        }
    }
    let (gw, gb) = obj.grad_from_logits(&obj.logits(&w, b), &w);
    report.final_loss = loss;
    report.grad_norm = norm(&gw, gb);
    Ok((
        ClassifierModel {
            class,
            weights: w,
            bias: b,
            feature_mean: std.mean,
            feature_scale: std.scale,
        },
        report,
    ))
}

fn false_positives(model: &ClassifierModel, pool: &[&[f64]]) -> (usize, Vec<(f64, usize)>) {
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, x)| (model.score(x), i))
        .filter(|(p, _)| *p >= 0.5)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    (scored.len(), scored)
}

/// Fits on `samples`, then runs `cfg.mining_rounds` hard-negative rounds
/// over `negatives_pool`. A round whose refit would raise the pool's
/// false-positive count is discarded.
pub fn train_classifier(
    samples: &[(Vec<f64>, bool)],
    negatives_pool: &[Vec<f64>],
    cfg: &TrainConfig,
    class: LightClass,
) -> Result<(ClassifierModel, TrainReport)> {
    let mut rows: Vec<&[f64]> = samples.iter().map(|(x, _)| x.as_slice()).collect();
    let mut labels: Vec<bool> = samples.iter().map(|(_, l)| *l).collect();
    let (mut model, fit) = fit_logistic(&rows, &labels, cfg, class)?;
    let pool: Vec<&[f64]> = negatives_pool.iter().map(Vec::as_slice).collect();
    let mut used = vec![false; pool.len()];
    let mut report = TrainReport {
        positives: labels.iter().filter(|&&l| l).count(),
        negatives: labels.iter().filter(|&&l| !l).count(),
        initial_fit: fit,
        rounds: Vec::new(),
    };
    for _ in 0..cfg.mining_rounds {
        let (before, ranked) = false_positives(&model, &pool);
        let hard: Vec<usize> = ranked
            .iter()
            .map(|&(_, i)| i)
            .filter(|&i| !used[i])
            .take(cfg.hard_per_round)
            .collect();
        if hard.is_empty() {
            report.rounds.push(MiningRound {
                false_positives_before: before,
                false_positives_after: before,
                added: 0,
                accepted: true,
            });
            continue;
        }
        let mut cand_rows = rows.clone();
        let mut cand_labels = labels.clone();
        for &i in &hard {
            cand_rows.push(pool[i]);
            cand_labels.push(false);
        }
        let (cand, _) = fit_logistic(&cand_rows, &cand_labels, cfg, class)?;
        let (after, _) = false_positives(&cand, &pool);
        let accepted = after <= before;
        report.rounds.push(MiningRound {
            false_positives_before: before,
            false_positives_after: if accepted { after } else { before },
            added: if accepted { hard.len() } else { 0 },
            accepted,
        });
        if accepted {
            for &i in &hard {
                used[i] = true;
            }
            rows = cand_rows;
            labels = cand_labels;
            model = cand;
            report.negatives += hard.len();
        }
    }
    Ok((model, report))
}
