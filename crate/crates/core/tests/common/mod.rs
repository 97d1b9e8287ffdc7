//! Brute-force oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the metric or similarity implementations; each
//! oracle recomputes its quantity by direct enumeration.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxref::metrics::CostModel;
use voxref::store::{Embedding, Label};
use voxref::TrialScore;

/// AUC by comparing every real/fake pair; ties earn half credit.
pub fn auc_pairwise(real: &[f64], fake: &[f64]) -> f64 {
    let mut twice_u = 0u64;
    for &r in real {
        for &f in fake {
            if r > f {
                twice_u += 2;
            } else if r == f {
                twice_u += 1;
            }
        }
    }
    twice_u as f64 / (2 * real.len() as u64 * fake.len() as u64) as f64
}

/// `-inf`, the distinct scores, `+inf`.
pub fn thresholds(real: &[f64], fake: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = real.iter().chain(fake).copied().collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup();
    let mut out = vec![f64::NEG_INFINITY];
    out.extend(t);
    out.push(f64::INFINITY);
    out
}

/// (false accepts, false rejects) at `t` by direct counting.
pub fn errors_at(real: &[f64], fake: &[f64], t: f64) -> (usize, usize) {
    let fa = fake.iter().filter(|&&s| s >= t).count();
    let fr = real.iter().filter(|&&s| s < t).count();
    (fa, fr)
}

/// EER by enumerating every threshold; lowest threshold among exact minimizers of |FAR - FRR|.
pub fn eer_exhaustive(real: &[f64], fake: &[f64]) -> (f64, f64) {
    let (nr, nf) = (real.len() as u128, fake.len() as u128);
    let mut best: Option<(u128, f64, f64)> = None;
    for t in thresholds(real, fake) {
        let (fa, fr) = errors_at(real, fake, t);
        let gap = (fa as u128 * nr).abs_diff(fr as u128 * nf);
        let far = fa as f64 / fake.len() as f64;
        let frr = fr as f64 / real.len() as f64;
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, (far + frr) / 2.0, t));
        }
    }
    let (_, eer, t) = best.unwrap();
    (eer, t)
}

/// Minimum normalized cost by enumerating every threshold.
pub fn min_tdcf_exhaustive(real: &[f64], fake: &[f64], c: &CostModel) -> f64 {
    let norm = (c.c_miss * c.p_target).min(c.c_fa * c.p_spoof);
    thresholds(real, fake)
        .into_iter()
        .map(|t| {
            let (fa, fr) = errors_at(real, fake, t);
            let far = fa as f64 / fake.len() as f64;
            let frr = fr as f64 / real.len() as f64;
            (c.c_miss * c.p_target * frr + c.c_fa * c.p_spoof * far) / norm
        })
        .fold(f64::INFINITY, f64::min)
}

/// Textbook cosine: sequential f64 sums, separate norms.
pub fn cosine_naive(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for i in 0..a.len() {
        dot += a[i] as f64 * b[i] as f64;
        na += a[i] as f64 * a[i] as f64;
        nb += b[i] as f64 * b[i] as f64;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub fn max_naive(test: &[f32], refs: &[Vec<f32>]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for r in refs {
        let s = cosine_naive(test, r);
        if s > best {
            best = s;
        }
    }
    best
}

/// Spearman rank correlation with mid-ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let mid = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = mid;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Random two-class score sets; every other set draws from a coarse grid to force ties.
pub fn random_score_sets(count: usize, max_n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let nr = rng.random_range(1..=max_n);
            let nf = rng.random_range(1..=max_n);
            let tie_heavy = i % 2 == 0;
            let levels = rng.random_range(1..=12u32);
            let mut shift: f64 = rng.random_range(-0.3..0.3);
            if tie_heavy {
                shift = (shift * levels as f64).round() / levels as f64;
            }
            let mut draw = |n: usize, offset: f64| -> Vec<f64> {
                (0..n)
                    .map(|_| {
                        if tie_heavy {
                            (rng.random_range(0..levels) as f64 / levels as f64 + offset).min(1.0)
                        } else {
                            (rng.random_range(-1.0..1.0f64) + offset).clamp(-1.0, 1.0)
                        }
                    })
                    .collect()
            };
            let real = draw(nr, shift.max(0.0));
            let fake = draw(nf, 0.0);
            (real, fake)
        })
        .collect()
}

pub fn trials_from(real: &[f64], fake: &[f64]) -> Vec<TrialScore> {
    let mk = |id: String, score: f64, label| TrialScore {
        utterance_id: id,
        claimed_identity: "spk".into(),
        score,
        argmax_reference: "ref".into(),
        label,
    };
    real.iter()
        .enumerate()
        .map(|(i, &s)| mk(format!("r{i}"), s, Label::BonaFide))
        .chain(
            fake.iter()
                .enumerate()
                .map(|(i, &s)| mk(format!("f{i}"), s, Label::Spoof)),
        )
        .collect()
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0f32)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

pub fn embedding(v: &[f32]) -> Embedding {
    Embedding::new(v.to_vec()).unwrap()
}
