//! Slow reference implementations used to cross-check the library.

use xdsv::numkit::Tensor;

fn rbf(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Unbiased RBF MMD as an explicit double sum.
pub fn mmd_oracle(s: &Tensor, t: &Tensor, sigma: f64) -> f64 {
    let (n, m) = (s.rows(), t.rows());
    let mut xx = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                xx += rbf(s.row(i), s.row(j), sigma);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                yy += rbf(t.row(i), t.row(j), sigma);
            }
        }
    }
    let mut xy = 0.0;
    for i in 0..n {
        for j in 0..m {
            xy += rbf(s.row(i), t.row(j), sigma);
        }
    }
    xx / (n * (n - 1)) as f64 + yy / (m * (m - 1)) as f64 - 2.0 * xy / (n * m) as f64
}

/// Mean over all unordered subnet pairs of the mean absolute difference.
pub fn discrepancy_oracle(outs: &[Tensor]) -> f64 {
    let n = outs.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i < j {
                let gap: f64 = outs[i].data().iter().zip(outs[j].data()).map(|(a, b)| (a - b).abs()).sum();
                pairs.push(gap / outs[i].len() as f64);
            }
        }
    }
    pairs.iter().sum::<f64>() / pairs.len() as f64
}

/// Threshold sweep by direct counting at every candidate threshold.
pub fn eer_oracle(targets: &[f64], nontargets: &[f64]) -> f64 {
    let mut u: Vec<f64> = targets.iter().chain(nontargets).copied().collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut thresholds = vec![u[0] - 1.0];
    thresholds.extend(u.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(u[u.len() - 1] + 1.0);
    let rates = |th: f64| {
        let far = nontargets.iter().filter(|&&s| s >= th).count() as f64 / nontargets.len() as f64;
        let frr = targets.iter().filter(|&&s| s < th).count() as f64 / targets.len() as f64;
        (far, frr)
    };
    let mut prev = rates(thresholds[0]);
    if prev.1 >= prev.0 {
        return prev.0;
    }
    for &th in &thresholds[1..] {
        let (far, frr) = rates(th);
        if frr >= far {
            if frr == far {
                return far;
            }
            let (ga, gb) = (prev.0 - prev.1, far - frr);
            return prev.0 + ga / (ga - gb) * (far - prev.0);
        }
        prev = (far, frr);
    }
    unreachable!("FRR reaches 1 above every score")
}

