use crate::error::{Error, Result};

/// Equal error rate and the threshold at which it is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// One point of the detection trade-off: accept when `score ≥ threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

fn check_scores(targets: &[f64], nontargets: &[f64]) -> Result<()> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::contract(format!(
            "EER needs target and nontarget trials (got {} and {})",
            targets.len(),
            nontargets.len()
        )));
    }
    if targets.iter().chain(nontargets).any(|s| !s.is_finite()) {
        return Err(Error::numeric("trial scores contain non-finite values"));
    }
    Ok(())
}

/// Operating points at `min − 1`, every midpoint between adjacent distinct
/// scores and `max + 1`, in increasing threshold order. FAR falls from 1 to
/// 0 along the list while FRR rises from 0 to 1.
pub fn operating_points(targets: &[f64], nontargets: &[f64]) -> Result<Vec<OperatingPoint>> {
    check_scores(targets, nontargets)?;
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (targets.len() as f64, nontargets.len() as f64);

    let mut points = Vec::with_capacity(all.len() + 1);
    points.push(OperatingPoint {
        threshold: all[0].0 - 1.0,
        far: 1.0,
        frr: 0.0,
    });
    // scores strictly below the running threshold
    let (mut tgt_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tgt_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
        let threshold = if i < all.len() { 0.5 * (s + all[i].0) } else { s + 1.0 };
        points.push(OperatingPoint {
            threshold,
            far: (nontargets.len() - non_below) as f64 / nn,
            frr: tgt_below as f64 / nt,
        });
    }
    Ok(points)
}

/// Locates the FAR/FRR crossing on a threshold-ordered operating-point list:
/// the first point with `FRR ≥ FAR`, linearly interpolated against its
/// predecessor when the two rates are not exactly equal there.
pub fn eer_from_points(points: &[OperatingPoint]) -> Result<Eer> {
    let i = points
        .iter()
        .position(|p| p.frr >= p.far)
        .ok_or_else(|| Error::contract("operating points never cross"))?;
    let b = points[i];
    if b.frr == b.far || i == 0 {
        return Ok(Eer {
            eer: b.far,
            threshold: b.threshold,
        });
    }
    let a = points[i - 1];
    let gap_a = a.far - a.frr;
    let gap_b = b.far - b.frr;
    let lambda = gap_a / (gap_a - gap_b);
    Ok(Eer {
        eer: a.far + lambda * (b.far - a.far),
        threshold: a.threshold + lambda * (b.threshold - a.threshold),
    })
}

/// EER of a set of target and nontarget scores, where a trial is accepted
/// when its score is at least the threshold.
pub fn eer(targets: &[f64], nontargets: &[f64]) -> Result<Eer> {
    eer_from_points(&operating_points(targets, nontargets)?)
}

/// `100 · (baseline − new) / baseline`.
pub fn relative_decrease(baseline_eer: f64, new_eer: f64) -> Result<f64> {
    if !(baseline_eer > 0.0) {
        return Err(Error::contract(format!(
            "relative decrease needs a positive baseline EER, got {baseline_eer}"
        )));
    }
    Ok(100.0 * (baseline_eer - new_eer) / baseline_eer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_sets() {
        let e = eer(&[0.9, 0.8, 0.7], &[0.6, 0.5, 0.4]).unwrap();
        assert_eq!(e.eer, 0.0);
        assert!(e.threshold > 0.6 && e.threshold <= 0.7);
    }

    #[test]
    fn exact_crossing() {
        let e = eer(&[0.9, 0.7, 0.6], &[0.8, 0.3, 0.2]).unwrap();
        assert!((e.eer - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn interpolated_crossing() {
        // FAR/FRR: (1,0) at −1, (1/2,0) at 0.5, (0,1) at 2
        let e = eer(&[1.0], &[0.0, 1.0]).unwrap();
        assert!((e.eer - 1.0 / 3.0).abs() < 1e-15, "{e:?}");
    }

    #[test]
    fn reversed_sets_give_one() {
        assert_eq!(eer(&[0.1], &[0.9]).unwrap().eer, 1.0);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(eer(&[0.5], &[]), Err(Error::Contract(_))));
        assert!(matches!(eer(&[], &[0.5]), Err(Error::Contract(_))));
    }

    #[test]
    fn rd_values() {
        assert_eq!(relative_decrease(0.5, 0.5).unwrap(), 0.0);
        assert!((relative_decrease(0.58, 0.22).unwrap() - 62.07).abs() < 0.01);
        assert!(relative_decrease(0.0, 0.1).is_err());
        assert!(relative_decrease(0.2, 0.3).unwrap() < 0.0);
    }
}
