use xdsv::numkit::ScheduleConfig;
use xdsv_wasm::{eer_curve_impl, gaussian_scores_impl, mmd_clouds_impl, schedule_curves_impl, SCHEDULE_STRIDE};

#[test]
fn schedule_rows_cover_progress() {
    let v = schedule_curves_impl(4, &ScheduleConfig::default()).unwrap();
    assert_eq!(v.len(), 4 * SCHEDULE_STRIDE);
    let last = &v[3 * SCHEDULE_STRIDE..];
    assert_eq!(last[0], 1.0);
    assert!((last[1] - 0.01 / 11f64.powf(0.75)).abs() < 1e-15);
    assert!((last[1] / last[2] - 10.0).abs() < 1e-12);
    assert!(last[3] > 0.99 && last[3] < 1.0);
    assert!(schedule_curves_impl(0, &ScheduleConfig::default()).is_err());
}

#[test]
fn mmd_grows_with_shift() {
    let near = mmd_clouds_impl(3, 50, 0.0, 1.0, 0.0).unwrap();
    let far = mmd_clouds_impl(3, 50, 2.5, 1.0, 0.0).unwrap();
    assert_eq!(near.len(), 3 + 4 * 50);
    assert!(far[0] > near[0] && far[1] > near[1]);
    assert_eq!(mmd_clouds_impl(3, 50, 2.5, 1.0, 0.0).unwrap(), far);
    assert!(mmd_clouds_impl(3, 1, 0.0, 1.0, 0.0).is_err());
}

#[test]
fn eer_falls_with_separation() {
    let run = |sep: f64| {
        let s = gaussian_scores_impl(5, 100, 500, sep);
        eer_curve_impl(&s[..100], &s[100..]).unwrap()[0]
    };
    let (a, b) = (run(0.5), run(3.0));
    assert!(b < a, "{b} !< {a}");
    assert!(eer_curve_impl(&[], &[0.1]).is_err());
}
