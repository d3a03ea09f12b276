use wamsplit_py::{algorithm1, coi_transform, critical_pair, taylor_predict};

#[test]
fn coi_transform_removes_the_weighted_mean() {
    let out = coi_transform(vec![1.0, 2.0, 4.0], vec![1.0, 1.0, 2.0], None).unwrap();
    assert!((out.iter().zip([1.0, 1.0, 2.0]).map(|(v, m)| v * m).sum::<f64>()).abs() < 1e-12);
    assert!((out[0] + 1.75).abs() < 1e-12);
}

#[test]
fn coi_transform_rejects_mismatched_lengths() {
    assert!(coi_transform(vec![1.0, 2.0], vec![1.0], None).is_err());
    assert!(coi_transform(vec![1.0], vec![0.0], None).is_err());
}

#[test]
fn critical_pair_is_the_widest_separation() {
    let (i, j, sep) = critical_pair(vec![0.1, -0.5, 2.0]).unwrap();
    assert_eq!((i.min(j), i.max(j)), (1, 2));
    assert!((sep - 2.5).abs() < 1e-12);
    assert!(critical_pair(vec![0.3]).is_none());
}

#[test]
fn taylor_predict_extends_a_parabola() {
    let t_s = 1.0 / 60.0;
    let history: Vec<Vec<f64>> = (0..12)
        .map(|n| {
            let t = n as f64 * t_s;
            vec![1.0 + 2.0 * t + 3.0 * t * t, -t]
        })
        .collect();
    let pred = taylor_predict(history, t_s, 0.1, 12).unwrap();
    assert_eq!(pred.len(), 6);
    let t = 17.0 * t_s;
    assert!((pred[5][0] - (1.0 + 2.0 * t + 3.0 * t * t)).abs() < 1e-9);
    assert!((pred[5][1] + t).abs() < 1e-9);
}

#[test]
fn algorithm1_isolates_the_runaway_machine() {
    let rows = vec![vec![10.0, 1.0, 0.0], vec![20.0, 1.5, 0.5]];
    let (cm, nm) = algorithm1(rows).unwrap().unwrap();
    assert_eq!(cm, vec![0]);
    assert_eq!(nm, vec![1, 2]);
    assert!(algorithm1(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
}
