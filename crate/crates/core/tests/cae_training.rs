use cowlab::cae::{train, CaeArchitecture, TrainConfig};
use cowlab::volume::Patch3D;

/// A bright tube along a direction set by `seed`, smooth and noise free.
fn tube_patch(seed: u64) -> Patch3D {
    let side = 32;
    let a = seed as f64 * 0.7;
    let dir = [a.cos(), a.sin(), 0.3 * (seed as f64).sin()];
    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let dir = [dir[0] / n, dir[1] / n, dir[2] / n];
    let c = 15.5;
    let mut data = Vec::with_capacity(side * side * side);
    for k in 0..side {
        for j in 0..side {
            for i in 0..side {
                let p = [i as f64 - c, j as f64 - c, k as f64 - c];
                let t = p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2];
                let d2 = (0..3).map(|q| (p[q] - t * dir[q]).powi(2)).sum::<f64>();
                data.push((0.1 + 0.8 * (-d2 / 8.0).exp()) as f32);
            }
        }
    }
    Patch3D {
        side,
        data,
        source_volume_id: format!("tube-{seed}"),
        center_voxel: [16; 3],
        label: None,
    }
}

#[test]
fn single_patch_overfits() {
    let p = tube_patch(3);
    let m = train(
        &CaeArchitecture::default(),
        std::slice::from_ref(&p),
        &TrainConfig {
            epochs: 500,
            batch: 8,
            lr: 1e-3,
            seed: 1,
        },
    )
    .unwrap();
    let mse = m.reconstruction_mse(&p).unwrap();
    assert!(mse < 1e-3, "final mse {mse}");
}

#[test]
fn smoothed_loss_does_not_increase() {
    let patches: Vec<_> = (0..50).map(tube_patch).collect();
    let m = train(
        &CaeArchitecture::default(),
        &patches,
        &TrainConfig {
            epochs: 30,
            batch: 8,
            lr: 1e-3,
            seed: 2,
        },
    )
    .unwrap();
    let windows: Vec<f64> = m
        .loss_log
        .chunks(10)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    for w in windows.windows(2) {
        assert!(w[1] <= w[0], "smoothed loss rose: {windows:?}");
    }
}
