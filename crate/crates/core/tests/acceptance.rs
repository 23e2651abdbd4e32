//! Acceptance suite: one PASS/FAIL line per criterion, then a non-zero exit if any failed.
//!
//! Criteria 5 and 6 share one default 91-phantom corpus built on first use.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;

use cowlab::cae::{self, CaeArchitecture, Tensor, TrainConfig};
use cowlab::classify::{
    self, bootstrap_indices, DecisionTree, DtConfig, FeatureProvenance, Kernel, LabeledDataset, MaxFeatures, Mlp,
    RandomForest, RfConfig, Svm, SvmConfig,
};
use cowlab::dimred::{isomap_fit, lda_fit, pca_fit, DrMethod, DrSpec};
use cowlab::eval::{self, ConfigFingerprint, CvReport, Predictor};
use cowlab::experiment::{self, ExperimentConfig, Pipelines};
use cowlab::geomfeat::{features, slot_kind, FeatureContext, SlotKind, NUM_FEATURES};
use cowlab::linalg::{jacobi_eigen, Matrix};
use cowlab::phantom::{noiseless_template, rasterize, realize, vessel_voxels_brute_force};
use cowlab::rng;
use cowlab::vesselgraph::{
    dist, match_to_ground_truth, Bifurcation, BranchView, Point3, Terminal, DEFAULT_MATCH_TOL_MM,
};
use cowlab::ClassLabel;

/// Collects failed checks; a criterion passes when none failed.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
}

type Criterion = fn(&mut Checks);

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 7] = [
        ("pipeline recovery on noiseless phantoms", pipeline_recovery),
        ("feature correctness and invariances", feature_correctness),
        ("dimensionality-reduction oracles", dr_oracles),
        ("classifier oracles", classifier_oracles),
        ("desk-scale geometric experiment", geometric_experiment),
        ("autoencoder analogue", autoencoder_analogue),
        ("protocol identities", protocol_identities),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let mut c = Checks::default();
        if let Err(p) = panic::catch_unwind(AssertUnwindSafe(|| run(&mut c))) {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            c.failures.push(format!("aborted: {msg}"));
        }
        let verdict = if c.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} {verdict}: {name} ({:.1}s)",
            start.elapsed().as_secs_f64()
        );
        for note in &c.notes {
            println!("    {note}");
        }
        for f in &c.failures {
            println!("    failed: {f}");
        }
        if !c.failures.is_empty() {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- criterion 1

fn pipeline_recovery(c: &mut Checks) {
    let start = Instant::now();
    let settings = ExperimentConfig::default().extraction;
    let (mut found, mut expected, mut mask_ok) = (0, 0, 0);
    for seed in 0..20u64 {
        let spec = noiseless_template(seed);
        let gt = realize(&spec).unwrap();
        let vol = rasterize(&gt.graph, &spec.raster, seed).unwrap();
        let a = experiment::analyze_volume(&vol, &settings);
        let brute = vessel_voxels_brute_force(&gt.graph, &spec.raster);
        if a.mask.data == brute {
            mask_ok += 1;
        } else {
            let diff = a.mask.data.iter().zip(&brute).filter(|(x, y)| x != y).count();
            c.check(
                false,
                format!("phantom {seed}: mask differs from the rasterizer's set in {diff} voxels"),
            );
        }
        let voxel = spec.raster.spacing.iter().copied().fold(0.0, f64::max);
        let tol = 2.0 * voxel;
        let labeled = match_to_ground_truth(&a.bifurcations, &gt, DEFAULT_MATCH_TOL_MM);
        expected += gt.labeled_centers.len();
        for want in &gt.labeled_centers {
            let hit = labeled
                .iter()
                .filter(|b| b.label == Some(want.label))
                .map(|b| dist(b.center, want.pos))
                .next();
            match hit {
                Some(d) if d <= tol => found += 1,
                Some(d) => c.check(
                    false,
                    format!("phantom {seed}: {} detected {:.2} voxels away", want.label, d / voxel),
                ),
                None => c.check(false, format!("phantom {seed}: {} not detected", want.label)),
            }
        }
    }
    let elapsed = start.elapsed();
    c.check(
        expected == 13 * 20,
        format!("{expected} ground-truth BoIs, expected 260"),
    );
    c.check(
        elapsed < Duration::from_secs(300),
        format!("runtime {elapsed:?} over 5 min"),
    );
    c.note(format!(
        "{found}/{expected} BoIs within 2 voxels with the right label; {mask_ok}/20 masks identical; {:.1}s",
        elapsed.as_secs_f64()
    ));
}

// ---------------------------------------------------------------- criterion 2

fn straight(dir: Point3, len: f64, radius: f64, n: usize) -> BranchView {
    BranchView {
        points: (0..=n).map(|i| scale(dir, len * i as f64 / n as f64)).collect(),
        radii: vec![radius; n + 1],
        terminal_kind: Terminal::Endpoint,
    }
}

fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn unit(a: Point3) -> Point3 {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    scale(a, 1.0 / n)
}

fn symmetric_y() -> Vec<f64> {
    let r0 = 1.0;
    let child = r0 / 2f64.cbrt();
    let dirs = (0..3).map(|i| {
        let t = (i as f64) * 2.0 * std::f64::consts::PI / 3.0;
        [t.cos(), t.sin(), 0.0]
    });
    let radii = [r0, child, child];
    let b = Bifurcation {
        node_id: 0,
        center: [0.0; 3],
        branches: dirs.zip(radii).map(|(d, r)| straight(d, 8.0, r, 32)).collect(),
        label: None,
    };
    let ctx = FeatureContext {
        volume_origin: [-20.0; 3],
        volume_extent_mm: [40.0; 3],
        all_centers: &[[0.0; 3], [5.0, 0.0, 0.0]],
        tree_centroid: [1.0, 2.0, 3.0],
    };
    features(&b, &ctx).unwrap()
}

/// Branch that leaves the centre straight for `lead` mm, then wanders.
fn random_branch(r: &mut rng::Rng, dir: Point3, lead: f64, radius: f64) -> BranchView {
    let mut points = vec![[0.0; 3]];
    for i in 1..=9 {
        points.push(scale(dir, lead * i as f64 / 9.0));
    }
    let mut heading = dir;
    for _ in 0..12 {
        let jitter = [
            r.random_range(-0.4..0.4),
            r.random_range(-0.4..0.4),
            r.random_range(-0.4..0.4),
        ];
        heading = unit(add(heading, jitter));
        let last = *points.last().unwrap();
        points.push(add(last, scale(heading, r.random_range(0.4..0.9))));
    }
    let radii = (0..points.len())
        .map(|i| radius * (1.0 - 0.01 * i as f64) + r.random_range(0.0..0.05))
        .collect();
    BranchView {
        points,
        radii,
        terminal_kind: Terminal::Endpoint,
    }
}

fn random_direction(r: &mut rng::Rng) -> Point3 {
    loop {
        let v: Point3 = [
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.2 && n <= 1.0 {
            return scale(v, 1.0 / n);
        }
    }
}

struct Scene {
    b: Bifurcation,
    origin: Point3,
    extent: [f64; 3],
    centers: Vec<Point3>,
    centroid: Point3,
}

impl Scene {
    fn features(&self) -> Vec<f64> {
        let ctx = FeatureContext {
            volume_origin: self.origin,
            volume_extent_mm: self.extent,
            all_centers: &self.centers,
            tree_centroid: self.centroid,
        };
        features(&self.b, &ctx).unwrap()
    }

    fn map(&self, f: impl Fn(Point3) -> Point3, radius_scale: f64) -> Scene {
        let mut b = self.b.clone();
        b.center = f(b.center);
        for br in &mut b.branches {
            br.points.iter_mut().for_each(|p| *p = f(*p));
            br.radii.iter_mut().for_each(|r| *r *= radius_scale);
        }
        Scene {
            b,
            origin: self.origin,
            extent: self.extent,
            centers: self.centers.iter().map(|&p| f(p)).collect(),
            centroid: f(self.centroid),
        }
    }
}

fn random_scene(seed: u64) -> Scene {
    let mut r = rng::rng_from_seed(seed);
    let center = [
        r.random_range(10.0..30.0),
        r.random_range(10.0..30.0),
        r.random_range(10.0..30.0),
    ];
    let dirs: Vec<Point3> = loop {
        let d: Vec<Point3> = (0..3).map(|_| random_direction(&mut r)).collect();
        let min_angle = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(i, j)| {
                (d[i][0] * d[j][0] + d[i][1] * d[j][1] + d[i][2] * d[j][2])
                    .clamp(-1.0, 1.0)
                    .acos()
            })
            .fold(f64::INFINITY, f64::min);
        if min_angle > 0.5 {
            break d;
        }
    };
    let radii = [1.5, 1.1, 0.8];
    let branches = dirs
        .iter()
        .zip(radii)
        .map(|(&d, rad)| {
            let mut br = random_branch(&mut r, d, 4.5, rad);
            br.points.iter_mut().for_each(|p| *p = add(*p, center));
            br
        })
        .collect();
    let centers = (0..4)
        .map(|_| {
            [
                r.random_range(0.0..40.0),
                r.random_range(0.0..40.0),
                r.random_range(0.0..40.0),
            ]
        })
        .chain([center])
        .collect();
    Scene {
        b: Bifurcation {
            node_id: 0,
            center,
            branches,
            label: None,
        },
        origin: [0.0; 3],
        extent: [40.0; 3],
        centers,
        centroid: [20.0, 21.0, 19.0],
    }
}

fn rotation(r: &mut rng::Rng) -> [[f64; 3]; 3] {
    let q = loop {
        let q = [
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0f64..1.0),
        ];
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            break q.map(|v| v / n);
        }
    };
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

fn feature_correctness(c: &mut Checks) {
    let f = symmetric_y();
    for (slot, name) in [
        (39, "angle 0-1"),
        (40, "angle 0-2"),
        (41, "angle 1-2"),
        (43, "min angle"),
        (44, "max angle"),
    ] {
        c.check(
            (f[slot] - 120.0).abs() <= 0.5,
            format!("symmetric Y {name} = {}", f[slot]),
        );
    }
    for slot in [2, 14, 26] {
        c.check(
            (f[slot] - 1.0).abs() <= 1e-6,
            format!("symmetric Y tortuosity slot {slot} = {}", f[slot]),
        );
    }
    c.check(
        f[55].abs() <= 1e-9,
        format!("symmetric Y Murray deviation = {:e}", f[55]),
    );

    let (mut rigid_worst, mut scale_worst) = (0.0f64, 0.0f64);
    for seed in 0..200u64 {
        let scene = random_scene(seed);
        let base = scene.features();
        let mut r = rng::rng_from_seed(10_000 + seed);
        let rot = rotation(&mut r);
        let shift = [
            r.random_range(-5.0..5.0),
            r.random_range(-5.0..5.0),
            r.random_range(-5.0..5.0),
        ];
        let moved = scene
            .map(
                |p| {
                    let q = [
                        rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2],
                        rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2],
                        rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2],
                    ];
                    add(q, shift)
                },
                1.0,
            )
            .features();
        let s = r.random_range(0.5..2.0);
        let mut scaled_scene = scene.map(|p| scale(p, s), s);
        scaled_scene.origin = scale(scene.origin, s);
        scaled_scene.extent = scale(scene.extent, s);
        let scaled = scaled_scene.features();
        for i in 0..NUM_FEATURES {
            let kind = slot_kind(i);
            if kind != SlotKind::Location {
                let e = (moved[i] - base[i]).abs() / base[i].abs().max(1.0);
                rigid_worst = rigid_worst.max(e);
                c.check(
                    close(moved[i], base[i], 1e-6),
                    format!("rigid motion changes slot {} ({} vs {})", i + 1, base[i], moved[i]),
                );
            }
            let want = match kind {
                SlotKind::Length | SlotKind::Context => base[i] * s,
                SlotKind::Invariant | SlotKind::Location => base[i],
                SlotKind::Curvature => continue,
            };
            let e = (scaled[i] - want).abs() / want.abs().max(1.0);
            scale_worst = scale_worst.max(e);
            c.check(
                close(scaled[i], want, 1e-6),
                format!("scaling by {s:.3} gives slot {} = {} not {want}", i + 1, scaled[i]),
            );
        }
    }
    c.failures.truncate(12);
    c.note(format!(
        "symmetric Y angles {:.4}/{:.4}/{:.4}, Murray {:e}; worst relative change over 200 bifurcations: rigid {rigid_worst:.1e}, scaling {scale_worst:.1e}",
        f[39], f[40], f[41], f[55]
    ));
}

// ---------------------------------------------------------------- criterion 3

fn gaussian_rows(r: &mut rng::Rng, n: usize, scales: &[f64]) -> Vec<Vec<f64>> {
    let normal = rand_distr::StandardNormal;
    (0..n)
        .map(|_| scales.iter().map(|s| s * r.sample::<f64, _>(normal)).collect())
        .collect()
}

fn cubic_roots(m: &[[f64; 3]; 3]) -> [f64; 3] {
    // λ³ − p1 λ² + p2 λ − p3 with the invariants of m
    let p1 = m[0][0] + m[1][1] + m[2][2];
    let p2 = m[0][0] * m[1][1] + m[0][0] * m[2][2] + m[1][1] * m[2][2]
        - m[0][1] * m[1][0]
        - m[0][2] * m[2][0]
        - m[1][2] * m[2][1];
    let p3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let shift = p1 / 3.0;
    let p = p2 - p1 * p1 / 3.0;
    let q = -2.0 * p1.powi(3) / 27.0 + p1 * p2 / 3.0 - p3;
    let mut roots = if p.abs() < 1e-300 {
        [shift; 3]
    } else {
        let a = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * a)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        [0, 1, 2].map(|k| shift + a * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
    };
    // polish on the original polynomial
    for x in &mut roots {
        for _ in 0..3 {
            let f = ((*x - p1) * *x + p2) * *x - p3;
            let df = (3.0 * *x - 2.0 * p1) * *x + p2;
            if df.abs() > 1e-12 {
                *x -= f / df;
            }
        }
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

fn dr_oracles(c: &mut Checks) {
    let mut r = rng::rng_from_seed(31);

    let mut pca_worst = 0.0f64;
    for trial in 0..50 {
        let d = r.random_range(3..=9);
        let n = r.random_range(d + 5..60);
        let k = r.random_range(1..d);
        let scales: Vec<f64> = (0..d).map(|_| r.random_range(0.2..5.0)).collect();
        let mut x = gaussian_rows(&mut r, n, &scales);
        // mix the axes so components are not aligned with them
        let mix: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        x = x
            .iter()
            .map(|row| (0..d).map(|j| (0..d).map(|i| row[i] * mix[i][j]).sum()).collect())
            .collect();
        let m = pca_fit(&x, k).unwrap();
        let mse = x
            .iter()
            .map(|row| {
                let back = m.inverse_transform(&m.transform(row));
                row.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / (n - 1) as f64;
        let mean: Vec<f64> = (0..d)
            .map(|j| x.iter().map(|row| row[j]).sum::<f64>() / n as f64)
            .collect();
        let centered = nalgebra::DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let discarded: f64 = ev[k..].iter().sum();
        let rel = (mse - discarded).abs() / discarded.max(1e-12);
        pca_worst = pca_worst.max(rel);
        c.check(
            rel <= 1e-6,
            format!("PCA trial {trial}: truncation MSE {mse} vs discarded eigenvalues {discarded}"),
        );
    }

    let mut x = gaussian_rows(&mut r, 200, &[1.0, 1.0, 1.0]);
    let mut y = Vec::new();
    for (i, row) in x.iter_mut().enumerate() {
        let a = i < 100;
        row[0] += if a { -4.0 } else { 4.0 };
        row[1] += if a { 1.0 } else { -1.0 };
        y.push(if a { ClassLabel::A } else { ClassLabel::B });
    }
    let lda = lda_fit(&x, &y, 1, 1e-6).unwrap();
    let z: Vec<f64> = x.iter().map(|row| lda.transform(row)[0]).collect();
    let (amax, amin) = (
        z[..100].iter().copied().fold(f64::MIN, f64::max),
        z[..100].iter().copied().fold(f64::MAX, f64::min),
    );
    let (bmax, bmin) = (
        z[100..].iter().copied().fold(f64::MIN, f64::max),
        z[100..].iter().copied().fold(f64::MAX, f64::min),
    );
    let separated = amax < bmin || bmax < amin;
    c.check(separated, "LDA two-blob projection overlaps");

    let n = 90;
    let radius = 10.0;
    let sweep = 1.4 * std::f64::consts::PI;
    let tilt = rotation(&mut r);
    let arc: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = sweep * i as f64 / (n - 1) as f64;
            let p = [radius * t.cos(), radius * t.sin(), 0.0];
            (0..3)
                .map(|a| tilt[a][0] * p[0] + tilt[a][1] * p[1] + tilt[a][2] * p[2])
                .collect()
        })
        .collect();
    let iso = isomap_fit(&arc, 1, 6).unwrap();
    let e0 = iso.embedding_row(0)[0];
    let mut iso_worst = 0.0f64;
    for i in 1..n {
        let s = radius * sweep * i as f64 / (n - 1) as f64;
        let got = (iso.embedding_row(i)[0] - e0).abs();
        iso_worst = iso_worst.max((got - s).abs() / s);
    }
    c.check(
        iso_worst <= 0.02,
        format!("Isomap arc positions off by {:.2}%", 100.0 * iso_worst),
    );

    let mut eig_worst = 0.0f64;
    for _ in 0..500 {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let v = r.random_range(-1.0..1.0);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        let want = cubic_roots(&m);
        let rows: Vec<Vec<f64>> = m.iter().map(|row| row.to_vec()).collect();
        let mut got = jacobi_eigen(&Matrix::from_rows(&rows).unwrap()).unwrap().values;
        got.sort_by(|a, b| b.total_cmp(a));
        for (g, w) in got.iter().zip(want) {
            eig_worst = eig_worst.max((g - w).abs());
        }
    }
    c.check(
        eig_worst <= 1e-10,
        format!("3×3 eigenvalues differ from characteristic-polynomial roots by {eig_worst:e}"),
    );
    c.failures.truncate(12);
    c.note(format!(
        "PCA worst relative error {pca_worst:.1e}; LDA separated {separated}; Isomap arc worst {:.3}%; 3×3 eigen worst {eig_worst:.1e}",
        100.0 * iso_worst
    ));
}

// ---------------------------------------------------------------- criterion 4

fn classifier_oracles(c: &mut Checks) {
    let mut r = rng::rng_from_seed(47);

    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..8 {
        for j in 0..8 {
            x.push(vec![i as f64, j as f64]);
            y.push(if (i < 4) == (j < 4) {
                ClassLabel::A
            } else {
                ClassLabel::B
            });
        }
    }
    let dt = DecisionTree::fit(&DtConfig::default(), &x, &y).unwrap();
    let xor_errors = x.iter().zip(&y).filter(|(row, l)| dt.predict(row) != **l).count();
    c.check(xor_errors == 0, format!("DT misclassifies {xor_errors} XOR points"));

    let xs: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<ClassLabel> = (0..12).map(|i| ClassLabel::from_index(i % 4).unwrap()).collect();
    let mlp = Mlp::init(5, 7, 3);
    let mlp_err = classify::gradient_check(&mlp, &xs, &ys, 1e-5);
    c.check(mlp_err < 1e-4, format!("MLP gradient check {mlp_err:e}"));

    let arch = CaeArchitecture::toy();
    let side = arch.input_side;
    let patches: Vec<Tensor<f64>> = (0..2)
        .map(|_| Tensor::from_vec(1, side, (0..side.pow(3)).map(|_| r.random_range(0.0..1.0)).collect()))
        .collect();
    let cae_err = cae::autoencoder_gradient_check(&arch, &patches, 5, 1e-5).unwrap();
    c.check(cae_err < 1e-4, format!("CAE gradient check {cae_err:e}"));

    let w = [0.7, -1.2, 0.4];
    let mut sx = Vec::new();
    let mut sy = Vec::new();
    while sx.len() < 120 {
        let p: Vec<f64> = (0..3).map(|_| r.random_range(-3.0..3.0)).collect();
        let m: f64 = p.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + 0.3;
        if m.abs() < 0.3 {
            continue;
        }
        sy.push(if m > 0.0 { ClassLabel::C } else { ClassLabel::BN });
        sx.push(p);
    }
    let svm = Svm::fit(
        &SvmConfig {
            kernel: Kernel::Linear,
            ..Default::default()
        },
        &sx,
        &sy,
    )
    .unwrap();
    let svm_errors = sx.iter().zip(&sy).filter(|(p, l)| svm.predict(p) != **l).count();
    c.check(
        svm_errors == 0,
        format!("linear SVM makes {svm_errors} training errors on separable data"),
    );

    let fx: Vec<Vec<f64>> = (0..150)
        .map(|_| (0..4).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let fy: Vec<ClassLabel> = fx
        .iter()
        .map(|p| ClassLabel::from_index(((p[0] + p[1] * p[2] + 6.0) as usize) % 5).unwrap())
        .collect();
    let seed = 99;
    let forest = RandomForest::fit(
        &RfConfig {
            n_trees: 1,
            max_features: MaxFeatures::All,
            ..Default::default()
        },
        &fx,
        &fy,
        seed,
    )
    .unwrap();
    let boot = bootstrap_indices(seed, 0, fx.len());
    let bx: Vec<Vec<f64>> = boot.iter().map(|&i| fx[i].clone()).collect();
    let by: Vec<ClassLabel> = boot.iter().map(|&i| fy[i]).collect();
    let tree = DecisionTree::fit(&DtConfig::default(), &bx, &by).unwrap();
    let probes: Vec<Vec<f64>> = (0..2000)
        .map(|_| (0..4).map(|_| r.random_range(-2.5..2.5)).collect())
        .collect();
    let disagree = probes.iter().filter(|p| forest.predict(p) != tree.predict(p)).count();
    let same_tree = forest.trees[0] == tree.root;
    c.check(
        disagree == 0 && same_tree,
        format!("one-tree forest disagrees with DT on {disagree} of 2000 probes"),
    );
    c.note(format!(
        "XOR errors {xor_errors}; MLP gradient {mlp_err:.1e}; CAE gradient {cae_err:.1e}; SVM errors {svm_errors}; RF(1)≡DT {same_tree}"
    ));
}

// ---------------------------------------------------------------- criteria 5 and 6

struct Corpus {
    _dir: tempfile::TempDir,
    cfg: ExperimentConfig,
    summary: experiment::ExtractSummary,
    geometric: Vec<CvReport>,
    build_time: Duration,
}

fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.output_dir = dir.path().to_path_buf();
        cfg.pipelines = Pipelines::Both;
        cfg.classifiers = vec![classify::Algorithm::DT];
        cfg.validate().unwrap();
        experiment::cmd_phantom(&cfg).unwrap();
        let summary = experiment::cmd_extract(&cfg).unwrap();
        let (_, geo) = experiment::geometric_dataset(&cfg).unwrap();
        let geometric = experiment::evaluate(&cfg, Some(&geo), None).unwrap();
        Corpus {
            _dir: dir,
            cfg,
            summary,
            geometric,
            build_time: start.elapsed(),
        }
    })
}

fn dt_report<'a>(reports: &'a [CvReport], method: &str) -> &'a CvReport {
    let dt = classify::Algorithm::DT.to_string();
    reports
        .iter()
        .find(|r| r.config.dr_method == method && r.config.algorithm == dt)
        .unwrap_or_else(|| panic!("no DT report for {method}"))
}

fn geometric_experiment(c: &mut Checks) {
    let k = corpus();
    let s = &k.summary;
    c.note(format!(
        "{} phantoms: {} BoIs, {} BNs, balanced set {}",
        s.phantoms, s.boi, s.bn, s.balanced
    ));
    let lda = dt_report(&k.geometric, "lda");
    let pca = dt_report(&k.geometric, "pca");
    let iso = dt_report(&k.geometric, "isomap");
    for (name, r) in [("LDA-8", lda), ("PCA-10", pca), ("Isomap-6", iso)] {
        c.note(format!(
            "{name} + DT: accuracy {:.4} ± {:.4}, macro-F1 {:.4} ± {:.4}",
            r.mean_accuracy, r.std_accuracy, r.mean_macro_f1, r.std_macro_f1
        ));
    }
    c.check(
        lda.mean_accuracy >= 0.80,
        format!("LDA-8 + DT accuracy {:.4} < 0.80", lda.mean_accuracy),
    );
    c.check(
        lda.mean_macro_f1 >= 0.78,
        format!("LDA-8 + DT macro-F1 {:.4} < 0.78", lda.mean_macro_f1),
    );
    c.check(
        lda.mean_accuracy > pca.mean_accuracy,
        format!("LDA {:.4} not above PCA {:.4}", lda.mean_accuracy, pca.mean_accuracy),
    );
    c.check(
        pca.mean_accuracy > iso.mean_accuracy,
        format!("PCA {:.4} not above Isomap {:.4}", pca.mean_accuracy, iso.mean_accuracy),
    );
    c.check(
        k.build_time < Duration::from_secs(1800),
        format!("runtime {:?} over 30 min", k.build_time),
    );
    c.note(format!(
        "corpus, extraction and cross-validation took {:.1}s",
        k.build_time.as_secs_f64()
    ));
}

fn tube_patch(side: usize) -> cowlab::volume::Patch3D {
    let mid = (side as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(side.pow(3));
    for z in 0..side {
        for y in 0..side {
            for x in 0..side {
                let _ = x;
                let d2 = (y as f64 - mid).powi(2) + (z as f64 - mid).powi(2);
                data.push((0.1 + 0.8 * (-d2 / 8.0).exp()) as f32);
            }
        }
    }
    cowlab::volume::Patch3D {
        side,
        data,
        source_volume_id: "tube".into(),
        center_voxel: [side / 2; 3],
        label: None,
    }
}

fn autoencoder_analogue(c: &mut Checks) {
    let k = corpus();
    let cfg = &k.cfg;
    let start = Instant::now();
    let model = experiment::cmd_train_cae(cfg).unwrap();
    let (_, latent) = experiment::latent_dataset(cfg, &model).unwrap();
    let trained_on = cfg.cae.train_patches.min(latent.len());
    let epochs = model.loss_log.len();
    c.check(
        trained_on >= 500,
        format!("autoencoder trained on {trained_on} patches"),
    );
    c.check(epochs <= 50, format!("autoencoder trained for {epochs} epochs"));
    let reports = experiment::evaluate(cfg, None, Some(&latent)).unwrap();
    let cae_dt = dt_report(&reports, "cae");
    let geo_dt = dt_report(&k.geometric, "lda");
    c.note(format!(
        "{trained_on} patches, {epochs} epochs, final MSE {:.5}; CAE + DT accuracy {:.4}, macro-F1 {:.4}; LDA-8 + DT accuracy {:.4}",
        model.loss_log.last().copied().unwrap_or(f64::NAN),
        cae_dt.mean_accuracy,
        cae_dt.mean_macro_f1,
        geo_dt.mean_accuracy
    ));
    c.check(
        cae_dt.mean_accuracy >= 0.70,
        format!("CAE + DT accuracy {:.4} < 0.70", cae_dt.mean_accuracy),
    );
    c.check(
        geo_dt.mean_accuracy >= cae_dt.mean_accuracy,
        format!(
            "geometric DT {:.4} below CAE DT {:.4}",
            geo_dt.mean_accuracy, cae_dt.mean_accuracy
        ),
    );

    let patch = tube_patch(cfg.cae.architecture.input_side);
    let overfit = cae::train(
        &cfg.cae.architecture,
        std::slice::from_ref(&patch),
        &TrainConfig {
            epochs: 500,
            batch: 1,
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let mse = overfit.reconstruction_mse(&patch).unwrap();
    c.check(mse < 1e-3, format!("single-patch overfit MSE {mse:e}"));
    c.note(format!(
        "single-patch overfit MSE {mse:.2e}; {:.1}s",
        start.elapsed().as_secs_f64()
    ));
}

// ---------------------------------------------------------------- criterion 7

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

struct RowEcho;

impl Predictor for RowEcho {
    fn predict(&self, x: &[f64]) -> cowlab::Result<ClassLabel> {
        Ok(ClassLabel::from_index((x[0] as usize * 7) % 14).unwrap())
    }
}

fn protocol_identities(c: &mut Checks) {
    let mut r = rng::rng_from_seed(71);

    let mut strat_trials = 0;
    for trial in 0..60 {
        let n = r.random_range(20..300);
        let k = r.random_range(2..=10);
        let y: Vec<ClassLabel> = (0..n)
            .map(|_| ClassLabel::from_index(r.random_range(0..14)).unwrap())
            .collect();
        let plan = eval::stratified_folds(&y, k, trial).unwrap();
        let mut seen = vec![0usize; n];
        for f in &plan.folds {
            f.iter().for_each(|&i| seen[i] += 1);
        }
        c.check(
            seen.iter().all(|&s| s == 1),
            format!("trial {trial}: folds do not partition the rows"),
        );
        for cl in ClassLabel::ALL {
            let per: Vec<usize> = plan
                .folds
                .iter()
                .map(|f| f.iter().filter(|&&i| y[i] == cl).count())
                .collect();
            let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
            c.check(hi - lo <= 1, format!("trial {trial}: class {cl} spread {per:?}"));
        }
        strat_trials += 1;
    }

    let n = 240;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, r.random_range(-1.0..1.0)]).collect();
    let y: Vec<ClassLabel> = (0..n).map(|i| ClassLabel::from_index(i % 14).unwrap()).collect();
    let data = LabeledDataset::new(x, y.clone(), FeatureProvenance::Geometric).unwrap();
    let plan = eval::stratified_folds(&y, 10, 5).unwrap();
    let leaks = std::sync::Mutex::new(Vec::new());
    let fingerprint = ConfigFingerprint {
        algorithm: classify::Algorithm::DT.to_string(),
        dr_method: "audit".into(),
        n_components: 0,
        provenance: FeatureProvenance::Geometric,
        seed: 0,
    };
    let report = eval::cross_validate_with(fingerprint, &data, &plan, |f, train| {
        let rows: Vec<usize> = train.x.iter().map(|row| row[0] as usize).collect();
        let expected = plan.train_indices(f);
        if rows != expected || rows.iter().any(|i| plan.folds[f].contains(i)) {
            leaks.lock().unwrap().push(f);
        }
        Ok(RowEcho)
    })
    .unwrap();
    let leaks = leaks.into_inner().unwrap();
    c.check(
        leaks.is_empty(),
        format!("folds {leaks:?} saw test rows or missed training rows"),
    );

    let cm = &report.confusion;
    let mut truth = [0u64; 14];
    let mut predicted = [0u64; 14];
    let mut correct = 0u64;
    for (i, &l) in y.iter().enumerate() {
        let p = RowEcho.predict(&[i as f64]).unwrap();
        truth[l.index()] += 1;
        predicted[p.index()] += 1;
        correct += (p == l) as u64;
    }
    c.check(cm.total() == n as u64, "confusion total differs from sample count");
    for cl in ClassLabel::ALL {
        c.check(
            cm.support(cl) == truth[cl.index()],
            format!("row sum of {cl} differs from its support"),
        );
        c.check(
            cm.predicted(cl) == predicted[cl.index()],
            format!("column sum of {cl} differs from its predictions"),
        );
    }
    let acc = correct as f64 / n as f64;
    c.check(
        (cm.accuracy() - acc).abs() < 1e-15,
        "trace / total differs from accuracy",
    );
    c.check(
        (report.pooled_micro_f1 - acc).abs() < 1e-15,
        "micro-F1 differs from accuracy",
    );
    let mut f1_sum = 0.0;
    let mut classes = 0;
    for cl in ClassLabel::ALL {
        let tp = cm.counts[cl.index()][cl.index()] as f64;
        let (sup, pred) = (truth[cl.index()] as f64, predicted[cl.index()] as f64);
        if sup == 0.0 {
            continue;
        }
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (sup + pred) };
        f1_sum += f1;
        classes += 1;
    }
    let macro_f1 = f1_sum / classes as f64;
    c.check(
        (report.pooled_macro_f1 - macro_f1).abs() < 1e-12,
        "pooled macro-F1 disagrees with its definition",
    );
    let weighted: f64 = report
        .fold_accuracy
        .iter()
        .zip(&plan.folds)
        .map(|(a, f)| a * f.len() as f64)
        .sum::<f64>()
        / n as f64;
    c.check(
        (weighted - report.pooled_accuracy).abs() < 1e-12,
        "fold accuracies do not pool to the pooled accuracy",
    );

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut trees = Vec::new();
    for d in &dirs {
        let mut cfg = ExperimentConfig::default();
        cfg.output_dir = d.path().to_path_buf();
        cfg.phantoms.count = 4;
        cfg.pipelines = Pipelines::Geometric;
        cfg.classifiers = vec![
            classify::Algorithm::DT,
            classify::Algorithm::NB,
            classify::Algorithm::RF,
        ];
        cfg.dr = vec![
            DrSpec::with_defaults(DrMethod::Lda),
            DrSpec::with_defaults(DrMethod::Isomap),
        ];
        cfg.cv.folds = 3;
        experiment::cmd_phantom(&cfg).unwrap();
        experiment::cmd_extract(&cfg).unwrap();
        experiment::cmd_run(&cfg).unwrap();
        // a rerun in place is verified against the manifest
        if let Err(e) = experiment::cmd_run(&cfg) {
            c.check(false, format!("rerun in place: {e}"));
        }
        let mut files = files_under(d.path());
        files.remove(Path::new(experiment::MANIFEST_FILE));
        trees.push(files);
    }
    let differing: Vec<&PathBuf> = trees[0]
        .iter()
        .filter(|(p, bytes)| trees[1].get(*p) != Some(bytes))
        .map(|(p, _)| p)
        .collect();
    c.check(trees[0].len() == trees[1].len(), "reruns wrote different file sets");
    c.check(differing.is_empty(), format!("reruns differ in {differing:?}"));
    c.failures.truncate(12);
    c.note(format!(
        "{strat_trials} stratification trials; leakage audit over {} folds; {} artifacts byte-identical across reruns",
        plan.k,
        trees[0].len()
    ));
}
