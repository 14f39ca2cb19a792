//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use usc_core::evaluation::{evaluate, nds, FrameRecord, MetricsReport, ProtocolConfig, TpMeasure};
use usc_core::geometry::{iogt3d, iou3d, project_bev, BevPolygon, Box3D, Point2, Point3, Rect2D};
use usc_core::io::{
    dataset_to_string, generate_synthetic, parse_dataset, parse_report, report_to_json,
    save_dataset, SyntheticSpec,
};
use usc_core::loss::{iogt_loss, safety_loss, smooth_l1, LossConfig};
use usc_core::usc::{adr, iogt_pv, pv_constraint, usc_score, DEFAULT_FOCAL};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Monte-Carlo volume oracle

/// Maps points from `g`'s local frame into `p`'s local frame.
struct LocalMap {
    a: [[f64; 2]; 2],
    b: [f64; 2],
    dy: f64,
}

fn yaw_basis(b: &Box3D) -> (f64, f64) {
    (b.yaw().cos(), b.yaw().sin())
}

impl LocalMap {
    fn new(p: &Box3D, g: &Box3D) -> Self {
        // world = c + R(yaw) * local, R = [[c, s], [-s, c]] over (x, z)
        let (cg, sg) = yaw_basis(g);
        let (cp, sp) = yaw_basis(p);
        let rg = [[cg, sg], [-sg, cg]];
        // inverse of R(yaw_p) is its transpose
        let rp_t = [[cp, -sp], [sp, cp]];
        let mut a = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                a[i][j] = rp_t[i][0] * rg[0][j] + rp_t[i][1] * rg[1][j];
            }
        }
        let (gc, pc) = (g.center(), p.center());
        let d = [gc.x - pc.x, gc.z - pc.z];
        let b = [
            rp_t[0][0] * d[0] + rp_t[0][1] * d[1],
            rp_t[1][0] * d[0] + rp_t[1][1] * d[1],
        ];
        Self {
            a,
            b,
            dy: gc.y - pc.y,
        }
    }
}

/// Fraction of `g`'s volume inside `p`, estimated from uniform samples.
fn mc_iogt(p: &Box3D, g: &Box3D, samples: usize, seed: u64) -> f64 {
    let m = LocalMap::new(p, g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gl, gh, gw) = (g.length(), g.height(), g.width());
    let (hl, hh, hw) = (p.length() / 2.0, p.height() / 2.0, p.width() / 2.0);
    let mut inside = 0usize;
    for _ in 0..samples {
        let x = (rng.random::<f64>() - 0.5) * gl;
        let y = (rng.random::<f64>() - 0.5) * gh;
        let z = (rng.random::<f64>() - 0.5) * gw;
        let px = m.a[0][0] * x + m.a[0][1] * z + m.b[0];
        let pz = m.a[1][0] * x + m.a[1][1] * z + m.b[1];
        let py = y + m.dy;
        if px.abs() <= hl && py.abs() <= hh && pz.abs() <= hw {
            inside += 1;
        }
    }
    inside as f64 / samples as f64
}

fn mc_iou(p: &Box3D, g: &Box3D, samples: usize, seed: u64) -> (f64, f64) {
    let frac = mc_iogt(p, g, samples, seed);
    let inter = frac * g.volume();
    (inter / (p.volume() + g.volume() - inter), frac)
}

fn random_frontal_box(rng: &mut ChaCha8Rng) -> Box3D {
    loop {
        let range = rng.random_range(3.0..20.0);
        let az = rng.random_range(-0.7..0.7f64);
        let b = Box3D::new(
            Point3::new(
                range * az.sin(),
                rng.random_range(-0.5..0.5),
                range * az.cos(),
            ),
            rng.random_range(0.5..5.0),
            rng.random_range(0.5..2.5),
            rng.random_range(0.5..5.0),
            rng.random_range(-PI..PI),
        )
        .unwrap();
        if project_bev(&b).vertices().iter().all(|v| v.y > 0.5) {
            return b;
        }
    }
}

fn perturbed(rng: &mut ChaCha8Rng, g: &Box3D) -> Box3D {
    let c = g.center();
    Box3D::new(
        Point3::new(
            c.x + rng.random_range(-1.5..1.5),
            c.y + rng.random_range(-0.5..0.5),
            c.z + rng.random_range(-1.5..1.5),
        ),
        g.length() * rng.random_range(0.6..1.6),
        g.height() * rng.random_range(0.6..1.6),
        g.width() * rng.random_range(0.6..1.6),
        g.yaw() + rng.random_range(-0.8..0.8),
    )
    .unwrap()
}

fn criterion_1() -> Outcome {
    const PAIRS: usize = 1000;
    const SAMPLES: usize = 1_000_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(Box3D, Box3D)> = (0..PAIRS)
        .map(|_| {
            let g = random_frontal_box(&mut rng);
            (perturbed(&mut rng, &g), g)
        })
        .collect();
    let errors: Vec<(f64, f64)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (p, g))| {
            let (iou, iogt) = mc_iou(p, g, SAMPLES, 1000 + i as u64);
            ((iou3d(p, g) - iou).abs(), (iogt3d(p, g) - iogt).abs())
        })
        .collect();
    let elapsed = start.elapsed();
    let max_iou = errors.iter().map(|e| e.0).fold(0.0, f64::max);
    let max_iogt = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let overlapping = pairs.iter().filter(|(p, g)| iou3d(p, g) > 0.0).count();
    check(
        max_iou <= 0.01 && max_iogt <= 0.01 && elapsed < Duration::from_secs(60),
        format!(
            "{PAIRS} pairs ({overlapping} overlapping) x {SAMPLES} samples: max |dIoU| = {max_iou:.2e}, \
             max |dIoGT| = {max_iogt:.2e} (tol 1e-2), {:.1} s (limit 60 s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------

fn random_rect(rng: &mut ChaCha8Rng) -> Rect2D {
    let u = rng.random_range(-1.0..1.0);
    let v = rng.random_range(-1.0..1.0);
    Rect2D::new(
        u,
        v,
        u + rng.random_range(0.01..1.0),
        v + rng.random_range(0.01..1.0),
    )
    .unwrap()
}

fn margin(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..3) {
        0 => 0.0,
        1 => rng.random_range(0.01..0.5),
        _ => -rng.random_range(0.01..0.5),
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counterexamples = 0;
    let mut contained = 0;
    const N: usize = 20_000;
    for i in 0..N {
        let g = random_rect(&mut rng);
        let p = if i % 2 == 0 {
            random_rect(&mut rng)
        } else {
            let (a, b, c, d) = (
                margin(&mut rng),
                margin(&mut rng),
                margin(&mut rng),
                margin(&mut rng),
            );
            match Rect2D::new(g.min_u - a, g.min_v - b, g.max_u + c, g.max_v + d) {
                Ok(r) => r,
                Err(_) => continue,
            }
        };
        let law = pv_constraint(&p, &g);
        let full = (iogt_pv(&p, &g).unwrap() - 1.0).abs() <= 1e-12;
        contained += law as usize;
        if law != full {
            counterexamples += 1;
        }
    }
    check(
        counterexamples == 0,
        format!("{N} pairs ({contained} enclosing): {counterexamples} counterexamples"),
    )
}

// ---------------------------------------------------------------------------

// Independent scan: plain strict comparisons over the four vertices.
fn scan_representatives(poly: &BevPolygon) -> [Point2; 3] {
    let vs = poly.vertices();
    let norm = |v: &Point2| (v.x * v.x + v.y * v.y).sqrt();
    let az = |v: &Point2| v.x.atan2(v.y);
    let mut closest = vs[0];
    let mut right = vs[0];
    let mut left = vs[0];
    for v in vs {
        if norm(v) < norm(&closest) {
            closest = *v;
        }
        if az(v) > az(&right) {
            right = *v;
        }
        if az(v) < az(&left) {
            left = *v;
        }
    }
    [closest, right, left]
}

fn adr_oracle(p: &BevPolygon, g: &BevPolygon) -> f64 {
    let (rp, rg) = (scan_representatives(p), scan_representatives(g));
    let mut prod = 1.0;
    for i in 0..3 {
        let dp = (rp[i].x.powi(2) + rp[i].y.powi(2)).sqrt();
        let dg = (rg[i].x.powi(2) + rg[i].y.powi(2)).sqrt();
        prod *= if dp <= dg { 1.0 } else { dg / dp };
    }
    prod.powf(1.0 / 3.0)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    const N: usize = 10_000;
    let mut max_err: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..N {
        let g = random_frontal_box(&mut rng);
        let p = perturbed(&mut rng, &g);
        let (pb, gb) = (project_bev(&p), project_bev(&g));
        if pb.vertices().iter().any(|v| v.y <= 0.1) {
            continue;
        }
        max_err = max_err.max((adr(&pb, &gb).unwrap() - adr_oracle(&pb, &gb)).abs());
        let mut prev = f64::INFINITY;
        for step in 0..20 {
            let k = 1.0 + 0.1 * step as f64;
            let a = adr(&pb.scaled_about_origin(k), &gb).unwrap();
            if a > prev + 1e-12 {
                violations += 1;
            }
            prev = a;
        }
    }
    check(
        max_err <= 1e-9 && violations == 0,
        format!("{N} pairs: max |ADR - scan oracle| = {max_err:.2e} (tol 1e-9), {violations} monotonicity violations on a 20-point k-grid"),
    )
}

// ---------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let g = Box3D::new(Point3::new(0.0, 0.0, 10.0), 1.8, 1.6, 4.5, 0.0).unwrap();
    let near = g.with_center(Point3::new(0.0, 0.0, 8.4));
    let far = g.with_center(Point3::new(0.0, 0.0, 11.6));
    let te = |p: &Box3D| {
        let (a, b) = (p.center(), g.center());
        (a.x - b.x).hypot(a.z - b.z)
    };
    let (iou_n, iou_f) = (iou3d(&near, &g), iou3d(&far, &g));
    let sn = usc_score(&near, &g, DEFAULT_FOCAL).unwrap();
    let sf = usc_score(&far, &g, DEFAULT_FOCAL).unwrap();
    let (mc_n, _) = mc_iou(&near, &g, 1_000_000, 41);
    let (mc_f, _) = mc_iou(&far, &g, 1_000_000, 42);
    let gap = sn.usc - sf.usc;
    check(
        (iou_n - iou_f).abs() <= 0.02
            && (te(&near) - te(&far)).abs() <= 0.02
            && gap >= 0.15
            && sn.verdict
            && !sf.verdict
            && (iou_n - mc_n).abs() <= 0.01
            && (iou_f - mc_f).abs() <= 0.01,
        format!(
            "IoU {iou_n:.4} vs {iou_f:.4} (MC {mc_n:.4} / {mc_f:.4}), TE {:.2} vs {:.2} m, \
             USC covering {:.4} vs short {:.4}, gap {gap:.4} (min 0.15), verdicts {} / {}",
            te(&near),
            te(&far),
            sn.usc,
            sf.usc,
            sn.verdict,
            sf.verdict
        ),
    )
}

// ---------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec {
        frames: 100,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let frames = generate_synthetic(&spec).unwrap();
    let report = evaluate(&frames, &ProtocolConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let mut classes = std::collections::BTreeSet::new();
    let mut ok = report.buckets.len() == 2;
    let mut all = vec![report.overall];
    for b in &report.buckets {
        all.push(b.summary);
        classes.extend(b.classes.keys().cloned());
        ok &= b.tp_errors.values().all(|e| *e == Some(0.0));
        ok &= b
            .classes
            .values()
            .all(|c| c.tp_errors.values().all(|e| *e == Some(0.0)));
    }
    for s in &all {
        ok &= [s.mean_ap, s.nds, s.mausc, s.usc_nds]
            .iter()
            .all(|v| *v == Some(1.0));
    }
    check(
        ok && classes.len() == 3 && elapsed < Duration::from_secs(10),
        format!(
            "100 frames, {} buckets, classes {:?}: mAP = NDS = mAUSC = USC-NDS = 1 exactly: {ok}, {:.2} s (limit 10 s)",
            report.buckets.len(),
            classes,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------

fn overall_tp(report: &MetricsReport, m: TpMeasure) -> f64 {
    let vals: Vec<f64> = report
        .buckets
        .iter()
        .filter_map(|b| b.tp_errors.get(&m).copied().flatten())
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn criterion_6() -> Outcome {
    let spec = |bias| SyntheticSpec {
        frames: 200,
        seed: 6,
        depth_bias: bias,
        ..SyntheticSpec::default()
    };
    let cfg = ProtocolConfig::default();
    let over = evaluate(&generate_synthetic(&spec(0.5)).unwrap(), &cfg).unwrap();
    let under = evaluate(&generate_synthetic(&spec(-0.5)).unwrap(), &cfg).unwrap();
    let (ate_o, ate_u) = (
        overall_tp(&over, TpMeasure::Translation),
        overall_tp(&under, TpMeasure::Translation),
    );
    let rel = (ate_o - ate_u).abs() / ate_u;
    let (m_o, m_u) = (over.overall.mausc.unwrap(), under.overall.mausc.unwrap());
    check(
        rel <= 0.01 && m_u - m_o >= 0.05,
        format!(
            "ATE +0.5 m {ate_o:.6} vs -0.5 m {ate_u:.6} (rel diff {rel:.2e}, tol 1e-2); \
             mAUSC +0.5 m {m_o:.4} vs -0.5 m {m_u:.4} (gap {:.4}, min 0.05)",
            m_u - m_o
        ),
    )
}

// ---------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let saturated = nds(0.5, &[1.0; 5]);
    let beyond = nds(0.5, &[3.0, 1.0, 7.0, 1.5, 2.0]);
    let perfect3 = nds(1.0, &[0.0; 3]);
    check(
        saturated == 0.25 && beyond == 0.25 && perfect3 == 1.0,
        format!("NDS(mAP 0.5, errors saturated) = {saturated} (beyond 1: {beyond}), k = 3 perfect = {perfect3}"),
    )
}

// ---------------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let cfg = LossConfig::default();
    let g = Box3D::new(Point3::new(0.0, 0.0, 5.0), 1.0, 1.0, 1.0, 0.0).unwrap();
    let p = Box3D::new(
        Point3::new(0.0, 0.0, 5.5),
        1.0,
        1.0 + 0.15f64.sqrt(),
        1.0,
        0.0,
    )
    .unwrap();
    let (s, i) = (
        smooth_l1(&p, &g, cfg.smooth_l1_beta, cfg.wrap_yaw),
        iogt_loss(&p, &g),
    );
    let loss = safety_loss(&p, &g, &cfg);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut nonzero = 0;
    for k in 0..100 {
        let g = random_frontal_box(&mut rng);
        let p = if k % 2 == 0 {
            g.scaled(rng.random_range(1.0..2.0)).unwrap()
        } else {
            // axis-aligned box around the rotated footprint, shifted within its slack
            let vs = project_bev(&g).vertices().to_vec();
            let (min_x, max_x) = vs
                .iter()
                .fold((f64::MAX, f64::MIN), |a, v| (a.0.min(v.x), a.1.max(v.x)));
            let (min_z, max_z) = vs
                .iter()
                .fold((f64::MAX, f64::MIN), |a, v| (a.0.min(v.y), a.1.max(v.y)));
            let slack = rng.random_range(0.0..0.5);
            let shift = rng.random_range(-slack / 2.0..=slack / 2.0);
            let c = g.center();
            Box3D::new(
                Point3::new(
                    (min_x + max_x) / 2.0 + shift,
                    c.y,
                    (min_z + max_z) / 2.0 - shift,
                ),
                max_x - min_x + slack,
                g.height() + slack,
                max_z - min_z + slack,
                0.0,
            )
            .unwrap()
        };
        if iogt_loss(&p, &g) != 0.0 {
            nonzero += 1;
        }
    }
    check(
        cfg.lambda == 0.8 && (s - 0.2).abs() <= 1e-12 && (i - 0.5).abs() <= 1e-12 && (loss - 0.26).abs() <= 1e-12 && nonzero == 0,
        format!(
            "lambda {}, smooth_l1 {s:.15}, iogt_loss {i:.15}, safety_loss {loss:.15} (target 0.26, tol 1e-12); \
             {nonzero} of 100 containment pairs with nonzero iogt_loss",
            cfg.lambda
        ),
    )
}

// ---------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let family = [(-0.6, 0.4), (-0.3, 0.1), (0.0, 0.3), (0.3, 0.0), (0.6, 0.2)];
    let mut outcomes = serde_json::Map::new();
    let mut paths = Vec::new();
    for (i, (bias, miss)) in family.into_iter().enumerate() {
        let frames = generate_synthetic(&SyntheticSpec {
            frames: 60,
            seed: 9,
            depth_bias: bias,
            miss_rate: miss,
            lateral_noise: 0.1,
            fp_rate: 0.1,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let report = evaluate(&frames, &ProtocolConfig::default()).unwrap();
        let path = dir.path().join(format!("det{i}.json"));
        std::fs::write(&path, report_to_json(&report)).unwrap();
        outcomes.insert(
            format!("det{i}"),
            (0.5 - 0.4 * report.overall.mausc.unwrap()).into(),
        );
        paths.push(path);
    }
    let outcomes_path = dir.path().join("outcomes.json");
    std::fs::write(&outcomes_path, serde_json::to_string(&outcomes).unwrap()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_usc"))
        .arg("corr")
        .arg("--outcomes")
        .arg(&outcomes_path)
        .arg("--reports")
        .args(&paths)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    let values: BTreeMap<String, f64> = text
        .lines()
        .filter_map(|l| {
            let (name, v) = l.split_once("|r| =")?;
            Some((name.trim().to_string(), v.trim().parse().ok()?))
        })
        .collect();
    let mausc = values.get("mAUSC").copied().unwrap_or(f64::NAN);
    let others_finite = ["mAP", "NDS", "USC-NDS"]
        .iter()
        .all(|k| values.get(*k).is_some_and(|v| v.is_finite()));
    check(
        out.status.success() && (mausc - 1.0).abs() <= 1e-6 && others_finite,
        format!("exit {:?}, |r| = {values:?}", out.status.code()),
    )
}

// ---------------------------------------------------------------------------

fn criterion_10() -> Outcome {
    let spec = SyntheticSpec {
        frames: 80,
        seed: 10,
        depth_bias: 0.3,
        lateral_noise: 0.3,
        size_noise: 0.1,
        yaw_noise: 0.2,
        miss_rate: 0.15,
        fp_rate: 0.25,
        ..SyntheticSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    save_dataset(&generate_synthetic(&spec).unwrap(), &a).unwrap();
    save_dataset(&generate_synthetic(&spec).unwrap(), &b).unwrap();
    let identical = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let frames = generate_synthetic(&spec).unwrap();
    let text = dataset_to_string(&frames);
    let reloaded = parse_dataset(&text).unwrap();
    let dataset_rt = reloaded == frames && dataset_to_string(&reloaded) == text;

    let cfg = ProtocolConfig::default();
    let report = evaluate(&frames, &cfg).unwrap();
    let json = report_to_json(&report);
    let report_rt = parse_report(&json).unwrap() == report;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut permutation_ok = true;
    for _ in 0..5 {
        let mut shuffled: Vec<FrameRecord> = frames.clone();
        shuffled.shuffle(&mut rng);
        permutation_ok &= report_to_json(&evaluate(&shuffled, &cfg).unwrap()) == json;
    }
    check(
        identical && dataset_rt && report_rt && permutation_ok,
        format!(
            "byte-identical seeds: {identical}, dataset round-trip: {dataset_rt}, \
             report round-trip: {report_rt}, 5 frame permutations unchanged: {permutation_ok}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("geometric oracle equivalence", criterion_1),
        ("PV equivalence law", criterion_2),
        ("ADR closed form", criterion_3),
        ("coverage discrimination scene", criterion_4),
        ("protocol identity", criterion_5),
        ("bias-direction sensitivity", criterion_6),
        ("NDS arithmetic", criterion_7),
        ("loss blend", criterion_8),
        ("correlation utility", criterion_9),
        ("determinism and round-trip", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
