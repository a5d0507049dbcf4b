//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Tolerances are pinned below.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uwb_slam::aoa::{deadzone_radius, deadzone_radius_for, AnchorRingConfig};
use uwb_slam::dbscan::{dbscan, Clustering};
use uwb_slam::driver::{Driver, Mode, SYMMETRY_TOLERANCE};
use uwb_slam::ekf::{
    inverse_observation, motion_jacobian, observation_model, LandmarkKind, MotionNoise, ObservationNoise, RangeBearingObs,
    SlamState,
};
use uwb_slam::eval::MetricsReport;
use uwb_slam::geometry::{circular_mean_std, wrap, MotionIncrement, Pose2D};
use uwb_slam::harness::{run_scenario, RunOptions, RunResult};
use uwb_slam::log::Record;
use uwb_slam::radar::SavitzkyGolay;
use uwb_slam::scenario::Scenario;
use uwb_slam::sim::script::ScriptStep;

const ZERO_NOISE_TOL: f64 = 0.01;
const ZERO_NOISE_BUDGET: Duration = Duration::from_secs(10);
const ODOM_ONLY_FLOOR: f64 = 0.5;
const DRIFT_RATIO: f64 = 0.3;
const U_PATH_BUDGET: Duration = Duration::from_secs(60);
const U_PATH_SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
const ABLATION_SEED: u64 = 2;
const MISINIT_TAG: u32 = 1;
const MISINIT_ERROR: f64 = 0.5;
const LOOP_FAILURE_FACTOR: f64 = 3.0;
const SG_TOL: f64 = 1e-9;
const CIRC_TOL: f64 = 1e-9;
const DEADZONE_TOL: f64 = 1e-6;
const JACOBIAN_REL_TOL: f64 = 1e-5;
const LSQ_TOL: f64 = 1e-3;
const MIN_AUDITED_STEPS: usize = 1000;
const GHOST_REJECTION: f64 = 0.95;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", name].iter().collect();
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn zero_noise_identity() -> Outcome {
    let sc = scenario("zero_noise.toml");
    let (run, elapsed) = timed(|| run_scenario(&sc, &RunOptions::new(Mode::Full, sc.sim.seed)).unwrap());
    let report = run.report().unwrap();
    let points = report.landmark_errors.iter().filter(|e| e.kind == LandmarkKind::Point).count();
    let worst = report.landmark_errors.iter().map(|e| e.error).fold(0.0, f64::max);
    let spurious = report.landmark_errors.iter().any(|e| e.spurious);
    Outcome {
        name: "zero-noise identity",
        pass: report.rms_ate <= ZERO_NOISE_TOL
            && points >= sc.world.features.len()
            && !spurious
            && worst <= ZERO_NOISE_TOL
            && elapsed < ZERO_NOISE_BUDGET,
        detail: format!(
            "rms_ate {:.2e} m, {} landmarks ({points} point), worst error {worst:.2e} m, {:.2} s",
            report.rms_ate,
            report.landmark_errors.len(),
            elapsed.as_secs_f64()
        ),
    }
}

struct UPathRuns {
    full: Vec<(RunResult, Duration)>,
    odom: Vec<(RunResult, Duration)>,
    radar_only: MetricsReport,
    aoa_only: MetricsReport,
}

fn u_path_runs() -> UPathRuns {
    let sc = scenario("u_path.toml");
    let run = |mode, seed, audit| {
        let opts = RunOptions {
            audit,
            ..RunOptions::new(mode, seed)
        };
        timed(|| run_scenario(&sc, &opts).unwrap())
    };
    let full: Vec<_> = U_PATH_SEEDS.map(|s| run(Mode::Full, s, true)).collect();
    let odom: Vec<_> = U_PATH_SEEDS.map(|s| run(Mode::OdomOnly, s, false)).collect();
    UPathRuns {
        radar_only: run(Mode::RadarOnly, ABLATION_SEED, false).0.report().unwrap(),
        aoa_only: run(Mode::AoaOnly, ABLATION_SEED, false).0.report().unwrap(),
        full,
        odom,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn drift_correction(runs: &UPathRuns) -> Outcome {
    let full: Vec<f64> = runs.full.iter().map(|(r, _)| r.report().unwrap().rms_ate).collect();
    let odom: Vec<f64> = runs.odom.iter().map(|(r, _)| r.report().unwrap().rms_ate).collect();
    let ratios: Vec<f64> = full.iter().zip(&odom).map(|(f, o)| f / o).collect();
    let slowest = runs.full.iter().chain(&runs.odom).map(|(_, d)| *d).max().unwrap();
    let min_odom = odom.iter().copied().fold(f64::INFINITY, f64::min);
    let med = median(ratios);
    Outcome {
        name: "drift correction",
        pass: min_odom >= ODOM_ONLY_FLOOR && med <= DRIFT_RATIO && slowest < U_PATH_BUDGET,
        detail: format!(
            "median full/odom_only {med:.3} over {} seeds, median full {:.3} m, min odom_only {min_odom:.3} m, slowest run {:.1} s",
            full.len(),
            median(full.clone()),
            slowest.as_secs_f64()
        ),
    }
}

fn ablation(runs: &UPathRuns) -> Outcome {
    let full = runs
        .full
        .iter()
        .find(|(r, _)| r.seed == ABLATION_SEED)
        .map(|(r, _)| r.report().unwrap())
        .unwrap();
    let tag = runs.aoa_only.tag_error(MISINIT_TAG).unwrap_or(f64::NAN);
    let ratio = runs.radar_only.final_pose_error / full.final_pose_error;
    Outcome {
        name: "ablation",
        pass: tag > MISINIT_ERROR && ratio > LOOP_FAILURE_FACTOR,
        detail: format!(
            "seed {ABLATION_SEED}: aoa_only tag {MISINIT_TAG} error {tag:.3} m; radar_only final pose error {:.3} m vs full {:.3} m ({ratio:.1}x)",
            runs.radar_only.final_pose_error, full.final_pose_error
        ),
    }
}

fn invariants(runs: &UPathRuns) -> Outcome {
    let mut failures = Vec::new();
    let mut steps = usize::MAX;
    let mut updates = 0;
    let mut halt_rejections = 0;
    let mut buffered = 0;
    for (r, _) in &runs.full {
        let a = &r.audit;
        steps = steps.min(a.steps);
        updates += a.updates;
        halt_rejections += a.halt_rejections;
        buffered += a.buffered;
        let clean = a.max_asymmetry <= SYMMETRY_TOLERANCE
            && a.psd_violations == 0
            && a.trace_violations == 0
            && a.order_violations == 0
            && a.gate_violations == 0
            && a.halt_violations == 0
            // Each deployment halts the robot, and every halt must see rejections.
            && (r.halt_ticks == 0 || a.halt_rejections > 0)
            && a.steps >= MIN_AUDITED_STEPS;
        if !clean {
            failures.push(format!("seed {}: {a:?}", r.seed));
        }
    }
    Outcome {
        name: "invariants",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "{} audited runs, >= {steps} steps each, {updates} updates, {buffered} buffered tag samples, {halt_rejections} halt rejections",
                runs.full.len()
            )
        } else {
            failures.join("; ")
        },
    }
}

fn ghost_rejection(runs: &UPathRuns) -> Outcome {
    let mut worst = f64::INFINITY;
    let (mut injected, mut accepted) = (0, 0);
    for (r, _) in &runs.full {
        injected += r.ghosts_injected;
        accepted += r.ghosts_accepted;
        // A seed without ghosts cannot demonstrate rejection.
        let rate = if r.ghosts_injected == 0 {
            0.0
        } else {
            1.0 - r.ghosts_accepted as f64 / r.ghosts_injected as f64
        };
        worst = worst.min(rate);
    }
    Outcome {
        name: "ghost rejection",
        pass: worst >= GHOST_REJECTION,
        detail: format!(
            "{accepted} of {injected} ghost readings accepted over {} seeds, worst per-seed rejection {:.2}%",
            runs.full.len(),
            worst * 100.0
        ),
    }
}

fn short_noisy_scenario() -> Scenario {
    let mut sc = scenario("u_path.toml");
    sc.script.steps = vec![ScriptStep::Goto {
        x: 5.0,
        y: 0.0,
        speed: 0.2,
    }];
    sc
}

fn determinism() -> Outcome {
    let sc = short_noisy_scenario();
    let opts = RunOptions {
        record_log: true,
        ..RunOptions::new(Mode::Full, 7)
    };
    let a = run_scenario(&sc, &opts).unwrap();
    let b = run_scenario(&sc, &opts).unwrap();
    let log_a = a.log.as_ref().unwrap().to_jsonl_string();
    let log_b = b.log.as_ref().unwrap().to_jsonl_string();
    let identical = log_a.as_bytes() == log_b.as_bytes();

    let (_, records) = Driver::replay(a.log.as_ref().unwrap(), sc.driver.clone(), Mode::Full).unwrap();
    let replayed = records.iter().rev().find_map(|r| match r {
        Record::Snapshot(s) => Some(serde_json::to_string(s).unwrap()),
        _ => None,
    });
    let live = a.final_snapshot.as_ref().map(|s| serde_json::to_string(s).unwrap());
    let same_final = live.is_some() && replayed == live;
    Outcome {
        name: "determinism",
        pass: identical && same_final,
        detail: format!(
            "logs {} ({} bytes), replayed final snapshot {} (step {})",
            if identical { "byte-identical" } else { "differ" },
            log_a.len(),
            if same_final { "bit-identical" } else { "differs" },
            a.final_snapshot.as_ref().map_or(0, |s| s.step)
        ),
    }
}

// Oracles.

/// Textbook O(n²) DBSCAN: clusters grow from core points in input order;
/// a border point belongs to the first cluster that reaches it.
fn dbscan_reference(points: &[[f64; 2]], eps: f64, min_samples: usize) -> Clustering {
    let n = points.len();
    let neighbours = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| {
                let dx = points[i][0] - points[j][0];
                let dy = points[i][1] - points[j][1];
                (dx * dx + dy * dy).sqrt() <= eps
            })
            .collect()
    };
    let mut labels = vec![None; n];
    let mut clusters = Vec::new();
    let mut expanded = vec![false; n];
    for i in 0..n {
        if labels[i].is_some() || neighbours(i).len() < min_samples {
            continue;
        }
        let id = clusters.len();
        let mut stack = vec![i];
        labels[i] = Some(id);
        while let Some(p) = stack.pop() {
            if expanded[p] {
                continue;
            }
            expanded[p] = true;
            let nb = neighbours(p);
            if nb.len() < min_samples {
                continue;
            }
            for q in nb {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    stack.push(q);
                }
            }
        }
        clusters.push((0..n).filter(|&k| labels[k] == Some(id)).collect::<Vec<_>>());
    }
    let noise = (0..n).filter(|&i| labels[i].is_none()).collect();
    Clustering { labels, clusters, noise }
}

fn dbscan_oracle(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut clustered = 0;
    for case in 0..100 {
        let n = rng.random_range(0..=200);
        let blobs: Vec<[f64; 2]> = (0..rng.random_range(1..6))
            .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let points: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                if rng.random_bool(0.7) {
                    let c = blobs[rng.random_range(0..blobs.len())];
                    let s = rng.random_range(0.02..0.3);
                    [c[0] + rng.random_range(-s..s), c[1] + rng.random_range(-s..s)]
                } else {
                    [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]
                }
            })
            .collect();
        let eps = rng.random_range(0.01..0.5);
        let min_samples = rng.random_range(1..12);
        let got = dbscan(&points, eps, min_samples);
        let want = dbscan_reference(&points, eps, min_samples);
        if got != want {
            return Err(format!("dbscan case {case}: n={n} eps={eps} min_samples={min_samples}"));
        }
        clustered += got.num_clusters();
    }
    Ok(format!("dbscan 100/100 ({clustered} clusters)"))
}

fn savgol_oracle(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let order = rng.random_range(0..=5);
        let window = 2 * rng.random_range(order / 2 + 1..=12) + 1;
        let degree = rng.random_range(0..=order);
        let coeffs: Vec<f64> = (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = rng.random_range(window..window + 80);
        let data: Vec<f64> = (0..len)
            .map(|i| {
                let x = i as f64 / len as f64 * 2.0 - 1.0;
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            })
            .collect();
        let sg = SavitzkyGolay::new(window, order).map_err(|e| format!("savgol case {case}: {e}"))?;
        let out = sg.apply(&data).map_err(|e| format!("savgol case {case}: {e}"))?;
        let err = out.iter().zip(&data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        if err > SG_TOL {
            return Err(format!("savgol case {case}: window {window} order {order} degree {degree} error {err:.2e}"));
        }
    }
    Ok(format!("savgol 100/100 (max {worst:.1e})"))
}

fn circular_oracle(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let centre = rng.random_range(-PI..PI);
        let spread = rng.random_range(0.0..2.0);
        let angles: Vec<f64> = (0..rng.random_range(1..50))
            .map(|_| wrap(centre + rng.random_range(-spread..spread)))
            .collect();
        let n = angles.len() as f64;
        let xbar = angles.iter().map(|a| a.cos()).sum::<f64>() / n;
        let ybar = angles.iter().map(|a| a.sin()).sum::<f64>() / n;
        let r = (xbar * xbar + ybar * ybar).sqrt();
        let mu = ybar.atan2(xbar);
        let sigma2 = (-2.0 * r.min(1.0).ln()).max(0.0);
        let got = circular_mean_std(&angles).map_err(|e| format!("circular case {case}: {e}"))?;
        let err = wrap(got.mean_theta - mu)
            .abs()
            .max((got.resultant_r - r).abs())
            // The square root magnifies ulp-level differences in R as R -> 1,
            // so the deviation is compared through its square.
            .max((got.std_theta.powi(2) - sigma2).abs());
        worst = worst.max(err);
        if err > CIRC_TOL {
            return Err(format!("circular case {case}: error {err:.2e}"));
        }
    }
    Ok(format!("circular 100/100 (max {worst:.1e})"))
}

/// Distance from the ring centre to where the facing FOV edges of two
/// neighbouring anchors cross.
fn deadzone_by_rays(radius: f64, fov: f64, psi0: f64, psi1: f64) -> Option<f64> {
    let a = [radius * psi0.cos(), radius * psi0.sin()];
    let b = [radius * psi1.cos(), radius * psi1.sin()];
    let da = [(psi0 + fov / 2.0).cos(), (psi0 + fov / 2.0).sin()];
    let db = [(psi1 - fov / 2.0).cos(), (psi1 - fov / 2.0).sin()];
    // a + s·da = b + t·db
    let det = da[0] * (-db[1]) - da[1] * (-db[0]);
    if det.abs() < 1e-15 {
        return None;
    }
    let rx = b[0] - a[0];
    let ry = b[1] - a[1];
    let s = (rx * (-db[1]) - ry * (-db[0])) / det;
    let t = (da[0] * ry - da[1] * rx) / det;
    if s < 0.0 || t < 0.0 {
        return None;
    }
    Some((a[0] + s * da[0]).hypot(a[1] + s * da[1]))
}

fn deadzone_oracle(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let count = rng.random_range(3..=8);
        let lambda = 2.0 * PI / count as f64;
        let radius = rng.random_range(0.01..0.5);
        let fov = rng.random_range(lambda + 0.05..(PI - 0.01).max(lambda + 0.06));
        let psi0 = rng.random_range(-PI..PI);
        let formula = deadzone_radius_for(radius, fov, lambda).map_err(|e| format!("deadzone case {case}: {e}"))?;
        for k in 0..count {
            let p0 = psi0 + k as f64 * lambda;
            let geo = deadzone_by_rays(radius, fov, p0, p0 + lambda).ok_or(format!("deadzone case {case}: rays miss"))?;
            let err = (geo - formula).abs();
            worst = worst.max(err);
            if err > DEADZONE_TOL {
                return Err(format!("deadzone case {case}: formula {formula} rays {geo}"));
            }
        }
    }
    let default = deadzone_radius(&AnchorRingConfig::default()).map_err(|e| e.to_string())?;
    // The published figure for the default ring is 0.878 m; both the formula and
    // the ray construction give the value below, so it is reported, not asserted.
    Ok(format!("deadzone 100/100 (max {worst:.1e}, default ring {default:.4} m)"))
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= JACOBIAN_REL_TOL * b.abs().max(1.0)
}

fn jacobian_oracle(rng: &mut ChaCha8Rng) -> Result<String, String> {
    const H: f64 = 1e-6;
    for case in 0..100 {
        let robot = Pose2D::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-PI..PI));
        let ang = rng.random_range(-PI..PI);
        let d = rng.random_range(0.5..8.0);
        let lm = [robot.x + d * ang.cos(), robot.y + d * ang.sin()];
        let fail = |what: &str| Err(format!("jacobian case {case}: {what}"));

        let pred = observation_model(&robot, lm).unwrap();
        let h = |r: &Pose2D, l: [f64; 2]| {
            let p = observation_model(r, l).unwrap();
            [p.range, p.bearing]
        };
        for j in 0..3 {
            let mut plus = robot;
            let mut minus = robot;
            match j {
                0 => (plus.x, minus.x) = (robot.x + H, robot.x - H),
                1 => (plus.y, minus.y) = (robot.y + H, robot.y - H),
                _ => (plus.theta, minus.theta) = (robot.theta + H, robot.theta - H),
            }
            let (hp, hm) = (h(&plus, lm), h(&minus, lm));
            let fd = [(hp[0] - hm[0]) / (2.0 * H), wrap(hp[1] - hm[1]) / (2.0 * H)];
            if !(0..2).all(|k| rel_close(pred.h_robot[(k, j)], fd[k])) {
                return fail("observation wrt robot");
            }
        }
        for j in 0..2 {
            let mut plus = lm;
            let mut minus = lm;
            plus[j] += H;
            minus[j] -= H;
            let (hp, hm) = (h(&robot, plus), h(&robot, minus));
            let fd = [(hp[0] - hm[0]) / (2.0 * H), wrap(hp[1] - hm[1]) / (2.0 * H)];
            if !(0..2).all(|k| rel_close(pred.h_landmark[(k, j)], fd[k])) {
                return fail("observation wrt landmark");
            }
        }

        let u = MotionIncrement {
            rot1: rng.random_range(-1.0..1.0),
            trans: rng.random_range(0.0..2.0),
            rot2: rng.random_range(-1.0..1.0),
        };
        let g = motion_jacobian(&robot, &u);
        let as_vec = |p: Pose2D| [p.x, p.y, p.theta];
        for j in 0..3 {
            let mut plus = as_vec(robot);
            let mut minus = as_vec(robot);
            plus[j] += H;
            minus[j] -= H;
            let fp = as_vec(u.apply(&Pose2D::new(plus[0], plus[1], plus[2])));
            let fm = as_vec(u.apply(&Pose2D::new(minus[0], minus[1], minus[2])));
            for k in 0..3 {
                let fd = if k == 2 { wrap(fp[2] - fm[2]) } else { fp[k] - fm[k] } / (2.0 * H);
                if !rel_close(g[(k, j)], fd) {
                    return fail("motion");
                }
            }
        }

        let (range, bearing) = (pred.range, pred.bearing);
        let (_, g_robot, g_obs) = inverse_observation(&robot, range, bearing);
        let inv = |r: &Pose2D, z: [f64; 2]| inverse_observation(r, z[0], z[1]).0;
        for j in 0..3 {
            let mut plus = as_vec(robot);
            let mut minus = as_vec(robot);
            plus[j] += H;
            minus[j] -= H;
            let lp = inv(&Pose2D::new(plus[0], plus[1], plus[2]), [range, bearing]);
            let lm_ = inv(&Pose2D::new(minus[0], minus[1], minus[2]), [range, bearing]);
            if !(0..2).all(|k| rel_close(g_robot[(k, j)], (lp[k] - lm_[k]) / (2.0 * H))) {
                return fail("augmentation wrt robot");
            }
        }
        for j in 0..2 {
            let mut plus = [range, bearing];
            let mut minus = [range, bearing];
            plus[j] += H;
            minus[j] -= H;
            let (lp, lm_) = (inv(&robot, plus), inv(&robot, minus));
            if !(0..2).all(|k| rel_close(g_obs[(k, j)], (lp[k] - lm_[k]) / (2.0 * H))) {
                return fail("augmentation wrt observation");
            }
        }
    }
    Ok("jacobians 100/100".into())
}

/// Noiseless 3-landmark, 20-step instance: the EKF posterior against a
/// Gauss-Newton solution of the full batch problem.
fn least_squares_oracle() -> Result<String, String> {
    const STEPS: usize = 20;
    let landmarks = [[2.0, 1.5], [3.5, -1.0], [4.5, 2.5]];
    let u = MotionIncrement {
        rot1: 0.05,
        trans: 0.25,
        rot2: 0.0,
    };
    let r_noise = MotionNoise::default();
    let q = ObservationNoise::tag_default();

    let mut truth = vec![Pose2D::origin()];
    for k in 0..STEPS {
        truth.push(u.apply(&truth[k]));
    }
    let measure = |pose: &Pose2D, l: [f64; 2]| {
        let p = observation_model(pose, l).unwrap();
        (p.range, p.bearing)
    };

    let mut ekf = SlamState::new(Pose2D::origin());
    for (k, pose) in truth.iter().enumerate().skip(1) {
        ekf.predict(&u, &r_noise);
        for (id, &l) in landmarks.iter().enumerate() {
            let (range, bearing) = measure(pose, l);
            let obs = RangeBearingObs::tag(id as u32, range, bearing);
            if k == 1 {
                ekf.augment_landmark(&obs, LandmarkKind::Tag, &q.matrix());
            } else {
                ekf.update_known(&obs, &q).map_err(|e| e.to_string())?;
            }
        }
    }

    // Unknowns: poses 1..=STEPS then the landmarks; pose 0 is the fixed origin.
    let dim = 3 * STEPS + 2 * landmarks.len();
    let pose_at = |x: &DVector<f64>, k: usize| {
        if k == 0 {
            Pose2D::origin()
        } else {
            Pose2D::new(x[3 * (k - 1)], x[3 * (k - 1) + 1], x[3 * (k - 1) + 2])
        }
    };
    let lm_at = |x: &DVector<f64>, i: usize| [x[3 * STEPS + 2 * i], x[3 * STEPS + 2 * i + 1]];
    let residuals = |x: &DVector<f64>| -> DVector<f64> {
        let mut r = Vec::new();
        for (k, true_pose) in truth.iter().enumerate().skip(1) {
            let pred = u.apply(&pose_at(x, k - 1));
            let p = pose_at(x, k);
            r.push((p.x - pred.x) / r_noise.sigma_x);
            r.push((p.y - pred.y) / r_noise.sigma_y);
            r.push(wrap(p.theta - pred.theta) / r_noise.sigma_theta);
            for (i, &l) in landmarks.iter().enumerate() {
                let (range, bearing) = measure(true_pose, l);
                let h = observation_model(&p, lm_at(x, i)).unwrap();
                r.push((range - h.range) / q.sigma_r);
                r.push(wrap(bearing - h.bearing) / q.sigma_phi2.sqrt());
            }
        }
        DVector::from_vec(r)
    };

    // Start well away from the answer: stretched dead reckoning, shifted map.
    let mut x = DVector::zeros(dim);
    let stretched = MotionIncrement { trans: u.trans * 1.1, ..u };
    let mut p = Pose2D::origin();
    for k in 1..=STEPS {
        p = stretched.apply(&p);
        x.rows_mut(3 * (k - 1), 3).copy_from_slice(&[p.x, p.y, p.theta]);
    }
    for (i, l) in landmarks.iter().enumerate() {
        x[3 * STEPS + 2 * i] = l[0] + 0.3;
        x[3 * STEPS + 2 * i + 1] = l[1] - 0.2;
    }
    for _ in 0..30 {
        let r0 = residuals(&x);
        let mut jac = DMatrix::zeros(r0.len(), dim);
        for j in 0..dim {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[j] += 1e-7;
            minus[j] -= 1e-7;
            jac.set_column(j, &((residuals(&plus) - residuals(&minus)) / 2e-7));
        }
        let step = (jac.transpose() * &jac)
            .lu()
            .solve(&(-jac.transpose() * &r0))
            .ok_or("singular normal equations")?;
        x += &step;
        if step.amax() < 1e-12 {
            break;
        }
    }

    let mut worst = pose_at(&x, STEPS).position();
    let ekf_robot = ekf.robot().position();
    let mut err = (worst[0] - ekf_robot[0]).hypot(worst[1] - ekf_robot[1]);
    for (i, lm) in ekf.landmarks.iter().enumerate() {
        worst = lm_at(&x, i);
        let e = ekf.landmark_position(lm);
        err = err.max((worst[0] - e[0]).hypot(worst[1] - e[1]));
    }
    if err > LSQ_TOL {
        return Err(format!("least squares: EKF differs by {err:.2e} m"));
    }
    Ok(format!("least squares (max {err:.1e} m)"))
}

fn oracle_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_917);
    let results = [
        dbscan_oracle(&mut rng),
        savgol_oracle(&mut rng),
        circular_oracle(&mut rng),
        deadzone_oracle(&mut rng),
        jacobian_oracle(&mut rng),
        least_squares_oracle(),
    ];
    let pass = results.iter().all(Result::is_ok);
    let detail = results
        .iter()
        .map(|r| match r {
            Ok(s) => s.clone(),
            Err(s) => format!("FAILED {s}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome {
        name: "oracle suites",
        pass,
        detail,
    }
}

fn main() -> ExitCode {
    let mut outcomes = vec![zero_noise_identity()];
    let runs = u_path_runs();
    outcomes.push(drift_correction(&runs));
    outcomes.push(ablation(&runs));
    outcomes.push(oracle_suites());
    outcomes.push(invariants(&runs));
    outcomes.push(determinism());
    outcomes.push(ghost_rejection(&runs));

    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
