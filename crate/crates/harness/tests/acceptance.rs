//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.
//!
//! The reference values here come from oracles written independently of the
//! library code: brute-force set arithmetic, exhaustive enumeration, and
//! integer arithmetic for the leaderboard numbers.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rvos_core::gate::{decide, GateOutcome, JudgeVerdict, VerdictOutcome};
use rvos_core::kfc::{compress_clip, mosaic_tile_rect};
use rvos_core::metrics::{aggregate, boundary_f, default_boundary_tolerance, final_score, jaccard, ExpressionScore};
use rvos_core::rle::{rle_decode, rle_encode, RleMask};
use rvos_core::scheduler::{plan, SchedulerConfig};
use rvos_core::{BinaryMask, Image};
use rvos_harness::config::{build_services, BackendSpec, RunConfig};
use rvos_harness::dataset::{load_manifest, read_predictions, GroundTruth};
use rvos_harness::fixture::{generate, FixtureOptions};
use rvos_harness::imageio::{decode_mask_png, encode_mask_png};
use rvos_harness::pipeline::{self, PREDICTIONS_DIR, REPORT_JSON, REPORT_TXT};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- oracles

fn bits(m: &BinaryMask) -> Vec<bool> {
    m.iter().collect()
}

fn oracle_jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn oracle_boundary(a: &[bool], w: usize, h: usize) -> Vec<(i64, i64)> {
    let at = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && a[y as usize * w + x as usize];
    let mut out = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if at(x, y) && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| !at(x + dx, y + dy)) {
                out.push((x, y));
            }
        }
    }
    out
}

/// F from explicit minimum distances between boundary point sets.
fn oracle_boundary_f(a: &[bool], b: &[bool], w: usize, h: usize, tol: usize) -> f64 {
    let (pa, pb) = (oracle_boundary(a, w, h), oracle_boundary(b, w, h));
    if pa.is_empty() && pb.is_empty() {
        return 1.0;
    }
    if pa.is_empty() || pb.is_empty() {
        return 0.0;
    }
    let t2 = (tol * tol) as i64;
    let matched = |from: &[(i64, i64)], to: &[(i64, i64)]| {
        from.iter()
            .filter(|(x, y)| to.iter().map(|(u, v)| (x - u).pow(2) + (y - v).pow(2)).min().unwrap() <= t2)
            .count() as f64
            / from.len() as f64
    };
    let (p, r) = (matched(&pa, &pb), matched(&pb, &pa));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Column-major runs, zeros first.
fn oracle_runs(a: &[bool], w: usize, h: usize) -> Vec<u32> {
    let mut runs = vec![0u32];
    let mut current = false;
    for x in 0..w {
        for y in 0..h {
            let v = a[y * w + x];
            if v != current {
                runs.push(0);
                current = v;
            }
            *runs.last_mut().unwrap() += 1;
        }
    }
    runs
}

/// `round_half_up((a + b + c) / 3)` in hundredths, on integers.
fn oracle_final(values: [&str; 3]) -> f64 {
    let hundredths = |s: &str| -> i64 {
        let (int, frac) = s.split_once('.').unwrap();
        int.parse::<i64>().unwrap() * 100 + frac.parse::<i64>().unwrap()
    };
    let sum: i64 = values.iter().map(|v| hundredths(v)).sum();
    ((2 * sum + 3) / 6) as f64 / 100.0
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    let density: f64 = rng.random_range(0.0..=1.0);
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density))
}

// ---------------------------------------------------------------- criteria

fn criterion_1() -> Outcome {
    let rows: [(&str, [&str; 3], f64); 7] = [
        ("leaderboard 1", ["78.97", "96.15", "97.59"], 90.91),
        ("leaderboard 2", ["71.06", "100.00", "96.52"], 89.19),
        ("leaderboard 3", ["71.30", "96.15", "98.93"], 88.79),
        ("leaderboard 4", ["70.38", "96.15", "98.40"], 88.31),
        ("leaderboard 5", ["68.37", "88.46", "96.79"], 84.54),
        ("ablation a", ["68.04", "5.26", "99.77"], oracle_final(["68.04", "5.26", "99.77"])),
        ("ablation b", ["72.84", "97.37", "100.00"], oracle_final(["72.84", "97.37", "100.00"])),
    ];
    check(oracle_final(["68.04", "5.26", "99.77"]) == 57.69, || "oracle disagrees with 57.69".into())?;
    check(oracle_final(["72.84", "97.37", "100.00"]) == 90.07, || "oracle disagrees with 90.07".into())?;
    let mut worst: f64 = 0.0;
    for (name, v, expected) in rows {
        let [a, b, c] = v.map(|s| s.parse::<f64>().unwrap());
        let got = final_score(a, b, c);
        check(got == oracle_final(v), || format!("{name}: {got} differs from integer arithmetic"))?;
        let diff = (got - expected).abs();
        worst = worst.max(diff);
        check(diff <= 0.01 + 1e-9, || format!("{name}: got {got:.2}, expected {expected:.2}"))?;
    }
    // aggregate's own final field goes through the same arithmetic
    let score = |id: &str, j: Option<f64>, nonempty: bool| ExpressionScore {
        expression_id: id.into(),
        j,
        f: j.map(|v| v * 0.9),
        predicted_nonempty: nonempty,
        gt_target_present: j.is_some(),
    };
    let scores = [
        score("a", Some(0.71), true),
        score("b", Some(0.52), false),
        score("c", Some(0.93), true),
        score("d", None, false),
        score("e", None, true),
        score("f", None, false),
    ];
    let r = aggregate(&scores).map_err(|e| e.to_string())?;
    let (jf, n, t) = (r.jf.unwrap(), r.n_acc.unwrap(), r.t_acc.unwrap());
    let expected_jf = 100.0 * ((0.71 * 1.9 + 0.52 * 1.9 + 0.93 * 1.9) / 2.0) / 3.0;
    check((jf - expected_jf).abs() < 1e-9, || format!("aggregate jf {jf}, expected {expected_jf}"))?;
    check((n - 200.0 / 3.0).abs() < 1e-9 && (t - 200.0 / 3.0).abs() < 1e-9, || format!("aggregate n {n} t {t}"))?;
    check(r.final_score == Some(final_score(jf, n, t)), || format!("aggregate final {:?}", r.final_score))?;
    Ok(format!("7 rows, max |diff| {worst:.2}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let (a, b) = (random_mask(&mut rng, w, h), random_mask(&mut rng, w, h));
        let (got, want) = (jaccard(&a, &b).unwrap(), oracle_jaccard(&bits(&a), &bits(&b)));
        check(got == want, || format!("jaccard pair {i} ({w}x{h}): {got} vs {want}"))?;
    }

    let sizes = [1usize, 2, 3, 5, 8, 12, 16];
    let mut compared = 0usize;
    for &w in &sizes {
        for &h in &sizes {
            let shapes = synthetic_shapes(w, h, &mut rng);
            for a in &shapes {
                for b in &shapes {
                    for tol in [0usize, 1, 2, 3] {
                        let got = boundary_f(a, b, tol).unwrap();
                        let want = oracle_boundary_f(&bits(a), &bits(b), w, h, tol);
                        check((got - want).abs() <= 1e-9, || {
                            format!("boundary_f {w}x{h} tol {tol}: {got} vs {want}\n{a:?}\n{b:?}")
                        })?;
                        compared += 1;
                    }
                }
            }
        }
    }
    Ok(format!("1000 jaccard pairs exact, {compared} boundary comparisons within 1e-9"))
}

fn synthetic_shapes(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<BinaryMask> {
    let (fw, fh) = (w as f64, h as f64);
    let mut shapes = vec![
        BinaryMask::new(w, h),
        BinaryMask::from_fn(w, h, |_, _| true),
        BinaryMask::from_fn(w, h, |x, y| x >= w / 4 && x < 3 * w / 4 + 1 && y >= h / 3 && y <= 2 * h / 3),
        BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - fw / 2.0, y as f64 + 0.5 - fh / 2.0);
            dx * dx + dy * dy <= (fw.min(fh) / 2.5).powi(2)
        }),
        BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - fw / 3.0, y as f64 - fh / 2.0);
            let d = (dx * dx + dy * dy).sqrt();
            d >= fw.min(fh) / 6.0 && d <= fw.min(fh) / 2.5
        }),
        BinaryMask::from_fn(w, h, |x, y| (x + y) % 3 == 0),
        BinaryMask::from_fn(w, h, |x, _| x == w - 1),
    ];
    for _ in 0..3 {
        shapes.push(random_mask(rng, w, h));
    }
    shapes
}

fn check_plan(v: usize, cfg: &SchedulerConfig) -> Result<(), String> {
    let p = plan(v, cfg).map_err(|e| format!("V={v} {cfg:?}: {e}"))?;
    let (t, n) = (cfg.t_target, cfg.n_clips);
    let c = t / n;
    let ctx = || format!("V={v} T={t} N={n}");
    // token count
    check(p.n_clips() == n && p.sampled().len() == t && p.clips().len() == n, || format!("{}: counts", ctx()))?;
    check(p.clips().iter().all(|cl| cl.members.len() == c - 1), || format!("{}: clip size", ctx()))?;
    let g = (1..=c).find(|g| g * g == c - 1).unwrap();
    check(p.grid() == g, || format!("{}: grid", ctx()))?;
    // coverage
    let sampled: BTreeSet<usize> = p.sampled().iter().copied().collect();
    for f in 0..v {
        let tokens = p.governing_tokens(f).unwrap();
        check(!tokens.is_empty(), || format!("{}: frame {f} ungoverned", ctx()))?;
        if v >= t {
            check(tokens.len() == 1, || format!("{}: long video frame {f} has {tokens:?}", ctx()))?;
            // nearest sampled slot, ties to the earlier one
            let slot = (0..t)
                .min_by_key(|&i| (p.sampled()[i].abs_diff(f), p.sampled()[i], i))
                .unwrap();
            let best = p.sampled()[slot];
            let first = (0..t).find(|&i| p.sampled()[i] == best).unwrap();
            check(tokens[0] == first / c, || format!("{}: frame {f} token {} expected {}", ctx(), tokens[0], first / c))?;
        } else {
            check(
                tokens.len() == 1 || (tokens.len() == 2 && tokens[1] == tokens[0] + 1),
                || format!("{}: frame {f} tokens {tokens:?}", ctx()),
            )?;
        }
    }
    if v >= t {
        let expected: Vec<usize> = (0..t).map(|i| i * v / t).collect();
        check(p.sampled() == expected, || format!("{}: sampling", ctx()))?;
    } else {
        check(sampled.len() == v, || format!("{}: short video must sample every frame", ctx()))?;
    }
    // partition: token k governs a contiguous run of frames, runs in order
    let mut prev_end = 0usize;
    for k in 0..n {
        let fr = p.governed_frames(k);
        check(!fr.is_empty(), || format!("{}: token {k} governs nothing", ctx()))?;
        check(fr.windows(2).all(|w| w[1] == w[0] + 1), || format!("{}: token {k} not contiguous", ctx()))?;
        let overlap = prev_end.saturating_sub(fr[0]);
        check(
            (k == 0 && fr[0] == 0) || overlap == 0 || (overlap == 1 && v < t),
            || format!("{}: token {k} starts at {} after {prev_end}", ctx(), fr[0]),
        )?;
        prev_end = fr[fr.len() - 1] + 1;
    }
    check(prev_end == v, || format!("{}: last token ends at {prev_end}", ctx()))?;
    check(!p.has_dual_tokens() || v < t, || format!("{}: dual tokens on a long video", ctx()))?;
    Ok(())
}

fn criterion_3() -> Outcome {
    let (c, g) = SchedulerConfig::default().validate().map_err(|e| e.to_string())?;
    check((c, g) == (10, 3), || format!("T=100 N=10 gave c={c} g={g}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut short = 0;
    for _ in 0..500 {
        let g = rng.random_range(1..=4usize);
        let n = rng.random_range(1..=16usize);
        let t = n * (g * g + 1);
        let v = if rng.random_bool(0.5) { rng.random_range(n..t.max(n + 1)) } else { rng.random_range(t..=4 * t) };
        short += (v < t) as usize;
        check_plan(v, &SchedulerConfig::new(t, n).map_err(|e| e.to_string())?)?;
    }
    Ok(format!("500 configs ({short} short), c=10 g=3"))
}

fn criterion_4() -> Outcome {
    use VerdictOutcome::{Absent, Error, Present};
    let all = [Present, Absent, Error];
    let mut cases = 0;
    for k in 1..=3u32 {
        for code in 0..3usize.pow(k) {
            let outcomes: Vec<VerdictOutcome> = (0..k).map(|i| all[code / 3usize.pow(i) % 3]).collect();
            let expected = if outcomes.len() >= 2 && outcomes.iter().all(|o| *o == Absent) {
                GateOutcome::NullTarget
            } else {
                GateOutcome::Proceed
            };
            let mut perms = vec![outcomes.clone()];
            if k >= 2 {
                perms = permutations(&outcomes);
            }
            for perm in perms {
                let verdicts: Vec<JudgeVerdict> = perm
                    .iter()
                    .enumerate()
                    .map(|(i, o)| match o {
                        Error => JudgeVerdict::error(format!("j{i}"), 0, "down"),
                        _ => JudgeVerdict::answered(format!("j{i}"), *o == Present, 0, None),
                    })
                    .collect();
                let got = decide(&verdicts).map_err(|e| e.to_string())?;
                check(got == expected, || format!("{perm:?}: got {got:?}, expected {expected:?}"))?;
                cases += 1;
            }
        }
    }
    check(decide(&[]).is_err(), || "empty verdict list must be rejected".into())?;
    Ok(format!("39 verdict tuples, {cases} orderings"))
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate(dir.path(), "valid", &FixtureOptions::default()).map_err(|e| e.to_string())?;
    let m = load_manifest(dir.path(), "valid").map_err(|e| e.to_string())?;
    let counts = m.counts();
    check(m.videos().len() >= 4 && counts.n_target + counts.n_notarget >= 6 && counts.n_notarget >= 2, || {
        format!("fixture too small: {counts:?}")
    })?;
    let mut cfg = RunConfig {
        backend: BackendSpec::Oracle,
        ..RunConfig::default()
    };
    let services = build_services(&cfg, &m).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    let first = pipeline::run(&m, &cfg, &services, &a, true).map_err(|e| e.to_string())?;
    cfg.parallelism = 1;
    pipeline::run(&m, &cfg, &services, &b, true).map_err(|e| e.to_string())?;
    let r = first.report.ok_or("no report")?;
    let got = [r.jf, r.n_acc, r.t_acc, r.final_score];
    check(got == [Some(100.0); 4], || format!("oracle run scored {got:?}"))?;
    let (sa, sb) = (common::snapshot(&a.join(PREDICTIONS_DIR)), common::snapshot(&b.join(PREDICTIONS_DIR)));
    check(sa == sb, || "prediction directories differ between runs".into())?;
    for f in [REPORT_JSON, REPORT_TXT] {
        check(std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok(), || format!("{f} differs"))?;
    }
    Ok(format!(
        "{} videos, {} target + {} no-target expressions, 100.00 on all four metrics, {} files identical",
        m.videos().len(),
        counts.n_target,
        counts.n_notarget,
        sa.len()
    ))
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate(dir.path(), "valid", &FixtureOptions::default()).map_err(|e| e.to_string())?;
    let m = load_manifest(dir.path(), "valid").map_err(|e| e.to_string())?;
    let truth = GroundTruth::load(&m).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig {
        backend: BackendSpec::ForcedMapping,
        ..RunConfig::default()
    };
    let services = build_services(&cfg, &m).map_err(|e| e.to_string())?;

    let mut reports = Vec::new();
    for gate in [false, true] {
        cfg.gate.enabled = gate;
        let out = dir.path().join(if gate { "gate_on" } else { "gate_off" });
        let s = pipeline::run(&m, &cfg, &services, &out, true).map_err(|e| e.to_string())?;
        let report = s.report.ok_or("no report")?;

        // expected values from the predictions on disk and the oracles above
        let preds = read_predictions(&m, &out.join(PREDICTIONS_DIR)).map_err(|e| e.to_string())?;
        let (mut jf, mut nt, mut n_ok, mut nn, mut t_ok) = (0.0, 0usize, 0usize, 0usize, 0usize);
        for (e, p) in m.expressions().iter().zip(&preds) {
            let nonempty = p.masks().iter().any(|mk| mk.count_ones() > 0);
            if e.gt_target_present() == Some(true) {
                let g = truth.get(e.expression_id()).unwrap();
                let (w, h) = g.dims();
                let tol = default_boundary_tolerance(w, h);
                let (mut js, mut fs) = (0.0, 0.0);
                for (pm, gm) in p.masks().iter().zip(g.masks()) {
                    js += oracle_jaccard(&bits(pm), &bits(gm));
                    fs += oracle_boundary_f(&bits(pm), &bits(gm), w, h, tol);
                }
                let n = g.len() as f64;
                jf += (js / n + fs / n) / 2.0;
                nt += 1;
                t_ok += nonempty as usize;
            } else {
                nn += 1;
                n_ok += !nonempty as usize;
            }
        }
        let expected = (100.0 * jf / nt as f64, 100.0 * n_ok as f64 / nn as f64, 100.0 * t_ok as f64 / nt as f64);
        let got = (report.jf.unwrap(), report.n_acc.unwrap(), report.t_acc.unwrap());
        check(
            (got.0 - expected.0).abs() < 1e-9 && got.1 == expected.1 && got.2 == expected.2,
            || format!("gate {gate}: report {got:?}, oracle {expected:?}"),
        )?;
        reports.push(got);
    }
    let (off, on) = (reports[0], reports[1]);
    check(off.1 == 0.0, || format!("gate off: n_acc {:.2}, expected 0.00", off.1))?;
    check(on.1 == 100.0, || format!("gate on: n_acc {:.2}, expected 100.00", on.1))?;
    check(off.2 == 100.0 && on.2 == 100.0, || format!("t_acc {:.2} -> {:.2}, expected 100.00", off.2, on.2))?;
    Ok(format!(
        "gate off n_acc {:.2} t_acc {:.2}; gate on n_acc {:.2} t_acc {:.2}",
        off.1, off.2, on.1, on.2
    ))
}

fn criterion_7() -> Outcome {
    for code in 0u32..(1 << 16) {
        let bits: Vec<bool> = (0..16).map(|i| code >> i & 1 == 1).collect();
        let m = BinaryMask::from_bools(4, 4, &bits).unwrap();
        let rle = rle_encode(&m);
        check(rle.runs == oracle_runs(&bits, 4, 4), || format!("mask {code:#06x}: runs {:?}", rle.runs))?;
        check(rle_decode(&rle).ok().as_ref() == Some(&m), || format!("mask {code:#06x}: round trip"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..10_000 {
        let m = random_mask(&mut rng, 128, 128);
        let rle = rle_encode(&m);
        check(rle_decode(&rle).ok().as_ref() == Some(&m), || format!("random mask {i}: round trip"))?;
    }
    let bad = RleMask {
        width: 2,
        height: 2,
        runs: vec![1, 2],
    };
    check(rle_decode(&bad).is_err(), || "short run sum accepted".into())?;
    let mut png_cases = 0;
    for code in (0u32..(1 << 16)).step_by(97) {
        let bits: Vec<bool> = (0..16).map(|i| code >> i & 1 == 1).collect();
        let m = BinaryMask::from_bools(4, 4, &bits).unwrap();
        check(decode_mask_png(&encode_mask_png(&m)).ok().as_ref() == Some(&m), || format!("png 4x4 {code}"))?;
        png_cases += 1;
    }
    for i in 0..300 {
        let (w, h) = (rng.random_range(1..=160), rng.random_range(1..=120));
        let m = random_mask(&mut rng, w, h);
        check(decode_mask_png(&encode_mask_png(&m)).ok().as_ref() == Some(&m), || format!("png random {i} {w}x{h}"))?;
        png_cases += 1;
    }
    Ok(format!("65536 exhaustive 4x4 + 10000 random 128x128 RLE, {png_cases} PNG round trips"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tiles_checked = 0;
    for (c, g) in [(5usize, 2usize), (10, 3)] {
        for (w, h) in [(64usize, 48usize), (67, 50), (30, 31)] {
            let colors: Vec<[u8; 3]> = (0..c)
                .map(|i| [(40 + 23 * i) as u8, (220 - 19 * i) as u8, ((i * 97) % 256) as u8])
                .collect();
            let frames: Vec<Arc<Image>> = colors
                .iter()
                .map(|&col| {
                    let mut img = Image::filled(w, h, col);
                    // sparse noise that must not change the dominant colour
                    for _ in 0..(w * h / 50) {
                        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
                        img.put_pixel(x, y, [rng.random(), rng.random(), rng.random()]);
                    }
                    Arc::new(img)
                })
                .collect();
            let comp = compress_clip(0, &frames, g).map_err(|e| e.to_string())?;
            check(
                Arc::ptr_eq(&comp.key_image, &frames[0]) && comp.key_image.as_raw() == frames[0].as_raw(),
                || format!("c={c} {w}x{h}: key frame altered"),
            )?;
            check(comp.mosaic.dims() == (w, h), || format!("c={c}: mosaic is {:?}", comp.mosaic.dims()))?;
            let mut covered = vec![false; w * h];
            for (i, col) in colors.iter().enumerate().skip(1) {
                let r = mosaic_tile_rect(g, i - 1, w, h).map_err(|e| e.to_string())?;
                check(r == comp.tile_rect(i - 1).unwrap(), || "tile_rect disagrees".into())?;
                check((r.width, r.height) == (w / g, h / g), || format!("tile {i} size {r:?}"))?;
                let mut hist = std::collections::HashMap::new();
                for y in r.y..r.y + r.height {
                    for x in r.x..r.x + r.width {
                        covered[y * w + x] = true;
                        let px = comp.mosaic.pixel(x, y);
                        let closest = colors
                            .iter()
                            .enumerate()
                            .min_by_key(|(_, c)| c.iter().zip(px).map(|(a, b)| (*a as i32 - b as i32).pow(2)).sum::<i32>())
                            .unwrap()
                            .0;
                        *hist.entry(closest).or_insert(0usize) += 1;
                    }
                }
                let dominant = hist.into_iter().max_by_key(|(_, n)| *n).unwrap().0;
                check(dominant == i, || format!("c={c} {w}x{h}: tile {} dominated by frame {dominant}, col {col:?}", i - 1))?;
                tiles_checked += 1;
            }
            for (p, cov) in covered.iter().enumerate() {
                if !cov {
                    check(comp.mosaic.pixel(p % w, p / w) == [0, 0, 0], || format!("leftover pixel {p} not black"))?;
                }
            }
        }
    }
    Ok(format!("{tiles_checked} tiles matched their source frame, key frames identical"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("final-score arithmetic", criterion_1),
        ("metric oracles", criterion_2),
        ("scheduler invariants", criterion_3),
        ("gate truth table", criterion_4),
        ("end-to-end oracle identity", criterion_5),
        ("gate ablation direction", criterion_6),
        ("codec round trips", criterion_7),
        ("KFC layout", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}, {secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}, {secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
