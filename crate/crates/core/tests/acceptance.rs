//! Acceptance suite: every criterion runs at its pinned tolerance and prints
//! one PASS/FAIL line. Runs without the libtest harness so the report is
//! always visible; the process fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctxtrack::clustering::{
    context_to_context_distance, qt_cluster, LearnedCluster, LearnedContext, LearnedDatabase, SourceId,
};
use ctxtrack::codebook::{context_distance, CodeWord, ContextModel};
use ctxtrack::config::Config;
use ctxtrack::controller::tune_parameters;
use ctxtrack::features::{ContextChunk, ContextSample, FEATURE_COUNT};
use ctxtrack::metrics::{clear_mot, FrameBoxes};
use ctxtrack::optimizer::{adaboost_weights, LinkSample, SatisfactoryParams};
use ctxtrack::pipeline::{run_compare_experiment, run_learn_pipeline, training_corpus};
use ctxtrack::scene::BBox;
use ctxtrack::segmentation::{segment_context, SegmentationParams};
use ctxtrack::seqfile::{read_sequence, sequence_to_string};
use ctxtrack::sim::{preset_scenarios, scenario, CONTROL_SCENARIO, SWITCH_SCENARIO};
use ctxtrack::tracker::{normalize_weights, UNIFORM_WEIGHTS};

const EPS: f64 = 0.5;
const TH1: f64 = 0.5;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// random contexts

fn dense_sample(rng: &mut ChaCha8Rng, frame: usize, level: &[f64; FEATURE_COUNT], spread: f64) -> ContextSample {
    let mut v = [0.0; FEATURE_COUNT];
    for k in 0..FEATURE_COUNT {
        v[k] = level[k] * (spread * rng.random_range(-1.0..1.0f64)).exp();
    }
    // occlusion is often exactly zero in real scenes
    if rng.random_bool(0.1) {
        v[1] = 0.0;
    }
    ContextSample {
        frame,
        density: v[0].min(1.0),
        occlusion: v[1].min(1.0),
        contrast_mean: Some(v[2].min(1.0)),
        contrast_std: Some(v[3]),
        area_mean: Some(v[4].min(1.0)),
        area_std: Some(v[5]),
        object_count: rng.random_range(1..20),
    }
}

fn random_level(rng: &mut ChaCha8Rng) -> [f64; FEATURE_COUNT] {
    std::array::from_fn(|_| 10f64.powf(rng.random_range(-3.0..-0.3)))
}

fn dense_chunk(rng: &mut ChaCha8Rng, len: usize, level: &[f64; FEATURE_COUNT], spread: f64) -> ContextChunk {
    let samples = (0..len).map(|f| dense_sample(rng, f, level, spread)).collect();
    ContextChunk::new(0, samples)
}

fn jitter_level(rng: &mut ChaCha8Rng, level: &[f64; FEATURE_COUNT], amount: f64) -> [f64; FEATURE_COUNT] {
    std::array::from_fn(|k| level[k] * (amount * rng.random_range(-1.0..1.0f64)).exp())
}

// ---------------------------------------------------------------------------
// 1. literal distance oracle

/// Ratio distance between a value and a code-word mean, in [0, 1].
fn oracle_word_distance(mu: f64, mean: f64) -> f64 {
    if mu == 0.0 && mean == 0.0 {
        return 0.0;
    }
    let (small, large) = if mu < mean { (mu, mean) } else { (mean, mu) };
    1.0 - small / large
}

/// Transcribed line by line for dense contexts (every feature present on
/// every frame).
fn oracle_context_distance(c: &ContextChunk, cb: &ContextModel, l: usize, eps: f64) -> f64 {
    let mut count_total = 0usize;
    for k in 0..6 {
        let mut count = 0usize;
        for t in 0..l {
            let mu = c.samples[t].feature(k).expect("dense context");
            for cw in &cb.books[k].words {
                if oracle_word_distance(mu, cw.mean) < eps {
                    count += 1;
                    break;
                }
            }
        }
        if (count as f64) / (l as f64) < 0.5 {
            return 1.0;
        }
        count_total += count;
    }
    1.0 - count_total as f64 / (l * 6) as f64
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut pairs = Vec::new();
    for i in 0..100 {
        let level = random_level(&mut rng);
        let len = rng.random_range(10..=60);
        let chunk = dense_chunk(&mut rng, len, &level, 0.6);
        // models from nearby and far contexts, so both the early exit and
        // fractional distances occur
        let model_level = jitter_level(&mut rng, &level, [0.0, 0.4, 0.8, 3.0][i % 4]);
        let model_len = rng.random_range(5..=60);
        let model = ContextModel::build(&dense_chunk(&mut rng, model_len, &model_level, 0.5), EPS).unwrap();
        pairs.push((chunk, model));
    }
    let t = Instant::now();
    let mut worst = 0.0f64;
    let (mut ones, mut fractional) = (0, 0);
    for (chunk, model) in &pairs {
        let got = context_distance(chunk, model, EPS);
        let want = oracle_context_distance(chunk, model, chunk.len(), EPS);
        worst = worst.max((got - want).abs());
        if want == 1.0 {
            ones += 1;
        } else if want > 0.0 {
            fractional += 1;
        }
    }
    let elapsed = t.elapsed();
    ensure(worst <= 1e-12, || format!("max deviation {worst:e} > 1e-12"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    ensure(ones > 0 && fractional > 0, || format!("weak sample: {ones} early exits, {fractional} fractional"))?;
    Ok(format!(
        "100 pairs, max |diff| {worst:e}, {ones} early exits, {fractional} fractional, {elapsed:?}"
    ))
}

// ---------------------------------------------------------------------------
// 2. self-distance

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut words = 0;
    for i in 0..50 {
        let level = random_level(&mut rng);
        let len = rng.random_range(20..=100);
        let chunk = dense_chunk(&mut rng, len, &level, 1.5);
        let model = ContextModel::build(&chunk, EPS).unwrap();
        words += model.word_counts().iter().sum::<usize>();
        let d = context_distance(&chunk, &model, EPS);
        ensure(d == 0.0, || format!("chunk {i}: self-distance {d}"))?;
    }
    Ok(format!("50 chunks, all exactly 0 ({words} code-words built)"))
}

// ---------------------------------------------------------------------------
// 3. segmentation boundary

fn criterion_3() -> Check {
    let sc = scenario(SWITCH_SCENARIO).map_err(|e| e.to_string())?;
    let switch = sc.switch_frames()[0];
    let params = SegmentationParams {
        part_len: 50,
        th1: 0.5,
        eps: EPS,
    };
    let mut found = Vec::new();
    for seed in 0..5 {
        let seq = sc.generate(seed).map_err(|e| e.to_string())?;
        let segs = segment_context(&seq, params).map_err(|e| e.to_string())?;
        ensure(segs.len() == 2, || {
            format!(
                "seed {seed}: {} segments {:?}",
                segs.len(),
                segs.iter().map(|s| (s.start_frame, s.end_frame)).collect::<Vec<_>>()
            )
        })?;
        let boundary = segs[1].start_frame;
        ensure(boundary.abs_diff(switch) <= 50, || format!("seed {seed}: boundary {boundary} vs switch {switch}"))?;
        found.push(boundary);
    }
    Ok(format!("5 seeds: 2 segments each, boundaries {found:?} (switch at {switch})"))
}

// ---------------------------------------------------------------------------
// 4. AdaBoost recovery

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut samples = Vec::new();
    for i in 0..400 {
        let same = i % 3 == 0;
        let mut s: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        s[2] = if same {
            rng.random_range(0.55..1.0)
        } else {
            rng.random_range(0.0..0.45)
        };
        samples.push(LinkSample {
            similarities: s,
            same_object: same,
        });
    }
    let out = adaboost_weights(&samples, 20).map_err(|e| e.to_string())?;
    let w = out.weights;
    let sum: f64 = w.iter().sum();
    ensure(w[2] > 0.6, || format!("w3 = {}", w[2]))?;
    ensure((sum - 1.0).abs() <= 1e-9, || format!("sum of weights {sum}"))?;
    for (t, r) in out.rounds.iter().enumerate() {
        ensure(r.ensemble_error <= r.error_bound + 1e-12, || {
            format!("round {t}: ensemble error {} above bound {}", r.ensemble_error, r.error_bound)
        })?;
    }
    Ok(format!(
        "w = {:.3?}, {} rounds, bound held every round",
        w,
        out.rounds.len()
    ))
}

// ---------------------------------------------------------------------------
// 5. cluster selection conformance

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let levels: Vec<[f64; FEATURE_COUNT]> = (0..10).map(|_| random_level(&mut rng)).collect();
    let mut db = LearnedDatabase::new(TH1, EPS, 50);
    for (i, level) in levels.iter().enumerate() {
        let m = ContextModel::build(&dense_chunk(&mut rng, 100, level, 0.4), EPS).unwrap();
        db.clusters.push(LearnedCluster {
            // non-sequential ids exercise the id-based tie-break
            cluster_id: (i as u64 * 7) % 10,
            weights: UNIFORM_WEIGHTS,
            member_ids: vec![],
            support_frames: m.support_frames,
            codebooks: m.books,
        });
    }
    let (mut accepted, mut unknown) = (0, 0);
    for n in 0..1000 {
        let chunk = if n % 2 == 0 {
            let base = &levels[rng.random_range(0..10)];
            let amount = rng.random_range(0.0..1.2);
            let level = jitter_level(&mut rng, base, amount);
            dense_chunk(&mut rng, 50, &level, 0.4)
        } else {
            let level = random_level(&mut rng);
            dense_chunk(&mut rng, 50, &level, 0.4)
        };
        // exhaustive re-check against the literal oracle
        let all: Vec<(u64, f64)> = db
            .clusters
            .iter()
            .map(|c| (c.cluster_id, oracle_context_distance(&chunk, &c.model(), 50, EPS)))
            .collect();
        let any_passes = all.iter().any(|&(_, d)| d < TH1);
        match tune_parameters(&chunk, &db, TH1, EPS) {
            Some(m) => {
                accepted += 1;
                ensure(m.distance < TH1, || format!("chunk {n}: accepted at distance {}", m.distance))?;
                for &(id, d) in &all {
                    ensure(m.distance <= d, || format!("chunk {n}: cluster {id} closer ({d} < {})", m.distance))?;
                    if d == m.distance {
                        ensure(m.cluster_id <= id, || format!("chunk {n}: tie not broken by lowest id"))?;
                    }
                }
                let own = all.iter().find(|a| a.0 == m.cluster_id).unwrap().1;
                ensure(own == m.distance, || format!("chunk {n}: reported {} vs oracle {own}", m.distance))?;
            }
            None => {
                unknown += 1;
                ensure(!any_passes, || format!("chunk {n}: unknown although a cluster passes"))?;
            }
        }
    }
    ensure(accepted > 100 && unknown > 100, || format!("weak sample: {accepted} accepted, {unknown} unknown"))?;
    Ok(format!("1000 chunks vs 10 clusters: {accepted} accepted (argmin, < Th1), {unknown} unknown"))
}

// ---------------------------------------------------------------------------
// 6. controller benefit

fn criterion_6() -> Check {
    let t = Instant::now();
    let cfg = Config::default();
    let corpus = training_corpus(&cfg, 4).map_err(|e| e.to_string())?;
    let (db, summary) = run_learn_pipeline(&corpus, &cfg).map_err(|e| e.to_string())?;
    let mut means = Vec::new();
    let mut control_worst = f64::INFINITY;
    for name in [SWITCH_SCENARIO, CONTROL_SCENARIO] {
        let sc = scenario(name).map_err(|e| e.to_string())?;
        let (mut fixed, mut adaptive) = (0.0, 0.0);
        for seed in 0..5 {
            let seq = sc.generate(seed).map_err(|e| e.to_string())?;
            let r = run_compare_experiment(&seq, &db, &cfg, seed).map_err(|e| e.to_string())?;
            fixed += r.fixed.mt / 5.0;
            adaptive += r.adaptive.mt / 5.0;
            if name == CONTROL_SCENARIO {
                control_worst = control_worst.min(r.adaptive.mt - r.fixed.mt);
            }
        }
        means.push((fixed, adaptive));
    }
    let elapsed = t.elapsed();
    let (sf, sa) = means[0];
    let (cf, ca) = means[1];
    ensure(sa - sf >= 10.0, || format!("switch: adaptive MT {sa:.1} vs fixed {sf:.1}"))?;
    ensure(control_worst >= -1.0, || format!("control: adaptive fell {:.1} points below fixed", -control_worst))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "switch MT fixed {sf:.1} -> adaptive {sa:.1}; control {cf:.1} -> {ca:.1}; {} clusters from {} contexts; {elapsed:.1?}",
        summary.clusters.len(),
        summary.contexts
    ))
}

// ---------------------------------------------------------------------------
// 7. CLEAR oracle

fn criterion_7() -> Check {
    // object A (gt 1) is followed by hypothesis 1 for frames 0-9 and by
    // hypothesis 3 afterwards: one identity switch. Object B (gt 2) is
    // tracked 2 px off (IoU 2/3) and missed in frame 5.
    let a = BBox::new(0.0, 0.0, 10.0, 10.0);
    let b = BBox::new(50.0, 0.0, 10.0, 10.0);
    let b_hyp = BBox::new(52.0, 0.0, 10.0, 10.0);
    let mut gt: Vec<FrameBoxes> = Vec::new();
    let mut hyp: Vec<FrameBoxes> = Vec::new();
    for f in 0..20 {
        gt.push(vec![(1, a), (2, b)]);
        let mut h = vec![(if f < 10 { 1 } else { 3 }, a)];
        if f != 5 {
            h.push((2, b_hyp));
        }
        hyp.push(h);
    }
    let r = clear_mot(&gt, &hyp, 0.5);
    // 40 ground-truth boxes, 1 miss, 0 false positives, 1 switch
    let mota = 1.0 - 2.0 / 40.0;
    // 20 exact matches and 19 at IoU 2/3, over 39 matches
    let motp = 98.0 / 117.0;
    ensure((r.mota - mota).abs() < 1e-12, || format!("MOTA {} != {mota}", r.mota))?;
    ensure((r.motp - motp).abs() < 1e-9, || format!("MOTP {} != {motp}", r.motp))?;
    let c = r.counts;
    ensure(
        (c.matches, c.misses, c.false_positives, c.id_switches, c.total_gt) == (39, 1, 0, 1, 40),
        || format!("counts {c:?}"),
    )?;
    Ok(format!("MOTA {:.4}, MOTP {:.9} (= 98/117), counts {:?}", r.mota, r.motp, c))
}

// ---------------------------------------------------------------------------
// 8. QT oracle

/// QT by brute force: every remaining point is tried as a seed; a candidate
/// grows by the outside point giving the smallest diameter (recomputed from
/// scratch), lowest index on ties, while the diameter stays within `th1`.
/// The largest candidate wins, earliest seed on ties.
fn oracle_qt(d: &[Vec<f64>], th1: f64) -> Vec<Vec<usize>> {
    let diam = |set: &[usize]| {
        let mut m = 0.0f64;
        for &i in set {
            for &j in set {
                m = m.max(d[i][j]);
            }
        }
        m
    };
    let mut left: Vec<usize> = (0..d.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best: Vec<usize> = vec![];
        for &seed in &left {
            let mut cand = vec![seed];
            loop {
                let mut choice: Option<(usize, f64)> = None;
                for &p in &left {
                    if cand.contains(&p) {
                        continue;
                    }
                    let mut trial = cand.clone();
                    trial.push(p);
                    let dm = diam(&trial);
                    if dm <= th1 && choice.is_none_or(|(_, c)| dm < c) {
                        choice = Some((p, dm));
                    }
                }
                match choice {
                    Some((p, _)) => cand.push(p),
                    None => break,
                }
            }
            if cand.len() > best.len() {
                best = cand;
            }
        }
        left.retain(|p| !best.contains(p));
        best.sort();
        out.push(best);
    }
    out
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut multi = 0;
    for inst in 0..200 {
        let n = rng.random_range(1..=7);
        let protos: Vec<[f64; FEATURE_COUNT]> = (0..rng.random_range(1..=3)).map(|_| random_level(&mut rng)).collect();
        let contexts: Vec<LearnedContext> = (0..n)
            .map(|i| {
                let base = &protos[rng.random_range(0..protos.len())];
                let amount = rng.random_range(0.0..1.0);
                let level = jitter_level(&mut rng, base, amount);
                let len = rng.random_range(20..80);
                let model = ContextModel::build(&dense_chunk(&mut rng, len, &level, 0.4), EPS).unwrap();
                LearnedContext {
                    source: SourceId::new(format!("inst{inst}"), i),
                    start_frame: 0,
                    end_frame: len - 1,
                    model,
                    params: SatisfactoryParams {
                        weights: normalize_weights(std::array::from_fn(|_| rng.random_range(0.0..1.0))),
                        achieved_quality: 1.0,
                        satisfied: true,
                        informative: true,
                    },
                }
            })
            .collect();
        let d: Vec<Vec<f64>> = contexts
            .iter()
            .map(|a| contexts.iter().map(|b| context_to_context_distance(&a.model, &b.model, EPS)).collect())
            .collect();
        let want: Vec<Vec<SourceId>> = oracle_qt(&d, TH1)
            .into_iter()
            .map(|g| g.into_iter().map(|i| contexts[i].source.clone()).collect())
            .collect();
        let got_clusters = qt_cluster(&contexts, TH1, EPS).map_err(|e| e.to_string())?;
        let got: Vec<Vec<SourceId>> = got_clusters.iter().map(|c| c.member_ids.clone()).collect();
        ensure(got == want, || format!("instance {inst}: {got:?} vs oracle {want:?}"))?;
        for g in &got {
            let idx: Vec<usize> = g.iter().map(|s| s.segment).collect();
            for &i in &idx {
                for &j in &idx {
                    ensure(d[i][j] <= TH1, || format!("instance {inst}: diameter {} > Th1", d[i][j]))?;
                }
            }
        }
        if got.len() > 1 && got.iter().any(|g| g.len() > 1) {
            multi += 1;
        }
    }
    ensure(multi > 20, || format!("weak sample: only {multi} non-trivial instances"))?;
    Ok(format!("200 instances (1-7 contexts) identical to oracle, {multi} with several non-singleton clusters"))
}

// ---------------------------------------------------------------------------
// 9. round-trips

fn criterion_9() -> Check {
    let mut checked = 0;
    for sc in preset_scenarios() {
        for seed in [0, 17] {
            let seq = sc.generate(seed).map_err(|e| e.to_string())?;
            let first = sequence_to_string(&seq);
            let back = read_sequence(first.as_bytes()).map_err(|e| e.to_string())?;
            let second = sequence_to_string(&back);
            ensure(first == second, || format!("{} seed {seed}: sequence text changed", sc.name))?;
            ensure(back == seq, || format!("{} seed {seed}: sequence value changed", sc.name))?;
            checked += 1;
        }
    }

    let cfg = Config::default();
    let corpus = training_corpus(&cfg, 1).map_err(|e| e.to_string())?;
    let (mut db, _) = run_learn_pipeline(&corpus, &cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let level = random_level(&mut rng);
    db.pending_chunks.push(dense_chunk(&mut rng, 50, &level, 1.0));
    // awkward floats: subnormal, huge, many digits
    db.clusters[0].codebooks[5].words.push(CodeWord {
        mean: 1.0 / 3.0,
        min: f64::MIN_POSITIVE / 4.0,
        max: 1e300,
        freq: u64::MAX,
    });
    let empty = LearnedDatabase::new(TH1, EPS, 50);
    for (label, db) in [("learned", &db), ("empty", &empty)] {
        let first = db.to_json().map_err(|e| e.to_string())?;
        let back = LearnedDatabase::from_json(&first).map_err(|e| e.to_string())?;
        let second = back.to_json().map_err(|e| e.to_string())?;
        ensure(first == second, || format!("{label} database text changed"))?;
        ensure(&back == db, || format!("{label} database value changed"))?;
    }
    Ok(format!(
        "{checked} sequence files and 2 databases ({} clusters, pending chunk) bit-identical",
        db.clusters.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("literal distance oracle equivalence", criterion_1),
        ("self-distance", criterion_2),
        ("segmentation boundary", criterion_3),
        ("AdaBoost recovery", criterion_4),
        ("cluster selection conformance", criterion_5),
        ("controller benefit", criterion_6),
        ("CLEAR oracle", criterion_7),
        ("QT oracle", criterion_8),
        ("round-trips", criterion_9),
    ];
    // keep panic messages out of the report; they are folded into FAIL lines
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("[PASS] {}. {name} ({ms} ms): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {}. {name} ({ms} ms): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
