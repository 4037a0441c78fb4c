//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p alterbt-cli --test acceptance`; pass
//! criterion numbers (e.g. `-- 1 3 6`) to run a subset.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use alterbt_core::bleu::{corpus_bleu, corpus_stats, sentence_stats};
use alterbt_core::checkpoint::{self, Checkpoint, CheckpointMeta};
use alterbt_core::landscape::{
    axis, default_levels, dot, eval_grid, extract_contours, project_trajectory, snap_point, Grid, GridSpec,
    PlaneBasis,
};
use alterbt_core::model::{Model, ModelConfig, ParameterVector};
use alterbt_core::optim::{train_steps, AdamConfig, AdamState, LrSchedule};
use alterbt_core::rng::stream_rng;
use alterbt_core::scheduler::{evaluate_dev, run_alternated, DevEvaluator, MemoryTrajectory, Phase, RunResult};
use alterbt_core::text::ParallelCorpus;
use alterbt_core::{Error, TrainConfig, TrainingMode};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(tag: u64) -> ChaCha8Rng {
    stream_rng(2024, 0xACCE, tag)
}

// 1. Analytic gradient vs central differences.

fn gradient() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        vocab_size: 12,
        embed_dim: 8,
        hidden_dim: 16,
        max_len: 16,
        label_smoothing: 0.1,
        init_scale: 0.3,
        seed: 7,
    };
    let model = Model::new(cfg).map_err(|e| e.to_string())?;
    let p = model.init_params();
    let mut r = rng(1);
    let sentence = |r: &mut ChaCha8Rng| -> Vec<u32> { (0..r.random_range(1..6)).map(|_| r.random_range(5..12)).collect() };
    let batch: Vec<_> = (0..3).map(|_| (sentence(&mut r), sentence(&mut r))).collect();
    let (_, grad) = model.loss_and_gradient(&p, &batch).map_err(|e| e.to_string())?;
    let tensors = &model.layout().tensors;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let spec = &tensors[k % tensors.len()];
        let i = r.random_range(spec.range.clone());
        let mut plus = p.clone();
        plus[i] += h;
        let mut minus = p.clone();
        minus[i] -= h;
        let lp = model.loss_and_gradient(&plus, &batch).unwrap().0;
        let lm = model.loss_and_gradient(&minus, &batch).unwrap().0;
        let fd = (lp - lm) / (2.0 * h);
        // Absolute floor: central differences carry ~1e-11 of rounding noise.
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-5);
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    check(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!("max rel err {worst:.2e} over 200 coords of {} tensors, {secs:.1}s", tensors.len()))
}

// 2. BLEU against a brute-force implementation.

fn brute_bleu(hyps: &[Vec<u32>], refs: &[Vec<u32>]) -> f64 {
    let (mut m, mut t) = ([0u64; 4], [0u64; 4]);
    let (mut hl, mut rl) = (0u64, 0u64);
    for (h, r) in hyps.iter().zip(refs) {
        hl += h.len() as u64;
        rl += r.len() as u64;
        for n in 1..=4 {
            let grams = |s: &[u32]| -> Vec<Vec<u32>> { s.windows(n).map(|w| w.to_vec()).collect() };
            let (hg, rg) = (grams(h), grams(r));
            t[n - 1] += hg.len() as u64;
            let mut used = vec![false; rg.len()];
            for g in &hg {
                if let Some(j) = (0..rg.len()).find(|&j| !used[j] && rg[j] == *g) {
                    used[j] = true;
                    m[n - 1] += 1;
                }
            }
        }
    }
    if hl == 0 || m.contains(&0) {
        return 0.0;
    }
    let geo = (0..4).map(|n| (m[n] as f64 / t[n] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if hl > rl { 1.0 } else { (1.0 - rl as f64 / hl as f64).exp() };
    100.0 * bp * geo.exp()
}

fn bleu() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(1..=10);
        let v = r.random_range(2..6u32);
        let mut hyps = Vec::new();
        let mut refs = Vec::new();
        for _ in 0..n {
            let rf: Vec<u32> = (0..r.random_range(1..12)).map(|_| r.random_range(0..v)).collect();
            let mut hy = Vec::new();
            for &x in &rf {
                if r.random_bool(0.9) {
                    hy.push(if r.random_bool(0.15) { r.random_range(0..v) } else { x });
                }
            }
            hyps.push(hy);
            refs.push(rf);
        }
        let lib = corpus_bleu(&corpus_stats(&hyps, &refs).map_err(|e| e.to_string())?);
        worst = worst.max((lib - brute_bleu(&hyps, &refs)).abs());
    }
    check(worst <= 1e-9, || format!("max deviation {worst:.3e}"))?;
    let w = |s: &str| s.split(' ').map(str::to_string).collect::<Vec<_>>();
    let a = corpus_bleu(&sentence_stats(&w("a b c d e f g"), &w("a b c d e f h")).unwrap());
    check(format!("{a:.2}") == "80.91", || format!("seven-token example gave {a}"))?;
    let z = corpus_bleu(&sentence_stats(&w("the cat sat on the mat"), &w("the cat is on the mat")).unwrap());
    check(z == 0.0, || format!("zero 4-gram example gave {z}"))?;
    Ok(format!("200 corpora within {worst:.1e}; examples {a:.2} and {z:.1}"))
}

// 3. Projection algebra.

fn pv(v: Vec<f64>) -> ParameterVector {
    ParameterVector::from_vec(v)
}

fn rvec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn projection() -> Outcome {
    let start = Instant::now();
    let e = |v: &[f64]| pv(v.to_vec());
    let p1 = PlaneBasis::from_params(e(&[0.0; 3]), e(&[1.0, 0.0, 0.0]), e(&[0.0, 1.0, 0.0])).unwrap();
    let c1 = p1.project(&[2.0, 3.0, 7.0]).unwrap();
    check(c1 == (2.0, 3.0), || format!("orthonormal example gave {c1:?}"))?;
    let p2 = PlaneBasis::from_params(e(&[0.0, 0.0]), e(&[1.0, 1.0]), e(&[1.0, -1.0])).unwrap();
    let c2 = p2.project(&[3.0, 1.0]).unwrap();
    check(c2 == (2.0, 1.0), || format!("skewed example gave {c2:?}"))?;

    let mut r = rng(3);
    let (mut resid, mut pyth): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let plane = PlaneBasis::from_params(pv(rvec(&mut r, 1000)), pv(rvec(&mut r, 1000)), pv(rvec(&mut r, 1000)))
            .map_err(|e| e.to_string())?;
        let theta = rvec(&mut r, 1000);
        let (x, y) = plane.project(&theta).unwrap();
        let foot = plane.point(x, y);
        let res = sub(&theta, &foot);
        let tn = dot(&theta, &theta).sqrt();
        resid = resid
            .max(dot(&res, &plane.delta).abs() / (tn * plane.a.sqrt()))
            .max(dot(&res, &plane.eta).abs() / (tn * plane.c.sqrt()));
        let other = plane.point(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let d = |a: &[f64], b: &[f64]| {
            let v = sub(a, b);
            dot(&v, &v)
        };
        let lhs = d(&theta, &other);
        pyth = pyth.max((lhs - d(&theta, &foot) - d(&foot, &other)).abs() / lhs);
    }
    let secs = start.elapsed().as_secs_f64();
    check(resid < 1e-9, || format!("normal-equation residual {resid:.3e}"))?;
    check(pyth < 1e-9, || format!("Pythagorean deviation {pyth:.3e}"))?;
    check(secs < 5.0, || format!("took {secs:.1}s"))?;
    Ok(format!("examples exact; residual {resid:.1e}; Pythagorean {pyth:.1e}; {secs:.2}s"))
}

// 4. Snapping is optimal against dense boundary sampling.

fn random_grid(r: &mut ChaCha8Rng) -> Grid {
    let (nx, ny) = (r.random_range(4..12), r.random_range(4..12));
    let (xs, ys) = (axis(-0.25, 1.25, nx), axis(-0.25, 1.25, ny));
    let bumps: Vec<[f64; 4]> = (0..r.random_range(1..4))
        .map(|_| {
            [
                r.random_range(-0.2..1.2),
                r.random_range(-0.2..1.2),
                r.random_range(0.1..0.6),
                r.random_range(-30.0..40.0),
            ]
        })
        .collect();
    let mut values = Vec::new();
    for &y in &ys {
        for &x in &xs {
            let mut v: f64 = 20.0 + r.random_range(-2.0..2.0);
            for [cx, cy, w, h] in &bumps {
                v += h * (-((x - cx).powi(2) + (y - cy).powi(2)) / (w * w)).exp();
            }
            values.push(v.clamp(0.0, 100.0));
        }
    }
    Grid::new(xs, ys, values).unwrap()
}

fn snap() -> Outcome {
    let mut r = rng(4);
    let (mut snapped_n, mut interior_n) = (0, 0);
    let mut worst_gap = f64::NEG_INFINITY;
    for case in 0..50 {
        let grid = random_grid(&mut r);
        let levels = default_levels(&grid, r.random_range(1..7));
        let regions = extract_contours(&grid, &levels).map_err(|e| e.to_string())?;
        let plane = PlaneBasis::from_params(pv(rvec(&mut r, 6)), pv(rvec(&mut r, 6)), pv(rvec(&mut r, 6))).unwrap();
        let bleu = grid.values[r.random_range(0..grid.values.len())];
        let band = regions.band_of(bleu);
        let (x, y) = (r.random_range(-1.0..2.0), r.random_range(-1.0..2.0));
        let (c, _, _, snapped) = snap_point(&plane, &regions, x, y, bleu).map_err(|e| e.to_string())?;
        let inside = regions.regions_in_band(band).any(|g| g.contains(x, y));
        check(snapped != inside, || format!("case {case}: snapped={snapped} but inside={inside}"))?;
        if !snapped {
            check(c == [x, y], || format!("case {case}: interior point moved"))?;
            interior_n += 1;
            continue;
        }
        snapped_n += 1;
        let got = plane.metric(c[0] - x, c[1] - y).sqrt();
        let edges: Vec<_> = regions.regions_in_band(band).flat_map(|g| g.edges()).collect();
        let lens: Vec<f64> = edges.iter().map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()).collect();
        let total: f64 = lens.iter().sum();
        let (mut k, mut acc, mut best) = (0, 0.0, f64::INFINITY);
        for s in 0..10_000 {
            let at = (s as f64 + 0.5) / 1e4 * total;
            while k + 1 < edges.len() && acc + lens[k] < at {
                acc += lens[k];
                k += 1;
            }
            let t = if lens[k] > 0.0 { ((at - acc) / lens[k]).clamp(0.0, 1.0) } else { 0.0 };
            let (a, b) = edges[k];
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            best = best.min(plane.metric(p[0] - x, p[1] - y).sqrt());
        }
        worst_gap = worst_gap.max(got - best);
        check(got <= best + 1e-6, || format!("case {case}: snapped distance {got} > sampled {best}"))?;
    }
    check(snapped_n >= 10, || format!("only {snapped_n} snapped cases"))?;
    Ok(format!("{snapped_n} snapped and {interior_n} interior cases; worst gap {worst_gap:.2e}"))
}

// 5. Scheduler traces with a scripted evaluator.

struct Scripted(Vec<f64>, usize);

impl DevEvaluator for Scripted {
    fn evaluate(&mut self, _: &Model, _: &ParameterVector) -> alterbt_core::Result<f64> {
        let v = self.0[self.1.min(self.0.len() - 1)];
        self.1 += 1;
        Ok(v)
    }
}

fn tiny_model() -> Model {
    let mut cfg = ModelConfig::new(14);
    cfg.embed_dim = 8;
    cfg.hidden_dim = 16;
    cfg.max_len = 10;
    Model::new(cfg).unwrap()
}

fn tiny_corpus(offset: u32) -> ParallelCorpus {
    ParallelCorpus::new(
        (0..12u32)
            .map(|i| (vec![5 + (i + offset) % 9, 5 + (i * 3 + 1) % 9], vec![5 + (i * 3 + 1) % 9, 5 + i % 4]))
            .collect(),
    )
    .unwrap()
}

fn scripted(mode: TrainingMode, cfg: &TrainConfig, script: &[f64]) -> Result<(RunResult, MemoryTrajectory), String> {
    let m = tiny_model();
    let mut ev = Scripted(script.to_vec(), 0);
    let mut traj = MemoryTrajectory::default();
    let res = run_alternated(mode, &m, &tiny_corpus(0), Some(&tiny_corpus(4)), cfg, &mut ev, &mut traj)
        .map_err(|e| e.to_string())?;
    Ok((res, traj))
}

fn sched_cfg(patience: u64, max_steps: u64) -> TrainConfig {
    TrainConfig {
        seed: 3,
        batch_size: 4,
        eval_interval: 5,
        patience,
        max_steps,
        ..TrainConfig::default()
    }
}

fn param_at(traj: &MemoryTrajectory, step: u64) -> &ParameterVector {
    &traj.checkpoints.iter().find(|c| c.meta.global_step == step).unwrap().params
}

fn scheduler() -> Outcome {
    struct Case {
        name: &'static str,
        mode: TrainingMode,
        cfg: TrainConfig,
        script: Vec<f64>,
        log: &'static str,
        bests: Vec<(u64, f64)>,
        final_step: u64,
        return_step: u64,
    }
    let capped = |c: u32| TrainConfig { max_cycles: c, ..sched_cfg(10, 10_000) };
    let cases = vec![
        Case {
            name: "patience [10,11,10.5,10.8,10.9]",
            mode: TrainingMode::Base,
            cfg: sched_cfg(10, 1000),
            script: vec![10.0, 11.0, 10.5, 10.8, 10.9],
            log: "A",
            bests: vec![(10, 11.0)],
            final_step: 20,
            return_step: 10,
        },
        Case {
            name: "monotone runs to budget",
            mode: TrainingMode::Base,
            cfg: sched_cfg(10, 42),
            script: (0..20).map(f64::from).collect(),
            log: "A",
            bests: vec![(42, 8.0)],
            final_step: 42,
            return_step: 42,
        },
        Case {
            name: "zero patience",
            mode: TrainingMode::Bt,
            cfg: sched_cfg(0, 1000),
            script: vec![7.0, 9.0],
            log: "S",
            bests: vec![(5, 7.0)],
            final_step: 5,
            return_step: 5,
        },
        Case {
            name: "alternation stops on small cycle gain",
            mode: TrainingMode::Alter,
            cfg: sched_cfg(10, 10_000),
            script: vec![10.0, 12.0, 11.0, 11.0, 13.0, 12.0, 12.0, 13.05, 13.0, 13.0, 13.08, 13.0, 13.0, 99.0],
            log: "SASA",
            bests: vec![(10, 12.0), (25, 13.0), (40, 13.05), (55, 13.08)],
            final_step: 65,
            return_step: 55,
        },
        Case {
            name: "A result returned even below S best",
            mode: TrainingMode::Alter,
            cfg: capped(1),
            script: vec![10.0, 12.0, 11.0, 11.0, 5.0, 4.0, 4.0],
            log: "SA",
            bests: vec![(10, 12.0), (25, 5.0)],
            final_step: 35,
            return_step: 25,
        },
        Case {
            name: "budget ends inside S",
            mode: TrainingMode::Alter,
            cfg: sched_cfg(10, 45),
            script: vec![1.0, 2.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 50.0],
            log: "SAS",
            bests: vec![(10, 2.0), (30, 4.0), (45, 50.0)],
            final_step: 45,
            return_step: 30,
        },
    ];
    for c in &cases {
        let (res, traj) = scripted(c.mode, &c.cfg, &c.script)?;
        let bests: Vec<(u64, f64)> = res.phases.iter().map(|p| (p.best_step, p.best_bleu)).collect();
        check(res.phase_log() == c.log, || format!("{}: log {}", c.name, res.phase_log()))?;
        check(bests == c.bests, || format!("{}: phase bests {bests:?}", c.name))?;
        check(res.global_step == c.final_step, || format!("{}: ended at {}", c.name, res.global_step))?;
        check(res.params.bit_eq(param_at(&traj, c.return_step)), || {
            format!("{}: returned parameters are not those of step {}", c.name, c.return_step)
        })?;
    }

    let script = [3.0, 4.0, 5.0, 4.0, 4.0, 4.0];
    let (bt, bt_traj) = scripted(TrainingMode::Bt, &sched_cfg(10, 1000), &script)?;
    let one = TrainConfig {
        max_phases: Some(1),
        ..sched_cfg(10, 1000)
    };
    let (alt, alt_traj) = scripted(TrainingMode::Alter, &one, &script)?;
    let same_traj = bt_traj.checkpoints.len() == alt_traj.checkpoints.len()
        && bt_traj.checkpoints.iter().zip(&alt_traj.checkpoints).all(|(a, b)| a.params.bit_eq(&b.params));
    check(alt.phase_log() == "S" && bt.params.bit_eq(&alt.params) && same_traj, || {
        "bt differs from single-phase alter".into()
    })?;

    let m = tiny_model();
    let err = run_alternated(TrainingMode::Alter, &m, &tiny_corpus(0), None, &sched_cfg(10, 50), &mut Scripted(vec![1.0], 0), &mut ());
    check(matches!(err, Err(Error::InvalidConfig(_))), || "alter without synthetic data accepted".into())?;
    Ok(format!("{} scripted traces matched; bt == truncated alter bit-exactly", cases.len()))
}

// 6. Direction of effect on the toy task.

fn sweep() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_alterbt"))
        .args(["sweep", "--ratios", "1,8", "--seeds", "1,2,3", "--out"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).map_err(|e| e.to_string())?;
    let mean = |mode: &str, ratio: &str| -> f64 {
        let v: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[0] == ratio && f[1] == mode)
            .map(|f| f[3].parse().unwrap())
            .collect();
        assert_eq!(v.len(), 3, "{mode} at ratio {ratio}");
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (bt1, bt8, alt8) = (mean("bt", "1"), mean("bt", "8"), mean("alter", "8"));
    let secs = start.elapsed().as_secs_f64();
    let summary = format!("bt r1 {bt1:.2}, bt r8 {bt8:.2}, alter r8 {alt8:.2}; {:.1} min", secs / 60.0);
    check(bt8 < bt1, || format!("(a) bt does not degrade with more synthetic data: {summary}"))?;
    check(alt8 >= bt8 + 0.5, || format!("(b) alter gain below 0.5 BLEU: {summary}"))?;
    check(secs < 20.0 * 60.0, || format!("too slow: {summary}"))?;
    Ok(summary)
}

// 7. Grid values at the anchors and their projections.

fn anchors() -> Outcome {
    let mut cfg = ModelConfig::new(12);
    cfg.embed_dim = 8;
    cfg.hidden_dim = 16;
    cfg.max_len = 10;
    let model = Model::new(cfg).unwrap();
    let mut r = rng(7);
    let mut sample = |n: usize| {
        ParallelCorpus::new(
            (0..n)
                .map(|_| {
                    let s: Vec<u32> = (0..r.random_range(4..7)).map(|_| r.random_range(5..12)).collect();
                    (s.clone(), s)
                })
                .collect(),
        )
        .unwrap()
    };
    let (train, dev) = (sample(60), sample(15));
    let mut params = model.init_params();
    let mut adam = AdamState::new(model.num_params(), AdamConfig::default());
    let hash = model.config().layout_hash();
    let mut ckpts = Vec::new();
    for (k, phase) in [Phase::S, Phase::A, Phase::S].into_iter().enumerate() {
        let sched = LrSchedule { peak_lr: 5e-3, warmup_steps: 50 };
        train_steps(&model, &mut params, &mut adam, &sched, &train, 8, 600, k as u64).map_err(|e| e.to_string())?;
        let bleu = evaluate_dev(&model, &params, &dev).map_err(|e| e.to_string())?;
        ckpts.push(Checkpoint {
            meta: CheckpointMeta::new(600 * (k as u64 + 1), 1 + (k as u32) / 2, phase, bleu, &hash, params.len()),
            params: params.clone(),
        });
    }
    let plane = PlaneBasis::new(&ckpts[0], &ckpts[1], &ckpts[2]).map_err(|e| e.to_string())?;
    let grid = eval_grid(&plane, &model, &dev, &GridSpec::default(), None).map_err(|e| e.to_string())?;
    let at = |x: f64, y: f64| {
        let i = grid.xs.iter().position(|&v| v == x).unwrap();
        let j = grid.ys.iter().position(|&v| v == y).unwrap();
        grid.value(i, j)
    };
    let f = [at(0.0, 0.0), at(1.0, 0.0), at(0.0, 1.0)];
    let want = [ckpts[0].meta.dev_bleu, ckpts[1].meta.dev_bleu, ckpts[2].meta.dev_bleu];
    check(f == want, || format!("grid {f:?} vs anchors {want:?}"))?;
    let regions = extract_contours(&grid, &default_levels(&grid, 6)).map_err(|e| e.to_string())?;
    let pts = project_trajectory(&plane, &regions, &ckpts).map_err(|e| e.to_string())?;
    let raw: Vec<[f64; 2]> = pts.iter().map(|p| p.raw).collect();
    check(raw == [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], || format!("anchor projections {raw:?}"))?;
    Ok(format!("f(0,0), f(1,0), f(0,1) = {:.2}, {:.2}, {:.2} on the 31x31 grid", f[0], f[1], f[2]))
}

// 8. Checkpoint round trip and rejection of damaged files.

fn checkpoints() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(8);
    for k in 0..20u64 {
        let mut v: Vec<f64> = (0..r.random_range(1..300))
            .map(|_| f64::from_bits(r.random::<u64>()))
            .map(|x| if x.is_finite() { x } else { 1.5 })
            .collect();
        let specials = [0.0, -0.0, 5e-324, -1e-310, f64::MIN_POSITIVE / 2.0];
        for (i, s) in specials.into_iter().enumerate() {
            if i < v.len() {
                v[i] = s;
            }
        }
        let c = Checkpoint {
            meta: CheckpointMeta::new(k, 1, Phase::S, r.random_range(0.0..100.0), "acc", v.len()),
            params: pv(v),
        };
        let path = dir.path().join(c.meta.file_name());
        checkpoint::save(&c, &path).map_err(|e| e.to_string())?;
        let back = checkpoint::load(&path).map_err(|e| e.to_string())?;
        check(back.params.bit_eq(&c.params) && back.meta == c.meta, || format!("vector {k} not bit-exact"))?;
    }
    let c = Checkpoint {
        meta: CheckpointMeta::new(1, 1, Phase::A, 10.0, "acc", 3),
        params: pv(vec![1.0, 2.0, 3.0]),
    };
    let good = checkpoint::encode(&c).unwrap();
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        checkpoint::load(&p)
    };
    let mut nan = good.clone();
    let n = nan.len();
    nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    let mut magic = good.clone();
    magic[0] = b'X';
    check(matches!(write("trunc", &good[..good.len() - 3]), Err(Error::CorruptCheckpoint(_))), || "truncated file accepted".into())?;
    check(matches!(write("magic", &magic), Err(Error::NotACheckpoint)), || "bad magic accepted".into())?;
    check(matches!(write("empty", b""), Err(Error::NotACheckpoint)), || "empty file accepted".into())?;
    check(matches!(write("nan", &nan), Err(Error::NonFiniteParameters)), || "NaN parameters accepted".into())?;
    Ok("20 vectors bit-exact; truncated, bad-magic, empty and NaN files rejected".into())
}

// 9. Adam against the hand example and a scalar loop.

fn adam() -> Outcome {
    let mut st = AdamState::new(1, AdamConfig::default());
    let mut p = [0.0];
    st.step(&mut p, &[1.0], 0.1).map_err(|e| e.to_string())?;
    let hand = (p[0] + 0.1 / (1.0 + 1e-9)).abs();
    check(hand < 1e-12, || format!("single step gave {}", p[0]))?;

    let cfg = AdamConfig::default();
    let mut r = rng(9);
    let mut st = AdamState::new(10, cfg);
    let mut q = rvec(&mut r, 10);
    let (mut oq, mut m, mut v) = (q.clone(), vec![0.0; 10], vec![0.0; 10]);
    let mut worst: f64 = 0.0;
    for t in 1..=10i32 {
        let g: Vec<f64> = (0..10).map(|_| r.random_range(-3.0..3.0)).collect();
        st.step(&mut q, &g, 0.01).unwrap();
        for i in 0..10 {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - cfg.beta1.powi(t));
            let vh = v[i] / (1.0 - cfg.beta2.powi(t));
            oq[i] -= 0.01 * mh / (vh.sqrt() + cfg.eps);
            worst = worst.max((q[i] - oq[i]).abs());
        }
    }
    check(worst <= 1e-15, || format!("scalar oracle deviation {worst:.3e}"))?;
    Ok(format!("hand step {:.12}; scalar oracle within {worst:.1e} over 10 steps", p[0]))
}

// 10. Two identical alter runs through the binary.

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"train": {"max_steps": 400, "eval_interval": 25, "patience": 75},
            "corpus": {"train_pairs": 150, "dev_pairs": 30, "mono_sentences": 150}}"#,
    )
    .unwrap();
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_alterbt"))
            .current_dir(d)
            .args(["--config", "cfg.json", "--seed", "11"])
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    };
    run(&["taskgen", "--out", "data"])?;
    run(&["train", "--mode", "base", "--reverse", "--authentic", "data/train", "--dev", "data/dev", "--out", "back"])?;
    run(&["backtranslate", "--checkpoint", "back/final.bin", "--mono", "data/mono.tgt", "--out", "data/syn"])?;
    for name in ["r1", "r2"] {
        run(&["train", "--mode", "alter", "--authentic", "data/train", "--synthetic", "data/syn", "--dev", "data/dev", "--out", name])?;
    }
    let body = |p: &Path| -> Result<ParameterVector, String> { Ok(checkpoint::load(p).map_err(|e| e.to_string())?.params) };
    let phase_log = |run: &str| -> Result<String, String> {
        let text = std::fs::read_to_string(d.join(run).join("summary.json")).map_err(|e| e.to_string())?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        Ok(format!("{} {}", v["phase_log"], v["phases"].as_array().map_or(0, |a| a.len())))
    };
    let same = body(&d.join("r1/final.bin"))?.bit_eq(&body(&d.join("r2/final.bin"))?);
    check(same, || "final checkpoints differ".into())?;
    let (l1, l2) = (phase_log("r1")?, phase_log("r2")?);
    check(l1 == l2, || format!("phase logs differ: {l1} vs {l2}"))?;
    let log1 = std::fs::read_to_string(d.join("r1/evals.jsonl")).map_err(|e| e.to_string())?;
    let log2 = std::fs::read_to_string(d.join("r2/evals.jsonl")).map_err(|e| e.to_string())?;
    check(log1 == log2, || "evaluation logs differ".into())?;
    Ok(format!("final checkpoints bit-identical; phase log {l1}"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "gradient vs finite differences", gradient),
        (2, "BLEU oracle equivalence", bleu),
        (3, "projection algebra", projection),
        (4, "snap optimality", snap),
        (5, "scheduler state machine", scheduler),
        (6, "desk-scale direction of effect", sweep),
        (7, "landscape anchors", anchors),
        (8, "checkpoint round trip", checkpoints),
        (9, "Adam unit step", adam),
        (10, "determinism", determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n:>2}: PASS  {name} ({msg}) [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL  {name} ({msg}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
