//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{max_abs_diff, mini_batch, mini_config, mini_params, random_column};
use sne_core::codec::{baseline_decode, dct_forward, dct_inverse, encode_image, EncodeMode, QuantTable};
use sne_core::corpus::{desk_corpus, desk_split};
use sne_core::estimator::cell::skip_accumulator_next;
use sne_core::estimator::{
    decode_image, decode_image_with_stats, load_checkpoint, run_episode, save_checkpoint, state_step, CellKind,
    EpisodeState, ModelConfig, Sibling, SiblingState, SkipMode, SneParams, TargetBlock,
};
use sne_core::eval::{ksweep, max_scales, ms_ssim, psnr, ssim, write_pnm};
use sne_core::image::ImageBuffer;
use sne_core::numerics::{finite_diff_check, NamedTensors, RngStream, Tensor2};
use sne_core::trainer::{
    batch_loss, comm_loss, reg_comm_loss, render_log, sample_noise, train, Channel, EpochLog, LossConfig,
    OptimizerMode, RunConfig, TrainSample, TrainSchedule,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn gradcheck(params: &SneParams, batch: &[TrainSample], cfg: &LossConfig) -> Result<(f64, usize), String> {
    let refs: Vec<&TrainSample> = batch.iter().collect();
    let noise = sample_noise(&refs, params.config.state_dim, cfg, &mut RngStream::new(0)).map_err(err)?;
    let report = finite_diff_check(
        |p: &SneParams| Ok(batch_loss(&refs, p, cfg, &noise, false)?.0.total),
        |p: &SneParams| Ok(batch_loss(&refs, p, cfg, &noise, true)?.1.unwrap()),
        params,
        1e-4,
    )
    .map_err(err)?;
    ensure(report.per_tensor.contains_key("comm.w_err"), || "W_err not checked".into())?;
    Ok((report.max_relative_error, report.coordinates))
}

fn gradient_fidelity() -> Check {
    let start = Instant::now();
    let batch = mini_batch();
    ensure(batch.len() == 2, || format!("expected B = 2 samples, got {}", batch.len()))?;
    let loss = LossConfig { alpha: 0.1, k: 2, ..LossConfig::default() };
    let lstm = mini_params(mini_config(CellKind::Lstm, SkipMode::None), 31);
    let (e_plain, n_plain) = gradcheck(&lstm, &batch, &loss)?;

    // With the straight-through path off the binarizer has a true zero
    // derivative, so finite differences agree on every coordinate.
    let mut gated = mini_params(mini_config(CellKind::Lstm, SkipMode::SkipBoth), 32);
    for s in ["src", "co"] {
        gated.set(&format!("{s}.skip.b"), Tensor2::filled(1, 1, -2.0)).map_err(err)?;
    }
    let no_ste = LossConfig { straight_through: false, ..loss };
    let (e_skip, n_skip) = gradcheck(&gated, &batch, &no_ste)?;
    let secs = start.elapsed().as_secs_f64();
    let detail =
        format!("max rel err {e_plain:.2e} over {n_plain} coords, SkipBoth {e_skip:.2e} over {n_skip}, {secs:.1} s");
    ensure(e_plain <= 1e-5 && e_skip <= 1e-5 && secs < 60.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 2

fn co_norm(g: &NamedTensors) -> f64 {
    g.iter().filter(|(n, _)| n.starts_with("co.")).map(|(_, t)| t.norm().powi(2)).sum::<f64>().sqrt()
}

fn channel_bidirectionality() -> Check {
    let batch = mini_batch();
    let refs: Vec<&TrainSample> = batch.iter().collect();
    let noise = vec![None; refs.len()];
    let p = mini_params(mini_config(CellKind::Lstm, SkipMode::None), 35);
    let on = LossConfig { alpha: 0.1, co_mse_weight: 0.0, ..LossConfig::default() };
    let off = LossConfig { alpha: 0.0, ..on.clone() };
    let g_on = batch_loss(&refs, &p, &on, &noise, true).map_err(err)?.1.unwrap();
    let g_off = batch_loss(&refs, &p, &off, &noise, true).map_err(err)?.1.unwrap();
    let (a, b) = (co_norm(&g_on), co_norm(&g_off));
    let detail = format!("|grad co| = {a:.3e} at alpha 0.1, {b:e} at alpha 0");
    ensure(a > 0.0 && b == 0.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 3

fn co_estimator_discard() -> Check {
    let img = desk_corpus().swap_remove(0);
    let rep = encode_image(&img, &QuantTable::standard(8, 0.15).map_err(err)?, EncodeMode::Aligned).map_err(err)?;
    let cfg = ModelConfig { state_dim: 16, skip: SkipMode::SkipBoth, ..ModelConfig::default() };
    let full = SneParams::init(cfg, &mut RngStream::new(3), 0.3).map_err(err)?;
    let stripped = full.without_co_estimator();
    ensure(stripped.tensors().len() < full.tensors().len(), || "nothing stripped".into())?;
    let decode = |p: &SneParams| -> Result<Vec<u8>, String> {
        let loaded = load_checkpoint(&save_checkpoint(p)).map_err(err)?;
        let out = decode_image(&rep, &loaded, 3, SkipMode::SkipBoth).map_err(err)?;
        let mut bytes = write_pnm(&out).map_err(err)?;
        bytes.extend(out.data().iter().flat_map(|v| v.to_le_bytes()));
        Ok(bytes)
    };
    let (a, b) = (decode(&full)?, decode(&stripped)?);
    ensure(a == b, || "decoded bytes differ".into())?;
    Ok(format!(
        "{} of {} tensors removed, {} output bytes identical",
        full.tensors().len() - stripped.tensors().len(),
        full.tensors().len(),
        a.len()
    ))
}

// ---------------------------------------------------------------- 4

fn degeneracy_suite() -> Check {
    let mut rng = RngStream::new(40);

    let z = random_column(&mut rng, 8, 1.0);
    let other = random_column(&mut rng, 8, 1.0);
    let w = rng.uniform_tensor(8, 8, -1.0, 1.0);
    let eps = rng.sample_gaussian(0.0, 0.0, 8, 1).map_err(err)?;
    let reg = reg_comm_loss(&z, &other, Some(&w), &eps).map_err(err)?;
    let plain = comm_loss(&z, &other, &w).map_err(err)?;
    let d_reg = (reg - plain).abs();
    ensure(d_reg <= 1e-12, || format!("reg_comm(σ²=0) differs from comm by {d_reg:e}"))?;

    let mut gated = mini_params(mini_config(CellKind::Lstm, SkipMode::SkipBoth), 8);
    for s in ["src", "co"] {
        gated.set(&format!("{s}.skip.b"), Tensor2::filled(1, 1, 60.0)).map_err(err)?;
    }
    let plain_cfg = mini_config(CellKind::Lstm, SkipMode::None);
    let names: Vec<String> = plain_cfg.all_shapes().into_iter().map(|(n, _)| n).collect();
    let ungated =
        SneParams::from_tensors(plain_cfg, names.iter().map(|n| (n.clone(), gated.get(n).unwrap().clone())).collect())
            .map_err(err)?;
    let ctx = |rng: &mut RngStream| -> Vec<Tensor2> { (0..4).map(|_| random_column(rng, 16, 1.0)).collect() };
    let (src, co) = (ctx(&mut rng), ctx(&mut rng));
    let target = TargetBlock { input: random_column(&mut rng, 16, 1.0), pixels: rng.uniform_tensor(16, 1, 0.0, 1.0) };
    let carry = EpisodeState::zeros(8, 1);
    let a = run_episode(&src, &co, Some(&target), &carry, 3, &gated, true).map_err(err)?;
    let b = run_episode(&src, &co, Some(&target), &carry, 3, &ungated, true).map_err(err)?;
    let d_sat = a
        .src_predictions
        .iter()
        .zip(&b.src_predictions)
        .chain(a.co_predictions.iter().zip(&b.co_predictions))
        .map(|(x, y)| max_abs_diff(x, y))
        .fold(0.0, f64::max);
    ensure(d_sat <= 1e-12, || format!("saturated gates deviate by {d_sat:e}"))?;

    let mut closed = mini_params(mini_config(CellKind::Lstm, SkipMode::SkipBoth), 6);
    closed.set("src.skip.b", Tensor2::filled(1, 1, -10.0)).map_err(err)?;
    let prev = SiblingState {
        h: random_column(&mut rng, 8, 0.5),
        c: random_column(&mut rng, 8, 0.5),
        u_hat: Tensor2::filled(1, 1, 0.2),
    };
    let next = state_step(&random_column(&mut rng, 8, 1.0), &prev, Sibling::Source, &closed).map_err(err)?;
    ensure(next.h == prev.h && next.c == prev.c, || "u = 0 changed the state".into())?;

    let mut u_hat = 1.0;
    for _ in 0..100_000 {
        let u = if u_hat >= 0.5 { 1.0 } else { 0.0 };
        u_hat = skip_accumulator_next(u, u_hat, rng.uniform(0.0, 1.0));
        ensure((0.0..=1.0).contains(&u_hat), || format!("accumulator left [0, 1]: {u_hat}"))?;
    }
    Ok(format!("reg/comm gap {d_reg:.1e}, saturated gap {d_sat:.1e}, frozen state exact, 1e5 fuzz steps in range"))
}

// ---------------------------------------------------------------- 5

const DESK_QUALITY: f64 = 0.15;

fn desk_config() -> RunConfig {
    RunConfig {
        model: ModelConfig { state_dim: 32, ..ModelConfig::default() },
        schedule: TrainSchedule {
            total_epochs: 200,
            switch_epoch: 80,
            reg_period: 8,
            lr0: 2e-3,
            batch: 64,
            ..TrainSchedule::default()
        },
        quality: DESK_QUALITY,
        seed: 1,
        threads: 1,
        ..RunConfig::default()
    }
}

fn desk_learning_gain() -> (Check, Option<SneParams>) {
    let run = || -> Result<(String, SneParams), String> {
        let table = QuantTable::standard(8, DESK_QUALITY).map_err(err)?;
        let corpus = desk_corpus();
        let mut bpp = 0.0;
        for img in &corpus {
            bpp += encode_image(img, &table, EncodeMode::Aligned).map_err(err)?.bpp_estimate();
        }
        bpp /= corpus.len() as f64;
        ensure((0.3..=0.5).contains(&bpp), || format!("bpp {bpp:.3} outside 0.3–0.5"))?;

        let (train_set, held_out) = desk_split();
        let mut base = 0.0;
        for img in &held_out {
            let rep = encode_image(img, &table, EncodeMode::Aligned).map_err(err)?;
            base += psnr(img, &baseline_decode(&rep).map_err(err)?).map_err(err)?;
        }
        base /= held_out.len() as f64;

        let start = Instant::now();
        let out = train(&desk_config(), &train_set, &held_out, |_| {}).map_err(err)?;
        let secs = start.elapsed().as_secs_f64();
        let learned = out.log.last().map(|r| r.val_psnr).unwrap_or(f64::NAN);
        let gain = learned - base;
        let detail = format!(
            "bpp {bpp:.3}, held-out baseline {base:.3} dB, SNE {learned:.3} dB, gain {gain:+.3} dB, {secs:.0} s"
        );
        ensure(gain >= 0.2 && secs < 600.0, || detail.clone())?;
        Ok((detail, out.params))
    };
    match run() {
        Ok((detail, params)) => (Ok(detail), Some(params)),
        Err(e) => (Err(e), None),
    }
}

// ---------------------------------------------------------------- 6

fn small_run(seed: u64, threads: usize, total: usize, switch: usize) -> Result<(Vec<u8>, Vec<EpochLog>), String> {
    let (train_set, held_out) = desk_split();
    let cfg = RunConfig {
        model: ModelConfig { state_dim: 8, ..ModelConfig::default() },
        schedule: TrainSchedule {
            total_epochs: total,
            switch_epoch: switch,
            lr0: 2e-3,
            batch: 64,
            ..TrainSchedule::default()
        },
        quality: DESK_QUALITY,
        seed,
        threads,
        ..RunConfig::default()
    };
    let out = train(&cfg, &train_set[..2], &held_out[..1], |_| {}).map_err(err)?;
    Ok((save_checkpoint(&out.params), out.log))
}

fn schedule_conformance() -> Check {
    // The switch must precede the last epoch, so a 40-epoch run with the switch
    // at 32 carries the full 32-epoch window of the criterion.
    let (_, log) = small_run(5, 0, 40, 32)?;
    ensure(log.len() == 40, || format!("{} log rows", log.len()))?;
    let mut reg_epochs = Vec::new();
    for row in &log[..32] {
        match (row.channel, row.k) {
            (Channel::RegComm, 3) => reg_epochs.push(row.epoch),
            (Channel::Comm, 2) => {}
            other => return Err(format!("epoch {}: unexpected {other:?}", row.epoch)),
        }
    }
    ensure(reg_epochs == [7, 15, 23, 31], || format!("reg_comm at {reg_epochs:?}"))?;
    ensure(log[32..].iter().all(|r| r.channel == Channel::Comm && r.k == 2), || "reg_comm after the switch".into())?;
    let flips: Vec<usize> = log.windows(2).filter(|w| w[0].mode != w[1].mode).map(|w| w[1].epoch).collect();
    ensure(flips == [32] && log[0].mode == OptimizerMode::Adam && log[39].mode == OptimizerMode::Sgd, || {
        format!("optimizer flips at {flips:?}")
    })?;
    ensure(log[31].sigma2 > 0.0 && log[32..].iter().all(|r| r.sigma2 == 0.0), || {
        "σ² does not hit 0 at the switch".into()
    })?;
    Ok("reg_comm/K=3 at epochs [7, 15, 23, 31], adam→sgd once at 32, σ²=0 from 32".into())
}

// ---------------------------------------------------------------- 7

fn k_sweep_protocol(trained: Option<&SneParams>) -> Check {
    let params = match trained {
        Some(p) => p.clone(),
        None => SneParams::init(desk_config().model, &mut RngStream::new(7), 0.05).map_err(err)?,
    };
    let img = desk_split().1.swap_remove(0);
    let rep =
        encode_image(&img, &QuantTable::standard(8, DESK_QUALITY).map_err(err)?, EncodeMode::Aligned).map_err(err)?;
    let ks: Vec<usize> = (1..=6).collect();
    let report = ksweep(&rep, &img, &params, &ks).map_err(err)?;
    let text = report.to_string();
    let header = text.lines().find(|l| l.contains("K = 1")).ok_or("no header row")?;
    let psnr_row = text.lines().find(|l| l.starts_with("PSNR")).ok_or("no PSNR row")?;
    ensure(ks.iter().all(|k| header.contains(&format!("K = {k}"))) && psnr_row.split('|').count() == 7, || {
        format!("table is not six columns:\n{text}")
    })?;
    for row in &report.rows {
        ensure(row.steps_per_patch == row.k as f64, || format!("K = {}: {} steps", row.k, row.steps_per_patch))?;
    }

    let mut times = Vec::new();
    for &k in &ks {
        let mut best = f64::INFINITY;
        for _ in 0..7 {
            let t = Instant::now();
            let (_, stats) = decode_image_with_stats(&rep, &params, k, params.config.skip).map_err(err)?;
            best = best.min(t.elapsed().as_secs_f64());
            ensure(stats.state_steps == k * stats.patches, || format!("K = {k}: {} steps", stats.state_steps))?;
        }
        times.push(best);
    }
    let n = ks.len() as f64;
    let mx = ks.iter().sum::<usize>() as f64 / n;
    let my = times.iter().sum::<f64>() / n;
    let sxy: f64 = ks.iter().zip(&times).map(|(&k, t)| (k as f64 - mx) * (t - my)).sum();
    let sxx: f64 = ks.iter().map(|&k| (k as f64 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let worst = ks
        .iter()
        .zip(&times)
        .map(|(&k, t)| {
            let fit = icept + slope * k as f64;
            (t - fit).abs() / fit
        })
        .fold(0.0, f64::max);
    let detail = format!(
        "6 columns, steps/patch = K exactly, time {:.2} ms + {:.2} ms·K, worst deviation {:.1}%",
        icept * 1e3,
        slope * 1e3,
        worst * 100.0
    );
    ensure(slope > 0.0 && worst <= 0.2, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 8

fn brute_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (h, w) = (a.height(), a.width());
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=h - 8 {
        for x in 0..=w - 8 {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for dy in 0..8 {
                for dx in 0..8 {
                    xs.push(a.get(y + dy, x + dx, 0));
                    ys.push(b.get(y + dy, x + dx, 0));
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / 64.0;
            let (ma, mb) = (mean(&xs), mean(&ys));
            let va = xs.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / 64.0;
            let vb = ys.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / 64.0;
            let cov = xs.iter().zip(&ys).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / 64.0;
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn metric_oracles() -> Check {
    let mut rng = RngStream::new(80);
    let a = ImageBuffer::from_fn(16, 16, |_, _| rng.uniform(0.0, 0.9));
    let shifted = ImageBuffer::from_fn(16, 16, |y, x| a.get(y, x, 0) + 0.1);
    let p = psnr(&a, &shifted).map_err(err)?;
    ensure((p - 20.0).abs() <= 1e-9, || format!("offset psnr {p}"))?;

    let big = desk_corpus().swap_remove(2);
    let s = ssim(&big, &big).map_err(err)?;
    let ms = ms_ssim(&big, &big, max_scales(big.height(), big.width())).map_err(err)?;
    ensure(s == 1.0 && ms == 1.0, || format!("self ssim {s}, ms_ssim {ms}"))?;

    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = ImageBuffer::from_fn(16, 16, |_, _| rng.uniform(0.0, 1.0));
        let y = ImageBuffer::from_fn(16, 16, |r, c| (x.get(r, c, 0) + rng.uniform(-0.3, 0.3)).clamp(0.0, 1.0));
        worst = worst.max((ssim(&x, &y).map_err(err)? - brute_ssim(&x, &y)).abs());
    }
    ensure(worst <= 1e-9, || format!("ssim vs brute force {worst:e}"))?;
    Ok(format!("offset psnr {p:.12} dB, self ssim = ms_ssim = 1, brute-force gap {worst:.1e}"))
}

// ---------------------------------------------------------------- 9

fn codec_oracles() -> Check {
    let mut rng = RngStream::new(90);
    let (mut round, mut parseval): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let block = rng.uniform_tensor(8, 8, -1.0, 1.0);
        let coeffs = dct_forward(&block).map_err(err)?;
        round = round.max(max_abs_diff(&dct_inverse(&coeffs).map_err(err)?, &block));
        let energy = |t: &Tensor2| t.data().iter().map(|v| v * v).sum::<f64>();
        parseval = parseval.max((energy(&coeffs) - energy(&block)).abs());
    }
    ensure(round <= 1e-9 && parseval <= 1e-9, || format!("round trip {round:e}, parseval {parseval:e}"))?;

    let corpus = desk_corpus();
    let qualities = [1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.15, 0.1, 0.05];
    let mut rates = Vec::new();
    for q in qualities {
        let table = QuantTable::standard(8, q).map_err(err)?;
        let mut bits = 0.0;
        for img in &corpus {
            bits += encode_image(img, &table, EncodeMode::Aligned).map_err(err)?.bpp_estimate();
        }
        rates.push(bits / corpus.len() as f64);
    }
    ensure(rates.windows(2).all(|w| w[1] <= w[0]), || format!("bpp not monotone: {rates:.3?}"))?;
    Ok(format!(
        "round trip {round:.1e}, parseval {parseval:.1e}, bpp {:.3} → {:.3} over {} qualities",
        rates[0],
        rates[rates.len() - 1],
        qualities.len()
    ))
}

// ---------------------------------------------------------------- 10

fn determinism() -> Check {
    let (ck_a, log_a) = small_run(11, 1, 6, 4)?;
    let reference = (ck_a, render_log(&log_a));
    for threads in [1, 2, 4, 0] {
        let (ck, log) = small_run(11, threads, 6, 4)?;
        ensure(ck == reference.0, || format!("checkpoint differs with {threads} threads"))?;
        ensure(render_log(&log) == reference.1, || format!("log differs with {threads} threads"))?;
    }
    let (other, _) = small_run(12, 1, 6, 4)?;
    ensure(other != reference.0, || "seed has no effect".into())?;
    Ok(format!("{}-byte checkpoint and log identical across threads 1, 1, 2, 4, default", reference.0.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, check: Check| match check {
        Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL {n:>2} {name}: {detail}");
        }
    };
    report(1, "gradient fidelity", gradient_fidelity());
    report(2, "channel bidirectionality", channel_bidirectionality());
    report(3, "co-estimator discard", co_estimator_discard());
    report(4, "degeneracy suite", degeneracy_suite());
    let (desk, trained) = desk_learning_gain();
    report(5, "desk-scale learning gain", desk);
    report(6, "schedule conformance", schedule_conformance());
    report(7, "k-sweep protocol", k_sweep_protocol(trained.as_ref()));
    report(8, "metric oracles", metric_oracles());
    report(9, "codec oracles", codec_oracles());
    report(10, "determinism", determinism());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
