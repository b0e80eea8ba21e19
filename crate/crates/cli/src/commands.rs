use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tedio_core::data::{gen_clips, read_corpus, write_corpus, write_frames, Clip, VideoDims};
use tedio_core::diffusion::{NoiseSchedule, Trainer};
use tedio_core::experiment::checks::{run_suites, Tolerance};
use tedio_core::experiment::{
    ablate as run_ablation, ablation_csv, baseline_row, compare, parse_samples_csv,
    parse_sweep_values, run_samples, samples_csv, SweepParam,
};
use tedio_core::metrics::{dynamic_proxy, flicker_score, probe_clip, probe_noise, variability_stats, MetricReport};
use tedio_core::model::{init_params, load_checkpoint, save_checkpoint, DiTParams};
use tedio_core::tensor::io::write_tdt;
use tedio_core::{Element, Error};

use crate::config::RunConfig;

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.snapshot(&cfg.out)?;
    Ok(cfg.out.clone())
}

/// Loads the configured checkpoint and makes the run config agree with
/// it: the model shape and training objective come from the file.
fn load_model(cfg: &mut RunConfig) -> Result<(DiTParams<f32>, NoiseSchedule)> {
    let Some(path) = cfg.checkpoint.clone() else {
        bail!(Error::Usage("no checkpoint given (--checkpoint PATH)".into()));
    };
    let (params, manifest) = load_checkpoint::<f32>(&path)?;
    cfg.model = params.config.clone();
    if let Some(obj) = manifest.meta.get("objective") {
        cfg.schedule.objective = obj.parse()?;
    }
    let schedule = NoiseSchedule::new(&cfg.schedule)?;
    Ok((params, schedule))
}

fn corpus(cfg: &RunConfig) -> Result<Vec<Clip>> {
    match &cfg.data {
        Some(dir) => {
            let (manifest, clips) = read_corpus(dir)?;
            if manifest.dims != VideoDims::from(&cfg.model) {
                bail!(Error::Dimension(format!(
                    "corpus dims {:?} do not match the model {:?}",
                    manifest.dims,
                    cfg.model.latent_shape()
                )));
            }
            Ok(clips)
        }
        None => Ok(gen_clips(&cfg.corpus, &VideoDims::from(&cfg.model))?),
    }
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let manifest = write_corpus(&out, &cfg.corpus, &VideoDims::from(&cfg.model), cfg.ppm)?;
    let coherent = manifest.clips.iter().filter(|c| c.coherent).count();
    println!(
        "wrote {} clips ({} coherent, {} jittered) to {}",
        manifest.clips.len(),
        coherent,
        manifest.clips.len() - coherent,
        out.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let data: Vec<_> = corpus(cfg)?.into_iter().map(|c| (c.video, c.class)).collect();
    let params = init_params::<f32>(&cfg.model, cfg.train.seed)?;
    let schedule = NoiseSchedule::new(&cfg.schedule)?;
    let mut trainer = Trainer::new(params, schedule, cfg.train.clone())?;
    let mut csv = String::from("step,loss\n");
    let every = (cfg.train.steps / 20).max(1);
    trainer.fit(&data, |step, loss| {
        let _ = writeln!(csv, "{step},{loss}");
        if step % every == 0 {
            eprintln!("step {step}/{} loss {loss:.5}", cfg.train.steps);
        }
    })?;
    write(&out.join("loss.csv"), csv)?;
    let meta = BTreeMap::from([
        ("objective".to_string(), serde_json::to_string(&cfg.schedule.objective)?.replace('"', "")),
        ("train_steps".to_string(), cfg.train.steps.to_string()),
    ]);
    let path = out.join("model.ckpt");
    save_checkpoint(&path, &trainer.params, &meta)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sample(cfg: &mut RunConfig) -> Result<()> {
    let (params, schedule) = load_model(cfg)?;
    let out = prepare_out(cfg)?;
    let tedio = cfg.tedio_enabled.then_some(&cfg.tedio);
    let runs = run_samples(&params, &schedule, &cfg.seeds, tedio, cfg.dynamic_threshold, cfg.jobs)?;
    let videos = out.join("videos");
    fs::create_dir_all(&videos).map_err(|e| Error::Io {
        path: videos.clone(),
        source: e,
    })?;
    let mut events = String::from("seed,t,iter,loss,selected\n");
    for (record, output) in &runs {
        let name = format!("seed_{}", record.seed);
        write_tdt(&videos.join(format!("{name}.tdt")), &output.z0)?;
        if cfg.ppm {
            write_frames(&out.join("frames"), &name, &output.z0)?;
        }
        for e in &output.events {
            let sel: Vec<String> = e.selected.iter().map(usize::to_string).collect();
            let _ = writeln!(events, "{},{},{},{},{}", record.seed, e.t, e.iter, e.loss, sel.join(" "));
        }
    }
    let records: Vec<_> = runs.into_iter().map(|(r, _)| r).collect();
    write(&out.join("samples.csv"), samples_csv(&records))?;
    write(&out.join("events.csv"), events)?;
    let mean = records.iter().map(|r| r.flicker).sum::<f64>() / records.len().max(1) as f64;
    println!(
        "sampled {} seeds (tedio {}), mean flicker {mean:.6}",
        records.len(),
        if cfg.tedio_enabled { "on" } else { "off" }
    );
    Ok(())
}

pub fn probe(cfg: &mut RunConfig) -> Result<()> {
    let (params, schedule) = load_model(cfg)?;
    let out = prepare_out(cfg)?;
    let clips = corpus(cfg)?;
    let p = &cfg.probe;
    let pairs: Vec<_> = clips.iter().map(|c| (c.video.clone(), c.class)).collect();
    let table = variability_stats(
        &params,
        &schedule,
        &pairs,
        &p.blocks,
        &p.timesteps,
        &cfg.tedio.bands,
        p.noise_seed,
        cfg.jobs,
    )?;
    let mut csv = String::from("block,t,mean,median\n");
    for r in &table.rows {
        let _ = writeln!(csv, "{},{},{},{}", r.block, r.t, r.mean, r.median);
    }
    write(&out.join("variability.csv"), csv)?;

    let mut columns = vec!["flicker".to_string(), "dynamic_proxy".to_string()];
    columns.extend(table.rows.iter().map(|r| format!("S_b{}_t{}", r.block, r.t)));
    let mut report = MetricReport::new(columns);
    for (i, clip) in clips.iter().enumerate() {
        let mut row = vec![
            flicker_score(&clip.video)?,
            dynamic_proxy(&clip.video, cfg.dynamic_threshold)?,
        ];
        row.extend(&table.per_clip[i]);
        report.push(i.to_string(), row)?;
    }
    report.add_summary();
    let incoherent: Vec<bool> = clips.iter().map(|c| !c.coherent()).collect();
    if incoherent.iter().any(|&x| x) && incoherent.iter().any(|&x| !x) {
        report.add_auroc(&incoherent)?;
    }
    write(&out.join("clips.csv"), report.to_csv())?;

    let noise = probe_noise::<f32>(&params.config.latent_shape(), p.noise_seed);
    for (i, clip) in clips.iter().take(p.dump_clips).enumerate() {
        let dir = out.join("dumps").join(format!("clip_{i:05}"));
        fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let cond = clip.class % params.config.cond_vocab;
        for &b in &p.blocks {
            for &t in &p.timesteps {
                let (attn, scores) =
                    probe_clip(&params, &schedule, &clip.video, cond, b, t, &noise, &cfg.tedio.bands)?;
                write_tdt(&dir.join(format!("attn_t{t}_block{b}.tdt")), &attn.values)?;
                write_tdt(&dir.join(format!("scores_t{t}_block{b}.tdt")), &scores)?;
            }
        }
    }
    for r in &table.rows {
        println!("block {} t {}: mean S {:.6e} median {:.6e}", r.block, r.t, r.mean, r.median);
    }
    Ok(())
}

pub fn ablate(cfg: &mut RunConfig, param: &str, values: &str) -> Result<()> {
    let sweep: SweepParam = param.parse()?;
    let (params, schedule) = load_model(cfg)?;
    let values = parse_sweep_values(values, params.config.patches())?;
    let out = prepare_out(cfg)?;
    let th = cfg.dynamic_threshold;
    let rows = run_ablation(&params, &schedule, &cfg.tedio, sweep, &values, &cfg.seeds, th, cfg.jobs)?;
    write(&out.join(format!("ablation_{}.csv", sweep.name())), ablation_csv(&rows))?;
    let base = baseline_row(&params, &schedule, &cfg.seeds, th, cfg.jobs)?;
    write(&out.join("baseline.csv"), ablation_csv(&[base]))?;
    for r in &rows {
        println!("{} = {}: flicker {:.6} dynamic {:.4}", r.sweep, r.value, r.flicker_mean, r.dynamic_mean);
    }
    Ok(())
}

fn gradcheck_as<E: Element>(cfg: &RunConfig, cases: u64) -> Result<()> {
    let tol = Tolerance::for_dtype::<E>();
    let results = run_suites::<E>(cases, &tol)?;
    let out = prepare_out(cfg)?;
    let mut csv = String::from("suite,dtype,cases,worst_rel_err,tolerance,passed\n");
    for r in &results {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.suite,
            E::DTYPE,
            r.cases,
            r.worst_rel_err,
            tol.max_rel_err,
            r.passed
        );
        println!(
            "{} {:<6} cases {:>3} worst rel err {:.3e} (tol {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.cases,
            r.worst_rel_err,
            tol.max_rel_err
        );
    }
    write(&out.join("gradcheck.csv"), csv)?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.suite.as_str()).collect();
    if !failed.is_empty() {
        bail!(Error::Numeric(format!("gradient check failed: {}", failed.join(", "))));
    }
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig, cases: u64) -> Result<()> {
    if std::env::var("TEDIO_F64").is_ok_and(|v| v == "1") {
        gradcheck_as::<f64>(cfg, cases)
    } else {
        gradcheck_as::<f32>(cfg, cases)
    }
}

pub fn report(cfg: &RunConfig, baseline: &Path, refined: &Path) -> Result<()> {
    let read = |dir: &Path| -> Result<_> {
        let path = dir.join("samples.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        parse_samples_csv(&text).with_context(|| path.display().to_string())
    };
    let cmp = compare(&read(baseline)?, &read(refined)?)?;
    let out = prepare_out(cfg)?;
    write(&out.join("comparison.csv"), cmp.to_csv())?;
    let summary = cmp.summary();
    write(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
