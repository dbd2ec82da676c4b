use std::path::Path;

use boostdec::boost::{self, UcDataset};
use boostdec::eval::{self, Arithmetic};
use boostdec::train::{self, MetricsCsv, TrainData};
use boostdec::{ChannelSpec, Decoder, Error, Result, TannerGraph, WeightSet};

use crate::config::{base_only, Loaded};

/// Prints the one-line summary every subcommand ends with.
fn summary(command: &str, fields: &[(&str, String)]) {
    let mut line = format!("command={command}");
    for (k, v) in fields {
        line.push(' ');
        line.push_str(k);
        line.push('=');
        line.push_str(v);
    }
    println!("{line}");
}

fn load_weights(l: &Loaded, g: &TannerGraph, path: &Path) -> Result<WeightSet> {
    let ws = WeightSet::load(path)?;
    ws.check_graph(g)?;
    if ws.code_id != l.code_id() {
        log::warn!(
            "weights were built for code {}, config names {}",
            ws.code_id,
            l.code_id()
        );
    }
    Ok(ws)
}

/// `paths.weights_in` if given, else unit weights over the whole plan.
fn weights_or_ones(l: &Loaded, g: &TannerGraph) -> Result<WeightSet> {
    match &l.cfg.paths.weights_in {
        Some(_) => load_weights(l, g, &l.input(&l.cfg.paths.weights_in, "weights_in")?),
        None => Ok(l.cfg.plan.template(&l.code_id(), l.dims(g))),
    }
}

fn metrics_sink(l: &Loaded) -> Result<Option<MetricsCsv>> {
    l.cfg
        .paths
        .metrics
        .as_ref()
        .map(|p| MetricsCsv::open(&l.resolve(p)))
        .transpose()
}

fn save_dataset(l: &Loaded, uc: &UcDataset, target: usize) -> Result<()> {
    let out = l.output(&l.cfg.paths.dataset_out, "dataset_out")?;
    uc.save(&out)?;
    summary(
        "dataset",
        &[
            ("path", out.display().to_string()),
            ("frames", uc.len().to_string()),
            ("train", uc.train().len().to_string()),
            ("test", uc.test().len().to_string()),
            ("trials", uc.provenance.trials.to_string()),
            ("fer_estimate", format!("{:e}", uc.provenance.fer_estimate)),
            ("budget_exceeded", uc.provenance.budget_exceeded.to_string()),
        ],
    );
    uc.require_complete(target)
}

pub fn train_base(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let out = l.output(&l.cfg.paths.weights_out, "weights_out")?;
    let mut ws = base_only(&l.cfg.plan).template(&l.code_id(), l.dims(&g));
    ws.quantizer = Some(l.cfg.decoder.quantizer);
    let rate = l.cfg.channel.as_ref().and_then(|c| c.code_rate).unwrap_or(g.rate());
    let channels: Vec<ChannelSpec> = l
        .cfg
        .train
        .base_ebno_db
        .iter()
        .map(|&db| ChannelSpec::awgn(db, rate))
        .collect();
    let data = TrainData::Fresh {
        channels: &channels,
        frames_per_epoch: l.cfg.train.frames_per_epoch,
    };
    let mut sink = metrics_sink(l)?;
    let rule = l.cfg.decoder.config(1);
    let metrics = train::train(&g, &mut ws, &rule, data, None, &l.cfg.train.config(), l.cfg.seed, |m| {
        sink.as_mut().map_or(Ok(()), |s| s.write(m))
    })?;
    ws.save(&out)?;
    summary(
        "train-base",
        &[
            ("weights", out.display().to_string()),
            ("params", ws.num_params().to_string()),
            ("iterations", ws.total_iterations().to_string()),
            ("epochs", metrics.len().to_string()),
            (
                "final_loss",
                metrics.last().map_or("nan".into(), |m| m.mean_loss.to_string()),
            ),
        ],
    );
    Ok(())
}

pub fn collect(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let ws = weights_or_ones(l, &g)?;
    let iters = l.cfg.collect.iterations.unwrap_or(l.cfg.plan.base_iterations);
    let channel = l.channel(&g, None)?;
    let target = l.cfg.collect.target;
    let uc = boost::collect_uc(
        &g,
        &ws,
        &l.cfg.decoder.config(iters),
        &channel,
        &l.collect(target),
        l.cfg.seed,
    )?;
    save_dataset(l, &uc, target)
}

pub fn augment(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let ws = weights_or_ones(l, &g)?;
    let src = UcDataset::load(&l.input(&l.cfg.paths.dataset_in, "dataset_in")?)?;
    let p = &src.provenance;
    let c = &l.cfg.collect;
    let per = l.collect(c.per_source);
    let uc = boost::augment(
        &g,
        &ws,
        &p.decoder_config(),
        src.frames(),
        &p.channel,
        c.per_source,
        c.beta,
        &per,
        l.cfg.seed,
    )?;
    save_dataset(l, &uc, src.len() * c.per_source)
}

pub fn transfer(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let src = WeightSet::load(&l.input(&l.cfg.paths.source_weights, "source_weights")?)?;
    let template = l.cfg.plan.template(&l.code_id(), l.dims(&g));
    let ws = boost::transfer_init(&src, &template)?;
    let out = l.output(&l.cfg.paths.weights_out, "weights_out")?;
    ws.save(&out)?;
    summary(
        "transfer",
        &[
            ("weights", out.display().to_string()),
            ("source", src.code_id.clone()),
            ("params", ws.num_params().to_string()),
        ],
    );
    Ok(())
}

pub fn train_post(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let base = load_weights(l, &g, &l.input(&l.cfg.paths.weights_in, "weights_in")?)?;
    let uc = UcDataset::load(&l.input(&l.cfg.paths.dataset_in, "dataset_in")?)?;
    let out = l.output(&l.cfg.paths.weights_out, "weights_out")?;
    let mut sink = metrics_sink(l)?;
    let report = boost::train_post(
        &g,
        &base,
        &l.cfg.plan,
        l.cfg.train.post_index,
        &uc,
        &l.cfg.decoder.config(1),
        &l.cfg.train.config(),
        l.cfg.seed,
        |m| sink.as_mut().map_or(Ok(()), |s| s.write(m)),
    )?;
    report.weights.save(&out)?;
    summary(
        "train-post",
        &[
            ("weights", out.display().to_string()),
            ("params", report.weights.num_params().to_string()),
            ("test_fer_initial", report.test_fer_initial.to_string()),
            ("test_fer", report.test_fer.to_string()),
        ],
    );
    Ok(())
}

fn eval_decoder<'g>(l: &Loaded, g: &'g TannerGraph, ws: &WeightSet) -> Result<Decoder<'g>> {
    let iters = l.cfg.fer.iterations.unwrap_or(ws.total_iterations());
    Decoder::new(g, ws, l.cfg.decoder.config(iters))
}

pub fn fer(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let ws = weights_or_ones(l, &g)?;
    let dec = eval_decoder(l, &g, &ws)?;
    let mask = l.info_mask(&g);
    let snrs = if l.cfg.fer.ebno_db.is_empty() {
        vec![l.channel(&g, None)?.ebno_db]
    } else {
        l.cfg.fer.ebno_db.clone()
    };
    let mut points = Vec::with_capacity(snrs.len());
    for (i, &db) in snrs.iter().enumerate() {
        let ch = l.channel(&g, Some(db))?;
        let seed = l.cfg.seed.wrapping_add(i as u64);
        let p = eval::estimate_fer(&dec, ws.params(), &ch, &l.fer(), mask.as_deref(), seed)?;
        log::info!("{db} dB: {} errors in {} frames", p.frame_errors, p.frames);
        points.push(p);
    }
    match &l.cfg.paths.fer_csv {
        Some(p) => eval::write_fer_csv(std::fs::File::create(l.resolve(p))?, &points)?,
        None => eval::write_fer_csv(std::io::stdout().lock(), &points)?,
    }
    let capped = points.iter().filter(|p| p.budget_capped).count();
    summary(
        "fer",
        &[
            ("points", points.len().to_string()),
            ("frames", points.iter().map(|p| p.frames).sum::<u64>().to_string()),
            (
                "frame_errors",
                points.iter().map(|p| p.frame_errors).sum::<u64>().to_string(),
            ),
            ("budget_capped", capped.to_string()),
        ],
    );
    if capped > 0 {
        let worst = points.iter().find(|p| p.budget_capped).expect("capped point");
        return Err(Error::BudgetExceeded {
            budget: l.cfg.budget,
            found: worst.frame_errors as usize,
            target: l.cfg.fer.stop_errors as usize,
        });
    }
    Ok(())
}

pub fn test_fer(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let ws = weights_or_ones(l, &g)?;
    let uc = UcDataset::load(&l.input(&l.cfg.paths.dataset_in, "dataset_in")?)?;
    let dec = eval_decoder(l, &g, &ws)?;
    let fer = eval::test_fer(&dec, ws.params(), uc.test())?;
    summary(
        "test-fer",
        &[
            ("frames", uc.test().len().to_string()),
            ("iterations", dec.config().iterations.to_string()),
            ("test_fer", fer.to_string()),
        ],
    );
    Ok(())
}

pub fn complexity(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let c = l.cfg.complexity;
    let iters = l.cfg.plan.total_iterations();
    let memory = match c.arithmetic {
        Arithmetic::MinSum => 0,
        Arithmetic::Weighted => 1,
        Arithmetic::Neural => l.cfg.plan.template(&l.code_id(), l.dims(&g)).num_params(),
    };
    let r = eval::complexity_report(&g, c.arithmetic, iters, memory, c.log_base);
    if let Some(p) = &l.cfg.paths.report {
        std::fs::write(l.resolve(p), serde_json::to_string_pretty(&r)?)?;
    }
    let degrees: Vec<String> = r
        .per_degree
        .iter()
        .map(|d| format!("{}:{}:{}", d.degree, d.checks, d.alpha))
        .collect();
    summary(
        "complexity",
        &[
            ("additions", r.additions.to_string()),
            ("comparisons", r.comparisons.to_string()),
            ("multiplications", r.multiplications.to_string()),
            ("alpha_mean", format!("{:.4}", r.alpha_mean)),
            ("degrees", degrees.join(",")),
            ("iterations", r.iterations.to_string()),
            ("total", r.total.to_string()),
            ("weight_memory", r.weight_memory.to_string()),
        ],
    );
    Ok(())
}

pub fn histogram(l: &Loaded) -> Result<()> {
    let g = l.graph()?;
    let ws = weights_or_ones(l, &g)?;
    let uc = UcDataset::load(&l.input(&l.cfg.paths.dataset_in, "dataset_in")?)?;
    let dec = eval_decoder(l, &g, &ws)?;
    let h = eval::error_histogram(&dec, ws.params(), uc.frames(), 11)?;
    if let Some(p) = &l.cfg.paths.report {
        std::fs::write(l.resolve(p), serde_json::to_string_pretty(&h)?)?;
    }
    let counts: Vec<String> = h.counts.iter().map(|(e, c)| format!("{e}:{c}")).collect();
    summary(
        "histogram",
        &[
            ("frames", h.total().to_string()),
            ("boundary", h.boundary.to_string()),
            ("small_fraction", h.small_fraction.to_string()),
            ("counts", counts.join(",")),
        ],
    );
    Ok(())
}
