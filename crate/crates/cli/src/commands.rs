use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use slogan_core::dataset::read_manifest;
use slogan_core::eval::{collect_stats, corpus_error_rates, frechet_distance, per_writer_fid};
use slogan_core::{load_dataset, load_dataset_with_charset, TextImage};
use slogan_model::{
    Checkpoint, LatentStyleVector, StyleChoice, StylePolicy, SynthesisRequest, Synthesizer, Trainer,
    TrainingConfig, TrunkExtractor,
};

use crate::manifest::RunManifest;
use crate::{CerArgs, FidArgs, GenerateArgs, InspectArgs, SynthArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or user-supplied values (exit 2).
    Usage(String),
    /// Anything that went wrong while running (exit 1).
    Runtime(String),
    /// Training stopped by a signal after checkpointing (exit 1).
    Interrupted(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::Interrupted(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Interrupted(m) => f.write_str(m),
        }
    }
}

impl From<slogan_model::Error> for CliError {
    fn from(e: slogan_model::Error) -> Self {
        match e {
            slogan_model::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<slogan_core::Error> for CliError {
    fn from(e: slogan_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_context(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// `SLOGAN_SEED`, when set, replaces every seed given on the command line
/// or in a config file.
fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var("SLOGAN_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("SLOGAN_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Runs `body`, then writes the manifest unless the failure was a usage
/// error.
fn with_manifest(
    command: &str,
    path: PathBuf,
    body: impl FnOnce(&mut RunManifest) -> CliResult<()>,
) -> CliResult<()> {
    let mut run = RunManifest::start(command);
    let result = body(&mut run);
    run.status = match &result {
        Ok(()) => "ok",
        Err(CliError::Interrupted(_)) => "interrupted",
        Err(CliError::Runtime(_)) => "failed",
        Err(CliError::Usage(_)) => return result,
    }
    .into();
    let written = run.finish(&path).map_err(io_context(&path));
    result.and(written)
}

fn load_checkpoint(path: &Path, run: &mut RunManifest) -> CliResult<Checkpoint> {
    let ck = Checkpoint::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    run.hash_checkpoint(path).map_err(io_context(path))?;
    run.set_config(&ck.config.to_text());
    Ok(ck)
}

fn writer_index(synth: &Synthesizer, id: &str) -> CliResult<usize> {
    synth.nets.writers.index_of(id).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown writer id {id:?}; the checkpoint knows {:?}",
            synth.nets.writers.ids()
        ))
    })
}

fn read_style_file(path: &Path) -> CliResult<LatentStyleVector> {
    let text = std::fs::read_to_string(path).map_err(io_context(path))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v = line.parse::<f32>().map_err(|_| {
            CliError::Usage(format!("{} line {}: {line:?} is not a number", path.display(), i + 1))
        })?;
        values.push(v);
    }
    LatentStyleVector::new(values).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(io_context(path))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_owned()).collect())
}

fn emit_report(report: &str, path: Option<&Path>, run: &mut RunManifest) -> CliResult<()> {
    match path {
        Some(p) => {
            std::fs::write(p, report).map_err(io_context(p))?;
            run.outputs.push(p.to_owned());
        }
        None => print!("{report}"),
    }
    Ok(())
}

pub fn train(a: TrainArgs, manifest: Option<PathBuf>) -> CliResult<()> {
    let resume = match &a.resume {
        Some(p) => Some(Checkpoint::load(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut config = match (&a.config, &resume) {
        (Some(path), _) => {
            let mut c = TrainingConfig::load(path).map_err(|e| match e {
                slogan_model::Error::Io(io) => CliError::Usage(format!("{}: {io}", path.display())),
                other => CliError::Usage(format!("{}: {other}", path.display())),
            })?;
            if let Some(lex) = c.lexicon.as_mut() {
                if lex.is_relative() {
                    *lex = path.parent().unwrap_or(Path::new(".")).join(&*lex);
                }
            }
            c
        }
        (None, Some(ck)) => ck.config.clone(),
        (None, None) => TrainingConfig::default(),
    };
    if let Some(n) = a.max_iters {
        config.max_iters = n;
    }
    if let Some(k) = a.checkpoint_every {
        config.checkpoint_every = k;
    }
    if let Some(seed) = env_seed()? {
        config.seed = seed;
    }
    config.validate()?;

    let out_dir = a.out_dir.clone();
    let manifest = manifest.unwrap_or_else(|| out_dir.join("run.json"));
    with_manifest("train", manifest, |run| {
        run.seed = Some(config.seed);
        run.set_config(&config.to_text());
        std::fs::create_dir_all(&out_dir).map_err(io_context(&out_dir))?;
        let data_err = |e: slogan_core::Error| CliError::Runtime(format!("{}: {e}", a.data.display()));
        let mut trainer = match resume {
            Some(mut ck) => {
                let ds = load_dataset_with_charset(&a.data, &ck.charset).map_err(data_err)?;
                ck.config = config.clone();
                ck.into_trainer(&ds)?
            }
            None => Trainer::new(config.clone(), &load_dataset(&a.data).map_err(data_err)?)?,
        };

        let stop = Arc::new(AtomicBool::new(false));
        {
            let stop = Arc::clone(&stop);
            // Fails only if a handler is already installed.
            let _ = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst));
        }

        let log_path = out_dir.join("loss.log");
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_context(&log_path))?;
        run.outputs.push(log_path.clone());
        let save = |trainer: &Trainer, name: String, run: &mut RunManifest| -> CliResult<PathBuf> {
            let path = out_dir.join(name);
            Checkpoint::from_trainer(trainer)
                .save(&path)
                .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
            run.outputs.push(path.clone());
            Ok(path)
        };

        log::info!(
            "training from iteration {} to {} on {}",
            trainer.iteration(),
            config.max_iters,
            a.data.display()
        );
        while trainer.iteration() < config.max_iters {
            if stop.load(Ordering::SeqCst) {
                let path = save(&trainer, format!("checkpoint-{:08}.ckpt", trainer.iteration()), run)?;
                run.hash_checkpoint(&path).map_err(io_context(&path))?;
                return Err(CliError::Interrupted(format!(
                    "interrupted after iteration {}; checkpoint written to {}",
                    trainer.iteration(),
                    path.display()
                )));
            }
            let report = trainer.step()?;
            writeln!(log, "{report}").map_err(io_context(&log_path))?;
            let it = trainer.iteration();
            if it % 100 == 0 {
                log::info!("{report}");
            }
            if it % config.checkpoint_every == 0 && it < config.max_iters {
                save(&trainer, format!("checkpoint-{it:08}.ckpt"), run)?;
            }
        }
        log.flush().map_err(io_context(&log_path))?;
        let last = save(&trainer, "final.ckpt".into(), run)?;
        run.hash_checkpoint(&last).map_err(io_context(&last))?;
        log::info!("wrote {}", last.display());
        Ok(())
    })
}

pub fn generate(a: GenerateArgs, manifest: Option<PathBuf>) -> CliResult<()> {
    let seed = env_seed()?.unwrap_or(a.seed);
    let manifest = manifest.unwrap_or_else(|| a.out.with_extension("run.json"));
    let style_vector = a.style_file.as_deref().map(read_style_file).transpose()?;
    with_manifest("generate", manifest, |run| {
        let ck = load_checkpoint(&a.checkpoint, run)?;
        let synth = Synthesizer::from_checkpoint(&ck)?;
        let style = match (&a.style_id, style_vector) {
            (Some(id), _) => StyleChoice::Writer(writer_index(&synth, id)?),
            (None, Some(z)) => StyleChoice::Vector(z),
            (None, None) => {
                run.seed = Some(seed);
                StyleChoice::Random { seed }
            }
        };
        let mut req = SynthesisRequest::new(a.text.clone(), style);
        if let Some(px) = a.interval_px {
            req = req.interval(px);
        }
        if let Some(r) = a.curve_radius {
            req = req.curved(r, a.curve_span);
        }
        let image = synth.generate(&req)?;
        image.save(&a.out)?;
        run.outputs.push(a.out.clone());
        log::info!("wrote {} ({}x{})", a.out.display(), image.width(), image.height());
        Ok(())
    })
}

pub fn synth_dataset(a: SynthArgs, manifest: Option<PathBuf>) -> CliResult<()> {
    let seed = env_seed()?.unwrap_or(a.seed);
    let lexicon: Vec<String> = read_lines(&a.lexicon)?
        .into_iter()
        .map(|l| l.trim().to_owned())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if lexicon.is_empty() {
        return Err(CliError::Usage(format!("{} has no words", a.lexicon.display())));
    }
    if a.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let manifest = manifest.unwrap_or_else(|| a.out_dir.join("run.json"));
    with_manifest("synth-dataset", manifest, |run| {
        run.seed = Some(seed);
        let ck = load_checkpoint(&a.checkpoint, run)?;
        let synth = Synthesizer::from_checkpoint(&ck)?;
        let policy = match a.style.as_str() {
            "random" => StylePolicy::Random,
            "cycle" => StylePolicy::Cycle,
            s => match s.strip_prefix("writer:") {
                Some(id) => StylePolicy::Writer(writer_index(&synth, id)?),
                None => {
                    return Err(CliError::Usage(format!(
                        "--style must be random, cycle or writer:<id>, got {s:?}"
                    )))
                }
            },
        };
        let out = synth.synthesize_dataset(&lexicon, a.count, policy, seed, &a.out_dir)?;
        run.outputs.push(out.clone());
        run.outputs.push(a.out_dir.join("styles.tsv"));
        run.outputs.push(a.out_dir.join("images"));
        log::info!("wrote {} items, manifest {}", a.count, out.display());
        Ok(())
    })
}

fn load_manifest_images(path: &Path) -> CliResult<Vec<(String, TextImage)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_manifest(path)?
        .into_iter()
        .map(|(line, rec)| {
            let file = base.join(&rec.image_path);
            TextImage::load(&file)
                .map(|img| (rec.writer_id, img))
                .map_err(|e| CliError::Runtime(format!("{} row {line}: {e}", path.display())))
        })
        .collect()
}

pub fn eval_fid(a: FidArgs, manifest: Option<PathBuf>) -> CliResult<()> {
    let manifest = manifest.unwrap_or_else(|| match &a.report {
        Some(r) => r.with_extension("run.json"),
        None => PathBuf::from("slogan-eval.run.json"),
    });
    with_manifest("eval fid", manifest, |run| {
        let ck = load_checkpoint(&a.checkpoint, run)?;
        let nets = ck.to_networks()?;
        let extractor = TrunkExtractor::new(&nets.discriminators, ck.config.image_width);
        let real = load_manifest_images(&a.real_manifest)?;
        let fake = load_manifest_images(&a.fake_manifest)?;
        let images = |v: &[(String, TextImage)]| v.iter().map(|(_, i)| i.clone()).collect::<Vec<_>>();
        let fid = frechet_distance(
            &collect_stats(&images(&real), &extractor)?,
            &collect_stats(&images(&fake), &extractor)?,
        )?;
        let mut report = format!("fid={fid}\nreal_images={}\nfake_images={}\n", real.len(), fake.len());
        if a.per_writer {
            let group = |v: Vec<(String, TextImage)>| {
                let mut m: BTreeMap<String, Vec<TextImage>> = BTreeMap::new();
                for (w, i) in v {
                    m.entry(w).or_default().push(i);
                }
                m
            };
            let (real, fake) = (group(real), group(fake));
            let per = per_writer_fid(&real, &fake, &extractor)?;
            report.push_str(&format!("per_writer_fid={per}\nwriters={}\n", real.len()));
        }
        emit_report(&report, a.report.as_deref(), run)
    })
}

pub fn eval_cer(a: CerArgs, manifest: Option<PathBuf>) -> CliResult<()> {
    let manifest = manifest.unwrap_or_else(|| match &a.report {
        Some(r) => r.with_extension("run.json"),
        None => PathBuf::from("slogan-eval.run.json"),
    });
    with_manifest("eval cer", manifest, |run| {
        let refs = read_lines(&a.ref_file)?;
        let hyps = read_lines(&a.hyp_file)?;
        if refs.len() != hyps.len() {
            return Err(CliError::Runtime(format!(
                "{} has {} lines but {} has {}",
                a.ref_file.display(),
                refs.len(),
                a.hyp_file.display(),
                hyps.len()
            )));
        }
        let pairs: Vec<(String, String)> = refs.into_iter().zip(hyps).collect();
        let rates = corpus_error_rates(&pairs)?;
        let report = format!("cer={}\nwer={}\nlines={}\n", rates.cer, rates.wer, rates.lines);
        emit_report(&report, a.report.as_deref(), run)
    })
}

pub fn inspect_style(a: InspectArgs, manifest: Option<PathBuf>) -> CliResult<()> {
    let mut run = RunManifest::start("inspect-style");
    let ck = load_checkpoint(&a.checkpoint, &mut run)?;
    let synth = Synthesizer::from_checkpoint(&ck)?;
    let bank = &synth.nets.bank;
    let mut out = String::new();
    match &a.style_id {
        Some(id) => {
            let index = writer_index(&synth, id)?;
            let z = bank.lookup(index)?;
            let bounds = bank.bounds()?;
            out.push_str(&format!("writer={id}\nindex={index}\ndim={}\n# k\tvalue\tlo\thi\n", z.dim()));
            for k in 0..z.dim() {
                out.push_str(&format!("{k}\t{}\t{}\t{}\n", z.values[k], bounds.lo[k], bounds.hi[k]));
            }
        }
        None => {
            out.push_str(&format!("writers={}\ndim={}\n# index\tid\n", bank.len(), bank.dim()));
            for (i, id) in synth.nets.writers.ids().iter().enumerate() {
                out.push_str(&format!("{i}\t{id}\n"));
            }
        }
    }
    print!("{out}");
    if let Some(path) = manifest {
        run.finish(&path).map_err(io_context(&path))?;
    }
    Ok(())
}
