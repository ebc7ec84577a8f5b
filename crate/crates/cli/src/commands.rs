use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde_json::json;
use sparsescene::condkernel::checkpoint::Checkpoint;
use sparsescene::condkernel::{attention_forward, pseudo_encode, TokenEmbeddings, ToyConfig, ToyWeights};
use sparsescene::ingest::{ingest_pipeline, parse_regions, AliasMap, IngestConfig};
use sparsescene::preview::{preview_png, preview_rgb, PreviewStyle};
use sparsescene::raster::{render_png, render_raw, RasterKind};
use sparsescene::stylekit::{fit_distribution, interpolate_styles, sample_styles, StyleDistribution, Strategy};
use sparsescene::verify::{self, Suite, VerifyOptions};
use sparsescene::{SceneGraph, Vocabulary};

use crate::{
    Command, EncodeArgs, FitArgs, IngestArgs, InitArgs, InterpolateArgs, PreviewArgs, RasterArgs, SampleArgs,
    VerifyArgs, VocabArg, WeightsArg,
};

pub fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Raster(a) => raster(a),
        Command::Verify(a) => return verify(a),
        Command::FitDist(a) => fit(a),
        Command::Sample(a) => sample(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Preview(a) => preview(a),
        Command::EncodeTokens(a) => encode(a),
        Command::InitWeights(a) => init(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_vocab(v: &VocabArg) -> Result<Vocabulary> {
    Vocabulary::from_json(&read(&v.vocab)?).with_context(|| format!("parsing {}", v.vocab.display()))
}

fn load_scene(path: &Path, v: &Vocabulary) -> Result<SceneGraph> {
    SceneGraph::from_json(&read(path)?, &v.classes, &v.attributes).with_context(|| format!("parsing {}", path.display()))
}

fn load_tokens(path: &Path) -> Result<TokenEmbeddings> {
    TokenEmbeddings::load(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_weights(path: &Path) -> Result<ToyWeights> {
    let ck = Checkpoint::from_bytes(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    ToyWeights::from_checkpoint(&ck).with_context(|| format!("loading {}", path.display()))
}

/// Loaded checkpoint, or weights initialized from the seed and sized to the
/// vocabulary (the same rule the server applies).
fn weights_for(w: &WeightsArg, v: &Vocabulary) -> Result<ToyWeights> {
    match &w.weights {
        Some(p) => load_weights(p),
        None => Ok(ToyWeights::init(
            ToyConfig {
                classes: v.classes.len(),
                attributes: v.attributes.len().max(1),
                ..ToyConfig::default()
            },
            w.seed,
        )),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let config = IngestConfig {
        score_threshold: a.score,
        nms_iou: a.nms_iou,
        attr_iou: a.attr_iou,
        containment: a.containment,
    };
    config.validate()?;
    eprintln!(
        "ingest: score={} nms-iou={} attr-iou={} containment={} jobs={}",
        config.score_threshold, config.nms_iou, config.attr_iou, config.containment, a.jobs
    );
    let vocab = load_vocab(&a.vocab)?;
    let aliases = match &a.aliases {
        Some(p) => AliasMap::from_json(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => AliasMap::default(),
    };
    aliases.validate(&vocab.classes)?;
    let many = a.inputs.len() > 1;
    if many && a.regions.is_some() {
        bail!("--regions applies to a single input");
    }
    let regions = match &a.regions {
        Some(p) => Some(parse_regions(&read(p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    if many {
        fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    }
    let targets: Vec<(PathBuf, PathBuf)> = a
        .inputs
        .iter()
        .map(|input| {
            let out = if many {
                let stem = input.file_stem().map_or("scene".into(), |s| s.to_string_lossy());
                a.out.join(format!("{stem}.scene.json"))
            } else {
                a.out.clone()
            };
            (input.clone(), out)
        })
        .collect();

    let one = |(input, out): &(PathBuf, PathBuf)| -> Result<serde_json::Value> {
        let bytes = read(input)?;
        let res = ingest_pipeline(&bytes, &vocab.classes, &vocab.attributes, &aliases, regions.as_deref(), &config)
            .with_context(|| format!("ingesting {}", input.display()))?;
        write(out, &res.scene.to_json(&vocab.classes, &vocab.attributes)?)?;
        Ok(json!({"input": input, "output": out, "report": res.report}))
    };
    let jobs = a.jobs.max(1);
    let mut results: Vec<Option<Result<serde_json::Value>>> = (0..targets.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunk = targets.len().div_ceil(jobs).max(1);
        for (ts, rs) in targets.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let one = &one;
            s.spawn(move || {
                for (t, r) in ts.iter().zip(rs.iter_mut()) {
                    *r = Some(one(t));
                }
            });
        }
    });
    let mut errors = Vec::new();
    for r in results.into_iter().flatten() {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => errors.push(e),
        }
    }
    // The first error is reported by the caller.
    for e in errors.iter().skip(1) {
        eprintln!("error: {e:#}");
    }
    match errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn raster(a: RasterArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let scene = load_scene(&a.scene, &vocab)?;
    let kind: RasterKind = a.kind.parse().map_err(anyhow::Error::msg)?;
    let bytes = match a.format.as_str() {
        "png" => render_png(&scene, &vocab.classes, kind, a.res)?,
        "raw" => render_raw(&scene, &vocab.classes, kind, a.res)?,
        other => bail!("unknown format `{other}` (expected png|raw)"),
    };
    write(&a.out, &bytes)
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let suite: Suite = a.suite.parse().map_err(anyhow::Error::msg)?;
    let weights = a.weights.as_deref().map(load_weights).transpose()?;
    let opts = VerifyOptions {
        seed: a.seed,
        instances: a.instances,
        weights,
    };
    let report = verify::run(suite, &opts);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    print!("{text}");
    if let Some(out) = &a.out {
        write(out, text.as_bytes())?;
    }
    for s in &report.suites {
        for c in &s.checks {
            let verdict = if c.passed { "pass" } else { "FAIL" };
            eprintln!("{verdict} {}/{} max_error={:e} tol={:e}", s.suite, c.name, c.max_error, c.tolerance);
        }
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn fit(a: FitArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let scenes = a
        .scenes
        .iter()
        .map(|p| load_scene(p, &vocab))
        .collect::<Result<Vec<_>>>()?;
    let dist = fit_distribution(&scenes)?;
    write(&a.out, dist.to_json(&vocab.classes, &vocab.attributes).as_bytes())
}

fn sample(a: SampleArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let scene = load_scene(&a.scene, &vocab)?;
    let text = fs::read_to_string(&a.dist).with_context(|| format!("reading {}", a.dist.display()))?;
    let dist = StyleDistribution::from_json(&text, &vocab.classes, &vocab.attributes)?;
    let strategy: Strategy = a.strategy.parse()?;
    let (out, report) = sample_styles(&scene, &dist, strategy, a.seed, &vocab.classes);
    eprintln!("{}", serde_json::to_string(&report)?);
    write(&a.out, &out.to_json(&vocab.classes, &vocab.attributes)?)
}

fn interpolate(a: InterpolateArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let scene = load_scene(&a.scene, &vocab)?;
    let w = weights_for(&a.weights, &vocab)?;
    let ca = attention_forward(&load_tokens(&a.from)?, &w.attention)?.0.ctx;
    let cb = attention_forward(&load_tokens(&a.to)?, &w.attention)?.0.ctx;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (i, ctx) in interpolate_styles(&ca, &cb, a.steps)?.iter().enumerate() {
        let (_, rgb, _) = preview_rgb(&scene, &w, PreviewStyle::Context(ctx), Some(a.res))?;
        write(&a.out_dir.join(format!("frame_{i:03}.png")), &preview_png(&rgb)?)?;
    }
    Ok(())
}

fn preview(a: PreviewArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let scene = load_scene(&a.scene, &vocab)?;
    let w = weights_for(&a.weights, &vocab)?;
    let tokens = a.tokens.as_deref().map(load_tokens).transpose()?;
    let style = match (a.style.as_str(), &tokens) {
        ("plain", _) => PreviewStyle::Plain,
        ("attributes", _) => PreviewStyle::Attributes,
        ("tokens", Some(t)) => PreviewStyle::Tokens(t),
        ("tokens", None) => bail!("--style tokens needs --tokens"),
        (other, _) => bail!("unknown style `{other}` (expected plain|attributes|tokens)"),
    };
    let (_, rgb, _) = preview_rgb(&scene, &w, style, Some(a.res))?;
    write(&a.out, &preview_png(&rgb)?)
}

fn encode(a: EncodeArgs) -> Result<()> {
    if a.d_lm == 0 {
        bail!("--d-lm must be positive");
    }
    let t = pseudo_encode(&a.text, a.d_lm);
    if a.json {
        write(&a.out, t.to_json().as_bytes())
    } else {
        write(&a.out, &t.to_bytes())
    }
}

fn init(a: InitArgs) -> Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let config = ToyConfig {
        classes: vocab.classes.len(),
        attributes: vocab.attributes.len().max(1),
        channels: a.channels,
        mid: a.mid,
        heads: a.heads,
        d_lm: a.d_lm,
    };
    let w = ToyWeights::init(config, a.seed);
    w.validate()?;
    write(&a.out, &w.to_checkpoint().to_bytes())
}
