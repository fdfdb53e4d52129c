use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use g2t_core::discretize::{discretize, one_hot_csv};
use g2t_core::lexicon::read_word_list;
use g2t_core::metrics::{cer, curvature, mean_std, summarize, topk_accuracy, touch_point_stats, touch_points};
use g2t_core::neural::{read_model, train as train_model, write_model, EpochMetrics};
use g2t_core::{
    default_qwerty, synthgen, Decoder, GestureDataset, InputEncoding, KeyboardLayout, LexiconTrie, ModelFile,
    ModelParams, NeuralDecoder, Point, Preprocessor, RegionShape, TemplateSet, Trajectory,
};
use serde::Serialize;

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::{
    DecodeArgs, DecoderArg, DecoderArgs, EncodingArg, EvalArgs, GlobalArgs, PreprocessArgs, RegionArg, SplitArg,
    StatsArgs, SynthArgs, TrainArgs,
};

pub const REPORT_SCHEMA: &str = "g2t-report/1";

/// Settings shared by every subcommand.
pub struct Context {
    pub layout: KeyboardLayout,
    pub file: FileConfig,
    pub seed: Option<u64>,
}

impl Context {
    pub fn new(global: &GlobalArgs) -> CliResult<Self> {
        let layout = match &global.layout {
            Some(p) => KeyboardLayout::load(p)?,
            None => default_qwerty(),
        };
        Ok(Self {
            layout,
            file: FileConfig::load(global.config.as_deref())?,
            seed: global.seed,
        })
    }

    fn beam_width(&self, flag: Option<usize>) -> usize {
        flag.unwrap_or(self.file.beam.beam_width)
    }

    /// Loads a dataset and checks it was recorded on the active layout.
    fn dataset(&self, path: &Path) -> CliResult<GestureDataset> {
        let ds = GestureDataset::load_jsonl(path)?;
        if ds.layout_name != self.layout.name() {
            return Err(CliError::Data(format!(
                "{} was recorded on layout {:?} but the active layout is {:?}",
                path.display(),
                ds.layout_name,
                self.layout.name()
            )));
        }
        Ok(ds)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, text)?,
        _ => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn apply_preprocess(mut pre: Preprocessor, args: &PreprocessArgs) -> Preprocessor {
    if let Some(e) = args.encoding {
        pre.encoding = match e {
            EncodingArg::Onehot => InputEncoding::OneHot,
            EncodingArg::Integer => InputEncoding::Integer,
            EncodingArg::Cartesian => InputEncoding::Cartesian,
        };
    }
    if let Some(r) = args.region {
        pre.region_shape = match r {
            RegionArg::Square => RegionShape::Square,
            RegionArg::Ellipse => RegionShape::Ellipse,
        };
    }
    if let Some(r) = args.ratio {
        pre.ratio = r;
    }
    if let Some(s) = args.step {
        pre.step = s;
    }
    pre
}

pub fn synth(ctx: &Context, args: SynthArgs) -> CliResult<()> {
    let mut cfg = ctx.file.synth;
    if let Some(s) = args.sigma {
        cfg.noise_sigma = s;
    }
    if let Some(w) = args.smoothing_window {
        cfg.smoothing_window = w;
    }
    if let Some(p) = args.points_per_segment {
        cfg.points_per_segment = p;
    }
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    let words = read_word_list(&args.words)?;
    let mut samples = Vec::with_capacity(words.len() * args.count);
    for w in &words {
        samples.extend(synthgen::generate(w, &ctx.layout, &cfg, args.count)?);
    }
    let n = samples.len();
    let ds = GestureDataset::new(samples, ctx.layout.name(), "synthgen")?;
    let to_stdout = args.out == Path::new("-");
    write_output(Some(&args.out), &ds.to_jsonl())?;
    let summary = format!("synth: {n} samples, {} words, sigma {}", words.len(), cfg.noise_sigma);
    if to_stdout {
        eprintln!("{summary}");
    } else {
        println!("{summary} -> {}", args.out.display());
    }
    Ok(())
}

pub fn train(ctx: &Context, args: TrainArgs) -> CliResult<()> {
    let data = ctx.dataset(&args.data)?;
    let mut tcfg = ctx.file.train;
    if let Some(s) = ctx.seed {
        tcfg.seed = s;
    }
    let (train_set, val_set) = match &args.val {
        Some(p) => (data, ctx.dataset(p)?),
        None => data.random_split(0.9, tcfg.seed)?,
    };
    let lexicon = match &args.lexicon {
        Some(p) => LexiconTrie::new(read_word_list(p)?)?,
        None => {
            let mut words = train_set.words();
            words.extend(val_set.words());
            LexiconTrie::new(words)?
        }
    };
    let resumed = args.resume.as_deref().map(read_model).transpose()?;
    let base = match &resumed {
        Some(m) => m.preprocess.clone(),
        None => ctx.file.preprocess.clone(),
    };
    let pre = apply_preprocess(base, &args.preprocess);
    let params = match resumed {
        Some(m) => {
            if args.hidden.is_some() || args.layers.is_some() || args.dense.is_some() || args.dropout.is_some() {
                return Err(CliError::Usage(
                    "--hidden/--layers/--dense/--dropout cannot change a resumed model".into(),
                ));
            }
            let have = m.params.config().input_dim;
            if have != pre.input_dim() {
                return Err(CliError::Data(format!(
                    "cannot resume: model expects input_dim {have} but {:?} encoding produces {}",
                    pre.encoding,
                    pre.input_dim()
                )));
            }
            m.params
        }
        None => {
            let mut mcfg = ctx.file.model_config()?;
            if let Some(h) = args.hidden {
                mcfg.hidden_dim = h;
                mcfg.dense_dim = 2 * h;
            }
            if let Some(l) = args.layers {
                mcfg.lstm_layers = l;
            }
            if let Some(d) = args.dense {
                mcfg.dense_dim = d;
            }
            if let Some(d) = args.dropout {
                mcfg.dropout_rate = d;
            }
            if let Some(s) = ctx.seed {
                mcfg.seed = s;
            }
            mcfg.input_dim = pre.input_dim();
            ModelParams::init(mcfg)?
        }
    };
    if let Some(e) = args.epochs {
        tcfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        tcfg.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        tcfg.batch_size = b;
    }
    if let Some(w) = args.weight_decay {
        tcfg.weight_decay = w;
    }
    tcfg.beam_width = ctx.beam_width(args.beam_width);

    let train_x = pre.examples(&train_set.samples, &ctx.layout)?;
    let val_x = pre.examples(&val_set.samples, &ctx.layout)?;
    let quiet = args.quiet;
    let out = train_model(params, &train_x, &val_x, &Arc::new(lexicon), &tcfg, |m| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  val_top1 {:.3}  val_top4 {:.3}",
                m.epoch, m.train_loss, m.val_loss, m.val_top1, m.val_top4
            );
        }
    })?;
    write_model(
        &args.out,
        &ModelFile {
            params: out.best,
            preprocess: pre,
        },
    )?;
    if let Some(p) = &args.log {
        write_log(p, &out.log)?;
    }
    let best = out.log.iter().find(|m| m.epoch == out.best_epoch);
    match best {
        Some(m) => println!(
            "trained {} epochs; best epoch {} (val Top-1 {:.3}, Top-4 {:.3}) -> {}",
            out.log.len(),
            m.epoch,
            m.val_top1,
            m.val_top4,
            args.out.display()
        ),
        None => println!("trained 0 epochs; wrote initial model -> {}", args.out.display()),
    }
    Ok(())
}

fn write_log(path: &Path, log: &[EpochMetrics]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(e.to_string()))?;
    for m in log {
        w.serialize(m).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Builds the requested decoder from model and lexicon paths.
pub fn build_decoder(ctx: &Context, args: &DecoderArgs, k: usize) -> CliResult<Decoder> {
    let lexicon = args.lexicon.as_deref().map(read_word_list).transpose()?;
    match args.decoder {
        DecoderArg::Shark2 => {
            let words = lexicon.ok_or_else(|| CliError::Usage("the shark2 decoder needs --lexicon".into()))?;
            Ok(Decoder::Shark2(TemplateSet::build(&words, &ctx.layout, ctx.file.shark2)?))
        }
        DecoderArg::Neural | DecoderArg::Conventional => {
            let path = args
                .model
                .as_deref()
                .ok_or_else(|| CliError::Usage("the neural decoders need --model".into()))?;
            let model = read_model(path)?;
            let cartesian = model.preprocess.encoding == InputEncoding::Cartesian;
            if cartesian != (args.decoder == DecoderArg::Conventional) {
                return Err(CliError::Data(format!(
                    "{} uses {:?} input; use --decoder {}",
                    path.display(),
                    model.preprocess.encoding,
                    if cartesian { "conventional" } else { "neural" }
                )));
            }
            let lexicon = lexicon.map(LexiconTrie::new).transpose()?.map(Arc::new);
            let width = ctx.beam_width(args.beam_width).max(k);
            Ok(Decoder::Neural(NeuralDecoder::new(model, lexicon, width, k)?))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitReport {
    pub name: String,
    pub n_samples: usize,
    pub top1: f64,
    pub top4: f64,
    pub cer: f64,
    pub wer: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub schema: &'static str,
    pub decoder: String,
    pub split: String,
    pub n_samples: usize,
    pub top1: f64,
    pub top4: f64,
    pub top1_std: f64,
    pub top4_std: f64,
    pub cer: f64,
    pub wer: f64,
    pub per_split: Vec<SplitReport>,
    pub per_user: BTreeMap<String, SplitReport>,
}

fn score(name: &str, decoder: &Decoder, samples: &[&Trajectory], layout: &KeyboardLayout) -> CliResult<SplitReport> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut truths = Vec::with_capacity(samples.len());
    let mut cer_sum = 0.0;
    for s in samples {
        let truth = s
            .word
            .clone()
            .ok_or_else(|| CliError::Data("evaluation sample has no word".into()))?;
        let cands: Vec<String> = decoder.decode(s, layout, 4)?.into_iter().map(|c| c.word).collect();
        cer_sum += cer(cands.first().map(String::as_str).unwrap_or(""), &truth)?;
        preds.push(cands);
        truths.push(truth);
    }
    let top1 = topk_accuracy(&preds, &truths, 1)?;
    Ok(SplitReport {
        name: name.to_string(),
        n_samples: samples.len(),
        top1,
        top4: topk_accuracy(&preds, &truths, 4)?,
        cer: cer_sum / samples.len() as f64,
        wer: 1.0 - top1,
    })
}

pub fn evaluate(ctx: &Context, decoder: &Decoder, data: &GestureDataset, split: SplitArg) -> CliResult<EvalReport> {
    if split == SplitArg::Loso {
        data.loso_splits()?;
    }
    let mut by_user: BTreeMap<String, Vec<&Trajectory>> = BTreeMap::new();
    for s in &data.samples {
        by_user.entry(s.user_id.clone().unwrap_or_default()).or_default().push(s);
    }
    let mut per_user = BTreeMap::new();
    for (user, samples) in &by_user {
        per_user.insert(user.clone(), score(user, decoder, samples, &ctx.layout)?);
    }
    // a fixed model has no training side, so each held-out user is one split
    let per_split = match split {
        SplitArg::Holdout => {
            let all: Vec<&Trajectory> = data.samples.iter().collect();
            vec![score("holdout", decoder, &all, &ctx.layout)?]
        }
        SplitArg::Loso => per_user.values().cloned().collect(),
    };
    let (top1, top1_std) = mean_std(&per_split.iter().map(|s| s.top1).collect::<Vec<_>>());
    let (top4, top4_std) = mean_std(&per_split.iter().map(|s| s.top4).collect::<Vec<_>>());
    let (cer, _) = mean_std(&per_split.iter().map(|s| s.cer).collect::<Vec<_>>());
    Ok(EvalReport {
        schema: REPORT_SCHEMA,
        decoder: decoder.name().to_string(),
        split: match split {
            SplitArg::Holdout => "holdout",
            SplitArg::Loso => "loso",
        }
        .into(),
        n_samples: data.len(),
        top1,
        top4,
        top1_std,
        top4_std,
        cer,
        wer: 1.0 - top1,
        per_split,
        per_user,
    })
}

pub fn eval(ctx: &Context, args: EvalArgs) -> CliResult<()> {
    let decoder = build_decoder(ctx, &args.decoder, 4)?;
    let data = ctx.dataset(&args.data)?;
    let report = evaluate(ctx, &decoder, &data, args.split)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_output(args.out.as_deref(), &text)
}

/// Parses `[[x,y],...]` or `{"points": [[x,y],...]}`; a third per-point
/// value is taken as a timestamp.
pub fn parse_points(text: &str) -> CliResult<Trajectory> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Data(format!("points: {e}")))?;
    let arr = match &v {
        serde_json::Value::Array(a) => a,
        serde_json::Value::Object(o) => o
            .get("points")
            .and_then(|p| p.as_array())
            .ok_or_else(|| CliError::Data("points: object has no \"points\" array".into()))?,
        _ => return Err(CliError::Data("points: expected an array or an object".into())),
    };
    let rows: Vec<Vec<f64>> = arr
        .iter()
        .map(|p| serde_json::from_value::<Vec<f64>>(p.clone()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("points: {e}")))?;
    let width = rows.first().map_or(2, Vec::len);
    if !(2..=3).contains(&width) || rows.iter().any(|r| r.len() != width) {
        return Err(CliError::Data("points: each point must be [x, y] or [x, y, t], consistently".into()));
    }
    let points = rows.iter().map(|r| Point::new(r[0], r[1])).collect();
    let times = (width == 3).then(|| rows.iter().map(|r| r[2]).collect());
    Ok(Trajectory::with_times(points, times)?)
}

pub fn decode(ctx: &Context, args: DecodeArgs) -> CliResult<()> {
    if args.k == 0 {
        return Err(CliError::Usage("-k must be at least 1".into()));
    }
    let text = if args.points == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(&args.points)?
    };
    let traj = parse_points(&text)?;
    let decoder = build_decoder(ctx, &args.decoder, args.k)?;
    let mut out = String::new();
    for c in decoder.decode(&traj, &ctx.layout, args.k)? {
        out.push_str(&format!("{}\t{}\n", c.word, c.log_prob));
    }
    write_output(None, &out)
}

#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub schema: &'static str,
    pub n_samples: usize,
    pub n_touch_points: usize,
    /// ADKC and AMAL in key widths.
    pub touch: g2t_core::metrics::TouchPointStats,
    /// Curvature of the resampled trajectories in 1/key-width.
    pub curvature: Option<g2t_core::metrics::Summary>,
}

pub fn stats(ctx: &Context, args: StatsArgs) -> CliResult<()> {
    let data = ctx.dataset(&args.data)?;
    let pitch = ctx.layout.key_pitch();
    let kw_layout = ctx.layout.scaled(1.0 / pitch)?;
    let pre = apply_preprocess(ctx.file.preprocess.clone(), &args.preprocess);
    let mut touches = Vec::new();
    let mut kappa = Vec::new();
    for s in &data.samples {
        if let Some(word) = &s.word {
            touches.extend(touch_points(&s.scaled(1.0 / pitch), word, &kw_layout)?);
        }
        let (enc, unit) = pre.encode(s, &ctx.layout)?;
        let unit_pitch = unit.key_pitch();
        let mut enc = enc;
        enc.points.iter_mut().for_each(|p| *p = p.scale(1.0 / unit_pitch));
        kappa.extend(curvature(&enc)?);
    }
    if let Some(path) = &args.dump_discretized {
        let s = data.samples.get(args.sample).ok_or_else(|| {
            CliError::Usage(format!("--sample {} out of range (dataset has {})", args.sample, data.len()))
        })?;
        let mut cfg = pre.discretizer();
        cfg.encoding = g2t_core::Encoding::OneHot;
        let (enc, unit) = pre.encode(s, &ctx.layout)?;
        let d = discretize(&enc, &unit, &cfg)?;
        std::fs::write(path, one_hot_csv(d.one_hot.as_deref().unwrap_or_default()))?;
    }
    let report = StatsReport {
        schema: REPORT_SCHEMA,
        n_samples: data.len(),
        n_touch_points: touches.len(),
        touch: touch_point_stats(&touches, &kw_layout)?,
        curvature: summarize(&kappa),
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_output(args.out.as_deref(), &text)
}
