use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rayon::prelude::*;

use nnsc::classifier::{svm_predict, svm_train, LabeledFeatures, LinearModel};
use nnsc::codebook::{gather_samples, Dictionary};
use nnsc::descriptors::{extract_dense, DescriptorSet, GrayImage};
use nnsc::pipeline::{
    confusion_matrix, encode_with, is_image_path, load_dataset, load_descriptor_inputs, run_experiment,
    synthetic, PipelineConfig,
};
use nnsc::{Error, Result};

#[derive(Parser)]
#[command(name = "nnsc", version, about = "Non-negative sparse coding image classification")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dense gradient-histogram descriptors from an image or a directory tree.
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// Output file, or output directory when the input is a directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Learn a codebook from descriptor files.
    TrainCodebook {
        #[arg(long, num_args = 1.., required = true)]
        descriptors: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Encode and pool images into a feature file.
    Encode {
        #[arg(long)]
        codebook: PathBuf,
        /// Dataset directory with class subdirectories, or descriptor files.
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a one-vs-rest linear SVM on a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a model on a labelled feature file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Repeated-split experiment over a dataset directory.
    Experiment {
        #[arg(long)]
        dataset: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the built-in synthetic dataset as descriptor files.
    GenerateSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        images_per_class: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Every pipeline setting; command-line values override the `--config` file.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// `key = value` file applied before the other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    outer_max: Option<usize>,
    #[arg(long)]
    inner_tol: Option<f64>,
    #[arg(long)]
    inner_max_iter: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    kmeans_max_iter: Option<usize>,
    #[arg(long)]
    sc_outer_iters: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reg_c: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    fixed_codebook: bool,
    #[arg(long)]
    test_on_train: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_kv_file(path)?;
        }
        macro_rules! over {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        over!(
            mode, lambda, beta, outer_max, inner_tol, inner_max_iter, p, patch, step, method, sample,
            kmeans_max_iter, sc_outer_iters, train_per_class, splits, seed, reg_c, epochs
        );
        cfg.fixed_codebook |= self.fixed_codebook;
        cfg.test_on_train |= self.test_on_train;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn classes_sidecar(features: &Path) -> PathBuf {
    let mut s = features.as_os_str().to_owned();
    s.push(".classes");
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_class_names(features: &Path) -> Result<Option<Vec<String>>> {
    let path = classes_sidecar(features);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
    Ok(Some(text.lines().map(str::to_string).collect()))
}

fn load_features(path: &Path) -> Result<LabeledFeatures> {
    let data = LabeledFeatures::load(path)?;
    Ok(match read_class_names(path)? {
        Some(names) => data.with_class_names(names),
        None => data,
    })
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_images(&p, out)?;
        } else if is_image_path(&p) {
            out.push(p);
        }
    }
    Ok(())
}

fn extract_one(input: &Path, out: &Path, cfg: &PipelineConfig) -> Result<usize> {
    let image = GrayImage::open(input)?;
    let set = extract_dense(&image, cfg.patch, cfg.step)?;
    set.save(out)?;
    Ok(set.len())
}

fn cmd_extract(input: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    if !input.is_dir() {
        let n = extract_one(input, out, cfg)?;
        println!("{}: {n} descriptors", out.display());
        return Ok(());
    }
    let mut images = Vec::new();
    collect_images(input, &mut images)?;
    if images.is_empty() {
        return Err(Error::InvalidInput(format!("no images under {}", input.display())));
    }
    let jobs: Vec<(PathBuf, PathBuf)> = images
        .into_iter()
        .map(|src| {
            let rel = src.strip_prefix(input).expect("walked from input");
            (src.clone(), out.join(rel).with_extension("nnsc"))
        })
        .collect();
    for (_, dst) in &jobs {
        if let Some(parent) = dst.parent() {
            create_dir(parent)?;
        }
    }
    let counts = jobs
        .par_iter()
        .map(|(src, dst)| extract_one(src, dst, cfg))
        .collect::<Result<Vec<_>>>()?;
    println!(
        "extracted {} images, {} descriptors into {}",
        counts.len(),
        counts.iter().sum::<usize>(),
        out.display()
    );
    Ok(())
}

fn cmd_train_codebook(inputs: &[PathBuf], out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let loaded = load_descriptor_inputs(inputs)?;
    let sets: Vec<&DescriptorSet> = loaded.iter().map(|(_, s)| s).collect();
    let samples = gather_samples(&sets, cfg.sample, cfg.seed)?;
    let trainer = cfg.codebook_trainer()?;
    let (dict, log) = trainer.train(samples.view(), cfg.p, cfg.seed)?;
    dict.save(out)?;
    println!("method={}", trainer.name());
    println!("samples={}", samples.nrows());
    println!("atoms={}", dict.size());
    println!("dim={}", dict.dim());
    println!("iterations={}", log.iterations);
    println!("converged={}", log.converged);
    if let Some(obj) = log.objective.last() {
        println!("objective={obj}");
    }
    Ok(())
}

fn is_dataset_dir(path: &Path) -> bool {
    fs::read_dir(path)
        .map(|mut it| it.any(|e| e.is_ok_and(|e| e.path().is_dir())))
        .unwrap_or(false)
}

fn cmd_encode(codebook: &Path, inputs: &[PathBuf], out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let dict = Dictionary::load(codebook)?;
    let (names, items): (Vec<String>, Vec<(u32, DescriptorSet)>) =
        if inputs.len() == 1 && is_dataset_dir(&inputs[0]) {
            let ds = load_dataset(&inputs[0], cfg.patch, cfg.step)?;
            let items = ds.images.into_iter().map(|e| (e.label, e.descriptors)).collect();
            (ds.class_names, items)
        } else {
            let items = load_descriptor_inputs(inputs)?
                .into_iter()
                .map(|(_, s)| (0, s))
                .collect();
            (Vec::new(), items)
        };
    let strategy = cfg.coding_strategy()?;
    let encoded = items
        .par_iter()
        .map(|(_, set)| encode_with(strategy.as_ref(), set, &dict))
        .collect::<Result<Vec<_>>>()?;
    let dim = dict.size() * nnsc::pooling::PYRAMID_CELLS;
    let mut features = Array2::<f64>::zeros((encoded.len(), dim));
    for (r, e) in encoded.iter().enumerate() {
        features
            .row_mut(r)
            .iter_mut()
            .zip(e.feature.values())
            .for_each(|(a, &b)| *a = b);
    }
    let labels = items.iter().map(|(l, _)| *l).collect();
    let data = LabeledFeatures::new(features, labels)?;
    data.save(out)?;
    if !names.is_empty() {
        let mut text = names.join("\n");
        text.push('\n');
        write_file(&classes_sidecar(out), &text)?;
    }
    let nonconverged: usize = encoded.iter().map(|e| e.nonconverged).sum();
    println!("images={}", encoded.len());
    println!("dim={dim}");
    println!("nonconverged={nonconverged}");
    Ok(())
}

fn cmd_train(features: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let data = load_features(features)?;
    let model = svm_train(&data, &cfg.svm_params(cfg.seed))?;
    model.save(out)?;
    println!("classes={}", model.class_labels.join(","));
    println!("dim={}", model.dim());
    Ok(())
}

fn cmd_evaluate(model_path: &Path, features: &Path) -> Result<()> {
    let model = LinearModel::load(model_path)?;
    let data = load_features(features)?;
    if data.is_empty() {
        return Err(Error::InvalidInput("feature file holds no samples".into()));
    }
    let predicted = svm_predict(&model, data.features.view())?;
    let truth: Vec<usize> = data
        .labels
        .iter()
        .map(|&l| {
            let name = data.class_name(l);
            model.class_labels.iter().position(|c| *c == name).unwrap_or(model.classes())
        })
        .collect();
    let correct = truth.iter().zip(&predicted).filter(|(a, b)| a == b).count();
    // An extra row collects test labels the model never saw.
    let confusion = confusion_matrix(&truth, &predicted, model.classes() + 1);
    println!("samples={}", truth.len());
    println!("correct={correct}");
    println!("accuracy={}", correct as f64 / truth.len() as f64);
    for (i, name) in model.class_labels.iter().enumerate() {
        let row: Vec<String> = (0..model.classes()).map(|j| confusion[(i, j)].to_string()).collect();
        println!("confusion.{name}={}", row.join(","));
    }
    let unknown = confusion.row(model.classes()).sum();
    if unknown > 0 {
        println!("unknown_labels={unknown}");
    }
    Ok(())
}

fn cmd_experiment(dataset: &Path, report: Option<&Path>, cfg: &PipelineConfig) -> Result<()> {
    let result = run_experiment(cfg, dataset)?;
    let text = result.render();
    print!("{text}");
    eprint!("{}", result.render_timings());
    if let Some(path) = report {
        write_file(path, &text)?;
    }
    Ok(())
}

fn cmd_generate(out: &Path, classes: Option<usize>, per_class: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut spec = synthetic::SyntheticSpec::default();
    if let Some(c) = classes {
        spec.classes = c;
    }
    if let Some(n) = per_class {
        spec.images_per_class = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = synthetic::generate(&spec)?;
    synthetic::write_dataset(out, &data)?;
    println!("classes={}", data.class_names.join(","));
    println!("images={}", data.images.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::InvalidArgument("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Extract { input, out, cfg } => cmd_extract(input, out, &cfg.resolve()?),
        Command::TrainCodebook { descriptors, out, cfg } => cmd_train_codebook(descriptors, out, &cfg.resolve()?),
        Command::Encode { codebook, input, out, cfg } => cmd_encode(codebook, input, out, &cfg.resolve()?),
        Command::Train { features, out, cfg } => cmd_train(features, out, &cfg.resolve()?),
        Command::Evaluate { model, features } => cmd_evaluate(model, features),
        Command::Experiment { dataset, report, cfg } => cmd_experiment(dataset, report.as_deref(), &cfg.resolve()?),
        Command::GenerateSynthetic { out, classes, images_per_class, seed } => {
            cmd_generate(out, *classes, *images_per_class, *seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
