use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use slicetopo::cloud::load_cloud;
use slicetopo::datagen::{self, render_depth, SceneSpec};
use slicetopo::descriptor::cloud_diagrams;
use slicetopo::library::{prepare_views, set_summaries, train_from_prepared};
use slicetopo::topology::oracle::run_oracle;
use slicetopo::{
    evaluate, normalize, recognize_scene, DataConfig, DepthScene, EvalConfig, ModelLibrary, ObjectDescriptor,
    PersistenceDiagram, PiParams, RecognitionConfig, Suite, TrainConfig, TrainingView,
};

use crate::args::{DescribeArgs, EvaluateArgs, GenDataArgs, OracleArgs, PlotArgs, RecognizeArgs, TrainArgs};
use crate::config::{apply_pairs, collect_pairs, log_resolved, parse_grid, Settings};
use crate::plot::{descriptor_image, diagram_image};
use crate::CliError;

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let suite: Suite = args.suite.parse()?;
    let mut cfg = DataConfig {
        seed: args.seed,
        ..DataConfig::default()
    };
    apply_pairs(&collect_pairs(&args.config.config)?, &mut [&mut cfg])?;
    log_resolved("gen-data", &[&cfg]);
    let data = datagen::generate(suite, &cfg)?;
    datagen::write_dataset(&data, &args.out)?;
    println!(
        "suite {}: {} classes, {} training views, {} probes, sequences {}",
        suite.name(),
        data.classes.len(),
        data.train.len(),
        data.probes.len(),
        data.sequences
            .iter()
            .map(|s| format!("{}x{}", s.name(), s.scenes.len()))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

fn train_flags(args: &TrainArgs) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    push("sigma1", args.sigma1.map(|v| v.to_string()));
    push("sigma2", args.sigma2.map(|v| v.to_string()));
    push("alpha", args.alpha.map(|v| v.to_string()));
    push("pi_grid", args.pi_grid.clone());
    push("pi_bandwidth", args.pi_bandwidth.map(|v| v.to_string()));
    pairs
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let data = datagen::load_dataset(&args.data)?;
    let mut cfg = TrainConfig {
        train_scale: data.config.train_distance,
        ..TrainConfig::default()
    };
    // Dedicated flags win over --config entries.
    let mut pairs = collect_pairs(&args.config.config)?;
    pairs.extend(train_flags(args));
    apply_pairs(&pairs, &mut [&mut cfg])?;
    log_resolved("train", &[&cfg]);

    let views: Vec<TrainingView> = data
        .train
        .iter()
        .map(|t| TrainingView {
            cloud: t.cloud.clone(),
            label: t.label.clone(),
        })
        .collect();
    let prepared = prepare_views(&views, &cfg)?;
    let lib = train_from_prepared(&prepared, &cfg)?;
    lib.save(&args.out)?;
    println!("N_max {}", lib.n_max);
    println!("classes {}", lib.class_labels.len());
    for s in set_summaries(&prepared) {
        println!("set {:<5} views {:>4} samples {:>5}", s.view_set.name(), s.views, s.samples);
    }
    println!("models {}", lib.models.len());
    Ok(())
}

fn load_scene(path: &Path) -> Result<DepthScene, CliError> {
    if path.extension().is_some_and(|e| e == "scene") {
        Ok(render_depth(&SceneSpec::load(path)?)?)
    } else {
        Ok(DepthScene::load(path)?)
    }
}

pub fn recognize(args: &RecognizeArgs) -> Result<(), CliError> {
    let mut cfg = RecognitionConfig::default();
    apply_pairs(&collect_pairs(&args.config.config)?, &mut [&mut cfg])?;
    log_resolved("recognize", &[&cfg]);
    let lib = ModelLibrary::load(&args.lib)?;
    let scene = load_scene(&args.scene)?;
    let results = recognize_scene(&scene, &lib, &cfg)?;
    let mut out = String::new();
    for r in &results {
        out.push_str(&r.to_json());
        out.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, out.as_bytes())?,
        None => print!("{out}"),
    }
    eprintln!("[recognize] {} instances", results.len());
    Ok(())
}

/// The text report path and its JSON sibling.
fn report_paths(report: &Path) -> (PathBuf, PathBuf) {
    if report.extension().is_some_and(|e| e == "json") {
        (report.with_extension("txt"), report.to_path_buf())
    } else {
        (report.to_path_buf(), report.with_extension("json"))
    }
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), CliError> {
    let lib = ModelLibrary::load(&args.lib)?;
    let data = datagen::load_dataset(&args.data)?;
    let mut cfg = EvalConfig::from_library(&lib);
    cfg.folds = args.folds;
    cfg.seed = args.seed;
    apply_pairs(
        &collect_pairs(&args.config.config)?,
        &mut [&mut cfg.train, &mut cfg.recognition],
    )?;
    eprintln!("[evaluate] folds = {}", cfg.folds);
    eprintln!("[evaluate] seed = {}", cfg.seed);
    log_resolved("evaluate", &[&cfg.train as &dyn Settings, &cfg.recognition]);
    let report = evaluate(&data, &cfg)?;
    let text = report.to_text();
    let (text_path, json_path) = report_paths(&args.report);
    write_file(&text_path, text.as_bytes())?;
    write_file(&json_path, format!("{}\n", report.to_json()).as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn oracle(args: &OracleArgs) -> Result<(), CliError> {
    eprintln!(
        "[oracle] n_trials = {}, max_points = {}, seed = {}{}",
        args.n_trials,
        args.max_points,
        args.seed,
        if args.mutate { ", mutated" } else { "" }
    );
    match run_oracle(args.n_trials, args.max_points, args.seed, args.mutate) {
        Ok(n) => {
            println!("{n} trials agree with the oracle");
            Ok(())
        }
        Err(m) => {
            let mut msg = format!(
                "mismatch on trial seed {} (rerun with --seed {} --n-trials 1 --max-points {})\n",
                m.trial_seed, m.trial_seed, args.max_points
            );
            msg.push_str(&format!(
                "sigma1 {} sigma2 {} slice index {}\n",
                m.params.sigma1, m.params.sigma2, m.slice.slice.index
            ));
            for p in &m.slice.slice.points {
                msg.push_str(&format!("point {} {} {}\n", p.x, p.y, p.z));
            }
            msg.push_str(&format!("union-find {:?} essential {:?}\n", m.fast.points, m.fast.essential));
            msg.push_str(&format!("oracle     {:?} essential {:?}", m.slow.points, m.slow.essential));
            Err(CliError::Verification(msg))
        }
    }
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

pub fn plot(args: &PlotArgs) -> Result<(), CliError> {
    if let Some(path) = &args.diagram {
        let pd = PersistenceDiagram::from_text(&read_file(path)?)?;
        save_png(&diagram_image(&pd), &args.out)?;
        eprintln!("[plot] {} points", pd.points.len());
        return Ok(());
    }
    let path = args.descriptor.as_ref().expect("clap enforces one input");
    let text = read_file(path)?;
    let explicit = args.grid.as_deref().map(|g| parse_grid("--grid", g)).transpose()?;
    let fallback = explicit.map_or(PiParams::DEFAULT_GRID.0 * PiParams::DEFAULT_GRID.1, |(r, c)| r * c);
    let desc = ObjectDescriptor::from_text(&text, fallback)?;
    let (rows, cols) = match explicit {
        Some(g) => g,
        None => {
            let side = (desc.pi_size as f64).sqrt().round() as usize;
            if side * side != desc.pi_size {
                return Err(CliError::Usage(format!(
                    "image size {} is not square; pass --grid RxC",
                    desc.pi_size
                )));
            }
            (side, side)
        }
    };
    if rows * cols != desc.pi_size {
        return Err(CliError::Usage(format!(
            "--grid {rows}x{cols} does not match image size {}",
            desc.pi_size
        )));
    }
    save_png(&descriptor_image(&desc, rows, cols), &args.out)?;
    eprintln!("[plot] {} tiles", desc.n_slices);
    Ok(())
}

pub fn describe(args: &DescribeArgs) -> Result<(), CliError> {
    let cloud = load_cloud(&args.cloud)?;
    let lib = args.lib.as_ref().map(ModelLibrary::load).transpose()?;
    let mut cfg = TrainConfig::default();
    if let Some(lib) = &lib {
        cfg = EvalConfig::from_library(lib).train;
    }
    apply_pairs(&collect_pairs(&args.config.config)?, &mut [&mut cfg])?;
    log_resolved("describe", &[&cfg]);

    let aligned = normalize(&cloud, cfg.alpha, [false; 3])?;
    let diagrams = cloud_diagrams(aligned.points(), &cfg.slice, cfg.essential)?;
    let pi = match &lib {
        Some(lib) => lib.pi_params,
        None => PiParams::calibrate(&diagrams.diagrams, cfg.pi_grid, cfg.pi_bandwidth, cfg.weighting)?,
    };
    let n = diagrams.n_slices();
    let padded = lib.as_ref().map_or(n, |l| l.n_max.max(n));
    let desc = diagrams.descriptor(n, padded, &pi)?;
    write_file(&args.out, desc.to_text().as_bytes())?;
    if let Some(dir) = &args.diagrams {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (i, pd) in diagrams.diagrams.iter().enumerate() {
            write_file(&dir.join(format!("slice_{i:02}.txt")), pd.to_text().as_bytes())?;
        }
    }
    let e = aligned.source_obb.extents;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "points {}", cloud.len());
    let _ = writeln!(stdout, "extents {:.4} {:.4} {:.4}", e[0], e[1], e[2]);
    let _ = writeln!(stdout, "slices {} occupied {}", n, diagrams.occupied_count());
    let _ = writeln!(stdout, "descriptor {} values", desc.values.len());
    Ok(())
}
