use std::fs;
use std::path::Path;

use featagg::data::synthetic::{self, SyntheticConfig, SyntheticKind};
use featagg::data::{self, BagContainer};
use featagg::gradcheck::{self, GradcheckOptions};
use featagg::trainer::{self, metrics_from_csv, metrics_to_csv};
use featagg::{plot, EncoderKind, InitMode, TrainingConfig};

use crate::{
    CheckedEncoder, Dataset, Encoder, EvalArgs, ExportPlotArgs, Failure, GenDataArgs, GradcheckArgs, Init, ModelArgs,
    SweepGammaArgs, Switch, TrainArgs,
};

/// Gradcheck fails when any group's relative error reaches this value.
const GRADCHECK_LIMIT: f64 = 1e-4;

/// Test hook: scales the analytic codebook gradient by `1 + value`.
const PERTURB_ENV: &str = "FEATAGG_GRADCHECK_PERTURB";

type CmdResult = Result<(), Failure>;

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn load_bags(path: &Path) -> Result<BagContainer, Failure> {
    data::read_bags_auto(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<featagg::TrainedModel, Failure> {
    data::load_model(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

pub fn gen_data(a: GenDataArgs) -> CmdResult {
    let cfg = SyntheticConfig {
        dataset: match a.dataset {
            Dataset::Concentric => SyntheticKind::Concentric,
            Dataset::Xor => SyntheticKind::Xor,
        },
        bags_per_class: a.bags_per_class,
        features_per_bag: a.features_per_bag,
        noise: a.noise,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let container = synthetic::generate(&cfg);
    data::write_bags(&container, &a.out)?;
    println!(
        "wrote {} {} bags ({} classes, {} descriptors each, D={}) to {}",
        container.len(),
        cfg.dataset,
        container.classes,
        cfg.features_per_bag,
        container.dim,
        a.out.display()
    );
    Ok(())
}

fn training_config(m: &ModelArgs) -> Result<TrainingConfig, Failure> {
    let kind = match m.encoder {
        Encoder::Bow => EncoderKind::Bow,
        Encoder::T1 => EncoderKind::T1,
        Encoder::T2 => EncoderKind::T2,
    };
    let use_chi2_map = match m.chi2_map {
        Some(Switch::On) => true,
        Some(Switch::Off) => false,
        None => kind.is_simplex(),
    };
    if use_chi2_map && !kind.is_simplex() {
        return Err(Failure::Usage(
            "--chi2-map on needs nonnegative encodings; use it with --encoder bow or t1".into(),
        ));
    }
    let cfg = TrainingConfig {
        kind,
        k: m.k,
        gamma: m.gamma,
        init_mode: match m.init {
            Init::Random => InitMode::Random,
            Init::Kmeans => InitMode::KMeans,
            Init::Gmm => InitMode::Gmm,
        },
        lr_w: m.lr_w,
        lr_c: m.lr_c,
        lr_sigma: m.lr_sigma,
        batch_size: m.batch,
        epochs: m.epochs,
        subsample: m.subsample,
        use_chi2_map,
        init_classifier_epochs: m.init_epochs,
        finetune_epochs: m.finetune_epochs,
        seed: m.seed,
        ..TrainingConfig::for_kind(kind)
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> CmdResult {
    let cfg = training_config(&a.model)?;
    let train_set = load_bags(&a.train)?;
    let test_set = a.test.as_deref().map(load_bags).transpose()?;
    if let Some(t) = &test_set {
        if t.dim != train_set.dim {
            return Err(Failure::Runtime(format!(
                "test bags have D={}, training bags have D={}",
                t.dim, train_set.dim
            )));
        }
    }
    let model = trainer::train(&train_set.bags, test_set.as_ref().map(|t| t.bags.as_slice()), &cfg)?;
    data::save_model(&model, &a.model_out)?;
    if let Some(path) = &a.metrics_out {
        write_file(path, metrics_to_csv(&model.metrics))?;
    }
    println!(
        "trained {} K={} on {} bags for {} epochs",
        cfg.kind,
        cfg.k,
        train_set.len(),
        cfg.epochs
    );
    println!("train accuracy: {:.4}", trainer::evaluate(&model, &train_set.bags)?);
    if let Some(t) = &test_set {
        println!("test accuracy: {:.4}", trainer::evaluate(&model, &t.bags)?);
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let bags = load_bags(&a.data)?;
    if bags.dim != model.params.dim() {
        return Err(Failure::Runtime(format!(
            "model expects D={}, {} has D={}",
            model.params.dim(),
            a.data.display(),
            bags.dim
        )));
    }
    println!("accuracy: {:.4}", trainer::evaluate(&model, &bags.bags)?);
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let kind = match a.encoder {
        CheckedEncoder::T1 => EncoderKind::T1,
        CheckedEncoder::T2 => EncoderKind::T2,
    };
    let use_chi2_map = match a.chi2_map {
        Some(s) => s == Switch::On,
        None => kind.is_simplex(),
    };
    if use_chi2_map && !kind.is_simplex() {
        return Err(Failure::Usage(
            "--chi2-map on needs nonnegative encodings and cannot follow t2".into(),
        ));
    }
    let perturb = match std::env::var(PERTURB_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| Failure::Usage(format!("{PERTURB_ENV} must be a number, got {v:?}")))?,
        Err(_) => 0.0,
    };
    let report = gradcheck::run(&GradcheckOptions {
        kind,
        trials: a.trials,
        seed: a.seed,
        use_chi2_map,
        perturb,
        ..GradcheckOptions::default()
    })?;
    println!("trials: {}", report.trials);
    println!("codebook: {:.3e}", report.codebook);
    println!("log_precisions: {:.3e}", report.log_precisions);
    println!("weights: {:.3e}", report.weights);
    println!("map_input: {:.3e}", report.input);
    println!("max: {:.3e}", report.max_error());
    if report.max_error() < GRADCHECK_LIMIT {
        Ok(())
    } else {
        Err(Failure::Gradcheck(format!(
            "max relative error {:.3e} is not below {GRADCHECK_LIMIT:e}",
            report.max_error()
        )))
    }
}

pub fn export_plot(a: ExportPlotArgs) -> CmdResult {
    let csv_path = a.out.with_extension("csv");
    if let (Some(model_path), Some(data_path)) = (&a.model, &a.data) {
        let bags = load_bags(data_path)?;
        if bags.dim != 2 {
            return Err(Failure::Usage(format!(
                "codebook plots need 2-D data, {} has D={}",
                data_path.display(),
                bags.dim
            )));
        }
        let model = load_model(model_path)?;
        if model.params.dim() != 2 {
            return Err(Failure::Runtime(format!(
                "model has D={}, data has D=2",
                model.params.dim()
            )));
        }
        let centers = &model.params.codebook.centers;
        write_file(&a.out, plot::codebook_svg(&bags.bags, centers)?)?;
        write_file(&csv_path, plot::codebook_csv(&bags.bags, centers)?)?;
    } else if let Some(metrics_path) = &a.metrics {
        let text = read_text(metrics_path)?;
        let metrics = metrics_from_csv(&text)?;
        write_file(&a.out, plot::metrics_svg(&metrics)?)?;
        write_file(&csv_path, text)?;
    } else {
        return Err(Failure::Usage("pass --model and --data, or --metrics".into()));
    }
    println!("wrote {} and {}", a.out.display(), csv_path.display());
    Ok(())
}

pub fn sweep_gamma(a: SweepGammaArgs) -> CmdResult {
    let base = training_config(&a.model)?;
    let container = load_bags(&a.train)?;
    let (fit, val) =
        data::split(&container, 1.0 - a.val_fraction, base.seed, true).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("gamma,val_acc");
    let mut best: Option<(f64, f64)> = None;
    for &gamma in &a.gammas {
        let cfg = TrainingConfig { gamma, ..base.clone() };
        let model = trainer::train(&fit.bags, None, &cfg)?;
        let acc = trainer::evaluate(&model, &val.bags)?;
        println!("{gamma},{acc:.4}");
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((gamma, acc));
        }
    }
    if let Some((gamma, acc)) = best {
        eprintln!("best gamma: {gamma} (validation accuracy {acc:.4})");
    }
    Ok(())
}
