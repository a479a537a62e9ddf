use std::fs;
use std::path::{Path, PathBuf};

use aur::backbone::{train_backbone, ExpectationScorer};
use aur::checkpoint::{self, BackboneCheckpoint, UncertaintyCheckpoint};
use aur::config::RunConfig;
use aur::data::{compute_tail_partition, generate_synthetic, InteractionDataset, SyntheticSpec};
use aur::eval::{
    diagnose, evaluate, mean_coverage_length, tail_ratio_calibration, CalibrationReport, CoverageSummary, EvalError,
};
use aur::pipeline::{load_dataset, AurError};
use aur::ranking::{recommend, AurScorer, Blend, CandidateFilter, Scorer};
use aur::uncertainty::{train_uncertainty, UncertaintyParameters};
use serde::Serialize;

use crate::args::*;

pub fn run(cli: Cli) -> Result<(), AurError> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::TrainUncertainty(a) => train_uncertainty_cmd(a),
        Command::Recommend(a) => recommend_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Diagnose(a) => diagnose_cmd(a),
    }
}

/// Every artifact carries the effective config and the hashes of its inputs.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    #[serde(flatten)]
    body: T,
    config: &'a RunConfig,
    dataset_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    backbone_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    uncertainty_hash: Option<String>,
}

fn read_text(path: &Path) -> Result<String, AurError> {
    fs::read_to_string(path).map_err(|e| AurError::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), AurError> {
    fs::write(path, text).map_err(|source| AurError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), AurError> {
    fs::create_dir_all(path).map_err(|source| AurError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn config_from_artifact(path: &Path) -> Result<RunConfig, AurError> {
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?)
        .map_err(|e| AurError::Config(format!("{} is not JSON: {e}", path.display())))?;
    let config = value
        .get("config")
        .ok_or_else(|| AurError::Config(format!("{} has no config echo", path.display())))?;
    serde_json::from_value(config.clone()).map_err(|e| AurError::Config(format!("{}: {e}", path.display())))
}

/// `--config` or `--replay` if given, else `fallback`, then the shared flag
/// overrides.
fn base_config(common: &Common, fallback: Option<RunConfig>) -> Result<RunConfig, AurError> {
    let mut config = if let Some(path) = &common.config {
        RunConfig::from_json(&read_text(path)?).map_err(|e| AurError::Config(format!("{}: {e}", path.display())))?
    } else if let Some(path) = &common.replay {
        config_from_artifact(path)?
    } else {
        fallback.unwrap_or_default()
    };
    if let Some(p) = &common.train {
        config.train_path = Some(p.clone());
    }
    if let Some(p) = &common.test {
        config.test_path = Some(p.clone());
    }
    set(&mut config.format, common.format);
    set(&mut config.seed, common.seed);
    set(&mut config.workers, common.workers);
    Ok(config)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn synth(a: SynthArgs) -> Result<(), AurError> {
    let mut config = base_config(&a.common, None)?;
    let mut spec = config.synthetic.clone().unwrap_or_default();
    set(&mut spec.num_users, a.users);
    set(&mut spec.num_items, a.items);
    set(&mut spec.latent_dim, a.latent_dim);
    set(&mut spec.popularity_skew_exponent, a.skew);
    set(&mut spec.interactions_per_user, a.per_user);
    set(&mut spec.test_holdout_fraction, a.holdout);
    set(&mut spec.seed, a.common.seed);
    spec.validate()?;
    config.synthetic = Some(spec.clone());
    config.validate()?;

    let (dataset, truth) = generate_synthetic(&spec)?;
    create_dir(&a.out)?;
    let files = dataset.serialize(config.format);
    write_text(&a.out.join("train.txt"), &files.train)?;
    write_text(&a.out.join("test.txt"), &files.test)?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        spec: &'a SyntheticSpec,
        ground_truth: &'a aur::data::GroundTruthAffinity,
    }
    let sidecar = Artifact {
        body: Sidecar {
            spec: &spec,
            ground_truth: &truth,
        },
        config: &config,
        dataset_hash: dataset.content_hash().to_string(),
        backbone_hash: None,
        uncertainty_hash: None,
    };
    write_text(&a.out.join("ground_truth.json"), &to_pretty(&sidecar))
}

fn train(a: TrainArgs) -> Result<(), AurError> {
    let mut config = base_config(&a.common, None)?;
    set(&mut config.model, a.model);
    set(&mut config.dim, a.dim);
    set(&mut config.num_layers, a.layers);
    set(&mut config.learning_rate, a.lr);
    set(&mut config.batch_size, a.batch_size);
    set(&mut config.backbone_epochs, a.epochs);
    set(&mut config.reg, a.reg);
    set(&mut config.negative_rate, a.negative_rate);
    config.early_stop |= a.early_stop;
    config.validate()?;

    let dataset = load_dataset(&config)?;
    let trained = train_backbone(&dataset, &config.backbone_config())?;
    let ckpt = BackboneCheckpoint::new(&trained, &dataset, &config);
    checkpoint::save(&ckpt, &a.out)?;
    Ok(())
}

fn train_uncertainty_cmd(a: TrainUncertaintyArgs) -> Result<(), AurError> {
    let (backbone_ckpt, backbone_hash) = checkpoint::load::<BackboneCheckpoint>(&a.backbone)?;
    let mut config = base_config(&a.common, Some(backbone_ckpt.config.clone()))?;
    set(&mut config.uncertainty_dim, a.dim);
    set(&mut config.uncertainty_learning_rate, a.lr);
    set(&mut config.batch_size, a.batch_size);
    set(&mut config.uncertainty_epochs, a.epochs);
    set(&mut config.alpha, a.alpha);
    set(&mut config.beta, a.beta);
    set(&mut config.gamma, a.gamma);
    set(&mut config.scale_k, a.scale_k);
    set(&mut config.activation, a.activation);
    if a.item_subsample.is_some() {
        config.item_subsample = a.item_subsample;
    }
    config.early_stop |= a.early_stop;
    config.validate()?;

    let dataset = load_dataset(&config)?;
    let backbone = backbone_ckpt.restore(&dataset)?;
    let expectations = backbone.scorer()?.predict_all();
    let trained = train_uncertainty(&dataset, &expectations, &config.uncertainty_config())?;
    let ckpt = UncertaintyCheckpoint::new(&trained, &dataset, &backbone_hash, &config);
    checkpoint::save(&ckpt, &a.out)?;
    Ok(())
}

/// Frozen models plus the effective config for an inference command.
struct Loaded {
    config: RunConfig,
    dataset: InteractionDataset,
    expectation: ExpectationScorer,
    uncertainty: Option<UncertaintyParameters>,
    lambda: f64,
    backbone_hash: String,
    uncertainty_hash: Option<String>,
}

impl Loaded {
    fn open(common: &Common, models: &Models) -> Result<Self, AurError> {
        let (backbone_ckpt, backbone_hash) = checkpoint::load::<BackboneCheckpoint>(&models.backbone)?;
        let unc = models
            .uncertainty
            .as_ref()
            .map(|p| checkpoint::load::<UncertaintyCheckpoint>(p))
            .transpose()?;
        let fallback = unc.as_ref().map_or(&backbone_ckpt.config, |(c, _)| &c.config).clone();
        let mut config = base_config(common, Some(fallback))?;
        set(&mut config.lambda, models.lambda);
        set(&mut config.scale_k, models.scale_k);
        config.validate()?;
        let lambda = config.lambda;
        if lambda < 1.0 && unc.is_none() {
            return Err(AurError::Config(format!("lambda {lambda} < 1 needs --uncertainty")));
        }

        let dataset = load_dataset(&config)?;
        let expectation = backbone_ckpt.restore(&dataset)?.scorer()?;
        let (uncertainty, uncertainty_hash) = match unc {
            Some((ckpt, hash)) => (Some(ckpt.restore(&dataset, &backbone_hash, models.scale_k)?), Some(hash)),
            None => (None, None),
        };
        Ok(Loaded {
            config,
            dataset,
            expectation,
            uncertainty,
            lambda,
            backbone_hash,
            uncertainty_hash,
        })
    }

    /// Runs `f` with the blended scorer (the bare backbone when no
    /// uncertainty model was given).
    fn with_scorer<R>(&self, f: impl FnOnce(&dyn Scorer) -> Result<R, AurError>) -> Result<R, AurError> {
        match &self.uncertainty {
            Some(params) => {
                let unc = params.scorer(&self.dataset);
                let scorer = AurScorer::new(&self.expectation, &unc, Blend::new(self.lambda)?);
                f(&scorer)
            }
            None => f(&self.expectation),
        }
    }

    fn artifact<T: Serialize>(&self, body: T) -> Artifact<'_, T> {
        Artifact {
            body,
            config: &self.config,
            dataset_hash: self.dataset.content_hash().to_string(),
            backbone_hash: Some(self.backbone_hash.clone()),
            uncertainty_hash: self.uncertainty_hash.clone(),
        }
    }
}

fn recommend_cmd(a: RecommendArgs) -> Result<(), AurError> {
    let loaded = Loaded::open(&a.common, &a.models)?;
    let partition = compute_tail_partition(&loaded.dataset)?;
    let filter = if a.tail_only {
        CandidateFilter::TailOnly(&partition)
    } else {
        CandidateFilter::All
    };
    let list = loaded.with_scorer(|s| Ok(recommend(s, &loaded.dataset, a.k, loaded.lambda, filter)?))?;
    write_text(&a.out, &list.to_tsv())?;

    #[derive(Serialize)]
    struct Meta {
        lambda: f64,
        k: usize,
        tail_only: bool,
        truncated_users: Vec<usize>,
    }
    let meta = Meta {
        lambda: loaded.lambda,
        k: a.k,
        tail_only: a.tail_only,
        truncated_users: list.rows.iter().enumerate().filter(|(_, r)| r.truncated).map(|(u, _)| u).collect(),
    };
    let mut meta_path = a.out.clone().into_os_string();
    meta_path.push(".meta.json");
    write_text(&PathBuf::from(meta_path), &to_pretty(&loaded.artifact(meta)))
}

#[derive(Serialize)]
struct EvalDiagnostics {
    /// `None` when no user has test items.
    coverage: Option<CoverageSummary>,
    calibration: CalibrationReport,
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), AurError> {
    let mut loaded = Loaded::open(&a.common, &a.models)?;
    if let Some(ks) = a.k_list {
        loaded.config.k_list = ks;
        loaded.config.validate()?;
    }
    let partition = compute_tail_partition(&loaded.dataset)?;
    let (ds, config) = (&loaded.dataset, &loaded.config);
    create_dir(&a.out)?;
    let outputs = loaded.with_scorer(|scorer| {
        let coverage = match mean_coverage_length(scorer, ds, config.workers) {
            Ok(c) => Some(c),
            Err(EvalError::NoUsers(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let calibration = tail_ratio_calibration(scorer, ds, &partition, config.k_list[0], config.workers)?;
        let mut outputs = Vec::new();
        for protocol in a.protocol.protocols() {
            let report = evaluate(scorer, ds, &partition, protocol, loaded.lambda, &config.k_list, config.workers)?;
            outputs.push((protocol, report));
        }
        Ok((outputs, coverage, calibration))
    })?;
    let (reports, coverage, calibration) = outputs;
    for (protocol, report) in reports {
        #[derive(Serialize)]
        struct Body<'a> {
            #[serde(flatten)]
            report: aur::eval::EvalReport,
            diagnostics: &'a EvalDiagnostics,
        }
        let diagnostics = EvalDiagnostics {
            coverage: coverage.clone(),
            calibration: calibration.clone(),
        };
        let body = Body {
            report,
            diagnostics: &diagnostics,
        };
        write_text(&a.out.join(format!("eval_{protocol}.json")), &to_pretty(&loaded.artifact(body)))?;
    }
    Ok(())
}

fn diagnose_cmd(a: DiagnoseArgs) -> Result<(), AurError> {
    if a.models.uncertainty.is_none() {
        return Err(AurError::Config("diagnose needs --uncertainty".into()));
    }
    let loaded = Loaded::open(&a.common, &a.models)?;
    let partition = compute_tail_partition(&loaded.dataset)?;
    let k = a.k.unwrap_or(loaded.config.k_list[0]);
    let params = loaded.uncertainty.as_ref().expect("checked above");
    let unc = params.scorer(&loaded.dataset);
    let blended = AurScorer::new(&loaded.expectation, &unc, Blend::new(loaded.lambda)?);
    let report = diagnose(
        &loaded.expectation,
        &unc,
        &blended,
        loaded.lambda,
        &loaded.dataset,
        &partition,
        k,
        loaded.config.workers,
    )?;
    write_text(&a.out, &to_pretty(&loaded.artifact(report)))
}
