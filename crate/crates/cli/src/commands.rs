use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedkan_core::data::{generate_beams, load_csv, BeamSeries};
use fedkan_core::federation::{
    dataset_digest, run_experiment, version_string, ClientState, CsvDocument, ExperimentReport,
};
use fedkan_core::model::{ModelConfig, ModelKind};
use fedkan_core::Error as CoreError;
use log::info;

use crate::config::{DataSource, RunConfig};
use crate::error::CliError;

/// Command-line flags layered over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallel_clients: bool,
    pub availability: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: ExperimentReport,
    pub report_path: PathBuf,
    pub weights_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub kan: ExperimentReport,
    pub mlp: ExperimentReport,
    pub comparison_path: PathBuf,
    pub report_paths: [PathBuf; 2],
    /// Model / parameter count / average test loss table and the reduction line.
    pub summary: String,
}

/// `(1 - kan / mlp) · 100`, from unrounded losses.
pub fn percent_reduction(kan_loss: f64, mlp_loss: f64) -> f64 {
    (1.0 - kan_loss / mlp_loss) * 100.0
}

/// Writes `n_beams` synthetic beam CSVs (`beam_<i>.csv`) into `out_dir`.
pub fn cmd_generate(seed: u64, hours: usize, n_beams: usize, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut written = Vec::with_capacity(n_beams);
    for beam in generate_beams(seed, hours, n_beams) {
        let path = out_dir.join(format!("{}.csv", beam.beam_id));
        write_atomic(&path, &beam.to_csv_string())?;
        written.push(path);
    }
    Ok(written)
}

/// Trains the configured model kind and writes its report CSV and final weights.
pub fn cmd_train(config_path: &Path, overrides: &Overrides) -> Result<TrainOutcome, CliError> {
    let run = resolve(config_path, overrides)?;
    let clients = prepare_clients(&run)?;
    let report = run_experiment(&run.model, &run.federation, &clients)?;

    let slug = run.model.kind.slug();
    let report_path = run.output_dir.join(format!("{slug}_report.csv"));
    let weights_path = run.output_dir.join(format!("{slug}_weights.txt"));
    let weights_text = report.final_weights.to_text(&run.model.config_hash());
    write_outputs(
        &run.output_dir,
        &[(&report_path, report.to_csv_string()), (&weights_path, weights_text)],
    )?;
    Ok(TrainOutcome {
        report,
        report_path,
        weights_path,
    })
}

/// Trains Fed-KAN and Fed-MLP on the same prepared clients and seeds.
pub fn cmd_compare(config_path: &Path, overrides: &Overrides) -> Result<CompareOutcome, CliError> {
    let run = resolve(config_path, overrides)?;
    let clients = prepare_clients(&run)?;

    let kan_cfg = ModelConfig {
        kind: ModelKind::FedKan,
        ..run.model.clone()
    };
    let mlp_cfg = ModelConfig {
        kind: ModelKind::FedMlp,
        ..run.model.clone()
    };
    info!("training {} on {} clients", kan_cfg.kind.label(), clients.len());
    let kan = run_experiment(&kan_cfg, &run.federation, &clients)?;
    info!("training {} on {} clients", mlp_cfg.kind.label(), clients.len());
    let mlp = run_experiment(&mlp_cfg, &run.federation, &clients)?;

    let comparison = comparison_document(&kan, &mlp);
    let summary = summary_table(&kan, &mlp);
    let comparison_path = run.output_dir.join("comparison.csv");
    let kan_path = run.output_dir.join("fed_kan_report.csv");
    let mlp_path = run.output_dir.join("fed_mlp_report.csv");
    write_outputs(
        &run.output_dir,
        &[
            (&comparison_path, comparison.to_csv_string()),
            (&kan_path, kan.to_csv_string()),
            (&mlp_path, mlp.to_csv_string()),
        ],
    )?;
    Ok(CompareOutcome {
        kan,
        mlp,
        comparison_path,
        report_paths: [kan_path, mlp_path],
        summary,
    })
}

/// Side-by-side per-round losses of both models.
pub fn comparison_document(kan: &ExperimentReport, mlp: &ExperimentReport) -> CsvDocument {
    let metadata = vec![
        ("report".to_string(), "fedkan comparison".to_string()),
        ("version".into(), version_string()),
        ("seed".into(), kan.federation_config.seed.to_string()),
        ("dataset_digest".into(), kan.dataset_digest.clone()),
        ("fed_kan_parameter_count".into(), kan.parameter_count.to_string()),
        ("fed_mlp_parameter_count".into(), mlp.parameter_count.to_string()),
        (
            "fed_kan_final_avg_test_loss".into(),
            format!("{:?}", kan.final_avg_test_loss),
        ),
        (
            "fed_mlp_final_avg_test_loss".into(),
            format!("{:?}", mlp.final_avg_test_loss),
        ),
        (
            "test_loss_reduction_pct".into(),
            format!(
                "{:?}",
                percent_reduction(kan.final_avg_test_loss, mlp.final_avg_test_loss)
            ),
        ),
    ];
    let header = [
        "round",
        "fed_kan_avg_train_loss",
        "fed_mlp_avg_train_loss",
        "fed_kan_avg_test_loss",
        "fed_mlp_avg_test_loss",
    ]
    .map(String::from)
    .to_vec();
    let rows = kan
        .rounds
        .iter()
        .zip(&mlp.rounds)
        .map(|(k, m)| {
            vec![
                k.round_index as f64,
                k.avg_train_loss,
                m.avg_train_loss,
                k.avg_test_loss,
                m.avg_test_loss,
            ]
        })
        .collect();
    CsvDocument { metadata, header, rows }
}

pub fn summary_table(kan: &ExperimentReport, mlp: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>22} {:>20}",
        "Model", "Number of Parameters", "Average Test Loss"
    );
    for r in [kan, mlp] {
        let _ = writeln!(
            out,
            "{:<10} {:>22} {:>20.6}",
            r.model_config.kind.label(),
            r.parameter_count,
            r.final_avg_test_loss
        );
    }
    let _ = writeln!(
        out,
        "Fed-KAN test-loss reduction vs Fed-MLP: {:.2}%",
        percent_reduction(kan.final_avg_test_loss, mlp.final_avg_test_loss)
    );
    out
}

fn resolve(config_path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut run = RunConfig::load(config_path)?;
    if let Some(seed) = overrides.seed {
        run.seed = Some(seed);
    }
    run.federation.seed = run.effective_seed();
    if let Some(out) = &overrides.out {
        run.output_dir = out.clone();
    }
    if overrides.parallel_clients {
        run.federation.parallel_clients = true;
    }
    if let Some(p) = overrides.availability {
        run.federation.availability_prob = p;
    }
    run.validate(config_path)?;
    Ok(run)
}

fn prepare_clients(run: &RunConfig) -> Result<Vec<ClientState>, CliError> {
    let beams: Vec<BeamSeries> = match run.data_source() {
        DataSource::Files(files) => files.iter().map(|f| load_csv(f)).collect::<Result<_, _>>()?,
        DataSource::Synthetic(spec) => generate_beams(run.effective_seed(), spec.hours, spec.beams),
    };
    let mut ids: Vec<&str> = beams.iter().map(|b| b.beam_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CoreError::Config(format!("duplicate beam id `{}`", dup[0])).into());
    }
    let clients = beams
        .iter()
        .map(|b| ClientState::prepare(b, run.data.window, run.data.train_fraction))
        .collect::<Result<Vec<_>, _>>()?;
    info!(
        "prepared {} clients, dataset digest {}",
        clients.len(),
        dataset_digest(&clients)
    );
    Ok(clients)
}

/// Writes every file only after all contents exist; each file goes through a
/// temporary sibling and a rename.
fn write_outputs(dir: &Path, files: &[(&PathBuf, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for (path, contents) in files {
        write_atomic(path, contents)?;
    }
    Ok(())
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let io = |p: &Path, e| CoreError::Io {
        path: p.to_path_buf(),
        source: e,
    };
    std::fs::write(&tmp, contents).map_err(|e| io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io(path, e))?;
    Ok(())
}
