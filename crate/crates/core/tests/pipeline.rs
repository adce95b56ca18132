use fedkan_core::data::{generate_beams, load_csv};
use fedkan_core::federation::{
    evaluate_global, run_experiment, run_round, Aggregation, ClientState, CsvDocument, ExperimentSummary,
    FederationConfig,
};
use fedkan_core::model::{Model, ModelConfig, ModelKind, ParameterVector};
use fedkan_core::Error;

fn short_protocol(seed: u64) -> FederationConfig {
    FederationConfig {
        rounds: 3,
        local_epochs: 2,
        seed,
        ..FederationConfig::default()
    }
}

#[test]
fn csv_files_to_report_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut clients = Vec::new();
    for beam in generate_beams(5, 200, 3) {
        let path = dir.path().join(format!("{}.csv", beam.beam_id));
        beam.write_csv(&path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.len(), beam.len());
        clients.push(ClientState::prepare(&loaded, 5, 0.8).unwrap());
    }

    let cfg = ModelConfig::reference(ModelKind::FedKan);
    let report = run_experiment(&cfg, &short_protocol(5), &clients).unwrap();
    assert_eq!(report.rounds.len(), 3);
    let (_, avg) = evaluate_global(&report.final_weights, &clients, &cfg).unwrap();
    assert_eq!(avg, report.final_avg_test_loss);

    let text = report.to_csv_string();
    let summary = ExperimentSummary::from_csv_document(&CsvDocument::parse(&text).unwrap()).unwrap();
    assert_eq!(summary.dataset_digest, report.dataset_digest);
    assert_eq!(summary.final_avg_test_loss, report.final_avg_test_loss);
    for (a, b) in summary.rounds.iter().zip(&report.rounds) {
        assert_eq!(a.avg_train_loss, b.avg_train_loss);
        assert_eq!(a.per_client_test_loss, b.per_client_test_loss);
    }

    let path = dir.path().join("weights.txt");
    report.final_weights.write_file(&path, &cfg.config_hash()).unwrap();
    let (weights, hash) = ParameterVector::read_file(&path).unwrap();
    assert_eq!(hash, cfg.config_hash());
    assert_eq!(weights, report.final_weights);
    let mut model = Model::build(&cfg, 0).unwrap();
    model.import_weights(&weights).unwrap();

    let mlp = Model::build(&ModelConfig::reference(ModelKind::FedMlp), 0).unwrap();
    assert!(matches!(
        mlp.export_weights().check_compatible(&weights),
        Err(Error::IncompatibleWeights { .. })
    ));
}

#[test]
fn single_round_experiment_equals_one_round_call() {
    let clients: Vec<_> = generate_beams(8, 150, 2)
        .iter()
        .map(|b| ClientState::prepare(b, 5, 0.8).unwrap())
        .collect();
    let cfg = ModelConfig::reference(ModelKind::FedMlp);
    let fed = FederationConfig {
        rounds: 1,
        aggregation: Aggregation::SampleWeighted,
        ..short_protocol(8)
    };
    let report = run_experiment(&cfg, &fed, &clients).unwrap();
    let initial = Model::build(&cfg, fed.seed).unwrap().export_weights();
    let (weights, round) = run_round(&initial, &clients, &cfg, &fed, 1).unwrap();
    assert_eq!(report.final_weights, weights);
    assert_eq!(report.rounds[0], round);
}

#[test]
fn partial_availability_still_evaluates_everyone() {
    let clients: Vec<_> = generate_beams(2, 150, 4)
        .iter()
        .map(|b| ClientState::prepare(b, 5, 0.8).unwrap())
        .collect();
    let fed = FederationConfig {
        availability_prob: 0.3,
        ..short_protocol(2)
    };
    let report = run_experiment(&ModelConfig::reference(ModelKind::FedKan), &fed, &clients).unwrap();
    for r in &report.rounds {
        assert!(!r.participants.is_empty());
        assert_eq!(r.per_client_test_loss.len(), 4);
    }
}
