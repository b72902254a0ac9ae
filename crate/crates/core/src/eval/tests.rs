use super::*;
use crate::autodiff::Activation;
use crate::model::{ArchConfig, ModelMeta, Normalization};
use crate::oracle::Oracle;
use crate::types::Part;

fn scenario(freqs: &[f64]) -> ScenarioConfig {
    ScenarioConfig {
        frequencies: freqs.to_vec(),
        ..ScenarioConfig::default()
    }
}

fn oracle() -> OraclePredictor {
    OraclePredictor {
        oracle: Oracle::FreeField,
        speed_of_sound: 343.0,
    }
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        steps: 15,
        n_pde: 16,
        learning_rate: 3e-3,
        arch: ArchConfig {
            hidden_widths: vec![6],
            latent_dim: 4,
            activation: Activation::Tanh,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn oracle_and_zero_predictors_hit_the_anchors() {
    let sc = scenario(&[200.0, 700.0, 1500.0]);
    let test = synth_dataset(&sc, Split::Test).unwrap();
    let t = evaluate_method(&oracle(), &test, "oracle", "exact").unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(t.rows.iter().all(|r| r.nmse_db == f64::NEG_INFINITY && r.n_pairs == 1920));
    let z = evaluate_method(&ZeroPredictor, &test, "zero", "-").unwrap();
    assert!(z.rows.iter().all(|r| r.nmse_db.abs() <= 1e-12));
    assert_eq!(z.dataset_checksum, test.checksum());
    assert!(!z.to_csv().contains("< -300") && t.to_csv().contains(",< -300,1920"));
}

#[test]
fn rows_equal_pooled_nmse() {
    let sc = scenario(&[400.0, 900.0]);
    let test = synth_dataset(&sc, Split::Test).unwrap();
    let noisy = |r: &Position3, s: &Position3, f: f64| -> Result<ComplexPressure> {
        let p = oracle().predict(r, s, f)?;
        Ok(p.scale(0.9) + ComplexPressure::new(1e-3 * r.x, -2e-3 * s.y))
    };
    let t = evaluate_method(&noisy, &test, "noisy", "-").unwrap();
    for row in &t.rows {
        let samples = test.at_frequency(row.frequency);
        let preds: Vec<_> = samples.iter().map(|s| noisy(&s.receiver, &s.source, s.frequency).unwrap()).collect();
        let truths: Vec<_> = samples.iter().map(|s| s.pressure).collect();
        assert_eq!(row.nmse_db, nmse(&preds, &truths).unwrap());
    }
    assert_eq!(t.rows[0].frequency, 400.0);
}

#[test]
fn comparison_interleaves_methods_and_checks_coverage() {
    let sc = scenario(&[300.0, 600.0]);
    let train = synth_dataset(&sc, Split::Train).unwrap();
    let test = synth_dataset(&sc, Split::Test).unwrap();
    let krr = KrrBank::fit(&train, &[1e-8, 1e-4], 1, 2).unwrap();
    assert_eq!(krr.frequencies(), vec![300.0, 600.0]);
    let methods = [
        Method { method: KRR_METHOD, variant: "baseline", predictor: &krr },
        Method { method: "oracle", variant: "exact", predictor: &oracle() },
    ];
    let t = compare_methods(&test, &methods).unwrap();
    let labels: Vec<(f64, &str)> = t.rows.iter().map(|r| (r.frequency, r.method.as_str())).collect();
    assert_eq!(labels, [(300.0, "krr"), (300.0, "oracle"), (600.0, "krr"), (600.0, "oracle")]);
    assert!(t.rows[0].nmse_db < -10.0, "{}", t.rows[0].nmse_db);
    assert_eq!(t.rows[1].nmse_db, f64::NEG_INFINITY);

    let empty = PinnBank::default();
    let err = compare_methods(&test, &[Method { method: PINN_METHOD, variant: "full", predictor: &empty }]);
    assert!(matches!(err, Err(Error::Coverage(_))));
}

#[test]
fn table_csv_round_trip() {
    let t = NMSETable {
        rows: vec![
            NMSERow { frequency: 500.0, method: "pinn".into(), variant: "full".into(), nmse_db: -12.25, n_pairs: 1920 },
            NMSERow { frequency: 500.0, method: "oracle".into(), variant: "exact".into(), nmse_db: f64::NEG_INFINITY, n_pairs: 1920 },
        ],
        dataset_checksum: "abc".into(),
        config_hash: config_hash(&TrainConfig::default()),
    };
    let text = t.to_csv();
    assert!(text.lines().nth(2) == Some(TABLE_HEADER));
    assert_eq!(NMSETable::from_csv(&text).unwrap(), t);
    assert!(NMSETable::from_csv("f_hz,method\n").is_err());
    assert!(NMSETable::from_csv(&format!("{TABLE_HEADER}\n500,a,b,-1,0\n")).is_err());
    assert!(NMSETable::from_csv("").is_err());
    let mut other = t.clone();
    other.dataset_checksum = "def".into();
    assert!(t.clone().merge(other).is_err());
}

#[test]
fn heatmap_shapes_and_domain() {
    let sc = scenario(&[1500.0]);
    let grid = default_heatmap_grid(&sc);
    assert_eq!(grid.counts, [57, 57, 1]);
    assert!((grid.spacing - 0.005).abs() < 1e-15);
    let dom = sc.receiver_domain().unwrap();
    let src = sc.source_positions()[2];
    let z = export_heatmap(&ZeroPredictor, &src, 1500.0, &grid, Part::Real, &dom).unwrap();
    assert_eq!((z.xs.len(), z.ys.len(), z.values.len(), z.values[0].len()), (57, 57, 57, 57));
    assert!(z.values.iter().flatten().all(|&v| v == 0.0));
    let csv = z.to_csv();
    assert_eq!(csv.lines().count(), 58);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 58);

    let mut outside = grid.clone();
    outside.corner.x -= 0.01;
    assert!(matches!(
        export_heatmap(&ZeroPredictor, &src, 1500.0, &outside, Part::Real, &dom),
        Err(Error::Domain(_))
    ));
    let empty = PinnBank::default();
    assert!(matches!(
        export_heatmap(&empty, &src, 1500.0, &grid, Part::Imag, &dom),
        Err(Error::Coverage(_))
    ));
}

#[test]
fn oracle_heatmap_shows_the_acoustic_wavelength() {
    let sc = scenario(&[1500.0]);
    let grid = default_heatmap_grid(&sc);
    // Source 0 sits on the +x axis, in line with the middle row.
    let src = sc.source_positions()[0];
    let h = export_heatmap(&oracle(), &src, 1500.0, &grid, Part::Real, &sc.receiver_domain().unwrap()).unwrap();
    let mid = 28;
    assert!(h.ys[mid].abs() < 1e-12);
    let row = &h.values[mid];
    let crossings: Vec<f64> = (1..row.len())
        .filter(|&i| row[i - 1].signum() != row[i].signum())
        .map(|i| {
            let t = row[i - 1] / (row[i - 1] - row[i]);
            h.xs[i - 1] + t * (h.xs[i] - h.xs[i - 1])
        })
        .collect();
    assert!(crossings.len() >= 2);
    let period = 2.0 * (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    assert!((period - 343.0 / 1500.0).abs() <= 0.02 * 0.2287, "{period}");
}

#[test]
fn pinn_bank_pairs_parts() {
    let arch = tiny_config().arch;
    let norm = Normalization::identity();
    let m = |f: f64, part: Part| -> Model { arch.deepset(norm, ModelMeta::new(f, part), 1).unwrap().into() };
    let bank = PinnBank::from_models([m(500.0, Part::Real), m(500.0, Part::Imag), m(100.0, Part::Imag), m(100.0, Part::Real)]).unwrap();
    assert_eq!(bank.frequencies(), vec![100.0, 500.0]);
    assert!(bank.covers(500.0) && !bank.covers(600.0));
    assert!(matches!(PinnBank::from_models([m(500.0, Part::Real)]), Err(Error::Coverage(_))));
    assert!(PinnBank::from_models([m(500.0, Part::Imag), m(500.0, Part::Imag)]).is_err());
    let plain: Model = arch.plain(norm, ModelMeta::new(500.0, Part::Imag), 1).unwrap().into();
    assert!(matches!(PinnBank::from_models([m(500.0, Part::Real), plain]), Err(Error::ModelKind { .. })));
}

#[test]
fn swap_probe_separates_architectures() {
    let sc = scenario(&[500.0]);
    let pairs = probe_pairs(&sc, 64, 3).unwrap();
    assert_eq!(pairs, probe_pairs(&sc, 64, 3).unwrap());
    let arch = tiny_config().arch;
    let norm = Normalization::from_domain(&sc.bounding_domain().unwrap());
    for seed in 0..5 {
        let meta = ModelMeta::new(500.0, Part::Real);
        assert!(swap_invariance_probe(&arch.deepset(norm, meta.clone(), seed).unwrap().into(), &pairs));
        assert!(!swap_invariance_probe(&arch.plain(norm, meta, seed).unwrap().into(), &pairs));
    }
}

#[test]
fn ablation_covers_every_variant() {
    let mut sc = scenario(&[500.0]);
    sc.train_source_indices = vec![0, 20, 40];
    sc.test_source_indices = vec![10, 30];
    let a = run_ablation(&sc, &tiny_config(), 2).unwrap();
    assert_eq!(a.table.rows.len(), 4);
    let variants: Vec<&str> = a.table.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(variants, ["full", "no_pde", "plain_pinn", "plain"]);
    assert!(a.table.rows.iter().all(|r| r.n_pairs == 128 && r.nmse_db.is_finite()));
    let probe = |v| a.outcome(v).unwrap().swap_invariant;
    assert!(probe(Variant::Full) && probe(Variant::NoPde));
    assert!(!probe(Variant::PlainPinn) && !probe(Variant::Plain));
    assert_eq!(a.outcome(Variant::NoPde).unwrap().laplacian_evaluations, 0);
    assert!(a.outcome(Variant::Full).unwrap().laplacian_evaluations > 0);
    assert!(!a.table.config_hash.is_empty());

    let bad = TrainConfig { learning_rate: 1e300, ..tiny_config() };
    match run_ablation(&sc, &bad, 1) {
        Err(e @ Error::Variant { .. }) => assert!(matches!(e.root(), Error::Diverged { .. })),
        other => panic!("expected an annotated divergence, got {other:?}"),
    }
}
