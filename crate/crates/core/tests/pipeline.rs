mod common;

use common::{best_match, exact_shared_basis_data, random_grouped, rng};
use jevdpca::fairpca::{column_scores, minmax_oracle_on_basis};
use jevdpca::linalg::max_principal_angle;
use jevdpca::nalgebra::DMatrix;
use jevdpca::synth::{make_grouped_gaussian, random_orthonormal, GaussianSpec};
use jevdpca::*;

fn max(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn gap(values: &[f64]) -> f64 {
    max(values) - values.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn adversarial_spectra(d: usize) -> Vec<Vec<f64>> {
    let a: Vec<f64> = (0..d).map(|i| (d - i) as f64 * 1.5).collect();
    let b: Vec<f64> = a.iter().rev().cloned().collect();
    vec![a, b]
}

#[test]
fn adversarial_shared_basis_beats_pca_gap() {
    let mut compared = 0;
    for seed in 0..5 {
        let d = 6;
        let q = random_orthonormal(d, &mut rng(seed));
        let data = exact_shared_basis_data(&q, &adversarial_spectra(d), 2);
        for r in 1..=3 {
            let fair = match fit_fair_pca(&data, r, &JevdConfig::default()) {
                Ok(model) => model,
                Err(e) => {
                    assert!(e.is_solver_abort(), "{e}");
                    continue;
                }
            };
            compared += 1;
            let pca = fit_standard_pca(&data, r).unwrap();
            assert!(fair.diagnostics.final_objective <= 1e-10);
            assert!(
                fair.loss_gap() < gap(&pca.per_group_losses),
                "r={r}: fair gap {} vs pca gap {}",
                fair.loss_gap(),
                gap(&pca.per_group_losses)
            );
            let oracle = minmax_oracle_on_basis(&fair.full_basis, &data.split_groups(), r).unwrap();
            assert!(oracle.max_loss <= max(&fair.per_group_losses) + 1e-9);
        }
    }
    assert!(compared >= 6, "{compared}");
}

#[test]
fn disjoint_top_directions_greedy_is_optimal() {
    let q = random_orthonormal(4, &mut rng(21));
    let data = exact_shared_basis_data(&q, &[vec![3.0, 2.0, 0.2, 0.1], vec![0.1, 0.2, 3.0, 2.0]], 1);
    for r in 1..4 {
        let fair = fit_fair_pca(&data, r, &JevdConfig::default()).unwrap();
        let pca = fit_standard_pca(&data, r).unwrap();
        let oracle = minmax_oracle_on_basis(&fair.full_basis, &data.split_groups(), r).unwrap();
        assert!((max(&fair.per_group_losses) - oracle.max_loss).abs() <= 1e-9, "r={r}");
        assert!(fair.loss_gap() <= gap(&pca.per_group_losses) + 1e-9, "r={r}");
    }
}

#[test]
fn commuting_family_losses_follow_diagonal_sums() {
    let d = 8;
    let r = 3;
    let q = random_orthonormal(d, &mut rng(8));
    let spectra = vec![
        vec![9.0, 7.5, 6.0, 5.0, 3.0, 2.5, 1.0, 0.5],
        vec![1.0, 2.0, 8.0, 3.5, 6.5, 0.75, 4.0, 5.5],
    ];
    let data = exact_shared_basis_data(&q, &spectra, 1);
    let model = fit_fair_pca(&data, r, &JevdConfig::default()).unwrap();
    assert!(model.diagnostics.final_objective <= 1e-10);
    let groups = data.split_groups();
    for (s, g) in groups.iter().enumerate() {
        let target = build_target_matrix(g, r, s).unwrap();
        let diagonal_sum: f64 = model
            .selected_columns
            .iter()
            .map(|&j| {
                let (k, angle) = best_match(&q, &model.full_basis.columns(j, 1).into_owned());
                assert!(angle < 1e-6);
                let w = q.column(k);
                w.dot(&(&target.m * w))
            })
            .sum();
        assert!((model.per_group_losses[s] + diagonal_sum).abs() <= 1e-8, "group {s}");
    }
}

// The unguarded update can blow up from U = I; only converged fits are compared here.
#[test]
fn identical_groups_reduce_to_pca() {
    let mut compared = 0;
    for seed in 0..8 {
        let d = 5;
        let spectrum: Vec<f64> = vec![5.0, 4.0, 3.0, 2.0, 1.0];
        let q = random_orthonormal(d, &mut rng(seed));
        let data = exact_shared_basis_data(&q, &[spectrum.clone(), spectrum], 1);
        for r in 1..=3 {
            let fair = match fit_fair_pca(&data, r, &JevdConfig::default()) {
                Ok(model) => model,
                Err(e) => {
                    assert!(e.is_solver_abort(), "{e}");
                    continue;
                }
            };
            compared += 1;
            let pca = fit_standard_pca(&data, r).unwrap();
            let angle = max_principal_angle(fair.projection.columns(), pca.projection.columns());
            assert!(angle <= 1e-6, "seed {seed} r {r}: {angle}");
        }
    }
    assert!(compared >= 12, "{compared}");
}

#[test]
fn sweep_matches_single_rank_fits() {
    let data = random_grouped(30, 5, 2, &mut rng(4));
    let config = JevdConfig::default();
    let sweep = fit_fair_pca_sweep(&data, &[1, 2, 3, 4], &config).unwrap();
    let reference = fit_fair_pca(&data, 1, &config).unwrap();
    for model in &sweep {
        assert!((&model.full_basis - &reference.full_basis).amax() <= 1e-12);
        let targets: Vec<TargetMatrix> = data
            .split_groups()
            .iter()
            .enumerate()
            .map(|(s, g)| build_target_matrix(g, model.rank, s).unwrap())
            .collect();
        let expected = select_columns(&model.full_basis, &targets, model.rank).unwrap();
        assert_eq!(model.selected_columns, expected);
        assert_eq!(model.column_scores, column_scores(&model.full_basis, &targets));
    }
    assert!(matches!(fit_fair_pca_sweep(&data, &[1, 5], &config), Err(Error::InvalidRank { .. })));
}

#[test]
fn synthetic_sweep_error_nonincreasing_in_rank() {
    let spec = GaussianSpec {
        dim: 6,
        r_signal: 6,
        group_spectra: adversarial_spectra(6),
        shared_basis: true,
        n_per_group: 300,
        seed: 11,
    };
    let data = make_grouped_gaussian(&spec).unwrap();
    let ranks: Vec<usize> = (1..6).collect();
    let fair: Vec<f64> = fit_fair_pca_sweep(&data, &ranks, &JevdConfig::default())
        .unwrap()
        .iter()
        .map(|m| evaluate(&data, m).unwrap().reconstruction_error_total)
        .collect();
    let pca: Vec<f64> = ranks
        .iter()
        .map(|&r| evaluate(&data, &fit_standard_pca(&data, r).unwrap()).unwrap().reconstruction_error_total)
        .collect();
    for column in [&fair, &pca] {
        assert!(column.windows(2).all(|w| w[1] < w[0]), "{column:?}");
    }
}

#[test]
fn model_json_round_trip_is_exact() {
    let data = random_grouped(20, 4, 3, &mut rng(6));
    let fair = fit_fair_pca(&data, 2, &JevdConfig::default()).unwrap();
    let doc = ModelDocument::from(&fair);
    let text = doc.to_json().unwrap();
    let back = ModelDocument::from_json(&text).unwrap();
    assert_eq!(back, doc);
    let loaded = back.into_model().unwrap();
    assert_eq!(loaded.projection, fair.projection);
    assert_eq!(evaluate(&data, &loaded).unwrap(), evaluate(&data, &fair).unwrap());
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["method"], "jevd");
    assert_eq!(value["d"], 4);
    let first = text.split("\"projection\": [").nth(1).unwrap().trim_start();
    let token: String = first.chars().take_while(|c| !c.is_whitespace() && *c != ',').collect();
    let mantissa = token.split('e').next().unwrap().replace(['-', '.'], "");
    assert!(mantissa.len() >= 17, "{token}");

    let pca = fit_standard_pca(&data, 3).unwrap();
    let loaded = ModelDocument::from_json(&ModelDocument::from(&pca).to_json().unwrap())
        .unwrap()
        .into_model()
        .unwrap();
    assert_eq!(loaded.method(), Method::Pca);
    assert_eq!(loaded.projection, pca.projection);
}

#[test]
fn model_with_wrong_shape_is_rejected() {
    let data = random_grouped(20, 4, 2, &mut rng(6));
    let mut doc = ModelDocument::from(&fit_standard_pca(&data, 2).unwrap());
    doc.projection.pop();
    assert!(matches!(doc.into_model(), Err(Error::DimensionMismatch(_))));
    let other = random_grouped(20, 3, 2, &mut rng(7));
    let loaded = ModelDocument::from(&fit_standard_pca(&data, 2).unwrap()).into_model().unwrap();
    assert!(matches!(evaluate(&other, &loaded), Err(Error::DimensionMismatch(_))));
}

#[test]
fn csv_ingestion_through_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "age,city,score,id,sex\n\
               30,north,1.5,1,F\n\
               41,south,2.5,2,M\n\
               25,north,0.5,3,F\n\
               52,east,3.0,4,M\n\
               38,south,NA,5,F\n\
               47,east,2.0,6,M\n";
    std::fs::write(dir.path().join("people.csv"), csv).unwrap();
    let config = r#"{
        "path": "people.csv",
        "sensitive_column": "sex",
        "drop_columns": ["id"],
        "standardize": true,
        "encoding": {"city": "one-hot"},
        "missing_policy": "drop-row"
    }"#;
    std::fs::write(dir.path().join("people.json"), config).unwrap();
    let config = DatasetConfig::from_json_file(dir.path().join("people.json")).unwrap();
    let data = load_dataset(&config).unwrap();
    assert_eq!(data.n(), 5);
    assert_eq!(
        data.feature_names(),
        &["age", "city=east", "city=north", "city=south", "score"]
    );
    assert_eq!(data.group_names(), &["F", "M"]);
    assert_eq!(data.group_sizes(), &[2, 3]);
    for col in data.features().column_iter() {
        let n = col.len() as f64;
        assert!(col.sum().abs() < 1e-12);
        assert!((col.norm_squared() / n - 1.0).abs() < 1e-12);
    }
    let model = fit_fair_pca(&data, 2, &JevdConfig::default()).unwrap();
    assert_eq!(model.projection.dim(), 5);

    let raw = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 9.0]);
    let path = dir.path().join("grouped.csv");
    jevdpca::dataio::write_grouped_csv(&path, &raw, &[0, 1, 0, 1], &["a".into(), "b".into()], "group").unwrap();
    let back = load_dataset(&DatasetConfig::new(&path, "group")).unwrap();
    assert_eq!(back.uncentered(), raw);
}
