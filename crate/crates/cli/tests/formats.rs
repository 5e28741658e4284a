//! Round trips of the configuration and of every file format.

#![allow(clippy::field_reassign_with_default)]

use std::path::PathBuf;

use countquant::config::{ClusterTargets, ExplicitPrior, PriorConfig, RunConfig};
use countquant::io::{
    ingest_csv, read_quantile_matrix, read_rows, truth_rows, write_dataset, write_quantile_matrix,
    write_rows, CurveRow, TruthRow,
};
use countquant_core::mixture::{AssignmentScheme, LatentMoments, MuSigmaConditional};
use countquant_core::model::Dataset;
use countquant_core::quantile::{QuantileDrawMatrix, QuantileMode};
use countquant_core::sim::{true_quantiles, Setting};
use countquant_core::spline::{DesignSpec, Lambda, SplineSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn design() -> impl Strategy<Value = DesignSpec> {
    prop_oneof![
        (1usize..=10).prop_map(|degree| DesignSpec::Polynomial { degree }),
        (
            1usize..=3,
            1usize..=30,
            1usize..=2,
            prop::option::of(1e-4f64..1e4)
        )
            .prop_map(|(degree, knots, order, l)| {
                DesignSpec::Spline(SplineSpec {
                    degree,
                    interior_knots: knots,
                    penalty_order: order,
                    lambda: l.map_or(Lambda::Auto, Lambda::Fixed),
                })
            }),
    ]
}

fn config() -> impl Strategy<Value = RunConfig> {
    let head = (
        0..=i64::MAX as u64,
        prop::collection::btree_set(1u32..1000, 1..6),
        any::<bool>(),
        1u8..=2,
        10usize..5000,
        (
            0usize..2000,
            1usize..5000,
            1usize..50,
            1usize..20,
            1usize..8,
        ),
    );
    let tail = (
        prop_oneof![
            (0.0f64..0.95, 0.0f64..5.0).prop_map(|(d, s)| PriorConfig::Explicit(ExplicitPrior {
                discount: d,
                strength: s
            })),
            Just(PriorConfig::Targets(ClusterTargets {
                cluster_mean: 20.0,
                cluster_sd: 20.0
            })),
        ],
        (
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
            0.01f64..2.0,
            1e-12f64..1e-2,
        ),
        design(),
        prop::option::of(design()),
        (0usize..500, 1usize..100),
        prop::collection::vec(1usize..400, 0..4),
    );
    (head, tail).prop_map(
        |((seed, taus, std, setting, n, sched), (prior, flags, reg, base, boot, excl))| {
            let mut c = RunConfig::default();
            c.seed = seed;
            c.taus = taus.into_iter().map(|t| t as f64 / 1000.0).collect();
            c.standardize_covariates = std;
            c.simulate.setting = setting;
            c.simulate.n = n;
            c.schedule.burn_in = sched.0;
            c.schedule.iterations = sched.1.max(sched.2);
            c.schedule.thin = sched.2;
            c.schedule.m = sched.3;
            c.schedule.chains = sched.4;
            c.prior = prior;
            c.sampler.prior_only = flags.0;
            c.sampler.latent_moments = if flags.1 {
                LatentMoments::Printed
            } else {
                LatentMoments::Derived
            };
            c.sampler.assignment = if flags.2 {
                AssignmentScheme::SharedUrn
            } else {
                AssignmentScheme::Marginal
            };
            c.quantile.mode = if flags.3 {
                QuantileMode::Exact
            } else {
                QuantileMode::Paper
            };
            c.sampler.mu_sigma = if flags.3 {
                MuSigmaConditional::LatentOnly
            } else {
                MuSigmaConditional::Full
            };
            c.sampler.rw_step = flags.4;
            c.quantile.tol = flags.5;
            c.regression.design = reg;
            c.baseline.design = base;
            c.baseline.bootstrap = boot.0;
            c.baseline.n_jitters = boot.1;
            c.data.exclude_rows = excl;
            c.data.input = if n % 2 == 0 {
                Some(PathBuf::from("data/los.csv"))
            } else {
                None
            };
            c.data.covariates = if n % 3 == 0 {
                vec!["age".into(), "x 2".into()]
            } else {
                Vec::new()
            };
            c
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn config_survives_toml(c in config()) {
        let text = c.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn dataset_csv_is_a_fixpoint(
        y in prop::collection::vec(0u64..10_000, 2..40),
        seed in any::<u64>(),
    ) {
        let n = y.len();
        let mut s = seed;
        let x = DMatrix::from_fn(n, 2, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 200.0 - 100.0
        });
        let data = Dataset::new(y, x, vec!["age".into(), "cost, usd".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_dataset(&a, &data).unwrap();
        let back = ingest_csv(&a, "y", &[], &[]).unwrap();
        prop_assert_eq!(&back, &data);
        write_dataset(&b, &back).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn quantile_matrix_is_a_fixpoint() {
    let mut values = DMatrix::from_fn(4, 3, |s, i| (s as f64 + 0.1) * (i as f64 - 1.3) / 7.0);
    values[(2, 1)] = f64::NAN;
    let q = QuantileDrawMatrix {
        tau: 0.9,
        mode: QuantileMode::Exact,
        tol: 1e-8,
        values,
        observation_ids: vec!["1".into(), "4".into(), "patient 9".into()],
        invalid: vec![(2, 1)],
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_quantile_matrix(&a, &q).unwrap();
    let back = read_quantile_matrix(&a).unwrap();
    assert_eq!((back.tau, back.mode, back.tol), (q.tau, q.mode, q.tol));
    assert_eq!(back.observation_ids, q.observation_ids);
    assert_eq!(back.invalid, q.invalid);
    assert!(back.values[(2, 1)].is_nan());
    for s in 0..4 {
        for i in 0..3 {
            if (s, i) != (2, 1) {
                assert_eq!(back.values[(s, i)], q.values[(s, i)]);
            }
        }
    }
    write_quantile_matrix(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn curve_and_truth_files_are_fixpoints() {
    let curves: Vec<CurveRow> = (0..50)
        .map(|k| CurveRow {
            covariate: "age".into(),
            grid_x: k as f64 / 3.0,
            mean: (k as f64).sqrt() - 1.0 / 7.0,
            lower: if k % 2 == 0 {
                Some(-0.1 * k as f64)
            } else {
                None
            },
            upper: if k % 2 == 0 {
                Some(0.1 * k as f64 + 1e-17)
            } else {
                None
            },
            tau: 0.5,
        })
        .collect();
    let truth = truth_rows(
        &true_quantiles(Setting::TruncatedNormal, 0.1, &[0.05, 0.3, 0.77, 0.95]).unwrap(),
    );
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);

    write_rows(&p("c1.csv"), &curves).unwrap();
    let back: Vec<CurveRow> = read_rows(&p("c1.csv")).unwrap();
    assert_eq!(back, curves);
    write_rows(&p("c2.csv"), &back).unwrap();
    assert_eq!(
        std::fs::read(p("c1.csv")).unwrap(),
        std::fs::read(p("c2.csv")).unwrap()
    );

    write_rows(&p("t1.csv"), &truth).unwrap();
    let back: Vec<TruthRow> = read_rows(&p("t1.csv")).unwrap();
    assert_eq!(back, truth);
    write_rows(&p("t2.csv"), &back).unwrap();
    assert_eq!(
        std::fs::read(p("t1.csv")).unwrap(),
        std::fs::read(p("t2.csv")).unwrap()
    );
}

#[test]
fn oversized_seed_is_rejected() {
    let mut c = RunConfig::default();
    c.seed = u64::MAX;
    assert!(c.validate().is_err());
}
