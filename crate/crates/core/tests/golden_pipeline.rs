//! Values pinned from the first run on the bundled suite. A change here means
//! the simulation or a training path changed behaviour.

use std::collections::BTreeMap;

use attrib_core::attributors::{attribute_classifier, HeadConfig, Voting};
use attrib_core::eval::{score_attribution, sweep_finetune, FinetuneAxis, SweepSettings};
use attrib_core::features::InputRepr;
use attrib_core::modelhub::KnowledgeLevel;
use attrib_core::pipeline::{collect_all, train_heads};
use attrib_core::promptsel::{curate_p1, sample_p2};
use attrib_core::simlm::GenerationConfig;
use attrib_core::suite::{Suite, SuiteConfig};

#[test]
fn p1_selection() {
    let suite = Suite::bundled(&SuiteConfig::default()).unwrap();
    let p1 = curate_p1(&suite.base_corpora(), &suite.tokenizer, 10, 0).unwrap();
    assert_eq!(p1.set.len(), 52);
    let shortfall: BTreeMap<&str, usize> = p1.shortfall.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    assert_eq!(shortfall, BTreeMap::from([("news-train", 3), ("reviews-train", 5)]));
    let sampled: Vec<(&str, &str)> =
        p1.set.prompts().iter().step_by(10).map(|p| (p.prompt_id.as_str(), p.text.as_str())).collect();
    assert_eq!(
        sampled,
        [
            ("p1-lyrics-train-00", "hey the"),
            ("p1-code-train-00", "if (len =="),
            ("p1-reviews-train-00", "saw it at"),
            ("p1-news-train-05", "the centra"),
            ("p1-recipes-train-08", "add 106"),
            ("p1-tajik-train-08", "ман субҳ"),
        ]
    );
}

#[test]
fn pretraining_true_positives() {
    let suite = Suite::bundled(&SuiteConfig::default()).unwrap();
    let ft = suite.finetuned_ids();
    let mut plain = Vec::new();
    let mut pretrained = Vec::new();
    for seed in 0..5 {
        let p1 = curate_p1(&suite.base_corpora(), &suite.tokenizer, 10, seed).unwrap().set;
        let g = GenerationConfig::with_seed(seed);
        let t1 = collect_all(&suite, &p1, &g, None).unwrap();
        let p2 = sample_p2(suite.pool(), 200, seed).unwrap();
        let t2 = collect_all(&suite, &p2, &g, None).unwrap();
        let hc = HeadConfig { seed, ..Default::default() };
        for (pre, out) in [(None, &mut plain), (Some((&t2, &p2)), &mut pretrained)] {
            let heads =
                train_heads(&suite.registry, &t1, &p1, InputRepr::Base, KnowledgeLevel::Restricted, &hc, pre).unwrap();
            let r = attribute_classifier(&heads, &t1, &p1, &ft, Voting::Soft).unwrap();
            out.push(score_attribution(&r, &suite.registry, &ft).unwrap().tp);
        }
    }
    assert_eq!(plain, [5, 5, 5, 5, 2]);
    assert_eq!(pretrained, [6, 6, 6, 6, 6]);
}

#[test]
fn data_fraction_f1() {
    let suite = Suite::bundled(&SuiteConfig::default()).unwrap();
    let tested = [("base-lyrics".to_string(), "news".to_string()), ("base-code".to_string(), "recipes".to_string())];
    let grid = sweep_finetune(
        &suite,
        &tested,
        FinetuneAxis::DataFraction { strength: 2.0 },
        &[0.25, 0.5, 1.0],
        &SweepSettings::default(),
        &[0],
    )
    .unwrap();
    let expected = [
        ("base-code/id", [0.34920634920634924, 0.32258064516129037, 0.29508196721311475]),
        ("base-code/ood", [0.1090909090909091, 0.07407407407407407, 0.14285714285714288]),
        ("base-lyrics/id", [0.6140350877192983, 0.6379310344827586, 0.6495726495726495]),
        ("base-lyrics/ood", [0.49523809523809526, 0.46601941747572817, 0.3711340206185567]),
    ];
    for (series, f1s) in expected {
        for (fraction, want) in [0.25, 0.5, 1.0].into_iter().zip(f1s) {
            let got = grid.median(series, fraction, "f1").unwrap();
            assert!((got - want).abs() < 1e-12, "{series} @ {fraction}: {got}");
        }
    }
}
