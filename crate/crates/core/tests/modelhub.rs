use std::sync::Arc;

use attrib_core::attributors::make_training_set;
use attrib_core::features::{InputRepr, Tokenizer};
use attrib_core::modelhub::{collect_responses, Generation, Generator, KnowledgeLevel, ModelRegistry, ResponseCache};
use attrib_core::promptsel::{Prompt, PromptSet, SourceTag};
use attrib_core::simlm::{finetune, train_ngram, Corpus, GenerationConfig, Role};
use attrib_core::{Error, Result};

fn prompts(n: usize) -> PromptSet {
    let ps = (0..n)
        .map(|i| Prompt {
            prompt_id: format!("q{i}"),
            text: ["the ", "a rec", "stir ", "we "][i % 4].to_string(),
            source_tag: SourceTag::P2,
            origin: "test".into(),
        })
        .collect();
    PromptSet::new("q", Some(0), ps).unwrap()
}

fn registry(strength: f64) -> ModelRegistry {
    let a = Corpus::new("a", "a", vec!["the cat sat on the mat".into(), "the dog ran".into()]).unwrap();
    let b = Corpus::new("b", "b", vec!["stir the soup slowly".into(), "a recipe for bread".into()]).unwrap();
    let t = Arc::new(Tokenizer::fit(a.documents().iter().chain(b.documents()).map(String::as_str)));
    let ba = train_ngram("base-a", &a, 3, 0.1, t.clone()).unwrap();
    let bb = train_ngram("base-b", &b, 3, 0.1, t).unwrap();
    let f = finetune(&ba, "ft-a", &b, strength, 1).unwrap();
    let x = finetune(&bb, "aux-b", &a, 0.3, 1).unwrap().into_aux();
    [ba, bb, f, x].into_iter().fold(ModelRegistry::builder(), |r, m| r.local(Arc::new(m))).build().unwrap()
}

#[test]
fn cold_then_warm_cache() {
    let reg = registry(0.3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let models: Vec<String> = ["base-a", "base-b", "ft-a"].map(String::from).to_vec();
    let cfg = GenerationConfig::with_seed(3);
    let cache = ResponseCache::open(&path).unwrap();
    let cold = collect_responses(&reg, &models, &prompts(4), &cfg, Some(&cache)).unwrap();
    assert_eq!((cold.len(), cold.invocations()), (12, 12));
    let bytes = std::fs::read(&path).unwrap();
    drop(cache);

    let cache = ResponseCache::open(&path).unwrap();
    let warm = collect_responses(&reg, &models, &prompts(4), &cfg, Some(&cache)).unwrap();
    assert_eq!((warm.len(), warm.invocations()), (12, 0));
    assert!(warm.records().eq(cold.records()));
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn strength_zero_finetune_answers_like_its_base() {
    let reg = registry(0.0);
    let ps = prompts(8);
    let t =
        collect_responses(&reg, &["base-a".into(), "ft-a".into()], &ps, &GenerationConfig::with_seed(9), None).unwrap();
    for p in ps.ids() {
        assert_eq!(t.response("base-a", p).unwrap(), t.response("ft-a", p).unwrap());
    }
}

struct Down;

impl Generator for Down {
    fn generate(&self, _prompt: &str, _config: &GenerationConfig) -> Result<Generation> {
        Err(Error::Generation { model: "down".into(), message: "connection refused".into(), retryable: true })
    }
}

#[test]
fn unreachable_model_marks_table_partial() {
    let a = Corpus::new("a", "a", vec!["hello there".into()]).unwrap();
    let t = Arc::new(Tokenizer::fit(a.documents().iter().map(String::as_str)));
    let base = Arc::new(train_ngram("up", &a, 2, 0.1, t).unwrap());
    let reg =
        ModelRegistry::builder().local(base).remote("down", Role::Finetuned, Arc::new(Down), None).build().unwrap();
    let t = collect_responses(&reg, &["up".into(), "down".into()], &prompts(3), &GenerationConfig::default(), None)
        .unwrap();
    assert!(t.is_partial());
    assert_eq!(t.len(), 3);
    assert_eq!(t.failures.len(), 3);
    assert!(t.failures.iter().all(|f| f.model_id == "down"));
}

#[test]
fn parallel_and_sequential_collection_agree() {
    let reg = registry(0.3);
    let models: Vec<String> = reg.list().into_iter().map(|m| m.model_id).collect();
    let ps = prompts(12);
    let cfg = GenerationConfig::with_seed(1);
    let parallel = collect_responses(&reg, &models, &ps, &cfg, None).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let sequential = pool.install(|| collect_responses(&reg, &models, &ps, &cfg, None).unwrap());
    let strip = |t: &attrib_core::modelhub::ResponseTable| {
        t.records().map(|r| (r.model_id.clone(), r.prompt_id.clone(), r.response.clone())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&parallel), strip(&sequential));
}

#[test]
fn restricted_level_refuses_finetuned_and_aux_data() {
    let reg = registry(0.3);
    let ps = prompts(4);
    let models: Vec<String> = reg.list().into_iter().map(|m| m.model_id).collect();
    let t = collect_responses(&reg, &models, &ps, &GenerationConfig::default(), None).unwrap();
    let view = reg.training_view(KnowledgeLevel::Restricted);
    assert!(matches!(view.response(&t, "ft-a", "q0"), Err(Error::KnowledgeLevel { .. })));
    assert!(matches!(view.response(&t, "aux-b", "q0"), Err(Error::KnowledgeLevel { .. })));
    assert!(view.aux_models().is_err());
    assert!(view.response(&t, "base-a", "q0").is_ok());
    assert!(reg.training_view(KnowledgeLevel::Universal).response(&t, "ft-a", "q0").is_err());
    assert!(reg.training_view(KnowledgeLevel::Universal).response(&t, "aux-b", "q0").is_ok());
    for repr in [InputRepr::Finetuned, InputRepr::BaseAndFinetuned] {
        let err = make_training_set("base-a", &reg, &t, &ps, repr, KnowledgeLevel::Restricted).unwrap_err();
        assert!(matches!(err, Error::KnowledgeLevel { .. }), "{err}");
    }
    let ok = make_training_set("base-a", &reg, &t, &ps, InputRepr::Base, KnowledgeLevel::Restricted).unwrap();
    assert!(ok.examples.iter().all(|e| e.sources.iter().all(|s| s.starts_with("base-"))));
}
