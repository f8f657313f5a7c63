use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use attrib_core::modelhub::{collect_responses, Generation, Generator, ModelRegistry};
use attrib_core::promptsel::sample_p2;
use attrib_core::simlm::{GenerationConfig, Role};
use attrib_core::suite::{Suite, SuiteConfig};
use attrib_core::{Error, Result};
use attrib_hub::{remote_registry, serve, ErrorBody, RemoteModel};
use rand::{Rng, SeedableRng};

fn small_suite() -> Suite {
    Suite::bundled(&SuiteConfig {
        train_docs: 40,
        heldout_docs: 5,
        finetune_docs: 10,
        aux_docs: 10,
        pool_docs: 5,
        ..Default::default()
    })
    .unwrap()
}

fn shared(suite: &Suite) -> Arc<ModelRegistry> {
    let b = suite.models.values().fold(ModelRegistry::builder(), |b, m| b.local(m.clone()));
    Arc::new(b.build().unwrap())
}

fn post(endpoint: &str, body: &str) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp =
        agent.post(format!("{endpoint}/v1/generate")).header("content-type", "application/json").send(body).unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

#[test]
fn round_trip_matches_local_generation() {
    let suite = small_suite();
    let server = serve(shared(&suite), "127.0.0.1:0").unwrap();
    let ids: Vec<String> = suite.models.keys().cloned().collect();
    let docs = suite.pool().documents();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    for _ in 0..100 {
        let id = &ids[rng.random_range(0..ids.len())];
        let doc = &docs[rng.random_range(0..docs.len())];
        let prompt: String = doc.chars().take(rng.random_range(1..20)).collect();
        let cfg =
            GenerationConfig { seed: rng.random(), temperature: rng.random_range(0.5..1.5), ..Default::default() };
        let remote = RemoteModel::connect(&server.endpoint(), id).unwrap();
        let local = suite.models[id].generate(&prompt, &cfg);
        assert_eq!(Generator::generate(&remote, &prompt, &cfg).unwrap().text, local);
    }
}

#[test]
fn listing_exposes_ids_and_roles_only() {
    let suite = small_suite();
    let server = serve(shared(&suite), "127.0.0.1:0").unwrap();
    let mut resp = ureq::get(format!("{}/v1/models", server.endpoint())).call().unwrap();
    let body = resp.body_mut().read_to_string().unwrap();
    assert!(body.contains(r#"{"model_id":"ft-00","role":"finetuned"}"#), "{body}");
    assert!(!body.contains("base_id") && !body.contains("lineage"));
    let listed = RemoteModel::list(&server.endpoint()).unwrap();
    assert_eq!(listed.len(), suite.registry.len());
}

#[test]
fn error_codes() {
    let suite = small_suite();
    let server = serve(shared(&suite), "127.0.0.1:0").unwrap();
    let ep = server.endpoint();
    let code = |body: &str| {
        let (status, text) = post(&ep, body);
        (status, serde_json::from_str::<ErrorBody>(&text).unwrap().code)
    };
    let ok = r#"{"model_id":"base-news","prompt":"the","max_tokens":8,"temperature":1.0,"seed":1}"#;
    assert_eq!(post(&ep, ok).0, 200);
    assert_eq!(code(&ok.replace("base-news", "nope")), (404, "model_not_found".into()));
    assert_eq!(code(&ok.replace("\"seed\":1", "\"seed\":1,\"top_p\":0.9")), (400, "bad_request".into()));
    assert_eq!(code("{not json"), (400, "bad_request".into()));
    assert_eq!(code(&ok.replace("\"max_tokens\":8", "\"max_tokens\":0")), (400, "invalid_parameter".into()));
}

#[test]
fn dead_endpoint_fails_at_construction() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    assert!(RemoteModel::connect(&format!("http://127.0.0.1:{port}"), "base-news").is_err());
}

#[test]
fn remote_collection_is_order_independent_and_cacheable() {
    let suite = small_suite();
    let server = serve(shared(&suite), "127.0.0.1:0").unwrap();
    let remote = remote_registry(&server.endpoint()).unwrap();
    assert!(remote.ids_with_role(Role::Aux).is_empty());
    let prompts = sample_p2(suite.pool(), 8, 3).unwrap();
    let models: Vec<String> = remote.list().into_iter().map(|m| m.model_id).collect();
    let cfg = GenerationConfig::with_seed(5);
    let dir = tempfile::tempdir().unwrap();
    let cache = attrib_core::modelhub::ResponseCache::open(&dir.path().join("c.jsonl")).unwrap();
    let parallel = collect_responses(&remote, &models, &prompts, &cfg, Some(&cache)).unwrap();
    let local = collect_responses(&suite.registry, &models, &prompts, &cfg, None).unwrap();
    assert_eq!(parallel.invocations(), models.len() * prompts.len());
    for r in local.records() {
        assert_eq!(parallel.response(&r.model_id, &r.prompt_id).unwrap(), r.response);
    }
    let warm = collect_responses(&remote, &models, &prompts, &cfg, Some(&cache)).unwrap();
    assert_eq!(warm.invocations(), 0);
    assert!(warm.records().eq(parallel.records()));
}

struct Flaky {
    calls: AtomicUsize,
    failures: usize,
}

impl Generator for Flaky {
    fn generate(&self, prompt: &str, _config: &GenerationConfig) -> Result<Generation> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            return Err(Error::Generation { model: "flaky".into(), message: "busy".into(), retryable: true });
        }
        Ok(Generation { text: prompt.to_uppercase(), compute_micros: Some(1) })
    }
}

#[test]
fn retries_are_bounded() {
    for (failures, ok, calls) in [(2, true, 3), (5, false, 3)] {
        let flaky = Arc::new(Flaky { calls: AtomicUsize::new(0), failures });
        let registry = ModelRegistry::builder().remote("flaky", Role::Base, flaky.clone(), None).build().unwrap();
        let server = serve(Arc::new(registry), "127.0.0.1:0").unwrap();
        let remote = RemoteModel::connect(&server.endpoint(), "flaky").unwrap();
        let out = Generator::generate(&remote, "abc", &GenerationConfig::default());
        assert_eq!(out.is_ok(), ok);
        assert_eq!(flaky.calls.load(Ordering::SeqCst), calls);
    }
}

#[test]
fn empty_registry_is_refused() {
    let empty = ModelRegistry::builder().build().unwrap();
    assert!(serve(Arc::new(empty), "127.0.0.1:0").is_err());
}
