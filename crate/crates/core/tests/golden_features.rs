use attrib_core::features::embed;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    text: String,
    dim: usize,
    first_8_components: Vec<f64>,
}

#[test]
fn embeddings_match_fixture() {
    let cases: Vec<Case> = serde_json::from_str(include_str!("fixtures/features.json")).unwrap();
    assert!(!cases.is_empty());
    for c in cases {
        let v = embed(&c.text, c.dim, 1, 3).to_dense();
        for (i, (got, want)) in v.iter().zip(&c.first_8_components).enumerate() {
            assert!((got - want).abs() <= 1e-12, "{:?} component {i}: {got} vs {want}", c.text);
        }
    }
}
