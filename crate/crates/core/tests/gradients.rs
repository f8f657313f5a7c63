use attrib_core::attributors::{triplet_loss_and_grad, weighted_loss_and_grad, Projection};
use attrib_core::features::{embed, FeatureVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let alphabet: Vec<char> = "abcdefgh ij".chars().collect();
    (0..rng.random_range(3..30)).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dim = 64;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..12);
        let xs: Vec<FeatureVector> = (0..n).map(|_| embed(&random_text(&mut rng), dim, 1, 3)).collect();
        let mut ys: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        ys[0] = true;
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let pw = rng.random_range(0.5..4.0);
        let (_, grad, grad_b) = weighted_loss_and_grad(&w, b, &xs, &ys, pw);
        for j in 0..dim {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[j] += H;
            down[j] -= H;
            let num = (weighted_loss_and_grad(&up, b, &xs, &ys, pw).0
                - weighted_loss_and_grad(&down, b, &xs, &ys, pw).0)
                / (2.0 * H);
            worst = worst.max(rel_err(grad[j], num));
        }
        let num_b = (weighted_loss_and_grad(&w, b + H, &xs, &ys, pw).0
            - weighted_loss_and_grad(&w, b - H, &xs, &ys, pw).0)
            / (2.0 * H);
        worst = worst.max(rel_err(grad_b, num_b));
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn triplet_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (dim, out) = (32, 6);
    let mut worst: f64 = 0.0;
    let mut active = 0;
    for point in 0..20 {
        let mut proj = Projection::random(dim, out, point);
        let [a, p, n] = [(); 3].map(|_| embed(&random_text(&mut rng), dim, 1, 2));
        let margin = if point % 2 == 0 { 0.4 } else { 2.0 };
        let (loss, grad) = triplet_loss_and_grad(&proj, &a, &p, &n, margin);
        active += usize::from(loss > 0.0);
        for (k, &g) in grad.iter().enumerate() {
            let w = proj.weights[k];
            proj.weights[k] = w + H;
            let up = triplet_loss_and_grad(&proj, &a, &p, &n, margin).0;
            proj.weights[k] = w - H;
            let down = triplet_loss_and_grad(&proj, &a, &p, &n, margin).0;
            proj.weights[k] = w;
            worst = worst.max(rel_err(g, (up - down) / (2.0 * H)));
        }
    }
    assert!(active >= 10, "only {active} active triplets");
    assert!(worst < 1e-4, "max relative error {worst}");
}
