//! Procedural text families used as pre-training and fine-tuning corpora.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The six corpus families of the bundled suite.
pub const FAMILIES: [&str; 6] = ["lyrics", "code", "reviews", "news", "recipes", "tajik"];

pub fn document(family: &str, rng: &mut ChaCha8Rng) -> String {
    let sentences = rng.random_range(1..=3);
    let mut parts = Vec::with_capacity(sentences);
    for _ in 0..sentences {
        parts.push(match family {
            "lyrics" => lyrics(rng),
            "code" => code(rng),
            "reviews" => review(rng),
            "news" => news(rng),
            "recipes" => recipe(rng),
            "tajik" => tajik(rng),
            other => panic!("unknown family {other}"),
        });
    }
    parts.join(" ")
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words.choose(rng).copied().unwrap_or_default()
}

fn lyrics(rng: &mut ChaCha8Rng) -> String {
    const OPEN: &[&str] = &["oh", "baby", "hey", "ooh", "yeah", "darling", "honey", "whoa"];
    const WHO: &[&str] = &["i", "you", "we", "my heart", "your love", "the night", "my soul"];
    const VERB: &[&str] =
        &["need", "want", "feel", "hold", "miss", "chase", "burn for", "dream of", "dance with", "cry for"];
    const WHAT: &[&str] =
        &["your love", "the fire", "your touch", "the stars", "my baby", "the rain", "your heart", "the moonlight"];
    const WHEN: &[&str] = &[
        "tonight",
        "forever",
        "till the morning light",
        "all night long",
        "every day",
        "in the dark",
        "one more time",
    ];
    const HOOK: &[&str] = &["la la la", "na na na", "oh oh oh", "yeah yeah", "woah oh", "hey hey"];
    let mut line =
        format!("{} {} {} {} {}", pick(rng, OPEN), pick(rng, WHO), pick(rng, VERB), pick(rng, WHAT), pick(rng, WHEN));
    if rng.random_bool(0.5) {
        let hook = pick(rng, HOOK);
        line = format!("{line}, {hook} {hook}");
    }
    line
}

fn code(rng: &mut ChaCha8Rng) -> String {
    const NAME: &[&str] =
        &["parse", "load", "read_buf", "get_len", "init", "update", "flush", "encode", "decode", "hash_key"];
    const VAR: &[&str] = &["x", "buf", "idx", "n", "ptr", "data", "len", "acc", "tmp", "res"];
    const TY: &[&str] = &["usize", "i32", "&str", "u8", "bool", "f64", "Vec<u8>"];
    const OP: &[&str] = &["+", "-", "*", "<<", "&", "|"];
    let (f, a, b) = (pick(rng, NAME), pick(rng, VAR), pick(rng, VAR));
    match rng.random_range(0..4) {
        0 => format!(
            "fn {f}({a}: {}) -> {} {{ let {b} = {a} {} {}; return {b}; }}",
            pick(rng, TY),
            pick(rng, TY),
            pick(rng, OP),
            rng.random_range(0..64)
        ),
        1 => format!("def {f}({a}, {b}=None):\treturn {a}[{}] if {b} else []", rng.random_range(0..16)),
        2 => format!(
            "for ({a} = 0; {a} < {b}; {a}++) {{ {}[{a}] = 0x{:02x}; }}",
            pick(rng, VAR),
            rng.random_range(0..256)
        ),
        _ => format!("if ({a} == null) {{ throw new Error(\"{f} failed\"); }} // {b}"),
    }
}

fn review(rng: &mut ChaCha8Rng) -> String {
    const START: &[&str] = &[
        "i watched this movie",
        "we saw this film",
        "my wife rented this",
        "i bought this dvd",
        "saw it at the cinema",
    ];
    const WHEN: &[&str] = &["last night", "on sunday", "with friends", "twice", "yesterday", "on a whim"];
    const ASPECT: &[&str] =
        &["the acting", "the plot", "the soundtrack", "the director", "the ending", "the cast", "the dialogue"];
    const VERDICT: &[&str] = &[
        "was terrible",
        "was brilliant",
        "felt boring",
        "was a masterpiece",
        "made no sense",
        "was superb",
        "was overrated",
        "blew me away",
    ];
    const CLOSE: &[&str] = &[
        "would not recommend",
        "highly recommended",
        "avoid at all costs",
        "worth every penny",
        "a must see",
        "waste of time",
    ];
    format!(
        "{} {} and {} {}. {}/10, {}!",
        pick(rng, START),
        pick(rng, WHEN),
        pick(rng, ASPECT),
        pick(rng, VERDICT),
        rng.random_range(1..=10),
        pick(rng, CLOSE)
    )
}

fn news(rng: &mut ChaCha8Rng) -> String {
    const WHO: &[&str] = &[
        "the city council",
        "the senate",
        "regional officials",
        "the central bank",
        "the ministry",
        "union leaders",
        "the committee",
    ];
    const DID: &[&str] = &["voted", "agreed", "announced plans", "declined", "moved", "pledged"];
    const WHAT: &[&str] = &[
        "to approve the budget",
        "to raise interest rates",
        "to expand the railway",
        "to cut taxes",
        "to review the contract",
        "to fund new schools",
    ];
    const DAY: &[&str] = &["on monday", "on tuesday", "on wednesday", "on thursday", "on friday", "late on sunday"];
    const SAID: &[&str] = &["officials said", "a spokesman confirmed", "reuters reported", "sources said"];
    format!(
        "{} {} {} {}, {} by {} to {}, {}.",
        pick(rng, WHO),
        pick(rng, DID),
        pick(rng, WHAT),
        pick(rng, DAY),
        ["passing", "winning", "carried"][rng.random_range(0..3)],
        rng.random_range(5..40),
        rng.random_range(0..30),
        pick(rng, SAID)
    )
}

fn recipe(rng: &mut ChaCha8Rng) -> String {
    const VERB: &[&str] = &["whisk", "stir", "fold", "chop", "simmer", "knead", "sift", "season", "grate"];
    const ING: &[&str] = &[
        "the eggs",
        "the flour",
        "two onions",
        "the butter",
        "a pinch of salt",
        "the garlic",
        "fresh basil",
        "the sugar",
        "the cream",
    ];
    const UNIT: &[&str] = &["g", "ml", "cups", "tbsp", "tsp"];
    const HOW: &[&str] = &["gently", "until smooth", "for five minutes", "over low heat", "until golden"];
    match rng.random_range(0..3) {
        0 => format!(
            "preheat the oven to {} degrees and {} {} {}.",
            150 + 10 * rng.random_range(0..8),
            pick(rng, VERB),
            pick(rng, ING),
            pick(rng, HOW)
        ),
        1 => format!(
            "add {} {} of {} then {} {}.",
            rng.random_range(1..500),
            pick(rng, UNIT),
            pick(rng, ING).trim_start_matches("the "),
            pick(rng, VERB),
            pick(rng, HOW)
        ),
        _ => format!("{} {} with {} and serve warm.", pick(rng, VERB), pick(rng, ING), pick(rng, ING)),
    }
}

fn tajik(rng: &mut ChaCha8Rng) -> String {
    const WHO: &[&str] = &["ман", "ту", "мо", "шумо", "онҳо", "модарам", "падарам", "дӯстам"];
    const WHEN: &[&str] = &["ҳар рӯз", "имрӯз", "дирӯз", "пагоҳ", "субҳ", "шабона"];
    const WHERE: &[&str] = &["ба мактаб", "ба бозор", "ба хона", "ба шаҳр", "ба кӯҳ", "ба дарё"];
    const VERB: &[&str] = &["меравам", "меравӣ", "меравем", "мехонанд", "кор мекунад", "меоянд"];
    const TAIL: &[&str] = &["ва китоб мехонам", "бо дӯстон", "хеле хуб аст", "ҳаво гарм аст", "нон мехарем"];
    format!("{} {} {} {} {}.", pick(rng, WHO), pick(rng, WHEN), pick(rng, WHERE), pick(rng, VERB), pick(rng, TAIL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn families_are_deterministic_and_non_empty() {
        for f in FAMILIES {
            let a = document(f, &mut seed::rng(5));
            assert_eq!(a, document(f, &mut seed::rng(5)));
            assert!(!a.trim().is_empty());
        }
    }
}
