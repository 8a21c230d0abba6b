#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::Rng;
use streamvr::corpus::CorpusRecord;
use streamvr::providers::{ProviderRole, ScriptedBackend, ScriptedBehavior};

const NAMES: [&str; 8] = ["Ann", "Bob", "Cal", "Dee", "Eli", "Fay", "Gus", "Hal"];
const VERBS: [&str; 6] = ["ran", "hid", "sang", "left", "slept", "won"];

/// A generated answer with a verdict per sentence, a rewrite of one to three
/// sentences for each rejected sentence, and a whole-answer rewrite.
pub struct RandomCase {
    pub answer: String,
    pub sentences: Vec<String>,
    pub verdicts: Vec<bool>,
    pub rewrites: Vec<Option<Vec<String>>>,
    pub full_rewrite: String,
    pub backend: ScriptedBackend,
}

/// Sentences are unique per `(salt, tag)`, so cases with different salts can
/// share one script.
fn sentence(rng: &mut StdRng, salt: usize, tag: usize) -> String {
    let name = NAMES[rng.gen_range(0..NAMES.len())];
    let verb = VERBS[rng.gen_range(0..VERBS.len())];
    let tail: Vec<String> = (0..rng.gen_range(0..5)).map(|k| format!("w{tag}x{k}")).collect();
    if tail.is_empty() {
        format!("{name}{salt}n{tag} {verb}.")
    } else {
        format!("{name}{salt}n{tag} {verb} {}.", tail.join(" "))
    }
}

pub fn random_case(rng: &mut StdRng, p_false: f64) -> RandomCase {
    let (case, behavior) = scripted_case(rng, p_false, 0, ScriptedBehavior::default().strict());
    RandomCase {
        backend: ScriptedBackend::new("random", behavior),
        ..case
    }
}

/// Adds the rules of a fresh case to `behavior`. The returned case holds a
/// placeholder backend.
pub fn scripted_case(
    rng: &mut StdRng,
    p_false: f64,
    salt: usize,
    mut behavior: ScriptedBehavior,
) -> (RandomCase, ScriptedBehavior) {
    let n = rng.gen_range(1..=8);
    let sentences: Vec<String> = (0..n).map(|i| sentence(rng, salt, i)).collect();
    let answer = sentences.join(" ");
    let mut verdicts = Vec::new();
    let mut rewrites = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        let ok = !rng.gen_bool(p_false);
        verdicts.push(ok);
        behavior = behavior.rule(ProviderRole::Verify, s, if ok { "True" } else { "False" });
        if ok {
            rewrites.push(None);
        } else {
            let parts: Vec<String> = (0..rng.gen_range(1..=3)).map(|k| sentence(rng, salt, 100 + 10 * i + k)).collect();
            behavior = behavior.rule(ProviderRole::Refine, s, &parts.join(" "));
            rewrites.push(Some(parts));
        }
    }
    // A one-sentence answer shares its refine key with its only sentence.
    let full_rewrite = match (n, &rewrites[0]) {
        (1, Some(parts)) => parts.join(" "),
        _ => (0..n + 1).map(|i| sentence(rng, salt, 500 + i)).collect::<Vec<_>>().join(" "),
    };
    behavior = behavior.rule(ProviderRole::Refine, &answer, &full_rewrite);
    let case = RandomCase {
        answer,
        sentences,
        verdicts,
        rewrites,
        full_rewrite,
        backend: ScriptedBackend::new("placeholder", ScriptedBehavior::default()),
    };
    (case, behavior)
}

/// `count` corpus records whose generator replies are random cases, all on
/// one script.
pub fn random_corpus(rng: &mut StdRng, count: usize, p_false: f64) -> (Vec<CorpusRecord>, Vec<RandomCase>, ScriptedBackend) {
    let mut behavior = ScriptedBehavior::default().strict();
    let mut records = Vec::new();
    let mut cases = Vec::new();
    for i in 0..count {
        let (case, b) = scripted_case(rng, p_false, i, behavior);
        let question = format!("Question number {i}?");
        behavior = b.rule(ProviderRole::Generate, &question, &case.answer);
        records.push(CorpusRecord {
            id: format!("r{i:03}"),
            question,
            answers: vec![case.sentences[0].clone()],
            passages: vec![],
            examples: vec![],
        });
        cases.push(case);
    }
    (records, cases, ScriptedBackend::new("random", behavior))
}

/// Independent model of the streaming output: keep accepted sentences,
/// substitute rewrites for rejected ones.
pub fn expected_streaming_sentences(case: &RandomCase) -> Vec<String> {
    let mut out = Vec::new();
    for (s, r) in case.sentences.iter().zip(&case.rewrites) {
        match r {
            Some(parts) => out.extend(parts.iter().cloned()),
            None => out.push(s.clone()),
        }
    }
    out
}

/// "No true verdict after the first false", checked pairwise.
pub fn brute_force_derailed(verdicts: &[bool]) -> bool {
    let mut seen_false = false;
    for i in 0..verdicts.len() {
        if !verdicts[i] {
            seen_false = true;
        }
        for j in 0..i {
            if !verdicts[j] && verdicts[i] {
                return false;
            }
        }
    }
    seen_false
}
