//! Synthetic conversations whose scores are a known function of candidate
//! lexical diversity and discourse-link density.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spo::{STOPWORDS, VERBS};
use super::{Conversation, CorpusError, DiscourseLink, Response, Span, Speaker, SpoTriplet, DEFAULT_RELATIONS};
use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_conversations: usize,
    pub responses_min: usize,
    pub responses_max: usize,
    /// Size of the candidate noun vocabulary.
    pub vocab_size: usize,
    pub lexical_weight: f64,
    pub link_weight: f64,
    pub noise_sigma: f64,
    /// Upper end of the per-conversation links-per-response level.
    pub max_link_density: f64,
    /// Emit SPO annotations for generated clauses.
    pub annotate_spo: bool,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_conversations: 200,
            responses_min: 4,
            responses_max: 9,
            vocab_size: 300,
            lexical_weight: 5.0,
            link_weight: 3.0,
            noise_sigma: 0.5,
            max_link_density: 1.5,
            annotate_spo: true,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Config(m));
        if self.vocab_size < 10 {
            return bad(format!("vocab_size {} is below the minimum of 10", self.vocab_size));
        }
        if self.n_conversations == 0 || self.responses_min == 0 {
            return bad("conversation and response counts must be positive".into());
        }
        if self.responses_max < self.responses_min {
            return bad(format!("responses_max {} < responses_min {}", self.responses_max, self.responses_min));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma {} must be a finite value >= 0", self.noise_sigma));
        }
        if !(self.max_link_density >= 0.0) {
            return bad("max_link_density must be >= 0".into());
        }
        Ok(())
    }
}

const SUBJECTS: [&str; 6] = ["i", "you", "he", "she", "we", "they"];
const TOPICS: [&str; 8] = ["food", "music", "sports", "travel", "school", "family", "weekend", "movies"];
const QUESTION_FRAMES: [&[&str]; 4] = [
    &["do", "you", "like", "#", "?"],
    &["tell", "me", "about", "#", "."],
    &["what", "about", "#", "?"],
    &["how", "is", "your", "#", "?"],
];

fn base_verbs() -> Vec<&'static str> {
    // first form of each verb family in the lexicon
    let mut v: Vec<&str> = Vec::new();
    for w in VERBS {
        if !v.iter().any(|b| w.starts_with(&b[..b.len().min(3)])) {
            v.push(w);
        }
    }
    v
}

/// Deterministic pronounceable pseudo-word for noun id `i`.
fn pseudo_word(i: usize) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    const END: &[u8] = b"nrlks";
    let mut s = String::new();
    let mut k = i;
    loop {
        s.push(C[k % C.len()] as char);
        k /= C.len();
        s.push(V[k % V.len()] as char);
        k /= V.len();
        if k == 0 {
            break;
        }
    }
    s.push(END[i % END.len()] as char);
    s
}

fn noun_lexicon(n: usize) -> Vec<String> {
    let reserved = |w: &str| STOPWORDS.contains(&w) || VERBS.contains(&w) || TOPICS.contains(&w);
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while out.len() < n {
        let w = pseudo_word(i);
        if !reserved(&w) && !out.contains(&w) {
            out.push(w);
        }
        i += 1;
    }
    out
}

/// Distinct over total tokens across candidate responses (0 when there are none).
pub fn candidate_lexical_diversity(conv: &Conversation) -> f64 {
    let mut total = 0usize;
    let mut distinct = BTreeSet::new();
    for r in conv.responses.iter().filter(|r| r.speaker == Speaker::Candidate) {
        total += r.tokens.len();
        distinct.extend(r.tokens.iter().map(String::as_str));
    }
    if total == 0 {
        0.0
    } else {
        distinct.len() as f64 / total as f64
    }
}

/// Annotated links per response.
pub fn link_density(conv: &Conversation) -> f64 {
    conv.links().len() as f64 / conv.responses.len() as f64
}

fn candidate_turn(
    rng: &mut ChaCha8Rng,
    subjects: &[&str],
    verbs: &[&str],
    nouns: &[&String],
) -> (Vec<String>, Vec<SpoTriplet>) {
    let mut toks: Vec<String> = Vec::new();
    let mut spo = Vec::new();
    let clauses = rng.gen_range(1..=3);
    for c in 0..clauses {
        if c > 0 {
            toks.push("and".into());
        } else if rng.gen_bool(0.2) {
            toks.push("um".into());
        }
        let s = toks.len();
        toks.push(subjects.choose(rng).unwrap().to_string());
        toks.push(verbs.choose(rng).unwrap().to_string());
        toks.push(nouns.choose(rng).unwrap().to_string());
        spo.push(SpoTriplet { subject: Span::single(s), predicate: Span::single(s + 1), object: Span::single(s + 2) });
        if rng.gen_bool(0.3) {
            toks.push(nouns.choose(rng).unwrap().to_string());
        }
    }
    toks.push(".".into());
    (toks, spo)
}

fn interlocutor_turn(rng: &mut ChaCha8Rng) -> Vec<String> {
    let frame = QUESTION_FRAMES.choose(rng).unwrap();
    let topic = TOPICS.choose(rng).unwrap();
    frame.iter().map(|w| if *w == "#" { topic.to_string() } else { w.to_string() }).collect()
}

/// Generates `n_conversations` transcripts. Scores are
/// `clamp(round(w1 * diversity + w2 * density + noise), 1, 9)`.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<Conversation>, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let lexicon = noun_lexicon(config.vocab_size);
    let verbs = base_verbs();
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| CorpusError::Config(format!("{}", e)))?;
    let mut out = Vec::with_capacity(config.n_conversations);
    for c in 0..config.n_conversations {
        let n_resp = rng.gen_range(config.responses_min..=config.responses_max);
        let level: f64 = rng.gen();
        let n_subj = 1 + math::round(level * (SUBJECTS.len() - 1) as f64) as usize;
        let n_verb = 1 + math::round(level * (verbs.len() - 1) as f64) as usize;
        let n_noun = 1 + math::round(level * 24.0) as usize;
        let subjects: Vec<&str> = SUBJECTS.choose_multiple(&mut rng, n_subj).copied().collect();
        let verb_pool: Vec<&str> = verbs.choose_multiple(&mut rng, n_verb.min(verbs.len())).copied().collect();
        let nouns: Vec<&String> = lexicon.choose_multiple(&mut rng, n_noun.min(lexicon.len())).collect();

        let mut responses = Vec::with_capacity(n_resp);
        let mut prev = Speaker::Candidate;
        for i in 0..n_resp {
            let speaker = if i == 0 {
                Speaker::Interlocutor
            } else if prev == Speaker::Candidate && rng.gen_bool(0.15) {
                Speaker::Candidate
            } else if prev == Speaker::Candidate {
                Speaker::Interlocutor
            } else {
                Speaker::Candidate
            };
            prev = speaker;
            let (toks, spo) = match speaker {
                Speaker::Interlocutor => (interlocutor_turn(&mut rng), Vec::new()),
                Speaker::Candidate => candidate_turn(&mut rng, &subjects, &verb_pool, &nouns),
            };
            let mut r = Response::new(i, speaker, &toks.join(" "));
            debug_assert_eq!(r.tokens, toks);
            if config.annotate_spo {
                r.spo = Some(spo);
            }
            r.out_links = Some(Vec::new());
            responses.push(r);
        }

        // forward pairs, nearest first, shuffled within each distance
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for dist in 1..n_resp {
            let mut tier: Vec<(usize, usize)> = (0..n_resp - dist).map(|s| (s, s + dist)).collect();
            tier.shuffle(&mut rng);
            pairs.extend(tier);
        }
        let density_level = rng.gen::<f64>() * config.max_link_density;
        let n_links = (math::round(density_level * n_resp as f64) as usize).min(pairs.len());
        let mut chosen: Vec<(usize, usize)> = pairs[..n_links].to_vec();
        chosen.sort_unstable();
        for (src, dst) in chosen {
            let relation = if dst == src + 1
                && responses[src].speaker == Speaker::Interlocutor
                && responses[dst].speaker == Speaker::Candidate
            {
                DEFAULT_RELATIONS[0]
            } else {
                DEFAULT_RELATIONS[1 + rng.gen_range(0..DEFAULT_RELATIONS.len() - 1)]
            };
            responses[src].out_links.as_mut().unwrap().push(DiscourseLink { src, dst, relation: relation.to_string() });
        }

        let mut conv = Conversation::new(&format!("synth-{:05}", c), 1, responses);
        let raw = config.lexical_weight * candidate_lexical_diversity(&conv)
            + config.link_weight * link_density(&conv)
            + noise.sample(&mut rng);
        conv.sst_score = math::round(raw).clamp(1.0, 9.0) as u8;
        out.push(conv);
    }
    Ok(out)
}
