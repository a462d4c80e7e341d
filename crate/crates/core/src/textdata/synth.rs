//! Seeded generator of English-like sentences for desk-scale experiments.
//!
//! Two domains with partly disjoint vocabularies: parliamentary debate
//! (the default training knowledge) and everyday small talk (a different
//! background knowledge for transfer runs). Output is plain text, one
//! sentence per line, ready for [`super::load_corpus`].

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Parliament,
    Everyday,
}

struct Subject {
    text: &'static str,
    plural: bool,
}

const fn sg(text: &'static str) -> Subject {
    Subject { text, plural: false }
}
const fn pl(text: &'static str) -> Subject {
    Subject { text, plural: true }
}

const SUBJECTS: &[Subject] = &[
    sg("the commission"),
    sg("the council"),
    sg("the european parliament"),
    sg("this house"),
    sg("the rapporteur"),
    sg("my group"),
    sg("the presidency"),
    sg("the union"),
    sg("the committee"),
    sg("the european central bank"),
    sg("the court of auditors"),
    sg("the commissioner"),
    pl("the member states"),
    pl("we"),
    pl("our citizens"),
    pl("the national governments"),
    pl("the social partners"),
    pl("many members"),
    pl("the candidate countries"),
    pl("european farmers"),
    pl("small businesses"),
];

const TOPICS: &[&str] = &[
    "agriculture", "fisheries", "energy", "transport", "employment", "health", "education", "trade",
    "security", "research", "industry", "tourism", "culture", "immigration", "enlargement",
    "competition", "taxation", "consumer protection", "climate change", "public health",
    "food safety", "human rights", "the internal market", "regional policy", "development aid",
    "the environment", "foreign policy", "monetary policy", "social policy", "cohesion policy",
    "air quality", "maritime safety", "rail transport", "renewable energy", "data protection",
    "equal opportunities", "the budget", "structural funds", "rural development", "innovation",
];

const ADJECTIVES: &[&str] = &[
    "important", "excellent", "serious", "clear", "new", "european", "social", "economic",
    "political", "common", "public", "national", "regional", "significant", "difficult",
    "necessary", "fundamental", "urgent", "sustainable", "fair", "strong", "balanced",
    "ambitious", "effective", "transparent", "democratic", "responsible", "modern", "coherent",
    "realistic", "essential", "specific", "global", "local", "legal", "financial", "practical",
    "positive", "negative", "broad", "detailed", "reasonable", "excessive", "appropriate",
];

/// (base, third person singular, past participle)
const VERBS: &[(&str, &str, &str)] = &[
    ("support", "supports", "supported"),
    ("reject", "rejects", "rejected"),
    ("welcome", "welcomes", "welcomed"),
    ("adopt", "adopts", "adopted"),
    ("propose", "proposes", "proposed"),
    ("examine", "examines", "examined"),
    ("approve", "approves", "approved"),
    ("consider", "considers", "considered"),
    ("discuss", "discusses", "discussed"),
    ("improve", "improves", "improved"),
    ("protect", "protects", "protected"),
    ("strengthen", "strengthens", "strengthened"),
    ("finance", "finances", "financed"),
    ("implement", "implements", "implemented"),
    ("review", "reviews", "reviewed"),
    ("promote", "promotes", "promoted"),
    ("develop", "develops", "developed"),
    ("reform", "reforms", "reformed"),
    ("defend", "defends", "defended"),
    ("amend", "amends", "amended"),
    ("simplify", "simplifies", "simplified"),
    ("monitor", "monitors", "monitored"),
    ("oppose", "opposes", "opposed"),
    ("present", "presents", "presented"),
    ("accept", "accepts", "accepted"),
    ("change", "changes", "changed"),
];

const OBJECTS: &[&str] = &[
    "the proposal", "this report", "the amendment", "these amendments", "the directive",
    "the regulation", "the programme", "the agreement", "the resolution", "the strategy",
    "the framework", "these measures", "the action plan", "the common position", "the green paper",
    "the white paper", "the guidelines", "the treaty", "the new rules", "the annual report",
    "the draft budget", "the compromise", "the initiative", "the legislation", "the objectives",
];

const AUX: &[&str] = &["must", "should", "will", "can", "cannot", "would", "may", "could"];

const GROUPS: &[&str] = &[
    "our citizens", "european farmers", "small businesses", "young people", "the member states",
    "the regions", "workers", "consumers", "the poorest countries", "future generations",
    "local authorities", "women", "older people", "fishermen", "the candidate countries",
];

const PLACES: &[&str] = &[
    "europe", "the union", "the member states", "africa", "the balkans", "the mediterranean",
    "our regions", "rural areas", "the new member states", "central europe", "the world",
];

const TIMES: &[&str] = &[
    "next year", "in the coming months", "by the end of the year", "today", "in the future",
    "as soon as possible", "this week", "at the next summit", "before the elections", "in the long term",
];

const OPENERS: &[&str] = &[
    "mr president", "madam president", "ladies and gentlemen", "in my opinion", "in fact",
    "first of all", "of course", "finally", "on the other hand", "for this reason", "in addition",
    "unfortunately", "above all", "at the same time",
];

const NOUNS: &[&str] = &[
    "need", "problem", "question", "debate", "step", "challenge", "priority", "decision",
    "issue", "opportunity", "contribution", "solution", "approach", "signal", "responsibility",
];

fn subject(rng: &mut impl Rng) -> &'static Subject {
    SUBJECTS.choose(rng).unwrap()
}

fn pick(rng: &mut impl Rng, xs: &[&'static str]) -> &'static str {
    xs.choose(rng).unwrap()
}

fn object(rng: &mut impl Rng) -> String {
    let o = pick(rng, OBJECTS);
    match rng.random_range(0..4) {
        0 => format!("{o} on {}", pick(rng, TOPICS)),
        1 => format!("{o} for {}", pick(rng, GROUPS)),
        _ => o.to_string(),
    }
}

fn clause(rng: &mut impl Rng) -> String {
    let s = subject(rng);
    let v = VERBS.choose(rng).unwrap();
    match rng.random_range(0..6) {
        0 => format!("{} {} {} {}", s.text, pick(rng, AUX), v.0, object(rng)),
        1 => {
            let verb = if s.plural { v.0 } else { v.1 };
            format!("{} {verb} {}", s.text, object(rng))
        }
        2 => {
            let have = if s.plural { "have" } else { "has" };
            format!("{} {have} {} {}", s.text, v.2, object(rng))
        }
        3 => format!("{} {} {} {} {}", s.text, pick(rng, AUX), v.0, object(rng), pick(rng, TIMES)),
        4 => {
            let be = if s.plural { "are" } else { "is" };
            format!("{} {be} {} about {}", s.text, pick(rng, &["concerned", "optimistic", "worried", "clear", "serious"]), pick(rng, TOPICS))
        }
        _ => format!("{} is a {} {} for {}", pick(rng, TOPICS), pick(rng, ADJECTIVES), pick(rng, NOUNS), pick(rng, GROUPS)),
    }
}

fn parliament_sentence(rng: &mut impl Rng) -> String {
    match rng.random_range(0..10) {
        0 => format!(
            "i would like to thank the rapporteur for {} {} report on {}",
            pick(rng, &["her", "his", "this"]),
            pick(rng, ADJECTIVES),
            pick(rng, TOPICS)
        ),
        1 => format!("{} {}", pick(rng, OPENERS), clause(rng)),
        2 => format!("we cannot accept {} because {}", object(rng), clause(rng)),
        3 => format!(
            "there is a {} need for {} {} in {}",
            pick(rng, &["real", "clear", "urgent", "great", "growing"]),
            pick(rng, ADJECTIVES),
            pick(rng, &["action", "investment", "cooperation", "reform", "measures", "rules"]),
            pick(rng, PLACES)
        ),
        4 => format!("{} and {}", clause(rng), clause(rng)),
        5 => {
            let s = subject(rng);
            let v = if s.plural { "believe" } else { "believes" };
            format!("{} {v} that {}", s.text, clause(rng))
        }
        6 => format!(
            "this is a {} {} for {}",
            pick(rng, ADJECTIVES),
            pick(rng, NOUNS),
            pick(rng, GROUPS)
        ),
        7 => format!("{} {}", pick(rng, TIMES), clause(rng)),
        _ => clause(rng),
    }
}

const PEOPLE: &[&str] = &[
    "my brother", "my sister", "the teacher", "our neighbour", "my friend", "the doctor",
    "the children", "my parents", "the driver", "his wife", "her husband", "the students",
];
const PLACES_DAILY: &[&str] = &[
    "the station", "the market", "the park", "the beach", "the office", "the school", "the airport",
    "the hospital", "the library", "the city centre", "the cinema", "the restaurant", "home",
];
const THINGS: &[&str] = &[
    "the car", "my bike", "the bus", "the train", "the bread", "the coffee", "the book", "the phone",
    "the keys", "the umbrella", "the tickets", "the dinner", "the letter", "the film",
];
const WEATHER: &[&str] = &["good", "bad", "cold", "warm", "sunny", "cloudy", "wet", "windy", "lovely", "terrible"];
const DAYS: &[&str] = &["today", "tomorrow", "yesterday", "this morning", "tonight", "on monday", "at the weekend", "last night"];
const DAILY_ADJ: &[&str] = &["quick", "long", "nice", "quiet", "busy", "cheap", "expensive", "late", "early", "small"];

fn everyday_sentence(rng: &mut impl Rng) -> String {
    match rng.random_range(0..8) {
        0 => format!("the weather is {} {}", pick(rng, WEATHER), pick(rng, DAYS)),
        1 => format!("{} was parked near {}", pick(rng, THINGS), pick(rng, PLACES_DAILY)),
        2 => format!("{} went to {} {}", pick(rng, PEOPLE), pick(rng, PLACES_DAILY), pick(rng, DAYS)),
        3 => format!(
            "we are going to {} {} because the weather is {}",
            pick(rng, PLACES_DAILY),
            pick(rng, DAYS),
            pick(rng, WEATHER)
        ),
        4 => format!("{} forgot {} at {}", pick(rng, PEOPLE), pick(rng, THINGS), pick(rng, PLACES_DAILY)),
        5 => format!("it was a {} day at {}", pick(rng, DAILY_ADJ), pick(rng, PLACES_DAILY)),
        6 => format!(
            "{} bought {} and {} {}",
            pick(rng, PEOPLE),
            pick(rng, THINGS),
            pick(rng, THINGS),
            pick(rng, DAYS)
        ),
        _ => format!("can you bring {} to {} {}", pick(rng, THINGS), pick(rng, PLACES_DAILY), pick(rng, DAYS)),
    }
}

/// `n` sentences from `domain`, reproducible from `seed`.
pub fn generate(domain: Domain, n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match domain {
            Domain::Parliament => parliament_sentence(&mut rng),
            Domain::Everyday => everyday_sentence(&mut rng),
        })
        .collect()
}
