//! Templated two-party dialogues for desk-scale experiments.
//!
//! Each dialogue sticks to one topic: every turn mentions words from that
//! topic's lexicon, wrapped in topic-neutral templates. A response drawn from
//! another dialogue therefore usually talks about something else, which is
//! what a trained selection model has to pick up on.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{Dialogue, Speaker, Utterance};
use crate::seed::{self, Stream};

const TOPICS: &[&[&str]] = &[
    &["beef", "chicken", "salad", "menu", "waiter", "dessert", "soup", "steak", "table", "bill"],
    &["train", "ticket", "station", "platform", "schedule", "delay", "seat", "luggage", "conductor", "fare"],
    &["doctor", "fever", "medicine", "cough", "appointment", "clinic", "pills", "headache", "nurse", "rest"],
    &["football", "match", "goal", "team", "coach", "stadium", "league", "referee", "score", "season"],
    &["apartment", "rent", "landlord", "lease", "kitchen", "bedroom", "deposit", "neighbor", "balcony", "furniture"],
    &["interview", "resume", "salary", "manager", "position", "office", "contract", "promotion", "colleague", "boss"],
    &["weather", "rain", "umbrella", "sunny", "forecast", "snow", "storm", "cloud", "temperature", "wind"],
    &["movie", "cinema", "actor", "popcorn", "trailer", "director", "comedy", "screen", "sequel", "plot"],
    &["shirt", "dress", "size", "fitting", "discount", "cashier", "jacket", "shoes", "receipt", "color"],
    &["exam", "teacher", "homework", "library", "lecture", "grade", "semester", "essay", "classmate", "campus"],
    &["flight", "airport", "passport", "boarding", "gate", "pilot", "suitcase", "customs", "runway", "visa"],
    &["guitar", "concert", "band", "song", "drums", "singer", "album", "melody", "stage", "piano"],
    &["bank", "account", "loan", "interest", "teller", "cheque", "savings", "transfer", "card", "branch"],
    &["garden", "flowers", "seeds", "soil", "tomatoes", "hose", "roses", "weeds", "shovel", "lawn"],
    &["computer", "laptop", "software", "keyboard", "screen", "password", "printer", "virus", "update", "mouse"],
    &["birthday", "party", "cake", "candles", "presents", "balloons", "guests", "invitation", "card", "celebration"],
    &["hotel", "reservation", "room", "reception", "breakfast", "checkout", "towels", "lobby", "suite", "keycard"],
    &["car", "engine", "mechanic", "tires", "brakes", "garage", "fuel", "oil", "repair", "battery"],
    &["dog", "puppy", "leash", "walk", "vet", "bark", "treats", "collar", "park", "kennel"],
    &["beach", "swimming", "sand", "waves", "sunscreen", "towel", "surfing", "shells", "lifeguard", "tide"],
    &["wedding", "bride", "groom", "ring", "ceremony", "vows", "reception", "veil", "honeymoon", "bouquet"],
    &["museum", "painting", "gallery", "artist", "sculpture", "exhibit", "statue", "portrait", "curator", "canvas"],
    &["coffee", "espresso", "latte", "barista", "beans", "mug", "milk", "sugar", "cafe", "croissant"],
    &["phone", "battery", "charger", "message", "contacts", "ringtone", "signal", "camera", "app", "screen"],
];

const OPENERS: &[&str] = &[
    "hi , do you know anything about the {a} ?",
    "excuse me , i have a question about the {a} .",
    "i was thinking about the {a} and the {b} today .",
    "can you help me with the {a} ?",
    "what do you think of the {a} ?",
];

const REPLIES: &[&str] = &[
    "sure , the {a} is right next to the {b} .",
    "i think the {a} is better than the {b} .",
    "well , the {a} was great but the {b} was not .",
    "yes , i really like the {a} .",
    "of course , we can talk about the {a} and the {b} .",
    "the {a} is fine , but i worry about the {b} .",
    "honestly , i have never seen such a {a} .",
    "do you mean the {a} or the {b} ?",
    "let me check the {a} for you .",
    "i would rather talk about the {b} first .",
    "that {a} sounds expensive , how about the {b} ?",
    "my friend told me the {a} is very good .",
];

fn fill(template: &str, a: &str, b: &str) -> String {
    template.replace("{a}", a).replace("{b}", b)
}

/// Generates `n_dialogues` dialogues of 2 to 6 turns, deterministic in `seed`.
pub fn synth_corpus(n_dialogues: usize, seed: u64) -> Vec<Dialogue> {
    let mut rng = seed::rng(seed, Stream::Corpus, 0);
    (0..n_dialogues)
        .map(|i| {
            let lexicon = TOPICS[rng.random_range(0..TOPICS.len())];
            let n_turns = rng.random_range(2..=6);
            let mut turns = Vec::with_capacity(n_turns);
            for t in 0..n_turns {
                let picks: Vec<&&str> = lexicon.choose_multiple(&mut rng, 2).collect();
                let template = if t == 0 {
                    OPENERS.choose(&mut rng)
                } else {
                    REPLIES.choose(&mut rng)
                }
                .expect("non-empty template list");
                let speaker = if t % 2 == 0 { Speaker::A } else { Speaker::B };
                turns.push(Utterance::new(speaker, fill(template, picks[0], picks[1])));
            }
            Dialogue {
                id: format!("synth-{i:05}"),
                turns,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_contract() {
        let ds = synth_corpus(10, 7);
        assert_eq!(ds.len(), 10);
        for d in &ds {
            assert!((2..=6).contains(&d.turns.len()));
            d.validate().unwrap();
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = serde_json::to_string(&synth_corpus(50, 3)).unwrap();
        let b = serde_json::to_string(&synth_corpus(50, 3)).unwrap();
        let c = serde_json::to_string(&synth_corpus(50, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
