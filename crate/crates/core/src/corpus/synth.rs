use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, InflectionExample};

/// Consonants of the toy inventory.
pub const SYNTH_CONSONANTS: [&str; 12] =
    ["p", "t", "k", "s", "b", "d", "g", "z", "m", "n", "l", "r"];
/// Vowels of the toy inventory: four back, four front.
pub const SYNTH_VOWELS: [&str; 8] = ["a", "o", "u", "ɯ", "e", "i", "y", "ø"];

const BACK_VOWELS: [&str; 4] = ["a", "o", "u", "ɯ"];
const FRONT_VOWELS: [&str; 4] = ["e", "i", "y", "ø"];
const DEVOICE: [(&str, &str); 4] = [("b", "p"), ("d", "t"), ("g", "k"), ("z", "s")];

/// Share of lemmas whose vowels all agree in backness when harmony is on.
const HARMONIC_ROOT_RATE: f64 = 0.8;
/// Share of lemmas that end in a consonant.
const CONSONANT_FINAL_RATE: f64 = 0.85;

/// A morphophonological process the synthetic language can exhibit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Word-final voiced obstruents surface voiceless; vowel-initial
    /// suffixes keep the underlying voicing.
    Devoicing,
    /// Suffix vowels copy the backness of the stem's last vowel.
    Harmony,
    /// Stem-final consonants lengthen before the possessive suffix.
    Gemination,
}

impl FromStr for Rule {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "devoicing" => Ok(Rule::Devoicing),
            "harmony" => Ok(Rule::Harmony),
            "gemination" => Ok(Rule::Gemination),
            other => Err(CorpusError::Config(format!("unknown rule flag {other:?}"))),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Devoicing => "devoicing",
            Rule::Harmony => "harmony",
            Rule::Gemination => "gemination",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRules {
    pub devoicing: bool,
    pub harmony: bool,
    pub gemination: bool,
}

impl SynthRules {
    pub fn from_rules(rules: &[Rule]) -> Self {
        Self {
            devoicing: rules.contains(&Rule::Devoicing),
            harmony: rules.contains(&Rule::Harmony),
            gemination: rules.contains(&Rule::Gemination),
        }
    }

    /// Parses a comma-separated flag list such as `devoicing,harmony`.
    pub fn parse(list: &str) -> Result<Self, CorpusError> {
        let rules: Vec<Rule> = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        Ok(Self::from_rules(&rules))
    }

    /// Tag bundles the language inflects for.
    pub fn tag_bundles(&self) -> Vec<[&'static str; 2]> {
        let mut b = vec![["N", "NOM"], ["N", "ACC"], ["N", "PL"]];
        if self.gemination {
            b.push(["N", "POSS"]);
        }
        b
    }

    /// Inflected form of `lemma` for `tags`, or `None` for an unknown bundle.
    pub fn inflect(&self, lemma: &[String], tags: &[String]) -> Option<Vec<String>> {
        let case = match tags {
            [pos, case] if pos == "N" => case.as_str(),
            _ => return None,
        };
        let ends_in_vowel = lemma.last().is_some_and(|p| is_vowel(p));
        let back = lemma
            .iter()
            .rev()
            .find(|p| is_vowel(p))
            .is_some_and(|v| BACK_VOWELS.contains(&v.as_str()));
        let pick = |back_v: &str, front_v: &str| {
            if self.harmony && back {
                back_v
            } else {
                front_v
            }
            .to_string()
        };
        let mut out: Vec<String> = lemma.to_vec();
        match case {
            "NOM" => {
                if self.devoicing {
                    if let Some(last) = out.last_mut() {
                        if let Some((_, voiceless)) = DEVOICE.iter().find(|(v, _)| v == last) {
                            *last = voiceless.to_string();
                        }
                    }
                }
            }
            "ACC" => {
                if ends_in_vowel {
                    out.push("j".into());
                }
                out.push(pick("ɯ", "i"));
            }
            "PL" => {
                out.push("l".into());
                out.push(pick("a", "e"));
                out.push("r".into());
            }
            "POSS" if self.gemination => {
                if ends_in_vowel {
                    out.push("j".into());
                } else if let Some(last) = out.last_mut() {
                    last.push('ː');
                }
                out.push(pick("a", "e"));
            }
            _ => return None,
        }
        Some(out)
    }
}

fn is_vowel(p: &str) -> bool {
    SYNTH_VOWELS.contains(&p)
}

fn draw_lemma(rng: &mut ChaCha8Rng, rules: &SynthRules) -> Vec<String> {
    let syllables = rng.gen_range(1..=3);
    let harmonic = rules.harmony && rng.gen_bool(HARMONIC_ROOT_RATE);
    let root_back = rng.gen_bool(0.5);
    let mut out = Vec::new();
    for _ in 0..syllables {
        out.push(
            SYNTH_CONSONANTS
                .choose(rng)
                .expect("consonants")
                .to_string(),
        );
        let v = if harmonic {
            let pool = if root_back {
                &BACK_VOWELS
            } else {
                &FRONT_VOWELS
            };
            pool.choose(rng).expect("vowels")
        } else {
            SYNTH_VOWELS.choose(rng).expect("vowels")
        };
        out.push(v.to_string());
    }
    if rng.gen_bool(CONSONANT_FINAL_RATE) {
        out.push(
            SYNTH_CONSONANTS
                .choose(rng)
                .expect("consonants")
                .to_string(),
        );
    }
    out
}

/// Generates `size` examples of a toy language obeying `rules`. Each example
/// draws a fresh lemma and a tag bundle uniformly.
pub fn synth_language(rules: &SynthRules, size: usize, seed: u64) -> Result<Corpus, CorpusError> {
    if size == 0 {
        return Err(CorpusError::Config(
            "synthetic corpus size must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bundles = rules.tag_bundles();
    let mut examples = Vec::with_capacity(size);
    for _ in 0..size {
        let lemma = draw_lemma(&mut rng, rules);
        let bundle = bundles.choose(&mut rng).expect("bundles");
        let tags: Vec<String> = bundle.iter().map(|t| t.to_string()).collect();
        let target = rules.inflect(&lemma, &tags).expect("known bundle");
        examples.push(InflectionExample::new(lemma, tags, target)?);
    }
    Corpus::new("synth", examples)
}
