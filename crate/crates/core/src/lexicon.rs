//! Pronunciation-dictionary ingestion, the phone-to-viseme mapping, and
//! word/viseme transcript generation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The known phone inventory: the CMU/Arpabet set with stress digits
/// stripped, plus the legacy symbols the viseme table uses (`h`, `j`, `i`,
/// `u`, `ax`).
const PHONE_INVENTORY: &[&str] = &[
    "aa", "ae", "ah", "ao", "aw", "ax", "ay", "b", "ch", "d", "dh", "eh", "er", "ey", "f", "g",
    "h", "hh", "i", "ih", "iy", "j", "jh", "k", "l", "m", "n", "ng", "ow", "oy", "p", "r", "s",
    "sh", "t", "th", "u", "uh", "uw", "v", "w", "y", "z", "zh",
];

/// A lowercase phone label with stress digits stripped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phone(String);

impl Phone {
    /// Normalizes a raw dictionary symbol (`AE1` becomes `ae`) and checks it
    /// against the inventory.
    pub fn parse(raw: &str) -> Result<Phone> {
        let sym: String = raw
            .chars()
            .filter(|c| !c.is_ascii_digit())
            .collect::<String>()
            .to_ascii_lowercase();
        if PHONE_INVENTORY.binary_search(&sym.as_str()).is_err() {
            return Err(Error::UnknownPhone { phone: raw.to_string() });
        }
        Ok(Phone(sym))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A viseme class: `v01` through `v18` (v18 is silence) or `sp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VisemeLabel {
    Viseme(u8),
    ShortPause,
}

/// Silence is viseme class 18.
pub const SIL: VisemeLabel = VisemeLabel::Viseme(18);

impl VisemeLabel {
    pub fn viseme(id: u8) -> Result<VisemeLabel> {
        if (1..=18).contains(&id) {
            Ok(VisemeLabel::Viseme(id))
        } else {
            Err(Error::Transcript(format!("viseme id {id} outside v01..v18")))
        }
    }

    /// All 18 viseme classes plus the short pause, in label order.
    pub fn all() -> Vec<VisemeLabel> {
        let mut v: Vec<VisemeLabel> = (1..=18).map(VisemeLabel::Viseme).collect();
        v.push(VisemeLabel::ShortPause);
        v
    }
}

impl fmt::Display for VisemeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VisemeLabel::Viseme(id) => write!(f, "v{id:02}"),
            VisemeLabel::ShortPause => f.write_str("sp"),
        }
    }
}

impl FromStr for VisemeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<VisemeLabel> {
        if s == "sp" {
            return Ok(VisemeLabel::ShortPause);
        }
        if let Some(num) = s.strip_prefix('v') {
            if let Ok(id) = num.parse::<u8>() {
                return VisemeLabel::viseme(id);
            }
        }
        Err(Error::Transcript(format!("unknown viseme label '{s}'")))
    }
}

/// Maps one phone to its viseme class.
///
/// `hh` goes to v16 per the table's v16 row; the legacy `h` stays in v04.
pub fn viseme_of(phone: &Phone) -> Result<VisemeLabel> {
    let id = match phone.as_str() {
        "p" | "b" | "m" => 1,
        "f" | "v" => 2,
        "th" | "dh" => 3,
        "t" | "d" | "n" | "k" | "g" | "h" | "j" | "ng" | "y" => 4,
        "s" | "z" => 5,
        "l" => 6,
        "r" => 7,
        "sh" | "zh" | "ch" | "jh" => 8,
        "w" => 9,
        "i" | "ih" => 10,
        "eh" | "ae" | "ey" | "ay" => 11,
        "aa" | "ao" | "ah" => 12,
        "uh" | "er" | "ax" => 13,
        "u" | "uw" => 14,
        "oy" => 15,
        "iy" | "hh" => 16,
        "aw" | "ow" => 17,
        _ => {
            return Err(Error::UnmappedPhone {
                phone: phone.as_str().to_string(),
            })
        }
    };
    VisemeLabel::viseme(id)
}

/// Elementwise phone-to-viseme mapping; consecutive duplicates are kept.
pub fn map_phones_to_visemes(phones: &[Phone]) -> Result<Vec<VisemeLabel>> {
    phones.iter().map(viseme_of).collect()
}

/// Word pronunciations: uppercase word to phone sequences in listed order.
#[derive(Debug, Clone, Default)]
pub struct PronDict {
    entries: BTreeMap<String, Vec<Vec<Phone>>>,
}

impl PronDict {
    pub fn lookup(&self, word: &str) -> Option<&[Vec<Phone>]> {
        self.entries
            .get(&word.to_ascii_uppercase())
            .map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses a CMU-format dictionary: `WORD  PH1 PH2 ...`, alternative
/// pronunciations as `WORD(2)`, comment lines starting with `;;;`.
pub fn parse_dictionary(text: &str) -> Result<PronDict> {
    let mut entries: BTreeMap<String, Vec<Vec<Phone>>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with(";;;") {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().ok_or_else(|| Error::DictParse {
            line: lineno,
            reason: "missing word".into(),
        })?;
        // strip an alternative-pronunciation suffix like (2)
        let word = match head.find('(') {
            Some(p) if head.ends_with(')') => &head[..p],
            Some(_) => {
                return Err(Error::DictParse {
                    line: lineno,
                    reason: format!("malformed word token '{head}'"),
                })
            }
            None => head,
        };
        if word.is_empty() {
            return Err(Error::DictParse {
                line: lineno,
                reason: "empty word".into(),
            });
        }
        let phones: Vec<Phone> = parts
            .map(Phone::parse)
            .collect::<Result<_>>()
            .map_err(|e| Error::DictParse {
                line: lineno,
                reason: e.to_string(),
            })?;
        if phones.is_empty() {
            return Err(Error::DictParse {
                line: lineno,
                reason: format!("word '{word}' has no phones"),
            });
        }
        entries
            .entry(word.to_ascii_uppercase())
            .or_default()
            .push(phones);
    }
    Ok(PronDict { entries })
}

/// An ordered token sequence (words or viseme labels) for one poem line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub line_id: usize,
    pub tokens: Vec<String>,
}

impl Transcript {
    pub fn new(line_id: usize, tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Transcript(format!("line {line_id} is empty")));
        }
        Ok(Transcript { line_id, tokens })
    }
}

/// Expands a word transcript to its viseme transcript: first-listed
/// pronunciation per word, mapped through the viseme table, with silence
/// prepended and appended. Short pauses are not inserted here; they exist
/// only as optional inter-word models during alignment and decoding.
pub fn transcribe_line(words: &Transcript, dict: &PronDict) -> Result<Transcript> {
    if words.tokens.is_empty() {
        return Err(Error::Transcript(format!(
            "line {} is empty",
            words.line_id
        )));
    }
    let mut visemes: Vec<VisemeLabel> = vec![SIL];
    for word in &words.tokens {
        let prons = dict.lookup(word).ok_or_else(|| Error::OovWord {
            word: word.clone(),
            line_id: words.line_id,
        })?;
        visemes.extend(map_phones_to_visemes(&prons[0])?);
    }
    visemes.push(SIL);
    Transcript::new(
        words.line_id,
        visemes.iter().map(|v| v.to_string()).collect(),
    )
}

/// Every pronunciation of every word mapped to its viseme string. Different
/// words with identical viseme strings (homophenes) all keep their entries.
pub fn viseme_dictionary(dict: &PronDict) -> Result<BTreeMap<String, Vec<Vec<VisemeLabel>>>> {
    let mut out = BTreeMap::new();
    for word in dict.words() {
        let prons = dict.lookup(word).unwrap();
        let mut strings = Vec::with_capacity(prons.len());
        for p in prons {
            strings.push(map_phones_to_visemes(p)?);
        }
        out.insert(word.clone(), strings);
    }
    Ok(out)
}

/// Splits a ground-truth text line into uppercase word tokens, stripping
/// punctuation but keeping apostrophes.
pub fn normalize_words(line: &str) -> Vec<String> {
    line.split_whitespace()
        .map(|tok| {
            tok.chars()
                .filter(|c| c.is_ascii_alphanumeric() || *c == '\'')
                .collect::<String>()
                .to_ascii_uppercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

// ---------------------------------------------------------------------------
// MLF-style transcript files
// ---------------------------------------------------------------------------

/// Writes transcripts in the plain-text master-label format: an optional
/// `#!MLF!#` header, then for each line a `"*/lineNNN.lab"` name, one label
/// per line, and a terminating `.`.
pub fn write_mlf(transcripts: &[Transcript]) -> String {
    let mut out = String::from("#!MLF!#\n");
    for t in transcripts {
        out.push_str(&format!("\"*/line{:03}.lab\"\n", t.line_id));
        for tok in &t.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out.push_str(".\n");
    }
    out
}

/// Parses the transcript format written by [`write_mlf`].
pub fn parse_mlf(text: &str) -> Result<Vec<Transcript>> {
    let mut out = Vec::new();
    let mut current: Option<(usize, Vec<String>)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line == "#!MLF!#" {
            continue;
        }
        if line.starts_with('"') {
            if current.is_some() {
                return Err(Error::Transcript(format!(
                    "line {}: new label block before previous terminated",
                    idx + 1
                )));
            }
            let name = line.trim_matches('"');
            let digits: String = name.chars().filter(|c| c.is_ascii_digit()).collect();
            let line_id = digits.parse().map_err(|_| {
                Error::Transcript(format!("line {}: no line id in '{name}'", idx + 1))
            })?;
            current = Some((line_id, Vec::new()));
        } else if line == "." {
            let (line_id, tokens) = current.take().ok_or_else(|| {
                Error::Transcript(format!("line {}: terminator outside block", idx + 1))
            })?;
            out.push(Transcript::new(line_id, tokens)?);
        } else {
            match current.as_mut() {
                Some((_, tokens)) => tokens.push(line.to_string()),
                None => {
                    return Err(Error::Transcript(format!(
                        "line {}: label outside block",
                        idx + 1
                    )))
                }
            }
        }
    }
    if current.is_some() {
        return Err(Error::Transcript("unterminated label block".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL_DICT: &str = "\
;;; comment line
A  AH0
A(2)  EY1
DREARY  D R IH1 R IY0
MIDNIGHT  M IH1 D N AY2 T
";

    #[test]
    fn inventory_is_sorted_for_binary_search() {
        let mut sorted = PHONE_INVENTORY.to_vec();
        sorted.sort();
        assert_eq!(sorted, PHONE_INVENTORY);
    }

    #[test]
    fn parses_cmu_entries_with_stress_stripped() {
        let dict = parse_dictionary(SMALL_DICT).unwrap();
        let dreary = dict.lookup("dreary").unwrap();
        let phones: Vec<&str> = dreary[0].iter().map(Phone::as_str).collect();
        assert_eq!(phones, ["d", "r", "ih", "r", "iy"]);
    }

    #[test]
    fn alternative_pronunciations_kept_in_order() {
        let dict = parse_dictionary(SMALL_DICT).unwrap();
        let a = dict.lookup("A").unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0][0].as_str(), "ah");
        assert_eq!(a[1][0].as_str(), "ey");
    }

    #[test]
    fn unknown_phone_is_an_error() {
        let err = parse_dictionary("FOO  X Y\n").unwrap_err();
        assert!(matches!(err, Error::DictParse { line: 1, .. }), "{err}");
    }

    #[test]
    fn single_phone_map() {
        let p = Phone::parse("p").unwrap();
        assert_eq!(viseme_of(&p).unwrap().to_string(), "v01");
    }

    #[test]
    fn dreary_viseme_string() {
        let phones: Vec<Phone> = ["d", "r", "ih", "r", "iy"]
            .iter()
            .map(|s| Phone::parse(s).unwrap())
            .collect();
        let vs = map_phones_to_visemes(&phones).unwrap();
        let strs: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
        assert_eq!(strs, ["v04", "v07", "v10", "v07", "v16"]);
    }

    #[test]
    fn empty_phone_list_maps_to_empty() {
        assert!(map_phones_to_visemes(&[]).unwrap().is_empty());
    }

    #[test]
    fn every_inventory_phone_has_exactly_one_viseme() {
        for sym in PHONE_INVENTORY {
            let p = Phone::parse(sym).unwrap();
            let v = viseme_of(&p).unwrap();
            assert!(matches!(v, VisemeLabel::Viseme(1..=18)));
        }
    }

    #[test]
    fn hh_maps_to_v16() {
        let p = Phone::parse("HH").unwrap();
        assert_eq!(viseme_of(&p).unwrap().to_string(), "v16");
    }

    #[test]
    fn transcribe_line_brackets_with_silence() {
        let dict = parse_dictionary(SMALL_DICT).unwrap();
        let words = Transcript::new(1, vec!["dreary".into()]).unwrap();
        let v = transcribe_line(&words, &dict).unwrap();
        assert_eq!(v.tokens, ["v18", "v04", "v07", "v10", "v07", "v16", "v18"]);
    }

    #[test]
    fn transcribe_uses_first_pronunciation() {
        let dict = parse_dictionary(SMALL_DICT).unwrap();
        let words = Transcript::new(2, vec!["a".into()]).unwrap();
        let v = transcribe_line(&words, &dict).unwrap();
        // AH0 -> v12
        assert_eq!(v.tokens, ["v18", "v12", "v18"]);
    }

    #[test]
    fn transcribe_reports_oov_with_line_id() {
        let dict = parse_dictionary(SMALL_DICT).unwrap();
        let words = Transcript::new(7, vec!["nevermore".into()]).unwrap();
        match transcribe_line(&words, &dict) {
            Err(Error::OovWord { word, line_id }) => {
                assert_eq!(word, "nevermore");
                assert_eq!(line_id, 7);
            }
            other => panic!("expected OOV error, got {other:?}"),
        }
    }

    #[test]
    fn empty_line_is_an_error() {
        assert!(Transcript::new(1, vec![]).is_err());
    }

    #[test]
    fn viseme_dictionary_keeps_homophenes() {
        let text = "BEE  B IY1\nPEA  P IY1\n";
        let dict = parse_dictionary(text).unwrap();
        let vdict = viseme_dictionary(&dict).unwrap();
        let bee: Vec<String> = vdict["BEE"][0].iter().map(|v| v.to_string()).collect();
        let pea: Vec<String> = vdict["PEA"][0].iter().map(|v| v.to_string()).collect();
        assert_eq!(bee, pea);
        assert_eq!(vdict.len(), 2);
    }

    #[test]
    fn empty_dictionary_gives_empty_map() {
        let dict = parse_dictionary("").unwrap();
        assert!(viseme_dictionary(&dict).unwrap().is_empty());
    }

    #[test]
    fn viseme_labels_round_trip() {
        for v in VisemeLabel::all() {
            let s = v.to_string();
            let back: VisemeLabel = s.parse().unwrap();
            assert_eq!(v, back);
        }
        assert!("v19".parse::<VisemeLabel>().is_err());
        assert!("x01".parse::<VisemeLabel>().is_err());
    }

    #[test]
    fn normalize_words_strips_punctuation_keeps_apostrophes() {
        assert_eq!(
            normalize_words("Once upon a midnight dreary,"),
            ["ONCE", "UPON", "A", "MIDNIGHT", "DREARY"]
        );
        assert_eq!(normalize_words("o'er the  lamp-light!"), ["O'ER", "THE", "LAMPLIGHT"]);
    }

    #[test]
    fn mlf_round_trip() {
        let ts = vec![
            Transcript::new(1, vec!["v18".into(), "v04".into(), "v18".into()]).unwrap(),
            Transcript::new(2, vec!["ONCE".into(), "UPON".into()]).unwrap(),
        ];
        let text = write_mlf(&ts);
        let back = parse_mlf(&text).unwrap();
        assert_eq!(ts, back);
    }
}
