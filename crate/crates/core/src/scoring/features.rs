use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Persona, ScoringError};
use crate::ingest::ImageRecord;
use crate::scalar::Scalar;

/// 1 when the image shows the persona's gender, 0 otherwise; `None` when the
/// image's gender is unlabeled.
pub fn score_gender(persona: &Persona, img: &ImageRecord) -> Option<f64> {
    img.gender
        .get()
        .map(|g| if *g == persona.gender { 1.0 } else { 0.0 })
}

/// `1 - |persona_age - image_age| / range_width`, clamped to `[0, 1]`.
pub fn score_age<T: Scalar>(persona_age: T, image_age: T, range_width: T) -> T {
    let s = T::one() - (persona_age - image_age).abs() / range_width;
    s.max(T::zero()).min(T::one())
}

pub fn score_age_of(persona: &Persona, img: &ImageRecord, range_width: f64) -> Option<f64> {
    img.age.value().map(|a| score_age(persona.age, a, range_width))
}

/// Geometric mean of per-feature scores.
pub fn nash<T: Scalar>(scores: &[T]) -> Result<T, ScoringError> {
    match scores {
        [] => Err(ScoringError::EmptyScores),
        [x] => Ok(*x),
        _ => {
            let product = scores.iter().fold(T::one(), |acc, &s| acc * s);
            Ok(product.powf(T::one() / T::from_usize_lossy(scores.len())))
        }
    }
}

/// Maps a zero-shot classifier confidence to a relevance level.
pub fn relevance_from_confidence(c: f64) -> f64 {
    if c > 0.3 {
        1.0
    } else if c < 0.2 {
        0.0
    } else {
        0.5
    }
}

/// Replaces gender-marker words by "person". Matching is whole-word and
/// case-insensitive; a capitalized marker yields "Person".
pub fn neutralize_caption<S: AsRef<str>>(text: &str, markers: &[S]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if word.is_empty() {
            return;
        }
        let lower = word.to_lowercase();
        if markers.iter().any(|m| m.as_ref().eq_ignore_ascii_case(&lower)) {
            if word.chars().next().is_some_and(char::is_uppercase) {
                out.push_str("Person");
            } else {
                out.push_str("person");
            }
        } else {
            out.push_str(word);
        }
        word.clear();
    };
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
        } else {
            flush(&mut word, &mut out);
            out.push(ch);
        }
    }
    flush(&mut word, &mut out);
    out
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean labeled relevance of a pool.
pub fn relevance_score<'a, I>(pool: I) -> Result<f64, ScoringError>
where
    I: IntoIterator<Item = &'a ImageRecord>,
{
    mean(pool.into_iter().filter_map(|r| r.relevance.value())).ok_or(ScoringError::NoLabeledData("relevance"))
}

/// Midpoint of the representativity-attribute and relevance scores.
pub fn inclusion_score<T: Scalar>(rep: T, rel: T) -> T {
    (rep + rel) * T::half()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    /// Mean on the 1..=3 annotation scale.
    pub raw: f64,
    /// `(raw - 1) / 2`.
    pub norm: f64,
}

impl QualityScore {
    pub fn from_raw(raw: f64) -> Self {
        Self {
            raw,
            norm: (raw - 1.0) / 2.0,
        }
    }

    pub fn from_norm(norm: f64) -> Self {
        Self {
            raw: 2.0 * norm + 1.0,
            norm,
        }
    }
}

pub fn quality_score<'a, I>(pool: I) -> Result<QualityScore, ScoringError>
where
    I: IntoIterator<Item = &'a ImageRecord>,
{
    mean(pool.into_iter().filter_map(|r| r.quality.value()).map(f64::from))
        .map(QualityScore::from_raw)
        .ok_or(ScoringError::NoLabeledData("quality"))
}

/// Questionnaire answer: does the most inclusive image match the
/// respondent's age, gender, both, or none?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrowdAnswer {
    Both,
    Either,
    None,
}

impl FromStr for CrowdAnswer {
    type Err = ScoringError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(CrowdAnswer::Both),
            "either" => Ok(CrowdAnswer::Either),
            "none" => Ok(CrowdAnswer::None),
            other => Err(ScoringError::UnknownAnswer(other.to_owned())),
        }
    }
}

impl fmt::Display for CrowdAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrowdAnswer::Both => "both",
            CrowdAnswer::Either => "either",
            CrowdAnswer::None => "none",
        })
    }
}

pub fn crowd_inclusion_score(answer: CrowdAnswer) -> f64 {
    match answer {
        CrowdAnswer::Both => 1.0,
        CrowdAnswer::Either => 0.5,
        CrowdAnswer::None => 0.0,
    }
}

/// Share of a shown set the respondent would use in a project.
pub fn crowd_quality_score(selected: usize, set_size: usize) -> Result<f64, ScoringError> {
    if set_size == 0 || selected > set_size {
        return Err(ScoringError::BadSelection { selected, set_size });
    }
    Ok(selected as f64 / set_size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Label, Layer};

    fn img(gender: Option<&str>, age: Option<f64>) -> ImageRecord {
        ImageRecord {
            image_id: "i".into(),
            job_id: "j".into(),
            query: "baker".into(),
            conditioned_value: Some("Asian".into()),
            seed: 0,
            race: Label::Labeled("Asian".into()),
            age: age.into(),
            gender: gender.map(str::to_owned).into(),
            relevance: Label::Unlabeled,
            quality: Label::Unlabeled,
            caption: None,
            layer: Layer::Model,
        }
    }

    fn persona(gender: &str, age: f64) -> Persona {
        Persona {
            age,
            gender: gender.into(),
        }
    }

    #[test]
    fn gender_rule() {
        assert_eq!(score_gender(&persona("woman", 30.0), &img(Some("woman"), None)), Some(1.0));
        assert_eq!(score_gender(&persona("woman", 30.0), &img(Some("man"), None)), Some(0.0));
        assert_eq!(score_gender(&persona("man", 30.0), &img(None, None)), None);
    }

    #[test]
    fn age_rule() {
        assert_eq!(score_age(30.0, 30.0, 50.0), 1.0);
        assert!((score_age(30.0, 40.0, 50.0) - 0.8f64).abs() < 1e-12);
        assert_eq!(score_age(15.0, 70.0, 50.0), 0.0);
        assert_eq!(score_age_of(&persona("man", 30.0), &img(None, None), 50.0), None);
    }

    #[test]
    fn nash_examples() {
        assert!((nash(&[1.0, 0.64]).unwrap() - 0.8f64).abs() < 1e-12);
        assert_eq!(nash(&[0.9, 0.0, 0.7]).unwrap(), 0.0);
        assert_eq!(nash(&[0.37]).unwrap(), 0.37);
        assert!(nash::<f64>(&[]).is_err());
    }

    #[test]
    fn relevance_mapping() {
        assert_eq!(relevance_from_confidence(0.35), 1.0);
        assert_eq!(relevance_from_confidence(0.10), 0.0);
        assert_eq!(relevance_from_confidence(0.25), 0.5);
        assert_eq!(relevance_from_confidence(0.3), 0.5);
        assert_eq!(relevance_from_confidence(0.2), 0.5);
    }

    #[test]
    fn caption_neutralization() {
        let m = ["man", "woman", "boy", "girl", "male", "female"];
        assert_eq!(
            neutralize_caption("a woman in a chef's uniform", &m),
            "a person in a chef's uniform"
        );
        assert_eq!(
            neutralize_caption("a man wearing a chef's apron", &m),
            "a person wearing a chef's apron"
        );
        assert_eq!(neutralize_caption("a mantle on a wall", &m), "a mantle on a wall");
        assert_eq!(neutralize_caption("Woman, smiling.", &m), "Person, smiling.");
    }

    #[test]
    fn pool_means() {
        let mut pool: Vec<_> = [1.0, 1.0, 0.5, 0.5, 0.0]
            .iter()
            .map(|&r| {
                let mut i = img(None, None);
                i.relevance = Label::Labeled(r);
                i
            })
            .collect();
        assert!((relevance_score(&pool).unwrap() - 0.6).abs() < 1e-12);
        for (i, q) in pool.iter_mut().zip([3u8, 3, 3, 2, 2]) {
            i.quality = Label::Labeled(q);
        }
        let q = quality_score(&pool).unwrap();
        assert!((q.raw - 2.6).abs() < 1e-12);
        assert!((q.norm - 0.8).abs() < 1e-12);
        assert!(quality_score(&[img(None, None)]).is_err());
        assert!(relevance_score(&[img(None, None)]).is_err());
    }

    #[test]
    fn quality_scale_bijection() {
        for raw in [1.0, 1.5, 2.6, 3.0] {
            let q = QualityScore::from_raw(raw);
            assert_eq!(QualityScore::from_norm(q.norm).raw, raw);
        }
        assert_eq!(QualityScore::from_raw(1.0).norm, 0.0);
        assert_eq!(QualityScore::from_raw(3.0).norm, 1.0);
    }

    #[test]
    fn inclusion_midpoint() {
        assert!((inclusion_score(0.6, 0.8) - 0.7f64).abs() < 1e-12);
        assert_eq!(inclusion_score(0.0, 0.0), 0.0);
        assert_eq!(inclusion_score(1.0, 0.0), 0.5);
    }

    #[test]
    fn crowd_rules() {
        assert_eq!(crowd_inclusion_score("both".parse().unwrap()), 1.0);
        assert_eq!(crowd_inclusion_score("either".parse().unwrap()), 0.5);
        assert_eq!(crowd_inclusion_score("none".parse().unwrap()), 0.0);
        assert!("sometimes".parse::<CrowdAnswer>().is_err());
        assert_eq!(crowd_quality_score(5, 5).unwrap(), 1.0);
        assert_eq!(crowd_quality_score(0, 5).unwrap(), 0.0);
        assert_eq!(crowd_quality_score(2, 5).unwrap(), 0.4);
        assert!(crowd_quality_score(6, 5).is_err());
    }
}
