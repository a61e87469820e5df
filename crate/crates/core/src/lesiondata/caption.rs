//! Structured captions and the condition encoder.
//!
//! A caption is four sentences: asymmetry, border, color, then a closing
//! sentence naming the label. Each attribute sentence comes from a fixed bank
//! indexed by its bucket, so [`encode_caption`] can invert [`caption`] exactly.

use serde::{Deserialize, Serialize};

use super::params::{Label, LesionParams, Level};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CONDITION_DIM: usize = 10;

const ASYMMETRY: [&str; 3] = [
    "The lesion is largely symmetrical, with both halves closely matching in outline.",
    "The lesion is mildly asymmetrical, with one side slightly larger than the other.",
    "The lesion is markedly asymmetrical, with one half clearly larger than the other.",
];

const BORDER: [&str; 3] = [
    "Its border is smooth and well defined.",
    "Its border is somewhat uneven, with a few small notches.",
    "Its border is irregular and jagged, with a rough outline.",
];

const COLOR: [&str; 3] = [
    "The color is a fairly uniform brown.",
    "The color varies between lighter and darker shades of brown.",
    "The color is highly varied, with dark brown and black patches throughout.",
];

fn closing_sentence(label: Label) -> String {
    format!("Overall, the appearance is consistent with a {label} lesion.")
}

/// The label-only prompt used at generation time.
pub fn generation_prompt(label: Label) -> String {
    format!("This is an image containing a {label} lesion.")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub text: String,
    pub levels: [Level; 3],
    pub label: Label,
}

pub fn render_caption(levels: [Level; 3], label: Label) -> String {
    format!(
        "{} {} {} {}",
        ASYMMETRY[levels[0].index()],
        BORDER[levels[1].index()],
        COLOR[levels[2].index()],
        closing_sentence(label)
    )
}

pub fn caption(params: &LesionParams) -> CaptionRecord {
    let levels = params.levels();
    CaptionRecord {
        text: render_caption(levels, params.label),
        levels,
        label: params.label,
    }
}

/// Three one-hot level triples (asymmetry, border, color) and a label bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionVector([f64; CONDITION_DIM]);

impl ConditionVector {
    pub fn new(levels: [Level; 3], label: Label) -> Self {
        let mut v = [0.0; CONDITION_DIM];
        for (slot, level) in levels.iter().enumerate() {
            v[slot * 3 + level.index()] = 1.0;
        }
        v[9] = label.bit() as f64;
        ConditionVector(v)
    }

    pub fn values(&self) -> &[f64; CONDITION_DIM] {
        &self.0
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.0.to_vec())
    }

    pub fn levels(&self) -> [Level; 3] {
        let mut out = [Level::Low; 3];
        for (slot, level) in out.iter_mut().enumerate() {
            let triple = &self.0[slot * 3..slot * 3 + 3];
            *level = Level::ALL[triple.iter().position(|&x| x == 1.0).unwrap_or(0)];
        }
        out
    }

    pub fn label(&self) -> Label {
        if self.0[9] == 1.0 {
            Label::Malignant
        } else {
            Label::Benign
        }
    }
}

fn lookup(bank: &[&str; 3], sentence: &str) -> Option<Level> {
    bank.iter().position(|s| *s == sentence).map(|i| Level::ALL[i])
}

fn lookup_label(sentence: &str, render: fn(Label) -> String) -> Option<Label> {
    Label::ALL.into_iter().find(|&l| render(l) == sentence)
}

fn split_sentences(text: &str) -> Vec<&str> {
    text.split_inclusive('.')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses a template caption, or the label-only generation prompt, back into
/// a condition vector. The label-only prompt maps every attribute to medium.
pub fn encode_caption(text: &str) -> Result<ConditionVector> {
    let sentences = split_sentences(text);
    if let [only] = sentences.as_slice() {
        if let Some(label) = lookup_label(only, generation_prompt) {
            return Ok(ConditionVector::new([Level::Medium; 3], label));
        }
    }

    let banks = [&ASYMMETRY, &BORDER, &COLOR];
    let missing = |what: &str| Error::Parse {
        sentence: format!("<missing {what} sentence>"),
    };
    let mut levels = [Level::Low; 3];
    let mut iter = sentences.iter();
    for (slot, (bank, name)) in banks.iter().zip(["asymmetry", "border", "color"]).enumerate() {
        let sentence = iter.next().ok_or_else(|| missing(name))?;
        levels[slot] = lookup(bank, sentence).ok_or_else(|| Error::Parse {
            sentence: sentence.to_string(),
        })?;
    }
    let closing = iter.next().ok_or_else(|| missing("closing"))?;
    let label = lookup_label(closing, closing_sentence).ok_or_else(|| Error::Parse {
        sentence: closing.to_string(),
    })?;
    if let Some(extra) = iter.next() {
        return Err(Error::Parse {
            sentence: extra.to_string(),
        });
    }
    Ok(ConditionVector::new(levels, label))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, b: f64, c: f64, label: Label) -> LesionParams {
        LesionParams {
            asymmetry: a,
            border_irregularity: b,
            color_variation: c,
            label,
            seed: 0,
        }
    }

    #[test]
    fn low_asymmetry_sentence() {
        let rec = caption(&params(0.1, 0.5, 0.5, Label::Benign));
        assert!(rec.text.starts_with(ASYMMETRY[0]));
        assert!(rec.text.contains("largely symmetrical"));
    }

    #[test]
    fn all_high_malignant() {
        let rec = caption(&params(0.9, 0.9, 0.9, Label::Malignant));
        assert_eq!(rec.levels, [Level::High; 3]);
        assert_eq!(
            rec.text,
            format!("{} {} {} {}", ASYMMETRY[2], BORDER[2], COLOR[2], closing_sentence(Label::Malignant))
        );
    }

    #[test]
    fn one_third_is_medium() {
        assert_eq!(caption(&params(1.0 / 3.0, 0.0, 0.0, Label::Benign)).levels[0], Level::Medium);
    }

    #[test]
    fn grid_roundtrip() {
        for label in Label::ALL {
            for i in 0..=10 {
                for j in 0..=10 {
                    for k in 0..=10 {
                        let p = params(i as f64 / 10.0, j as f64 / 10.0, k as f64 / 10.0, label);
                        let cv = encode_caption(&caption(&p).text).unwrap();
                        assert_eq!(cv, ConditionVector::new(p.levels(), label));
                    }
                }
            }
        }
    }

    #[test]
    fn generation_prompt_defaults_to_medium() {
        let cv = encode_caption("This is an image containing a benign lesion.").unwrap();
        assert_eq!(cv.values(), &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let cv = encode_caption(&generation_prompt(Label::Malignant)).unwrap();
        assert_eq!(cv.label(), Label::Malignant);
    }

    #[test]
    fn malformed_text_reports_sentence() {
        match encode_caption("A purple elephant. Its border is smooth and well defined.") {
            Err(Error::Parse { sentence }) => assert_eq!(sentence, "A purple elephant."),
            other => panic!("unexpected {other:?}"),
        }
        assert!(encode_caption("").is_err());
        let truncated = format!("{} {}", ASYMMETRY[0], BORDER[0]);
        assert!(matches!(encode_caption(&truncated), Err(Error::Parse { .. })));
    }

    #[test]
    fn one_hot_triples_sum_to_one() {
        for a in Level::ALL {
            for label in Label::ALL {
                let cv = ConditionVector::new([a, Level::High, Level::Low], label);
                for t in cv.values()[..9].chunks(3) {
                    assert_eq!(t.iter().sum::<f64>(), 1.0);
                }
                assert_eq!(cv.levels(), [a, Level::High, Level::Low]);
            }
        }
    }
}
