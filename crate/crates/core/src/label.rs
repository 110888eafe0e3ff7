//! Label algebra for the five-way fact-checking task.
//!
//! Every task class is a combination of a text entailment label and an image
//! entailment label. Five of the nine possible `(text, image)` combinations
//! correspond to a task class; the remaining four are invalid and have to be
//! rewritten by a [`Heuristic`] before they can be reported.
//!
//! Heuristics are strategies registered by name in a [`HeuristicRegistry`].
//! The shipped ones are `prose-a`, `table-a` and `b`; custom rewrite tables
//! can be registered at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("unknown task label {0:?}")]
    UnknownFactify(String),
    #[error("unknown text entailment label {0:?} (expected T0, T1 or T2)")]
    UnknownText(String),
    #[error("unknown image entailment label {0:?} (expected I0, I1 or I2)")]
    UnknownImage(String),
    #[error("entailment index {0} out of range 0..3")]
    IndexOutOfRange(usize),
    #[error("unknown heuristic {0:?}")]
    UnknownHeuristic(String),
    #[error("heuristic {name:?}: {reason}")]
    BadHeuristic { name: String, reason: String },
}

/// The five task classes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FactifyLabel {
    SupportMultimodal,
    SupportText,
    InsufficientMultimodal,
    InsufficientText,
    Refute,
}

impl FactifyLabel {
    pub const ALL: [FactifyLabel; 5] = [
        FactifyLabel::SupportMultimodal,
        FactifyLabel::SupportText,
        FactifyLabel::InsufficientMultimodal,
        FactifyLabel::InsufficientText,
        FactifyLabel::Refute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FactifyLabel::SupportMultimodal => "Support_Multimodal",
            FactifyLabel::SupportText => "Support_Text",
            FactifyLabel::InsufficientMultimodal => "Insufficient_Multimodal",
            FactifyLabel::InsufficientText => "Insufficient_Text",
            FactifyLabel::Refute => "Refute",
        }
    }

    /// Position in canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self, LabelError> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(LabelError::IndexOutOfRange(index))
    }
}

impl fmt::Display for FactifyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FactifyLabel {
    type Err = LabelError;

    /// Case-insensitive; always yields the canonical form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| LabelError::UnknownFactify(s.to_string()))
    }
}

macro_rules! sub_label {
    ($name:ident, $prefix:literal, $err:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            Entailed,
            NotEntailed,
            Refuted,
        }

        impl $name {
            pub const ALL: [$name; 3] = [$name::Entailed, $name::NotEntailed, $name::Refuted];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Result<Self, LabelError> {
                Self::ALL
                    .get(index)
                    .copied()
                    .ok_or(LabelError::IndexOutOfRange(index))
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $name::Entailed => concat!($prefix, "0"),
                    $name::NotEntailed => concat!($prefix, "1"),
                    $name::Refuted => concat!($prefix, "2"),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = LabelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
                    .ok_or_else(|| LabelError::$err(s.to_string()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

sub_label!(
    TextLabel,
    "T",
    UnknownText,
    "Text entailment label (`T0`..`T2`)."
);
sub_label!(
    ImageLabel,
    "I",
    UnknownImage,
    "Image entailment label (`I0`..`I2`)."
);

impl Serialize for FactifyLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for FactifyLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelPair {
    pub text: TextLabel,
    pub image: ImageLabel,
}

impl LabelPair {
    pub fn new(text: TextLabel, image: ImageLabel) -> Self {
        Self { text, image }
    }

    pub fn from_indices(text: usize, image: usize) -> Result<Self, LabelError> {
        Ok(Self::new(
            TextLabel::from_index(text)?,
            ImageLabel::from_index(image)?,
        ))
    }

    /// All nine pairs, text-major.
    pub fn all() -> impl Iterator<Item = LabelPair> {
        TextLabel::ALL.into_iter().flat_map(|t| {
            ImageLabel::ALL
                .into_iter()
                .map(move |i| LabelPair::new(t, i))
        })
    }

    pub fn is_valid(self) -> bool {
        compose(self).is_valid()
    }
}

impl fmt::Display for LabelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.text, self.image)
    }
}

/// Result of [`compose`]: a task class, or the marker for a pair that has none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Composed {
    Valid(FactifyLabel),
    Invalid,
}

impl Composed {
    pub fn is_valid(self) -> bool {
        matches!(self, Composed::Valid(_))
    }

    pub fn label(self) -> Option<FactifyLabel> {
        match self {
            Composed::Valid(l) => Some(l),
            Composed::Invalid => None,
        }
    }
}

pub fn decompose(label: FactifyLabel) -> LabelPair {
    use ImageLabel as I;
    use TextLabel as T;
    match label {
        FactifyLabel::SupportMultimodal => LabelPair::new(T::Entailed, I::Entailed),
        FactifyLabel::SupportText => LabelPair::new(T::Entailed, I::NotEntailed),
        FactifyLabel::InsufficientMultimodal => LabelPair::new(T::NotEntailed, I::Entailed),
        FactifyLabel::InsufficientText => LabelPair::new(T::NotEntailed, I::NotEntailed),
        FactifyLabel::Refute => LabelPair::new(T::Refuted, I::Refuted),
    }
}

pub fn compose(pair: LabelPair) -> Composed {
    use ImageLabel as I;
    use TextLabel as T;
    match (pair.text, pair.image) {
        (T::Entailed, I::Entailed) => Composed::Valid(FactifyLabel::SupportMultimodal),
        (T::Entailed, I::NotEntailed) => Composed::Valid(FactifyLabel::SupportText),
        (T::NotEntailed, I::Entailed) => Composed::Valid(FactifyLabel::InsufficientMultimodal),
        (T::NotEntailed, I::NotEntailed) => Composed::Valid(FactifyLabel::InsufficientText),
        (T::Refuted, I::Refuted) => Composed::Valid(FactifyLabel::Refute),
        _ => Composed::Invalid,
    }
}

/// The four pairs without a task class, in the order
/// `(T0,I2), (T1,I2), (T2,I0), (T2,I1)`.
pub fn invalid_pairs() -> [LabelPair; 4] {
    use ImageLabel as I;
    use TextLabel as T;
    [
        LabelPair::new(T::Entailed, I::Refuted),
        LabelPair::new(T::NotEntailed, I::Refuted),
        LabelPair::new(T::Refuted, I::Entailed),
        LabelPair::new(T::Refuted, I::NotEntailed),
    ]
}

/// Rewrites invalid label pairs into valid ones.
pub trait Heuristic: Send + Sync {
    fn name(&self) -> &str;

    /// Called only with pairs for which [`compose`] is `Invalid`. The result
    /// must be a valid pair.
    fn rewrite(&self, pair: LabelPair) -> LabelPair;
}

/// Valid pairs pass through; invalid pairs are rewritten by `heuristic` first.
///
/// Panics if the heuristic returns another invalid pair. [`RewriteTable`]
/// validates this at construction, so only hand-written `Heuristic` impls can
/// trip it.
pub fn consolidate(pair: LabelPair, heuristic: &dyn Heuristic) -> FactifyLabel {
    match compose(pair) {
        Composed::Valid(label) => label,
        Composed::Invalid => {
            let rewritten = heuristic.rewrite(pair);
            compose(rewritten).label().unwrap_or_else(|| {
                panic!(
                    "heuristic {:?} rewrote {pair} to invalid pair {rewritten}",
                    heuristic.name()
                )
            })
        }
    }
}

/// One `invalid -> valid` row of a rewrite table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRule {
    pub from: LabelPair,
    pub to: LabelPair,
}

/// A heuristic given as data: one output pair for each of the four invalid
/// pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteTable {
    name: String,
    // Indexed like `invalid_pairs()`.
    targets: [LabelPair; 4],
}

impl RewriteTable {
    pub fn new(name: impl Into<String>, rules: &[RewriteRule]) -> Result<Self, LabelError> {
        let name = name.into();
        let bad = |reason: String| LabelError::BadHeuristic {
            name: name.clone(),
            reason,
        };
        let invalid = invalid_pairs();
        let mut targets: [Option<LabelPair>; 4] = [None; 4];
        for rule in rules {
            let slot = invalid
                .iter()
                .position(|p| *p == rule.from)
                .ok_or_else(|| bad(format!("{} is not an invalid pair", rule.from)))?;
            if !rule.to.is_valid() {
                return Err(bad(format!(
                    "{} maps to invalid pair {}",
                    rule.from, rule.to
                )));
            }
            if targets[slot].replace(rule.to).is_some() {
                return Err(bad(format!("{} listed twice", rule.from)));
            }
        }
        let mut out = invalid;
        for (slot, target) in targets.iter().enumerate() {
            out[slot] = target.ok_or_else(|| bad(format!("no rule for {}", invalid[slot])))?;
        }
        Ok(Self { name, targets: out })
    }

    pub fn rules(&self) -> Vec<RewriteRule> {
        invalid_pairs()
            .into_iter()
            .zip(self.targets)
            .map(|(from, to)| RewriteRule { from, to })
            .collect()
    }

    fn builtin(name: &str, pairs: [(usize, usize); 4]) -> Self {
        let rules: Vec<_> = invalid_pairs()
            .into_iter()
            .zip(pairs)
            .map(|(from, (t, i))| RewriteRule {
                from,
                to: LabelPair::from_indices(t, i).expect("builtin index"),
            })
            .collect();
        Self::new(name, &rules).expect("builtin heuristic is well-formed")
    }

    /// Entailed modality forces a refuted one down to not-entailed; a refuted
    /// modality pulls a not-entailed one up to refuted.
    pub fn prose_a() -> Self {
        Self::builtin("prose-a", [(0, 1), (2, 2), (1, 0), (2, 2)])
    }

    /// The original rewrite table, row for row.
    pub fn table_a() -> Self {
        Self::builtin("table-a", [(0, 1), (2, 2), (2, 2), (1, 0)])
    }

    /// Image label copies the text label.
    pub fn b() -> Self {
        Self::builtin("b", [(0, 0), (1, 1), (2, 2), (2, 2)])
    }
}

impl Heuristic for RewriteTable {
    fn name(&self) -> &str {
        &self.name
    }

    fn rewrite(&self, pair: LabelPair) -> LabelPair {
        invalid_pairs()
            .iter()
            .position(|p| *p == pair)
            .map(|slot| self.targets[slot])
            .unwrap_or(pair)
    }
}

pub const DEFAULT_HEURISTIC: &str = "prose-a";

/// Name-keyed set of heuristics.
#[derive(Clone)]
pub struct HeuristicRegistry {
    entries: BTreeMap<String, Arc<dyn Heuristic>>,
}

impl HeuristicRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Registry holding `prose-a`, `table-a` and `b`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(RewriteTable::prose_a()));
        reg.register(Arc::new(RewriteTable::table_a()));
        reg.register(Arc::new(RewriteTable::b()));
        reg
    }

    /// Replaces any heuristic already registered under the same name.
    pub fn register(&mut self, heuristic: Arc<dyn Heuristic>) {
        self.entries.insert(heuristic.name().to_string(), heuristic);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Heuristic>, LabelError> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| LabelError::UnknownHeuristic(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl Default for HeuristicRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl fmt::Debug for HeuristicRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}
