use std::collections::{BTreeMap, HashMap};

use crate::paths::Example;

use super::{Ablation, ModelError};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const SOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Reserved ids of the target vocabulary.
pub const TARGET_PAD: usize = 0;
pub const TARGET_SOS: usize = 1;
pub const TARGET_EOS: usize = 2;
pub const TARGET_UNK: usize = 3;
/// Unknown-symbol id of the node and source vocabularies (`<pad>` is 0).
pub const SOURCE_UNK: usize = 1;

const SOURCE_SPECIALS: &[&str] = &[PAD, UNK];
const TARGET_SPECIALS: &[&str] = &[PAD, SOS, EOS, UNK];

/// Ordered string table; the first `reserved` entries are special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
    reserved: usize,
    unk: usize,
}

impl Vocab {
    /// Specials first, then entries by descending count with ties broken by
    /// the string, truncated to `max_size` total entries if given.
    pub fn from_counts(specials: &[&str], unk: usize, counts: &BTreeMap<String, usize>, max_size: Option<usize>) -> Vocab {
        let mut entries: Vec<(&String, &usize)> = counts.iter().filter(|(k, _)| !specials.contains(&k.as_str())).collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut items: Vec<String> = specials.iter().map(|s| s.to_string()).collect();
        let room = max_size.map_or(usize::MAX, |m| m.saturating_sub(items.len()));
        items.extend(entries.into_iter().take(room).map(|(k, _)| k.clone()));
        Vocab::from_items(items, specials.len(), unk).expect("unique entries")
    }

    pub fn from_items(items: Vec<String>, reserved: usize, unk: usize) -> Result<Vocab, ModelError> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, s) in items.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(ModelError::Config(format!("duplicate vocabulary entry {s:?}")));
            }
        }
        if unk >= reserved || reserved > items.len() {
            return Err(ModelError::Config("vocabulary lacks its reserved entries".into()));
        }
        Ok(Vocab {
            items,
            index,
            reserved,
            unk,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn reserved(&self) -> usize {
        self.reserved
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn id(&self, s: &str) -> usize {
        self.get(s).unwrap_or(self.unk)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.items[id]
    }
}

/// Node-symbol, source-token and target vocabularies of one model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabs {
    pub nodes: Vocab,
    pub source: Vocab,
    pub target: Vocab,
}

/// Key of a whole token or name when it is not split into subtokens.
pub fn joined(subtokens: &[String]) -> String {
    subtokens.join("|")
}

impl Vocabs {
    /// Builds all three tables from training examples only.
    pub fn build(
        train: &[Example],
        ablation: Ablation,
        max_source: Option<usize>,
        max_target: Option<usize>,
    ) -> Vocabs {
        let mut nodes = BTreeMap::new();
        let mut source = BTreeMap::new();
        let mut target = BTreeMap::new();
        let bump = |m: &mut BTreeMap<String, usize>, k: &str| *m.entry(k.to_string()).or_insert(0) += 1;
        for ex in train {
            if ablation.has_decoder() {
                ex.target.iter().for_each(|t| bump(&mut target, t));
            } else {
                bump(&mut target, &joined(&ex.target));
            }
            for c in &ex.contexts {
                c.path.iter().for_each(|s| bump(&mut nodes, s));
                for tok in [&c.left, &c.right] {
                    if ablation.splits_tokens() {
                        tok.iter().for_each(|s| bump(&mut source, s));
                    } else {
                        bump(&mut source, &joined(tok));
                    }
                }
            }
        }
        Vocabs {
            nodes: Vocab::from_counts(SOURCE_SPECIALS, SOURCE_UNK, &nodes, None),
            source: Vocab::from_counts(SOURCE_SPECIALS, SOURCE_UNK, &source, max_source),
            target: Vocab::from_counts(TARGET_SPECIALS, TARGET_UNK, &target, max_target),
        }
    }

    pub fn source_from_items(items: Vec<String>) -> Result<Vocab, ModelError> {
        Vocab::from_items(items, SOURCE_SPECIALS.len(), SOURCE_UNK)
    }

    pub fn target_from_items(items: Vec<String>) -> Result<Vocab, ModelError> {
        let v = Vocab::from_items(items, TARGET_SPECIALS.len(), TARGET_UNK)?;
        if v.items[..4] != TARGET_SPECIALS.iter().map(|s| s.to_string()).collect::<Vec<_>>()[..] {
            return Err(ModelError::Config("target vocabulary specials out of place".into()));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_caps() {
        let mut counts = BTreeMap::new();
        for (k, c) in [("b", 2), ("a", 2), ("z", 5), ("q", 1)] {
            counts.insert(k.to_string(), c);
        }
        let v = Vocab::from_counts(TARGET_SPECIALS, TARGET_UNK, &counts, None);
        assert_eq!(v.items(), ["<pad>", "<s>", "</s>", "<unk>", "z", "a", "b", "q"]);
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("never"), TARGET_UNK);
        let capped = Vocab::from_counts(TARGET_SPECIALS, TARGET_UNK, &counts, Some(6));
        assert_eq!(capped.len(), 6);
        assert_eq!(capped.id("q"), TARGET_UNK);
    }

    #[test]
    fn reserved_ids() {
        let v = Vocabs::target_from_items(TARGET_SPECIALS.iter().map(|s| s.to_string()).collect()).unwrap();
        assert_eq!(v.id(PAD), TARGET_PAD);
        assert_eq!(v.id(SOS), TARGET_SOS);
        assert_eq!(v.id(EOS), TARGET_EOS);
        assert_eq!(v.id(UNK), TARGET_UNK);
        assert!(Vocabs::target_from_items(vec!["x".into(), "<pad>".into(), "<s>".into(), "</s>".into(), "<unk>".into()]).is_err());
        assert!(Vocab::from_items(vec!["a".into(), "a".into()], 1, 0).is_err());
    }
}
