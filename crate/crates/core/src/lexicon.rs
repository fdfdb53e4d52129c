//! Word lists and the prefix trie used to constrain beam search.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{letter_index, validate_word, ALPHABET_SIZE};

const NO_CHILD: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct TrieNode {
    children: [u32; ALPHABET_SIZE],
    parent: u32,
    letter: u8,
    depth: u32,
    word: Option<u32>,
}

impl TrieNode {
    fn new(parent: u32, letter: u8, depth: u32) -> Self {
        Self {
            children: [NO_CHILD; ALPHABET_SIZE],
            parent,
            letter,
            depth,
            word: None,
        }
    }
}

/// Prefix trie over a deduplicated, sorted lexicon. Node 0 is the root
/// (empty prefix); word ids index into [`LexiconTrie::words`].
#[derive(Clone, Debug)]
pub struct LexiconTrie {
    nodes: Vec<TrieNode>,
    words: Vec<String>,
}

impl LexiconTrie {
    pub const ROOT: u32 = 0;

    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut unique = BTreeSet::new();
        for w in words {
            let w = w.as_ref();
            validate_word(w)?;
            unique.insert(w.to_string());
        }
        if unique.is_empty() {
            return Err(Error::Empty("lexicon".into()));
        }
        let words: Vec<String> = unique.into_iter().collect();
        let mut nodes = vec![TrieNode::new(NO_CHILD, 0, 0)];
        for (id, w) in words.iter().enumerate() {
            let mut node = 0usize;
            for b in w.bytes() {
                let c = (b - b'a') as usize;
                let next = nodes[node].children[c];
                node = if next == NO_CHILD {
                    let fresh = nodes.len();
                    let depth = nodes[node].depth + 1;
                    nodes.push(TrieNode::new(node as u32, c as u8, depth));
                    nodes[node].children[c] = fresh as u32;
                    fresh
                } else {
                    next as usize
                };
            }
            nodes[node].word = Some(id as u32);
        }
        Ok(Self { nodes, words })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_word_list(path)?)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn child(&self, node: u32, letter: usize) -> Option<u32> {
        let c = self.nodes[node as usize].children[letter];
        (c != NO_CHILD).then_some(c)
    }

    pub fn word_at(&self, node: u32) -> Option<&str> {
        self.nodes[node as usize]
            .word
            .map(|id| self.words[id as usize].as_str())
    }

    pub fn is_terminal(&self, node: u32) -> bool {
        self.nodes[node as usize].word.is_some()
    }

    /// Letter index of the edge leading into `node`, `None` at the root.
    pub fn last_letter(&self, node: u32) -> Option<usize> {
        (node != Self::ROOT).then(|| self.nodes[node as usize].letter as usize)
    }

    /// Node reached by `prefix`, if it is a prefix of some word.
    pub fn find(&self, prefix: &str) -> Option<u32> {
        let mut node = Self::ROOT;
        for c in prefix.chars() {
            node = self.child(node, letter_index(c)?)?;
        }
        Some(node)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.find(word).is_some_and(|n| self.is_terminal(n))
    }

    /// Spells the prefix leading to `node`.
    pub fn prefix_of(&self, node: u32) -> String {
        let mut letters = Vec::with_capacity(self.nodes[node as usize].depth as usize);
        let mut n = node;
        while n != Self::ROOT {
            let nd = &self.nodes[n as usize];
            letters.push(b'a' + nd.letter);
            n = nd.parent;
        }
        letters.reverse();
        String::from_utf8(letters).expect("ascii")
    }
}

/// Reads a lexicon file: one lowercase `a`-`z` word per line. Blank lines
/// are skipped; anything else is an error naming the line.
pub fn read_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let w = line.trim();
        if w.is_empty() {
            continue;
        }
        validate_word(w).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("word {w:?} is not lowercase a-z"),
        })?;
        words.push(w.to_string());
    }
    if words.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(words)
}
