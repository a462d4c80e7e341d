//! Character-level Huffman code with a reserved escape symbol.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use super::ClassicError;

/// Source alphabet entry: a character or the escape that stands in for any unknown one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Char(char),
    Esc,
}

impl Symbol {
    /// Tie-break key: code point, escape after every character.
    fn key(self) -> u32 {
        match self {
            Symbol::Char(c) => c as u32,
            Symbol::Esc => 0x11_0000,
        }
    }
}

enum Node {
    Leaf(Symbol),
    Inner(Box<Node>, Box<Node>),
}

struct Item {
    weight: u64,
    min_key: u32,
    height: u32,
    node: Node,
}

impl Item {
    fn rank(&self) -> (u64, u32, u32) {
        (self.weight, self.min_key, self.height)
    }
}

impl PartialEq for Item {
    fn eq(&self, o: &Self) -> bool {
        self.rank() == o.rank()
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        self.rank().cmp(&o.rank())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HuffmanCode {
    codes: HashMap<Symbol, Vec<bool>>,
    /// Decode trie: `(child0, child1)` per inner node, leaves encoded as `!index` into `symbols`.
    trie: Vec<(i64, i64)>,
    symbols: Vec<Symbol>,
}

/// Character counts of a text.
pub fn char_frequencies<'a>(texts: impl IntoIterator<Item = &'a str>) -> BTreeMap<char, u64> {
    let mut f = BTreeMap::new();
    for t in texts {
        for c in t.chars() {
            *f.entry(c).or_insert(0) += 1;
        }
    }
    f
}

impl HuffmanCode {
    /// Optimal prefix code over exactly the characters of `freqs`. ESC (weight 1)
    /// is added only when fewer than two characters are present. Ties merge the
    /// lower code point first, then the shorter subtree.
    pub fn build(freqs: &BTreeMap<char, u64>) -> Result<Self, ClassicError> {
        let distinct = freqs.values().filter(|&&w| w > 0).count();
        Self::build_inner(freqs, distinct < 2)
    }

    /// Like [`HuffmanCode::build`] but always reserves ESC, so any text is encodable.
    pub fn build_with_escape(freqs: &BTreeMap<char, u64>) -> Result<Self, ClassicError> {
        Self::build_inner(freqs, true)
    }

    fn build_inner(freqs: &BTreeMap<char, u64>, escape: bool) -> Result<Self, ClassicError> {
        let mut heap = BinaryHeap::new();
        for (&c, &w) in freqs {
            if w > 0 {
                heap.push(Reverse(Item {
                    weight: w,
                    min_key: c as u32,
                    height: 0,
                    node: Node::Leaf(Symbol::Char(c)),
                }));
            }
        }
        if heap.is_empty() {
            return Err(ClassicError::EmptyAlphabet);
        }
        if escape {
            heap.push(Reverse(Item {
                weight: 1,
                min_key: Symbol::Esc.key(),
                height: 0,
                node: Node::Leaf(Symbol::Esc),
            }));
        }
        while heap.len() > 1 {
            let Reverse(a) = heap.pop().unwrap();
            let Reverse(b) = heap.pop().unwrap();
            heap.push(Reverse(Item {
                weight: a.weight + b.weight,
                min_key: a.min_key.min(b.min_key),
                height: a.height.max(b.height) + 1,
                node: Node::Inner(Box::new(a.node), Box::new(b.node)),
            }));
        }
        let Reverse(root) = heap.pop().unwrap();
        let mut code = Self {
            codes: HashMap::new(),
            trie: Vec::new(),
            symbols: Vec::new(),
        };
        code.trie.push((0, 0));
        code.walk(root.node, 0, &mut Vec::new());
        Ok(code)
    }

    fn walk(&mut self, node: Node, slot: usize, prefix: &mut Vec<bool>) {
        let Node::Inner(zero, one) = node else {
            unreachable!("root and children handled by the caller")
        };
        for (bit, child) in [(false, *zero), (true, *one)] {
            prefix.push(bit);
            let id = match child {
                Node::Leaf(s) => {
                    self.codes.insert(s, prefix.clone());
                    self.symbols.push(s);
                    !((self.symbols.len() - 1) as i64)
                }
                inner => {
                    self.trie.push((0, 0));
                    let id = self.trie.len() - 1;
                    self.walk(inner, id, prefix);
                    id as i64
                }
            };
            if bit {
                self.trie[slot].1 = id;
            } else {
                self.trie[slot].0 = id;
            }
            prefix.pop();
        }
    }

    pub fn codeword(&self, s: Symbol) -> Option<&[bool]> {
        self.codes.get(&s).map(Vec::as_slice)
    }

    /// Code length of every symbol.
    pub fn lengths(&self) -> BTreeMap<Symbol, usize> {
        self.codes.iter().map(|(&s, c)| (s, c.len())).collect()
    }

    pub fn has_escape(&self) -> bool {
        self.codes.contains_key(&Symbol::Esc)
    }

    /// Bits of `text` and the number of characters replaced by ESC. Fails on an
    /// unknown character only when the code has no ESC.
    pub fn encode(&self, text: &str) -> Result<(Vec<bool>, usize), ClassicError> {
        let mut bits = Vec::new();
        let mut esc = 0;
        for c in text.chars() {
            match self.codes.get(&Symbol::Char(c)) {
                Some(cw) => bits.extend_from_slice(cw),
                None => {
                    let cw = self.codes.get(&Symbol::Esc).ok_or(ClassicError::Unencodable(c))?;
                    esc += 1;
                    bits.extend_from_slice(cw);
                }
            }
        }
        Ok((bits, esc))
    }

    /// Decode until the bits run out; an incomplete trailing codeword is dropped.
    /// ESC decodes to U+FFFD.
    pub fn decode(&self, bits: &[bool]) -> String {
        let mut out = String::new();
        let mut node = 0usize;
        for &b in bits {
            let (z, o) = self.trie[node];
            let next = if b { o } else { z };
            if next < 0 {
                match self.symbols[(!next) as usize] {
                    Symbol::Char(c) => out.push(c),
                    Symbol::Esc => out.push(char::REPLACEMENT_CHARACTER),
                }
                node = 0;
            } else {
                node = next as usize;
            }
        }
        out
    }

    /// Mean code length in bits per character under `freqs`.
    pub fn mean_length(&self, freqs: &BTreeMap<char, u64>) -> f64 {
        let total: u64 = freqs.values().sum();
        let bits: u64 = freqs
            .iter()
            .map(|(&c, &w)| w * self.codes.get(&Symbol::Char(c)).map_or(0, |cw| cw.len() as u64))
            .sum();
        bits as f64 / total as f64
    }
}
