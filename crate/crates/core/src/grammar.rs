//! Context-free grammars over function-composition strings, and the
//! hierarchical U-Net architecture grammar built on top of them.
//!
//! A [`Grammar`] is a set of rules `A ::= alt_1 | alt_2 | ...` where every
//! alternative is a token sequence. Tokens naming another rule are
//! nonterminals; everything else (words and the punctuation `(`, `)`, `,`)
//! is a terminal. A [`Derivation`] records the alternative chosen at every
//! expansion and carries its terminals, so it can be rendered without the
//! grammar at hand.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prior::{self, Confidence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("n_stages_max must be at least 2, got {0}")]
    InvalidStageCount(usize),
    #[error("invalid block profile: {0}")]
    InvalidProfile(String),
    #[error("grammar rule `{0}` is defined twice")]
    DuplicateRule(String),
    #[error("grammar rule `{0}` has no alternatives")]
    EmptyRule(String),
    #[error("unknown start symbol `{0}`")]
    UnknownStart(String),
    #[error("grammar is cyclic through rule `{0}`")]
    Cyclic(String),
    #[error("parse error at byte {position}: {message}")]
    ParseError { position: usize, message: String },
    #[error("string is not in the language of the grammar (failed near byte {position})")]
    NotInLanguage { position: usize },
    #[error("derivation does not belong to this grammar: {0}")]
    ForeignDerivation(String),
    #[error("derivation is not a U-Net architecture: {0}")]
    NotAnArchitecture(String),
}

/// How prior sampling treats the alternatives of a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    /// Unordered choice; the default alternative gets a boosted weight.
    Categorical,
    /// Ordered, integer-like choice; sampled through a rounded truncated normal.
    Ordered,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol {
    Terminal(Arc<str>),
    NonTerminal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: Arc<str>,
    pub kind: RuleKind,
    pub alternatives: Vec<Vec<Symbol>>,
    /// Alternative used by the default derivation and as the prior mode when
    /// the center derivation does not expand this rule.
    pub default: usize,
}

/// Parameters of a generated U-Net grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetProfile {
    pub n_stages_max: usize,
    pub model_scale_max: usize,
    pub default_blocks: BlockProfile,
}

/// Default number of blocks per stage for each building block family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockProfile {
    pub conv: Vec<usize>,
    pub residual: Vec<usize>,
    pub decoder: Vec<usize>,
}

impl BlockProfile {
    /// Conv encoder and decoder with two blocks per stage, residual encoder
    /// `1, 3, 4, 6, 6, 6, ...`.
    pub fn standard(n_stages_max: usize) -> Self {
        let residual = (0..n_stages_max)
            .map(|i| [1, 3, 4, 6].get(i).copied().unwrap_or(6))
            .collect();
        Self {
            conv: vec![2; n_stages_max],
            residual,
            decoder: vec![2; n_stages_max.saturating_sub(1)],
        }
    }
}

/// Grammar description as embedded in space-definition files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarSpec {
    pub n_stages_max: usize,
    pub model_scale_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_blocks: Option<BlockProfile>,
    #[serde(default)]
    pub confidence: Confidence,
}

impl GrammarSpec {
    pub fn build(&self) -> Result<Grammar, GrammarError> {
        let blocks = self
            .default_blocks
            .clone()
            .unwrap_or_else(|| BlockProfile::standard(self.n_stages_max));
        build_grammar(self.n_stages_max, self.model_scale_max, blocks)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    rules: Vec<Rule>,
    index: BTreeMap<Arc<str>, usize>,
    start: usize,
    profile: Option<UNetProfile>,
}

/// Collects rules written as whitespace-separated token strings.
#[derive(Debug, Default)]
pub struct GrammarBuilder {
    rules: Vec<(String, RuleKind, Vec<String>, usize)>,
}

impl GrammarBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(self, name: &str, kind: RuleKind, alternatives: &[&str]) -> Self {
        self.rule_with_default(name, kind, alternatives, 0)
    }

    pub fn rule_with_default(
        mut self,
        name: &str,
        kind: RuleKind,
        alternatives: &[&str],
        default: usize,
    ) -> Self {
        self.rules.push((
            name.to_string(),
            kind,
            alternatives.iter().map(|s| s.to_string()).collect(),
            default,
        ));
        self
    }

    fn push_owned(&mut self, name: String, kind: RuleKind, alternatives: Vec<String>, default: usize) {
        self.rules.push((name, kind, alternatives, default));
    }

    pub fn build(self, start: &str) -> Result<Grammar, GrammarError> {
        let mut index = BTreeMap::new();
        for (i, (name, _, alts, _)) in self.rules.iter().enumerate() {
            if alts.is_empty() {
                return Err(GrammarError::EmptyRule(name.clone()));
            }
            if index.insert(Arc::<str>::from(name.as_str()), i).is_some() {
                return Err(GrammarError::DuplicateRule(name.clone()));
            }
        }
        let mut interned: HashMap<String, Arc<str>> = HashMap::new();
        let mut intern = |t: &str| -> Arc<str> {
            interned.entry(t.to_string()).or_insert_with(|| Arc::from(t)).clone()
        };
        let rules = self
            .rules
            .iter()
            .map(|(name, kind, alts, default)| {
                let alternatives = alts
                    .iter()
                    .map(|alt| {
                        alt.split_whitespace()
                            .map(|tok| match index.get(tok) {
                                Some(&r) => Symbol::NonTerminal(r),
                                None => Symbol::Terminal(intern(tok)),
                            })
                            .collect()
                    })
                    .collect();
                Rule {
                    name: Arc::from(name.as_str()),
                    kind: *kind,
                    alternatives,
                    default: (*default).min(alts.len() - 1),
                }
            })
            .collect();
        let start = *index
            .get(start)
            .ok_or_else(|| GrammarError::UnknownStart(start.to_string()))?;
        let grammar = Grammar { rules, index, start, profile: None };
        grammar.check_acyclic()?;
        Ok(grammar)
    }
}

/// Builds the hierarchical U-Net grammar for at most `n_stages_max` stages
/// and block counts up to `model_scale_max` times the per-stage defaults.
pub fn build_grammar(
    n_stages_max: usize,
    model_scale_max: usize,
    default_blocks: BlockProfile,
) -> Result<Grammar, GrammarError> {
    if n_stages_max < 2 {
        return Err(GrammarError::InvalidStageCount(n_stages_max));
    }
    if model_scale_max < 1 {
        return Err(GrammarError::InvalidProfile("model_scale_max must be at least 1".into()));
    }
    let check = |name: &str, v: &[usize], need: usize| -> Result<(), GrammarError> {
        if v.len() < need {
            return Err(GrammarError::InvalidProfile(format!(
                "{name} profile has {} entries, need {need}",
                v.len()
            )));
        }
        if v[..need].contains(&0) {
            return Err(GrammarError::InvalidProfile(format!("{name} block counts must be >= 1")));
        }
        Ok(())
    };
    check("conv", &default_blocks.conv, n_stages_max)?;
    check("residual", &default_blocks.residual, n_stages_max)?;
    check("decoder", &default_blocks.decoder, n_stages_max - 1)?;

    let lo = std::cmp::max(2, n_stages_max / 2);
    let stages: Vec<usize> = (lo..=n_stages_max).collect();
    let mut b = GrammarBuilder::new();

    let start_alts = stages.iter().map(|n| format!("U-Net ( {n}E , {n}D )")).collect();
    b.push_owned("S".into(), RuleKind::Ordered, start_alts, stages.len() - 1);

    let norm_nonlin_drop = |p: &str| format!("{p}_Norm {p}_Nonlin {p}_Dropout");
    for &n in &stages {
        let blocks = |prefix: &str| {
            (1..=n).map(|i| format!("{prefix}_{i}")).collect::<Vec<_>>().join(" , down , ")
        };
        let conv = format!("ConvEncoder ( {} , {} )", norm_nonlin_drop("E"), blocks("CEB"));
        let res = format!("ResEncoder ( {} , {} )", norm_nonlin_drop("E"), blocks("REB"));
        b.push_owned(format!("{n}E"), RuleKind::Categorical, vec![conv, res], 0);
    }
    for &n in &stages {
        let ups: Vec<String> = (1..n).map(|i| format!("up , DB_{i}")).collect();
        let dec = format!("ConvDecoder ( {} , {} )", norm_nonlin_drop("D"), ups.join(" , "));
        b.push_owned(format!("{n}D"), RuleKind::Categorical, vec![dec], 0);
    }
    let counts = |max: usize| (1..=max).map(|c| format!("{c}b")).collect::<Vec<_>>();
    for (prefix, profile, len) in [
        ("CEB", &default_blocks.conv, n_stages_max),
        ("REB", &default_blocks.residual, n_stages_max),
        ("DB", &default_blocks.decoder, n_stages_max - 1),
    ] {
        for (i, &d) in profile.iter().take(len).enumerate() {
            b.push_owned(
                format!("{prefix}_{}", i + 1),
                RuleKind::Ordered,
                counts(model_scale_max * d),
                d - 1,
            );
        }
    }
    for p in ["E", "D"] {
        b.push_owned(
            format!("{p}_Norm"),
            RuleKind::Categorical,
            vec!["InstanceNorm".into(), "BatchNorm".into()],
            0,
        );
        b.push_owned(
            format!("{p}_Nonlin"),
            RuleKind::Categorical,
            ["LeakyReLU", "ReLU", "ELU", "PReLU", "GELU"].map(String::from).to_vec(),
            0,
        );
        b.push_owned(
            format!("{p}_Dropout"),
            RuleKind::Categorical,
            vec!["Dropout".into(), "NoDropout".into()],
            1,
        );
    }
    let mut grammar = b.build("S")?;
    grammar.profile = Some(UNetProfile { n_stages_max, model_scale_max, default_blocks });
    Ok(grammar)
}

/// One node of a derivation tree: the rule that was expanded, the chosen
/// alternative, and the expansion itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Derivation {
    pub rule: Arc<str>,
    pub alternative: usize,
    pub items: Vec<DerivationItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DerivationItem {
    Token(Arc<str>),
    Node(Derivation),
}

impl Derivation {
    pub fn children(&self) -> impl Iterator<Item = &Derivation> {
        self.items.iter().filter_map(|it| match it {
            DerivationItem::Node(d) => Some(d),
            DerivationItem::Token(_) => None,
        })
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        for it in &self.items {
            match it {
                DerivationItem::Token(t) => out.push(t),
                DerivationItem::Node(d) => d.collect_tokens(out),
            }
        }
    }

    /// Pre-order list of `(rule, alternative)` pairs.
    pub fn choices(&self) -> Vec<(&str, usize)> {
        let mut out = Vec::new();
        self.walk(&mut |d| out.push((d.rule.as_ref(), d.alternative)));
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Derivation)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Renders the derivation as a function-composition string.
    pub fn serialize(&self) -> String {
        let mut toks = Vec::new();
        self.collect_tokens(&mut toks);
        render_tokens(toks.iter().copied())
    }

    /// Reads architecture-level features off a U-Net derivation.
    pub fn features(&self) -> Result<ArchFeatures, GrammarError> {
        extract_features(self)
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn render_tokens<'a>(tokens: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for t in tokens {
        if let Some(p) = prev {
            let space = match (p, t) {
                (_, "(" | ")" | ",") => false,
                ("(", _) => false,
                (",", _) => true,
                _ => true,
            };
            if space {
                out.push(' ');
            }
        }
        out.push_str(t);
        prev = Some(t);
    }
    out
}

#[derive(Debug)]
struct Token<'s> {
    text: &'s str,
    pos: usize,
}

fn tokenize<'s>(s: &'s str) -> Result<Vec<Token<'s>>, GrammarError> {
    let mut toks = Vec::new();
    let mut depth: i64 = 0;
    let mut word_start: Option<usize> = None;
    let bytes = s.as_bytes();
    let flush = |ws: &mut Option<usize>, end: usize, toks: &mut Vec<Token<'s>>| {
        if let Some(st) = ws.take() {
            toks.push(Token { text: &s[st..end], pos: st });
        }
    };
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | ')' | ',' => {
                flush(&mut word_start, i, &mut toks);
                if ch == '(' {
                    depth += 1;
                } else if ch == ')' {
                    depth -= 1;
                    if depth < 0 {
                        return Err(GrammarError::ParseError {
                            position: i,
                            message: "unmatched `)`".into(),
                        });
                    }
                }
                toks.push(Token { text: &s[i..i + 1], pos: i });
            }
            c if c.is_whitespace() => flush(&mut word_start, i, &mut toks),
            c if c.is_control() => {
                return Err(GrammarError::ParseError {
                    position: i,
                    message: format!("unexpected character {c:?}"),
                })
            }
            _ => {
                if word_start.is_none() {
                    word_start = Some(i);
                }
            }
        }
    }
    flush(&mut word_start, bytes.len(), &mut toks);
    if depth != 0 {
        return Err(GrammarError::ParseError {
            position: bytes.len(),
            message: "unbalanced parentheses".into(),
        });
    }
    if toks.is_empty() {
        return Err(GrammarError::ParseError { position: 0, message: "empty input".into() });
    }
    Ok(toks)
}

/// Per-rule default alternative used by prior sampling.
struct PriorCenter<'a> {
    chosen: HashMap<&'a str, usize>,
}

impl Grammar {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.index.get(name).map(|&i| &self.rules[i])
    }

    pub fn start(&self) -> &Rule {
        &self.rules[self.start]
    }

    pub fn profile(&self) -> Option<&UNetProfile> {
        self.profile.as_ref()
    }

    fn check_acyclic(&self) -> Result<(), GrammarError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        fn visit(g: &Grammar, r: usize, state: &mut [u8]) -> Result<(), GrammarError> {
            match state[r] {
                1 => return Err(GrammarError::Cyclic(g.rules[r].name.to_string())),
                2 => return Ok(()),
                _ => {}
            }
            state[r] = 1;
            for alt in &g.rules[r].alternatives {
                for s in alt {
                    if let Symbol::NonTerminal(c) = s {
                        visit(g, *c, state)?;
                    }
                }
            }
            state[r] = 2;
            Ok(())
        }
        let mut state = vec![0u8; self.rules.len()];
        for r in 0..self.rules.len() {
            visit(self, r, &mut state)?;
        }
        Ok(())
    }

    /// Number of distinct derivations from the start symbol.
    pub fn count_derivations(&self) -> u128 {
        let mut memo = vec![None; self.rules.len()];
        self.count_rule(self.start, &mut memo)
    }

    fn count_rule(&self, r: usize, memo: &mut Vec<Option<u128>>) -> u128 {
        if let Some(c) = memo[r] {
            return c;
        }
        let mut total: u128 = 0;
        for alt in &self.rules[r].alternatives {
            let mut prod: u128 = 1;
            for s in alt {
                if let Symbol::NonTerminal(c) = s {
                    prod = prod.saturating_mul(self.count_rule(*c, memo));
                }
            }
            total = total.saturating_add(prod);
        }
        memo[r] = Some(total);
        total
    }

    /// Expands a pre-order choice sequence into a derivation tree.
    fn materialize(&self, choices: &[(usize, usize)]) -> Derivation {
        fn go(g: &Grammar, choices: &[(usize, usize)], pos: &mut usize) -> Derivation {
            let (r, alt) = choices[*pos];
            *pos += 1;
            let rule = &g.rules[r];
            let items = rule.alternatives[alt]
                .iter()
                .map(|s| match s {
                    Symbol::Terminal(t) => DerivationItem::Token(t.clone()),
                    Symbol::NonTerminal(_) => DerivationItem::Node(go(g, choices, pos)),
                })
                .collect();
            Derivation { rule: rule.name.clone(), alternative: alt, items }
        }
        let mut pos = 0;
        go(self, choices, &mut pos)
    }

    /// Builds a derivation by asking `choose` for the alternative of every
    /// expanded rule, in pre-order.
    fn derive_with(&self, mut choose: impl FnMut(&Rule) -> usize) -> Derivation {
        fn go(g: &Grammar, r: usize, choose: &mut impl FnMut(&Rule) -> usize) -> Derivation {
            let rule = &g.rules[r];
            let alt = choose(rule);
            let items = rule.alternatives[alt]
                .iter()
                .map(|s| match s {
                    Symbol::Terminal(t) => DerivationItem::Token(t.clone()),
                    Symbol::NonTerminal(c) => DerivationItem::Node(go(g, *c, choose)),
                })
                .collect();
            Derivation { rule: rule.name.clone(), alternative: alt, items }
        }
        go(self, self.start, &mut choose)
    }

    /// The derivation taking every rule's default alternative.
    pub fn default_derivation(&self) -> Derivation {
        self.derive_with(|r| r.default)
    }

    /// Lexicographic stream (over pre-order choice sequences) of at most
    /// `limit` derivations.
    pub fn enumerate(&self, limit: usize) -> impl Iterator<Item = Derivation> + '_ {
        let mut cursor = DerivationCursor::new(self);
        let mut emitted = 0;
        std::iter::from_fn(move || {
            if emitted >= limit {
                return None;
            }
            let d = cursor.current().map(|c| self.materialize(c))?;
            cursor.advance();
            emitted += 1;
            Some(d)
        })
    }

    /// Derivation sampling; `Uniform` picks each alternative with equal
    /// probability at every expansion.
    pub fn sample<R: Rng + ?Sized>(&self, mode: &DerivationSampling<'_>, rng: &mut R) -> Derivation {
        match mode {
            DerivationSampling::Uniform => {
                self.derive_with(|r| rng.random_range(0..r.alternatives.len()))
            }
            DerivationSampling::Prior { center, confidence } => {
                let center = self.prior_center(center);
                let sigma = confidence.sigma();
                self.derive_with(|r| {
                    let n = r.alternatives.len();
                    let d = center.default_for(r);
                    match r.kind {
                        RuleKind::Ordered => prior::sample_ordered_index(n, d, sigma, rng),
                        RuleKind::Categorical => prior::sample_boosted(n, d, *confidence, rng),
                    }
                })
            }
        }
    }

    fn prior_center<'a>(&self, center: &'a Derivation) -> PriorCenter<'a> {
        let mut chosen = HashMap::new();
        center.walk(&mut |d| {
            chosen.insert(d.rule.as_ref(), d.alternative);
        });
        PriorCenter { chosen }
    }

    /// Density of `derivation` under prior sampling around `center`: the
    /// product over expansions of the boosted-categorical probability or the
    /// truncated-normal density of the chosen ordered index.
    pub fn derivation_density(
        &self,
        derivation: &Derivation,
        center: &Derivation,
        confidence: Confidence,
    ) -> Result<f64, GrammarError> {
        self.validate(derivation)?;
        let center = self.prior_center(center);
        let mut density = 1.0;
        derivation.walk(&mut |d| {
            let r = &self.rules[self.index[&d.rule]];
            let n = r.alternatives.len();
            let def = center.default_for(r);
            density *= match r.kind {
                RuleKind::Ordered => {
                    prior::ordered_index_density(n, d.alternative, def, confidence.sigma())
                }
                RuleKind::Categorical => prior::boosted_probability(n, d.alternative, def, confidence),
            };
        });
        Ok(density)
    }

    /// Checks that `derivation` is a complete derivation of this grammar.
    pub fn validate(&self, derivation: &Derivation) -> Result<(), GrammarError> {
        fn go(g: &Grammar, r: usize, d: &Derivation) -> Result<(), GrammarError> {
            let rule = &g.rules[r];
            if rule.name != d.rule {
                return Err(GrammarError::ForeignDerivation(format!(
                    "expected rule `{}`, found `{}`",
                    rule.name, d.rule
                )));
            }
            let alt = rule.alternatives.get(d.alternative).ok_or_else(|| {
                GrammarError::ForeignDerivation(format!(
                    "rule `{}` has no alternative {}",
                    rule.name, d.alternative
                ))
            })?;
            if alt.len() != d.items.len() {
                return Err(GrammarError::ForeignDerivation(format!(
                    "rule `{}` expansion has wrong length",
                    rule.name
                )));
            }
            for (s, it) in alt.iter().zip(&d.items) {
                match (s, it) {
                    (Symbol::Terminal(a), DerivationItem::Token(b)) if a == b => {}
                    (Symbol::NonTerminal(c), DerivationItem::Node(child)) => go(g, *c, child)?,
                    _ => {
                        return Err(GrammarError::ForeignDerivation(format!(
                            "rule `{}` expansion does not match its alternative",
                            rule.name
                        )))
                    }
                }
            }
            Ok(())
        }
        go(self, self.start, derivation)
    }

    /// Parses a function-composition string into a derivation.
    pub fn parse(&self, input: &str) -> Result<Derivation, GrammarError> {
        let toks = tokenize(input)?;
        let mut furthest = 0usize;
        match self.parse_rule(self.start, &toks, 0, &mut furthest) {
            Some((d, end)) if end == toks.len() => Ok(d),
            Some((_, end)) => Err(GrammarError::NotInLanguage { position: toks[end].pos }),
            None => Err(GrammarError::NotInLanguage {
                position: toks.get(furthest).map_or(input.len(), |t| t.pos),
            }),
        }
    }

    fn parse_rule(
        &self,
        r: usize,
        toks: &[Token<'_>],
        start: usize,
        furthest: &mut usize,
    ) -> Option<(Derivation, usize)> {
        let rule = &self.rules[r];
        'alts: for (ai, alt) in rule.alternatives.iter().enumerate() {
            let mut pos = start;
            let mut items = Vec::with_capacity(alt.len());
            for s in alt {
                match s {
                    Symbol::Terminal(t) => {
                        if toks.get(pos).is_some_and(|tk| tk.text == t.as_ref()) {
                            items.push(DerivationItem::Token(t.clone()));
                            pos += 1;
                        } else {
                            *furthest = (*furthest).max(pos);
                            continue 'alts;
                        }
                    }
                    Symbol::NonTerminal(c) => match self.parse_rule(*c, toks, pos, furthest) {
                        Some((d, p)) => {
                            items.push(DerivationItem::Node(d));
                            pos = p;
                        }
                        None => continue 'alts,
                    },
                }
            }
            return Some((Derivation { rule: rule.name.clone(), alternative: ai, items }, pos));
        }
        None
    }
}

impl PriorCenter<'_> {
    fn default_for(&self, rule: &Rule) -> usize {
        self.chosen
            .get(rule.name.as_ref())
            .copied()
            .filter(|&a| a < rule.alternatives.len())
            .unwrap_or(rule.default)
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            let alts: Vec<String> = rule
                .alternatives
                .iter()
                .map(|alt| {
                    render_tokens(alt.iter().map(|s| match s {
                        Symbol::Terminal(t) => t.as_ref(),
                        Symbol::NonTerminal(c) => self.rules[*c].name.as_ref(),
                    }))
                })
                .collect();
            writeln!(f, "{} ::= {}", rule.name, alts.join(" | "))?;
        }
        Ok(())
    }
}

/// How to sample a derivation.
#[derive(Debug, Clone, Copy)]
pub enum DerivationSampling<'a> {
    Uniform,
    /// Each expansion is centered on the alternative `center` chose for the
    /// same rule, falling back to the rule's default for branches `center`
    /// never expanded.
    Prior { center: &'a Derivation, confidence: Confidence },
}

/// Walks derivations in lexicographic order of their pre-order choice
/// sequences without building trees.
pub struct DerivationCursor<'g> {
    grammar: &'g Grammar,
    seq: Vec<(usize, usize)>,
    done: bool,
}

impl<'g> DerivationCursor<'g> {
    pub fn new(grammar: &'g Grammar) -> Self {
        let mut c = Self { grammar, seq: Vec::new(), done: false };
        c.complete_from(0);
        c
    }

    /// Recomputes the sequence after position `keep`, taking the first
    /// alternative of every rule not yet fixed.
    fn complete_from(&mut self, keep: usize) {
        let fixed: Vec<usize> = self.seq[..keep].iter().map(|&(_, a)| a).collect();
        self.seq.clear();
        let mut stack = vec![self.grammar.start];
        while let Some(r) = stack.pop() {
            let alt = fixed.get(self.seq.len()).copied().unwrap_or(0);
            self.seq.push((r, alt));
            for s in self.grammar.rules[r].alternatives[alt].iter().rev() {
                if let Symbol::NonTerminal(c) = s {
                    stack.push(*c);
                }
            }
        }
    }

    pub fn current(&self) -> Option<&[(usize, usize)]> {
        (!self.done).then_some(self.seq.as_slice())
    }

    /// Moves to the next derivation; returns `false` once exhausted.
    pub fn advance(&mut self) -> bool {
        if self.done {
            return false;
        }
        let pos = self
            .seq
            .iter()
            .rposition(|&(r, a)| a + 1 < self.grammar.rules[r].alternatives.len());
        match pos {
            None => {
                self.done = true;
                false
            }
            Some(p) => {
                self.seq[p].1 += 1;
                self.complete_from(p + 1);
                true
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderType {
    Conv,
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Normalization {
    InstanceNorm,
    BatchNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Nonlinearity {
    LeakyReLU,
    ReLU,
    ELU,
    PReLU,
    GELU,
}

/// Architecture-level pseudo-hyperparameters of a U-Net derivation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchFeatures {
    pub n_stages: usize,
    pub encoder_type: EncoderType,
    pub encoder_blocks: Vec<usize>,
    pub decoder_blocks: Vec<usize>,
    pub encoder_norm: Normalization,
    pub decoder_norm: Normalization,
    pub encoder_nonlin: Nonlinearity,
    pub decoder_nonlin: Nonlinearity,
    pub encoder_dropout: bool,
    pub decoder_dropout: bool,
}

impl ArchFeatures {
    pub fn total_blocks(&self) -> usize {
        self.encoder_blocks.iter().sum::<usize>() + self.decoder_blocks.iter().sum::<usize>()
    }
}

pub fn extract_features(derivation: &Derivation) -> Result<ArchFeatures, GrammarError> {
    let bad = |m: &str| GrammarError::NotAnArchitecture(m.to_string());
    let token_of = |d: &Derivation| -> Option<Arc<str>> {
        d.items.iter().find_map(|it| match it {
            DerivationItem::Token(t) => Some(t.clone()),
            DerivationItem::Node(_) => None,
        })
    };
    let mut children = derivation.children();
    let enc = children.next().ok_or_else(|| bad("missing encoder"))?;
    let dec = children.next().ok_or_else(|| bad("missing decoder"))?;

    let encoder_type = match token_of(enc).as_deref() {
        Some("ConvEncoder") => EncoderType::Conv,
        Some("ResEncoder") => EncoderType::Residual,
        other => return Err(bad(&format!("unknown encoder {other:?}"))),
    };

    struct Part {
        norm: Normalization,
        nonlin: Nonlinearity,
        dropout: bool,
        blocks: Vec<usize>,
    }
    let read_part = |node: &Derivation| -> Result<Part, GrammarError> {
        let mut norm = None;
        let mut nonlin = None;
        let mut dropout = None;
        let mut blocks = Vec::new();
        for c in node.children() {
            let tok = token_of(c).ok_or_else(|| bad("empty expansion"))?;
            if c.rule.ends_with("_Norm") {
                norm = Some(match tok.as_ref() {
                    "InstanceNorm" => Normalization::InstanceNorm,
                    "BatchNorm" => Normalization::BatchNorm,
                    t => return Err(bad(&format!("unknown normalization {t}"))),
                });
            } else if c.rule.ends_with("_Nonlin") {
                nonlin = Some(match tok.as_ref() {
                    "LeakyReLU" => Nonlinearity::LeakyReLU,
                    "ReLU" => Nonlinearity::ReLU,
                    "ELU" => Nonlinearity::ELU,
                    "PReLU" => Nonlinearity::PReLU,
                    "GELU" => Nonlinearity::GELU,
                    t => return Err(bad(&format!("unknown nonlinearity {t}"))),
                });
            } else if c.rule.ends_with("_Dropout") {
                dropout = Some(tok.as_ref() == "Dropout");
            } else {
                let n = tok
                    .strip_suffix('b')
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| bad(&format!("bad block token {tok}")))?;
                blocks.push(n);
            }
        }
        Ok(Part {
            norm: norm.ok_or_else(|| bad("missing normalization"))?,
            nonlin: nonlin.ok_or_else(|| bad("missing nonlinearity"))?,
            dropout: dropout.ok_or_else(|| bad("missing dropout"))?,
            blocks,
        })
    };
    let e = read_part(enc)?;
    let d = read_part(dec)?;
    if d.blocks.len() + 1 != e.blocks.len() {
        return Err(bad("decoder must have one stage fewer than the encoder"));
    }
    Ok(ArchFeatures {
        n_stages: e.blocks.len(),
        encoder_type,
        encoder_blocks: e.blocks,
        decoder_blocks: d.blocks,
        encoder_norm: e.norm,
        decoder_norm: d.norm,
        encoder_nonlin: e.nonlin,
        decoder_nonlin: d.nonlin,
        encoder_dropout: e.dropout,
        decoder_dropout: d.dropout,
    })
}
