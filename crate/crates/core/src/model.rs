//! Core data model: atoms, choice alternatives, observables, rules, and the
//! theory that ties them together.
//!
//! Atoms are interned in first-appearance order; every deterministic
//! tie-break in the solver (set iteration, pair selection, splitting) falls
//! back to that order, so identical inputs always produce identical outputs.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

/// A ground atom: a predicate name plus constant arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub name: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(name: impl Into<String>) -> Self {
        Atom { name: name.into(), args: Vec::new() }
    }

    pub fn with_args(name: impl Into<String>, args: Vec<String>) -> Self {
        Atom { name: name.into(), args }
    }

    /// Convenience constructor from canonical text like `as(pos)`.
    /// Intended for tests and fixtures; panics on malformed input.
    pub fn parse(text: &str) -> Self {
        match text.find('(') {
            None => Atom::new(text.trim()),
            Some(open) => {
                let name = text[..open].trim().to_string();
                let inner = text[open + 1..].trim_end_matches(')');
                let args = inner.split(',').map(|a| a.trim().to_string()).collect();
                Atom { name, args }
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.args.is_empty() {
            write!(f, "({})", self.args.join(","))?;
        }
        Ok(())
    }
}

/// Index of an interned atom. Ids increase in first-appearance order, which
/// doubles as the global declaration order used for deterministic iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomId(pub u32);

impl AtomId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Interner mapping atoms to dense ids and back.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    atoms: Vec<Atom>,
    index: HashMap<Atom, AtomId>,
}

impl SymbolTable {
    pub fn intern(&mut self, atom: Atom) -> AtomId {
        if let Some(&id) = self.index.get(&atom) {
            return id;
        }
        let id = AtomId(self.atoms.len() as u32);
        self.index.insert(atom.clone(), id);
        self.atoms.push(atom);
        id
    }

    pub fn lookup(&self, atom: &Atom) -> Option<AtomId> {
        self.index.get(atom).copied()
    }

    pub fn atom(&self, id: AtomId) -> &Atom {
        &self.atoms[id.index()]
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = AtomId> {
        (0..self.atoms.len() as u32).map(AtomId)
    }
}

/// Whether an alternative belongs to nature or to the agent.
#[derive(Debug, Clone, PartialEq)]
pub enum AlternativeKind {
    /// Nature picks; one probability per atom, summing to one.
    Nature { probs: Vec<f64> },
    /// The agent picks; `observes` lists the block ids visible at choice time.
    Decision { observes: Vec<String> },
}

/// A choice alternative: a named, non-empty set of mutually exclusive atoms,
/// exactly one of which is selected in every possible world.
#[derive(Debug, Clone)]
pub struct Alternative {
    pub id: String,
    pub atoms: Vec<AtomId>,
    pub kind: AlternativeKind,
    /// Position in the global block declaration sequence.
    pub decl_pos: u32,
}

impl Alternative {
    pub fn is_decision(&self) -> bool {
        matches!(self.kind, AlternativeKind::Decision { .. })
    }

    pub fn observes(&self) -> &[String] {
        match &self.kind {
            AlternativeKind::Decision { observes } => observes,
            AlternativeKind::Nature { .. } => &[],
        }
    }
}

/// A declared observable block: a set of atoms of which exactly one must be
/// true in every world (checked semantically, not by construction).
#[derive(Debug, Clone)]
pub struct ObservableBlock {
    pub id: String,
    pub atoms: Vec<AtomId>,
    pub decl_pos: u32,
}

/// Rule head: either a derived atom or a utility assertion.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleHead {
    Derived(AtomId),
    Utility(f64),
}

/// A definite rule `head <- body`; an empty body is a fact.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: RuleHead,
    pub body: Vec<AtomId>,
}

/// Reference to a block that can serve as an observation alternative: either
/// a choice alternative (nature or decision) or a declared observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockRef {
    Alt(usize),
    Obs(usize),
}

#[derive(Debug)]
pub enum ModelError {
    UnknownBlock { decision: String, reference: String },
    NoTotalOrder { details: String },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::UnknownBlock { decision, reference } => {
                write!(f, "decision '{decision}' observes unknown block '{reference}'")
            }
            ModelError::NoTotalOrder { details } => {
                write!(f, "decisions admit no total order: {details}")
            }
        }
    }
}

impl std::error::Error for ModelError {}

/// A complete decision theory: choice alternatives, observables, and a
/// definite rule base with utility heads.
#[derive(Debug, Clone)]
pub struct Theory {
    symbols: SymbolTable,
    alternatives: Vec<Alternative>,
    observables: Vec<ObservableBlock>,
    rules: Vec<Rule>,
    next_decl_pos: u32,
    /// Per atom: index into `alternatives` if the atom is an atomic choice.
    atom_alt: Vec<Option<u32>>,
    /// Per atom: indices of rules with that atom as head.
    head_rules: Vec<Vec<u32>>,
    utility_rules: Vec<u32>,
}

impl Theory {
    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn atom(&self, id: AtomId) -> &Atom {
        self.symbols.atom(id)
    }

    pub fn atom_text(&self, id: AtomId) -> String {
        self.symbols.atom(id).to_string()
    }

    pub fn atom_count(&self) -> usize {
        self.symbols.len()
    }

    pub fn alternatives(&self) -> &[Alternative] {
        &self.alternatives
    }

    pub fn observables(&self) -> &[ObservableBlock] {
        &self.observables
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rules_with_head(&self, atom: AtomId) -> &[u32] {
        &self.head_rules[atom.index()]
    }

    pub fn utility_rule_indices(&self) -> &[u32] {
        &self.utility_rules
    }

    /// Distinct utility values in first-appearance (rule declaration) order.
    pub fn utility_values(&self) -> Vec<f64> {
        let mut seen: Vec<u64> = Vec::new();
        let mut out = Vec::new();
        for &ri in &self.utility_rules {
            if let RuleHead::Utility(u) = self.rules[ri as usize].head {
                if !seen.contains(&u.to_bits()) {
                    seen.push(u.to_bits());
                    out.push(u);
                }
            }
        }
        out
    }

    /// The alternative an atomic choice belongs to, if any.
    pub fn alternative_of(&self, atom: AtomId) -> Option<usize> {
        self.atom_alt[atom.index()].map(|i| i as usize)
    }

    pub fn is_choice(&self, atom: AtomId) -> bool {
        self.atom_alt[atom.index()].is_some()
    }

    /// True when the atom is the head of at least one rule.
    pub fn is_derived(&self, atom: AtomId) -> bool {
        !self.head_rules[atom.index()].is_empty()
    }

    /// Probability assigned to a nature atom, `None` for everything else.
    pub fn nature_prob(&self, atom: AtomId) -> Option<f64> {
        let alt = &self.alternatives[self.alternative_of(atom)?];
        match &alt.kind {
            AlternativeKind::Nature { probs } => {
                let pos = alt.atoms.iter().position(|&a| a == atom)?;
                Some(probs[pos])
            }
            AlternativeKind::Decision { .. } => None,
        }
    }

    /// True when the atom belongs to a decision alternative.
    pub fn is_agent_choice(&self, atom: AtomId) -> bool {
        self.alternative_of(atom)
            .map(|i| self.alternatives[i].is_decision())
            .unwrap_or(false)
    }

    pub fn decisions(&self) -> impl Iterator<Item = (usize, &Alternative)> {
        self.alternatives.iter().enumerate().filter(|(_, a)| a.is_decision())
    }

    pub fn decision_count(&self) -> usize {
        self.decisions().count()
    }

    pub fn block_by_id(&self, id: &str) -> Option<BlockRef> {
        if let Some(i) = self.alternatives.iter().position(|a| a.id == id) {
            return Some(BlockRef::Alt(i));
        }
        self.observables.iter().position(|o| o.id == id).map(BlockRef::Obs)
    }

    pub fn block_atoms(&self, block: BlockRef) -> &[AtomId] {
        match block {
            BlockRef::Alt(i) => &self.alternatives[i].atoms,
            BlockRef::Obs(i) => &self.observables[i].atoms,
        }
    }

    pub fn block_id(&self, block: BlockRef) -> &str {
        match block {
            BlockRef::Alt(i) => &self.alternatives[i].id,
            BlockRef::Obs(i) => &self.observables[i].id,
        }
    }

    pub fn block_pos(&self, block: BlockRef) -> u32 {
        match block {
            BlockRef::Alt(i) => self.alternatives[i].decl_pos,
            BlockRef::Obs(i) => self.observables[i].decl_pos,
        }
    }

    /// Blocks observed by the given decision, sorted by declaration order.
    pub fn observed_blocks(&self, decision: usize) -> Result<Vec<BlockRef>, ModelError> {
        let alt = &self.alternatives[decision];
        let mut blocks = Vec::new();
        for reference in alt.observes() {
            match self.block_by_id(reference) {
                Some(b) => blocks.push(b),
                None => {
                    return Err(ModelError::UnknownBlock {
                        decision: alt.id.clone(),
                        reference: reference.clone(),
                    })
                }
            }
        }
        blocks.sort_by_key(|&b| self.block_pos(b));
        blocks.dedup();
        Ok(blocks)
    }

    /// Every block that can act as an observation alternative: declared
    /// observables plus any choice alternative referenced by some decision's
    /// observes list. Sorted by declaration order.
    pub fn effective_observation_blocks(&self) -> Vec<BlockRef> {
        let mut set: BTreeSet<BlockRef> = self
            .observables
            .iter()
            .enumerate()
            .map(|(i, _)| BlockRef::Obs(i))
            .collect();
        for (_, alt) in self.decisions() {
            for reference in alt.observes() {
                if let Some(b) = self.block_by_id(reference) {
                    set.insert(b);
                }
            }
        }
        let mut out: Vec<BlockRef> = set.into_iter().collect();
        out.sort_by_key(|&b| self.block_pos(b));
        out
    }

    /// Decisions sorted so that observation sets strictly grow, i.e. every
    /// later decision observes all earlier ones and everything they observed.
    pub fn decision_order(&self) -> Result<Vec<usize>, ModelError> {
        let mut decs: Vec<(usize, BTreeSet<BlockRef>)> = Vec::new();
        for (idx, alt) in self.decisions() {
            let blocks = self.observed_blocks(idx)?;
            decs.push((idx, blocks.into_iter().collect()));
            let _ = alt;
        }
        decs.sort_by_key(|(idx, set)| (set.len(), *idx));
        for w in decs.windows(2) {
            let (earlier_idx, earlier_obs) = (&w[0].0, &w[0].1);
            let (later_idx, later_obs) = (&w[1].0, &w[1].1);
            let earlier_id = &self.alternatives[*earlier_idx].id;
            let later_id = &self.alternatives[*later_idx].id;
            if !earlier_obs.is_subset(later_obs) {
                return Err(ModelError::NoTotalOrder {
                    details: format!(
                        "'{later_id}' does not observe everything '{earlier_id}' observes"
                    ),
                });
            }
            if !later_obs.contains(&BlockRef::Alt(*earlier_idx)) {
                return Err(ModelError::NoTotalOrder {
                    details: format!("'{later_id}' does not observe '{earlier_id}'"),
                });
            }
        }
        Ok(decs.into_iter().map(|(idx, _)| idx).collect())
    }

    /// Number of possible worlds: the product of all alternative sizes.
    pub fn world_count(&self) -> u128 {
        self.alternatives
            .iter()
            .map(|a| a.atoms.len() as u128)
            .product()
    }

    /// Replace a decision with the given defining rules: the decision leaves
    /// the agent's choice space and its atoms become derived. Used when a
    /// solved policy (or an externally supplied strategy) is substituted back
    /// into the rule base.
    pub fn substitute_decision(&self, decision: usize, policy_rules: Vec<Rule>) -> Theory {
        let mut builder = TheoryBuilder::with_symbols(self.symbols.clone());
        builder.next_decl_pos = self.next_decl_pos;
        for (i, alt) in self.alternatives.iter().enumerate() {
            if i != decision {
                builder.alternatives.push(alt.clone());
            }
        }
        builder.observables = self.observables.clone();
        builder.rules = self.rules.clone();
        builder.rules.extend(policy_rules);
        builder.finish()
    }
}

/// Incremental construction of a theory; performs no validation beyond atom
/// interning. `validate::validate_static` is the gatekeeper for theories
/// assembled through this interface.
#[derive(Debug, Default)]
pub struct TheoryBuilder {
    symbols: SymbolTable,
    alternatives: Vec<Alternative>,
    observables: Vec<ObservableBlock>,
    rules: Vec<Rule>,
    next_decl_pos: u32,
}

impl TheoryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn with_symbols(symbols: SymbolTable) -> Self {
        TheoryBuilder { symbols, ..Self::default() }
    }

    pub fn intern(&mut self, atom: Atom) -> AtomId {
        self.symbols.intern(atom)
    }

    pub fn lookup(&self, atom: &Atom) -> Option<AtomId> {
        self.symbols.lookup(atom)
    }

    pub fn has_block_id(&self, id: &str) -> bool {
        self.alternatives.iter().any(|a| a.id == id)
            || self.observables.iter().any(|o| o.id == id)
    }

    /// The alternative (by id) an already-interned atom belongs to, if any.
    pub fn alternative_id_of(&self, atom: AtomId) -> Option<&str> {
        self.alternatives
            .iter()
            .find(|a| a.atoms.contains(&atom))
            .map(|a| a.id.as_str())
    }

    fn take_pos(&mut self) -> u32 {
        let pos = self.next_decl_pos;
        self.next_decl_pos += 1;
        pos
    }

    pub fn add_nature(&mut self, id: impl Into<String>, entries: Vec<(Atom, f64)>) {
        let decl_pos = self.take_pos();
        let mut atoms = Vec::new();
        let mut probs = Vec::new();
        for (atom, p) in entries {
            atoms.push(self.intern(atom));
            probs.push(p);
        }
        self.alternatives.push(Alternative {
            id: id.into(),
            atoms,
            kind: AlternativeKind::Nature { probs },
            decl_pos,
        });
    }

    pub fn add_decision(
        &mut self,
        id: impl Into<String>,
        atoms: Vec<Atom>,
        observes: Vec<String>,
    ) {
        let decl_pos = self.take_pos();
        let atoms = atoms.into_iter().map(|a| self.symbols.intern(a)).collect();
        self.alternatives.push(Alternative {
            id: id.into(),
            atoms,
            kind: AlternativeKind::Decision { observes },
            decl_pos,
        });
    }

    pub fn add_observable(&mut self, id: impl Into<String>, atoms: Vec<Atom>) {
        let decl_pos = self.take_pos();
        let atoms = atoms.into_iter().map(|a| self.symbols.intern(a)).collect();
        self.observables.push(ObservableBlock { id: id.into(), atoms, decl_pos });
    }

    pub fn add_rule(&mut self, head: RuleHead, body: Vec<AtomId>) {
        self.rules.push(Rule { head, body });
    }

    pub fn add_derived_rule(&mut self, head: Atom, body: Vec<Atom>) {
        let head = self.intern(head);
        let body = body.into_iter().map(|a| self.symbols.intern(a)).collect();
        self.rules.push(Rule { head: RuleHead::Derived(head), body });
    }

    pub fn add_utility_rule(&mut self, value: f64, body: Vec<Atom>) {
        let body = body.into_iter().map(|a| self.symbols.intern(a)).collect();
        self.rules.push(Rule { head: RuleHead::Utility(value), body });
    }

    pub fn finish(self) -> Theory {
        let n = self.symbols.len();
        let mut atom_alt = vec![None; n];
        for (i, alt) in self.alternatives.iter().enumerate() {
            for &a in &alt.atoms {
                atom_alt[a.index()] = Some(i as u32);
            }
        }
        let mut head_rules = vec![Vec::new(); n];
        let mut utility_rules = Vec::new();
        for (ri, rule) in self.rules.iter().enumerate() {
            match rule.head {
                RuleHead::Derived(h) => head_rules[h.index()].push(ri as u32),
                RuleHead::Utility(_) => utility_rules.push(ri as u32),
            }
        }
        Theory {
            symbols: self.symbols,
            alternatives: self.alternatives,
            observables: self.observables,
            rules: self.rules,
            next_decl_pos: self.next_decl_pos,
            atom_alt,
            head_rules,
            utility_rules,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_display_and_parse_roundtrip() {
        let a = Atom::with_args("as", vec!["pos".into()]);
        assert_eq!(a.to_string(), "as(pos)");
        assert_eq!(Atom::parse("as(pos)"), a);
        assert_eq!(Atom::parse("ok"), Atom::new("ok"));
        assert_eq!(
            Atom::parse("p(x,y)"),
            Atom::with_args("p", vec!["x".into(), "y".into()])
        );
    }

    #[test]
    fn interning_assigns_ids_in_first_appearance_order() {
        let mut t = SymbolTable::default();
        let a = t.intern(Atom::new("a"));
        let b = t.intern(Atom::new("b"));
        let a2 = t.intern(Atom::new("a"));
        assert_eq!(a, a2);
        assert!(a < b);
    }

    #[test]
    fn builder_wires_choice_and_head_indexes() {
        let mut b = TheoryBuilder::new();
        b.add_nature("w", vec![(Atom::new("wet"), 0.3), (Atom::new("dry"), 0.7)]);
        b.add_decision("act", vec![Atom::new("go"), Atom::new("stay")], vec![]);
        b.add_derived_rule(Atom::new("happy"), vec![Atom::new("dry"), Atom::new("go")]);
        b.add_utility_rule(5.0, vec![Atom::new("happy")]);
        let t = b.finish();
        let wet = t.symbols().lookup(&Atom::new("wet")).unwrap();
        let go = t.symbols().lookup(&Atom::new("go")).unwrap();
        let happy = t.symbols().lookup(&Atom::new("happy")).unwrap();
        assert!(t.is_choice(wet));
        assert!(!t.is_agent_choice(wet));
        assert!(t.is_agent_choice(go));
        assert!(t.is_derived(happy));
        assert_eq!(t.nature_prob(wet), Some(0.3));
        assert_eq!(t.nature_prob(go), None);
        assert_eq!(t.utility_values(), vec![5.0]);
        assert_eq!(t.world_count(), 4);
    }

    #[test]
    fn decision_order_requires_nesting_and_membership() {
        // d2 observes d1 and everything d1 observes: ordered [d1, d2].
        let mut b = TheoryBuilder::new();
        b.add_nature("n", vec![(Atom::new("n1"), 0.5), (Atom::new("n2"), 0.5)]);
        b.add_decision("d1", vec![Atom::new("x1"), Atom::new("x2")], vec!["n".into()]);
        b.add_decision(
            "d2",
            vec![Atom::new("y1"), Atom::new("y2")],
            vec!["n".into(), "d1".into()],
        );
        let t = b.finish();
        let order = t.decision_order().unwrap();
        assert_eq!(order.len(), 2);
        assert_eq!(t.alternatives()[order[0]].id, "d1");
        assert_eq!(t.alternatives()[order[1]].id, "d2");

        // Forgetting n breaks the order even though d2 still observes d1.
        let mut b = TheoryBuilder::new();
        b.add_nature("n", vec![(Atom::new("n1"), 0.5), (Atom::new("n2"), 0.5)]);
        b.add_decision("d1", vec![Atom::new("x1"), Atom::new("x2")], vec!["n".into()]);
        b.add_decision("d2", vec![Atom::new("y1"), Atom::new("y2")], vec!["d1".into()]);
        let t = b.finish();
        assert!(matches!(t.decision_order(), Err(ModelError::NoTotalOrder { .. })));
    }

    #[test]
    fn substitution_moves_a_decision_into_the_rule_base() {
        let mut b = TheoryBuilder::new();
        b.add_nature("n", vec![(Atom::new("n1"), 0.5), (Atom::new("n2"), 0.5)]);
        b.add_decision("d", vec![Atom::new("go"), Atom::new("stay")], vec!["n".into()]);
        b.add_utility_rule(1.0, vec![Atom::new("go")]);
        b.add_utility_rule(0.0, vec![Atom::new("stay")]);
        let t = b.finish();
        let go = t.symbols().lookup(&Atom::new("go")).unwrap();
        let stay = t.symbols().lookup(&Atom::new("stay")).unwrap();
        let n1 = t.symbols().lookup(&Atom::new("n1")).unwrap();
        let n2 = t.symbols().lookup(&Atom::new("n2")).unwrap();
        let sub = t.substitute_decision(
            1,
            vec![
                Rule { head: RuleHead::Derived(go), body: vec![n1] },
                Rule { head: RuleHead::Derived(stay), body: vec![n2] },
            ],
        );
        assert_eq!(sub.decision_count(), 0);
        assert!(!sub.is_choice(go));
        assert!(sub.is_derived(go));
        assert_eq!(sub.world_count(), 2);
    }
}
