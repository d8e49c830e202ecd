//! Explanations of formulas as sets of composite choices.
//!
//! A composite choice picks at most one atom from each alternative; it
//! stands for the set of possible worlds that agree with every pick. An
//! explanation set collects composite choices that each entail a formula
//! and that jointly cover every world where the formula holds. Sets are
//! kept minimal under subsumption, and can be refined by splitting until
//! their members are pairwise incompatible, at which point the probability
//! of the underlying event is the plain sum of member probabilities.

use crate::engine::Formula;
use crate::model::{AtomId, Theory};
use std::collections::BTreeSet;
use std::fmt;

/// A consistent set of atomic choices, ordered by atom declaration.
pub type CompositeChoice = BTreeSet<AtomId>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbductionError {
    /// An atom handed to a choice-level operation is not an atomic choice.
    NotAtomicChoice { atom: String },
    /// A composite choice already mentions the alternative it would split on.
    AlreadySplit { atom: String, alternative: String },
    /// A probability was requested for an agent-controlled atom that the
    /// caller did not condition on.
    UnconditionedAgentChoice { atom: String },
    /// prob_set needs pairwise-incompatible members to sum probabilities.
    NotExclusive,
}

impl fmt::Display for AbductionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbductionError::NotAtomicChoice { atom } => {
                write!(f, "atom '{atom}' is not an atomic choice")
            }
            AbductionError::AlreadySplit { atom, alternative } => write!(
                f,
                "composite choice already contains '{atom}' from alternative '{alternative}'"
            ),
            AbductionError::UnconditionedAgentChoice { atom } => write!(
                f,
                "agent choice '{atom}' has no probability; condition on it explicitly"
            ),
            AbductionError::NotExclusive => {
                write!(f, "explanation set is not pairwise incompatible; cannot sum")
            }
        }
    }
}

impl std::error::Error for AbductionError {}

/// True iff no alternative contributes two atoms to `kappa`.
pub fn consistent(theory: &Theory, kappa: &CompositeChoice) -> Result<bool, AbductionError> {
    let mut seen = BTreeSet::new();
    for &a in kappa {
        match theory.alternative_of(a) {
            Some(alt) => {
                if !seen.insert(alt) {
                    return Ok(false);
                }
            }
            None => {
                return Err(AbductionError::NotAtomicChoice { atom: theory.atom_text(a) })
            }
        }
    }
    Ok(true)
}

/// Union of two composite choices when consistent, `None` when they clash.
/// Both inputs are assumed to consist of atomic choices.
fn union_if_consistent(
    theory: &Theory,
    a: &CompositeChoice,
    b: &CompositeChoice,
) -> Option<CompositeChoice> {
    let union: CompositeChoice = a.union(b).copied().collect();
    let mut seen = BTreeSet::new();
    for &atom in &union {
        let alt = theory
            .alternative_of(atom)
            .expect("composite choices contain only atomic choices");
        if !seen.insert(alt) {
            return None;
        }
    }
    Some(union)
}

/// A minimal set of composite choices, with a verified flag recording
/// whether its members are pairwise incompatible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationSet {
    sets: BTreeSet<CompositeChoice>,
    exclusive: bool,
}

impl ExplanationSet {
    /// The empty set: explains nothing (an always-false formula).
    pub fn empty() -> Self {
        ExplanationSet { sets: BTreeSet::new(), exclusive: true }
    }

    /// The set containing the empty composite choice: explains `true` and
    /// is the identity of `combine`.
    pub fn tautology() -> Self {
        let mut sets = BTreeSet::new();
        sets.insert(CompositeChoice::new());
        ExplanationSet { sets, exclusive: true }
    }

    /// Build from arbitrary members: subsumption-minimize, then record
    /// whether the survivors are pairwise incompatible.
    pub fn new(theory: &Theory, members: BTreeSet<CompositeChoice>) -> Self {
        let sets = minimize(members);
        let exclusive = pairwise_incompatible(theory, &sets);
        ExplanationSet { sets, exclusive }
    }

    pub fn members(&self) -> &BTreeSet<CompositeChoice> {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Whether members are known pairwise incompatible (verified at
    /// construction, so the flag is trustworthy, not merely asserted).
    pub fn exclusive(&self) -> bool {
        self.exclusive
    }

    /// Indices of every alternative mentioned by any member atom.
    pub fn alternatives_mentioned(&self, theory: &Theory) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for kappa in &self.sets {
            for &a in kappa {
                if let Some(alt) = theory.alternative_of(a) {
                    out.insert(alt);
                }
            }
        }
        out
    }
}

/// Drop every member that is a superset of another member.
fn minimize(members: BTreeSet<CompositeChoice>) -> BTreeSet<CompositeChoice> {
    members
        .iter()
        .filter(|k| !members.iter().any(|other| other != *k && other.is_subset(k)))
        .cloned()
        .collect()
}

fn pairwise_incompatible(theory: &Theory, sets: &BTreeSet<CompositeChoice>) -> bool {
    let v: Vec<&CompositeChoice> = sets.iter().collect();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if union_if_consistent(theory, v[i], v[j]).is_some() {
                return false;
            }
        }
    }
    true
}

/// Pairwise consistent unions of members, minimized. The result explains
/// the conjunction of whatever the inputs explain.
pub fn combine(theory: &Theory, k1: &ExplanationSet, k2: &ExplanationSet) -> ExplanationSet {
    let mut members = BTreeSet::new();
    for a in &k1.sets {
        for b in &k2.sets {
            if let Some(u) = union_if_consistent(theory, a, b) {
                members.insert(u);
            }
        }
    }
    ExplanationSet::new(theory, members)
}

/// Union of two explanation sets, minimized. The result explains the
/// disjunction of whatever the inputs explain.
pub fn union(theory: &Theory, k1: &ExplanationSet, k2: &ExplanationSet) -> ExplanationSet {
    let mut members = k1.sets.clone();
    members.extend(k2.sets.iter().cloned());
    ExplanationSet::new(theory, members)
}

/// Refine `kappa` into one copy per atom of alternative `alt_index`.
/// The copies jointly cover exactly the worlds `kappa` covers.
pub fn split(
    theory: &Theory,
    kappa: &CompositeChoice,
    alt_index: usize,
) -> Result<BTreeSet<CompositeChoice>, AbductionError> {
    let alt = &theory.alternatives()[alt_index];
    if let Some(&present) = kappa.iter().find(|a| alt.atoms.contains(a)) {
        return Err(AbductionError::AlreadySplit {
            atom: theory.atom_text(present),
            alternative: alt.id.clone(),
        });
    }
    Ok(alt
        .atoms
        .iter()
        .map(|&c| {
            let mut k = kappa.clone();
            k.insert(c);
            k
        })
        .collect())
}

/// Split members until they are pairwise incompatible, preserving the
/// covered worlds. Deterministic: always refines the first jointly
/// consistent pair (in set order), splitting the member that lacks the
/// earliest-declared alternative mentioned by only one of the two.
pub fn make_exclusive(theory: &Theory, k: &ExplanationSet) -> ExplanationSet {
    let mut sets = k.sets.clone();
    loop {
        sets = minimize(sets);
        let v: Vec<CompositeChoice> = sets.iter().cloned().collect();
        let mut refined = None;
        'scan: for i in 0..v.len() {
            for j in i + 1..v.len() {
                if union_if_consistent(theory, &v[i], &v[j]).is_none() {
                    continue;
                }
                // Consistent and (being minimal) incomparable, so some
                // alternative is mentioned by exactly one of the two.
                let alts_of = |k: &CompositeChoice| -> BTreeSet<usize> {
                    k.iter().map(|&a| theory.alternative_of(a).unwrap()).collect()
                };
                let ai = alts_of(&v[i]);
                let aj = alts_of(&v[j]);
                let alt = ai
                    .symmetric_difference(&aj)
                    .min_by_key(|&&idx| theory.alternatives()[idx].decl_pos)
                    .copied()
                    .expect("distinct consistent members differ in some alternative");
                let target = if ai.contains(&alt) { &v[j] } else { &v[i] };
                let pieces = split(theory, target, alt)
                    .expect("split target chosen to lack the alternative");
                let mut next = sets.clone();
                next.remove(target);
                next.extend(pieces);
                refined = Some(next);
                break 'scan;
            }
        }
        match refined {
            Some(next) => sets = next,
            None => break,
        }
    }
    let out = ExplanationSet::new(theory, sets);
    debug_assert!(out.exclusive());
    out
}

/// Probability of a composite choice: product of nature probabilities.
/// Agent-controlled atoms must appear in `conditioning` and contribute 1.
pub fn prob(
    theory: &Theory,
    kappa: &CompositeChoice,
    conditioning: &BTreeSet<AtomId>,
) -> Result<f64, AbductionError> {
    let mut p = 1.0;
    for &a in kappa {
        if let Some(q) = theory.nature_prob(a) {
            p *= q;
        } else if theory.is_agent_choice(a) {
            if !conditioning.contains(&a) {
                return Err(AbductionError::UnconditionedAgentChoice {
                    atom: theory.atom_text(a),
                });
            }
        } else {
            return Err(AbductionError::NotAtomicChoice { atom: theory.atom_text(a) });
        }
    }
    Ok(p)
}

/// Sum of member probabilities; valid only for exclusive sets.
pub fn prob_set(
    theory: &Theory,
    k: &ExplanationSet,
    conditioning: &BTreeSet<AtomId>,
) -> Result<f64, AbductionError> {
    if !k.exclusive() {
        return Err(AbductionError::NotExclusive);
    }
    let mut total = 0.0;
    for kappa in &k.sets {
        total += prob(theory, kappa, conditioning)?;
    }
    Ok(total)
}

/// Render a composite choice as `{atom, atom}` in declaration order.
pub fn render_choice(theory: &Theory, kappa: &CompositeChoice) -> String {
    let names: Vec<String> = kappa.iter().map(|&a| theory.atom_text(a)).collect();
    format!("{{{}}}", names.join(", "))
}

/// Render an explanation set as `{{...}, {...}}`.
pub fn render_set(theory: &Theory, k: &ExplanationSet) -> String {
    let parts: Vec<String> = k.sets.iter().map(|kappa| render_choice(theory, kappa)).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Explanation computation with per-atom memoization.
///
/// The rule base must be acyclic (run validation first); a cycle would
/// recurse forever, so re-entry on an atom panics with a clear message.
pub struct Abductor<'t> {
    theory: &'t Theory,
    memo: Vec<Option<ExplanationSet>>,
    in_progress: Vec<bool>,
    undefined: BTreeSet<String>,
}

impl<'t> Abductor<'t> {
    pub fn new(theory: &'t Theory) -> Self {
        Abductor {
            theory,
            memo: vec![None; theory.atom_count()],
            in_progress: vec![false; theory.atom_count()],
            undefined: BTreeSet::new(),
        }
    }

    pub fn theory(&self) -> &'t Theory {
        self.theory
    }

    /// Names of atoms that were neither choices nor rule heads when their
    /// explanation was requested; each explains nothing (empty set).
    pub fn undefined_atoms(&self) -> &BTreeSet<String> {
        &self.undefined
    }

    /// Explanations of a single atom.
    pub fn atom(&mut self, g: AtomId) -> ExplanationSet {
        if let Some(done) = &self.memo[g.index()] {
            return done.clone();
        }
        assert!(
            !self.in_progress[g.index()],
            "rule base has a cycle through '{}'; validate the theory first",
            self.theory.atom_text(g)
        );
        self.in_progress[g.index()] = true;
        let result = if self.theory.is_choice(g) {
            let mut kappa = CompositeChoice::new();
            kappa.insert(g);
            let mut sets = BTreeSet::new();
            sets.insert(kappa);
            ExplanationSet { sets, exclusive: true }
        } else if self.theory.is_derived(g) {
            let mut acc = ExplanationSet::empty();
            for ri in self.theory.rules_with_head(g).to_vec() {
                let body = self.theory.rules()[ri as usize].body.clone();
                let of_body = self.body(&body);
                acc = union(self.theory, &acc, &of_body);
            }
            acc
        } else {
            self.undefined.insert(self.theory.atom_text(g));
            ExplanationSet::empty()
        };
        self.in_progress[g.index()] = false;
        self.memo[g.index()] = Some(result.clone());
        result
    }

    /// Explanations of a conjunction of atoms.
    pub fn body(&mut self, atoms: &[AtomId]) -> ExplanationSet {
        let mut acc = ExplanationSet::tautology();
        for &a in atoms {
            if acc.is_empty() {
                break;
            }
            let of_atom = self.atom(a);
            acc = combine(self.theory, &acc, &of_atom);
        }
        acc
    }

    /// Explanations of a formula; atoms never interned in the theory are
    /// undefined and explain nothing.
    pub fn formula(&mut self, f: &Formula) -> ExplanationSet {
        match f {
            Formula::True => ExplanationSet::tautology(),
            Formula::Atom(atom) => match self.theory.symbols().lookup(atom) {
                Some(id) => self.atom(id),
                None => {
                    self.undefined.insert(atom.to_string());
                    ExplanationSet::empty()
                }
            },
            Formula::And(l, r) => {
                let kl = self.formula(l);
                if kl.is_empty() {
                    return kl;
                }
                let kr = self.formula(r);
                combine(self.theory, &kl, &kr)
            }
            Formula::Or(l, r) => {
                let kl = self.formula(l);
                let kr = self.formula(r);
                union(self.theory, &kl, &kr)
            }
        }
    }

    /// Explanations of `utility(u)`: the disjunction over the bodies of
    /// every utility rule carrying exactly that value (bit equality).
    pub fn utility(&mut self, u: f64) -> ExplanationSet {
        let mut acc = ExplanationSet::empty();
        for ri in self.theory.utility_rule_indices().to_vec() {
            let rule = &self.theory.rules()[ri as usize];
            let matches = match rule.head {
                crate::model::RuleHead::Utility(v) => v.to_bits() == u.to_bits(),
                _ => false,
            };
            if matches {
                let body = rule.body.clone();
                let of_body = self.body(&body);
                acc = union(self.theory, &acc, &of_body);
            }
        }
        acc
    }
}
