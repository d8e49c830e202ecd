//! Possible-world semantics for a theory: selectors pick one atom per
//! alternative, the definite rule base closes the selection into a least
//! model, and utility rules score the resulting world.

use crate::model::{Atom, AtomId, RuleHead, Theory};
use std::fmt;

/// Propositional query over atoms. Atoms are kept in surface form so queries
/// may mention names unknown to the theory; unknown atoms are simply false.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Atom(Atom),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(text: &str) -> Formula {
        Formula::Atom(Atom::parse(text))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Formula {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Or(Box::new(lhs), Box::new(rhs))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::And(l, r) => write!(f, "({l} & {r})"),
            Formula::Or(l, r) => write!(f, "({l} | {r})"),
        }
    }
}

/// A total selection: for every alternative, the index of the chosen atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Selector {
    choices: Vec<u8>,
}

impl Selector {
    /// Build a selector from one chosen atom per alternative, in any order.
    pub fn from_atoms(theory: &Theory, atoms: &[AtomId]) -> Result<Selector, EngineError> {
        let mut choices: Vec<Option<u8>> = vec![None; theory.alternatives().len()];
        for &atom in atoms {
            let alt = theory
                .alternative_of(atom)
                .ok_or_else(|| EngineError::NotAChoice(theory.atom_text(atom)))?;
            let pos = theory.alternatives()[alt]
                .atoms
                .iter()
                .position(|&a| a == atom)
                .expect("atom listed in its alternative");
            if let Some(prev) = choices[alt] {
                if prev as usize != pos {
                    return Err(EngineError::ConflictingSelection {
                        alternative: theory.alternatives()[alt].id.clone(),
                    });
                }
            }
            choices[alt] = Some(pos as u8);
        }
        let mut out = Vec::with_capacity(choices.len());
        for (i, c) in choices.into_iter().enumerate() {
            match c {
                Some(pos) => out.push(pos),
                None => {
                    return Err(EngineError::IncompleteSelection {
                        alternative: theory.alternatives()[i].id.clone(),
                    })
                }
            }
        }
        Ok(Selector { choices: out })
    }

    pub fn chosen(&self, theory: &Theory, alternative: usize) -> AtomId {
        theory.alternatives()[alternative].atoms[self.choices[alternative] as usize]
    }

    pub fn chosen_position(&self, alternative: usize) -> u8 {
        self.choices[alternative]
    }

    pub fn chosen_atoms<'t>(&self, theory: &'t Theory) -> Vec<AtomId> {
        (0..self.choices.len()).map(|i| self.chosen(theory, i)).collect()
    }
}

#[derive(Debug, Clone)]
pub enum EngineError {
    CyclicProgram { cycle: Vec<String> },
    NotAChoice(String),
    ConflictingSelection { alternative: String },
    IncompleteSelection { alternative: String },
    UtilityIncomplete { world: String },
    UtilityInconsistent { world: String, values: Vec<f64> },
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::CyclicProgram { cycle } => {
                write!(f, "rule base is cyclic: {}", cycle.join(" -> "))
            }
            EngineError::NotAChoice(atom) => {
                write!(f, "atom '{atom}' is not an atomic choice")
            }
            EngineError::ConflictingSelection { alternative } => {
                write!(f, "two atoms selected from alternative '{alternative}'")
            }
            EngineError::IncompleteSelection { alternative } => {
                write!(f, "no atom selected from alternative '{alternative}'")
            }
            EngineError::UtilityIncomplete { world } => {
                write!(f, "no utility derived in world {world}")
            }
            EngineError::UtilityInconsistent { world, values } => {
                write!(f, "distinct utilities {values:?} derived in world {world}")
            }
        }
    }
}

impl std::error::Error for EngineError {}

/// Topological order of the atom dependency graph (rule body before head),
/// ties broken by declaration order. Fails with a witness cycle when the
/// rule base is not acyclic.
pub fn acyclic_order(theory: &Theory) -> Result<Vec<AtomId>, EngineError> {
    let n = theory.atom_count();
    let mut edges: Vec<Vec<u32>> = vec![Vec::new(); n];
    for rule in theory.rules() {
        if let RuleHead::Derived(head) = rule.head {
            for &b in &rule.body {
                edges[b.index()].push(head.0);
            }
        }
    }
    topo_order(n, &edges).map_err(|cycle| EngineError::CyclicProgram {
        cycle: cycle.iter().map(|&a| theory.atom_text(AtomId(a))).collect(),
    })
}

/// Kahn's algorithm over `edges[u] -> v` meaning "u precedes v"; on failure
/// returns a cycle starting from its smallest member.
pub(crate) fn topo_order(n: usize, edges: &[Vec<u32>]) -> Result<Vec<AtomId>, Vec<u32>> {
    let mut indegree = vec![0usize; n];
    for out in edges {
        for &v in out {
            indegree[v as usize] += 1;
        }
    }
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<u32>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| std::cmp::Reverse(i as u32))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(u)) = ready.pop() {
        order.push(AtomId(u));
        for &v in &edges[u as usize] {
            indegree[v as usize] -= 1;
            if indegree[v as usize] == 0 {
                ready.push(std::cmp::Reverse(v));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Walk forward through still-blocked nodes until a node repeats.
    let blocked: Vec<u32> = (0..n as u32).filter(|&i| indegree[i as usize] > 0).collect();
    let start = blocked[0];
    let mut path = vec![start];
    let mut seen = std::collections::BTreeSet::from([start]);
    let mut current = start;
    loop {
        let next = edges[current as usize]
            .iter()
            .copied()
            .find(|v| indegree[*v as usize] > 0)
            .expect("blocked node has a blocked successor");
        if seen.contains(&next) {
            let cycle_start = path.iter().position(|&p| p == next).unwrap();
            let mut cycle: Vec<u32> = path[cycle_start..].to_vec();
            let min_pos = cycle
                .iter()
                .enumerate()
                .min_by_key(|(_, &v)| v)
                .map(|(i, _)| i)
                .unwrap();
            cycle.rotate_left(min_pos);
            return Err(cycle);
        }
        seen.insert(next);
        path.push(next);
        current = next;
    }
}

/// Truth assignment for every atom: the least model of the rule base plus
/// the given true atomic choices.
pub(crate) fn least_model_of_choices(theory: &Theory, chosen: &[AtomId]) -> Vec<bool> {
    let mut truth = vec![false; theory.atom_count()];
    for &a in chosen {
        truth[a.index()] = true;
    }
    // Definite program: iterate to fixpoint. Rule bases here are small and
    // acyclic, so a handful of passes suffices.
    loop {
        let mut changed = false;
        for rule in theory.rules() {
            if let RuleHead::Derived(head) = rule.head {
                if !truth[head.index()] && rule.body.iter().all(|b| truth[b.index()]) {
                    truth[head.index()] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return truth;
        }
    }
}

pub(crate) fn eval_formula(theory: &Theory, truth: &[bool], formula: &Formula) -> bool {
    match formula {
        Formula::True => true,
        Formula::Atom(a) => theory
            .symbols()
            .lookup(a)
            .map(|id| truth[id.index()])
            .unwrap_or(false),
        Formula::And(l, r) => {
            eval_formula(theory, truth, l) && eval_formula(theory, truth, r)
        }
        Formula::Or(l, r) => eval_formula(theory, truth, l) || eval_formula(theory, truth, r),
    }
}

/// Whether the formula holds in the world identified by the selector.
pub fn truth(theory: &Theory, selector: &Selector, formula: &Formula) -> bool {
    let model = least_model_of_choices(theory, &selector.chosen_atoms(theory));
    eval_formula(theory, &model, formula)
}

/// Whether the rule base plus a (possibly partial) set of atomic choices
/// entails the formula. Monotone in the choice set for definite programs.
pub fn entails(theory: &Theory, choices: &[AtomId], formula: &Formula) -> bool {
    let model = least_model_of_choices(theory, choices);
    eval_formula(theory, &model, formula)
}

fn describe_selector(theory: &Theory, selector: &Selector) -> String {
    let atoms: Vec<String> = selector
        .chosen_atoms(theory)
        .iter()
        .map(|&a| theory.atom_text(a))
        .collect();
    format!("{{{}}}", atoms.join(", "))
}

pub(crate) fn utility_of_model(
    theory: &Theory,
    truth: &[bool],
    world: impl Fn() -> String,
) -> Result<f64, EngineError> {
    let mut values: Vec<f64> = Vec::new();
    for &ri in theory.utility_rule_indices() {
        let rule = &theory.rules()[ri as usize];
        if rule.body.iter().all(|b| truth[b.index()]) {
            if let RuleHead::Utility(u) = rule.head {
                if !values.iter().any(|v| v.to_bits() == u.to_bits()) {
                    values.push(u);
                }
            }
        }
    }
    match values.len() {
        0 => Err(EngineError::UtilityIncomplete { world: world() }),
        1 => Ok(values[0]),
        _ => Err(EngineError::UtilityInconsistent { world: world(), values }),
    }
}

/// The unique utility of the world identified by the selector.
pub fn world_utility(theory: &Theory, selector: &Selector) -> Result<f64, EngineError> {
    let model = least_model_of_choices(theory, &selector.chosen_atoms(theory));
    utility_of_model(theory, &model, || describe_selector(theory, selector))
}

/// Iterator over every selector, in lexicographic order over alternatives in
/// declaration order (the last-declared alternative cycles fastest).
pub struct Selectors<'t> {
    theory: &'t Theory,
    next: Option<Vec<u8>>,
}

impl<'t> Iterator for Selectors<'t> {
    type Item = Selector;

    fn next(&mut self) -> Option<Selector> {
        let current = self.next.clone()?;
        let sizes: Vec<usize> =
            self.theory.alternatives().iter().map(|a| a.atoms.len()).collect();
        let mut bumped = current.clone();
        let mut i = bumped.len();
        loop {
            if i == 0 {
                self.next = None;
                break;
            }
            i -= 1;
            if (bumped[i] as usize) + 1 < sizes[i] {
                bumped[i] += 1;
                for later in bumped.iter_mut().skip(i + 1) {
                    *later = 0;
                }
                self.next = Some(bumped);
                break;
            }
        }
        Some(Selector { choices: current })
    }
}

/// Enumerate all possible worlds of the theory.
pub fn enumerate_worlds(theory: &Theory) -> Selectors<'_> {
    Selectors { theory, next: Some(vec![0; theory.alternatives().len()]) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parse::parse_theory;

    fn two_sensor() -> Theory {
        parse_theory(fixtures::TWO_SENSOR).unwrap()
    }

    fn selector(theory: &Theory, atoms: &[&str]) -> Selector {
        let ids: Vec<AtomId> = atoms
            .iter()
            .map(|t| theory.symbols().lookup(&Atom::parse(t)).unwrap())
            .collect();
        Selector::from_atoms(theory, &ids).unwrap()
    }

    #[test]
    fn ordering_puts_bodies_before_heads() {
        let t = two_sensor();
        let order = acyclic_order(&t).unwrap();
        let pos = |text: &str| {
            let id = t.symbols().lookup(&Atom::parse(text)).unwrap();
            order.iter().position(|&a| a == id).unwrap()
        };
        assert!(pos("b(pos)") < pos("bs(pos)"));
        assert!(pos("true_pos") < pos("bs(pos)"));
        assert!(pos("ta(hi)") < pos("as(neg)"));
    }

    #[test]
    fn empty_theory_has_empty_order_and_one_world() {
        let t = parse_theory("").unwrap();
        assert!(acyclic_order(&t).unwrap().is_empty());
        assert_eq!(enumerate_worlds(&t).count(), 1);
    }

    #[test]
    fn cyclic_rules_report_the_cycle() {
        let t = parse_theory("p <- q.\nq <- p.").unwrap();
        match acyclic_order(&t) {
            Err(EngineError::CyclicProgram { cycle }) => {
                assert_eq!(cycle, vec!["p".to_string(), "q".to_string()]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn truth_follows_the_least_model() {
        let t = two_sensor();
        let w = selector(
            &t,
            &["a(hi)", "b(pos)", "true_neg", "true_pos", "ta(hi)", "d(1)"],
        );
        assert!(truth(&t, &w, &Formula::atom("bs(pos)")));
        assert!(truth(&t, &w, &Formula::atom("as(pos)")));
        assert!(!truth(&t, &w, &Formula::atom("as(neg)")));
        assert!(!truth(&t, &w, &Formula::atom("unheard_of")));
        assert!(truth(&t, &w, &Formula::True));
    }

    #[test]
    fn utility_is_unique_per_world() {
        let t = two_sensor();
        // Whatever the sensor noise, a(hi) with d(1) scores 10.
        for n1 in ["false_pos", "true_neg"] {
            for n2 in ["false_neg", "true_pos"] {
                let w = selector(&t, &["a(hi)", "b(pos)", n1, n2, "ta(hi)", "d(1)"]);
                assert_eq!(world_utility(&t, &w).unwrap(), 10.0);
            }
        }
        let w = selector(
            &t,
            &["a(med)", "b(neg)", "true_neg", "true_pos", "ta(lo)", "d(2)"],
        );
        assert_eq!(world_utility(&t, &w).unwrap(), 8.0);
    }

    #[test]
    fn missing_utility_is_reported() {
        let t = parse_theory("nature n { x: 0.5, y: 0.5 }.\nutility(1) <- x.").unwrap();
        let w = selector(&t, &["y"]);
        assert!(matches!(
            world_utility(&t, &w),
            Err(EngineError::UtilityIncomplete { .. })
        ));
    }

    #[test]
    fn world_enumeration_counts_products() {
        let t = two_sensor();
        assert_eq!(enumerate_worlds(&t).count(), 144);
        let t = parse_theory("nature n { x: 0.5, y: 0.5 }.").unwrap();
        assert_eq!(enumerate_worlds(&t).count(), 2);
    }

    #[test]
    fn entailment_is_monotone_in_the_choice_set() {
        let t = two_sensor();
        let b_pos = t.symbols().lookup(&Atom::parse("b(pos)")).unwrap();
        let tp = t.symbols().lookup(&Atom::parse("true_pos")).unwrap();
        let a_hi = t.symbols().lookup(&Atom::parse("a(hi)")).unwrap();
        let goal = Formula::atom("bs(pos)");
        assert!(!entails(&t, &[b_pos], &goal));
        assert!(entails(&t, &[b_pos, tp], &goal));
        assert!(entails(&t, &[b_pos, tp, a_hi], &goal));
    }
}
