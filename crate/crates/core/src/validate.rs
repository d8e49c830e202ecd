//! Static and semantic validation of a theory.
//!
//! Static checks are purely structural. Semantic checks enumerate possible
//! worlds to confirm that every world derives exactly one utility value and
//! exactly one atom per observation alternative; they are skipped (with a
//! warning) when the world count exceeds the configured bound.

use crate::engine::{self, topo_order};
use crate::model::{AlternativeKind, AtomId, BlockRef, RuleHead, Theory};
use std::collections::BTreeSet;
use std::fmt;

pub const DEFAULT_PROB_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_WORLDS: u128 = 1 << 20;

/// Machine-readable category of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    EmptyAlternative,
    OverlappingAlternatives,
    ProbRange,
    ProbSum,
    AtomicChoiceHead,
    RuleCycle,
    ObservationCycle,
    NoForgetting,
    DanglingObserves,
    UndefinedObservableAtom,
    UndefinedAtom,
    NoUtilityRules,
    UtilityIncomplete,
    UtilityInconsistent,
    ObservationInconsistent,
    ObservationIncomplete,
    SemanticSkipped,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::EmptyAlternative => "EMPTY_ALTERNATIVE",
            Code::OverlappingAlternatives => "OVERLAPPING_ALTERNATIVES",
            Code::ProbRange => "PROB_RANGE",
            Code::ProbSum => "PROB_SUM",
            Code::AtomicChoiceHead => "ATOMIC_CHOICE_HEAD",
            Code::RuleCycle => "RULE_CYCLE",
            Code::ObservationCycle => "OBSERVATION_CYCLE",
            Code::NoForgetting => "NO_FORGETTING",
            Code::DanglingObserves => "DANGLING_OBSERVES",
            Code::UndefinedObservableAtom => "UNDEFINED_OBSERVABLE_ATOM",
            Code::UndefinedAtom => "UNDEFINED_ATOM",
            Code::NoUtilityRules => "NO_UTILITY_RULES",
            Code::UtilityIncomplete => "UTILITY_INCOMPLETE",
            Code::UtilityInconsistent => "UTILITY_INCONSISTENT",
            Code::ObservationInconsistent => "OBSERVATION_INCONSISTENT",
            Code::ObservationIncomplete => "OBSERVATION_INCOMPLETE",
            Code::SemanticSkipped => "SEMANTIC_SKIPPED",
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One validation finding, tied to a block or rule where possible.
#[derive(Debug, Clone)]
pub struct Finding {
    pub code: Code,
    pub message: String,
    pub location: Option<String>,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Some(loc) => write!(f, "[{}] {}: {}", self.code, loc, self.message),
            None => write!(f, "[{}] {}", self.code, self.message),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
    pub semantic_checks_run: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: Code) -> bool {
        self.errors.iter().any(|f| f.code == code)
    }

    pub fn has_warning(&self, code: Code) -> bool {
        self.warnings.iter().any(|f| f.code == code)
    }

    fn error(&mut self, code: Code, location: Option<String>, message: String) {
        self.errors.push(Finding { code, message, location });
    }

    fn warning(&mut self, code: Code, location: Option<String>, message: String) {
        self.warnings.push(Finding { code, message, location });
    }
}

/// Structural validation: block well-formedness, probability sums, choice
/// atoms never appearing as rule heads, acyclicity (including the ordering
/// constraint that observed atoms precede the atoms of the observing
/// decision), the no-forgetting total ordering of decisions, and resolvable
/// observes references.
pub fn validate_static(theory: &Theory, prob_tolerance: f64) -> ValidationReport {
    let mut report = ValidationReport::default();

    for alt in theory.alternatives() {
        let loc = Some(format!("alternative '{}'", alt.id));
        if alt.atoms.is_empty() {
            report.error(Code::EmptyAlternative, loc.clone(), "no atoms".into());
        }
        let mut seen = BTreeSet::new();
        for &a in &alt.atoms {
            if !seen.insert(a) {
                report.error(
                    Code::OverlappingAlternatives,
                    loc.clone(),
                    format!("atom '{}' repeated", theory.atom_text(a)),
                );
            }
        }
        if let AlternativeKind::Nature { probs } = &alt.kind {
            for (&a, &p) in alt.atoms.iter().zip(probs) {
                if !(0.0..=1.0).contains(&p) {
                    report.error(
                        Code::ProbRange,
                        loc.clone(),
                        format!("probability {} of '{}' outside [0, 1]", p, theory.atom_text(a)),
                    );
                }
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > prob_tolerance {
                report.error(
                    Code::ProbSum,
                    loc.clone(),
                    format!("probabilities sum to {sum}"),
                );
            }
        }
    }

    // Overlap across alternatives. Within-block duplicates were reported
    // above; here the same atom claimed by two different blocks.
    for (i, alt) in theory.alternatives().iter().enumerate() {
        for &a in &alt.atoms {
            if let Some(owner) = theory.alternative_of(a) {
                if owner != i {
                    report.error(
                        Code::OverlappingAlternatives,
                        Some(format!("alternative '{}'", alt.id)),
                        format!(
                            "atom '{}' also belongs to alternative '{}'",
                            theory.atom_text(a),
                            theory.alternatives()[owner].id
                        ),
                    );
                }
            }
        }
    }

    for (ri, rule) in theory.rules().iter().enumerate() {
        if let RuleHead::Derived(h) = rule.head {
            if theory.is_choice(h) {
                report.error(
                    Code::AtomicChoiceHead,
                    Some(format!("rule {}", ri + 1)),
                    format!("head '{}' is an atomic choice", theory.atom_text(h)),
                );
            }
        }
        for &b in &rule.body {
            if !theory.is_choice(b) && !theory.is_derived(b) {
                report.warning(
                    Code::UndefinedAtom,
                    Some(format!("rule {}", ri + 1)),
                    format!(
                        "body atom '{}' is neither a choice nor a rule head",
                        theory.atom_text(b)
                    ),
                );
            }
        }
    }

    for obs in theory.observables() {
        for &a in &obs.atoms {
            if !theory.is_choice(a) && !theory.is_derived(a) {
                report.error(
                    Code::UndefinedObservableAtom,
                    Some(format!("observable '{}'", obs.id)),
                    format!(
                        "atom '{}' is neither a choice nor a rule head",
                        theory.atom_text(a)
                    ),
                );
            }
        }
    }

    let mut observes_resolved = true;
    for (idx, alt) in theory.decisions() {
        for reference in alt.observes() {
            if theory.block_by_id(reference).is_none() {
                observes_resolved = false;
                report.error(
                    Code::DanglingObserves,
                    Some(format!("decision '{}'", alt.id)),
                    format!("observes unknown block '{reference}'"),
                );
            }
        }
        let _ = idx;
    }

    // Acyclicity of the rule graph alone, then of the rule graph extended
    // with observation edges (observed atom before deciding atom).
    let n = theory.atom_count();
    let mut rule_edges: Vec<Vec<u32>> = vec![Vec::new(); n];
    for rule in theory.rules() {
        if let RuleHead::Derived(head) = rule.head {
            for &b in &rule.body {
                rule_edges[b.index()].push(head.0);
            }
        }
    }
    let rule_graph_ok = match topo_order(n, &rule_edges) {
        Ok(_) => true,
        Err(cycle) => {
            let names: Vec<String> =
                cycle.iter().map(|&a| theory.atom_text(AtomId(a))).collect();
            report.error(Code::RuleCycle, None, format!("cycle: {}", names.join(" -> ")));
            false
        }
    };
    if rule_graph_ok && observes_resolved {
        let mut extended = rule_edges;
        for (idx, alt) in theory.decisions() {
            if let Ok(blocks) = theory.observed_blocks(idx) {
                for block in blocks {
                    for &obs_atom in theory.block_atoms(block) {
                        for &dec_atom in &alt.atoms {
                            extended[obs_atom.index()].push(dec_atom.0);
                        }
                    }
                }
            }
        }
        if let Err(cycle) = topo_order(n, &extended) {
            let names: Vec<String> =
                cycle.iter().map(|&a| theory.atom_text(AtomId(a))).collect();
            report.error(
                Code::ObservationCycle,
                None,
                format!(
                    "observed atoms cannot all precede their decisions: {}",
                    names.join(" -> ")
                ),
            );
        }
    }

    if observes_resolved {
        if let Err(e) = theory.decision_order() {
            report.error(Code::NoForgetting, None, e.to_string());
        }
    }

    report
}

/// Bounded whole-theory checks by world enumeration: unique utility value
/// per world (when the theory has utility rules at all) and exactly one true
/// atom per observation alternative per world.
pub fn validate_semantic(theory: &Theory, max_worlds: u128) -> ValidationReport {
    let mut report = ValidationReport::default();
    let count = theory.world_count();
    if count > max_worlds {
        report.warning(
            Code::SemanticSkipped,
            None,
            format!("{count} worlds exceed the bound of {max_worlds}; semantic checks skipped"),
        );
        return report;
    }
    report.semantic_checks_run = true;

    let has_utility = !theory.utility_rule_indices().is_empty();
    if !has_utility {
        report.warning(
            Code::NoUtilityRules,
            None,
            "theory has no utility rules; utility completeness not applicable".into(),
        );
    }
    let obs_blocks: Vec<BlockRef> = theory.effective_observation_blocks();

    // Report each failure category once per location, with a witness world
    // and a total count, rather than once per world.
    struct Tally {
        first_witness: String,
        count: usize,
    }
    let mut incomplete: Option<Tally> = None;
    let mut inconsistent: Option<(Tally, Vec<f64>)> = None;
    let mut obs_bad: Vec<(Code, BlockRef, Tally)> = Vec::new();

    for selector in engine::enumerate_worlds(theory) {
        let chosen = selector.chosen_atoms(theory);
        let model = crate::engine::least_model_of_choices(theory, &chosen);
        let describe = || {
            let names: Vec<String> = chosen.iter().map(|&a| theory.atom_text(a)).collect();
            format!("{{{}}}", names.join(", "))
        };
        if has_utility {
            match crate::engine::utility_of_model(theory, &model, describe) {
                Ok(_) => {}
                Err(crate::engine::EngineError::UtilityIncomplete { world }) => {
                    match &mut incomplete {
                        Some(t) => t.count += 1,
                        None => incomplete = Some(Tally { first_witness: world, count: 1 }),
                    }
                }
                Err(crate::engine::EngineError::UtilityInconsistent { world, values }) => {
                    match &mut inconsistent {
                        Some((t, _)) => t.count += 1,
                        None => {
                            inconsistent =
                                Some((Tally { first_witness: world, count: 1 }, values))
                        }
                    }
                }
                Err(_) => unreachable!("utility evaluation yields only utility errors"),
            }
        }
        for &block in &obs_blocks {
            let true_atoms =
                theory.block_atoms(block).iter().filter(|a| model[a.index()]).count();
            let code = match true_atoms {
                0 => Code::ObservationIncomplete,
                1 => continue,
                _ => Code::ObservationInconsistent,
            };
            match obs_bad.iter_mut().find(|(c, b, _)| *c == code && *b == block) {
                Some((_, _, t)) => t.count += 1,
                None => {
                    obs_bad.push((code, block, Tally { first_witness: describe(), count: 1 }))
                }
            }
        }
    }

    if let Some(t) = incomplete {
        report.error(
            Code::UtilityIncomplete,
            None,
            format!("no utility derived in {} world(s), e.g. {}", t.count, t.first_witness),
        );
    }
    if let Some((t, values)) = inconsistent {
        report.error(
            Code::UtilityInconsistent,
            None,
            format!(
                "distinct utilities (e.g. {values:?}) derived in {} world(s), e.g. {}",
                t.count, t.first_witness
            ),
        );
    }
    for (code, block, t) in obs_bad {
        let what = if code == Code::ObservationIncomplete { "no atom" } else { "several atoms" };
        report.error(
            code,
            Some(format!("observable '{}'", theory.block_id(block))),
            format!("{} true in {} world(s), e.g. {}", what, t.count, t.first_witness),
        );
    }
    report
}

/// Run static validation followed, when static checks pass, by semantic
/// validation; findings are merged into one report.
pub fn validate(theory: &Theory, prob_tolerance: f64, max_worlds: u128) -> ValidationReport {
    let mut report = validate_static(theory, prob_tolerance);
    if report.is_ok() {
        let semantic = validate_semantic(theory, max_worlds);
        report.errors.extend(semantic.errors);
        report.warnings.extend(semantic.warnings);
        report.semantic_checks_run = semantic.semantic_checks_run;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parse::parse_theory;

    fn check(src: &str) -> ValidationReport {
        validate(&parse_theory(src).unwrap(), DEFAULT_PROB_TOLERANCE, DEFAULT_MAX_WORLDS)
    }

    #[test]
    fn fixtures_validate_cleanly() {
        for src in [fixtures::TWO_SENSOR, fixtures::FULLY_OBSERVABLE] {
            let report = check(src);
            assert!(report.is_ok(), "unexpected errors: {:?}", report.errors);
            assert!(report.semantic_checks_run);
            assert!(report.warnings.is_empty(), "unexpected warnings: {:?}", report.warnings);
        }
    }

    #[test]
    fn empty_theory_validates_with_only_a_vacuous_utility_warning() {
        let report = check("");
        assert!(report.is_ok());
        assert!(report.has_warning(Code::NoUtilityRules));
    }

    #[test]
    fn choice_atom_as_rule_head_rejected() {
        let report = check("nature n { x: 0.5, y: 0.5 }.\nx <- y.\nutility(1) <- x.");
        assert!(report.has_error(Code::AtomicChoiceHead));
    }

    #[test]
    fn probability_sum_outside_tolerance_rejected() {
        let report = check("nature n { x: 0.5, y: 0.6 }.\nutility(1) <- x.\nutility(0) <- y.");
        assert!(report.has_error(Code::ProbSum));
    }

    #[test]
    fn rule_cycles_rejected() {
        let report = check("p <- q.\nq <- p.\nutility(1) <- p.\nutility(0).");
        assert!(report.has_error(Code::RuleCycle));
    }

    #[test]
    fn observing_something_downstream_of_the_decision_rejected() {
        // x depends on the decision's own atom, so x cannot precede it.
        let src = "\
observable o { x, y }.
decision d { go, stay } observes { o }.
x <- go.
y <- stay.
utility(1) <- x.
utility(0) <- y.
";
        let report = check(src);
        assert!(report.has_error(Code::ObservationCycle));
        assert!(!report.has_error(Code::RuleCycle));
    }

    #[test]
    fn dangling_observes_reported() {
        let report =
            check("decision d { go, stay } observes { ghost }.\nutility(1) <- go.\nutility(0) <- stay.");
        assert!(report.has_error(Code::DanglingObserves));
    }

    #[test]
    fn forgetting_an_observation_breaks_the_decision_order() {
        let src = "\
nature n { n1: 0.5, n2: 0.5 }.
decision d1 { x1, x2 } observes { n }.
decision d2 { y1, y2 } observes { d1 }.
utility(1) <- x1 & y1.
utility(0) <- x2.
utility(0) <- x1 & y2.
";
        let report = validate_static(&parse_theory(src).unwrap(), DEFAULT_PROB_TOLERANCE);
        assert!(report.has_error(Code::NoForgetting));
    }

    #[test]
    fn missing_utility_rule_detected_semantically() {
        let src = fixtures::TWO_SENSOR.replace("utility(4) <- d(0).\n", "");
        let report = check(&src);
        assert!(report.has_error(Code::UtilityIncomplete));
    }

    #[test]
    fn overlapping_observation_readings_detected() {
        let report = check("observable o { p, q }.\np.\nq.\nutility(1).");
        assert!(report.has_error(Code::ObservationInconsistent));
    }

    #[test]
    fn silent_observable_detected() {
        let report = check("nature n { x: 0.5, y: 0.5 }.\nobservable o { p, q }.\np <- x.\nq <- x.\nutility(1).");
        assert!(report.has_error(Code::ObservationIncomplete));
    }

    #[test]
    fn world_bound_skips_semantic_checks_with_warning() {
        let t = parse_theory(fixtures::TWO_SENSOR).unwrap();
        let report = validate_semantic(&t, 100);
        assert!(!report.semantic_checks_run);
        assert!(report.has_warning(Code::SemanticSkipped));
    }

    #[test]
    fn undefined_body_atom_is_a_warning_not_an_error() {
        let report = check("nature n { x: 1 }.\np <- ghost.\nutility(1).");
        assert!(report.is_ok());
        assert!(report.has_warning(Code::UndefinedAtom));
    }
}
