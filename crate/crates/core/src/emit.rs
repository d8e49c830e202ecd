//! Rendering and parsing of solver output: policy JSON, policy text, and
//! the strategy file format consumed by `evaluate`.
//!
//! A strategy file holds one line per policy entry, `decision: atom, atom
//! -> action`, plus one `decision: default -> action` line per decision;
//! earlier lines win overlaps. Rendering a solved policy and parsing it
//! back yields the same substitution the solver performed, so the
//! evaluated value reproduces the solved value bit for bit.

use crate::model::{Atom, AtomId, Theory};
use crate::parse::fmt_number;
use crate::solver::{
    render_condition, Condition, DecisionStrategy, SolveResult,
};
use serde_json::{json, Value};

/// A finite number rounded to at most 12 significant digits, as a JSON
/// value; integral results become integers.
pub fn json_number(x: f64) -> Value {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    if rounded.fract() == 0.0 && rounded.abs() < 9.0e15 {
        json!(rounded as i64)
    } else {
        json!(rounded)
    }
}

/// Deterministic JSON for a solve result: decisions in solving order,
/// object keys sorted, numbers limited to 12 significant digits.
pub fn policy_json(theory: &Theory, result: &SolveResult) -> String {
    let decisions: Vec<Value> = result
        .policies
        .iter()
        .map(|p| {
            let entries: Vec<Value> = p
                .entries
                .iter()
                .map(|e| {
                    let condition: Vec<String> =
                        e.condition.values().map(|&a| theory.atom_text(a)).collect();
                    json!({
                        "action": theory.atom_text(e.action),
                        "condition": condition,
                        "expected_utility": json_number(e.value),
                    })
                })
                .collect();
            json!({
                "id": p.decision,
                "entries": entries,
                "indifferent_default": theory.atom_text(p.default_action),
            })
        })
        .collect();
    let doc = json!({ "decisions": decisions, "value": json_number(result.value) });
    let mut out = doc.to_string();
    out.push('\n');
    out
}

/// Human-readable policy: one `<action, {condition}, value>` tuple per
/// entry, indifferent regions, the default action, per-decision work
/// counts, and the overall value.
pub fn render_policy_text(theory: &Theory, result: &SolveResult) -> String {
    let mut out = String::new();
    for (p, s) in result.policies.iter().zip(&result.stats) {
        out.push_str(&format!("decision {}:\n", p.decision));
        for e in &p.entries {
            out.push_str(&format!(
                "  <{}, {}, {}>\n",
                theory.atom_text(e.action),
                render_condition(theory, &e.condition),
                fmt_number(e.value)
            ));
        }
        for (kappa, u) in &p.indifferent {
            let names: Vec<String> =
                kappa.iter().map(|&a| theory.atom_text(a)).collect();
            out.push_str(&format!(
                "  indifferent on {{{}}} (utility {})\n",
                names.join(", "),
                fmt_number(*u)
            ));
        }
        out.push_str(&format!(
            "  default: {}\n",
            theory.atom_text(p.default_action)
        ));
        out.push_str(&format!(
            "  work: {} initial, {} expanded, {} groups, {} entries\n",
            s.initial_tuples, s.expanded_tuples, s.expectation_groups, s.entries
        ));
    }
    out.push_str(&format!("value: {}\n", fmt_number(result.value)));
    out
}

/// The solved policies as a strategy file, sections in decision
/// declaration order, entries in policy order so that re-parsing yields
/// the solver's own substitution.
pub fn render_strategy(theory: &Theory, result: &SolveResult) -> String {
    let mut out = String::new();
    for (_, alt) in theory.decisions() {
        let policy = result
            .policies
            .iter()
            .find(|p| p.decision == alt.id)
            .expect("every decision is solved");
        for e in &policy.entries {
            if e.condition.is_empty() {
                continue;
            }
            let atoms: Vec<String> =
                e.condition.values().map(|&a| theory.atom_text(a)).collect();
            out.push_str(&format!(
                "{}: {} -> {}\n",
                policy.decision,
                atoms.join(", "),
                theory.atom_text(e.action)
            ));
        }
        out.push_str(&format!(
            "{}: default -> {}\n",
            policy.decision,
            theory.atom_text(policy.default_action)
        ));
    }
    out
}

fn resolve_atom(theory: &Theory, text: &str, line_no: usize) -> Result<AtomId, String> {
    theory
        .symbols()
        .lookup(&Atom::parse(text))
        .ok_or_else(|| format!("line {line_no}: unknown atom '{text}'"))
}

/// Parse a strategy file against a theory. Lines are `decision: atom, atom
/// -> action` or `decision: default -> action`; `%` starts a comment.
/// Sections may interleave; entries keep file order. A decision without a
/// default line defaults to its first declared atom.
pub fn parse_strategy(theory: &Theory, text: &str) -> Result<Vec<DecisionStrategy>, String> {
    struct Section {
        entries: Vec<(Condition, AtomId)>,
        default_action: Option<AtomId>,
    }
    let mut sections: Vec<(String, Section)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('%') {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once(':')
            .ok_or_else(|| format!("line {line_no}: expected 'decision: ... -> action'"))?;
        let id = id.trim();
        let (lhs, action_text) = rest
            .split_once("->")
            .ok_or_else(|| format!("line {line_no}: expected '->' in strategy line"))?;
        let lhs = lhs.trim();
        let action_text = action_text.trim();

        let decision = theory
            .decisions()
            .find(|(_, alt)| alt.id == id)
            .map(|(idx, _)| idx)
            .ok_or_else(|| format!("line {line_no}: unknown decision '{id}'"))?;
        let action = resolve_atom(theory, action_text, line_no)?;
        if !theory.alternatives()[decision].atoms.contains(&action) {
            return Err(format!(
                "line {line_no}: '{action_text}' is not an atom of decision '{id}'"
            ));
        }

        let section = match sections.iter_mut().find(|(name, _)| name == id) {
            Some((_, s)) => s,
            None => {
                sections.push((
                    id.to_string(),
                    Section { entries: Vec::new(), default_action: None },
                ));
                &mut sections.last_mut().unwrap().1
            }
        };

        if lhs == "default" {
            if section.default_action.is_some() {
                return Err(format!(
                    "line {line_no}: duplicate default for decision '{id}'"
                ));
            }
            section.default_action = Some(action);
            continue;
        }

        let observed = theory
            .observed_blocks(decision)
            .map_err(|e| format!("line {line_no}: {e}"))?;
        let mut condition = Condition::new();
        for part in lhs.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err(format!("line {line_no}: empty condition atom"));
            }
            let atom = resolve_atom(theory, part, line_no)?;
            let block = observed
                .iter()
                .copied()
                .find(|&b| theory.block_atoms(b).contains(&atom))
                .ok_or_else(|| {
                    format!(
                        "line {line_no}: atom '{part}' is not in any block observed by '{id}'"
                    )
                })?;
            let pos = theory.block_pos(block);
            if let Some(&previous) = condition.get(&pos) {
                if previous != atom {
                    return Err(format!(
                        "line {line_no}: condition names two atoms of block '{}'",
                        theory.block_id(block)
                    ));
                }
            }
            condition.insert(pos, atom);
        }
        section.entries.push((condition, action));
    }

    Ok(sections
        .into_iter()
        .map(|(id, s)| {
            let decision = theory
                .decisions()
                .find(|(_, alt)| alt.id == id)
                .map(|(idx, _)| idx)
                .expect("sections only name known decisions");
            DecisionStrategy {
                decision: id,
                entries: s.entries,
                default_action: s
                    .default_action
                    .unwrap_or(theory.alternatives()[decision].atoms[0]),
            }
        })
        .collect())
}
