//! Example theories used by tests, documentation, and the bundled testdata
//! files. Both are small enough to check by hand yet exercise every part of
//! the pipeline.

/// A two-stage diagnosis problem with noisy sensors.
///
/// The agent first sets a test articulation `ta` (observing nothing), which
/// influences what the first sensor reading `as` reveals about the hidden
/// quantity `a`. A second sensor `bs` reports on `b` through two noise
/// alternatives. The final decision `d` sees `ta` and both sensor readings.
pub const TWO_SENSOR: &str = "\
% Hidden quantities.
nature a { a(lo): 0.2, a(med): 0.3, a(hi): 0.5 }.
nature b { b(pos): 0.7, b(neg): 0.3 }.
% Noise on the b-sensor: applies when b is negative / positive respectively.
nature bn_if_neg { false_pos: 0.1, true_neg: 0.9 }.
nature bn_if_pos { false_neg: 0.2, true_pos: 0.8 }.

decision ta { ta(hi), ta(lo) } observes { }.
observable as_reading { as(pos), as(neg) }.
observable bs_reading { bs(pos), bs(neg) }.
decision d { d(0), d(1), d(2) } observes { ta, as_reading, bs_reading }.

bs(pos) <- b(pos) & true_pos.
bs(pos) <- b(neg) & false_pos.
bs(neg) <- b(neg) & true_neg.
bs(neg) <- b(pos) & false_neg.

as(pos) <- ta(hi) & a(hi).
as(pos) <- ta(lo) & a(lo).
as(neg) <- ta(hi) & a(lo).
as(neg) <- a(med).
as(neg) <- ta(lo) & a(hi).

utility(4) <- d(0).
utility(10) <- a(hi) & d(1).
utility(3) <- a(med) & d(1).
utility(0) <- a(lo) & d(1).
utility(2) <- a(hi) & b(pos) & d(2).
utility(5) <- a(med) & b(pos) & d(2).
utility(9) <- a(lo) & b(pos) & d(2).
utility(8) <- b(neg) & d(2).
";

/// A single fully observable decision over four binary nature alternatives.
///
/// Every nature alternative is visible to the decision, so the compact
/// policy should collapse shared structure instead of tabulating all sixteen
/// observation states. The `b` alternative never influences utility.
pub const FULLY_OBSERVABLE: &str = "\
nature a { a1: 0.5, a2: 0.5 }.
nature e { e1: 0.5, e2: 0.5 }.
nature c { c1: 0.5, c2: 0.5 }.
nature b { b1: 0.5, b2: 0.5 }.

decision d { d1, d2 } observes { a, e, c, b }.

utility(7) <- a1 & d1.
utility(3) <- a1 & e1 & d2.
utility(5) <- a1 & e2 & d2.
utility(4) <- a2 & e1 & c1 & d2.
utility(5) <- a2 & e1 & c2 & d1.
utility(6) <- a2 & e1 & c2 & d2.
utility(7) <- a2 & c1 & d1.
utility(9) <- a2 & e2 & c1 & d2.
utility(4) <- a2 & e2 & c2.
";
