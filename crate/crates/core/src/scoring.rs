//! Sequence alignment and the correctness/accuracy metrics with
//! insertion/deletion/substitution accounting.

use crate::error::{Error, Result};

/// Edit costs for the alignment. All schemes share the tie-break ladder:
/// among minimal-cost alignments prefer more hits, then fewer substitutions,
/// then earliest insertion placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScheme {
    /// match 0, substitution 2, insertion 1, deletion 1. A substitution
    /// costs the same as a deletion plus an insertion, so minimal cost is
    /// equivalent to maximal hits and the tie-break drives substitutions to
    /// zero. This reproduces the published worked example.
    Default,
    /// match 0, substitution 1, insertion 1, deletion 1.
    Unit,
    /// HTK-compatible weights: substitution 10, insertion 7, deletion 7.
    Htk,
}

impl CostScheme {
    fn costs(self) -> (u64, u64, u64) {
        // (sub, ins, del)
        match self {
            CostScheme::Default => (2, 1, 1),
            CostScheme::Unit => (1, 1, 1),
            CostScheme::Htk => (10, 7, 7),
        }
    }
}

impl Default for CostScheme {
    fn default() -> Self {
        CostScheme::Default
    }
}

/// One aligned position: a reference token or a gap against a hypothesis
/// token or a gap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPair {
    pub reference: Option<String>,
    pub hypothesis: Option<String>,
}

/// Hit/substitution/deletion/insertion counts underlying `C` and `A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentResult {
    /// Reference token count.
    pub n: usize,
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub aligned_pairs: Vec<AlignedPair>,
}

impl AlignmentResult {
    /// `N = H + S + D` and `hyp length = H + S + I`.
    pub fn check_identities(&self, hyp_len: usize) -> bool {
        self.n == self.hits + self.substitutions + self.deletions
            && hyp_len == self.hits + self.substitutions + self.insertions
    }
}

// DP cell value: (cost, -hits, substitutions), compared lexicographically.
// Each component is additive along alignment paths, so lexicographic
// minimization has optimal substructure.
type CellValue = (u64, i64, u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Start,
    Hit,
    Sub,
    Del,
    Ins,
}

/// Aligns `hyp` against `ref` by minimum edit cost under `scheme`.
///
/// Deterministic: among minimal-cost alignments the result has the most
/// hits, then the fewest substitutions; remaining ties resolve by placing
/// insertions as early as possible.
pub fn align_sequences_with(
    reference: &[String],
    hypothesis: &[String],
    scheme: CostScheme,
) -> AlignmentResult {
    let (sub_c, ins_c, del_c) = scheme.costs();
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let mut value: Vec<CellValue> = vec![(0, 0, 0); (n + 1) * width];
    let mut op: Vec<Op> = vec![Op::Start; (n + 1) * width];
    for j in 1..=m {
        value[j] = (ins_c * j as u64, 0, 0);
        op[j] = Op::Ins;
    }
    for i in 1..=n {
        value[i * width] = (del_c * i as u64, 0, 0);
        op[i * width] = Op::Del;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = value[(i - 1) * width + (j - 1)];
            let up = value[(i - 1) * width + j];
            let left = value[i * width + (j - 1)];
            let (dval, dop) = if reference[i - 1] == hypothesis[j - 1] {
                ((diag.0, diag.1 - 1, diag.2), Op::Hit)
            } else {
                ((diag.0 + sub_c, diag.1, diag.2 + 1), Op::Sub)
            };
            let uval = (up.0 + del_c, up.1, up.2);
            let lval = (left.0 + ins_c, left.1, left.2);
            // preference order on exact ties: diagonal, deletion, insertion;
            // preferring deletion over insertion in the backward trace pushes
            // insertions toward the front of the alignment
            let mut best = (dval, dop);
            if uval < best.0 {
                best = (uval, Op::Del);
            }
            if lval < best.0 {
                best = (lval, Op::Ins);
            }
            value[i * width + j] = best.0;
            op[i * width + j] = best.1;
        }
    }

    let mut pairs_rev: Vec<AlignedPair> = Vec::new();
    let (mut i, mut j) = (n, m);
    let (mut hits, mut subs, mut dels, mut inss) = (0, 0, 0, 0);
    while i > 0 || j > 0 {
        match op[i * width + j] {
            Op::Hit => {
                hits += 1;
                i -= 1;
                j -= 1;
                pairs_rev.push(AlignedPair {
                    reference: Some(reference[i].clone()),
                    hypothesis: Some(hypothesis[j].clone()),
                });
            }
            Op::Sub => {
                subs += 1;
                i -= 1;
                j -= 1;
                pairs_rev.push(AlignedPair {
                    reference: Some(reference[i].clone()),
                    hypothesis: Some(hypothesis[j].clone()),
                });
            }
            Op::Del => {
                dels += 1;
                i -= 1;
                pairs_rev.push(AlignedPair {
                    reference: Some(reference[i].clone()),
                    hypothesis: None,
                });
            }
            Op::Ins => {
                inss += 1;
                j -= 1;
                pairs_rev.push(AlignedPair {
                    reference: None,
                    hypothesis: Some(hypothesis[j].clone()),
                });
            }
            Op::Start => unreachable!(),
        }
    }
    pairs_rev.reverse();
    AlignmentResult {
        n,
        hits,
        substitutions: subs,
        deletions: dels,
        insertions: inss,
        aligned_pairs: pairs_rev,
    }
}

/// Alignment under the default cost scheme.
pub fn align_sequences(reference: &[String], hypothesis: &[String]) -> AlignmentResult {
    align_sequences_with(reference, hypothesis, CostScheme::Default)
}

/// Correctness `C = (N - D - S) / N`, equal to `H / N`.
pub fn correctness(a: &AlignmentResult) -> Result<f64> {
    if a.n == 0 {
        return Err(Error::Scoring("correctness undefined for N = 0".into()));
    }
    Ok((a.n as f64 - a.deletions as f64 - a.substitutions as f64) / a.n as f64)
}

/// Accuracy `A = (N - D - S - I) / N`; negative when insertions dominate.
pub fn accuracy(a: &AlignmentResult) -> Result<f64> {
    if a.n == 0 {
        return Err(Error::Scoring("accuracy undefined for N = 0".into()));
    }
    Ok((a.n as f64
        - a.deletions as f64
        - a.substitutions as f64
        - a.insertions as f64)
        / a.n as f64)
}

pub fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_counts() {
        let reference = tokens("once upon a midnight dreary");
        let hypothesis = tokens("once upon upon midnight dreary dreary");
        let a = align_sequences(&reference, &hypothesis);
        assert_eq!(a.hits, 4);
        assert_eq!(a.substitutions, 0);
        assert_eq!(a.deletions, 1);
        assert_eq!(a.insertions, 2);
        assert!(a.check_identities(hypothesis.len()));
        assert!((correctness(&a).unwrap() - 0.8).abs() < 1e-12);
        assert!((accuracy(&a).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn identical_sequences() {
        let r = tokens("v01 v04 v07 v10");
        let a = align_sequences(&r, &r);
        assert_eq!(
            (a.hits, a.substitutions, a.deletions, a.insertions),
            (4, 0, 0, 0)
        );
        assert!((correctness(&a).unwrap() - 1.0).abs() < 1e-12);
        assert!((accuracy(&a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_reference_counts_all_insertions() {
        let a = align_sequences(&[], &tokens("x y z"));
        assert_eq!(
            (a.hits, a.substitutions, a.deletions, a.insertions),
            (0, 0, 0, 3)
        );
        assert!(correctness(&a).is_err());
        assert!(accuracy(&a).is_err());
    }

    #[test]
    fn all_deleted_scores_zero() {
        let a = align_sequences(&tokens("a b c d e f g h i j"), &[]);
        assert_eq!(a.deletions, 10);
        assert!((correctness(&a).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn negative_accuracy() {
        // N=5 all deleted plus 3 pure insertions
        let a = align_sequences(&tokens("a b c d e"), &tokens("x y z"));
        // default scheme has no substitutions: D=5? no — hits impossible, so
        // S=0 forces D=5, I=3
        assert_eq!(a.substitutions, 0);
        assert_eq!(a.deletions, 5);
        assert_eq!(a.insertions, 3);
        assert!((accuracy(&a).unwrap() - (-0.6)).abs() < 1e-12);
    }

    #[test]
    fn htk_scheme_reports_substitutions() {
        let a = align_sequences_with(
            &tokens("a b c"),
            &tokens("a x c"),
            CostScheme::Htk,
        );
        assert_eq!(
            (a.hits, a.substitutions, a.deletions, a.insertions),
            (2, 1, 0, 0)
        );
        let u = align_sequences_with(&tokens("a b c"), &tokens("a x c"), CostScheme::Unit);
        assert_eq!(u.substitutions, 1);
    }

    #[test]
    fn symmetry_swaps_deletions_and_insertions() {
        let r = tokens("a b c d e");
        let h = tokens("a c c e f g");
        let fwd = align_sequences(&r, &h);
        let rev = align_sequences(&h, &r);
        assert_eq!(fwd.deletions, rev.insertions);
        assert_eq!(fwd.insertions, rev.deletions);
        assert_eq!(fwd.substitutions, rev.substitutions);
    }

    #[test]
    fn accuracy_never_exceeds_correctness() {
        let r = tokens("a b a b a");
        let h = tokens("b a b a b a");
        let a = align_sequences(&r, &h);
        assert!(accuracy(&a).unwrap() <= correctness(&a).unwrap());
    }

    /// Exhaustive minimal-cost oracle over all alignments.
    fn brute_force_cost(
        reference: &[String],
        hypothesis: &[String],
        scheme: CostScheme,
    ) -> u64 {
        let (sub_c, ins_c, del_c) = scheme.costs();
        fn rec(
            r: &[String],
            h: &[String],
            (sub_c, ins_c, del_c): (u64, u64, u64),
        ) -> u64 {
            match (r.is_empty(), h.is_empty()) {
                (true, true) => 0,
                (true, false) => ins_c * h.len() as u64,
                (false, true) => del_c * r.len() as u64,
                (false, false) => {
                    let step = if r[0] == h[0] { 0 } else { sub_c };
                    let a = step + rec(&r[1..], &h[1..], (sub_c, ins_c, del_c));
                    let b = del_c + rec(&r[1..], h, (sub_c, ins_c, del_c));
                    let c = ins_c + rec(r, &h[1..], (sub_c, ins_c, del_c));
                    a.min(b).min(c)
                }
            }
        }
        rec(reference, hypothesis, (sub_c, ins_c, del_c))
    }

    #[test]
    fn dp_cost_matches_brute_force_on_short_pairs() {
        // all pairs over a 2-symbol alphabet with combined length <= 8
        let alphabet = ["a", "b"];
        let mut seqs: Vec<Vec<String>> = vec![vec![]];
        for len in 1..=6usize {
            let mut next = Vec::new();
            for s in seqs.iter().filter(|s| s.len() == len - 1) {
                for sym in alphabet {
                    let mut t = s.clone();
                    t.push(sym.to_string());
                    next.push(t);
                }
            }
            seqs.extend(next);
        }
        for scheme in [CostScheme::Default, CostScheme::Unit, CostScheme::Htk] {
            let (sub_c, ins_c, del_c) = scheme.costs();
            for r in &seqs {
                for h in &seqs {
                    if r.len() + h.len() > 8 {
                        continue;
                    }
                    let a = align_sequences_with(r, h, scheme);
                    let dp_cost = sub_c * a.substitutions as u64
                        + ins_c * a.insertions as u64
                        + del_c * a.deletions as u64;
                    let oracle = brute_force_cost(r, h, scheme);
                    assert_eq!(dp_cost, oracle, "r={r:?} h={h:?} scheme={scheme:?}");
                }
            }
        }
    }
}
