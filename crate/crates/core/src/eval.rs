//! Objective evaluation: edit-distance error rates with per-symbol
//! breakdown, speaker-verification EER under the enrollment-pairing
//! protocol, and mean-opinion-score aggregation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::soft::cosine_similarity;

/// One step of a minimal edit alignment. Indices point into the reference
/// and hypothesis sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match { r: usize, h: usize },
    Substitute { r: usize, h: usize },
    Delete { r: usize },
    Insert { h: usize },
}

/// Minimal-cost alignment between a reference and a hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub matches: usize,
    pub ref_len: usize,
}

impl Alignment {
    pub fn cost(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Uniform-cost Levenshtein alignment with backtrace. Ties during the
/// backtrace prefer match > substitute > delete > insert.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<Alignment> {
    let n = reference.len();
    let m = hypothesis.len();
    if n == 0 {
        return Err(Error::data("reference must not be empty (error rate undefined)"));
    }

    let width = m + 1;
    let mut dp = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        dp[i * width] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = dp[(i - 1) * width + (j - 1)] + usize::from(!same);
            let del = dp[(i - 1) * width + j] + 1;
            let ins = dp[i * width + (j - 1)] + 1;
            dp[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] && dp[(i - 1) * width + (j - 1)] == here {
            ops.push(EditOp::Match { r: i - 1, h: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && dp[(i - 1) * width + (j - 1)] + 1 == here {
            ops.push(EditOp::Substitute { r: i - 1, h: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && dp[(i - 1) * width + j] + 1 == here {
            ops.push(EditOp::Delete { r: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Insert { h: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();

    let mut alignment = Alignment {
        ops,
        substitutions: 0,
        deletions: 0,
        insertions: 0,
        matches: 0,
        ref_len: n,
    };
    for op in &alignment.ops {
        match op {
            EditOp::Match { .. } => alignment.matches += 1,
            EditOp::Substitute { .. } => alignment.substitutions += 1,
            EditOp::Delete { .. } => alignment.deletions += 1,
            EditOp::Insert { .. } => alignment.insertions += 1,
        }
    }
    debug_assert_eq!(
        alignment.matches + alignment.substitutions + alignment.deletions,
        n
    );
    debug_assert_eq!(alignment.cost(), dp[n * width + m]);
    Ok(alignment)
}

/// (S + D + I) / N_ref; may exceed 1.
pub fn error_rate(alignment: &Alignment) -> f64 {
    alignment.cost() as f64 / alignment.ref_len as f64
}

/// Corpus error rate over several alignments: total edits / total
/// reference length.
pub fn corpus_error_rate(alignments: &[Alignment]) -> Result<f64> {
    let total_ref: usize = alignments.iter().map(|a| a.ref_len).sum();
    if total_ref == 0 {
        return Err(Error::data("no reference symbols in corpus"));
    }
    let total_cost: usize = alignments.iter().map(|a| a.cost()).sum();
    Ok(total_cost as f64 / total_ref as f64)
}

/// Per-reference-symbol error rates over an aligned corpus:
/// (substitutions + deletions of the symbol) / (its occurrences in the
/// references). Insertions are attributed to no reference symbol, so they
/// appear only in the overall rate. Symbols never seen in a reference are
/// omitted; an inventory, when given, restricts the map to those symbols.
pub fn per_symbol_error_rates(
    cases: &[(&[String], &Alignment)],
    inventory: Option<&[String]>,
) -> Result<BTreeMap<String, f64>> {
    if cases.is_empty() {
        return Err(Error::data("need at least one alignment"));
    }
    let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
    let mut errors: BTreeMap<&str, usize> = BTreeMap::new();
    for (reference, alignment) in cases {
        if alignment.ref_len != reference.len() {
            return Err(Error::data(format!(
                "alignment covers {} reference symbols but sequence has {}",
                alignment.ref_len,
                reference.len()
            )));
        }
        for symbol in reference.iter() {
            *occurrences.entry(symbol.as_str()).or_default() += 1;
        }
        for op in &alignment.ops {
            let r = match op {
                EditOp::Substitute { r, .. } | EditOp::Delete { r } => *r,
                _ => continue,
            };
            *errors.entry(reference[r].as_str()).or_default() += 1;
        }
    }
    let mut rates = BTreeMap::new();
    for (symbol, &count) in &occurrences {
        if let Some(inv) = inventory {
            if !inv.iter().any(|s| s == symbol) {
                continue;
            }
        }
        let err = errors.get(symbol).copied().unwrap_or(0);
        rates.insert(symbol.to_string(), err as f64 / count as f64);
    }
    Ok(rates)
}

/// Verification scores split into genuine (target-target) and impostor
/// (converted-target) trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub genuine_scores: Vec<f64>,
    pub impostor_scores: Vec<f64>,
}

pub const DEFAULT_ENROLLMENTS: usize = 50;

/// Build a trial set: each converted embedding is paired with `n_enroll`
/// distinct enrollment utterances sampled without replacement from the
/// target pool, and an equal number of authentic target-target pairs
/// (never pairing an utterance with itself) is added. Scores are cosine
/// similarities.
pub fn build_trials(
    converted: &[Vec<f64>],
    enrollment_pool: &[Vec<f64>],
    n_enroll: usize,
    seed: u64,
) -> Result<TrialSet> {
    if converted.is_empty() {
        return Err(Error::data("no converted embeddings"));
    }
    if n_enroll == 0 {
        return Err(Error::config("need at least one enrollment per trial"));
    }
    if enrollment_pool.len() < n_enroll + 1 {
        return Err(Error::data(format!(
            "enrollment pool of {} cannot support {n_enroll} enrollments plus authentic pairs",
            enrollment_pool.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool_n = enrollment_pool.len();
    let mut impostor_scores = Vec::with_capacity(converted.len() * n_enroll);
    let mut indices: Vec<usize> = (0..pool_n).collect();
    for query in converted {
        // Partial Fisher-Yates: the first n_enroll entries are a
        // without-replacement sample.
        for i in 0..n_enroll {
            let j = rng.random_range(i..pool_n);
            indices.swap(i, j);
        }
        for &idx in &indices[..n_enroll] {
            impostor_scores.push(cosine_similarity(query, &enrollment_pool[idx])?);
        }
    }

    let mut genuine_scores = Vec::with_capacity(impostor_scores.len());
    while genuine_scores.len() < impostor_scores.len() {
        let a = rng.random_range(0..pool_n);
        let mut b = rng.random_range(0..pool_n - 1);
        if b >= a {
            b += 1;
        }
        genuine_scores.push(cosine_similarity(&enrollment_pool[a], &enrollment_pool[b])?);
    }

    Ok(TrialSet {
        genuine_scores,
        impostor_scores,
    })
}

/// Equal error rate: sweep every distinct score as a threshold with
/// FAR(t) = fraction of impostor scores >= t and FRR(t) = fraction of
/// genuine scores < t, then linearly interpolate at the FAR/FRR crossing.
pub fn compute_eer(trials: &TrialSet) -> Result<f64> {
    let genuine = &trials.genuine_scores;
    let impostor = &trials.impostor_scores;
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::data("both genuine and impostor scores are required"));
    }
    if genuine.iter().chain(impostor).any(|s| !s.is_finite()) {
        return Err(Error::data("scores must be finite"));
    }

    let mut genuine_sorted = genuine.clone();
    genuine_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut impostor_sorted = impostor.clone();
    impostor_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut thresholds: Vec<f64> = genuine_sorted.iter().chain(&impostor_sorted).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    // count of elements >= t
    let at_least = |sorted: &[f64], t: f64| -> usize { sorted.len() - sorted.partition_point(|&x| x < t) };

    let far = |t: f64| at_least(&impostor_sorted, t) as f64 / impostor_sorted.len() as f64;
    let frr = |t: f64| 1.0 - at_least(&genuine_sorted, t) as f64 / genuine_sorted.len() as f64;

    // At the lowest score FAR = 1, FRR = 0. Walk until the difference
    // changes sign; a sentinel above the maximum gives FAR = 0, FRR = 1.
    let mut prev = (far(thresholds[0]), frr(thresholds[0]));
    if prev.0 - prev.1 == 0.0 {
        return Ok(prev.0);
    }
    let max = *thresholds.last().unwrap();
    let sentinel = if max == 0.0 { 1.0 } else { max + max.abs() };
    for &t in thresholds.iter().skip(1).chain(std::iter::once(&sentinel)) {
        let current = (far(t), frr(t));
        let d_prev = prev.0 - prev.1;
        let d_cur = current.0 - current.1;
        if d_cur == 0.0 {
            return Ok(current.0);
        }
        if d_prev > 0.0 && d_cur < 0.0 {
            // Interpolate both rates linearly between the two thresholds.
            let alpha = d_prev / (d_prev - d_cur);
            return Ok(prev.0 + alpha * (current.0 - prev.0));
        }
        prev = current;
    }
    unreachable!("FAR-FRR difference must change sign before the sentinel");
}

/// Naturalness ratings on the five-point opinion scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingSet {
    pub ratings: Vec<u8>,
}

impl RatingSet {
    pub fn new(ratings: Vec<u8>) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::data("rating set must not be empty"));
        }
        if let Some(&bad) = ratings.iter().find(|&&r| !(1..=5).contains(&r)) {
            return Err(Error::data(format!("rating {bad} outside the 1..5 scale")));
        }
        Ok(RatingSet { ratings })
    }
}

/// Mean opinion score with a 95% normal-approximation confidence
/// half-width: mean ± 1.96 s / sqrt(n), s the sample standard deviation.
pub fn mos_ci(ratings: &RatingSet) -> Result<(f64, f64)> {
    let n = ratings.ratings.len();
    if n < 2 {
        return Err(Error::data("need at least two ratings for a confidence interval"));
    }
    let nf = n as f64;
    let mean = ratings.ratings.iter().map(|&r| r as f64).sum::<f64>() / nf;
    let ss: f64 = ratings
        .ratings
        .iter()
        .map(|&r| {
            let d = r as f64 - mean;
            d * d
        })
        .sum();
    let sample_std = (ss / (nf - 1.0)).sqrt();
    Ok((mean, 1.96 * sample_std / nf.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symbols(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identity_alignment() {
        let a = align(&symbols("a b c"), &symbols("a b c")).unwrap();
        assert_eq!((a.substitutions, a.deletions, a.insertions), (0, 0, 0));
        assert_eq!(a.matches, 3);
        assert_eq!(error_rate(&a), 0.0);
    }

    #[test]
    fn single_substitution() {
        let a = align(&symbols("the cat sat"), &symbols("the cat sit")).unwrap();
        assert_eq!((a.substitutions, a.deletions, a.insertions), (1, 0, 0));
        assert!((error_rate(&a) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_deletion() {
        let a = align(&symbols("a b c d"), &symbols("a c d")).unwrap();
        assert_eq!((a.substitutions, a.deletions, a.insertions), (0, 1, 0));
        assert_eq!(a.cost(), 1);
    }

    #[test]
    fn insertions_can_exceed_one() {
        let a = align(&symbols("a b"), &symbols("a x y b")).unwrap();
        assert_eq!(a.insertions, 2);
        assert_eq!(error_rate(&a), 1.0);
    }

    #[test]
    fn empty_reference_rejected() {
        assert!(matches!(
            align::<String>(&[], &symbols("a")),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let a = align::<String>(&symbols("a b c"), &[]).unwrap();
        assert_eq!(a.deletions, 3);
        assert_eq!(error_rate(&a), 1.0);
    }

    #[test]
    fn backtrace_prefers_match_over_substitute() {
        let a = align(&symbols("a a"), &symbols("a")).unwrap();
        // One match plus one delete, never substitute + insert.
        assert_eq!(a.matches, 1);
        assert_eq!(a.deletions, 1);
        assert_eq!(a.substitutions, 0);
        assert_eq!(a.insertions, 0);
    }

    #[test]
    fn fin_thin_breakdown() {
        let reference = symbols("f i n");
        let a = align(&reference, &symbols("th i n")).unwrap();
        let rates = per_symbol_error_rates(&[(&reference, &a)], None).unwrap();
        assert_eq!(rates["f"], 1.0);
        assert_eq!(rates["i"], 0.0);
        assert_eq!(rates["n"], 0.0);
    }

    #[test]
    fn per_symbol_counts_sum_to_corpus_errors() {
        let cases_raw = [
            ("a b c d", "a x c"),
            ("b b a", "b a a a"),
            ("c a b", "c a b"),
        ];
        let mut refs = Vec::new();
        let mut alignments = Vec::new();
        for (r, h) in cases_raw {
            let r = symbols(r);
            let a = align(&r, &symbols(h)).unwrap();
            refs.push(r);
            alignments.push(a);
        }
        let cases: Vec<(&[String], &Alignment)> = refs
            .iter()
            .zip(&alignments)
            .map(|(r, a)| (r.as_slice(), a))
            .collect();
        let rates = per_symbol_error_rates(&cases, None).unwrap();

        let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &refs {
            for s in r {
                *occurrences.entry(s.as_str()).or_default() += 1;
            }
        }
        let reconstructed: f64 = rates
            .iter()
            .map(|(s, rate)| rate * occurrences[s.as_str()] as f64)
            .sum();
        let total_sd: usize = alignments.iter().map(|a| a.substitutions + a.deletions).sum();
        assert!((reconstructed - total_sd as f64).abs() < 1e-9);
    }

    #[test]
    fn all_correct_corpus_has_zero_rates() {
        let r = symbols("p a t");
        let a = align(&r, &r).unwrap();
        let rates = per_symbol_error_rates(&[(&r, &a)], None).unwrap();
        assert!(rates.values().all(|&v| v == 0.0));
    }

    #[test]
    fn inventory_restricts_map() {
        let r = symbols("a b");
        let a = align(&r, &symbols("a x")).unwrap();
        let inventory = symbols("a");
        let rates = per_symbol_error_rates(&[(&r, &a)], Some(&inventory)).unwrap();
        assert!(rates.contains_key("a"));
        assert!(!rates.contains_key("b"));
    }

    #[test]
    fn trial_counts_match_protocol() {
        let converted = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let pool: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64).cos(), (i as f64).sin()]).collect();
        let trials = build_trials(&converted, &pool, 50, 7).unwrap();
        assert_eq!(trials.impostor_scores.len(), 100);
        assert_eq!(trials.genuine_scores.len(), 100);
    }

    #[test]
    fn pool_too_small_rejected() {
        let converted = vec![vec![1.0, 0.0]];
        let pool: Vec<Vec<f64>> = (0..50).map(|_| vec![1.0, 0.0]).collect();
        assert!(matches!(build_trials(&converted, &pool, 50, 0), Err(Error::Data(_))));
    }

    #[test]
    fn trials_are_seeded_and_scores_are_cosines() {
        let converted = vec![vec![0.5, 0.5, 0.0]];
        let pool: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![1.0, i as f64 * 0.3, (i as f64 * 0.7).sin()])
            .collect();
        let a = build_trials(&converted, &pool, 3, 11).unwrap();
        let b = build_trials(&converted, &pool, 3, 11).unwrap();
        assert_eq!(a, b);
        for &score in &a.impostor_scores {
            let found = pool
                .iter()
                .any(|e| (cosine_similarity(&converted[0], e).unwrap() - score).abs() < 1e-15);
            assert!(found, "score {score} does not match any pool cosine");
        }
        // Genuine scores come from distinct-utterance pairs; with a pool of
        // distinct directions no self-pair cosine (exactly 1) can appear.
        for &score in &a.genuine_scores {
            assert!(score < 1.0 - 1e-12);
        }
    }

    #[test]
    fn eer_separable_is_zero() {
        let trials = TrialSet {
            genuine_scores: vec![0.9, 0.8],
            impostor_scores: vec![0.2, 0.1],
        };
        assert_eq!(compute_eer(&trials).unwrap(), 0.0);
    }

    #[test]
    fn eer_identical_distributions_is_half() {
        let scores = vec![0.1, 0.5, 0.9, 0.3];
        let trials = TrialSet {
            genuine_scores: scores.clone(),
            impostor_scores: scores,
        };
        assert_eq!(compute_eer(&trials).unwrap(), 0.5);
    }

    #[test]
    fn eer_invariant_under_monotone_transform() {
        let trials = TrialSet {
            genuine_scores: vec![0.4, 0.9, 0.75, 0.62, 0.55],
            impostor_scores: vec![0.3, 0.5, 0.65, 0.2, 0.45],
        };
        let base = compute_eer(&trials).unwrap();
        let transform = |s: f64| (3.0 * s).exp() - 2.0;
        let mapped = TrialSet {
            genuine_scores: trials.genuine_scores.iter().map(|&s| transform(s)).collect(),
            impostor_scores: trials.impostor_scores.iter().map(|&s| transform(s)).collect(),
        };
        // The rank sweep only looks at order, so the crossing rates agree;
        // interpolation happens between the same rate pairs.
        assert!((compute_eer(&mapped).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn mos_examples() {
        let (mean, half) = mos_ci(&RatingSet::new(vec![4, 4, 4, 4]).unwrap()).unwrap();
        assert_eq!((mean, half), (4.0, 0.0));
        let (mean, half) = mos_ci(&RatingSet::new(vec![3, 5]).unwrap()).unwrap();
        assert!((mean - 4.0).abs() < 1e-12);
        assert!((half - 1.96).abs() < 1e-12);
        let (mean, half) = mos_ci(&RatingSet::new(vec![1, 2, 3, 4, 5]).unwrap()).unwrap();
        assert!((mean - 3.0).abs() < 1e-12);
        assert!((half - 1.96 * 2.5f64.sqrt() / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mos_validation() {
        assert!(RatingSet::new(vec![]).is_err());
        assert!(RatingSet::new(vec![0]).is_err());
        assert!(RatingSet::new(vec![6]).is_err());
        assert!(mos_ci(&RatingSet::new(vec![3]).unwrap()).is_err());
    }
}
