//! The merge process: threshold matching of cross-source key pairs,
//! clustering of the match graph, and scoring against ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::bitkeys::{median_key, Bits, HashCode, KeyRef, NoisyKey};
use crate::error::{Error, Result};

/// Below this many keys matching runs on the calling thread.
const PARALLEL_MIN_KEYS: usize = 512;

/// A retained cross-source pair with `distance < t`; `left < right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchEdge {
    pub left: KeyRef,
    pub right: KeyRef,
    pub distance: u32,
}

/// A connected component of the match graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Sorted by `(source_id, key_id)`.
    pub members: Vec<KeyRef>,
    /// Two or more members come from the same source.
    pub conflicted: bool,
}

fn input_err(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn check_keys(keys: &[NoisyKey]) -> Result<usize> {
    let Some(first) = keys.first() else {
        return Ok(0);
    };
    let n = first.bits.len();
    let mut seen = BTreeSet::new();
    for k in keys {
        if k.bits.len() != n {
            return Err(input_err(format!(
                "key {} has {} bits, expected {n}",
                k.key_ref(),
                k.bits.len()
            )));
        }
        if !seen.insert(k.key_ref()) {
            return Err(input_err(format!("duplicate key {}", k.key_ref())));
        }
    }
    Ok(n)
}

/// All cross-source pairs at Hamming distance `< t`, ordered by `(left, right)`.
pub fn match_pairs(keys: &[NoisyKey], t: u32) -> Result<Vec<MatchEdge>> {
    let n = check_keys(keys)?;
    if keys.is_empty() {
        return Ok(Vec::new());
    }
    if t == 0 || t as usize > n {
        return Err(Error::InvalidParameter(format!("threshold t = {t} outside [1, {n}]")));
    }
    let mut sorted: Vec<&NoisyKey> = keys.iter().collect();
    sorted.sort_by_key(|k| k.key_ref());

    let row = |i: usize| -> Vec<MatchEdge> {
        let a = sorted[i];
        sorted[i + 1..]
            .iter()
            .filter(|b| b.source_id != a.source_id)
            .filter_map(|b| {
                let d = a.bits.distance_unchecked(&b.bits);
                (d < t).then(|| MatchEdge {
                    left: a.key_ref(),
                    right: b.key_ref(),
                    distance: d,
                })
            })
            .collect()
    };
    let rows: Vec<Vec<MatchEdge>> = if sorted.len() < PARALLEL_MIN_KEYS {
        (0..sorted.len()).map(row).collect()
    } else {
        (0..sorted.len()).into_par_iter().map(row).collect()
    };
    Ok(rows.into_iter().flatten().collect())
}

/// Connected components of the match graph; unmatched keys are singletons.
/// Components are ordered by their smallest member.
pub fn cluster_components(edges: &[MatchEdge], keys: &[NoisyKey]) -> Result<Vec<Cluster>> {
    let index: BTreeMap<KeyRef, usize> = keys
        .iter()
        .map(|k| k.key_ref())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (r, i))
        .collect();
    let refs: Vec<KeyRef> = index.keys().copied().collect();
    let mut uf = UnionFind::<usize>::new(refs.len());
    for e in edges {
        let (Some(&a), Some(&b)) = (index.get(&e.left), index.get(&e.right)) else {
            return Err(input_err(format!(
                "edge {}-{} references an unknown key",
                e.left, e.right
            )));
        };
        uf.union(a, b);
    }
    let mut groups: BTreeMap<usize, Vec<KeyRef>> = BTreeMap::new();
    for (i, r) in refs.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(*r);
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|members| {
            let sources: BTreeSet<u32> = members.iter().map(|m| m.source_id).collect();
            Cluster {
                conflicted: sources.len() < members.len(),
                members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
    Ok(clusters)
}

/// Counts of false matches (M) and missed matches (U) over all cross-source pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchScore {
    pub false_matches: u64,
    pub missed_matches: u64,
}

fn lookup<'a, L>(truth: &'a HashMap<KeyRef, L>, r: &KeyRef) -> Result<&'a L> {
    truth
        .get(r)
        .ok_or_else(|| input_err(format!("no truth label for key {r}")))
}

/// Scores `edges` against the true value label of every key.
pub fn score_matching<L: Eq + Hash>(
    edges: &[MatchEdge],
    keys: &[NoisyKey],
    truth: &HashMap<KeyRef, L>,
) -> Result<MatchScore> {
    // Cross-source same-label pairs, per label: C(size, 2) − Σ_source C(c, 2).
    let mut by_label: HashMap<&L, HashMap<u32, u64>> = HashMap::new();
    for k in keys {
        let label = lookup(truth, &k.key_ref())?;
        *by_label.entry(label).or_default().entry(k.source_id).or_default() += 1;
    }
    let choose2 = |x: u64| x * x.saturating_sub(1) / 2;
    let same_pairs: u64 = by_label
        .values()
        .map(|per_source| {
            let size: u64 = per_source.values().sum();
            choose2(size) - per_source.values().map(|&c| choose2(c)).sum::<u64>()
        })
        .sum();

    let mut score = MatchScore::default();
    let mut matched_same = 0u64;
    for e in edges {
        if lookup(truth, &e.left)? == lookup(truth, &e.right)? {
            matched_same += 1;
        } else {
            score.false_matches += 1;
        }
    }
    score.missed_matches = same_pairs
        .checked_sub(matched_same)
        .ok_or_else(|| input_err("edges contain same-source or duplicate pairs"))?;
    Ok(score)
}

/// Revelation outcome for one group of same-value keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupRevelation {
    pub size: usize,
    pub revealed: bool,
}

/// For every true value, whether the median of its keys (ties resolved to
/// the true hash code) equals that hash code.
pub fn revelation_groups<L: Eq + Hash>(
    keys: &[NoisyKey],
    truth: &HashMap<KeyRef, L>,
    hash_codes: &HashMap<L, HashCode>,
) -> Result<Vec<GroupRevelation>> {
    let mut groups: HashMap<&L, Vec<&Bits>> = HashMap::new();
    for k in keys {
        groups
            .entry(lookup(truth, &k.key_ref())?)
            .or_default()
            .push(&k.bits);
    }
    groups
        .into_iter()
        .map(|(label, members)| {
            let code = hash_codes
                .get(label)
                .ok_or_else(|| input_err("no hash code for a truth label"))?;
            let median = median_key(&members, code.bits())?;
            Ok(GroupRevelation {
                size: members.len(),
                revealed: &median == code.bits(),
            })
        })
        .collect()
}

/// Number of keys whose same-value group reveals its hash code; a revealed
/// group of size `z` contributes `z`.
pub fn score_revelation<L: Eq + Hash>(
    keys: &[NoisyKey],
    truth: &HashMap<KeyRef, L>,
    hash_codes: &HashMap<L, HashCode>,
) -> Result<u64> {
    Ok(revelation_groups(keys, truth, hash_codes)?
        .iter()
        .filter(|g| g.revealed)
        .map(|g| g.size as u64)
        .sum())
}

/// Output of one merge.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub keys: usize,
    pub pairs: u128,
    pub edges: Vec<MatchEdge>,
    pub clusters: Vec<Cluster>,
    pub conflicted_clusters: usize,
    pub false_matches: Option<u64>,
    pub missed_matches: Option<u64>,
    pub total_errors: Option<u64>,
    pub revelations: Option<u64>,
}

/// Ground truth for scoring a merge: a value label per key and, optionally,
/// the true hash code per label for revelation scoring.
pub struct Truth<'a, L> {
    pub labels: &'a HashMap<KeyRef, L>,
    pub hash_codes: Option<&'a HashMap<L, HashCode>>,
}

/// Matches, clusters, and (with truth) scores a key set.
pub fn merge<L: Eq + Hash>(keys: &[NoisyKey], t: u32, truth: Option<Truth<'_, L>>) -> Result<MatchReport> {
    let edges = match_pairs(keys, t)?;
    let clusters = cluster_components(&edges, keys)?;
    let mut per_source: BTreeMap<u32, u128> = BTreeMap::new();
    for k in keys {
        *per_source.entry(k.source_id).or_default() += 1;
    }
    let total: u128 = per_source.values().sum();
    let pairs = total * total.saturating_sub(1) / 2
        - per_source.values().map(|&c| c * c.saturating_sub(1) / 2).sum::<u128>();
    let mut report = MatchReport {
        keys: keys.len(),
        pairs,
        conflicted_clusters: clusters.iter().filter(|c| c.conflicted).count(),
        edges,
        clusters,
        false_matches: None,
        missed_matches: None,
        total_errors: None,
        revelations: None,
    };
    if let Some(truth) = truth {
        let score = score_matching(&report.edges, keys, truth.labels)?;
        report.false_matches = Some(score.false_matches);
        report.missed_matches = Some(score.missed_matches);
        report.total_errors = Some(score.false_matches + score.missed_matches);
        if let Some(codes) = truth.hash_codes {
            report.revelations = Some(score_revelation(keys, truth.labels, codes)?);
        }
    }
    Ok(report)
}

impl MatchReport {
    /// Line-oriented `name=value` rendering. Count fields come first; then
    /// one `edge=` line per match and one `cluster=` line per cluster.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "keys={}", self.keys);
        let _ = writeln!(out, "pairs={}", self.pairs);
        let _ = writeln!(out, "edges={}", self.edges.len());
        let _ = writeln!(out, "clusters={}", self.clusters.len());
        let _ = writeln!(out, "conflicted_clusters={}", self.conflicted_clusters);
        let optional = [
            ("false_matches", self.false_matches),
            ("missed_matches", self.missed_matches),
            ("total_errors", self.total_errors),
            ("revelations", self.revelations),
        ];
        for (name, value) in optional {
            if let Some(v) = value {
                let _ = writeln!(out, "{name}={v}");
            }
        }
        for e in &self.edges {
            let _ = writeln!(out, "edge={},{},{}", e.left, e.right, e.distance);
        }
        for (i, c) in self.clusters.iter().enumerate() {
            let members: Vec<String> = c.members.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(
                out,
                "cluster={},{},{}",
                i,
                u8::from(c.conflicted),
                members.join(" ")
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(bits: &str, s: u32, k: u64) -> NoisyKey {
        NoisyKey::new(Bits::parse(bits).unwrap(), s, k)
    }

    #[test]
    fn distance_two_example() {
        let keys = [key("00011", 0, 0), key("00110", 1, 0)];
        let e = match_pairs(&keys, 3).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].distance, 2);
        assert!(match_pairs(&keys, 2).unwrap().is_empty());
    }

    #[test]
    fn identical_cross_source_keys_match_at_zero() {
        let keys = [key("1011", 2, 5), key("1011", 1, 9)];
        let e = match_pairs(&keys, 1).unwrap();
        assert_eq!(
            e,
            vec![MatchEdge {
                left: KeyRef::new(1, 9),
                right: KeyRef::new(2, 5),
                distance: 0
            }]
        );
    }

    #[test]
    fn same_source_pairs_never_match() {
        let keys = [key("1011", 1, 0), key("1011", 1, 1)];
        assert!(match_pairs(&keys, 4).unwrap().is_empty());
    }

    #[test]
    fn match_input_errors() {
        let keys = [key("1011", 1, 0), key("10110", 2, 1)];
        assert!(matches!(match_pairs(&keys, 1), Err(Error::InvalidInput(_))));
        let keys = [key("1011", 1, 0), key("1010", 2, 1)];
        assert!(match_pairs(&keys, 0).is_err());
        assert!(match_pairs(&keys, 5).is_err());
        let dup = [key("1011", 1, 0), key("1010", 1, 0)];
        assert!(match_pairs(&dup, 2).is_err());
        assert!(match_pairs(&[], 3).unwrap().is_empty());
    }

    #[test]
    fn clusters_without_edges_are_singletons() {
        let keys = [key("00", 0, 0), key("01", 1, 0), key("11", 2, 0)];
        let c = cluster_components(&[], &keys).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|c| c.members.len() == 1 && !c.conflicted));
    }

    #[test]
    fn clusters_are_transitive() {
        let (a1, b1, c1) = (KeyRef::new(0, 1), KeyRef::new(1, 1), KeyRef::new(2, 1));
        let keys = [key("0", 0, 1), key("0", 1, 1), key("0", 2, 1)];
        let edges = [
            MatchEdge { left: a1, right: b1, distance: 0 },
            MatchEdge { left: b1, right: c1, distance: 0 },
        ];
        let c = cluster_components(&edges, &keys).unwrap();
        assert_eq!(c, vec![Cluster { members: vec![a1, b1, c1], conflicted: false }]);
    }

    #[test]
    fn shared_source_component_is_conflicted() {
        let (a1, a2, b1) = (KeyRef::new(0, 1), KeyRef::new(0, 2), KeyRef::new(1, 1));
        let keys = [key("0", 0, 1), key("0", 0, 2), key("0", 1, 1)];
        let edges = [
            MatchEdge { left: a1, right: b1, distance: 0 },
            MatchEdge { left: a2, right: b1, distance: 0 },
        ];
        let c = cluster_components(&edges, &keys).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].conflicted);
        let stray = [MatchEdge { left: a1, right: KeyRef::new(9, 9), distance: 0 }];
        assert!(cluster_components(&stray, &keys).is_err());
    }

    fn labels(pairs: &[(u32, u64, &'static str)]) -> HashMap<KeyRef, &'static str> {
        pairs.iter().map(|&(s, k, l)| (KeyRef::new(s, k), l)).collect()
    }

    #[test]
    fn perfect_and_empty_matchings() {
        let keys = [key("00", 0, 0), key("00", 1, 0), key("11", 0, 1), key("11", 1, 1)];
        let truth = labels(&[(0, 0, "a"), (1, 0, "a"), (0, 1, "b"), (1, 1, "b")]);
        let edges = match_pairs(&keys, 1).unwrap();
        assert_eq!(score_matching(&edges, &keys, &truth).unwrap(), MatchScore::default());
        let none = score_matching(&[], &keys, &truth).unwrap();
        assert_eq!(none, MatchScore { false_matches: 0, missed_matches: 2 });
    }

    #[test]
    fn planted_miss_and_false_match() {
        // Three sources. Value "x" is held by all three; source 2's copy is
        // noisy enough to miss both partners at t = 2, but source 1's "x"
        // sits within distance 1 of source 2's "y".
        let keys = [
            key("000000", 0, 0), // x
            key("000000", 1, 0), // x
            key("110000", 2, 0), // x, far from both
            key("001111", 1, 1), // y
            key("001110", 2, 1), // y, distance 1 from 1:1
            key("111111", 0, 1), // z, alone
        ];
        let truth = labels(&[(0, 0, "x"), (1, 0, "x"), (2, 0, "x"), (1, 1, "y"), (2, 1, "y"), (0, 1, "z")]);
        // Plant a false match between 0:1 (z) and 1:1 (y) by hand.
        let mut edges = match_pairs(&keys, 2).unwrap();
        edges.push(MatchEdge { left: KeyRef::new(0, 1), right: KeyRef::new(1, 1), distance: 2 });
        edges.sort();
        // Same-value pairs: x has 3, y has 1; matched: (0:0,1:0), (1:1,2:1).
        // x pairs (0:0,2:0) and (1:0,2:0) are at distance 2: two misses.
        let s = score_matching(&edges, &keys, &truth).unwrap();
        assert_eq!(s, MatchScore { false_matches: 1, missed_matches: 2 });
        assert!(score_matching(&edges, &keys[..5], &labels(&[(0, 0, "x")])).is_err());
    }

    #[test]
    fn revelation_cases() {
        let code = HashCode(Bits::parse("0000").unwrap());
        let codes: HashMap<&str, HashCode> = [("v", code)].into_iter().collect();

        let one = [key("0000", 0, 0)];
        let truth = labels(&[(0, 0, "v")]);
        assert_eq!(score_revelation(&one, &truth, &codes).unwrap(), 1);

        // Disjoint single flips: every flipped position ties 1–1.
        let two = [key("1000", 0, 0), key("0100", 1, 0)];
        let truth = labels(&[(0, 0, "v"), (1, 0, "v")]);
        assert_eq!(score_revelation(&two, &truth, &codes).unwrap(), 2);

        // All three flipped in position 0: majority overrides.
        let three = [key("1000", 0, 0), key("1000", 1, 0), key("1000", 2, 0)];
        let truth = labels(&[(0, 0, "v"), (1, 0, "v"), (2, 0, "v")]);
        assert_eq!(score_revelation(&three, &truth, &codes).unwrap(), 0);

        let missing: HashMap<&str, HashCode> = HashMap::new();
        assert!(score_revelation(&one, &labels(&[(0, 0, "v")]), &missing).is_err());
    }

    #[test]
    fn report_text() {
        let keys = [key("0000", 0, 0), key("0001", 1, 0), key("1111", 1, 1)];
        let truth = labels(&[(0, 0, "a"), (1, 0, "a"), (1, 1, "b")]);
        let r = merge(&keys, 2, Some(Truth { labels: &truth, hash_codes: None })).unwrap();
        let text = r.to_text();
        assert!(text.starts_with("keys=3\npairs=2\nedges=1\nclusters=2\nconflicted_clusters=0\n"));
        assert!(text.contains("false_matches=0\nmissed_matches=0\ntotal_errors=0\n"));
        assert!(!text.contains("revelations="));
        assert!(text.contains("edge=0:0,1:0,1\n"));
        assert!(text.contains("cluster=0,0,0:0 1:0\ncluster=1,0,1:1\n"));
    }
}
