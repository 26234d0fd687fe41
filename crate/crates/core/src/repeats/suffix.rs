// suffix array, LCP array and bottom-up LCP-interval traversal

/// Suffix array by prefix doubling over pre-ranked symbols.
pub(crate) fn suffix_array(ranks: &[u32]) -> Vec<usize> {
    let n = ranks.len();
    let mut sa: Vec<usize> = (0..n).collect();
    if n <= 1 {
        return sa;
    }
    let mut rank: Vec<u64> = ranks.iter().map(|&r| u64::from(r) + 1).collect();
    let mut tmp = vec![0u64; n];
    let mut k = 1;
    loop {
        let key = |i: usize, rank: &[u64]| (rank[i], if i + k < n { rank[i + k] } else { 0 });
        sa.sort_unstable_by_key(|&i| key(i, &rank));
        tmp[sa[0]] = 1;
        for w in 1..n {
            let bump = key(sa[w], &rank) != key(sa[w - 1], &rank);
            tmp[sa[w]] = tmp[sa[w - 1]] + u64::from(bump);
        }
        std::mem::swap(&mut rank, &mut tmp);
        if rank[sa[n - 1]] as usize == n {
            break;
        }
        k *= 2;
    }
    sa
}

/// Kasai et al.: `lcp[i]` is the longest common prefix of suffixes `sa[i-1]`
/// and `sa[i]`; `lcp[0] = 0`.
pub(crate) fn lcp_array(seq: &[u32], sa: &[usize]) -> Vec<usize> {
    let n = seq.len();
    let mut rank = vec![0usize; n];
    for (i, &s) in sa.iter().enumerate() {
        rank[s] = i;
    }
    let mut lcp = vec![0usize; n];
    let mut h = 0usize;
    for i in 0..n {
        if rank[i] > 0 {
            let j = sa[rank[i] - 1];
            while i + h < n && j + h < n && seq[i + h] == seq[j + h] {
                h += 1;
            }
            lcp[rank[i]] = h;
            h = h.saturating_sub(1);
        } else {
            h = 0;
        }
    }
    lcp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LeftContext {
    None,
    Same(u32),
    Diverse,
}

impl LeftContext {
    fn merge(self, other: LeftContext) -> LeftContext {
        match (self, other) {
            (LeftContext::None, x) | (x, LeftContext::None) => x,
            (LeftContext::Same(a), LeftContext::Same(b)) if a == b => LeftContext::Same(a),
            _ => LeftContext::Diverse,
        }
    }
}

/// A repeat found by the traversal: `len` symbols starting at `start`,
/// occurring `count` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RawRepeat {
    pub start: usize,
    pub len: usize,
    pub count: usize,
}

/// Reports every lcp-interval (internal suffix-tree node) whose occurrences
/// have at least two distinct left contexts. The start and end of the
/// sequence act as unique sentinels.
pub(crate) fn maximal_repeat_intervals(seq: &[u32]) -> Vec<RawRepeat> {
    let n = seq.len();
    if n < 2 {
        return Vec::new();
    }
    let sa = suffix_array(seq);
    let lcp = lcp_array(seq, &sa);
    let leaf = |i: usize| {
        if sa[i] == 0 {
            LeftContext::Diverse
        } else {
            LeftContext::Same(seq[sa[i] - 1])
        }
    };

    struct Node {
        lcp: usize,
        lb: usize,
        left: LeftContext,
    }
    let mut out = Vec::new();
    let mut stack = vec![Node {
        lcp: 0,
        lb: 0,
        left: LeftContext::None,
    }];
    for i in 0..n {
        let next = if i + 1 < n { lcp[i + 1] } else { 0 };
        let mut lb = i;
        let mut carry = leaf(i);
        while next < stack.last().map_or(0, |t| t.lcp) {
            let mut node = stack.pop().expect("non-empty stack");
            node.left = node.left.merge(carry);
            if node.left == LeftContext::Diverse {
                out.push(RawRepeat {
                    start: sa[node.lb],
                    len: node.lcp,
                    count: i - node.lb + 1,
                });
            }
            lb = node.lb;
            carry = node.left;
        }
        let top = stack.last_mut().expect("root stays on the stack");
        if next > top.lcp {
            stack.push(Node {
                lcp: next,
                lb,
                left: carry,
            });
        } else {
            top.left = top.left.merge(carry);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_sa(seq: &[u32]) -> Vec<usize> {
        let mut sa: Vec<usize> = (0..seq.len()).collect();
        sa.sort_by(|&a, &b| seq[a..].cmp(&seq[b..]));
        sa
    }

    #[test]
    fn suffix_array_matches_naive_sort() {
        let cases: [&[u32]; 5] = [
            &[0, 1, 2, 0, 1, 2],
            &[0, 0, 0, 0],
            &[3, 1, 2, 1, 2, 1, 0],
            &[5],
            &[],
        ];
        for seq in cases {
            assert_eq!(suffix_array(seq), naive_sa(seq), "{seq:?}");
        }
    }

    #[test]
    fn lcp_of_banana() {
        // b a n a n a
        let seq = [1, 0, 2, 0, 2, 0];
        let sa = suffix_array(&seq);
        assert_eq!(sa, [5, 3, 1, 0, 4, 2]);
        assert_eq!(lcp_array(&seq, &sa), [0, 1, 3, 0, 0, 2]);
    }
}
