//! Qualitative (support-graph) analysis of finite chains and MDPs.

/// States from which some policy reaches `target` with probability one.
///
/// `choices[x]` lists, per allowed action at `x`, the set of successors with
/// positive probability. An empty successor set means the action leaves to
/// the cemetery, which counts as reaching the target.
pub fn almost_sure_reach(target: &[bool], choices: &[Vec<Vec<usize>>]) -> Vec<bool> {
    let n = target.len();
    let mut keep = vec![true; n];
    loop {
        let mut reach = target.to_vec();
        let mut changed = true;
        while changed {
            changed = false;
            for x in 0..n {
                if !keep[x] || reach[x] {
                    continue;
                }
                let ok = choices[x].iter().any(|succ| {
                    succ.iter().all(|&y| keep[y]) && (succ.is_empty() || succ.iter().any(|&y| reach[y]))
                });
                if ok {
                    reach[x] = true;
                    changed = true;
                }
            }
        }
        if reach == keep {
            return keep;
        }
        keep = reach;
    }
}

/// States reachable from `x` (including `x`) along edges of `succ`.
pub fn reachable_from(succ: &[Vec<usize>], x: usize) -> Vec<bool> {
    let mut seen = vec![false; succ.len()];
    let mut stack = vec![x];
    seen[x] = true;
    while let Some(u) = stack.pop() {
        for &v in &succ[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// States that can reach some member of `set` (members included).
pub fn can_reach(succ: &[Vec<usize>], set: &[bool]) -> Vec<bool> {
    let n = succ.len();
    let mut pred = vec![Vec::new(); n];
    for (u, vs) in succ.iter().enumerate() {
        for &v in vs {
            pred[v].push(u);
        }
    }
    let mut seen = set.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&x| set[x]).collect();
    while let Some(v) = stack.pop() {
        for &u in &pred[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen
}

/// Recurrent states of a substochastic chain: members of closed communicating
/// classes from which no mass leaks.
pub fn recurrent_states(succ: &[Vec<usize>], leaks: &[bool]) -> Vec<bool> {
    let n = succ.len();
    let reach: Vec<Vec<bool>> = (0..n).map(|x| reachable_from(succ, x)).collect();
    (0..n)
        .map(|x| (0..n).filter(|&y| reach[x][y]).all(|y| reach[y][x] && !leaks[y]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn almost_sure_reach_excludes_risky_states() {
        // 0 -> {1, 2}; 1 target; 2 is a trap; 3 has a safe action to 1.
        let target = [false, true, false, false];
        let choices = vec![
            vec![vec![1, 2]],
            vec![],
            vec![vec![2]],
            vec![vec![1, 2], vec![1]],
        ];
        assert_eq!(almost_sure_reach(&target, &choices), vec![false, true, false, true]);
    }

    #[test]
    fn cemetery_counts_as_target() {
        let target = [false, false];
        let choices = vec![vec![vec![1]], vec![vec![]]];
        assert_eq!(almost_sure_reach(&target, &choices), vec![true, true]);
    }

    #[test]
    fn recurrence() {
        // 0 -> 1 <-> 2 closed; 3 -> 3 leaks
        let succ = vec![vec![1], vec![2], vec![1], vec![]];
        let leaks = [false, false, false, true];
        assert_eq!(recurrent_states(&succ, &leaks), vec![false, true, true, false]);
        assert_eq!(can_reach(&succ, &[false, false, true, false]), vec![true, true, true, false]);
    }
}
