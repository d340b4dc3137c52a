use std::collections::VecDeque;

use super::{Adjacency, Dag};
use crate::error::{param, Result};

fn check_query(dag: &Dag, i: usize, j: usize, s: &[usize]) -> Result<Vec<bool>> {
    let p = dag.p();
    if i >= p || j >= p || s.iter().any(|&v| v >= p) {
        return Err(param("node index out of range"));
    }
    if i == j {
        return Err(param(format!("d-separation query needs distinct nodes, got {i} twice")));
    }
    let mut in_s = vec![false; p];
    for &v in s {
        if v == i || v == j {
            return Err(param(format!("conditioning set {s:?} contains an endpoint of ({i}, {j})")));
        }
        in_s[v] = true;
    }
    Ok(in_s)
}

/// d-separation of `i` and `j` given `s` by reachability ("Bayes ball"):
/// a breadth-first search over (node, direction) states that only follows
/// active trails.
pub fn d_separated(dag: &Dag, i: usize, j: usize, s: &[usize]) -> Result<bool> {
    let in_s = check_query(dag, i, j, s)?;
    let p = dag.p();

    // Ancestors of S (including S) decide whether a collider is open.
    let mut anc = in_s.clone();
    let mut stack: Vec<usize> = s.to_vec();
    while let Some(v) = stack.pop() {
        for &u in dag.parents(v) {
            if !anc[u] {
                anc[u] = true;
                stack.push(u);
            }
        }
    }

    const UP: usize = 0; // arrived from a child
    const DOWN: usize = 1; // arrived from a parent
    let mut visited = vec![[false; 2]; p];
    let mut queue = VecDeque::from([(i, UP)]);
    while let Some((y, dir)) = queue.pop_front() {
        if visited[y][dir] {
            continue;
        }
        visited[y][dir] = true;
        if y == j && !in_s[y] {
            return Ok(false);
        }
        if dir == UP && !in_s[y] {
            queue.extend(dag.parents(y).iter().map(|&z| (z, UP)));
            queue.extend(dag.children(y).iter().map(|&z| (z, DOWN)));
        } else if dir == DOWN {
            if !in_s[y] {
                queue.extend(dag.children(y).iter().map(|&z| (z, DOWN)));
            }
            if anc[y] {
                queue.extend(dag.parents(y).iter().map(|&z| (z, UP)));
            }
        }
    }
    Ok(true)
}

/// d-separation by enumerating every simple path between `i` and `j` and
/// checking the chain/fork/collider blocking rules on each. Exponential; used
/// as a reference for [`d_separated`].
pub fn d_separated_by_paths(dag: &Dag, i: usize, j: usize, s: &[usize]) -> Result<bool> {
    let in_s = check_query(dag, i, j, s)?;
    let p = dag.p();
    let desc: Vec<Vec<bool>> = (0..p).map(|v| dag.descendants_of(v)).collect();
    let collider_open = |m: usize| (0..p).any(|d| desc[m][d] && in_s[d]);

    let blocked = |path: &[usize]| {
        path.windows(3).any(|w| {
            let (a, m, b) = (w[0], w[1], w[2]);
            let collider = dag.has_edge(a, m) && dag.has_edge(b, m);
            if collider {
                !collider_open(m)
            } else {
                in_s[m]
            }
        })
    };

    let mut on_path = vec![false; p];
    let mut path = vec![i];
    on_path[i] = true;
    Ok(!any_open_path(dag, j, &mut path, &mut on_path, &blocked))
}

fn any_open_path(
    dag: &Dag,
    target: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    blocked: &dyn Fn(&[usize]) -> bool,
) -> bool {
    let last = *path.last().expect("path starts non-empty");
    for n in dag.neighbors(last) {
        if on_path[n] {
            continue;
        }
        path.push(n);
        // Prune as soon as the prefix is blocked at an interior node.
        let prefix_blocked = path.len() >= 3 && blocked(&path[path.len() - 3..]);
        if !prefix_blocked {
            if n == target {
                path.pop();
                return true;
            }
            on_path[n] = true;
            let found = any_open_path(dag, target, path, on_path, blocked);
            on_path[n] = false;
            if found {
                path.pop();
                return true;
            }
        }
        path.pop();
    }
    false
}
