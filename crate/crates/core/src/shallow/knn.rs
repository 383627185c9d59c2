//! K-nearest-neighbour classifier backed by a kd-tree.
//!
//! Neighbour ordering is (squared distance, training index) so results are
//! exactly those of a linear scan, which `exact_neighbors` provides for
//! verification. The probability is the positive fraction of the k votes.

pub struct KnnModel {
    points: Vec<Vec<f64>>,
    labels: Vec<bool>,
    neighbors: usize,
    nodes: Vec<Node>,
    root: usize,
}

enum Node {
    Leaf {
        members: Vec<usize>,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Candidate ordering: squared distance first, then training index.
fn worse(a: (f64, usize), b: (f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.1 > b.1,
    }
}

impl KnnModel {
    pub fn fit(inputs: &[Vec<f64>], labels: &[bool], neighbors: usize, leaf_size: usize) -> Self {
        assert!(neighbors >= 1);
        let mut model = KnnModel {
            points: inputs.to_vec(),
            labels: labels.to_vec(),
            neighbors,
            nodes: Vec::new(),
            root: 0,
        };
        let all: Vec<usize> = (0..inputs.len()).collect();
        model.root = model.build(all, leaf_size.max(1));
        model
    }

    fn build(&mut self, mut members: Vec<usize>, leaf_size: usize) -> usize {
        if members.len() <= leaf_size {
            self.nodes.push(Node::Leaf { members });
            return self.nodes.len() - 1;
        }
        // split on the dimension with the largest spread
        let dim_count = self.points[0].len();
        let mut best_dim = 0;
        let mut best_spread = -1.0;
        for d in 0..dim_count {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in &members {
                lo = lo.min(self.points[i][d]);
                hi = hi.max(self.points[i][d]);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = d;
            }
        }
        if best_spread <= 0.0 {
            // all duplicates; no split possible
            self.nodes.push(Node::Leaf { members });
            return self.nodes.len() - 1;
        }
        members.sort_by(|&a, &b| {
            self.points[a][best_dim]
                .total_cmp(&self.points[b][best_dim])
                .then(a.cmp(&b))
        });
        let mid = members.len() / 2;
        let value = self.points[members[mid]][best_dim];
        let right: Vec<usize> = members.split_off(mid);
        let left_node = self.build(members, leaf_size);
        let right_node = self.build(right, leaf_size);
        self.nodes.push(Node::Split {
            dim: best_dim,
            value,
            left: left_node,
            right: right_node,
        });
        self.nodes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// The k nearest training indices by (distance, index), ascending.
    pub fn neighbors_of(&self, query: &[f64]) -> Vec<usize> {
        let k = self.neighbors.min(self.points.len());
        // heap of current k best; front = worst of the best
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k);
        self.search(self.root, query, k, &mut best);
        let mut out = best;
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.into_iter().map(|(_, i)| i).collect()
    }

    fn search(&self, node: usize, query: &[f64], k: usize, best: &mut Vec<(f64, usize)>) {
        match &self.nodes[node] {
            Node::Leaf { members } => {
                for &i in members {
                    let cand = (sq_dist(&self.points[i], query), i);
                    if best.len() < k {
                        best.push(cand);
                        if best.len() == k {
                            // establish the current worst at the end
                            best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                        }
                    } else if worse(*best.last().unwrap(), cand) {
                        best.pop();
                        let pos = best
                            .binary_search_by(|p| {
                                p.0.total_cmp(&cand.0).then(p.1.cmp(&cand.1))
                            })
                            .unwrap_or_else(|e| e);
                        best.insert(pos, cand);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let gap = query[*dim] - value;
                let (near, far) = if gap < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, query, k, best);
                // the far side can hold equal-distance candidates with
                // smaller indices, so prune only on strict excess
                if best.len() < k || gap * gap <= best.last().unwrap().0 {
                    self.search(far, query, k, best);
                }
            }
        }
    }

    /// Brute-force reference with identical ordering.
    pub fn exact_neighbors(&self, query: &[f64]) -> Vec<usize> {
        let k = self.neighbors.min(self.points.len());
        let mut all: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (sq_dist(p, query), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    pub fn predict_proba(&self, input: &[f64]) -> f64 {
        let ids = self.neighbors_of(input);
        let votes = ids.iter().filter(|&&i| self.labels[i]).count();
        votes as f64 / ids.len() as f64
    }
}
