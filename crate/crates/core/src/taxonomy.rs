//! Class hierarchy: parsing, validation and tree queries.
//!
//! A [`Taxonomy`] is a rooted tree whose leaves are the K classes. Heights
//! are subtree heights (edges down to the furthest descendant leaf), so
//! every leaf has height 0 and the height of the lowest common ancestor of
//! two distinct leaves is at least 1.
//!
//! Hierarchy files hold one `child<TAB>parent` edge per line. Lines
//! starting with `#` are comments, except for an optional
//! `#classes<TAB>name<TAB>name...` directive that fixes the class order;
//! without it classes are ordered lexicographically by leaf name.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

const CLASS_ORDER_DIRECTIVE: &str = "#classes\t";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: Vec<Node>,
    root: usize,
    /// class index -> node index
    leaves: Vec<usize>,
    /// node index -> class index
    class_of: Vec<Option<usize>>,
    leaf_order: HashMap<String, usize>,
    heights: Vec<usize>,
    depths: Vec<usize>,
}

/// Result of collapsing the tree at a fixed depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collapse {
    /// class index -> collapsed group index
    pub group_of_class: Vec<usize>,
    /// group index -> node index; groups are numbered by first appearance
    /// in class order.
    pub group_nodes: Vec<usize>,
}

impl Collapse {
    pub fn num_groups(&self) -> usize {
        self.group_nodes.len()
    }
}

struct Edge {
    child: String,
    parent: String,
    line: usize,
}

/// Parse hierarchy-file contents into a validated taxonomy.
pub fn parse_taxonomy(text: &str) -> Result<Taxonomy> {
    let mut edges = Vec::new();
    let mut class_order = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some(rest) = raw.strip_prefix(CLASS_ORDER_DIRECTIVE) {
            let names: Vec<String> = rest.split('\t').map(str::to_owned).collect();
            if names.iter().any(String::is_empty) {
                return Err(Error::malformed(line, 1, "empty class name in #classes directive"));
            }
            class_order = Some((names, line));
            continue;
        }
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split('\t');
        let child = fields.next().unwrap_or_default();
        let parent = fields
            .next()
            .ok_or_else(|| Error::malformed(line, raw.len() + 1, "expected `child<TAB>parent`"))?;
        if fields.next().is_some() {
            let col = child.len() + parent.len() + 2;
            return Err(Error::malformed(line, col, "more than two fields"));
        }
        if child.is_empty() {
            return Err(Error::malformed(line, 1, "empty child name"));
        }
        if parent.is_empty() {
            return Err(Error::malformed(line, child.len() + 2, "empty parent name"));
        }
        edges.push(Edge {
            child: child.to_owned(),
            parent: parent.to_owned(),
            line,
        });
    }
    let tax = Taxonomy::build(edges)?;
    match class_order {
        Some((names, line)) => tax.with_class_order(&names).map_err(|e| match e {
            Error::ClassOrderMismatch(msg) => Error::malformed(line, 1, msg),
            other => other,
        }),
        None => Ok(tax),
    }
}

impl Taxonomy {
    /// Build from `(child, parent)` name pairs. Line numbers in errors are
    /// the 1-based positions in the iterator.
    pub fn from_edges<I, S>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let edges = edges
            .into_iter()
            .enumerate()
            .map(|(i, (c, p))| Edge {
                child: c.into(),
                parent: p.into(),
                line: i + 1,
            })
            .collect();
        Self::build(edges)
    }

    fn build(edges: Vec<Edge>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::EmptyHierarchy);
        }
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut names: Vec<String> = Vec::new();
        let mut first_seen: Vec<usize> = Vec::new();
        let mut parent: Vec<Option<usize>> = Vec::new();
        let mut parent_line: Vec<usize> = Vec::new();

        let mut intern = |name: &str, line: usize, names: &mut Vec<String>| -> usize {
            if let Some(&id) = ids.get(name) {
                return id;
            }
            let id = names.len();
            ids.insert(name.to_owned(), id);
            names.push(name.to_owned());
            first_seen.push(line);
            id
        };

        for edge in &edges {
            let c = intern(&edge.child, edge.line, &mut names);
            let p = intern(&edge.parent, edge.line, &mut names);
            parent.resize(names.len(), None);
            parent_line.resize(names.len(), 0);
            if parent[c].is_some() {
                return Err(Error::DuplicateChild {
                    line: edge.line,
                    name: edge.child.clone(),
                    first_line: parent_line[c],
                });
            }
            parent[c] = Some(p);
            parent_line[c] = edge.line;
        }
        let n = names.len();

        // Cycle detection: 0 = unvisited, 1 = on current path, 2 = reaches a root.
        let mut state = vec![0u8; n];
        for start in 0..n {
            let mut path = Vec::new();
            let mut cur = Some(start);
            while let Some(v) = cur {
                match state[v] {
                    2 => break,
                    1 => {
                        return Err(Error::Cycle {
                            line: parent_line[v],
                            node: names[v].clone(),
                        })
                    }
                    _ => {
                        state[v] = 1;
                        path.push(v);
                        cur = parent[v];
                    }
                }
            }
            for v in path {
                state[v] = 2;
            }
        }

        let mut roots = (0..n).filter(|&v| parent[v].is_none());
        let root = roots.next().ok_or(Error::NoRoot)?;
        if let Some(second) = roots.next() {
            return Err(Error::MultipleRoots {
                line: first_seen[second],
                first: names[root].clone(),
                second: names[second].clone(),
            });
        }

        let mut nodes: Vec<Node> = names
            .into_iter()
            .zip(&parent)
            .map(|(name, &parent)| Node {
                name,
                parent,
                children: Vec::new(),
            })
            .collect();
        for v in 0..n {
            if let Some(p) = parent[v] {
                nodes[p].children.push(v);
            }
        }

        let mut leaf_nodes: Vec<usize> = (0..n).filter(|&v| nodes[v].children.is_empty()).collect();
        if leaf_nodes.len() < 2 {
            return Err(Error::TooFewClasses {
                found: leaf_nodes.len(),
            });
        }
        leaf_nodes.sort_by(|&a, &b| nodes[a].name.cmp(&nodes[b].name));

        let (heights, depths) = heights_and_depths(&nodes, root);
        let mut tax = Taxonomy {
            nodes,
            root,
            leaves: Vec::new(),
            class_of: vec![None; n],
            leaf_order: HashMap::new(),
            heights,
            depths,
        };
        tax.set_leaves(leaf_nodes);
        Ok(tax)
    }

    fn set_leaves(&mut self, leaves: Vec<usize>) {
        self.class_of = vec![None; self.nodes.len()];
        self.leaf_order.clear();
        for (class, &node) in leaves.iter().enumerate() {
            self.class_of[node] = Some(class);
            self.leaf_order.insert(self.nodes[node].name.clone(), class);
        }
        self.leaves = leaves;
    }

    /// Reorder classes to follow `names`, which must be a permutation of
    /// the leaf names.
    pub fn with_class_order<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        if names.len() != self.leaves.len() {
            return Err(Error::ClassOrderMismatch(format!(
                "{} names given, hierarchy has {} leaves",
                names.len(),
                self.leaves.len()
            )));
        }
        let mut seen = vec![false; self.leaves.len()];
        let mut leaves = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let class = *self.leaf_order.get(name).ok_or_else(|| {
                Error::ClassOrderMismatch(format!("`{name}` is not a leaf of the hierarchy"))
            })?;
            if std::mem::replace(&mut seen[class], true) {
                return Err(Error::ClassOrderMismatch(format!("`{name}` listed twice")));
            }
            leaves.push(self.leaves[class]);
        }
        let mut out = self.clone();
        out.set_leaves(leaves);
        Ok(out)
    }

    pub fn num_classes(&self) -> usize {
        self.leaves.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, index: usize) -> Result<&Node> {
        self.nodes.get(index).ok_or(Error::InvalidNode {
            index,
            len: self.nodes.len(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Node index of the leaf holding `class`.
    pub fn leaf_node(&self, class: usize) -> Result<usize> {
        self.leaves.get(class).copied().ok_or(Error::InvalidClass {
            index: class,
            classes: self.leaves.len(),
        })
    }

    pub fn class_of_node(&self, node: usize) -> Option<usize> {
        self.class_of.get(node).copied().flatten()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.leaf_order.get(name).copied()
    }

    pub fn class_name(&self, class: usize) -> Option<&str> {
        self.leaves.get(class).map(|&n| self.nodes[n].name.as_str())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.leaves.iter().map(|&n| self.nodes[n].name.clone()).collect()
    }

    pub fn node_height(&self, node: usize) -> Result<usize> {
        self.node(node)?;
        Ok(self.heights[node])
    }

    /// Height of the root, i.e. the largest possible LCA height.
    pub fn height(&self) -> usize {
        self.heights[self.root]
    }

    /// Edges from the root; the root has depth 0.
    pub fn node_depth(&self, node: usize) -> Result<usize> {
        self.node(node)?;
        Ok(self.depths[node])
    }

    pub fn max_leaf_depth(&self) -> usize {
        self.leaves.iter().map(|&n| self.depths[n]).max().unwrap_or(0)
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class < self.leaves.len() {
            Ok(())
        } else {
            Err(Error::InvalidClass {
                index: class,
                classes: self.leaves.len(),
            })
        }
    }

    fn lca_node(&self, mut a: usize, mut b: usize) -> usize {
        while self.depths[a] > self.depths[b] {
            a = self.nodes[a].parent.expect("non-root has parent");
        }
        while self.depths[b] > self.depths[a] {
            b = self.nodes[b].parent.expect("non-root has parent");
        }
        while a != b {
            a = self.nodes[a].parent.expect("non-root has parent");
            b = self.nodes[b].parent.expect("non-root has parent");
        }
        a
    }

    /// Node index of the lowest common ancestor of classes `i` and `j`.
    pub fn lca(&self, i: usize, j: usize) -> Result<usize> {
        self.check_class(i)?;
        self.check_class(j)?;
        Ok(self.lca_node(self.leaves[i], self.leaves[j]))
    }

    /// Height of the lowest common ancestor of classes `i` and `j`; 0 iff `i == j`.
    pub fn lca_height(&self, i: usize, j: usize) -> Result<usize> {
        let node = self.lca(i, j)?;
        Ok(self.heights[node])
    }

    /// Map every class to its ancestor at `depth`, or to itself when the
    /// leaf is shallower than `depth`.
    pub fn collapse_to_depth(&self, depth: usize) -> Result<Collapse> {
        let max = self.max_leaf_depth();
        if depth > max {
            return Err(Error::DepthOutOfRange { depth, max });
        }
        let mut group_index: HashMap<usize, usize> = HashMap::new();
        let mut group_nodes = Vec::new();
        let mut group_of_class = Vec::with_capacity(self.leaves.len());
        for &leaf in &self.leaves {
            let mut node = leaf;
            while self.depths[node] > depth {
                node = self.nodes[node].parent.expect("non-root has parent");
            }
            let g = *group_index.entry(node).or_insert_with(|| {
                group_nodes.push(node);
                group_nodes.len() - 1
            });
            group_of_class.push(g);
        }
        Ok(Collapse {
            group_of_class,
            group_nodes,
        })
    }

    /// Same internal structure with class names redistributed over the leaf
    /// positions by a seeded Fisher–Yates permutation.
    pub fn shuffle_leaves(&self, seed: u64) -> Taxonomy {
        self.shuffle_leaves_with_permutation(seed).0
    }

    /// Like [`shuffle_leaves`](Self::shuffle_leaves), also returning the
    /// permutation `perm`: class `c` of the result sits where class
    /// `perm[c]` sat before, so `C'[c][d] = C[perm[c]][perm[d]]`.
    pub fn shuffle_leaves_with_permutation(&self, seed: u64) -> (Taxonomy, Vec<usize>) {
        let perm = SeededRng::new(seed).permutation(self.leaves.len());
        let mut out = self.clone();
        let new_leaves: Vec<usize> = perm.iter().map(|&p| self.leaves[p]).collect();
        for (class, &node) in new_leaves.iter().enumerate() {
            out.nodes[node].name = self.nodes[self.leaves[class]].name.clone();
        }
        out.set_leaves(new_leaves);
        (out, perm)
    }

    /// Serialize to the hierarchy file format, preserving class order.
    pub fn to_hierarchy_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CLASS_ORDER_DIRECTIVE);
        let names: Vec<&str> = self.leaves.iter().map(|&n| self.nodes[n].name.as_str()).collect();
        out.push_str(&names.join("\t"));
        out.push('\n');
        for node in &self.nodes {
            if let Some(p) = node.parent {
                let _ = writeln!(out, "{}\t{}", node.name, self.nodes[p].name);
            }
        }
        out
    }
}

fn heights_and_depths(nodes: &[Node], root: usize) -> (Vec<usize>, Vec<usize>) {
    let n = nodes.len();
    let mut order = Vec::with_capacity(n);
    let mut depths = vec![0usize; n];
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        order.push(v);
        for &c in &nodes[v].children {
            depths[c] = depths[v] + 1;
            stack.push(c);
        }
    }
    let mut heights = vec![0usize; n];
    for &v in order.iter().rev() {
        heights[v] = nodes[v]
            .children
            .iter()
            .map(|&c| heights[c] + 1)
            .max()
            .unwrap_or(0);
    }
    (heights, depths)
}
