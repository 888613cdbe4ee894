//! 2-SAT over boolean variables via implication-graph SCCs (Tarjan).
//!
//! Literal `2v` is "v is true", `2v + 1` is "v is false".

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lit(usize);

impl Lit {
    pub fn pos(v: usize) -> Lit {
        Lit(2 * v)
    }

    pub fn neg(v: usize) -> Lit {
        Lit(2 * v + 1)
    }

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

#[derive(Clone, Debug)]
pub struct TwoSat {
    vars: usize,
    graph: Vec<Vec<usize>>,
}

impl TwoSat {
    pub fn new(vars: usize) -> Self {
        TwoSat { vars, graph: vec![Vec::new(); 2 * vars] }
    }

    /// Adds the clause `a ∨ b`.
    pub fn add_clause(&mut self, a: Lit, b: Lit) {
        self.graph[a.not().0].push(b.0);
        self.graph[b.not().0].push(a.0);
    }

    /// `i == j`.
    pub fn add_equal(&mut self, i: usize, j: usize) {
        self.add_clause(Lit::pos(i), Lit::neg(j));
        self.add_clause(Lit::neg(i), Lit::pos(j));
    }

    /// `i != j`.
    pub fn add_differ(&mut self, i: usize, j: usize) {
        self.add_clause(Lit::pos(i), Lit::pos(j));
        self.add_clause(Lit::neg(i), Lit::neg(j));
    }

    /// Satisfying assignment, or `Err(v)` for a variable whose literals share an SCC.
    pub fn solve(&self) -> Result<Vec<bool>, usize> {
        let comp = self.components();
        (0..self.vars)
            .map(|v| {
                let (t, f) = (comp[2 * v], comp[2 * v + 1]);
                if t == f {
                    Err(v)
                } else {
                    // Tarjan numbers SCCs in reverse topological order.
                    Ok(t < f)
                }
            })
            .collect()
    }

    /// Iterative Tarjan; returns the SCC id of every literal.
    fn components(&self) -> Vec<usize> {
        let n = self.graph.len();
        const UNSEEN: usize = usize::MAX;
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut comp = vec![UNSEEN; n];
        let mut stack = Vec::new();
        let mut next_index = 0;
        let mut next_comp = 0;
        for root in 0..n {
            if index[root] != UNSEEN {
                continue;
            }
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut edge)) = call.last_mut() {
                if let Some(&w) = self.graph[v].get(*edge) {
                    *edge += 1;
                    if index[w] == UNSEEN {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                    continue;
                }
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
        comp
    }
}
