//! Dense indexing of pre- and post-decision states and the partial order
//! used by the monotone projection.
//!
//! Pre-decision index: `((ps * |R| + r) * |L| + l) * |B| + prev`.
//! Post-decision index: `pre_index * |B| + bid`.
//! Both keep each price state's sub-lattice contiguous.

use serde::{Deserialize, Serialize};

use crate::market::{BidGrid, MarketConfig, PostState, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Pre,
    Post,
}

#[derive(Debug, Clone)]
pub struct StateSpace {
    r_levels: usize,
    l_levels: usize,
    n_pairs: usize,
    n_levels: usize,
    n_price_states: usize,
    /// Immediate successors of each pair: `(low + 1, high)` and `(low, high + 1)`.
    pair_succ: Vec<[Option<u32>; 2]>,
    pairs_above: Vec<Vec<u32>>,
    pairs_below: Vec<Vec<u32>>,
}

impl StateSpace {
    pub fn new(cfg: &MarketConfig, n_price_states: usize) -> StateSpace {
        StateSpace::from_parts(cfg.r_max, cfg.l_max, &cfg.grid, n_price_states)
    }

    pub fn from_parts(r_max: u32, l_max: u32, grid: &BidGrid, n_price_states: usize) -> StateSpace {
        let n_pairs = grid.num_pairs();
        let mut pair_succ = Vec::with_capacity(n_pairs);
        let mut pairs_above = vec![Vec::new(); n_pairs];
        let mut pairs_below = vec![Vec::new(); n_pairs];
        for p in 0..n_pairs {
            let (lo, hi) = grid.pair_levels(p);
            let up_lo = if lo + 1 <= hi {
                grid.pair_index(lo + 1, hi).map(|i| i as u32)
            } else {
                None
            };
            let up_hi = grid.pair_index(lo, hi + 1).map(|i| i as u32);
            pair_succ.push([up_lo, up_hi]);
            for q in 0..n_pairs {
                if grid.pair_le(p, q) {
                    pairs_above[p].push(q as u32);
                }
                if grid.pair_le(q, p) {
                    pairs_below[p].push(q as u32);
                }
            }
        }
        StateSpace {
            r_levels: r_max as usize + 1,
            l_levels: l_max as usize + 1,
            n_pairs,
            n_levels: grid.num_levels(),
            n_price_states: n_price_states.max(1),
            pair_succ,
            pairs_above,
            pairs_below,
        }
    }

    pub fn r_levels(&self) -> usize {
        self.r_levels
    }

    pub fn l_levels(&self) -> usize {
        self.l_levels
    }

    pub fn num_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn num_price_states(&self) -> usize {
        self.n_price_states
    }

    pub fn num_pre(&self) -> usize {
        self.n_price_states * self.r_levels * self.l_levels * self.n_pairs
    }

    pub fn num_post(&self) -> usize {
        self.num_pre() * self.n_pairs
    }

    pub fn num_states(&self, layout: Layout) -> usize {
        match layout {
            Layout::Pre => self.num_pre(),
            Layout::Post => self.num_post(),
        }
    }

    /// Size of one price state's sub-lattice.
    pub fn block_size(&self, layout: Layout) -> usize {
        self.num_states(layout) / self.n_price_states
    }

    /// Cardinality when each bid dimension ranges over every grid level
    /// independently (`|R| |L| n^2 |P|`, or `n^4` for post-decision states).
    pub fn full_grid_cardinality(&self, layout: Layout) -> u128 {
        let n2 = (self.n_levels * self.n_levels) as u128;
        let base = (self.r_levels * self.l_levels * self.n_price_states) as u128;
        match layout {
            Layout::Pre => base * n2,
            Layout::Post => base * n2 * n2,
        }
    }

    #[inline]
    pub fn pre_index(&self, s: &State) -> usize {
        debug_assert!((s.resource as usize) < self.r_levels);
        debug_assert!((s.lifetime as usize) < self.l_levels);
        debug_assert!(s.prev_bid < self.n_pairs && s.price_state < self.n_price_states);
        ((s.price_state * self.r_levels + s.resource as usize) * self.l_levels
            + s.lifetime as usize)
            * self.n_pairs
            + s.prev_bid
    }

    #[inline]
    pub fn post_index(&self, s: &PostState) -> usize {
        self.pre_index(&s.state) * self.n_pairs + s.bid
    }

    #[inline]
    pub fn pre_state(&self, index: usize) -> State {
        let prev_bid = index % self.n_pairs;
        let rest = index / self.n_pairs;
        let lifetime = (rest % self.l_levels) as u32;
        let rest = rest / self.l_levels;
        let resource = (rest % self.r_levels) as u32;
        let price_state = rest / self.r_levels;
        State {
            resource,
            lifetime,
            prev_bid,
            price_state,
        }
    }

    #[inline]
    pub fn post_state(&self, index: usize) -> PostState {
        PostState {
            state: self.pre_state(index / self.n_pairs),
            bid: index % self.n_pairs,
        }
    }

    pub fn pair_above(&self, pair: usize) -> &[u32] {
        &self.pairs_above[pair]
    }

    pub fn pair_below(&self, pair: usize) -> &[u32] {
        &self.pairs_below[pair]
    }

    pub fn pair_successors(&self, pair: usize) -> impl Iterator<Item = usize> + '_ {
        self.pair_succ[pair].iter().flatten().map(|&p| p as usize)
    }

    /// `a ≼ b` on pre-decision states.
    pub fn pre_le(&self, grid: &BidGrid, a: &State, b: &State) -> bool {
        a.price_state == b.price_state
            && a.resource <= b.resource
            && a.lifetime <= b.lifetime
            && grid.pair_le(a.prev_bid, b.prev_bid)
    }

    /// `a ≼ᵇ b` on post-decision states.
    pub fn post_le(&self, grid: &BidGrid, a: &PostState, b: &PostState) -> bool {
        self.pre_le(grid, &a.state, &b.state) && grid.pair_le(a.bid, b.bid)
    }

    /// Immediate successors of a state in the lattice order. Every comparable
    /// pair is connected by a chain of such steps, so checking them suffices
    /// for a full monotonicity audit.
    pub fn successors(&self, layout: Layout, index: usize, out: &mut Vec<usize>) {
        out.clear();
        match layout {
            Layout::Pre => {
                let s = self.pre_state(index);
                self.pre_successors(&s, out);
            }
            Layout::Post => {
                let p = self.post_state(index);
                let mut pre = Vec::with_capacity(4);
                self.pre_successors(&p.state, &mut pre);
                out.extend(pre.into_iter().map(|i| i * self.n_pairs + p.bid));
                let base = index - p.bid;
                out.extend(self.pair_successors(p.bid).map(|b| base + b));
            }
        }
    }

    fn pre_successors(&self, s: &State, out: &mut Vec<usize>) {
        if (s.resource as usize) + 1 < self.r_levels {
            out.push(self.pre_index(&State {
                resource: s.resource + 1,
                ..*s
            }));
        }
        if (s.lifetime as usize) + 1 < self.l_levels {
            out.push(self.pre_index(&State {
                lifetime: s.lifetime + 1,
                ..*s
            }));
        }
        for p in self.pair_successors(s.prev_bid) {
            out.push(self.pre_index(&State { prev_bid: p, ..*s }));
        }
    }

    /// Calls `f` with the index of every state `≽` (when `upward`) or `≼` the
    /// given one, including the state itself.
    pub fn for_each_comparable(
        &self,
        layout: Layout,
        index: usize,
        upward: bool,
        mut f: impl FnMut(usize),
    ) {
        let (pre, bid) = match layout {
            Layout::Pre => (self.pre_state(index), None),
            Layout::Post => {
                let p = self.post_state(index);
                (p.state, Some(p.bid))
            }
        };
        let (r_range, l_range) = if upward {
            (
                pre.resource as usize..self.r_levels,
                pre.lifetime as usize..self.l_levels,
            )
        } else {
            (0..pre.resource as usize + 1, 0..pre.lifetime as usize + 1)
        };
        let prev_set = if upward {
            self.pair_above(pre.prev_bid)
        } else {
            self.pair_below(pre.prev_bid)
        };
        let bid_set: &[u32] = match bid {
            Some(b) if upward => self.pair_above(b),
            Some(b) => self.pair_below(b),
            None => &[],
        };
        let ps_base = pre.price_state * self.r_levels;
        for r in r_range {
            for l in l_range.clone() {
                let rl = ((ps_base + r) * self.l_levels + l) * self.n_pairs;
                for &prev in prev_set {
                    let pre_idx = rl + prev as usize;
                    match layout {
                        Layout::Pre => f(pre_idx),
                        Layout::Post => {
                            let base = pre_idx * self.n_pairs;
                            for &b in bid_set {
                                f(base + b as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// A pair of comparable states whose values are out of order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub lower: usize,
    pub upper: usize,
    pub lower_value: f64,
    pub upper_value: f64,
}

/// Checks `values[s] <= values[s']` for every `s ≼ s'` in one period's slice.
pub fn audit_monotone(space: &StateSpace, layout: Layout, values: &[f64]) -> Option<Violation> {
    debug_assert_eq!(values.len(), space.num_states(layout));
    let mut succ = Vec::with_capacity(6);
    for (i, &v) in values.iter().enumerate() {
        space.successors(layout, i, &mut succ);
        for &j in &succ {
            if values[j] < v {
                return Some(Violation {
                    lower: i,
                    upper: j,
                    lower_value: v,
                    upper_value: values[j],
                });
            }
        }
    }
    None
}
