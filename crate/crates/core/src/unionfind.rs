/// Disjoint-set forest with union by size and path halving. Sizes live at
/// the roots.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        assert!(n < u32::MAX as usize, "union-find capacity exceeded");
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            components: n,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    #[inline]
    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Root lookup without compression.
    pub fn find_const(&self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            x = self.parent[x] as usize;
        }
        x
    }

    /// Merge the sets of `a` and `b`; returns the new root and the two old
    /// sizes when they were distinct.
    #[inline]
    pub fn union(&mut self, a: usize, b: usize) -> Option<(usize, u32, u32)> {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        let (sa, sb) = (self.size[ra], self.size[rb]);
        if sa < sb {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] = sa + sb;
        self.components -= 1;
        Some((ra, sa, sb))
    }

    pub fn size_of_root(&self, root: usize) -> u32 {
        self.size[root]
    }

    pub fn size_of(&mut self, x: usize) -> u32 {
        let r = self.find(x);
        self.size[r]
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_root(&self, x: usize) -> bool {
        self.parent[x] as usize == x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_and_counts() {
        let mut uf = UnionFind::new(6);
        assert!(uf.union(0, 1).is_some());
        assert!(uf.union(2, 3).is_some());
        assert!(uf.union(1, 0).is_none());
        assert_eq!(uf.components(), 4);
        uf.union(3, 0);
        assert_eq!(uf.size_of(2), 4);
        assert_eq!(uf.find(1), uf.find(3));
        assert_ne!(uf.find(4), uf.find(5));
    }
}
