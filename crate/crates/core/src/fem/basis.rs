//! Nodal Lagrange basis of degree `k` on the reference triangle.

/// Local nodes are the barycentric lattice points `(a0, a1, a2) / k`, with
/// `a0 + a1 + a2 = k`, ordered by `a2` then `a1`.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    degree: usize,
    lattice: Vec<[usize; 3]>,
}

/// Reference coordinates of the local vertices.
pub const REFERENCE_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

impl LagrangeBasis {
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1);
        let mut lattice = Vec::with_capacity((degree + 1) * (degree + 2) / 2);
        for a2 in 0..=degree {
            for a1 in 0..=degree - a2 {
                lattice.push([degree - a1 - a2, a1, a2]);
            }
        }
        Self { degree, lattice }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn lattice(&self) -> &[[usize; 3]] {
        &self.lattice
    }

    /// Reference coordinates of local node `i`.
    pub fn node(&self, i: usize) -> [f64; 2] {
        let k = self.degree as f64;
        let [_, a1, a2] = self.lattice[i];
        [a1 as f64 / k, a2 as f64 / k]
    }

    /// `P_a(t) = prod_{m<a} (k t - m) / (a - m)` and its derivative.
    fn factor(&self, a: usize, t: f64) -> (f64, f64) {
        let k = self.degree as f64;
        let mut value = 1.0;
        let mut deriv = 0.0;
        for m in 0..a {
            let denom = (a - m) as f64;
            let f = (k * t - m as f64) / denom;
            deriv = deriv * f + value * k / denom;
            value *= f;
        }
        (value, deriv)
    }

    /// Values of all local basis functions at reference point `xi`.
    pub fn values(&self, xi: [f64; 2], out: &mut [f64]) {
        let lam = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        for (o, a) in out.iter_mut().zip(&self.lattice) {
            *o = (0..3).map(|c| self.factor(a[c], lam[c]).0).product();
        }
    }

    /// Reference gradients of all local basis functions at `xi`.
    pub fn gradients(&self, xi: [f64; 2], out: &mut [[f64; 2]]) {
        let lam = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        for (o, a) in out.iter_mut().zip(&self.lattice) {
            let (p0, d0) = self.factor(a[0], lam[0]);
            let (p1, d1) = self.factor(a[1], lam[1]);
            let (p2, d2) = self.factor(a[2], lam[2]);
            *o = [-d0 * p1 * p2 + p0 * d1 * p2, -d0 * p1 * p2 + p0 * p1 * d2];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinal_at_lattice_nodes() {
        for k in 1..=4 {
            let b = LagrangeBasis::new(k);
            assert_eq!(b.len(), (k + 1) * (k + 2) / 2);
            let mut v = vec![0.0; b.len()];
            for i in 0..b.len() {
                b.values(b.node(i), &mut v);
                for (j, &x) in v.iter().enumerate() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((x - expected).abs() < 1e-13, "k={k} i={i} j={j} {x}");
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let b = LagrangeBasis::new(3);
        let xi = [0.23, 0.41];
        let n = b.len();
        let mut g = vec![[0.0; 2]; n];
        b.gradients(xi, &mut g);
        let (mut vp, mut vm) = (vec![0.0; n], vec![0.0; n]);
        let eps = 1e-6;
        for dir in 0..2 {
            let mut p = xi;
            let mut m = xi;
            p[dir] += eps;
            m[dir] -= eps;
            b.values(p, &mut vp);
            b.values(m, &mut vm);
            for i in 0..n {
                let fd = (vp[i] - vm[i]) / (2.0 * eps);
                assert!((fd - g[i][dir]).abs() < 1e-7);
            }
        }
    }
}
