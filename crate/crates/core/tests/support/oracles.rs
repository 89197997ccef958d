//! Direct-formula and brute-force reference implementations for the
//! saliency metrics. Written independently of the library code.

#![allow(dead_code, clippy::needless_range_loop)]

/// Trapezoidal ROC area with one threshold per distinct fixation value,
/// counting every cell at each threshold.
pub fn auc_judd(s: &[f64], fix: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = s.iter().zip(fix).filter(|(_, f)| **f).map(|(v, _)| *v).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let n_pos = fix.iter().filter(|f| **f).count() as f64;
    let n_neg = fix.len() as f64 - n_pos;
    let mut points = vec![(0.0, 0.0), (1.0, 1.0)];
    for t in thresholds {
        let tp = s.iter().zip(fix).filter(|(v, f)| **f && **v >= t).count() as f64 / n_pos;
        let fp = s.iter().zip(fix).filter(|(v, f)| !**f && **v >= t).count() as f64 / n_neg;
        points.push((fp, tp));
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

pub fn nss(s: &[f64], fix: &[bool]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
    if s.iter().all(|v| *v == s[0]) {
        return 0.0;
    }
    let sd = var.max(0.0).sqrt();
    let picked: Vec<f64> = s.iter().zip(fix).filter(|(_, f)| **f).map(|(v, _)| (v - mean) / sd).collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

pub fn cc(a: &[f64], b: &[f64]) -> f64 {
    if a.iter().all(|v| *v == a[0]) || b.iter().all(|v| *v == b[0]) {
        return 0.0;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn sim(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| if x < y { *x } else { *y }).sum()
}

pub fn kl(g: &[f64], m: &[f64], eps: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..g.len() {
        if g[i] > 0.0 {
            total += g[i] * (g[i].ln() - (m[i] + eps).ln());
        }
    }
    total
}

pub fn info_gain(s: &[f64], fix: &[bool], base: &[f64], eps: f64) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for i in 0..s.len() {
        if fix[i] {
            total += ((s[i] + eps) / (base[i] + eps)).ln() / std::f64::consts::LN_2;
            n += 1.0;
        }
    }
    total / n
}

/// Transportation-problem constraints `Σ_j x_ij = a_i`, `Σ_i x_ij = b_j`
/// over the supported rows and columns.
struct Transport {
    rows: Vec<usize>,
    cols: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Transport {
    fn new(a: &[f64], b: &[f64]) -> Self {
        let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
        let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
        Self {
            a: rows.iter().map(|&i| a[i]).collect(),
            b: cols.iter().map(|&j| b[j]).collect(),
            rows,
            cols,
        }
    }

    fn vars(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// Equality system `A x = rhs`, one row per supply then per demand.
    fn system(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (m, n) = (self.rows.len(), self.cols.len());
        let mut a = vec![vec![0.0; m * n]; m + n];
        for i in 0..m {
            for j in 0..n {
                a[i][i * n + j] = 1.0;
                a[m + j][i * n + j] = 1.0;
            }
        }
        let rhs = self.a.iter().chain(&self.b).cloned().collect();
        (a, rhs)
    }

    fn costs(&self, cost: &dyn Fn(usize, usize) -> f64) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.vars());
        for &i in &self.rows {
            for &j in &self.cols {
                c.push(cost(i, j));
            }
        }
        c
    }
}

/// Solves a square system by Gaussian elimination with partial pivoting;
/// `None` if singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        out(cur);
        return;
    }
    for i in start..n {
        if n - i < k - cur.len() {
            break;
        }
        cur.push(i);
        subsets(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Minimum cost over every basic feasible solution: each choice of
/// `m + n − 1` variables whose system (one redundant demand row dropped) is
/// nonsingular and yields a nonnegative solution.
pub fn transport_by_vertices(a: &[f64], b: &[f64], cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    let t = Transport::new(a, b);
    let (sys, rhs) = t.system();
    let c = t.costs(cost);
    let k = t.rows.len() + t.cols.len() - 1;
    let rows: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    subsets(t.vars(), k, 0, &mut Vec::new(), &mut |basis| {
        let m: Vec<Vec<f64>> = rows.iter().map(|&r| basis.iter().map(|&v| sys[r][v]).collect()).collect();
        let r: Vec<f64> = rows.iter().map(|&r| rhs[r]).collect();
        if let Some(x) = solve(m, r) {
            if x.iter().all(|v| *v >= -1e-12) {
                // the dropped demand row must hold too
                let last = sys.len() - 1;
                let lhs: f64 = basis.iter().zip(&x).map(|(&v, xv)| sys[last][v] * xv).sum();
                if (lhs - rhs[last]).abs() < 1e-9 {
                    let z: f64 = basis.iter().zip(&x).map(|(&v, xv)| c[v] * xv).sum();
                    best = best.min(z);
                }
            }
        }
    });
    best
}

/// Dense two-phase tableau simplex with Bland's rule on the transportation
/// LP.
pub fn transport_by_simplex(a: &[f64], b: &[f64], cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    let t = Transport::new(a, b);
    let (sys, rhs) = t.system();
    let c = t.costs(cost);
    let (m, n) = (sys.len(), t.vars());
    // columns: n structural, m artificial, then rhs
    let width = n + m + 1;
    let mut tab: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&sys[r]);
            row[n + r] = 1.0;
            row[width - 1] = rhs[r];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    let pivot = |tab: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, r: usize, col: usize| {
        let p = tab[r][col];
        tab[r].iter_mut().for_each(|v| *v /= p);
        for i in 0..tab.len() {
            if i != r {
                let f = tab[i][col];
                if f != 0.0 {
                    for j in 0..width {
                        tab[i][j] -= f * tab[r][j];
                    }
                }
            }
        }
        basis[r] = col;
    };

    let run = |tab: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, obj: &[f64], allowed: usize| {
        loop {
            // reduced costs c_j − c_B·B⁻¹A_j
            let entering = (0..allowed).find(|&j| {
                if basis.contains(&j) {
                    return false;
                }
                let z: f64 = (0..tab.len()).map(|r| obj[basis[r]] * tab[r][j]).sum();
                obj[j] - z < -1e-12
            });
            let Some(col) = entering else { return };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..tab.len() {
                if tab[r][col] > 1e-12 {
                    let ratio = tab[r][width - 1] / tab[r][col];
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => ratio < lratio - 1e-15 || (ratio <= lratio + 1e-15 && basis[r] < basis[lr]),
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let (r, _) = leave.expect("transportation LP is bounded");
            pivot(tab, basis, r, col);
        }
    };

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut tab, &mut basis, &phase1, n + m);

    // drive zero-level artificials out, dropping redundant rows
    let mut r = 0;
    while r < tab.len() {
        if basis[r] >= n {
            match (0..n).find(|&j| tab[r][j].abs() > 1e-9) {
                Some(col) => {
                    pivot(&mut tab, &mut basis, r, col);
                    r += 1;
                }
                None => {
                    tab.remove(r);
                    basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    let mut phase2 = c.clone();
    phase2.extend(std::iter::repeat_n(0.0, m));
    run(&mut tab, &mut basis, &phase2, n);
    (0..tab.len()).map(|r| phase2[basis[r]] * tab[r][width - 1]).sum()
}

pub fn grid_distance(cols: usize) -> impl Fn(usize, usize) -> f64 {
    move |i, j| {
        let (dr, dc) = ((i / cols) as f64 - (j / cols) as f64, (i % cols) as f64 - (j % cols) as f64);
        (dr * dr + dc * dc).sqrt()
    }
}
