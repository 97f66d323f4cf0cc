//! Finite fields GF(q) and dense matrices over them.
//!
//! Elements are the integers `0..q`. For `q = p^d` with `d > 1` the element
//! `e = Σ c_i p^i` stands for the polynomial `Σ c_i x^i` reduced modulo a
//! fixed irreducible polynomial.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::BitVector;

/// Largest order supported.
pub const MAX_FIELD_ORDER: usize = 256;

/// Low-order coefficients of the monic irreducible modulus for each
/// supported prime power.
const MODULI: &[(usize, usize, &[usize])] = &[
    (4, 2, &[1, 1]),
    (8, 2, &[1, 1, 0]),
    (9, 3, &[1, 0]),
    (16, 2, &[1, 1, 0, 0]),
    (25, 5, &[2, 0]),
    (27, 3, &[1, 2, 0]),
];

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

#[derive(Clone, PartialEq, Eq)]
pub struct GaloisField {
    q: usize,
    p: usize,
    add: Vec<u16>,
    mul: Vec<u16>,
    neg: Vec<u16>,
    inv: Vec<u16>,
}

impl std::fmt::Debug for GaloisField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GF({})", self.q)
    }
}

impl GaloisField {
    /// Primes up to [`MAX_FIELD_ORDER`] and `q ∈ {4, 8, 9, 16, 25, 27}`.
    pub fn new(q: usize) -> Result<Self> {
        if q > MAX_FIELD_ORDER {
            return Err(Error::UnsupportedField(q));
        }
        let (p, modulus): (usize, Vec<usize>) = if is_prime(q) {
            (q, vec![])
        } else if let Some(&(_, p, m)) = MODULI.iter().find(|m| m.0 == q) {
            (p, m.to_vec())
        } else {
            return Err(Error::UnsupportedField(q));
        };
        let digits = |mut e: usize| -> Vec<usize> {
            let mut d = Vec::with_capacity(modulus.len().max(1));
            for _ in 0..modulus.len().max(1) {
                d.push(e % p);
                e /= p;
            }
            d
        };
        let pack = |d: &[usize]| d.iter().rev().fold(0, |acc, &c| acc * p + c);
        let mut add = vec![0u16; q * q];
        let mut mul = vec![0u16; q * q];
        for a in 0..q {
            let da = digits(a);
            for b in 0..q {
                let db = digits(b);
                let sum: Vec<usize> = da.iter().zip(&db).map(|(x, y)| (x + y) % p).collect();
                add[a * q + b] = pack(&sum) as u16;
                mul[a * q + b] = if modulus.is_empty() {
                    (a * b % q) as u16
                } else {
                    pack(&poly_mul_mod(&da, &db, &modulus, p)) as u16
                };
            }
        }
        let mut neg = vec![0u16; q];
        let mut inv = vec![0u16; q];
        for a in 0..q {
            for b in 0..q {
                if add[a * q + b] == 0 {
                    neg[a] = b as u16;
                }
                if mul[a * q + b] == 1 {
                    inv[a] = b as u16;
                }
            }
        }
        Ok(Self {
            q,
            p,
            add,
            mul,
            neg,
            inv,
        })
    }

    pub fn order(&self) -> usize {
        self.q
    }

    pub fn characteristic(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        self.add[a * self.q + b] as usize
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.q + b] as usize
    }

    pub fn neg(&self, a: usize) -> usize {
        self.neg[a] as usize
    }

    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add(a, self.neg(b))
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: usize) -> Option<usize> {
        (a != 0).then(|| self.inv[a] as usize)
    }
}

/// Product of two polynomials over GF(p) reduced by the monic modulus
/// `x^d + Σ m_i x^i`.
fn poly_mul_mod(a: &[usize], b: &[usize], modulus: &[usize], p: usize) -> Vec<usize> {
    let d = modulus.len();
    let mut prod = vec![0; 2 * d];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + x * y) % p;
        }
    }
    for k in (d..2 * d).rev() {
        let c = prod[k];
        if c == 0 {
            continue;
        }
        prod[k] = 0;
        // x^k = x^{k−d} · x^d ≡ −x^{k−d} Σ m_i x^i
        for (i, &m) in modulus.iter().enumerate() {
            prod[k - d + i] = (prod[k - d + i] + (p - c) * m) % p;
        }
    }
    prod.truncate(d);
    prod
}

/// Dense row-major matrix over a Galois field.
#[derive(Clone, PartialEq, Eq)]
pub struct GFMatrix {
    field: GaloisField,
    rows: usize,
    cols: usize,
    data: Vec<usize>,
}

impl std::fmt::Debug for GFMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:?} {}x{}", self.field, self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "{:?}", self.row(r))?;
        }
        Ok(())
    }
}

/// Serialized form: field order and rows of integers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GFMatrixData {
    pub q: usize,
    pub rows: Vec<Vec<usize>>,
}

impl GFMatrix {
    pub fn new(field: GaloisField, rows: Vec<Vec<usize>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            if let Some(&e) = row.iter().find(|&&e| e >= field.order()) {
                return Err(Error::InvalidModel(format!(
                    "entry {e} in row {r} is not an element of GF({})",
                    field.order()
                )));
            }
        }
        Ok(Self {
            field,
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_data(data: &GFMatrixData) -> Result<Self> {
        Self::new(GaloisField::new(data.q)?, data.rows.clone())
    }

    pub fn to_data(&self) -> GFMatrixData {
        GFMatrixData {
            q: self.field.order(),
            rows: (0..self.rows).map(|r| self.row(r).to_vec()).collect(),
        }
    }

    /// Vertex-edge incidence matrix of a graph over GF(2).
    pub fn graph_incidence(graph: &crate::graph::Graph) -> Self {
        let mut rows = vec![vec![0; graph.num_edges()]; graph.n_vertices];
        for (e, &(u, v)) in graph.edges.iter().enumerate() {
            rows[u][e] = 1;
            rows[v][e] = 1;
        }
        Self::new(GaloisField::new(2).expect("GF(2)"), rows).expect("valid incidence matrix")
    }

    pub fn field(&self) -> &GaloisField {
        &self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> usize {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows with a nonzero entry in column `c`.
    pub fn support(&self, c: usize) -> Vec<usize> {
        (0..self.rows).filter(|&r| self.get(r, c) != 0).collect()
    }

    /// `r_S(A)`: rank of the submatrix on the columns in `a`.
    pub fn rank(&self, a: &BitVector) -> Result<usize> {
        if a.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: a.len(),
            });
        }
        let cols: Vec<usize> = a.iter_ones().collect();
        let mut m: Vec<Vec<usize>> = (0..self.rows)
            .map(|r| cols.iter().map(|&c| self.get(r, c)).collect())
            .collect();
        Ok(row_reduce(&self.field, &mut m))
    }

    /// Codeword `σS` for the message `σ`.
    pub fn encode(&self, sigma: &[usize]) -> Vec<usize> {
        (0..self.cols)
            .map(|c| {
                sigma.iter().enumerate().fold(0, |acc, (r, &s)| {
                    self.field.add(acc, self.field.mul(s, self.get(r, c)))
                })
            })
            .collect()
    }
}

/// Gaussian elimination in place; returns the rank.
pub fn row_reduce(f: &GaloisField, m: &mut [Vec<usize>]) -> usize {
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..m.len()).find(|&r| m[r][c] != 0) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = f.inv(m[rank][c]).expect("nonzero pivot");
        for x in m[rank].iter_mut() {
            *x = f.mul(*x, inv);
        }
        for r in 0..m.len() {
            if r != rank && m[r][c] != 0 {
                let factor = m[r][c];
                for k in 0..cols {
                    let sub = f.mul(factor, m[rank][k]);
                    m[r][k] = f.sub(m[r][k], sub);
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Parses `q k n` followed by `k` rows of `n` integers.
pub fn parse_generator(text: &str) -> Result<GFMatrix> {
    let mut tokens = text.split_whitespace().map(|t| {
        t.parse::<usize>()
            .map_err(|_| Error::Parse(format!("expected a nonnegative integer, found {t:?}")))
    });
    let mut next = |what: &str| {
        tokens
            .next()
            .unwrap_or_else(|| Err(Error::Parse(format!("missing {what}"))))
    };
    let q = next("field order")?;
    let k = next("row count")?;
    let n = next("column count")?;
    let field = GaloisField::new(q)?;
    let mut rows = Vec::with_capacity(k);
    for r in 0..k {
        let mut row = Vec::with_capacity(n);
        for c in 0..n {
            row.push(next(&format!("entry ({r}, {c})"))?);
        }
        rows.push(row);
    }
    if let Some(extra) = tokens.next() {
        return Err(Error::Parse(format!(
            "trailing data after {k}x{n} matrix: {:?}",
            extra.map(|v| v.to_string()).unwrap_or_else(|e| e.to_string())
        )));
    }
    GFMatrix::new(field, rows)
}
