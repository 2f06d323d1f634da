//! Exact rational inequality systems: a dictionary simplex with Bland's rule,
//! strict rows via one maximized slack, homogeneous integer lifting and a
//! small branch-and-bound for bounded integer feasibility.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub type Rational = BigRational;

pub fn rat(x: i64) -> Rational {
    Rational::from_integer(BigInt::from(x))
}

/// What a variable stands for in a region system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarTag {
    R0,
    B(usize),
    F(usize),
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Var {
    pub name: String,
    pub tag: VarTag,
    /// Restricts the variable to `{0, 1}` for integer solving (`≤ 1` in relaxations).
    pub binary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rel {
    Le,
    Lt,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl Rel {
    fn symbol(self) -> &'static str {
        match self {
            Rel::Le => "<=",
            Rel::Lt => "<",
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
            Rel::Ne => "!=",
        }
    }

    fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Rel::Le => lhs <= rhs,
            Rel::Lt => lhs < rhs,
            Rel::Eq => lhs == rhs,
            Rel::Ge => lhs >= rhs,
            Rel::Gt => lhs > rhs,
            Rel::Ne => lhs != rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub terms: BTreeMap<usize, Rational>,
    pub rel: Rel,
    pub rhs: Rational,
}

impl Row {
    pub fn lhs(&self, values: &[Rational]) -> Rational {
        self.terms
            .iter()
            .fold(Rational::zero(), |acc, (&v, c)| acc + c * &values[v])
    }
}

/// Variables are implicitly nonnegative.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinearSystem {
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("system contains a != row; split it first")]
    NotEqualRow,
    #[error("system is not homogeneous")]
    NotHomogeneous,
    #[error("row references undeclared variable {0}")]
    UnknownVar(usize),
    #[error("search bound exceeded: {0}")]
    CapExceeded(String),
    #[error("solver produced an assignment violating row {0}")]
    Internal(usize),
}

impl LinearSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, tag: VarTag) -> usize {
        self.vars.push(Var {
            name: name.into(),
            tag,
            binary: false,
        });
        self.vars.len() - 1
    }

    pub fn set_binary(&mut self, v: usize) {
        self.vars[v].binary = true;
    }

    /// Adds a row; coefficients of repeated variables are summed and zeros dropped.
    pub fn add_row<I>(&mut self, terms: I, rel: Rel, rhs: Rational)
    where
        I: IntoIterator<Item = (usize, Rational)>,
    {
        let mut map: BTreeMap<usize, Rational> = BTreeMap::new();
        for (v, c) in terms {
            *map.entry(v).or_insert_with(Rational::zero) += c;
        }
        map.retain(|_, c| !c.is_zero());
        self.rows.push(Row { terms: map, rel, rhs });
    }

    /// Integer-coefficient convenience form of [`add_row`](Self::add_row).
    pub fn add(&mut self, terms: &[(usize, i64)], rel: Rel, rhs: i64) {
        self.add_row(terms.iter().map(|&(v, c)| (v, rat(c))), rel, rat(rhs));
    }

    pub fn is_homogeneous(&self) -> bool {
        self.rows.iter().all(|r| r.rhs.is_zero())
    }

    pub fn has_strict(&self) -> bool {
        self.rows
            .iter()
            .any(|r| matches!(r.rel, Rel::Lt | Rel::Gt | Rel::Ne))
    }

    fn check_vars(&self) -> Result<(), SolveError> {
        for r in &self.rows {
            if let Some((&v, _)) = r.terms.iter().next_back() {
                if v >= self.vars.len() {
                    return Err(SolveError::UnknownVar(v));
                }
            }
        }
        Ok(())
    }

    /// Index of the first row violated by `values`, including nonnegativity
    /// (reported as `rows.len()`) and binary bounds.
    pub fn first_violation(&self, values: &[Rational]) -> Option<usize> {
        if values.len() != self.vars.len()
            || values.iter().any(|x| x.is_negative())
            || self
                .vars
                .iter()
                .zip(values)
                .any(|(v, x)| v.binary && *x > Rational::one())
        {
            return Some(self.rows.len());
        }
        self.rows
            .iter()
            .position(|r| !r.rel.holds(&r.lhs(values), &r.rhs))
    }

    /// Every sign choice for the `≠` rows, as `<`/`>` systems; the `<`
    /// branch of earlier rows comes first.
    pub fn ne_split(&self) -> Vec<LinearSystem> {
        let mut out = vec![self.clone()];
        for (i, r) in self.rows.iter().enumerate() {
            if r.rel != Rel::Ne {
                continue;
            }
            let mut next = Vec::new();
            for sys in out {
                for rel in [Rel::Lt, Rel::Gt] {
                    let mut s = sys.clone();
                    s.rows[i].rel = rel;
                    next.push(s);
                }
            }
            out = next;
        }
        out
    }

    /// LP-like text dump for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::from("min 0;\n");
        for (i, r) in self.rows.iter().enumerate() {
            let mut line = format!("r{}:", i + 1);
            if r.terms.is_empty() {
                line.push_str(" 0");
            }
            for (&v, c) in &r.terms {
                line.push_str(&format!(" {} {}", c, self.vars[v].name));
            }
            line.push_str(&format!(" {} {};\n", r.rel.symbol(), r.rhs));
            out.push_str(&line);
        }
        let bins: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.binary)
            .map(|v| v.name.as_str())
            .collect();
        if !bins.is_empty() {
            out.push_str(&format!("bin {};\n", bins.join(", ")));
        }
        out
    }
}

impl fmt::Display for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Feasible,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub status: Status,
    /// One value per variable; empty when infeasible.
    pub values: Vec<Rational>,
}

impl Solution {
    fn infeasible() -> Self {
        Solution {
            status: Status::Infeasible,
            values: Vec::new(),
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }

    pub fn value(&self, v: usize) -> &Rational {
        &self.values[v]
    }

    pub fn is_integral(&self) -> bool {
        self.values.iter().all(|x| x.is_integer())
    }
}

// ---------------------------------------------------------------------------
// dictionary simplex

enum Lp {
    Optimal(Vec<Rational>),
    Unbounded,
    Infeasible,
}

/// Dictionary `x_basic[i] = d[i][0] + Σ_j d[i][1+j] · x_nonbasic[j]`.
struct Dict {
    d: Vec<Vec<Rational>>,
    obj: Vec<Rational>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    pivots: usize,
}

impl Dict {
    fn pivot(&mut self, r: usize, e: usize) {
        self.pivots += 1;
        let a = self.d[r][1 + e].clone();
        let width = self.d[r].len();
        let mut new = Vec::with_capacity(width);
        for col in 0..width {
            if col == 1 + e {
                new.push(a.recip());
            } else {
                new.push(-(&self.d[r][col]) / &a);
            }
        }
        let subst = |row: &mut Vec<Rational>| {
            let f = row[1 + e].clone();
            if f.is_zero() {
                return;
            }
            for col in 0..width {
                if col == 1 + e {
                    row[col] = &f * &new[col];
                } else if !new[col].is_zero() {
                    let add = &f * &new[col];
                    row[col] += add;
                }
            }
        };
        for i in 0..self.d.len() {
            if i != r {
                subst(&mut self.d[i]);
            }
        }
        subst(&mut self.obj);
        self.d[r] = new;
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[e]);
    }

    /// Maximizes `obj` with Bland's rule. Returns false if unbounded.
    fn run(&mut self) -> bool {
        loop {
            let entering = (0..self.nonbasic.len())
                .filter(|&j| self.obj[1 + j].is_positive())
                .min_by_key(|&j| self.nonbasic[j]);
            let Some(e) = entering else { return true };
            let mut best: Option<(usize, Rational)> = None;
            for i in 0..self.d.len() {
                let c = &self.d[i][1 + e];
                if !c.is_negative() {
                    continue;
                }
                let ratio = &self.d[i][0] / -c;
                let better = match &best {
                    None => true,
                    Some((bi, br)) => {
                        ratio < *br || (ratio == *br && self.basic[i] < self.basic[*bi])
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((r, _)) = best else { return false };
            self.pivot(r, e);
        }
    }

    fn values(&self, n: usize) -> Vec<Rational> {
        let mut x = vec![Rational::zero(); n];
        for (i, &b) in self.basic.iter().enumerate() {
            if b < n {
                x[b] = self.d[i][0].clone();
            }
        }
        x
    }
}

/// Maximizes `c·x` subject to `A x ≤ b`, `x ≥ 0`. Returns the pivot count too.
fn simplex(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> (Lp, usize) {
    let m = a.len();
    let n = c.len();
    let mut dict = Dict {
        d: (0..m)
            .map(|i| {
                let mut row = Vec::with_capacity(n + 1);
                row.push(b[i].clone());
                row.extend(a[i].iter().map(|x| -x));
                row
            })
            .collect(),
        obj: std::iter::once(Rational::zero())
            .chain(c.iter().cloned())
            .collect(),
        basic: (n..n + m).collect(),
        nonbasic: (0..n).collect(),
        pivots: 0,
    };
    let most_negative = (0..m)
        .filter(|&i| b[i].is_negative())
        .min_by(|&i, &j| b[i].cmp(&b[j]).then(i.cmp(&j)));
    if let Some(r) = most_negative {
        // phase one: auxiliary x0 added to every row, maximize -x0
        let x0 = n + m;
        for row in dict.d.iter_mut() {
            row.push(Rational::one());
        }
        let saved = std::mem::replace(&mut dict.obj, vec![Rational::zero(); n + 2]);
        dict.obj[n + 1] = -Rational::one();
        dict.nonbasic.push(x0);
        dict.pivot(r, n);
        dict.run();
        if dict.obj[0].is_negative() {
            return (Lp::Infeasible, dict.pivots);
        }
        if let Some(r) = dict.basic.iter().position(|&v| v == x0) {
            let e = (0..dict.nonbasic.len())
                .filter(|&j| !dict.d[r][1 + j].is_zero())
                .min_by_key(|&j| dict.nonbasic[j]);
            match e {
                Some(e) => dict.pivot(r, e),
                None => {
                    dict.d.remove(r);
                    dict.basic.remove(r);
                }
            }
        }
        let col = dict.nonbasic.iter().position(|&v| v == x0).unwrap();
        for row in dict.d.iter_mut() {
            row.remove(1 + col);
        }
        dict.nonbasic.remove(col);
        // re-express the real objective over the current nonbasic variables
        let k = dict.nonbasic.len();
        let mut obj = vec![Rational::zero(); k + 1];
        for (j, &v) in dict.nonbasic.iter().enumerate() {
            if v < n {
                obj[1 + j] += &saved[1 + v];
            }
        }
        for (i, &v) in dict.basic.iter().enumerate() {
            if v < n && !saved[1 + v].is_zero() {
                for col in 0..=k {
                    let add = &saved[1 + v] * &dict.d[i][col];
                    obj[col] += add;
                }
            }
        }
        dict.obj = obj;
    }
    if !dict.run() {
        return (Lp::Unbounded, dict.pivots);
    }
    (Lp::Optimal(dict.values(n)), dict.pivots)
}

/// `A x ≤ b` form of a system's rows plus binary bounds. Strict rows get
/// coefficient 1 on the extra column `delta` when given.
fn standard_form(
    sys: &LinearSystem,
    n: usize,
    delta: Option<usize>,
) -> (Vec<Vec<Rational>>, Vec<Rational>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut push = |terms: &BTreeMap<usize, Rational>, sign: i64, rhs: &Rational, strict: bool| {
        let mut row = vec![Rational::zero(); n];
        for (&v, c) in terms {
            row[v] = c * rat(sign);
        }
        if strict {
            if let Some(d) = delta {
                row[d] = Rational::one();
            }
        }
        a.push(row);
        b.push(rhs * rat(sign));
    };
    for r in &sys.rows {
        match r.rel {
            Rel::Le => push(&r.terms, 1, &r.rhs, false),
            Rel::Ge => push(&r.terms, -1, &r.rhs, false),
            Rel::Eq => {
                push(&r.terms, 1, &r.rhs, false);
                push(&r.terms, -1, &r.rhs, false);
            }
            Rel::Lt => push(&r.terms, 1, &r.rhs, true),
            Rel::Gt => push(&r.terms, -1, &r.rhs, true),
            Rel::Ne => unreachable!("checked by caller"),
        }
    }
    for (v, var) in sys.vars.iter().enumerate() {
        if var.binary {
            let mut row = vec![Rational::zero(); n];
            row[v] = Rational::one();
            a.push(row);
            b.push(Rational::one());
        }
    }
    (a, b)
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub pivots: usize,
}

/// Rational feasibility. Strict rows share one slack δ ≤ 1 which is
/// maximized; the system is strictly feasible iff the optimum has δ > 0.
pub fn solve_rational(sys: &LinearSystem) -> Result<Solution, SolveError> {
    solve_rational_stats(sys).map(|(s, _)| s)
}

pub fn solve_rational_stats(sys: &LinearSystem) -> Result<(Solution, SolveStats), SolveError> {
    solve_rational_obj(sys, None)
}

fn solve_rational_obj(
    sys: &LinearSystem,
    objective: Option<&[Rational]>,
) -> Result<(Solution, SolveStats), SolveError> {
    sys.check_vars()?;
    if sys.rows.iter().any(|r| r.rel == Rel::Ne) {
        return Err(SolveError::NotEqualRow);
    }
    let nv = sys.vars.len();
    let strict = sys.has_strict();
    let n = if strict { nv + 1 } else { nv };
    let delta = strict.then_some(nv);
    let (mut a, mut b) = standard_form(sys, n, delta);
    let mut c = vec![Rational::zero(); n];
    if let Some(d) = delta {
        let mut row = vec![Rational::zero(); n];
        row[d] = Rational::one();
        a.push(row);
        b.push(Rational::one());
        c[d] = Rational::one();
    } else if let Some(obj) = objective {
        c[..nv].clone_from_slice(obj);
    }
    let (res, pivots) = simplex(&a, &b, &c);
    let stats = SolveStats { pivots };
    let values = match res {
        Lp::Infeasible => return Ok((Solution::infeasible(), stats)),
        Lp::Unbounded => {
            // only reachable with an objective and no strict rows; rerun as
            // plain feasibility
            return solve_rational_obj(sys, None);
        }
        Lp::Optimal(x) => x,
    };
    if let Some(d) = delta {
        if !values[d].is_positive() {
            return Ok((Solution::infeasible(), stats));
        }
    }
    let values: Vec<Rational> = values.into_iter().take(nv).collect();
    if let Some(i) = sys.first_violation(&values) {
        return Err(SolveError::Internal(i));
    }
    Ok((
        Solution {
            status: Status::Feasible,
            values,
        },
        stats,
    ))
}

/// Scales a feasible solution of a homogeneous system by the lcm of its
/// denominators.
pub fn lift_homogeneous_to_integer(
    sol: &Solution,
    sys: &LinearSystem,
) -> Result<Solution, SolveError> {
    if !sys.is_homogeneous() {
        return Err(SolveError::NotHomogeneous);
    }
    if !sol.is_feasible() {
        return Ok(sol.clone());
    }
    let mut l = BigInt::one();
    for x in &sol.values {
        l = l.lcm(x.denom());
    }
    let factor = Rational::from_integer(l);
    let values: Vec<Rational> = sol.values.iter().map(|x| x * &factor).collect();
    if let Some(i) = sys.first_violation(&values) {
        return Err(SolveError::Internal(i));
    }
    Ok(Solution {
        status: Status::Feasible,
        values,
    })
}

#[derive(Clone, Debug)]
pub struct IntegerOptions {
    /// Upper bound imposed on every variable without a binary flag.
    pub cap: BigInt,
    /// Maximum number of branch-and-bound nodes.
    pub node_limit: usize,
}

impl IntegerOptions {
    pub fn with_cap(cap: u64) -> Self {
        IntegerOptions {
            cap: BigInt::from(cap),
            node_limit: 20_000,
        }
    }
}

impl Default for IntegerOptions {
    fn default() -> Self {
        Self::with_cap(64)
    }
}

fn scale_to_integer(r: &Row) -> Row {
    let mut l = BigInt::one();
    for c in r.terms.values() {
        l = l.lcm(c.denom());
    }
    let f = Rational::from_integer(l);
    Row {
        terms: r.terms.iter().map(|(&v, c)| (v, c * &f)).collect(),
        rel: r.rel,
        rhs: &r.rhs * &f,
    }
}

/// Rewrites strict rows over integer variables: `a·x < c` becomes
/// `a·x ≤ ⌈c⌉ − 1` once `a` has integer coefficients.
pub fn tighten_strict(sys: &LinearSystem) -> LinearSystem {
    let mut out = sys.clone();
    for r in out.rows.iter_mut() {
        match r.rel {
            Rel::Lt => {
                let s = scale_to_integer(r);
                *r = Row {
                    rhs: s.rhs.ceil() - Rational::one(),
                    rel: Rel::Le,
                    terms: s.terms,
                };
            }
            Rel::Gt => {
                let s = scale_to_integer(r);
                *r = Row {
                    rhs: s.rhs.floor() + Rational::one(),
                    rel: Rel::Ge,
                    terms: s.terms,
                };
            }
            _ => {}
        }
    }
    out
}

/// Integer feasibility.
///
/// Homogeneous systems without binary flags go through rational solving and
/// lifting. Otherwise strict rows are tightened and a depth-first
/// branch-and-bound runs over the rational relaxation, branching on the
/// lowest-index fractional variable, down-branch first. Variables without a
/// binary flag are bounded by `opts.cap`; if the search fails and the cap cut
/// off part of the space, `CapExceeded` is returned instead of infeasible.
pub fn solve_integer(sys: &LinearSystem, opts: &IntegerOptions) -> Result<Solution, SolveError> {
    sys.check_vars()?;
    if sys.rows.iter().any(|r| r.rel == Rel::Ne) {
        return Err(SolveError::NotEqualRow);
    }
    if sys.is_homogeneous() && !sys.vars.iter().any(|v| v.binary) {
        let sol = solve_rational(sys)?;
        return lift_homogeneous_to_integer(&sol, sys);
    }
    let base = tighten_strict(sys);
    let mut capped = base.clone();
    let cap = Rational::from_integer(opts.cap.clone());
    for (v, var) in sys.vars.iter().enumerate() {
        if !var.binary {
            capped.add_row([(v, Rational::one())], Rel::Le, cap.clone());
        }
    }
    // prefer small values: minimize the sum of all variables
    let objective: Vec<Rational> = vec![-Rational::one(); sys.vars.len()];
    let mut search = Search {
        base: &base,
        capped: &capped,
        objective: &objective,
        nodes: 0,
        node_limit: opts.node_limit,
        cap_hit: false,
    };
    match search.node(&mut Vec::new())? {
        Some(values) => {
            if let Some(i) = sys.first_violation(&values) {
                return Err(SolveError::Internal(i));
            }
            Ok(Solution {
                status: Status::Feasible,
                values,
            })
        }
        None if search.cap_hit => Err(SolveError::CapExceeded(format!(
            "integer search bound {}",
            opts.cap
        ))),
        None => Ok(Solution::infeasible()),
    }
}

struct Search<'a> {
    base: &'a LinearSystem,
    capped: &'a LinearSystem,
    objective: &'a [Rational],
    nodes: usize,
    node_limit: usize,
    cap_hit: bool,
}

impl Search<'_> {
    fn with_bounds(sys: &LinearSystem, bounds: &[(usize, Rel, Rational)]) -> LinearSystem {
        let mut s = sys.clone();
        for (v, rel, k) in bounds {
            s.add_row([(*v, Rational::one())], *rel, k.clone());
        }
        s
    }

    fn node(
        &mut self,
        bounds: &mut Vec<(usize, Rel, Rational)>,
    ) -> Result<Option<Vec<Rational>>, SolveError> {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            return Err(SolveError::CapExceeded(format!(
                "branch-and-bound node limit {}",
                self.node_limit
            )));
        }
        let sys = Self::with_bounds(self.capped, bounds);
        let (sol, _) = solve_rational_obj(&sys, Some(self.objective))?;
        if !sol.is_feasible() {
            if !self.cap_hit && self.base.rows.len() < self.capped.rows.len() {
                let uncapped = Self::with_bounds(self.base, bounds);
                if solve_rational(&uncapped)?.is_feasible() {
                    self.cap_hit = true;
                }
            }
            return Ok(None);
        }
        let Some(v) = sol.values.iter().position(|x| !x.is_integer()) else {
            return Ok(Some(sol.values));
        };
        let x = sol.values[v].clone();
        bounds.push((v, Rel::Le, x.floor()));
        let down = self.node(bounds)?;
        bounds.pop();
        if down.is_some() {
            return Ok(down);
        }
        bounds.push((v, Rel::Ge, x.ceil()));
        let up = self.node(bounds)?;
        bounds.pop();
        Ok(up)
    }
}
