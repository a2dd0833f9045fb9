use super::{BinaryOp, EffectSignature, Expr, UnaryOp};

/// Products whose expansion would produce more terms than this stay factored.
const MAX_TERMS: usize = 256;

/// Distributes products, quotients (numerator only), negation and small
/// integer powers (2 and 3) over sums so that the top-level additive
/// structure is fully exposed. Anything that cannot be expanded exactly is
/// left as a single term.
pub fn expand(expr: &Expr) -> Expr {
    sum_of(expand_terms(expr))
}

/// Splits the top level of an expanded expression into additive effects.
///
/// Terms are grouped by the set of variables they reference; terms that
/// share a signature are summed into one effect. Groups appear in order of
/// first occurrence. Constant terms are returned under the empty signature.
pub fn decompose_additive(expr: &Expr) -> Vec<(EffectSignature, Expr)> {
    let mut groups: Vec<(EffectSignature, Vec<Expr>)> = Vec::new();
    for term in flatten_sum(expr) {
        let sig = term.signature();
        match groups.iter_mut().find(|(s, _)| *s == sig) {
            Some((_, terms)) => terms.push(term),
            None => groups.push((sig, vec![term])),
        }
    }
    groups
        .into_iter()
        .map(|(sig, terms)| (sig, sum_of(terms)))
        .collect()
}

/// Rebuilds a left-associated sum; negated terms become subtractions.
pub fn sum_of(terms: Vec<Expr>) -> Expr {
    let mut iter = terms.into_iter();
    let Some(first) = iter.next() else {
        return Expr::Const(0.0);
    };
    iter.fold(first, |acc, term| match term {
        Expr::Unary(UnaryOp::Neg, inner) => Expr::sub(acc, *inner),
        other => Expr::add(acc, other),
    })
}

/// Top-level terms of an expression without rewriting inside them.
fn flatten_sum(expr: &Expr) -> Vec<Expr> {
    match expr {
        Expr::Binary(BinaryOp::Add, l, r) => {
            let mut out = flatten_sum(l);
            out.extend(flatten_sum(r));
            out
        }
        Expr::Binary(BinaryOp::Sub, l, r) => {
            let mut out = flatten_sum(l);
            out.extend(flatten_sum(r).into_iter().map(negate));
            out
        }
        Expr::Unary(UnaryOp::Neg, inner) if is_sum(inner) => {
            flatten_sum(inner).into_iter().map(negate).collect()
        }
        other => vec![other.clone()],
    }
}

fn is_sum(expr: &Expr) -> bool {
    matches!(
        expr,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _)
    ) || matches!(expr, Expr::Unary(UnaryOp::Neg, inner) if is_sum(inner))
}

fn negate(term: Expr) -> Expr {
    match term {
        Expr::Unary(UnaryOp::Neg, inner) => *inner,
        Expr::Const(c) => Expr::Const(-c),
        other => Expr::unary(UnaryOp::Neg, other),
    }
}

/// Strips a leading negation, returning whether one was removed.
fn split_sign(term: Expr) -> (bool, Expr) {
    match term {
        Expr::Unary(UnaryOp::Neg, inner) => (true, *inner),
        other => (false, other),
    }
}

fn with_sign(negative: bool, term: Expr) -> Expr {
    if negative {
        negate(term)
    } else {
        term
    }
}

fn multiply_terms(lhs: &[Expr], rhs: &[Expr]) -> Vec<Expr> {
    let mut out = Vec::with_capacity(lhs.len() * rhs.len());
    for a in lhs {
        for b in rhs {
            let (na, a) = split_sign(a.clone());
            let (nb, b) = split_sign(b.clone());
            out.push(with_sign(na != nb, Expr::mul(a, b)));
        }
    }
    out
}

/// Integer exponent 2 or 3, the only powers that are multiplied out.
fn small_power(expr: &Expr) -> Option<usize> {
    match expr {
        Expr::Const(c) if *c == 2.0 => Some(2),
        Expr::Const(c) if *c == 3.0 => Some(3),
        _ => None,
    }
}

fn expand_power(base_terms: Vec<Expr>, power: usize) -> Option<Vec<Expr>> {
    if base_terms.len().pow(power as u32) > MAX_TERMS {
        return None;
    }
    let mut acc = base_terms.clone();
    for _ in 1..power {
        acc = multiply_terms(&acc, &base_terms);
    }
    Some(acc)
}

fn expand_terms(expr: &Expr) -> Vec<Expr> {
    match expr {
        Expr::Const(_) | Expr::Var(_) => vec![expr.clone()],
        Expr::Binary(BinaryOp::Add, l, r) => {
            let mut out = expand_terms(l);
            out.extend(expand_terms(r));
            out
        }
        Expr::Binary(BinaryOp::Sub, l, r) => {
            let mut out = expand_terms(l);
            out.extend(expand_terms(r).into_iter().map(negate));
            out
        }
        Expr::Unary(UnaryOp::Neg, inner) => expand_terms(inner).into_iter().map(negate).collect(),
        Expr::Binary(BinaryOp::Mul, l, r) => {
            let lt = expand_terms(l);
            let rt = expand_terms(r);
            if lt.len() * rt.len() <= MAX_TERMS {
                multiply_terms(&lt, &rt)
            } else {
                vec![Expr::mul(sum_of(lt), sum_of(rt))]
            }
        }
        Expr::Binary(BinaryOp::Div, l, r) => {
            let denominator = expand(r);
            expand_terms(l)
                .into_iter()
                .map(|t| {
                    let (neg, t) = split_sign(t);
                    with_sign(neg, Expr::div(t, denominator.clone()))
                })
                .collect()
        }
        Expr::Binary(BinaryOp::Pow, base, exponent) => {
            let base_terms = expand_terms(base);
            if let (Some(power), true) = (small_power(exponent), base_terms.len() > 1) {
                if let Some(terms) = expand_power(base_terms.clone(), power) {
                    return terms;
                }
            }
            vec![Expr::pow(sum_of(base_terms), expand(exponent))]
        }
        Expr::Unary(op @ (UnaryOp::Square | UnaryOp::Cube), inner) => {
            let power = if *op == UnaryOp::Square { 2 } else { 3 };
            let base_terms = expand_terms(inner);
            if base_terms.len() > 1 {
                if let Some(terms) = expand_power(base_terms.clone(), power) {
                    return terms;
                }
            }
            vec![Expr::unary(*op, sum_of(base_terms))]
        }
        Expr::Unary(op, inner) => vec![Expr::unary(*op, expand(inner))],
    }
}
