use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Neg,
    Abs,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Recip,
    Square,
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 10] = [
        UnaryOp::Neg,
        UnaryOp::Abs,
        UnaryOp::Sqrt,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Recip,
        UnaryOp::Square,
        UnaryOp::Cube,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Recip => "recip",
            UnaryOp::Square => "square",
            UnaryOp::Cube => "cube",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Domain predicate. `sqrt`, `log` and `recip` are partial; the rest are total.
    pub fn in_domain(self, x: f64) -> bool {
        match self {
            UnaryOp::Sqrt => x >= 0.0,
            UnaryOp::Log => x > 0.0,
            UnaryOp::Recip => x != 0.0,
            _ => true,
        }
    }

    pub fn apply_unchecked(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => x.ln(),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Recip => 1.0 / x,
            UnaryOp::Square => x * x,
            UnaryOp::Cube => x * x * x,
        }
    }

    /// `None` when `x` is outside the op's domain.
    pub fn apply(self, x: f64) -> Option<f64> {
        self.in_domain(x).then(|| self.apply_unchecked(x))
    }

    pub fn is_nonlinear(self) -> bool {
        self != UnaryOp::Neg
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Division needs a nonzero divisor; a negative base needs an integer
    /// exponent and a zero base needs a nonnegative one.
    pub fn in_domain(self, a: f64, b: f64) -> bool {
        match self {
            BinaryOp::Div => b != 0.0,
            BinaryOp::Pow => !(a < 0.0 && b.fract() != 0.0) && !(a == 0.0 && b < 0.0),
            _ => true,
        }
    }

    pub fn apply_unchecked(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => {
                if b == 2.0 {
                    a * a
                } else if b == 3.0 {
                    a * a * a
                } else {
                    a.powf(b)
                }
            }
        }
    }

    pub fn apply(self, a: f64, b: f64) -> Option<f64> {
        self.in_domain(a, b).then(|| self.apply_unchecked(a, b))
    }

    pub fn is_nonlinear(self) -> bool {
        matches!(self, BinaryOp::Div | BinaryOp::Pow)
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 3,
        }
    }
}

/// Sampling weights for random generation, one per operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorTable {
    pub unary: Vec<(UnaryOp, f64)>,
    pub binary: Vec<(BinaryOp, f64)>,
}

impl Default for OperatorTable {
    fn default() -> Self {
        Self {
            unary: UnaryOp::ALL.iter().map(|&op| (op, 1.0)).collect(),
            binary: BinaryOp::ALL.iter().map(|&op| (op, 1.0)).collect(),
        }
    }
}

impl OperatorTable {
    pub fn unary_weight(&self, op: UnaryOp) -> f64 {
        self.unary
            .iter()
            .find(|(o, _)| *o == op)
            .map_or(0.0, |(_, w)| *w)
    }

    pub fn binary_weight(&self, op: BinaryOp) -> f64 {
        self.binary
            .iter()
            .find(|(o, _)| *o == op)
            .map_or(0.0, |(_, w)| *w)
    }

    pub fn set_unary_weight(&mut self, op: UnaryOp, weight: f64) {
        match self.unary.iter_mut().find(|(o, _)| *o == op) {
            Some(entry) => entry.1 = weight,
            None => self.unary.push((op, weight)),
        }
    }

    pub fn set_binary_weight(&mut self, op: BinaryOp, weight: f64) {
        match self.binary.iter_mut().find(|(o, _)| *o == op) {
            Some(entry) => entry.1 = weight,
            None => self.binary.push((op, weight)),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let all = self.unary.iter().map(|(_, w)| *w).chain(self.binary.iter().map(|(_, w)| *w));
        for w in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(format!("operator weight {w} is not a nonnegative real"));
            }
        }
        if self.unary.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return Err("unary weights must sum to a positive value".into());
        }
        if self.binary.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return Err("binary weights must sum to a positive value".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_domains() {
        assert_eq!(UnaryOp::Log.apply(-0.5), None);
        assert_eq!(UnaryOp::Sqrt.apply(-1e-12), None);
        assert_eq!(UnaryOp::Recip.apply(0.0), None);
        assert_eq!(BinaryOp::Div.apply(1.0, 0.0), None);
        assert_eq!(BinaryOp::Pow.apply(-2.0, 0.5), None);
        assert_eq!(BinaryOp::Pow.apply(0.0, -1.0), None);
        assert_eq!(BinaryOp::Pow.apply(-2.0, 3.0), Some(-8.0));
    }

    #[test]
    fn names_round_trip() {
        for op in UnaryOp::ALL {
            assert_eq!(UnaryOp::from_name(op.name()), Some(op));
        }
        for op in BinaryOp::ALL {
            assert_eq!(BinaryOp::from_name(op.name()), Some(op));
        }
    }

    #[test]
    fn default_table_is_valid_and_uniform() {
        let table = OperatorTable::default();
        assert!(table.validate().is_ok());
        assert_eq!(table.unary_weight(UnaryOp::Exp), 1.0);
        let mut zeroed = table.clone();
        for op in UnaryOp::ALL {
            zeroed.set_unary_weight(op, 0.0);
        }
        assert!(zeroed.validate().is_err());
    }
}
