use serde::{Deserialize, Serialize};

use super::{parse, EvalError, Expr, ParseError};

/// Variable name used for the spacing channel.
pub const SPACING_VAR: &str = "s";
/// Variable name used for the relative-speed channel.
pub const RELATIVE_SPEED_VAR: &str = "dv";

/// How attack functions corrupt a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionMode {
    /// Perceived value is `x + g(x)`.
    Additive,
    /// Perceived value is `x * g(x)`.
    Multiplicative,
}

/// Closed-open activity interval `[t_on, t_off)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackWindow {
    pub t_on: f64,
    pub t_off: f64,
}

impl AttackWindow {
    pub fn new(t_on: f64, t_off: f64) -> Result<Self, AttackSpecError> {
        if !(t_on.is_finite() && t_off.is_finite()) || t_on < 0.0 || t_on >= t_off {
            return Err(AttackSpecError::Window { t_on, t_off });
        }
        Ok(Self { t_on, t_off })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_on && t < self.t_off
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackSpecError {
    #[error("invalid attack window [{t_on}, {t_off}]: need 0 <= t_on < t_off")]
    Window { t_on: f64, t_off: f64 },
    #[error("spacing attack g1: {0}")]
    Spacing(ParseError),
    #[error("relative-speed attack g2: {0}")]
    RelativeSpeed(ParseError),
}

/// Attack on an ACC vehicle's spacing (`g1`) and relative-speed (`g2`)
/// measurements. Derivatives are computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    g1: Expr,
    g2: Expr,
    dg1: Expr,
    dg2: Expr,
    pub mode: InjectionMode,
    pub window: AttackWindow,
}

impl AttackSpec {
    pub fn new(g1: Expr, g2: Expr, mode: InjectionMode, window: AttackWindow) -> Self {
        let dg1 = g1.differentiate();
        let dg2 = g2.differentiate();
        Self {
            g1,
            g2,
            dg1,
            dg2,
            mode,
            window,
        }
    }

    /// Parses `g1` over `s` and `g2` over `dv`.
    pub fn parse(
        g1: &str,
        g2: &str,
        mode: InjectionMode,
        window: AttackWindow,
    ) -> Result<Self, AttackSpecError> {
        let g1 = parse(g1, SPACING_VAR).map_err(AttackSpecError::Spacing)?;
        let g2 = parse(g2, RELATIVE_SPEED_VAR).map_err(AttackSpecError::RelativeSpeed)?;
        Ok(Self::new(g1, g2, mode, window))
    }

    /// An attack that leaves both measurements untouched.
    pub fn neutral(mode: InjectionMode, window: AttackWindow) -> Self {
        let c = match mode {
            InjectionMode::Additive => 0.0,
            InjectionMode::Multiplicative => 1.0,
        };
        Self::new(Expr::Constant(c), Expr::Constant(c), mode, window)
    }

    pub fn g1(&self) -> &Expr {
        &self.g1
    }

    pub fn g2(&self) -> &Expr {
        &self.g2
    }

    pub fn dg1(&self) -> &Expr {
        &self.dg1
    }

    pub fn dg2(&self) -> &Expr {
        &self.dg2
    }

    pub fn g1_source(&self) -> String {
        self.g1.display(SPACING_VAR).to_string()
    }

    pub fn g2_source(&self) -> String {
        self.g2.display(RELATIVE_SPEED_VAR).to_string()
    }

    /// Spacing and relative speed as seen by the attacked controller.
    pub fn perceive(&self, s: f64, dv: f64) -> Result<(f64, f64), EvalError> {
        let w1 = self.g1.eval(s)?;
        let w2 = self.g2.eval(dv)?;
        Ok(match self.mode {
            InjectionMode::Additive => (s + w1, dv + w2),
            InjectionMode::Multiplicative => (s * w1, dv * w2),
        })
    }
}
