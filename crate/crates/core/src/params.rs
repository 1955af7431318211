use crate::error::{Error, Result};

/// `2^x`, exact for integer `x` in the representable range.
///
/// Integer exponents are assembled directly from the IEEE exponent bits so
/// coefficients such as `2^{α|j|}` with integer products carry no rounding.
pub fn pow2(x: f64) -> f64 {
    if x.fract() == 0.0 && x.abs() <= 1100.0 {
        let e = x as i64;
        if e > 1023 {
            return f64::INFINITY;
        }
        if e >= -1022 {
            return f64::from_bits(((e + 1023) as u64) << 52);
        }
        if e >= -1074 {
            return f64::from_bits(1u64 << (e + 1074));
        }
        return 0.0;
    }
    x.exp2()
}

/// How strictly the branching factor is validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchingMode {
    /// Branching must be a power of two, so `2^{2α̃} = N` exactly.
    #[default]
    PowerOfTwo,
    /// Any branching `N >= 1`.
    Permissive,
}

/// Coefficients of the tree (or classic, `branching = 1`) model and its truncation depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Tree exponent: `c_j = 2^{α|j|}`. For the classic model this plays the role of β.
    pub alpha: f64,
    /// Viscous exponent: `d_j = 2^{γ|j|}`.
    pub gamma: f64,
    pub nu: f64,
    pub f: f64,
    pub branching: usize,
    pub depth: usize,
}

impl ModelParams {
    /// Tree model parameters, validated in [`BranchingMode::PowerOfTwo`].
    pub fn tree(alpha: f64, gamma: f64, nu: f64, f: f64, branching: usize, depth: usize) -> Result<Self> {
        let p = Self {
            alpha,
            gamma,
            nu,
            f,
            branching,
            depth,
        };
        p.validate(BranchingMode::PowerOfTwo)?;
        Ok(p)
    }

    /// Classic model parameters with exponent `beta`.
    pub fn classic(beta: f64, gamma: f64, nu: f64, f: f64, depth: usize) -> Result<Self> {
        Self::tree(beta, gamma, nu, f, 1, depth)
    }

    pub fn validate(&self, mode: BranchingMode) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha", "must be finite and positive");
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad("gamma", "must be finite and positive");
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return bad("nu", "must be finite and non-negative");
        }
        if !(self.f.is_finite() && self.f >= 0.0) {
            return bad("f", "must be finite and non-negative");
        }
        if self.branching == 0 {
            return bad("branching", "must be at least 1");
        }
        if mode == BranchingMode::PowerOfTwo && !self.branching.is_power_of_two() {
            return bad("branching", "must be a power of two (use permissive mode otherwise)");
        }
        Ok(())
    }

    /// `α̃ = ½ log₂ N`.
    pub fn alpha_tilde(&self) -> f64 {
        alpha_tilde(self.branching)
    }

    /// Classic exponent under lifting, `β = α − α̃`.
    pub fn beta(&self) -> f64 {
        self.alpha - self.alpha_tilde()
    }

    /// Nonlinear coefficient of generation `g`: `c = 2^{αg}` (`k_n = 2^{βn}` for the classic model).
    pub fn c(&self, g: usize) -> f64 {
        pow2(self.alpha * g as f64)
    }

    /// Viscous coefficient of generation `g`: `d = 2^{γg}`.
    pub fn d(&self, g: usize) -> f64 {
        pow2(self.gamma * g as f64)
    }

    pub fn with_depth(self, depth: usize) -> Self {
        Self { depth, ..self }
    }

    pub fn with_forcing(self, f: f64) -> Self {
        Self { f, ..self }
    }
}

/// `½ log₂ N`, exact for powers of two.
pub fn alpha_tilde(branching: usize) -> f64 {
    if branching.is_power_of_two() {
        0.5 * branching.trailing_zeros() as f64
    } else {
        0.5 * (branching as f64).log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pow2_exact_integers() {
        assert_eq!(pow2(0.0), 1.0);
        assert_eq!(pow2(10.0), 1024.0);
        assert_eq!(pow2(-3.0), 0.125);
        assert_eq!(pow2(-1074.0), f64::from_bits(1));
        assert_eq!(pow2(-1080.0), 0.0);
        assert_eq!(pow2(1024.0), f64::INFINITY);
        assert!((pow2(0.5) - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn derived_fields() {
        for (n, at) in [(1usize, 0.0), (2, 0.5), (4, 1.0), (8, 1.5)] {
            let p = ModelParams::tree(2.5, 1.0, 0.0, 1.0, n, 3).unwrap();
            assert_eq!(p.alpha_tilde(), at);
            assert_eq!(pow2(2.0 * p.alpha_tilde()), n as f64);
            assert_eq!(p.beta(), 2.5 - at);
        }
    }

    #[test]
    fn validation() {
        assert!(ModelParams::tree(1.0, 1.0, 0.0, 0.0, 3, 2).is_err());
        let p = ModelParams {
            alpha: 1.0,
            gamma: 1.0,
            nu: 0.0,
            f: 0.0,
            branching: 3,
            depth: 2,
        };
        assert!(p.validate(BranchingMode::Permissive).is_ok());
        assert!(ModelParams::tree(0.0, 1.0, 0.0, 0.0, 2, 2).is_err());
        assert!(ModelParams::tree(1.0, -1.0, 0.0, 0.0, 2, 2).is_err());
        assert!(ModelParams::tree(1.0, 1.0, -0.1, 0.0, 2, 2).is_err());
        assert!(ModelParams::tree(1.0, 1.0, 0.0, f64::NAN, 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn coefficients_match_repeated_doubling(alpha in 1u32..6, g in 0usize..40) {
            let p = ModelParams::tree(alpha as f64, 2.0, 0.0, 0.0, 2, 3).unwrap();
            let mut expect = 1.0f64;
            for _ in 0..(alpha as usize * g) {
                expect *= 2.0;
            }
            prop_assert_eq!(p.c(g), expect);
        }
    }
}
