//! Characteristic functions of single amplitudes and of shell sums, and the
//! bounds built from them.

mod bernstein;
mod bounds;
mod concentration;
mod polya;
mod shells;

pub use bernstein::{bernstein_approximation, BernsteinReport, PsiForm, SignChain};
pub use bounds::{
    cramer_ripple_bound, decay_exponent_fit, partial_log_bound, quadratic_log_bound,
    single_char_fun, tail_bound_s2, taylor_remainder_check, BoundReport, CramerReport,
    PartialLogBound, QuadraticBound, TaylorCheck,
};
pub use concentration::{concentration_bound, interval_mass_bound, ConcentrationBound, SmoothedIndicator};
pub use polya::{polya_szego_lhs, polya_szego_limit, wintner_f, PolyaSzego};
pub use shells::{log_sum, shell_product, CharFunGrid, Grouping, ShellTail, ShellTerm, ShellWeights};

use std::fmt::Write as _;

impl CharFunGrid {
    /// Columns `t,re,im,log_inv_modulus`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im,log_inv_modulus\n");
        for i in 0..self.t_values.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.t_values[i], self.values[i].re, self.values[i].im, self.log_inv_modulus[i]
            );
        }
        out
    }
}
