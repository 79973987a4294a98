//! Physical network, channel gains and the per-scenario convex programs.
//!
//! Two users `U1` (near) and `U2` (far) send to a destination `D`. In each block
//! of unit length both first harvest natural energy for `t0 = 1 - Σ t_i`, then
//! transmit in TDMA order. Four cooperation scenarios are modelled:
//!
//! | scenario | data relaying by U1 | RF energy harvesting |
//! |----------|---------------------|----------------------|
//! | S1       | yes                 | yes (power split ρ)  |
//! | S2       | yes                 | no                   |
//! | S3       | no                  | yes                  |
//! | S4       | no                  | no                   |
//!
//! Case A lets `U1` transmit first, case B lets `U2` transmit first.
//!
//! Energy arrival rates are given in mW (mJ per block); noise powers are in W.
//! Programs are built in SI units (J per block), so that `γ · y / t` is a
//! dimensionless SNR.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use crate::convex::{
    perspective_unchecked, Allocation, ConvexProgram, EpigraphConstraint, LinearConstraint,
    PerspectiveTerm, VarKind,
};
use crate::error::{Error, Result};

/// mW (mJ per unit block) to W (J per unit block).
pub const MILLI: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// U1 to D distance.
    pub d1: f64,
    /// U2 to D distance.
    pub d2: f64,
    /// U1 to U2 distance.
    pub du: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Attenuation at unit distance.
    pub lambda: f64,
    /// Noise power at D (W).
    pub sigma2_d: f64,
    /// Noise power at U1 (W).
    pub sigma2_u1: f64,
    /// Noise power at U2 (W). U2 never decodes, kept for completeness.
    pub sigma2_u2: f64,
    /// RF energy harvesting efficiency.
    pub eta: f64,
    /// Natural energy arrival rate at U1 (mW).
    pub x1: f64,
    /// Natural energy arrival rate at U2 (mW).
    pub x2: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for NetworkConfig {
    /// The reference setting: `d1 = du = 1`, `d2 = 2`, `α = 2`, `λ = 1`, all noise
    /// powers `1e-4` W, `η = 0.75`, `X1 = X2 = 100` mW, unit weights.
    fn default() -> Self {
        Self {
            d1: 1.0,
            d2: 2.0,
            du: 1.0,
            alpha: 2.0,
            lambda: 1.0,
            sigma2_d: 1e-4,
            sigma2_u1: 1e-4,
            sigma2_u2: 1e-4,
            eta: 0.75,
            x1: 100.0,
            x2: 100.0,
            w1: 1.0,
            w2: 1.0,
        }
    }
}

impl NetworkConfig {
    /// Collinear placement `U2 - U1 - D`, so `du = d2 - d1`.
    pub fn with_collinear_d1(mut self, d1: f64) -> Self {
        self.d1 = d1;
        self.du = self.d2 - d1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, d) in [("d1", self.d1), ("d2", self.d2), ("du", self.du)] {
            if !(d > 0.0) || !d.is_finite() {
                return bad(format!("{name} must be a positive distance, got {d}"));
            }
        }
        if !(self.d1 < self.d2) {
            return bad(format!("near user must be closer: d1={} >= d2={}", self.d1, self.d2));
        }
        for (name, s) in [
            ("sigma2_D", self.sigma2_d),
            ("sigma2_U1", self.sigma2_u1),
            ("sigma2_U2", self.sigma2_u2),
        ] {
            if !(s > 0.0) {
                return bad(format!("{name} must be positive, got {s}"));
            }
        }
        if !(self.lambda > 0.0) || !self.alpha.is_finite() {
            return bad(format!("bad path loss (lambda={}, alpha={})", self.lambda, self.alpha));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if !(self.x1 >= 0.0) || !(self.x2 >= 0.0) {
            return bad(format!("energy rates must be >= 0 (X1={}, X2={})", self.x1, self.x2));
        }
        if !(self.w1 >= 0.0) || !(self.w2 >= 0.0) || self.w1 + self.w2 == 0.0 {
            return bad(format!("weights must be >= 0 and not both zero (w1={}, w2={})", self.w1, self.w2));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub h1: f64,
    pub h2: f64,
    pub hu: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma_u: f64,
}

/// Path-loss gains `h = λ d^-α` and SNR coefficients `γ = h / σ²`.
pub fn derive_channels(cfg: &NetworkConfig) -> Result<ChannelState> {
    for (name, d) in [("d1", cfg.d1), ("d2", cfg.d2), ("du", cfg.du)] {
        if !(d > 0.0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive, got {d}")));
        }
    }
    for (name, s) in [("sigma2_D", cfg.sigma2_d), ("sigma2_U1", cfg.sigma2_u1)] {
        if !(s > 0.0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive, got {s}")));
        }
    }
    let gain = |d: f64| cfg.lambda * d.powf(-cfg.alpha);
    let (h1, h2, hu) = (gain(cfg.d1), gain(cfg.d2), gain(cfg.du));
    Ok(ChannelState {
        h1,
        h2,
        hu,
        gamma1: h1 / cfg.sigma2_d,
        gamma2: h2 / cfg.sigma2_d,
        gamma_u: hu / cfg.sigma2_u1,
    })
}

/// Largest admissible power-splitting ratio, `1 - γ2/γu` (exclusive).
pub fn rho_max(ch: &ChannelState) -> Result<f64> {
    if ch.gamma_u <= ch.gamma2 {
        return Err(Error::RelayNotBeneficial {
            gamma2: ch.gamma2,
            gamma_u: ch.gamma_u,
        });
    }
    Ok(1.0 - ch.gamma2 / ch.gamma_u)
}

/// RF energy collected over `t` from a signal of power `p` through gain `h`.
pub fn harvested_rf_energy(p: f64, h: f64, rho: f64, eta: f64, t: f64) -> Result<f64> {
    if p < 0.0 || h < 0.0 || t < 0.0 || !(0.0..=1.0).contains(&rho) || !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!(
            "harvested energy needs nonnegative inputs and ratios in [0, 1] (P={p}, h={h}, rho={rho}, eta={eta}, t={t})"
        )));
    }
    Ok(eta * rho * p * h * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4];

    /// Relaying (data cooperation) present.
    pub fn relays(self) -> bool {
        matches!(self, Scenario::S1 | Scenario::S2)
    }

    /// RF energy harvesting (energy cooperation) present.
    pub fn harvests(self) -> bool {
        matches!(self, Scenario::S1 | Scenario::S3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    /// U1 transmits first.
    A,
    /// U2 transmits first.
    B,
}

impl Case {
    pub const ALL: [Case; 2] = [Case::A, Case::B];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    WeightedSum,
    /// Maximize `min(B1, B2)`.
    CommonThroughput,
}

macro_rules! display_fromstr {
    ($ty:ty, $($variant:path => $s:literal $(| $alt:literal)*),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s $(| $alt)* => Ok($variant),)+
                    other => Err(Error::Parse(format!("unknown {} '{other}'", stringify!($ty)))),
                }
            }
        }
    };
}

display_fromstr!(Scenario, Scenario::S1 => "S1" | "s1", Scenario::S2 => "S2" | "s2", Scenario::S3 => "S3" | "s3", Scenario::S4 => "S4" | "s4");
display_fromstr!(Case, Case::A => "A" | "a", Case::B => "B" | "b");
display_fromstr!(Objective, Objective::WeightedSum => "sum" | "weighted-sum", Objective::CommonThroughput => "common");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub case: Case,
    pub objective: Objective,
    /// Power-splitting ratio at U1; only meaningful for S1 and forced to 0 elsewhere.
    pub rho: f64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, case: Case, objective: Objective, rho: f64) -> Self {
        let rho = if scenario == Scenario::S1 { rho } else { 0.0 };
        Self {
            scenario,
            case,
            objective,
            rho,
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.scenario, self.case)
    }
}

/// Index layout of the decision vector for a given scenario and objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_slots: usize,
    pub common: bool,
}

impl Layout {
    pub fn of(spec: &ScenarioSpec) -> Self {
        Self {
            n_slots: if spec.scenario.relays() { 3 } else { 2 },
            common: spec.objective == Objective::CommonThroughput,
        }
    }

    /// Index of `t_{slot}` (1-based slot).
    pub fn t(&self, slot: usize) -> usize {
        slot - 1
    }

    pub fn y(&self, slot: usize) -> usize {
        self.n_slots + slot - 1
    }

    /// Relayed-user throughput `B` (S1/S2 only).
    pub fn relay_aux(&self) -> Option<usize> {
        (self.n_slots == 3).then_some(2 * self.n_slots)
    }

    /// Common throughput `B̄`.
    pub fn common_aux(&self) -> Option<usize> {
        self.common.then(|| 2 * self.n_slots + usize::from(self.n_slots == 3))
    }

    pub fn n_vars(&self) -> usize {
        2 * self.n_slots + usize::from(self.n_slots == 3) + usize::from(self.common)
    }

    pub fn kinds(&self) -> Vec<VarKind> {
        let mut k = vec![VarKind::Time; self.n_slots];
        k.extend(std::iter::repeat_n(VarKind::Energy, self.n_slots));
        k.extend(std::iter::repeat_n(VarKind::Throughput, self.n_vars() - 2 * self.n_slots));
        k
    }

    /// `t0 = 1 - Σ t_i`.
    pub fn t0(&self, x: &[f64]) -> f64 {
        1.0 - (1..=self.n_slots).map(|s| x[self.t(s)]).sum::<f64>()
    }
}

/// Builds the canonical (minimization) program for one scenario/case/objective.
///
/// Variable layouts: S1/S2 use `(t1, t2, t3, y1, y2, y3, B)`, S3/S4 use
/// `(t1, t2, y1, y2)`; common throughput appends `B̄`. `t0` is eliminated.
pub fn build_problem(spec: &ScenarioSpec, cfg: &NetworkConfig, ch: &ChannelState) -> Result<ConvexProgram> {
    cfg.validate()?;
    if spec.scenario != Scenario::S1 && spec.rho != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "rho must be 0 outside S1, got {} for {}",
            spec.rho,
            spec.scenario
        )));
    }
    if spec.scenario.relays() {
        let rmax = rho_max(ch)?;
        if !(spec.rho >= 0.0 && spec.rho < rmax) {
            return Err(Error::RhoOutOfRange {
                rho: spec.rho,
                rho_max: rmax,
            });
        }
    }
    let eta = if spec.scenario.harvests() { cfg.eta } else { 0.0 };
    let p = match spec.scenario {
        Scenario::S1 | Scenario::S2 => relay_program(spec, cfg, ch, eta, spec.rho),
        Scenario::S3 | Scenario::S4 => direct_program(spec, cfg, ch, eta),
    };
    debug_assert!(p.validate().is_ok());
    Ok(p)
}

fn row(n: usize, entries: &[(usize, f64)], b: f64) -> LinearConstraint {
    let mut a = vec![0.0; n];
    for &(i, v) in entries {
        a[i] += v;
    }
    LinearConstraint { a, b }
}

/// Adds the objective for per-user throughput expressions `b1`, `b2`, each either a
/// perspective term or an auxiliary coordinate.
fn add_objective(p: &mut ConvexProgram, lay: &Layout, cfg: &NetworkConfig, b1: PerspectiveTerm, b2: UserThroughput) {
    let n = lay.n_vars();
    match lay.common_aux() {
        None => {
            if cfg.w1 > 0.0 {
                p.objective_terms.push(PerspectiveTerm { coeff: cfg.w1, ..b1 });
            }
            match b2 {
                UserThroughput::Term(t) => {
                    if cfg.w2 > 0.0 {
                        p.objective_terms.push(PerspectiveTerm { coeff: cfg.w2, ..t });
                    }
                }
                UserThroughput::Aux(i) => {
                    p.objective_linear[i] = -cfg.w2;
                    if cfg.w2 == 0.0 {
                        // B would be unbounded below without a weight pulling it up
                        p.nonneg[i] = true;
                    }
                }
            }
        }
        Some(c) => {
            p.objective_linear[c] = -1.0;
            p.epigraph.push(EpigraphConstraint {
                aux_index: c,
                terms: vec![PerspectiveTerm { coeff: 1.0, ..b1 }],
            });
            match b2 {
                UserThroughput::Term(t) => p.epigraph.push(EpigraphConstraint {
                    aux_index: c,
                    terms: vec![PerspectiveTerm { coeff: 1.0, ..t }],
                }),
                UserThroughput::Aux(i) => p.linear.push(row(n, &[(c, 1.0), (i, -1.0)], 0.0)),
            }
        }
    }
}

enum UserThroughput {
    Term(PerspectiveTerm),
    Aux(usize),
}

fn relay_program(spec: &ScenarioSpec, cfg: &NetworkConfig, ch: &ChannelState, eta: f64, rho: f64) -> ConvexProgram {
    let lay = Layout::of(spec);
    let n = lay.n_vars();
    let mut p = ConvexProgram::empty(lay.kinds());
    let (x1, x2) = (cfg.x1 * MILLI, cfg.x2 * MILLI);
    let (t1, t2, t3) = (lay.t(1), lay.t(2), lay.t(3));
    let (y1, y2, y3) = (lay.y(1), lay.y(2), lay.y(3));
    let b = lay.relay_aux().expect("relay layout");
    let relay_gamma = (1.0 - rho) * ch.gamma_u;
    let term = |g: f64, t: usize, y: usize| PerspectiveTerm::new(g, t, y, 1.0);

    let own = match spec.case {
        Case::A => {
            // t1: U1 own data (U2 harvests all of it), t2: U2 broadcasts, t3: U1 relays
            p.epigraph.push(EpigraphConstraint {
                aux_index: b,
                terms: vec![term(ch.gamma2, t2, y2), term(ch.gamma1, t3, y3)],
            });
            p.epigraph.push(EpigraphConstraint {
                aux_index: b,
                terms: vec![term(relay_gamma, t2, y2)],
            });
            p.linear.push(row(n, &[(y1, 1.0), (t1, x1), (t2, x1), (t3, x1)], x1));
            p.linear.push(row(n, &[(y1, -eta * ch.hu), (y2, 1.0), (t2, x2), (t3, x2)], x2));
            p.linear.push(row(n, &[(y1, 1.0), (y2, -eta * rho * ch.hu), (y3, 1.0), (t3, x1)], x1));
            term(ch.gamma1, t1, y1)
        }
        Case::B => {
            // t1: U2 broadcasts, t2: U1 relays, t3: U1 own data
            p.epigraph.push(EpigraphConstraint {
                aux_index: b,
                terms: vec![term(ch.gamma2, t1, y1), term(ch.gamma1, t2, y2)],
            });
            p.epigraph.push(EpigraphConstraint {
                aux_index: b,
                terms: vec![term(relay_gamma, t1, y1)],
            });
            p.linear.push(row(n, &[(y1, 1.0), (t1, x2), (t2, x2), (t3, x2)], x2));
            p.linear.push(row(n, &[(y1, -eta * rho * ch.hu), (y2, 1.0), (t2, x1), (t3, x1)], x1));
            p.linear.push(row(n, &[(y1, -eta * rho * ch.hu), (y2, 1.0), (y3, 1.0), (t3, x1)], x1));
            term(ch.gamma1, t3, y3)
        }
    };
    p.linear.push(row(n, &[(t1, 1.0), (t2, 1.0), (t3, 1.0)], 1.0));
    add_objective(&mut p, &lay, cfg, own, UserThroughput::Aux(b));
    p
}

fn direct_program(spec: &ScenarioSpec, cfg: &NetworkConfig, ch: &ChannelState, eta: f64) -> ConvexProgram {
    let lay = Layout::of(spec);
    let n = lay.n_vars();
    let mut p = ConvexProgram::empty(lay.kinds());
    let (x1, x2) = (cfg.x1 * MILLI, cfg.x2 * MILLI);
    let (t1, t2, y1, y2) = (lay.t(1), lay.t(2), lay.y(1), lay.y(2));
    // the first transmitter spends energy saved during t0; the second also
    // harvests the first one's broadcast
    let (first_rate, second_rate) = match spec.case {
        Case::A => (x1, x2),
        Case::B => (x2, x1),
    };
    p.linear.push(row(n, &[(y1, 1.0), (t1, first_rate), (t2, first_rate)], first_rate));
    p.linear.push(row(n, &[(y1, -eta * ch.hu), (y2, 1.0), (t2, second_rate)], second_rate));
    p.linear.push(row(n, &[(t1, 1.0), (t2, 1.0)], 1.0));
    let (b1, b2) = match spec.case {
        Case::A => (
            PerspectiveTerm::new(ch.gamma1, t1, y1, 1.0),
            PerspectiveTerm::new(ch.gamma2, t2, y2, 1.0),
        ),
        Case::B => (
            PerspectiveTerm::new(ch.gamma1, t2, y2, 1.0),
            PerspectiveTerm::new(ch.gamma2, t1, y1, 1.0),
        ),
    };
    add_objective(&mut p, &lay, cfg, b1, UserThroughput::Term(b2));
    p
}

/// Per-user throughput over one block, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserThroughputs {
    pub b1: f64,
    pub b2: f64,
}

/// Evaluates the physical throughput of each user at an allocation, using the
/// min-of-two relay expression for S1/S2 rather than the auxiliary coordinate.
pub fn throughputs_from_allocation(
    spec: &ScenarioSpec,
    cfg: &NetworkConfig,
    ch: &ChannelState,
    alloc: &Allocation,
) -> Result<UserThroughputs> {
    const FEAS_TOL: f64 = 1e-9;
    let p = build_problem(spec, cfg, ch)?;
    let x = &alloc.x;
    if x.len() != p.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: p.n_vars(),
            got: x.len(),
        });
    }
    let lay = Layout::of(spec);
    for i in 0..2 * lay.n_slots {
        if !(x[i] >= -FEAS_TOL) {
            return Err(Error::Infeasible(format!("coordinate {i} is negative ({})", x[i])));
        }
    }
    for (j, l) in p.linear.iter().enumerate() {
        let touches_aux = l
            .a
            .iter()
            .zip(&p.kinds)
            .any(|(a, k)| *a != 0.0 && *k == VarKind::Throughput);
        if !touches_aux && l.value(x) > FEAS_TOL {
            return Err(Error::Infeasible(format!(
                "energy/time row {j} violated by {:.3e}",
                l.value(x)
            )));
        }
    }
    let rate = |g: f64, slot_t: usize, slot_y: usize| {
        -perspective_unchecked(g, x[lay.t(slot_t)].max(0.0), x[lay.y(slot_y)].max(0.0)) / LN_2
    };
    let relay_gamma = (1.0 - spec.rho) * ch.gamma_u;
    let (b1, b2) = match (spec.scenario.relays(), spec.case) {
        (true, Case::A) => {
            let decodable = rate(ch.gamma2, 2, 2) + rate(ch.gamma1, 3, 3);
            (rate(ch.gamma1, 1, 1), decodable.min(rate(relay_gamma, 2, 2)))
        }
        (true, Case::B) => {
            let decodable = rate(ch.gamma2, 1, 1) + rate(ch.gamma1, 2, 2);
            (rate(ch.gamma1, 3, 3), decodable.min(rate(relay_gamma, 1, 1)))
        }
        (false, Case::A) => (rate(ch.gamma1, 1, 1), rate(ch.gamma2, 2, 2)),
        (false, Case::B) => (rate(ch.gamma1, 2, 2), rate(ch.gamma2, 1, 1)),
    };
    Ok(UserThroughputs { b1, b2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> (NetworkConfig, ChannelState) {
        let cfg = NetworkConfig::default();
        let ch = derive_channels(&cfg).unwrap();
        (cfg, ch)
    }

    #[test]
    fn channels_at_reference_setting() {
        let (_, ch) = reference();
        assert_relative_eq!(ch.h1, 1.0);
        assert_relative_eq!(ch.h2, 0.25);
        assert_relative_eq!(ch.hu, 1.0);
        assert_relative_eq!(ch.gamma1, 1e4, max_relative = 1e-12);
        assert_relative_eq!(ch.gamma2, 2.5e3, max_relative = 1e-12);
        assert_relative_eq!(ch.gamma_u, 1e4, max_relative = 1e-12);
    }

    #[test]
    fn unit_distance_and_half_distance_gains() {
        for alpha in [1.0, 2.0, 3.5] {
            let cfg = NetworkConfig {
                alpha,
                ..NetworkConfig::default()
            };
            assert_relative_eq!(derive_channels(&cfg).unwrap().h1, 1.0);
        }
        let cfg = NetworkConfig {
            d1: 0.5,
            du: 1.5,
            ..NetworkConfig::default()
        };
        assert_relative_eq!(derive_channels(&cfg).unwrap().h1, 4.0, max_relative = 1e-15);
    }

    #[test]
    fn channel_errors() {
        let cfg = NetworkConfig {
            du: 0.0,
            ..NetworkConfig::default()
        };
        assert!(derive_channels(&cfg).is_err());
        let cfg = NetworkConfig {
            sigma2_d: 0.0,
            ..NetworkConfig::default()
        };
        assert!(derive_channels(&cfg).is_err());
    }

    #[test]
    fn rho_max_examples() {
        let (_, ch) = reference();
        assert_relative_eq!(rho_max(&ch).unwrap(), 0.75, max_relative = 1e-15);
        let eq = ChannelState {
            gamma2: 5.0,
            gamma_u: 5.0,
            ..ch
        };
        assert!(matches!(rho_max(&eq), Err(Error::RelayNotBeneficial { .. })));
        let perfect = ChannelState { gamma2: 0.0, ..ch };
        assert_eq!(rho_max(&perfect).unwrap(), 1.0);
    }

    #[test]
    fn harvested_energy_examples() {
        assert_relative_eq!(harvested_rf_energy(100.0, 1.0, 1.0, 0.75, 0.5).unwrap(), 37.5);
        assert_eq!(harvested_rf_energy(100.0, 1.0, 0.0, 0.75, 0.5).unwrap(), 0.0);
        assert_eq!(harvested_rf_energy(100.0, 1.0, 0.4, 0.75, 0.0).unwrap(), 0.0);
        assert!(harvested_rf_energy(-1.0, 1.0, 0.4, 0.75, 0.1).is_err());
        assert!(harvested_rf_energy(1.0, 1.0, 1.4, 0.75, 0.1).is_err());
    }

    #[test]
    fn s1a_program_shape() {
        let (cfg, ch) = reference();
        let spec = ScenarioSpec::new(Scenario::S1, Case::A, Objective::WeightedSum, 0.3);
        let p = build_problem(&spec, &cfg, &ch).unwrap();
        assert_eq!(p.n_vars(), 7);
        assert_eq!(p.epigraph.len(), 2);
        assert_eq!(p.linear.len(), 4);
        assert_eq!(p.nonneg, vec![true, true, true, true, true, true, false]);
        // relay link uses (1 - rho) * gamma_u
        assert_relative_eq!(p.epigraph[1].terms[0].gamma, 0.7 * 1e4, max_relative = 1e-12);
        // case A: U2 harvests all of U1's first-slot signal (no rho)
        assert_relative_eq!(p.linear[1].a[3], -0.75);
        assert_relative_eq!(p.linear[2].a[4], -0.75 * 0.3);
    }

    #[test]
    fn s1b_power_split_on_both_rows() {
        let (cfg, ch) = reference();
        let spec = ScenarioSpec::new(Scenario::S1, Case::B, Objective::WeightedSum, 0.4);
        let p = build_problem(&spec, &cfg, &ch).unwrap();
        assert_relative_eq!(p.linear[1].a[3], -0.75 * 0.4);
        assert_relative_eq!(p.linear[2].a[3], -0.75 * 0.4);
        assert_eq!(p.objective_terms[0].t_index, 2);
    }

    #[test]
    fn s4a_is_s3a_without_harvesting() {
        let (cfg, ch) = reference();
        let spec = ScenarioSpec::new(Scenario::S4, Case::A, Objective::WeightedSum, 0.0);
        let p = build_problem(&spec, &cfg, &ch).unwrap();
        assert_eq!(p.n_vars(), 4);
        // y1 <= X1 (1 - t1 - t2), y2 <= X2 (1 - t2)
        let x1 = 100.0 * MILLI;
        assert_eq!(p.linear[0].a, vec![x1, x1, 1.0, 0.0]);
        assert_eq!(p.linear[0].b, x1);
        assert_eq!(p.linear[1].a, vec![0.0, x1, 0.0, 1.0]);
        let s3 = build_problem(
            &ScenarioSpec::new(Scenario::S3, Case::A, Objective::WeightedSum, 0.0),
            &NetworkConfig { eta: 0.0, ..cfg },
            &ch,
        )
        .unwrap();
        assert_eq!(p, s3);
    }

    #[test]
    fn s2_is_s1_with_rho_and_eta_zero() {
        let (cfg, ch) = reference();
        for case in Case::ALL {
            for obj in [Objective::WeightedSum, Objective::CommonThroughput] {
                let s2 = build_problem(&ScenarioSpec::new(Scenario::S2, case, obj, 0.0), &cfg, &ch).unwrap();
                let s1 = build_problem(
                    &ScenarioSpec::new(Scenario::S1, case, obj, 0.0),
                    &NetworkConfig { eta: 0.0, ..cfg },
                    &ch,
                )
                .unwrap();
                assert_eq!(s1, s2);
            }
        }
    }

    #[test]
    fn common_layout_adds_bbar() {
        let (cfg, ch) = reference();
        let p = build_problem(
            &ScenarioSpec::new(Scenario::S1, Case::A, Objective::CommonThroughput, 0.0),
            &cfg,
            &ch,
        )
        .unwrap();
        assert_eq!(p.n_vars(), 8);
        assert_eq!(p.objective_linear[7], -1.0);
        assert_eq!(p.epigraph.len(), 3);
        assert_eq!(p.linear.len(), 5);
        let q = build_problem(
            &ScenarioSpec::new(Scenario::S3, Case::B, Objective::CommonThroughput, 0.0),
            &cfg,
            &ch,
        )
        .unwrap();
        assert_eq!(q.n_vars(), 5);
        assert_eq!(q.epigraph.len(), 2);
    }

    #[test]
    fn build_rejects_bad_rho_and_weak_relay() {
        let (cfg, ch) = reference();
        let spec = ScenarioSpec::new(Scenario::S1, Case::A, Objective::WeightedSum, 0.75);
        assert!(matches!(build_problem(&spec, &cfg, &ch), Err(Error::RhoOutOfRange { .. })));
        let weak = NetworkConfig { du: 3.0, ..cfg };
        let ch = derive_channels(&weak).unwrap();
        let spec = ScenarioSpec::new(Scenario::S2, Case::A, Objective::WeightedSum, 0.0);
        assert!(matches!(build_problem(&spec, &weak, &ch), Err(Error::RelayNotBeneficial { .. })));
        let spec = ScenarioSpec::new(Scenario::S3, Case::A, Objective::WeightedSum, 0.0);
        assert!(build_problem(&spec, &weak, &ch).is_ok());
    }

    #[test]
    fn s4a_reference_throughput() {
        let (cfg, ch) = reference();
        let spec = ScenarioSpec::new(Scenario::S4, Case::A, Objective::WeightedSum, 0.0);
        let alloc = Allocation::new(vec![0.5, 0.0, 0.05, 0.0]);
        let b = throughputs_from_allocation(&spec, &cfg, &ch, &alloc).unwrap();
        assert_relative_eq!(b.b1, 0.5 * 1001f64.log2(), max_relative = 1e-14);
        assert_relative_eq!(b.b1, 4.98361, epsilon = 1e-5);
        assert_eq!(b.b2, 0.0);
    }

    #[test]
    fn relay_min_picks_direct_branch() {
        let (cfg, ch) = reference();
        let spec = ScenarioSpec::new(Scenario::S1, Case::A, Objective::WeightedSum, 0.0);
        // t3 = 0: relay adds nothing, relay link (gamma_u = 4 gamma_2) does not bind
        let alloc = Allocation::new(vec![0.2, 0.3, 0.0, 0.01, 0.02, 0.0, 0.0]);
        let b = throughputs_from_allocation(&spec, &cfg, &ch, &alloc).unwrap();
        assert_relative_eq!(b.b2, 0.3 * (1.0 + 2500.0 * 0.02 / 0.3f64).log2(), max_relative = 1e-14);
    }

    #[test]
    fn infeasible_allocation_is_flagged() {
        let (cfg, ch) = reference();
        let spec = ScenarioSpec::new(Scenario::S4, Case::A, Objective::WeightedSum, 0.0);
        let alloc = Allocation::new(vec![0.5, 0.2, 0.5, 0.0]);
        assert!(matches!(
            throughputs_from_allocation(&spec, &cfg, &ch, &alloc),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::default().validate().is_ok());
        let swapped = NetworkConfig {
            d1: 2.0,
            d2: 1.0,
            ..NetworkConfig::default()
        };
        assert!(swapped.validate().is_err());
        let no_weight = NetworkConfig {
            w1: 0.0,
            w2: 0.0,
            ..NetworkConfig::default()
        };
        assert!(no_weight.validate().is_err());
        let eta = NetworkConfig {
            eta: 1.5,
            ..NetworkConfig::default()
        };
        assert!(eta.validate().is_err());
    }
}
