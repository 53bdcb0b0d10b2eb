//! Named constructions: self-similar maximisers, Γ for 1324, Π and
//! Batkeyev's construction for 1342, and the presets for longer patterns.

use super::optim::{compass_max_box, golden_max};
use super::{BlockPermuton, Node};
use crate::error::PermutonError;
use crate::perm::Permutation;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    /// packing density of 132: `2√3 - 3`
    pub lambda: f64,
    /// packing density of 1432
    pub beta: f64,
    /// `λ β`
    pub gamma: f64,
    /// root in (0, 1) of `3x⁴ - 4x + 1`
    pub kappa: f64,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn constants() -> Constants {
    let lambda = 2.0 * 3f64.sqrt() - 3.0;
    let t = (2f64.sqrt() - 1.0).cbrt();
    let beta = 6.0 * t - 6.0 / t + 4.0;
    // 3x⁴ - 4x + 1 = (x - 1)(3x³ + 3x² + 3x - 1)
    let kappa = bisect(|x| 3.0 * x * x * x + 3.0 * x * x + 3.0 * x - 1.0, 0.0, 1.0);
    Constants {
        lambda,
        beta,
        gamma: lambda * beta,
        kappa,
    }
}

/// Share of the recursive part in the maximisers of 132, 213, 231 and 312.
fn ratio_132() -> f64 {
    (3f64.sqrt() - 1.0) / 2.0
}

fn perm(s: &str) -> Permutation {
    s.parse().expect("static permutation")
}

/// Stored maximiser for `pattern`, expanded to a grid.
pub fn maximiser(pattern: &Permutation) -> Result<Node, PermutonError> {
    let u = ratio_132();
    let r = 1.0 - u;
    let kappa = constants().kappa;
    let node = match pattern.to_string().as_str() {
        "" | "1" | "12" => Node::Inc,
        "21" => Node::Dec,
        "132" => Node::inflation(&perm("12"), &[u, r], vec![Node::Recurse, Node::Dec]),
        "213" => Node::inflation(&perm("12"), &[r, u], vec![Node::Dec, Node::Recurse]),
        "231" => Node::inflation(&perm("21"), &[r, u], vec![Node::Inc, Node::Recurse]),
        "312" => Node::inflation(&perm("21"), &[u, r], vec![Node::Recurse, Node::Inc]),
        "1432" => Node::inflation(&perm("12"), &[kappa, 1.0 - kappa], vec![Node::Recurse, Node::Dec]),
        _ => return Err(PermutonError::UnsupportedMaximiser(pattern.to_string())),
    };
    Ok(node)
}

fn max_node(s: &str) -> Node {
    Node::Max { pattern: perm(s) }
}

fn gamma_domain(a: f64, c: f64) -> Result<f64, PermutonError> {
    let ok = a > 0.0 && a <= 0.25 && c > 0.0 && c <= 0.5;
    let b = (1.0 - c - 2.0 * a) / 2.0;
    if !ok || b < 0.0 {
        return Err(PermutonError::Domain(format!(
            "Γ needs 0 < a <= 1/4, 0 < c <= 1/2, b >= 0; got a = {a}, c = {c}"
        )));
    }
    Ok(b)
}

/// Γ: parts `a, b, c, b, a` along the diagonal holding the 132-maximiser,
/// three decreasing segments, and the 213-maximiser.
pub fn gamma_1324(a: f64, c: f64) -> Result<Node, PermutonError> {
    let b = gamma_domain(a, c)?;
    Ok(Node::inflation(
        &perm("12345"),
        &[a, b, c, b, a],
        vec![max_node("132"), Node::Dec, Node::Dec, Node::Dec, max_node("213")],
    ))
}

/// Closed-form density of 1324 in Γ(a, c).
pub fn eval_gamma_1324(a: f64, c: f64) -> Result<f64, PermutonError> {
    let b = gamma_domain(a, c)?;
    let lambda = constants().lambda;
    let u4 = ratio_132().powi(4);
    let n1 = c * c / 2.0 * (a + b) * (a + b);
    let n2 = b * b / 2.0 * a * (a + b + c);
    let n3 = lambda * a.powi(3) / 6.0 * (a + 2.0 * b + c);
    let n4 = 3f64.sqrt() * lambda / 6.0 * a.powi(4) * u4 / (1.0 - u4);
    Ok(24.0 * (n1 + 2.0 * n2 + 2.0 * n3 + 2.0 * n4))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaOptimum {
    pub a: f64,
    pub c: f64,
    pub value: f64,
}

/// Maximises [`eval_gamma_1324`] over its domain.
pub fn optimize_gamma_1324() -> GammaOptimum {
    let f = |x: &[f64]| eval_gamma_1324(x[0], x[1]).unwrap_or(f64::NEG_INFINITY);
    let lower = [1e-12, 1e-12];
    let upper = [0.25, 0.5];
    let mut best = GammaOptimum {
        a: 0.0,
        c: 0.0,
        value: f64::NEG_INFINITY,
    };
    for start in [[0.1, 0.3], [0.2, 0.1], [0.05, 0.45]] {
        let (x, v) = compass_max_box(f, &start, &lower, &upper, 0.05, 1e-14);
        if v > best.value {
            best = GammaOptimum { a: x[0], c: x[1], value: v };
        }
    }
    best
}

/// Batkeyev's construction: the 1432-maximiser with every layer replaced
/// by a 231-maximiser.
pub fn batkeyev() -> Node {
    let kappa = constants().kappa;
    Node::inflation(&perm("12"), &[kappa, 1.0 - kappa], vec![Node::Recurse, max_node("231")])
}

pub fn eval_batkeyev() -> f64 {
    let Constants { lambda, kappa, .. } = constants();
    4.0 * lambda * (1.0 - kappa).powi(3) * kappa / (1.0 - kappa.powi(4))
}

/// The series form `(8√3 - 12) Σ (1-κ)³ κ^(4n+1)` and the radical form
/// `2(2√3 - 3)(3∛(√2-1) - 3/∛(√2-1) + 2)`.
pub fn batkeyev_closed_forms() -> (f64, f64) {
    let Constants { lambda, kappa, .. } = constants();
    let mut series = 0.0;
    let mut term = (1.0 - kappa).powi(3) * kappa;
    while term > 1e-30 {
        series += term;
        term *= kappa.powi(4);
    }
    let t = (2f64.sqrt() - 1.0).cbrt();
    ((8.0 * 3f64.sqrt() - 12.0) * series, 2.0 * lambda * (3.0 * t - 3.0 / t + 2.0))
}

/// Part sizes of Π, left to right.
#[allow(clippy::excessive_precision)]
pub const PI_1342_WEIGHTS: [f64; 7] = [
    0.2174127723536347308692444843,
    0.0170598057899242722740620549,
    0.0516101402487892270230230972,
    0.4340722809873864994312953007,
    0.1479895625950390496250611829,
    0.0764457255805656971383351365,
    0.0554097124446605236389787433,
];

/// Π: a recursive square at the bottom left, five increasing segments
/// climbing to the top and back down, and a 231-maximiser at the bottom
/// right just above the square.
pub fn pi_1342(weights: &[f64; 7]) -> Result<Node, PermutonError> {
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(PermutonError::Domain("Π weights must be positive".into()));
    }
    let mut children = vec![Node::Recurse];
    children.extend(std::iter::repeat_n(Node::Inc, 5));
    children.push(max_node("231"));
    Ok(Node::inflation(&perm("1357642"), weights, children))
}

/// Density of 1342 in Π with the given part sizes.
pub fn eval_pi_1342(weights: &[f64; 7]) -> Result<f64, PermutonError> {
    let mu = BlockPermuton::new(pi_1342(weights)?)?;
    Ok(mu.density_exact(&perm("1342")))
}

pub const TABLE3_NAMES: [&str; 7] = ["23154", "14523", "21354", "231654", "231564", "231645", "215634"];

pub const PRESET_NAMES: [&str; 15] = [
    "23154", "14523", "21354", "231654", "231564", "231645", "215634", "gamma1324", "batkeyev", "pi1342", "max132",
    "max213", "max231", "max312", "max1432",
];

/// A named construction with the pattern it targets.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: String,
    pub pattern: Permutation,
    pub permuton: BlockPermuton,
    /// closed-form density where one is known
    pub closed_form: Option<f64>,
}

impl Preset {
    fn new(name: &str, pattern: &str, root: Node, closed_form: Option<f64>) -> Result<Self, PermutonError> {
        Ok(Preset {
            name: name.to_string(),
            pattern: perm(pattern),
            permuton: BlockPermuton::new(root)?,
            closed_form,
        })
    }

    pub fn exact_value(&self) -> f64 {
        self.permuton.density_exact(&self.pattern)
    }
}

fn fact(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Density of 14523 in the 14523 construction with top part `alpha`.
fn density_14523(alpha: f64) -> f64 {
    let rest = 1.0 - alpha;
    15.0 / 8.0 * rest * alpha.powi(4) / (1.0 - rest.powi(5))
}

/// Constructions for the longer patterns whose bounds are listed next to
/// their certificates.
pub fn table3_preset(name: &str) -> Result<Preset, PermutonError> {
    let lambda = constants().lambda;
    let halves = [0.5, 0.5];
    let p12 = perm("12");
    match name {
        "23154" => Preset::new(
            name,
            name,
            Node::inflation(&p12, &[0.6, 0.4], vec![max_node("231"), Node::Dec]),
            Some(fact(5) * 0.4f64.powi(2) / fact(2) * 0.6f64.powi(3) / fact(3) * lambda),
        ),
        "231654" => Preset::new(
            name,
            name,
            Node::inflation(&p12, &halves, vec![max_node("231"), Node::Dec]),
            Some(fact(6) * 0.5f64.powi(6) / (fact(3) * fact(3)) * lambda),
        ),
        "231564" | "231645" => {
            let second = if name == "231564" { "231" } else { "312" };
            Preset::new(
                name,
                name,
                Node::inflation(&p12, &halves, vec![max_node("231"), max_node(second)]),
                Some(fact(6) * 0.5f64.powi(6) / (fact(3) * fact(3)) * lambda * lambda),
            )
        }
        "215634" => Preset::new(
            name,
            name,
            Node::inflation(&perm("132"), &[1.0 / 3.0; 3], vec![Node::Dec, Node::Inc, Node::Inc]),
            Some(fact(6) / (9f64.powi(3) * 8.0)),
        ),
        "14523" => {
            let (alpha, _) = golden_max(density_14523, 1e-6, 1.0 - 1e-6, 1e-12);
            Preset::new(
                name,
                name,
                Node::inflation(
                    &perm("132"),
                    &[1.0 - alpha, alpha / 2.0, alpha / 2.0],
                    vec![Node::Recurse, Node::Inc, Node::Inc],
                ),
                None,
            )
        }
        "21354" => {
            let beta = bisect(|x| 40.0 * x * x * x - 32.0 * x * x + 9.0 * x - 1.0, 0.0, 0.5);
            Preset::new(name, name, Node::layered(&[beta, 0.5 - beta, 0.5 - beta, beta]), None)
        }
        _ => Err(PermutonError::UnknownPreset(name.to_string())),
    }
}

/// Any construction addressable by name, see [`PRESET_NAMES`].
pub fn preset(name: &str) -> Result<Preset, PermutonError> {
    let c = constants();
    match name {
        "gamma1324" => {
            let opt = optimize_gamma_1324();
            Preset::new(name, "1324", gamma_1324(opt.a, opt.c)?, Some(opt.value))
        }
        "batkeyev" => Preset::new(name, "1342", batkeyev(), Some(eval_batkeyev())),
        "pi1342" => Preset::new(name, "1342", pi_1342(&PI_1342_WEIGHTS)?, None),
        _ => {
            if let Some(pattern) = name.strip_prefix("max") {
                let value = match pattern {
                    "1432" => c.beta,
                    "132" | "213" | "231" | "312" => c.lambda,
                    _ => return Err(PermutonError::UnknownPreset(name.to_string())),
                };
                Preset::new(name, pattern, max_node(pattern), Some(value))
            } else {
                table3_preset(name)
            }
        }
    }
}
