//! Simulated data sets with known components.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{
    Aggregation, FeatureMatrix, FeatureSet, HemisphereSpec, RawPanel, Role, TargetSpec, Tcode,
};
use crate::date::Quarter;
use crate::error::Result;
use crate::seed;

/// Hemisphere shape for [`toy_features`].
#[derive(Debug, Clone)]
pub struct ToyHemisphere {
    pub name: String,
    pub role: Role,
    pub width: usize,
    pub has_trend: bool,
}

impl ToyHemisphere {
    pub fn state(name: &str, width: usize) -> Self {
        Self {
            name: name.into(),
            role: Role::State,
            width,
            has_trend: false,
        }
    }

    pub fn trend(name: &str) -> Self {
        Self {
            name: name.into(),
            role: Role::Coefficient,
            width: 1,
            has_trend: true,
        }
    }

    pub fn volatility(name: &str, width: usize) -> Self {
        Self {
            role: Role::Volatility,
            ..Self::state(name, width)
        }
    }
}

pub fn start_quarter() -> Quarter {
    Quarter::new(1960, 1).expect("valid quarter")
}

/// Gaussian features and target with no structure; all rows are training rows.
pub fn toy_features(hemis: &[ToyHemisphere], n: usize, seed: u64) -> Result<FeatureSet> {
    let mut rng = seed::rng_for(seed, &[]);
    let span = (n - 1) as f64;
    let hemispheres = hemis
        .iter()
        .map(|h| {
            let mut m = Array2::from_shape_simple_fn((n, h.width), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / (h.width as f64).sqrt()
            });
            if h.has_trend {
                let last = h.width - 1;
                for t in 0..n {
                    m[[t, last]] = t as f64 / span;
                }
            }
            FeatureMatrix::from_matrix(&h.name, h.role, m, h.has_trend)
        })
        .collect();
    let target = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    FeatureSet::from_parts(start_quarter(), hemispheres, target, n)
}

/// A simulated panel together with the paths that generated it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: RawPanel,
    pub specs: Vec<HemisphereSpec>,
    pub target: TargetSpec,
    /// True paths indexed like the panel dates. Row t describes the
    /// supervisor observed at t + 1.
    pub truth: Vec<(String, Vec<f64>)>,
}

impl Simulated {
    pub fn truth(&self, name: &str) -> &[f64] {
        &self
            .truth
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("no true path `{name}`"))
            .1
    }

    /// True path at the given dates.
    pub fn truth_on(&self, name: &str, dates: &[Quarter]) -> Vec<f64> {
        let path = self.truth(name);
        dates
            .iter()
            .map(|d| path[self.panel.position(*d).expect("date in panel")])
            .collect()
    }
}

fn ar1<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    let sd = (1.0 - rho * rho).sqrt();
    let mut x: f64 = rng.sample(StandardNormal);
    (0..n)
        .map(|_| {
            x = rho * x + sd * rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = (*x - m) / sd;
    }
}

fn std_of(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

fn names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i:02}")).collect()
}

fn level_target(name: &str) -> TargetSpec {
    TargetSpec {
        mnemonic: name.into(),
        horizon: 1,
        aggregation: Aggregation::OneStep,
        tcode: None,
        scale: 1.0,
    }
}

fn spec(name: &str, mnemonics: &[String], role: Role) -> HemisphereSpec {
    HemisphereSpec {
        name: name.into(),
        mnemonics: mnemonics.to_vec(),
        include_trend: false,
        role,
    }
}

/// Supervisor series with `pi[t + 1] = signal[t] + noise[t]`.
fn shift_into_target(signal: &[f64], noise: &[f64]) -> Vec<f64> {
    let mut pi = vec![signal[0]];
    pi.extend(signal.iter().zip(noise).take(signal.len() - 1).map(|(s, e)| s + e));
    pi
}

/// Two ten-variable hemispheres and a trend hemisphere:
/// `π_{t+1} = lr_t + γ_t·g_t + θ_t·e_t + ν`, with `g_t` a tanh mixture of
/// three `g` variables, `γ_t` a slow sigmoid and noise variance equal to the
/// variance of the two products.
pub fn latent_state(n: usize, seed: u64) -> Result<Simulated> {
    let mut rng = seed::rng_for(seed, &[1]);
    let gx: Vec<Vec<f64>> = (0..10).map(|_| ar1(n, 0.6, &mut rng)).collect();
    let ex: Vec<Vec<f64>> = (0..10).map(|_| ar1(n, 0.6, &mut rng)).collect();
    let mut g: Vec<f64> = (0..n)
        .map(|t| (1.2 * gx[0][t]).tanh() + 0.8 * (gx[1][t] - 0.5 * gx[2][t]).tanh())
        .collect();
    standardize(&mut g);
    let mut e: Vec<f64> = (0..n).map(|t| 0.7 * ex[0][t] + 0.5 * ex[1][t].tanh()).collect();
    standardize(&mut e);
    let gamma: Vec<f64> = (0..n)
        .map(|t| 0.4 + 0.8 / (1.0 + (-8.0 * (t as f64 / n as f64 - 0.5)).exp()))
        .collect();
    let theta = vec![0.6; n];
    let lr: Vec<f64> = (0..n).map(|t| 2.0 + 0.5 * t as f64 / n as f64).collect();
    let hg: Vec<f64> = (0..n).map(|t| gamma[t] * g[t]).collect();
    let he: Vec<f64> = (0..n).map(|t| theta[t] * e[t]).collect();
    let varying: Vec<f64> = (0..n).map(|t| hg[t] + he[t]).collect();
    let sd = std_of(&varying);
    let noise: Vec<f64> = (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let signal: Vec<f64> = (0..n).map(|t| lr[t] + varying[t]).collect();

    let dates = (0..n as i64).map(|k| start_quarter().offset(k)).collect();
    let mut panel = RawPanel::new(dates)?;
    let (gn, en) = (names("X", 10), names("E", 10));
    for (name, x) in gn.iter().zip(gx).chain(en.iter().zip(ex)) {
        panel.insert(name, x, Tcode::Level)?;
    }
    panel.insert("PI", shift_into_target(&signal, &noise), Tcode::Level)?;
    Ok(Simulated {
        panel,
        specs: vec![
            HemisphereSpec::trend("lr"),
            spec("g", &gn, Role::State),
            spec("e", &en, Role::State),
        ],
        target: level_target("PI"),
        truth: vec![
            ("g".into(), g),
            ("gamma".into(), gamma),
            ("g_contribution".into(), hg),
            ("e".into(), e),
            ("theta".into(), theta),
            ("e_contribution".into(), he),
            ("lr".into(), lr),
            ("signal".into(), signal),
        ],
    })
}

/// Heteroscedastic DGP: a Markov two-regime volatility (0.3 / 1.2) observed
/// through a noisy regime indicator in the volatility hemisphere, and a mean
/// with constant coefficients.
pub fn two_regime_volatility(n: usize, seed: u64) -> Result<Simulated> {
    let mut rng = seed::rng_for(seed, &[2]);
    let mut regime = false;
    let mut sigma = Vec::with_capacity(n);
    let mut indicator = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.random::<f64>() < 0.05 {
            regime = !regime;
        }
        sigma.push(if regime { 1.2 } else { 0.3 });
        indicator.push(f64::from(u8::from(regime)) + 0.1 * rng.sample::<f64, _>(StandardNormal));
    }
    let gx: Vec<Vec<f64>> = (0..5).map(|_| ar1(n, 0.6, &mut rng)).collect();
    let g: Vec<f64> = (0..n).map(|t| gx[0][t].tanh() + 0.5 * gx[1][t]).collect();
    let noise: Vec<f64> = (0..n).map(|t| sigma[t] * rng.sample::<f64, _>(StandardNormal)).collect();
    let signal: Vec<f64> = g.iter().map(|v| 1.0 + v).collect();
    let vol_noise = ar1(n, 0.6, &mut rng);

    let dates = (0..n as i64).map(|k| start_quarter().offset(k)).collect();
    let mut panel = RawPanel::new(dates)?;
    let gn = names("X", 5);
    for (name, x) in gn.iter().zip(gx) {
        panel.insert(name, x, Tcode::Level)?;
    }
    panel.insert("REGIME", indicator, Tcode::Level)?;
    panel.insert("VNOISE", vol_noise, Tcode::Level)?;
    panel.insert("PI", shift_into_target(&signal, &noise), Tcode::Level)?;
    Ok(Simulated {
        panel,
        specs: vec![
            HemisphereSpec::trend("lr"),
            spec("g", &gn, Role::State),
            spec("v", &["REGIME".to_string(), "VNOISE".to_string()], Role::Volatility),
        ],
        target: level_target("PI"),
        truth: vec![("sigma".into(), sigma), ("g".into(), g), ("signal".into(), signal)],
    })
}

/// One ten-variable hemisphere whose component depends only on `X01`.
pub fn planted_driver(n: usize, seed: u64) -> Result<Simulated> {
    let mut rng = seed::rng_for(seed, &[3]);
    let gx: Vec<Vec<f64>> = (0..10).map(|_| ar1(n, 0.5, &mut rng)).collect();
    let signal: Vec<f64> = gx[0].iter().map(|x| 2.0 * x.tanh()).collect();
    let noise: Vec<f64> = (0..n).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let dates = (0..n as i64).map(|k| start_quarter().offset(k)).collect();
    let mut panel = RawPanel::new(dates)?;
    let gn = names("X", 10);
    for (name, x) in gn.iter().zip(gx) {
        panel.insert(name, x, Tcode::Level)?;
    }
    panel.insert("PI", shift_into_target(&signal, &noise), Tcode::Level)?;
    Ok(Simulated {
        panel,
        specs: vec![spec("g", &gn, Role::State)],
        target: level_target("PI"),
        truth: vec![("signal".into(), signal)],
    })
}

/// Quarterly demo panel in FRED-QD layout: a price index `PRICE` (log
/// differences give annualised inflation divided by 400), activity series
/// `ACT01..ACT10`, expectations `EXP01..EXP04`, commodity prices `COM01..COM03`,
/// a gap measure `GAP` and an oil price `OIL`. Inflation follows the latent
/// state model of [`latent_state`] on activity and expectations.
pub fn demo_panel(n: usize, seed: u64) -> Result<RawPanel> {
    let mut rng = seed::rng_for(seed, &[4]);
    let act: Vec<Vec<f64>> = (0..10).map(|_| ar1(n, 0.8, &mut rng)).collect();
    let exp: Vec<Vec<f64>> = (0..4).map(|_| ar1(n, 0.9, &mut rng)).collect();
    let com: Vec<Vec<f64>> = (0..3).map(|_| ar1(n, 0.3, &mut rng)).collect();
    let mut g: Vec<f64> = (0..n)
        .map(|t| (act[0][t]).tanh() + 0.6 * (act[1][t] - 0.5 * act[2][t]).tanh())
        .collect();
    standardize(&mut g);
    let gamma: Vec<f64> = (0..n)
        .map(|t| 0.3 + 0.9 / (1.0 + (8.0 * (t as f64 / n as f64 - 0.4)).exp()))
        .collect();
    let mut pi = vec![2.5];
    for t in 0..n - 1 {
        let lr = 3.5 - 1.5 * t as f64 / n as f64;
        let v = lr + gamma[t] * g[t] + 0.5 * exp[0][t] + 0.4 * com[0][t]
            + 0.8 * rng.sample::<f64, _>(StandardNormal);
        pi.push(v);
    }
    let mut level = 30.0f64;
    let price: Vec<f64> = pi
        .iter()
        .map(|p| {
            level *= (p / 400.0).exp();
            level
        })
        .collect();
    let gap: Vec<f64> = g.iter().map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut oil_level = 20.0f64;
    let oil: Vec<f64> = com[0]
        .iter()
        .map(|c| {
            oil_level *= (0.05 * c).exp();
            oil_level
        })
        .collect();

    let dates = (0..n as i64).map(|k| start_quarter().offset(k)).collect();
    let mut panel = RawPanel::new(dates)?;
    panel.insert("PRICE", price, Tcode::LogDiff)?;
    for (name, x) in names("ACT", 10).iter().zip(act) {
        panel.insert(name, x, Tcode::Level)?;
    }
    for (name, x) in names("EXP", 4).iter().zip(exp) {
        panel.insert(name, x, Tcode::Level)?;
    }
    for (name, x) in names("COM", 3).iter().zip(com) {
        panel.insert(name, x, Tcode::Level)?;
    }
    panel.insert("GAP", gap, Tcode::Level)?;
    panel.insert("OIL", oil, Tcode::LogDiff)?;
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_state_has_unit_snr() {
        let s = latent_state(400, 1).unwrap();
        let n = 400;
        let hg = s.truth("g_contribution");
        let he = s.truth("e_contribution");
        let signal = s.truth("signal");
        let pi = s.panel.series("PI").unwrap();
        let noise: Vec<f64> = (0..n - 1).map(|t| pi[t + 1] - signal[t]).collect();
        let varying: Vec<f64> = (0..n - 1).map(|t| hg[t] + he[t]).collect();
        let r = std_of(&noise) / std_of(&varying);
        assert!((r - 1.0).abs() < 0.15, "{r}");
        assert!((std_of(s.truth("g")) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regimes_switch_and_persist() {
        let s = two_regime_volatility(400, 2).unwrap();
        let sigma = s.truth("sigma");
        let high = sigma.iter().filter(|v| **v > 1.0).count();
        let switches = sigma.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(high > 40 && high < 360);
        assert!(switches > 3 && switches < 60);
    }

    #[test]
    fn demo_panel_inflation_is_recoverable() {
        let p = demo_panel(120, 3).unwrap();
        let price = p.series("PRICE").unwrap();
        assert!(price.iter().all(|v| *v > 0.0));
        let pi: Vec<f64> = price.windows(2).map(|w| 400.0 * (w[1] / w[0]).ln()).collect();
        let mean = pi.iter().sum::<f64>() / pi.len() as f64;
        assert!(mean > 1.0 && mean < 5.0);
    }
}
