use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::schema::Category;
use crate::{Date, Error, Result};

/// Per-category probability that a true fact is missing from the coded
/// tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryRates {
    pub demographic: f64,
    pub history: f64,
    pub lab: f64,
    pub procedure: f64,
    pub treatment: f64,
}

impl CategoryRates {
    pub const fn uniform(p: f64) -> Self {
        CategoryRates {
            demographic: p,
            history: p,
            lab: p,
            procedure: p,
            treatment: p,
        }
    }

    /// AF-related facts (the onset code) are never dropped.
    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Demographic => self.demographic,
            Category::History => self.history,
            Category::Lab => self.lab,
            Category::Procedure => self.procedure,
            Category::Treatment => self.treatment,
            Category::AfRelated => 0.0,
        }
    }

    fn set(&mut self, c: Category, p: f64) -> Result<(), String> {
        match c {
            Category::Demographic => self.demographic = p,
            Category::History => self.history = p,
            Category::Lab => self.lab = p,
            Category::Procedure => self.procedure = p,
            Category::Treatment => self.treatment = p,
            Category::AfRelated => return Err("AF-related facts cannot be dropped".into()),
        }
        Ok(())
    }

    fn all(&self) -> [f64; 5] {
        [self.demographic, self.history, self.lab, self.procedure, self.treatment]
    }
}

impl Default for CategoryRates {
    fn default() -> Self {
        CategoryRates {
            demographic: 0.1,
            history: 0.3,
            lab: 0.5,
            procedure: 0.5,
            treatment: 0.5,
        }
    }
}

/// Either one probability for every category (`0.5`) or a list such as
/// `lab=0.5,history=0.3` applied over the defaults.
impl FromStr for CategoryRates {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Ok(p) = s.trim().parse::<f64>() {
            return Ok(CategoryRates::uniform(p));
        }
        let mut rates = CategoryRates::default();
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected category=value, found `{part}`"))?;
            let cat = Category::ALL
                .into_iter()
                .find(|c| c.as_str().eq_ignore_ascii_case(k.trim()))
                .ok_or_else(|| format!("unknown category `{}`", k.trim()))?;
            let p: f64 = v.trim().parse().map_err(|_| format!("bad probability `{}`", v.trim()))?;
            rates.set(cat, p)?;
        }
        Ok(rates)
    }
}

impl fmt::Display for CategoryRates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "demographic={},history={},lab={},procedure={},treatment={}",
            self.demographic, self.history, self.lab, self.procedure, self.treatment
        )
    }
}

/// Dataset shapes of the three published splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    TrainSilver,
    TrainGold,
    Test,
}

impl Preset {
    pub fn shape(self) -> (usize, f64) {
        match self {
            Preset::TrainSilver => (1023, 0.654),
            Preset::TrainGold => (541, 0.6617),
            Preset::Test => (278, 0.6403),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train-silver" => Ok(Preset::TrainSilver),
            "train-gold" => Ok(Preset::TrainGold),
            "test" => Ok(Preset::Test),
            other => Err(format!("unknown preset `{other}` (train-silver, train-gold, test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Cohort patients with a 1 or 0 label.
    pub n_patients: usize,
    /// Share of labeled patients planted with label 1.
    pub positive_rate: f64,
    /// Extra cohort patients without enough follow-up (label -1), as a
    /// fraction of `n_patients`.
    pub excluded_rate: f64,
    /// Extra non-cohort patients (prior AF history, no textual evidence,
    /// onset before the study window, no AF), as a fraction of `n_patients`.
    pub decoy_rate: f64,
    pub structured_missingness: CategoryRates,
    /// Probability that a fact is written into the onset report.
    pub report_coverage: f64,
    /// Probability that a covered absent fact is written as a negated
    /// sentence rather than left out.
    pub negation_rate: f64,
    /// Probability that a follow-up report is lost.
    pub report_dropout_rate: f64,
    pub signal_strength: f64,
    pub seed: u64,
    pub study_start: Date,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_patients: 1023,
            positive_rate: 0.654,
            excluded_rate: 0.05,
            decoy_rate: 0.1,
            structured_missingness: CategoryRates::default(),
            report_coverage: 0.8,
            negation_rate: 0.5,
            report_dropout_rate: 0.0,
            signal_strength: 0.0,
            seed: 42,
            study_start: Date::from_ymd_opt(2015, 1, 1).expect("valid date"),
        }
    }
}

impl GenConfig {
    pub fn preset(p: Preset) -> Self {
        let (n_patients, positive_rate) = p.shape();
        GenConfig {
            n_patients,
            positive_rate,
            ..GenConfig::default()
        }
    }

    /// No structured missingness, full report coverage, every absent fact
    /// negated and no lost follow-up reports.
    pub fn zero_noise(self) -> Self {
        GenConfig {
            structured_missingness: CategoryRates::uniform(0.0),
            report_coverage: 1.0,
            negation_rate: 1.0,
            report_dropout_rate: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::InvalidConfig("n_patients must be positive".into()));
        }
        let probs = [
            ("positive_rate", self.positive_rate),
            ("report_coverage", self.report_coverage),
            ("negation_rate", self.negation_rate),
            ("report_dropout_rate", self.report_dropout_rate),
            ("signal_strength", self.signal_strength),
        ];
        for (name, p) in probs
            .into_iter()
            .chain(self.structured_missingness.all().map(|p| ("structured_missingness", p)))
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        for (name, r) in [("excluded_rate", self.excluded_rate), ("decoy_rate", self.decoy_rate)] {
            if !(0.0..=10.0).contains(&r) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 10], got {r}")));
            }
        }
        Ok(())
    }

    pub fn n_positive(&self) -> usize {
        (self.n_patients as f64 * self.positive_rate).round() as usize
    }
}

/// Returns `config` with a label-feature association of the given strength:
/// that share of labeled patients get NT-proBNP and sleep apnea determined
/// by their label.
pub fn plant_signal(config: GenConfig, strength: f64) -> GenConfig {
    GenConfig {
        signal_strength: strength,
        ..config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_shapes() {
        let silver = GenConfig::default();
        assert_eq!((silver.n_patients, silver.n_positive()), (1023, 669));
        let gold = GenConfig::preset(Preset::TrainGold);
        assert_eq!((gold.n_patients, gold.n_positive()), (541, 358));
        let test = GenConfig::preset(Preset::Test);
        assert_eq!((test.n_patients, test.n_positive()), (278, 178));
    }

    #[test]
    fn rates_parse() {
        assert_eq!("0.25".parse::<CategoryRates>().unwrap(), CategoryRates::uniform(0.25));
        let r: CategoryRates = "lab=0.9, History=0".parse().unwrap();
        assert_eq!((r.lab, r.history, r.treatment), (0.9, 0.0, 0.5));
        assert!("lab".parse::<CategoryRates>().is_err());
        assert!("afrelated=0.1".parse::<CategoryRates>().is_err());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            GenConfig { n_patients: 0, ..GenConfig::default() },
            GenConfig { positive_rate: 1.5, ..GenConfig::default() },
            GenConfig { structured_missingness: CategoryRates::uniform(-0.1), ..GenConfig::default() },
            plant_signal(GenConfig::default(), 2.0),
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))), "{c:?}");
        }
        GenConfig::default().zero_noise().validate().unwrap();
    }
}
