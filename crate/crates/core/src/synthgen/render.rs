//! Report text built from the shipped header, lexicon and pattern
//! vocabulary, so everything written can be read back by the extractors.

use crate::report2vector::{Lexicon, PatternSet, Scale};

/// `units / 10^decimals` written with the given decimal separator.
pub fn format_units(units: i64, decimals: u32, sep: char) -> String {
    if decimals == 0 {
        return units.to_string();
    }
    let p = 10i64.pow(decimals);
    format!("{}{sep}{:0width$}", units / p, units % p, width = decimals as usize)
}

/// The pattern example for `feature_id` with its number replaced by `number`.
pub fn numeric_phrase(patterns: &PatternSet, feature_id: &str, number: &str) -> Option<String> {
    patterns
        .specs
        .iter()
        .filter(|s| s.feature_id == feature_id && s.scale == Scale::ONE)
        .find_map(|s| {
            let ex = s.example.as_deref()?;
            let m = s.regex.captures(ex)?.get(1)?;
            Some(format!("{}{number}{}", &ex[..m.start()], &ex[m.end()..]))
        })
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn affirmed(lexicon: &Lexicon, feature_id: &str, value: Option<&str>) -> Option<String> {
    lexicon
        .preferred_surface(feature_id, value)
        .map(|s| format!("{}.", capitalize(s)))
}

const NEGATIONS: [&str; 3] = ["No", "Niega", "Sin"];

/// `choice` in [0, 1) picks the negation cue.
pub fn negated(lexicon: &Lexicon, feature_id: &str, treatment: bool, choice: f64) -> Option<String> {
    let s = lexicon.preferred_surface(feature_id, None)?;
    Some(if treatment {
        format!("Sin tratamiento con {s}.")
    } else {
        let cue = NEGATIONS[((choice * 3.0) as usize).min(2)];
        format!("{cue} {s}.")
    })
}

#[derive(Debug, Default)]
pub struct OnsetReport {
    pub history: Vec<String>,
    pub current: Vec<String>,
    pub exam: Vec<String>,
    pub treatment: Vec<String>,
}

impl OnsetReport {
    pub fn render(&self) -> String {
        let mut out = String::from("MOTIVO DE INGRESO:\nPalpitaciones y disnea.\n");
        let mut section = |header: &str, lines: &[String]| {
            if !lines.is_empty() {
                out.push_str(header);
                out.push('\n');
                for l in lines {
                    out.push_str(l);
                    out.push('\n');
                }
            }
        };
        section("ANTECEDENTES PERSONALES:", &self.history);
        section("ENFERMEDAD ACTUAL:", &self.current);
        section("EXPLORACIONES COMPLEMENTARIAS:", &self.exam);
        section("TRATAMIENTO AL ALTA:", &self.treatment);
        out
    }
}

pub fn af_episode_report(onset_year: i32) -> String {
    format!(
        "MOTIVO DE CONSULTA:\nPalpitaciones.\nANTECEDENTES PERSONALES:\nFibrilación auricular diagnosticada en {onset_year}.\n\
         EXPLORACIONES COMPLEMENTARIAS:\nECG: fibrilación auricular con respuesta ventricular rápida.\n"
    )
}

pub fn sinus_report(onset_year: i32) -> String {
    format!(
        "MOTIVO DE CONSULTA:\nRevisión.\nANTECEDENTES PERSONALES:\nFibrilación auricular diagnosticada en {onset_year}.\n\
         EVOLUCIÓN:\nSin recurrencia de fibrilación auricular. ECG: ritmo sinusal a 70 lpm.\n"
    )
}

pub fn no_info_report() -> String {
    "MOTIVO DE CONSULTA:\nCaída casual.\nEXPLORACIONES COMPLEMENTARIAS:\nRadiografía: fractura de maléolo peroneo derecho.\n\
     TRATAMIENTO:\nInmovilización con férula.\n"
        .to_string()
}

/// Earlier report listing AF as a chronic condition.
pub fn prior_history_report() -> String {
    "MOTIVO DE CONSULTA:\nRevisión.\nANTECEDENTES PERSONALES:\nFA crónica.\nEVOLUCIÓN:\nEstable.\n".to_string()
}
