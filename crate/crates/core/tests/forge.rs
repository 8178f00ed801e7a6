use hypolearn::data::Feature;
use hypolearn::expr::{canonical_form, parse};
use hypolearn::forge::{forge, ForgeError, ForgeSettings};
use hypolearn::synth::{synth_records, PlantedLaw, SynthConfig};

fn model1_canonical() -> String {
    canonical_form(&parse("IE*(1+(TPSA/SP)^2)", |_| false).unwrap())
}

fn planted(rows: usize, seed: u64, law: PlantedLaw) -> SynthConfig {
    SynthConfig {
        rows,
        seed,
        law,
        noise_fraction: 0.01,
        tpsa_max: 120.0,
    }
}

#[test]
fn planted_model1_form_is_recovered() {
    let rows = synth_records(&planted(1000, 11, PlantedLaw::Model1Features));
    let out = forge(&rows, &ForgeSettings::default()).unwrap();
    let canon: Vec<String> = out.hypotheses.iter().map(|h| h.canonical()).collect();
    assert!(canon.contains(&model1_canonical()), "{canon:?}");
}

#[test]
fn forged_hypotheses_carry_the_target_unit() {
    let rows = synth_records(&planted(400, 3, PlantedLaw::Model1Features));
    let settings = ForgeSettings::default();
    let out = forge(&rows, &settings).unwrap();
    assert!(!out.hypotheses.is_empty());
    assert!(out.hypotheses.len() <= settings.n_hypotheses);
    for h in &out.hypotheses {
        assert_eq!(h.output_unit(), Feature::Fe.default_unit(), "{}", h.canonical());
        for name in h.inputs() {
            assert!(!["IE", "SP"].contains(&name.as_str()), "promoted feature used as input: {name}");
        }
        let values = h.eval_batch(&rows, &h.prior_midpoint()).unwrap();
        assert!(values.iter().all(|v| v.is_finite()));
    }
    assert!(out.n_screened <= settings.sis_cap);
    assert!(out.n_screened <= out.n_candidates);
}

#[test]
fn empty_operator_set_yields_carriers_only() {
    let rows = synth_records(&planted(300, 5, PlantedLaw::Model1Features));
    let settings = ForgeSettings {
        ops: vec![],
        ..Default::default()
    };
    let out = forge(&rows, &settings).unwrap();
    for h in &out.hypotheses {
        assert!(!h.canonical().contains('+'), "{}", h.canonical());
    }
}

#[test]
fn forge_is_deterministic() {
    let rows = synth_records(&planted(300, 8, PlantedLaw::Model1Features));
    let a = forge(&rows, &ForgeSettings::default()).unwrap();
    let b = forge(&rows, &ForgeSettings::default()).unwrap();
    let canon = |o: &hypolearn::forge::ForgeOutcome| o.hypotheses.iter().map(|h| h.canonical()).collect::<Vec<_>>();
    assert_eq!(canon(&a), canon(&b));
    assert_eq!(a.lambda, b.lambda);
}

#[test]
fn invalid_settings_are_rejected() {
    let rows = synth_records(&planted(50, 1, PlantedLaw::Model1Features));
    let bad = ForgeSettings {
        base_features: vec![],
        ..Default::default()
    };
    assert!(matches!(forge(&rows, &bad), Err(ForgeError::Config(_))));
}
