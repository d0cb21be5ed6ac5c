use proptest::prelude::*;
use spectral_coupling::config::*;
use spectral_coupling::coupling::ControlForm;
use spectral_coupling::integrate::Scheme;

const MINIMAL: &str = "[model]\nvariant = \"navier-stokes\"\n";

fn err(text: &str) -> String {
    parse_config(text).unwrap_err().to_string()
}

#[test]
fn minimal_config_materializes_defaults() {
    let c = parse_config(MINIMAL).unwrap();
    assert_eq!(c.schema_version, SCHEMA_VERSION);
    assert_eq!(c.model.nu, Some(0.1));
    assert_eq!((c.grid.modes_x, c.grid.modes_y), (Some(32), Some(32)));
    assert_eq!(c.stepper.scheme, Some(Scheme::ExponentialEm));
    assert_eq!(c.control.form, Some(ControlForm::LinearProjection));
    assert!((c.control.cutoff.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert!((c.control.gain.unwrap() - 0.4).abs() < 1e-15);
    let text = c.to_toml();
    assert!(text.contains("nu = 0.1"), "{text}");
    assert!(text.contains("schema_version = 1"));
}

#[test]
fn sine_gordon_defaults_to_a_line() {
    let c = parse_config("[model]\nvariant = \"sine-gordon\"\n").unwrap();
    assert_eq!((c.grid.modes_x, c.grid.modes_y), (Some(128), Some(1)));
    assert_eq!(c.control.form, Some(ControlForm::SineDifference));
    assert_eq!(c.stepper.scheme, Some(Scheme::WaveBlock));
    assert_eq!((c.model.damping, c.model.beta), (Some(0.5), Some(1.0)));
}

#[test]
fn resolved_config_round_trips() {
    let c = parse_config(MINIMAL).unwrap();
    let again = parse_config(&c.to_toml()).unwrap();
    assert_eq!(c, again);
    assert_eq!(c.to_toml(), again.to_toml());
}

#[test]
fn unknown_keys_are_errors() {
    assert!(err("[model]\nvariant = \"navier-stokes\"\nviscosity = 0.1\n").contains("viscosity"));
    assert!(err("bogus = 1\n[model]\nvariant = \"navier-stokes\"\n").contains("bogus"));
    assert!(err(&format!("{MINIMAL}[stepper]\nstep = 0.1\n")).contains("step"));
}

#[test]
fn foreign_parameters_are_rejected_with_their_path() {
    let e = err("[model]\nvariant = \"navier-stokes\"\ngamma = 1.0\n");
    assert!(e.starts_with("model.gamma"), "{e}");
}

#[test]
fn sine_difference_with_fractional_euler_is_incompatible() {
    let e = err("[model]\nvariant = \"fractional-euler\"\n[control]\nform = \"sine-difference\"\n");
    assert!(e.starts_with("control.form") && e.contains("incompatible"), "{e}");
}

#[test]
fn cutoff_beyond_forced_shells_is_rejected() {
    let e = err(&format!("{MINIMAL}[forcing]\nshell_amplitudes = [0.3]\n[control]\ncutoff = 2.0\n"));
    assert!(e.starts_with("control.cutoff") && e.contains("Range(σ) ⊃ H_N"), "{e}");
}

#[test]
fn constraint_violations_carry_key_paths() {
    assert!(err("[model]\nvariant = \"navier-stokes\"\nnu = -1.0\n").starts_with("model"));
    assert!(err(&format!("{MINIMAL}[grid]\nmodes_x = 24\n")).starts_with("grid"));
    assert!(err(&format!("{MINIMAL}[stepper]\ndt = 0.03\nt_end = 1.0\n")).starts_with("stepper"));
    assert!(err(&format!("{MINIMAL}[ensemble]\nreplicas = 0\n")).starts_with("ensemble.replicas"));
    assert!(err(&format!("{MINIMAL}[ensemble]\ndiverged_tolerance = 2.0\n")).starts_with("ensemble.diverged_tolerance"));
    assert!(err("[model]\nvariant = \"sine-gordon\"\n[grid]\nmodes_y = 8\n").starts_with("grid.modes_y"));
    assert!(err("schema_version = 2\n[model]\nvariant = \"navier-stokes\"\n").starts_with("schema_version"));
}

#[test]
fn dotted_overrides_apply_before_validation() {
    let c = parse_with_overrides(MINIMAL, &["model.nu=0.05".into(), "ensemble.seed = 9".into()]).unwrap();
    assert_eq!(c.model.nu, Some(0.05));
    assert_eq!(c.ensemble.seed, 9);
    let c = parse_with_overrides(MINIMAL, &["forcing.shell_amplitudes=[0.1, 0.2, 0.3]".into()]).unwrap();
    assert_eq!(c.forcing.shell_amplitudes, vec![0.1, 0.2, 0.3]);
    let c = parse_with_overrides(MINIMAL, &["output.directory=runs/a".into()]).unwrap();
    assert_eq!(c.output.directory.unwrap().to_str(), Some("runs/a"));
    assert!(matches!(parse_with_overrides(MINIMAL, &["model.nu".into()]), Err(ConfigError::Override(_))));
    assert!(parse_with_overrides(MINIMAL, &["model.variant.x=1".into()]).is_err());
    assert!(parse_with_overrides(MINIMAL, &["model.nu=-1".into()]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_serialize_parse_is_identity(
        nu in 0.01f64..1.0,
        amps in prop::collection::vec(0.01f64..1.0, 1..4),
        seed in 0u64..i64::MAX as u64,
        replicas in 1u64..100,
        steps in 1u64..1000,
    ) {
        let text = format!(
            "[model]\nvariant = \"navier-stokes\"\nnu = {nu:?}\n[forcing]\nshell_amplitudes = {amps:?}\n\
             [stepper]\ndt = 0.01\nt_end = {}\n[ensemble]\nseed = {}\nreplicas = {replicas}\n",
            steps as f64 * 0.01,
            seed,
        );
        let parsed = parse_config(&text);
        prop_assume!(parsed.is_ok());
        let c = parsed.unwrap();
        prop_assert_eq!(&parse_config(&c.to_toml()).unwrap(), &c);
    }
}
