use std::path::Path;

use cemfield::fem::Coupling;
use cemfield::harness::config::{ElectrodeLayout, GeometrySpec, InversionMode};
use cemfield::harness::ProjectConfig;
use cemfield::inverse::{HyperFamily, NuRule, WarmStart};
use cemfield::simulate::NoiseLevel;
use cemfield::Error;

const BASE: &str = "\
[project]
modality = eit
seed = 5

[phantom]
radii = 0.08 0.09
conductivities = 0.33 0.43
names = brain scalp

[mesh]
resolution = 0.01

[electrodes]
layout = ring
count = 16
elevation = 10
radius = 0.01
";

fn parse(text: &str) -> cemfield::Result<ProjectConfig> {
    ProjectConfig::parse(text, "test.ini", Path::new("."))
}

fn line_of(err: &Error) -> usize {
    match err {
        Error::Format { line, .. } => *line,
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn defaults_are_filled_in() {
    let cfg = parse(BASE).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.sources.seed, 5);
    assert_eq!(cfg.simulate.seed, 5);
    assert_eq!(cfg.electrodes.impedance, 1000.0);
    assert_eq!(cfg.electrodes.coupling, Coupling::Consistent);
    assert!(
        matches!(cfg.electrodes.layout, ElectrodeLayout::Ring { count: 16, elevation } if (elevation - 10f64.to_radians()).abs() < 1e-15)
    );
    assert_eq!(cfg.eit.compartments, vec!["brain".to_string()]);
    assert_eq!(cfg.inversion.mode, InversionMode::Map);
    assert_eq!(cfg.inversion.hyper.family, HyperFamily::InverseGamma);
    assert_eq!(cfg.inversion.nu, NuRule::MaxFraction(0.05));
    assert_eq!(cfg.inversion.warm_start, WarmStart::Reset);
    assert_eq!(cfg.simulate.noise, NoiseLevel::RelativeToMax(2.0));
    assert_eq!(cfg.hash.len(), 64);
    assert!(matches!(cfg.geometry, GeometrySpec::Phantom(_)));
}

#[test]
fn seed_override_follows_derived_seeds() {
    let cfg = ProjectConfig::parse_with_seed(BASE, "t.ini", Path::new("."), Some(9)).unwrap();
    assert_eq!((cfg.seed, cfg.sources.seed, cfg.simulate.seed), (9, 9, 9));
    assert_ne!(cfg.hash, parse(BASE).unwrap().hash);
}

#[test]
fn unknown_key_and_section_carry_line_numbers() {
    let err = parse(&format!("{BASE}typo = 1\n")).unwrap_err();
    assert_eq!(line_of(&err), BASE.lines().count() + 1);
    let err = parse(&format!("{BASE}\n[solvr]\ntolerance = 1e-6\n")).unwrap_err();
    assert_eq!(line_of(&err), BASE.lines().count() + 2);
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn out_of_range_values_are_rejected() {
    let err = parse(&BASE.replace("resolution = 0.01", "resolution = -1")).unwrap_err();
    assert_eq!(line_of(&err), 11);
    let err = parse(&format!("{BASE}[inversion]\nhypermodel = g\nbeta = 1.2\n")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = parse(&format!("{BASE}[inversion]\nmode = roi\n")).unwrap_err();
    assert_eq!(line_of(&err), BASE.lines().count() + 2);
    let err = parse(&format!("{BASE}[eit]\ncompartments = brain skull\n")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn repeated_sections_and_keys_are_rejected() {
    let err = parse(&format!("{BASE}[electrodes]\nimpedance = 5\n")).unwrap_err();
    assert_eq!(line_of(&err), BASE.lines().count() + 1);
    let err = parse(&format!("{BASE}radius = 0.02\n")).unwrap_err();
    assert_eq!(line_of(&err), BASE.lines().count() + 1);
}

#[test]
fn zero_electrodes_is_a_config_error() {
    let err = parse(&BASE.replace("count = 16", "count = 0")).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn sections_are_tracked_for_modality_checks() {
    let cfg = parse(&format!("{BASE}[sources]\ncount = 10\n")).unwrap();
    assert!(cfg.has_section("sources"));
    assert!(!cfg.has_section("eit"));
}

#[test]
fn dipoles_and_overrides_parse() {
    let text = format!(
        "{BASE}[simulate]\nnoise = snr\nlevel = 60\ndipoles = 0 0 0.05 0 0 2 1e-8; 0.01 0 0 1 0 0 2e-8\n\n[inversion]\nmode = multires\nhypermodel = g\ntheta0 = 1e-5\nnu_rule = rms\nnu = 0.1\nwarm_start = hyper\n"
    );
    let cfg = parse(&text).unwrap();
    assert_eq!(cfg.simulate.noise, NoiseLevel::SnrDb(60.0));
    assert_eq!(cfg.simulate.dipoles.len(), 2);
    assert_eq!(cfg.simulate.dipoles[0].orientation.z, 1.0);
    assert_eq!(cfg.inversion.mode, InversionMode::Multires);
    assert_eq!(cfg.inversion.nu, NuRule::RmsFraction(0.1));
    assert_eq!(cfg.inversion.warm_start, WarmStart::Hyper);
    let bad = parse(&format!("{BASE}[simulate]\ndipoles = 0 0 0 0 0 0 1\n")).unwrap_err();
    assert_eq!(line_of(&bad), BASE.lines().count() + 2);
}

#[test]
fn coupling_can_be_selected() {
    let cfg = parse(&BASE.replace("radius = 0.01", "radius = 0.01\ncoupling = literal")).unwrap();
    assert_eq!(cfg.electrodes.coupling, Coupling::Literal);
}
