use fpt_moments::models::{FellerParams, Model, OuParams, WienerParams};
use fpt_moments::moments::{fet_moment, fpt_moment, summary};
use fpt_moments::report::{format_sig7, relative_error};
use fpt_moments::tables::{embedded_csv, expected_checksum, load_reference, parse_reference, sha256_hex};
use fpt_moments::{ElasticThreshold, Error};

#[test]
fn embedded_tables_match_their_checksums() {
    for id in 1..=6 {
        assert_eq!(sha256_hex(embedded_csv(id).unwrap().as_bytes()), expected_checksum(id).unwrap());
        assert_eq!(load_reference(id).unwrap().rows.len(), 10);
    }
    assert!(embedded_csv(7).is_err());
}

#[test]
fn table5_corrected_cell() {
    let t = load_reference(5).unwrap();
    let row = t.rows.iter().find(|r| r.param == 1.5).unwrap();
    assert_eq!(row.by_reflecting_probability[2], 3.256645e6);
}

#[test]
fn malformed_reference_reports_line() {
    let text = embedded_csv(1).unwrap().replacen("3.073451E+2", "oops", 1);
    let e = parse_reference(&text).unwrap_err().to_string();
    assert!(e.contains("line"), "{e}");
}

#[test]
fn sig7_formatting() {
    assert_eq!(format_sig7(307.3451), "3.073451E+2");
    assert_eq!(format_sig7(0.1281821), "1.281821E-1");
    assert_eq!(format_sig7(3.256645e6), "3.256645E+6");
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(WienerParams::new(0.0, -1.0, -80.0).is_err());
    assert!(FellerParams::new(5.0, -70.0, 0.0, -80.0).is_err());
    assert!(ElasticThreshold::from_reflecting_probability(-50.0, 1.0).is_err());
    let spec = WienerParams::new(-0.5, 10.0, -80.0).unwrap().spec();
    // start above the threshold or below the boundary; order 0 is trivially 1
    assert!(fpt_moment(&spec, -50.0, -40.0, 1, 1e-9).is_err());
    assert!(matches!(fpt_moment(&spec, -50.0, -90.0, 1, 1e-9), Err(Error::Domain { .. })));
    assert_eq!(fpt_moment(&spec, -50.0, -70.0, 0, 1e-9).unwrap(), 1.0);
}

#[test]
fn reflecting_threshold_reduces_to_passage() {
    let models = [
        Model::Wiener(WienerParams::new(-0.5, 20.0, -80.0).unwrap()),
        Model::Ou(OuParams::new(5.0, -70.0, 100.0, -80.0).unwrap()),
        Model::Feller(FellerParams::new(5.0, -70.0, 2.0, -80.0).unwrap()),
    ];
    let absorbing = ElasticThreshold::from_reflecting_probability(-50.0, 0.0).unwrap();
    for m in models {
        let spec = m.spec();
        let t1 = fpt_moment(&spec, -50.0, -70.0, 1, 1e-10).unwrap();
        let fet = fet_moment(&spec, &absorbing, -70.0, 1, 1e-10).unwrap();
        assert!(relative_error(fet, t1) < 1e-12, "{}: {fet} vs {t1}", m.name());
        let s = summary(&spec, &absorbing, -70.0, 1e-10).unwrap();
        assert_eq!(s.refractory_mean, 0.0);
        assert!(relative_error(m.fpt_mean(-50.0, -70.0).unwrap(), t1) < 1e-7);
    }
}
