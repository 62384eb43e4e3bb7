use spinbus::io::*;
use spinbus::localization::ipr_one_excitation;
use spinbus::robustness::state_scan::{state_slice, theta_grid};
use spinbus::*;

fn lines(buf: Vec<u8>) -> Vec<String> {
    String::from_utf8(buf).unwrap().lines().map(str::to_string).collect()
}

fn spec() -> SystemSpec {
    SystemSpec::with_params(4, 0.3, 0.0, &[0.2, -0.3]).unwrap()
}

#[test]
fn provenance_lines_lead_every_file() {
    let prov = Provenance::new(serde_json::json!({"n": 4}), true);
    let mut out = Vec::new();
    let series = TransferModel::new(&spec()).unwrap().series(&[0.0, 1.0]).unwrap();
    write_series_csv(&mut out, &series, Some(&prov)).unwrap();
    let l = lines(out);
    assert_eq!(l[0], format!("# spinbus {VERSION}"));
    assert_eq!(l[1], "# config: {\"n\":4}");
    assert!(l[2].starts_with("# generated: "));
    assert_eq!(l[3], series_columns(2));
    assert_eq!(l.len(), 6);
}

#[test]
fn single_user_series_leaves_f_c_empty() {
    let s = SystemSpec::with_params(3, 0.5, 0.0, &[0.1]).unwrap();
    let series = TransferModel::new(&s).unwrap().series(&[2.0]).unwrap();
    let mut out = Vec::new();
    write_series_csv(&mut out, &series, None).unwrap();
    let l = lines(out);
    assert_eq!(l[0], "t,fbar_11,f_t,f_c");
    assert!(l[1].ends_with(','));
}

#[test]
fn sweep_and_state_scan_columns() {
    let scan = ScanSettings {
        window: TimeWindow::new(1.0, 30.0).unwrap(),
        ..ScanSettings::default()
    };
    let d = DisorderSpec::clean(3, 5);
    let sweep = disorder_ensemble(&spec(), &scan, &d, DisorderAxis::Eta, &[0.0, 0.2]).unwrap();
    let mut out = Vec::new();
    write_sweep_csv(&mut out, &sweep, None).unwrap();
    let l = lines(out);
    assert_eq!(l[0], "axis_value,mean_f_t_max,std_f_t_max,n_realizations,seed");
    assert!(l[1].starts_with("0,") && l[1].ends_with(",3,5"));

    let mut out = Vec::new();
    write_state_scan_csv(&mut out, &state_scan(&spec(), 9.0, &theta_grid(3), 1).unwrap(), None).unwrap();
    let l = lines(out);
    assert_eq!(l[0], "theta1,theta2,f_t");
    assert_eq!(l.len(), 10);
    assert!(l[1].starts_with("0,0,1"));

    let mut out = Vec::new();
    write_state_scan_csv(
        &mut out,
        &state_slice(&spec(), 9.0, 1, &theta_grid(3), 1).unwrap(),
        None,
    )
    .unwrap();
    let l = lines(out);
    assert_eq!(l.len(), 4);
    assert!(l[2].contains(",,"));
}

#[test]
fn ipr_rows_use_site_labels() {
    let mut out = Vec::new();
    let r = ipr_one_excitation(&spec()).unwrap();
    write_ipr_csv(&mut out, std::slice::from_ref(&r), None).unwrap();
    let l = lines(out);
    assert_eq!(l[0], "sector,k_index,eigenvalue,ipr,top_positions,top_weights");
    assert_eq!(l.len(), r.dim + 1);
    for row in &l[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert_eq!(cols[0], "1");
        assert_eq!(cols[4].split(';').count(), cols[5].split(';').count());
        assert!(cols[4]
            .split(';')
            .all(|p| p.starts_with('S') || p.starts_with('R') || p.parse::<usize>().is_ok()));
    }
}
