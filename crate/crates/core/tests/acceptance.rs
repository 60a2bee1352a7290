//! Acceptance criteria: one PASS/FAIL line per criterion, tolerances and
//! runtime limits included. Run with `--nocapture` to see the lines.

use metalidar::verify;

#[test]
fn acceptance() {
    let checks = verify::all(false);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<u8> = checks.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    println!("{}/{} criteria passed", checks.len() - failed.len(), checks.len());
    assert_eq!(checks.len(), 10);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
