use pyo3::ffi::c_str;
use pyo3::prelude::*;

use paintscore_py::paintscore_py;

fn run(code: &std::ffi::CStr) {
    Python::attach(|py| {
        if let Err(e) = py.run(code, None, None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn module_exposes_metrics_and_scoring() {
    pyo3::append_to_inittab!(paintscore_py);
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path().to_str().unwrap().replace('\\', "/");
    run(c_str!(
        r#"
import paintscore_py as ps

r = ps.Rubric(4, 5, 6, 7, 8)
assert r.total() == 30
assert r.classify("M1") == "Low"
assert dict(r.bands())["content"] == "Fair", r.bands()
assert ps.total([20, 20, 20, 20, 20]) == 100
try:
    ps.Rubric(21, 0, 0, 0, 0)
    raise AssertionError("out of range accepted")
except ValueError:
    pass

r, lo, hi = ps.pearson([1, 2, 3, 4, 6], [1.1, 2.1, 2.9, 4.2, 5.8])
assert lo < r < hi
assert abs(ps.r_squared([1, 2, 3], [1, 2, 3]) - 1) < 1e-12
try:
    ps.mape([1, 2], [1, 0])
    raise AssertionError("zero actual accepted")
except ValueError as e:
    assert "1" in str(e)
counts, acc = ps.confusion([10, 80], [20, 90], "M1")
assert counts == [[1, 0], [0, 1]] and acc == 100.0, (counts, acc)
assert abs(ps.icc([[1, 1], [2, 2], [3, 3]]) - 1) < 1e-12

replay = ps.replay_tables()
assert abs(replay["mean_stated_accuracy_percent"] - 90.17) < 0.005
assert len(replay["tables"]) == 5
"#
    ));
    let snippet = format!(
        r#"
import paintscore_py as ps
m = ps.generate_synthetic("{dir}", count=6, side=32, seed=2)
assert len(m["records"]) == 6
first = m["records"][0]
measured = ps.measure("{dir}/" + first["image_path"])
assert abs(measured.total() - first["consensus_total"]) < 1e-9
loaded, warnings = ps.load_manifest("{dir}/manifest.json", min_artist_side=32)
assert loaded == m, "manifest round-trips"
"#
    );
    let snippet = std::ffi::CString::new(snippet).unwrap();
    run(&snippet);
}
