use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "codesign").unwrap();
        codesign_py::codesign_py(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("codesign", m).unwrap();
        f(py, &globals)
    })
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) -> PyResult<()> {
    let code = std::ffi::CString::new(code).unwrap();
    py.run(&code, Some(globals), None)
}

#[test]
fn helpers_round_trip_through_python() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
m = codesign.base_finger()
assert codesign.Mesh.from_obj(m.to_obj()).faces == m.faces
assert codesign.percentile_top([3.0, 1.0, 2.0], 0.0) == 3.0
assert abs(codesign.env_score("push", 0.08, 1, 0, 0, 0) - 524.0) < 1e-9
s = codesign.DeformationSpace(steps=4)
assert s.deform_mesh(s.zero_params()).vertices == m.vertices
cfg = codesign.default_config()
assert cfg["task"] == "grasp" and cfg["envs"] == 4
"#,
        )
        .unwrap();
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, g| {
        let err = run(py, g, "codesign.primitive_design('cubic', 5.0)").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let err = run(py, g, "codesign.rollout(codesign.base_finger(), {'envs': 1, 'bogus': 2})").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = run(py, g, "codesign.DesignModel.build(codesign.DeformationSpace(steps=4), [[0.0] * 72] * 3, 2)").unwrap_err();
        assert!(err.get_type(py).name().unwrap().to_string().contains("NumericalError"), "{err}");
        let err = run(py, g, "codesign.Mesh.load('/nonexistent/finger.obj')").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyOSError>(py), "{err}");
    });
}
