use pyo3::prelude::*;

#[pymodule]
fn xcsp3py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
