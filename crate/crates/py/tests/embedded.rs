use pyo3::prelude::*;
use qfj::qfj as module;

#[test]
fn module_runs_inside_an_embedded_interpreter() {
    pyo3::append_to_inittab!(module);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            cr#"
import math
import qfj

assert abs(qfj.free_energy_barrier(0.3, 0.05) - (0.5 * math.log(1.3 / 0.7) + 0.06)) < 1e-12
assert abs(qfj.harmonic_flux_correction(0.3) + 2.0456552102) < 1e-9

ch = qfj.Channel.for_ratio(16.0, 0.3, 0.05)
assert abs(ch.lam - 0.05) < 1e-12
assert abs(ch.geometry_ratio() - 16.0) < 1e-9

try:
    qfj.free_energy_barrier(1.5, 0.0)
except ValueError:
    pass
else:
    raise AssertionError("k1 >= 1 must raise ValueError")

t = qfj.transport_current(qfj.Channel.for_ratio(4.0, 0.3, 0.05), mx=6, my=3)
assert t.current < 0.0 and t.method == "direct"
"#,
            None,
            None,
        )
        .unwrap();
    });
}
