"""Smoke test for the `qfj` extension module.

Build and install first, e.g. `maturin build --release -m crates/py/Cargo.toml`
followed by `pip install target/wheels/qfj-*.whl`.
"""

import math

import qfj


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    # Closed-form barrier and flux correction.
    for k1 in (0.1, 0.3, 0.5):
        for lam in (0.0, 0.05, 0.1):
            expected = 0.5 * math.log((1 + k1) / (1 - k1)) + 4 * lam * k1
            assert close(qfj.free_energy_barrier(k1, lam), expected, 1e-12)
    assert close(qfj.harmonic_flux_correction(0.0), -2.0, 1e-10)
    assert close(qfj.harmonic_flux_correction(0.3), -2.0456552102, 1e-9)

    ch = qfj.Channel.for_ratio(8.0, 0.3, 0.05)
    assert close(ch.geometry_ratio(), 8.0, 1e-12)
    assert close(ch.lam, 0.05, 1e-12)
    assert close(qfj.classical_free_energy(ch, 0.0), 0.5 * math.log(1.3), 1e-14)
    assert close(qfj.quantum_free_energy_correction(ch, 0.5), 1.4, 1e-14)

    # Thermal route: the barrier grows with Lambda on the rising branch.
    marginals = qfj.thermal_marginals(ch, [0.02, 0.05, 0.1], mx=20, my=15)
    barriers = [m.barrier for m in marginals]
    assert barriers[0] < barriers[1] < barriers[2], barriers
    dx = marginals[0].x[1] - marginals[0].x[0]
    assert close(sum(marginals[0].rho) * dx, 1.0, 1e-12)

    # Transport: current flows from the denser lead; sign convention is J < 0.
    t = qfj.transport_current(ch, mx=8, my=5)
    assert t.current < 0 and t.residual < 1e-10, (t.current, t.residual)
    eq = qfj.transport_current(ch, mx=8, my=5, z_left=1e-3, z_right=1e-3)
    assert abs(eq.current) < 1e-8

    # PDE route conserves mass.
    pde = qfj.pde_steady(ch, 0.05, mx=16, my=15)
    assert pde.mass_drift < 1e-12
    assert close(sum(pde.marginal) * (pde.x[1] - pde.x[0]), 1.0, 1e-12)

    e = qfj.locate_extremum([0.1 * i for i in range(9)], [-(0.1 * i - 0.4) ** 2 for i in range(9)])
    assert close(e.lambda_m, 0.4, 1e-12)

    try:
        qfj.free_energy_barrier(1.5, 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("k1 >= 1 must be rejected")
    try:
        qfj.locate_extremum([0, 1, 2, 3, 4], [0, 1, 2, 3, 4])
    except qfj.QfjError:
        pass
    else:
        raise AssertionError("monotone data has no interior extremum")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
