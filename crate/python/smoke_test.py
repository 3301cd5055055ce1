"""Smoke test for the pybellcert extension module.

Build and install the module first, for example:

    pip install maturin
    maturin develop -m crates/python/Cargo.toml --release

then run `python python/smoke_test.py`.
"""

import json
import math

import pybellcert as bc


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    local, qmax = bc.tilted_chsh_bounds(45.0)
    assert close(local, 2.0, 1e-12) and close(qmax, 2 * math.sqrt(2), 1e-12)

    ideal = bc.simulated_behavior(37.5)
    assert close(ideal.tilted_chsh(37.5), bc.tilted_chsh_bounds(37.5)[1], 1e-9)
    assert ideal.signaling_deficit() < 1e-12

    regularized, distance = bc.nqa2_regularize(ideal)
    assert distance < 1e-6, distance

    cert = bc.certify_behavior(ideal, 37.5)
    assert cert.f_s >= 0.99, cert
    print(cert)

    noisy = bc.simulated_behavior(45.0, p=0.95)
    f_t = bc.tomography_fidelity(45.0, p=0.95)
    assert close(f_t, 0.95 + 0.05 / 4, 1e-9)
    assert bc.certify_behavior(noisy, 45.0).f_s <= f_t

    curve = bc.robust_curve(45.0, [0.0, 0.1])
    assert curve[0][1] >= curve[1][1]

    _, reported = bc.miscalibration_demo(1.0, 45.0)
    assert close(reported, (1 + math.sqrt(2)) / 2, 1e-9)

    report = json.loads(bc.run_config("theta = 45\ninfinite_sample = true\n"))
    assert close(report["rows"][0]["f_t"], 1.0, 1e-9)

    try:
        bc.simulated_behavior(60.0)
    except ValueError:
        pass
    else:
        raise AssertionError("theta outside (0, 45] must raise ValueError")

    print("pybellcert smoke test passed")


if __name__ == "__main__":
    main()
