"""Smoke test for the pygaplab extension.

Build with `cargo build --release -p gaplab-python --features extension-module`,
copy target/release/libpygaplab.so next to this file as pygaplab.so, then run
`python3 python/smoke_test.py`.
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pygaplab


def check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())
    return ok


def main():
    results = []

    free = pygaplab.CellProblem.hill(pygaplab.CurvatureProfile(), 400)
    bands = free.band_structure(32, 2)["bands"]
    results.append(check("free bands", abs(bands[0][0]) < 1e-3 and abs(bands[0][1] - 0.25) < 1e-3
                         and abs(bands[1][1] - 1.0) < 1e-3, str(bands)))

    rng = np.random.default_rng(7)
    z = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    a = z + z.conj().T
    w = rng.normal(size=(6, 6))
    b = w @ w.T + 6 * np.eye(6)
    ours = pygaplab.solve_gevp_values(a.tolist(), b.astype(complex).tolist(), 6)
    l = np.linalg.cholesky(b)
    linv = np.linalg.inv(l)
    ref = np.linalg.eigvalsh(linv @ a @ linv.conj().T)
    results.append(check("complex pencil matches numpy", np.allclose(ours, ref, atol=1e-10)))

    eps = 0.1
    straight = pygaplab.strip_values(pygaplab.CurvatureProfile(), eps, 64, 1)
    results.append(check("straight strip ground state", abs(straight[0] - math.pi**2 / eps**2) < 1e-8,
                         f"{straight[0]}"))

    try:
        pygaplab.CellProblem.waveguide(pygaplab.CurvatureProfile(cos=[0.0, 20.0]), 0.1, 8, 2)
        results.append(check("self-intersecting tube rejected", False))
    except ValueError as err:
        results.append(check("self-intersecting tube rejected", "TubeSelfIntersection" in str(err)))

    names = pygaplab.experiments()
    results.append(check("bundled experiments", len(names) >= 6, str(len(names))))
    passed, report = pygaplab.run_experiment("hill-gap-count")
    results.append(check("gap count experiment", passed and json.loads(report)["pass"]))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
