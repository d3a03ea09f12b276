"""Smoke test for the Python bindings.

Imports ``wamsplit_py`` if it is installed; otherwise loads the shared library
built by ``cargo build --release -p wamsplit-py --features extension-module``.
"""

import importlib.util
import json
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    try:
        import wamsplit_py

        return wamsplit_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libwamsplit_py.so"
        if lib.exists():
            spec = importlib.util.spec_from_file_location("wamsplit_py", lib)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("wamsplit_py not found; build it with cargo build --release -p wamsplit-py --features extension-module")


def main():
    ws = load_module()

    tilde = ws.coi_transform([0.1, 0.4, -0.2], [2.0, 1.0, 1.0])
    assert abs(2.0 * tilde[0] + tilde[1] + tilde[2]) < 1e-12

    i, j, sep = ws.critical_pair([0.0, math.radians(10), math.radians(50)])
    assert (i, j) == (0, 2) and abs(sep - math.radians(50)) < 1e-12

    history = [[0.5 * k * k, 3.0 * k] for k in range(12)]
    pred = ws.taylor_predict(history)
    assert len(pred) == 6
    assert abs(pred[-1][0] - 0.5 * 17 * 17) < 1e-8

    cm, nm = ws.algorithm1([[10.0, 1.0, 0.0], [20.0, 1.5, 0.5]])
    assert cm == [0] and nm == [1, 2]

    report = json.loads(ws.run_scenario("trip2829"))
    assert report["verdict"] != "no-oos"
    assert report["selection"]["group"] == [9]

    print("python smoke test passed:", report["verdict"], report["selection"]["cutset"])


if __name__ == "__main__":
    main()
