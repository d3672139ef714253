"""Smoke test for the Python bindings.

Builds the extension with cargo if needed, loads it from target/release and
checks a ground-state solve, a seeded free-field draw and a small run.
"""
import importlib.util
import json
import pathlib
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    try:
        import phi4lab_py  # installed with maturin
        return phi4lab_py
    except ImportError:
        pass
    subprocess.run(["cargo", "build", "--release", "-p", "phi4lab-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "libphi4lab_py.so"
    spec = importlib.util.spec_from_file_location("phi4lab_py", lib)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    m = load()
    assert abs(m.multiplier(2.0) - 0.25) < 1e-15

    gs = m.ground_state(1.0, n=1024, half_length=40.0)
    assert abs(gs["lambda"] / 0.0625 - 1) < 0.01, gs["lambda"]
    assert abs(gs["energy"] / (-1 / 96) - 1) < 0.01, gs["energy"]
    assert len(gs["q"]) == len(gs["x"]) == 1024

    re1, im1 = m.free_field(64, 4.0, seed=3)
    re2, im2 = m.free_field(64, 4.0, seed=3)
    assert (re1, im1) == (re2, im2)

    try:
        m.free_field(0, 4.0)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    cfg = """
version = "phi4lab-config/1"
name = "smoke"
[sample]
l = 3.0
d = 1.0
n = 24
[sample.chain]
steps = 400
burn_in = 100
seed = 9
"""
    with tempfile.TemporaryDirectory() as out:
        report = json.loads(m.run_experiment(cfg, out))
        assert report["version"] == "phi4lab-report/1"
        assert (pathlib.Path(out) / "smoke.json").exists()
    print("python smoke test: OK")


if __name__ == "__main__":
    sys.exit(main())
