"""Smoke test for the pyljmd extension.

Build first:
    cargo build --release -p ljmd-python --features extension-module
then run:
    python3 python/smoke_test.py
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_extension():
    for name in ("libpyljmd.so", "libpyljmd.dylib", "pyljmd.dll"):
        lib = ROOT / "target" / "release" / name
        if lib.exists():
            break
    else:
        sys.exit("extension not built; run: cargo build --release -p ljmd-python --features extension-module")
    tmp = pathlib.Path(tempfile.mkdtemp())
    target = tmp / ("pyljmd.pyd" if lib.suffix == ".dll" else "pyljmd.so")
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("pyljmd", target)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def fcc(cells, a):
    basis = [(0, 0, 0), (0.5, 0.5, 0), (0.5, 0, 0.5), (0, 0.5, 0.5)]
    return [
        [(i + b[0]) * a, (j + b[1]) * a, (k + b[2]) * a]
        for i in range(cells) for j in range(cells) for k in range(cells) for b in basis
    ]


def main():
    lj = load_extension()

    # engine on an FCC crystal: forces vanish by symmetry, energy is conserved
    a = (4 / 0.8) ** (1 / 3)
    pos = fcc(5, a)
    eng = lj.Engine([5 * a] * 3, pos, workers=4, decomposition="kd")
    assert len(eng) == 500
    assert max(abs(c) for f in eng.forces() for c in f) < 1e-10
    vel = [[0.1 * math.sin(i), 0.1 * math.cos(i), 0.05 * math.sin(3 * i)] for i in range(500)]
    eng = lj.Engine([5 * a] * 3, pos, vel, workers=4)
    e0 = eng.observables()["e_total"]
    eng.step(50)
    assert eng.current_step == 50
    assert abs(eng.observables()["e_total"] - e0) < 1e-3 * abs(e0)
    assert sum(eng.owned_counts()) == 500
    assert len(eng.leaves()) == 4

    # config round trip and a short run
    cfg = lj.Config.load(str(ROOT / "configs" / "bulk.ini"))
    cfg.steps = 100
    again = lj.Config.parse(cfg.to_ini())
    assert again.to_ini() == cfg.to_ini()
    with tempfile.TemporaryDirectory() as d:
        out = lj.simulate(cfg, d)
        assert (pathlib.Path(d) / "observables.csv").exists()
    assert len(out["rows"]) == 1 + 100 // 10
    assert out["bench"]["condensed"] and out["bench"]["ell"] is not None

    # Metropolis sampler
    mc = lj.MonteCarlo([5 * a] * 3, pos, temperature=2.0, seed=3)
    mc.sweep(20, tune=True)
    assert 0.0 < mc.acceptance_ratio() < 1.0
    assert math.isfinite(mc.observables()["P"])

    # partitioning helpers
    leaves, imb = lj.kd_partition([4, 4, 4], [1.0] * 64, 8)
    assert len(leaves) == 8 and abs(imb - 1.0) < 1e-12
    assert len(lj.uniform_partition([6, 6, 6], 8)) == 8
    assert lj.ell_exponent(1000, 100000, 86400.0, True) == 1.0
    assert lj.ell_exponent(1000, 100000, 86400.0, False) is None

    try:
        lj.Config.parse("[domain]\nlengths = 9 9 9\nbogus = 1\n")
    except lj.LjmdError as e:
        assert "bogus" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print("pyljmd smoke test: ok")


if __name__ == "__main__":
    main()
