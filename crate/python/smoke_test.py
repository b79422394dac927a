"""Smoke test for the pyhyperball extension module.

Run after `maturin develop -m crates/py/Cargo.toml`, or after
`cargo build --release -p hyperball-py`, in which case the freshly built
library under target/ is picked up automatically.
"""

import glob
import math
import os
import shutil
import sys
import tempfile


def load():
    try:
        import pyhyperball

        return pyhyperball
    except ImportError:
        pass
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    for profile in ("release", "debug"):
        for lib in glob.glob(os.path.join(root, "target", profile, "libpyhyperball.*")):
            if lib.endswith((".so", ".dylib")):
                tmp = tempfile.mkdtemp()
                shutil.copy(lib, os.path.join(tmp, "pyhyperball.so"))
                sys.path.insert(0, tmp)
                import pyhyperball

                return pyhyperball
    sys.exit("pyhyperball not found: build it with maturin or cargo first")


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    hb = load()

    a, x = [0.5, 0.1, -0.2], [-0.3, 0.4, 0.1]
    back = hb.mobius(a, hb.mobius(a, x))
    for p, q in zip(back, x):
        close(p, q, 1e-14)
    close(hb.rho(a, x), math.sqrt(sum(v * v for v in hb.mobius(a, x))), 1e-14)

    close(hb.s_factor(4, 3, 0.5), (5 - 3 * 0.25) / 2, 1e-13)
    close(hb.hyp2f1(1, 1, 2, 0.5), 2 * math.log(2), 1e-14)
    assert hb.dim_hm(3, 4) == 9

    table = hb.KernelTable(3, 0.0)
    b = [0.2, -0.1, 0.3]
    f = hb.ZonalExpansion.kernel_slice(table, b)
    y = [0.1, 0.2, 0.0]
    close(f(y), table.eval(y, b), 1e-10)
    close(hb.bergman_project(f, 0.0, y), f(y), 1e-8)

    g = hb.ZonalExpansion.poisson_term(2, [0.0, 0.0, 1.0])
    for t in (0.5, 2.0):
        close(hb.pairing(hb.ZonalExpansion.kernel_slice(table, y, degree=8), g, 0.0, t), g(y), 1e-10)
    close(g.dts(0.0, 1.0).dts(1.0, -1.0)(y), g(y), 1e-12)

    zeta = [1.0, 0.0, 0.0]
    assert hb.hyperbolic_laplacian_residual(lambda p: hb.poisson(p, zeta), [0.3, 0.0, 0.0]) < 1e-5

    norms = hb.bloch_norms(g, [(0.0, 1.0)])
    assert norms["norm"] > 0 and len(norms["weighted"]) == 1

    lat = hb.Lattice(3, 0.25, 0.8, seed=1)
    assert len(lat) > 10
    m = lat.index([0.1, 0.1, 0.1])
    assert hb.rho(lat.center(m), [0.1, 0.1, 0.1]) < lat.r
    assert len(hb.Lattice.from_text(lat.to_text())) == len(lat)

    rep = hb.run_suite("odd-dim-witness")
    assert rep["pass"], rep
    assert "geometry" in hb.SUITES

    try:
        hb.mobius([1.5, 0.0, 0.0], x)
    except ValueError:
        pass
    else:
        raise AssertionError("a point outside the ball was accepted")

    print("pyhyperball smoke test passed")


if __name__ == "__main__":
    main()
