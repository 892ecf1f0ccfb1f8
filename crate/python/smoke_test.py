"""Smoke test for the fgscatter_py extension module."""
import math

import fgscatter_py as fg


def close(a, b, tol):
    assert abs(a - b) < tol, (a, b)


def main():
    free = fg.Background([0.0])
    sol = fg.Problem(free, "-2*sech(x)^2")
    eigs = sol.eigenvalues()
    assert len(eigs) == 1
    close(eigs[0], -1.0, 1e-8)
    close(sol.transmission(4.0), (3 + 4j) / 5, 1e-6)
    t, rp, rm = sol.band_scattering(2.0)
    close(abs(t) ** 2 + abs(rp) ** 2, 1.0, 1e-8)
    close(sol.xi(0.5), 2 / math.pi * math.atan(1 / math.sqrt(0.5)), 1e-6)
    z = 1.0 + 0.5j
    close(sol.krein_transmission(z), sol.transmission(z), 1e-6)
    close(sol.reconstructed_transmission(z), sol.transmission(z), 1e-6)
    inv = sol.invariants(2)
    close(inv["integral"][0], 2.0, 1e-6)
    close(inv["trace_formula"][1], -2 / 3, 1e-6)

    g1 = fg.Background([0.0, 1.0, 3.0], [(2.0, 1.0)], 30.0)
    assert g1.genus == 1
    p = fg.Problem(g1, "0.5*exp(-x^2)")
    close(p.reconstructed_transmission(2.0 + 1.0j), p.transmission(2.0 + 1.0j), 1e-5)

    n, length = 512, 60.0
    xs = [-length / 2 + length * j / n for j in range(n)]
    _, v, drift = fg.kdv_evolve([-2 / math.cosh(x) ** 2 for x in xs], 0.0, 0.2, length, 2e-3)
    assert len(v) == n and max(drift) < 1e-6, drift

    try:
        fg.Problem(free, "sech(")
    except ValueError:
        pass
    else:
        raise AssertionError("bad expression accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
