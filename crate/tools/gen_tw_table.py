"""Tabulate Tracy-Widom (order 1) quantiles.

F1(s) = det(I - K) on L^2(s, inf) with K(x, y) = Ai((x + y) / 2) / 2,
discretized by Gauss-Legendre quadrature on [s, s + L] (Nystrom method).
Writes `level,value` lines to crates/core/data/tw1_quantiles.csv.
"""
import sys
import numpy as np
from scipy.optimize import brentq
from scipy.special import airy


def f1(s, nodes=100, length=24.0):
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    x = s + (xg + 1.0) * length / 2.0
    w = wg * length / 2.0
    k = 0.5 * airy((x[:, None] + x[None, :]) / 2.0)[0]
    sw = np.sqrt(w)
    return np.linalg.det(np.eye(nodes) - sw[:, None] * k * sw[None, :])


def quantile(p, **kw):
    return brentq(lambda s: f1(s, **kw) - p, -10.0, 8.0, xtol=1e-14)


def main(out):
    levels = [0.001, 0.005] + [round(0.01 * i, 2) for i in range(1, 100)] + [0.995, 0.999]
    rows = []
    for p in levels:
        a = quantile(p)
        b = quantile(p, nodes=140, length=30.0)
        assert abs(a - b) < 1e-9, (p, a, b)
        rows.append(f"{p},{a:.10f}")
    with open(out, "w") as f:
        f.write("\n".join(rows) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/data/tw1_quantiles.csv")
