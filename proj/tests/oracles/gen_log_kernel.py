#!/usr/bin/env python3
"""Prints the 5x5 sigma=1 Laplacian-of-Gaussian kernel used as a frozen test oracle.

Second derivatives of the 2D Gaussian are taken symbolically with sympy,
sampled on the integer grid and mean-centred (zero sum). The unique
values by (|dy|,|dx|) are printed with 17 significant digits.
"""
import sympy as sp

x, y, s = sp.symbols("x y s", real=True)
g = sp.exp(-(x**2 + y**2) / (2 * s**2)) / (2 * sp.pi * s**2)
log = sp.simplify(sp.diff(g, x, 2) + sp.diff(g, y, 2))
f = sp.lambdify((x, y), log.subs(s, 1), "mpmath")

import mpmath
mpmath.mp.dps = 40
vals = {(i, j): f(mpmath.mpf(j), mpmath.mpf(i)) for i in range(-2, 3) for j in range(-2, 3)}
mean = sum(vals.values()) / 25
for key in [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)]:
    print(key, mpmath.nstr(vals[key] - mean, 17))
