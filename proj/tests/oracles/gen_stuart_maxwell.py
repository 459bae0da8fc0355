#!/usr/bin/env python3
"""Independent oracle for the Stuart-Maxwell example table.

Route 1: statsmodels SquareTable.homogeneity (its own implementation).
Route 2: the textbook two-category formula d' S^-1 d written out directly.
Route 3: Monte-Carlo null: tables drawn from the symmetrized cell
         probabilities (marginal homogeneity holds), tail frequency of the
         observed statistic compared with the chi-square p-value.
"""
import numpy as np
from scipy.stats import chi2
from statsmodels.stats.contingency_tables import SquareTable

N = np.array([[20, 5, 0], [2, 30, 4], [1, 3, 35]], dtype=float)


def direct(t):
    row, col = t.sum(1), t.sum(0)
    d = (row - col)[:2]
    S = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            S[i, j] = row[i] + col[i] - 2 * t[i, i] if i == j else -(t[i, j] + t[j, i])
    return float(d @ np.linalg.solve(S, d))


r = SquareTable(N, shift_zeros=False).homogeneity()
stat = direct(N)
print(f"statsmodels statistic {r.statistic!r} df {r.df} p {r.pvalue!r}")
print(f"direct      statistic {stat!r} p {chi2.sf(stat, 2)!r}")

rng = np.random.default_rng(20240611)
P = (N + N.T) / 2
P = (P / P.sum()).ravel()
n = int(N.sum())
draws = rng.multinomial(n, P, size=1_000_000).reshape(-1, 3, 3).astype(float)
row, col = draws.sum(2), draws.sum(1)
d = (row - col)[:, :2]
s00 = row[:, 0] + col[:, 0] - 2 * draws[:, 0, 0]
s11 = row[:, 1] + col[:, 1] - 2 * draws[:, 1, 1]
s01 = -(draws[:, 0, 1] + draws[:, 1, 0])
det = s00 * s11 - s01 * s01
ok = det > 0
q = (s11 * d[:, 0] ** 2 - 2 * s01 * d[:, 0] * d[:, 1] + s00 * d[:, 1] ** 2)[ok] / det[ok]
print(f"monte-carlo tail P(Q >= {stat:.6f}) = {(q >= stat - 1e-12).mean():.4f} over {ok.sum()} draws")
print(f"monte-carlo rejection rate at 0.05: {(chi2.sf(q, 2) < 0.05).mean():.4f}")
