"""
Geodesics on the sphere and on SPD matrices
===========================================

Exponential and logarithm maps are inverse to each other inside the
injectivity radius, and the affine-invariant distance does not change
under congruence ``W -> A W A^T``.
"""

import numpy as np

from dp_riemopt import SPD, Sphere

rng = np.random.default_rng(0)

# a point on S^4 and a tangent vector of length 2
S = Sphere(5)
w = S.random_point(rng)
u = S.random_tangent(w, rng)
u *= 2.0 / S.norm(w, u)
x = S.exp(w, u)
print("sphere: |Log(Exp(u)) - u| =", S.norm(w, S.log(w, x) - u))
print("sphere: dist(w, x) =", S.dist(w, x), "(tangent length 2)")

# 3x3 SPD matrices
P = SPD(3)
W, X = P.random_point(rng), P.random_point(rng)
print("spd: dist(W, X) =", P.dist(W, X))

A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
print("spd: after congruence   ", P.dist(A @ W @ A.T, A @ X @ A.T))

# halfway along the geodesic
M = P.geodesic(W, X, 0.5)
print("spd: midpoint distances ", P.dist(W, M), P.dist(M, X))
