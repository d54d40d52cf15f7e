"""Exact discretization of an LTI plant over arbitrary intervals.

A plant dx/dt = A_c x + B_c u sampled with a zero-order hold over an interval
h becomes x+ = Ad x + Bd u with Ad = exp(A_c h) and Bd the integral of
exp(A_c t) B_c over [0, h]. Both blocks come out of one exponential of the
augmented matrix [[A_c, B_c], [0, 0]] -- exact even when A_c is singular.
"""

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import expm

from ncstab import ContinuousPlant, discretize, discretize_batch, extend, matrix_exponential

# the running example: an inverted pendulum linearized at the upright position
# (state = angle and angular velocity, input = torque)
pendulum = ContinuousPlant(A_c=[[0.0, 1.0], [49.0, 0.0]], B_c=[[0.0], [25.0]])
print("plant: n =", pendulum.n, " m =", pendulum.m)
print("continuous-time eigenvalues:", np.linalg.eigvals(pendulum.A_c))

# discretize over a 50 ms interval and sanity-check Bd against quadrature
dp = discretize(pendulum, 0.05)
print("\nAd =\n", dp.Ad)
print("Bd =\n", dp.Bd)
ref, _ = quad_vec(lambda t: expm(pendulum.A_c * t) @ pendulum.B_c, 0.0, 0.05)
print("Bd vs adaptive quadrature:", np.linalg.norm(dp.Bd - ref) / np.linalg.norm(ref))

# a singular A_c is no problem for the augmented route
integrator = ContinuousPlant([[0.0]], [[5.0]])
print("\nintegrator over h=0.2 -> Bd =", discretize(integrator, 0.2).Bd.ravel(), "(= h * B_c)")

# batches of intervals share one decomposition; here 10 random ones
hs = np.random.default_rng(0).uniform(0.0, 0.3, size=10)
Ads, Bds = discretize_batch(pendulum, hs)
print("\nbatch shapes:", Ads.shape, Bds.shape)

# the extended realization absorbs the one-step input delay of the loop:
# xhat = [x; previous input], so the delayed recursion becomes standard
ep = extend(dp, pendulum.m)
print("\nAhat =\n", ep.Ahat)
print("Bhat =\n", ep.Bhat)

# the matrix exponential itself is exposed too
print("\nexp of a nilpotent matrix, t = 2:\n", matrix_exponential([[0, 1], [0, 0]], 2.0))
