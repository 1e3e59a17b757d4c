"""Scalar system x' = -x: every stage has a closed form to compare against.

Run with ``python3 demos/scalar_oracle.py``.
"""
import numpy as np

from zubov_koopman import certificates as cert
from zubov_koopman import dynamics as dyn
from zubov_koopman import koopman as kp
from zubov_koopman import verify as ver
from zubov_koopman.dictionary import MonomialDictionary
from zubov_koopman.interval import Box

sys = dyn.scalar_linear(-1.0)
ds = dyn.sample_trajectories(sys, np.array([[1.0], [-0.5]]), 50, 5.0)

# resolvent of h(x) = x: int_0^5 exp(-2.5 s) exp(-s) ds
d = MonomialDictionary([[1]])
R = kp.resolvent_quadrature(ds, d, 2.5).R_hat
print("resolvent at x0=1:", R[0, 0], "exact:", (1 - np.exp(-17.5)) / 3.5)

g = kp.learn_from_dataset(ds, d, mu=2.5, lam=1e8)
f = kp.correct_equilibrium(kp.extract_vector_field(g))
print("learned generator L:", g.L[0, 0], "(exact -1)")

# quadratic Lyapunov function from the learned linearization
q = cert.solve_matrix_lyapunov(kp.linearize_at_origin(f))
print("P:", q.P[0, 0], "(exact 0.5)")

# sublevel set certified on [-1, 1]: V = x^2 / 2 <= c needs c < 0.5
c = ver.certify_quadratic_roa(q, sys, Box.from_pairs([[-1, 1]]), ver.VerifierConfig())
print("certified quadratic level c:", c)
