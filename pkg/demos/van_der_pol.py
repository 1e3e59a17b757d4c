"""Reversed Van der Pol oscillator: learn, solve, certify and count grid points.

Run with ``python3 demos/van_der_pol.py [direct]``; the
optional argument switches the collocation route.
"""
import sys
import warnings

from zubov_koopman import pipeline as pl

route = sys.argv[1] if len(sys.argv) > 1 else None
cfg = pl.load_config("vdp")
ds = pl.simulate(cfg)
res = pl.learn(cfg, ds)
print("linearization at the origin:\n", res.diagnostics["A_hat"])
print("alpha:", res.diagnostics["alpha"])

c, stats = pl.solve(cfg, res.generator, res.field, ds, route=route)
print("route", stats["route"], "residual rms", stats["rms"])

with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    rep = pl.certify(cfg, c, res.field, ds.initial_conditions)
b = rep.bounds
print(f"status={rep.status} c={rep.c:.4g} c1={rep.c1:.4g} c2={rep.c2:.4g}")
print(f"K_f={b.K_f:.3g} K_fhat={b.K_fhat:.3g} nu={b.nu:.3g} beta={b.beta_used:.3g}")
print("audit replay:", rep.audit())

counts = pl.grid_counts(rep, c, cfg["contours"]["window"], cfg["contours"]["grid"],
                        cfg["pde"]["domain"])
print("grid counts:", counts)
