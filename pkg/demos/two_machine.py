"""Two-machine power system with a tanh dictionary.

Run with ``python3 demos/two_machine.py``.
"""
import warnings

from zubov_koopman import pipeline as pl

cfg = pl.load_config("two_machine")
ds = pl.simulate(cfg)
res = pl.learn(cfg, ds)
print("linearization at the origin:\n", res.diagnostics["A_hat"])

c, stats = pl.solve(cfg, res.generator, res.field, ds)
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    rep = pl.certify(cfg, c, res.field, ds.initial_conditions)
print(f"status={rep.status} c={rep.c:.4g} c1={rep.c1:.4g} c2={rep.c2:.4g}")
counts = pl.grid_counts(rep, c, cfg["contours"]["window"] or cfg["pde"]["domain"],
                        cfg["contours"]["grid"], cfg["pde"]["domain"])
print("grid counts:", counts)
