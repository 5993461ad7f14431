"""Sweep eps on the standard scenario and print the convergence summary.

Takes about 20 s on one core.  The same sweep is available as
``acns sweep demos/standard.ini``.
"""

from acns import SimConfig, build_domain
from acns.elliptic import dirichlet_eigenbasis
from acns.sweep import STANDARD_EPSILONS, run_sweep, summary_text

cfg = SimConfig()
basis = dirichlet_eigenbasis(build_domain(cfg), 256)
report = run_sweep(cfg, STANDARD_EPSILONS, basis=basis)
print(summary_text(report), end="")
