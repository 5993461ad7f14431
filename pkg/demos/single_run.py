"""One artificial-compressibility run on the standard scenario.

Prints the energy balance and how far the velocity is from being
divergence free, then compares it with the incompressible reference on the
same grid and time steps.
"""

from acns import SimConfig, run
from acns.diagnostics import loc_window, q_decay, windowed_l2
from acns.fields import divergence, lp_norm, time_norm
from acns.ns_reference import run_reference
from acns.sweep import compare_to_limit

cfg = SimConfig(epsilon=1e-2)
traj, ledger = run(cfg)
print(f"{len(traj)} snapshots, dt = {traj.dt:.3e}, every {traj.cadence} steps")
print(f"E(0) = {ledger.e0:.5f}, E(T) = {ledger.energy[-1]:.5f}, "
      f"dissipated {ledger.dissipation[-1]:.5f}")
print(f"energy residual: {ledger.relative_residual():.2%} of E(0)")

worst_div = max(lp_norm(divergence(u), 2) for u in traj.velocities)
print(f"max |div u| over the run: {worst_div:.3e}")
print(f"|Qu| in L2_t L4_x: {q_decay(traj):.3e}")

ref = run_reference(cfg.with_(dt=traj.dt), dt=traj.dt)
scale = time_norm([windowed_l2(u, loc_window(ref.geometry)) for u in ref.velocities],
                  ref.snapshot_dt, 2)
print(f"|Pu - u_ref| near the obstacle: {compare_to_limit(traj, ref) / scale:.2%} of |u_ref|")
