"""
Decoding time versus arrival rate
=================================

A reduced version of the rate/decoding-time comparison: SBC-SPM against the
systematically causal encoder, with the lower bounds alongside.
Set SBCSPM_JOBS to use more worker processes.
"""

from sbcspm import SimConfig, sce_bound, simulate, traditional_bound

K, C, trials = 96, 0.5, 100
base = SimConfig.from_capacity(K, C, N=8, epsilon=1e-3, trials=trials, seed=0)

print(f"K={K}, C={C}, {trials} trials per point")
print(" gamma   SBC T_d   SCE T_d   SCE bound  traditional")
for g in (0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
    sbc = simulate(base.with_(scheme="sbc", lam=g))
    sce = simulate(base.with_(scheme="sce", lam=g))
    print(f"{g:6.1f} {sbc['mean_Td_seconds']:9.1f} {sce['mean_Td_seconds']:9.1f}"
          f" {sce_bound(K, g, 1.0, C):10.1f} {traditional_bound(K, g, 1.0, C):11.1f}")
