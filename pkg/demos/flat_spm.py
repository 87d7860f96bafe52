"""
Systematic posterior matching on a short message
=================================================

Send eight systematic bits over BSC(0.2), then keep bisecting the posterior
until one message holds 1 - eps of the mass.
"""

import numpy as np

from sbcspm import ChannelParams, decode_status, init_groups, locate, partition, update
from sbcspm.channel import bsc_transmit

K, eps = 8, 1e-3
params = ChannelParams(0.2)
rng = np.random.default_rng(1)
theta = rng.integers(0, 2, K, dtype=np.uint8)

# phase 1: raw bits
received = np.array([bsc_transmit(int(b), params, rng) for b in theta], dtype=np.uint8)
print("message :", theta)
print("received:", received, " flips:", int(np.sum(theta ^ received)))

# one group per Hamming distance from the received word
groups = init_groups(K, params, received)
print(f"{groups.n_groups} groups, top posterior {groups.max_rho:.4f}")

t = K
while decode_status(groups, eps) is None:
    part = partition(groups)
    x = locate(theta, received, part)
    y = bsc_transmit(x, params, rng)
    update(part, y)
    t += 1
    print(f"t={t:3d}  P(S0)={part.p0:.3f}  x={x} y={y}  groups={groups.n_groups:2d}  top={groups.max_rho:.4f}")

decoded = decode_status(groups, eps)
print("decoded :", decoded, "correct" if np.array_equal(decoded, theta) else "WRONG")
print(f"rate K/tau = {K / t:.3f}, capacity {params.capacity:.3f}")
