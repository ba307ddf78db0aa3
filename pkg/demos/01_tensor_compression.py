"""Depth-only Tucker compression walkthrough.

Builds a synthetic convolutional feature tensor whose depth vectors live
mostly in a low-dimensional subspace, then sweeps the compression rank and
reports reconstruction error and retained energy, checking the exactness
identity (error^2 + retained sigma^2 == total energy) along the way.
"""

import numpy as np

from hyperseg import depth_tucker, halving_plan, reconstruct, compress_stack
from hyperseg.tensors import truncated_svd, unfold

rng = np.random.default_rng(0)

# 32 channels that are noisy mixtures of 6 latent spatial patterns
latents = rng.normal(size=(6, 24, 24))
mixing = rng.normal(size=(32, 6))
features = np.tensordot(mixing, latents, axes=(1, 0)) + 0.05 * rng.normal(size=(32, 24, 24))

total_energy = float(np.sum(features**2))
sv = truncated_svd(unfold(features, 0), 32).singular_values
print(f"feature tensor: depth 32, spatial 24x24, energy {total_energy:.1f}")
print(f"{'rank':>4}  {'error':>10}  {'energy kept':>11}")
for rank in (1, 2, 4, 6, 8, 16, 32):
    core, factor = depth_tucker(features, rank)
    err = float(np.linalg.norm(features - reconstruct(core, factor)))
    identity_gap = abs(err**2 + np.sum(sv[:rank] ** 2) - total_energy)
    assert identity_gap < 1e-6 * total_energy
    print(f"{rank:>4}  {err:>10.4f}  {factor.energy_retained:>11.6f}")

print("\nexactness identity error^2 + retained sigma^2 == ||C||^2 held at every rank")

# stacking several layers: halving each depth reproduces the 736 headline
plan = halving_plan([64, 128, 256, 512, 512])
print(f"\nhalving VGG-19 tap depths [64,128,256,512,512] -> total depth {plan.total_compressed_depth}")

toy_plan = halving_plan([("low", 8), ("high", 16)])
stack, factors = compress_stack(
    [rng.normal(size=(8, 24, 24)), rng.normal(size=(16, 24, 24))], toy_plan
)
print(f"toy stack: depths [8, 16] compressed to {stack.depth} "
      f"(ranks {[f.rank for f in factors]}, energies {[round(f.energy_retained, 3) for f in factors]})")
