#!/usr/bin/env python3
"""Walk through the spectral side of the package: SVD of a frozen weight,
the cumulative-energy curve, K-way partitions of the singular directions,
and the frozen modulation tensors built from each subspace.
"""

import warnings

import numpy as np

from smoa import (
    EmptySubspaceWarning,
    cumulative_energy,
    decompose,
    modulation_tensor,
    partition,
    random_weight,
)

rng = np.random.default_rng(0)

print("=== a tiny diagonal example ===")
w_small = np.diag([3.0, 2.0, 1.0])
dec = decompose(w_small)
energy = cumulative_energy(dec.sigma)
print("singular values:", dec.sigma)
print("cumulative energy:", energy)

part = partition(energy, 2)
for k, idx in enumerate(part.index_sets):
    print(f"subspace {k + 1}: directions {[int(i) + 1 for i in idx]}, "
          f"energy share {part.shares[k]:.3f}")

print("\nmodulation tensors (each keeps only its subspace's singular triples):")
for k in range(2):
    print(f"subspace {k + 1}:\n{np.round(modulation_tensor(dec, part, k), 6)}")

print("\n=== a realistic decaying spectrum, d = 64 ===")
w = random_weight(64, 64, rng)
dec = decompose(w)
energy = cumulative_energy(dec.sigma)
print(f"||W|| = {np.linalg.norm(w):.1f}, sigma_1 = {dec.sigma[0]:.3f}, "
      f"sigma_64 = {dec.sigma[-1]:.3f}")

for K in (2, 4, 8):
    part = partition(energy, K)
    sizes = part.sizes
    shares = ", ".join(f"{s:.3f}" for s in part.shares)
    print(f"K = {K}: subspace sizes {sizes}, shares [{shares}]")

print("\nthe K modulation tensors always sum back to the weight:")
part = partition(energy, 4)
total = sum(modulation_tensor(dec, part, k) for k in range(4))
print(f"relative reconstruction error: "
      f"{np.linalg.norm(total - w) / np.linalg.norm(w):.2e}")

print("\n=== a dominant direction can leave early subspaces empty ===")
spike = np.diag([100.0, 1.0, 1.0])
dec = decompose(spike)
energy = cumulative_energy(dec.sigma)
print("cumulative energy:", np.round(energy, 4))
with warnings.catch_warnings():
    warnings.simplefilter("ignore", EmptySubspaceWarning)
    part = partition(energy, 3)
print(f"subspace sizes: {part.sizes} (empty sets are permitted and reported, "
      f"their updates are identically zero)")
