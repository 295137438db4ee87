"""Tour of the operator layer: spectral clustering, partitions, algebras.

Run with:  python demos/01_operators_and_algebras.py
"""

import numpy as np

from qevents import (PartitionOfUnity, center, commutant, contains,
                     diagonal_algebra, equal_span, full_matrix_algebra,
                     generate_algebra, spectral_decompose)

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)

print("== Spectral decomposition with degeneracy clustering ==")
sd = spectral_decompose(SX)
print(f"pauli-x eigenvalues: {sd.eigenvalues}")
for lam, P in zip(sd.eigenvalues, sd.projections):
    print(f"  projection for {lam:+.0f}:\n{np.round(P.real, 3)}")

nearly = np.diag([1.0, 1.0 + 1e-12, 2.0]).astype(complex)
sd2 = spectral_decompose(nearly)
print(f"\nnearly degenerate diag(1, 1+1e-12, 2) clusters into "
      f"{len(sd2.eigenvalues)} eigenspaces: {sd2.eigenvalues}")
print("the first projection has rank", int(round(np.trace(sd2.projections[0]).real)))

print("\n== Partitions of unity from observables ==")
part = PartitionOfUnity.from_observable(SX)
print(f"labels are the clustered eigenvalues: {part.labels}")
print("projections resolve the identity:",
      np.allclose(sum(part.projections), np.eye(2)))

print("\n== Finite *-algebras ==")
D3 = diagonal_algebra(3)
M3 = full_matrix_algebra(3)
print(f"diagonal algebra of dim 3: linear dimension {D3.algebra_dim}")
print(f"full matrix algebra of dim 3: linear dimension {M3.algebra_dim}")

A = generate_algebra([np.array([[0, 1], [0, 0]], dtype=complex)])
print(f"\nalgebra generated by one nilpotent 2x2 matrix closes to dimension "
      f"{A.algebra_dim} (the full algebra)")

print("\n== Commutants, bicommutants, centers ==")
C = commutant(D3)
print("commutant of the diagonal algebra is itself:", equal_span(C, D3)[0])
print("commutant of the full algebra has dimension",
      commutant(M3).algebra_dim, "(the scalars)")
ok, r = equal_span(commutant(commutant(A)), A)
print(f"double commutant reproduces a generated algebra: {ok} (residual {r:.1e})")
print("center of the full algebra has dimension",
      center(M3).algebra_dim)

ok, r = contains(diagonal_algebra(2), SX)
print(f"\nmembership is quantitative: pauli-x inside the diagonal algebra? "
      f"{ok} (orthogonal residual {r:.3f})")
