"""When does an outcome become a fact?  The event criterion in action.

A candidate partition describes an event at a given time when its
projections are close enough to the center of the state's centralizer --
closeness being measured against a threshold set by the spread of the
outcome weights.  Three vignettes:

  1. an incoherent state fires immediately,
  2. a balanced superposition admits no threshold at all,
  3. losing access to part of the system *creates* an event that full
     access denies.

Run with:  python demos/02_event_detection.py
"""

import numpy as np

from qevents import (DensityState, FiniteAlgebra, HeisenbergFrame,
                     PartitionOfUnity, admissible_threshold, detect_event,
                     earliest_event)

E11 = np.diag([1.0, 0.0]).astype(complex)
E22 = np.diag([0.0, 1.0]).astype(complex)
E12 = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
I2 = np.eye(2, dtype=complex)
PART = PartitionOfUnity(("+", "-"), (E11, E22))


def verdict_line(tag, v):
    thr = "none" if np.isnan(v.threshold) else f"{v.threshold:.3f}"
    print(f"  {tag}: happened={v.happened}  distance={v.distance:.4f}  "
          f"threshold={thr}  gap={v.gap:.3f}")


print("== 1. Incoherent states produce events ==")
frame = HeisenbergFrame((1.0,), (I2,), ((PART,),), (None,))
rho = DensityState(np.diag([0.3, 0.7]).astype(complex))
verdict_line("diag(0.3, 0.7)", detect_event(frame, rho, 1.0, PART))
print(f"  admissible threshold before the 1/N split: "
      f"{admissible_threshold(rho, PART):.3f}")

print("\n== 2. Superpositions admit no threshold ==")
plus = DensityState(np.full((2, 2), 0.5, dtype=complex))
verdict_line("|+><+|     ", detect_event(frame, plus, 1.0, PART))
print("  equal outcome weights leave no admissible gap: nothing can ever fire")

print("\n== 3. Small coherences keep the event; large ones destroy it ==")
for eta in (0.01, 0.05):
    state = DensityState(np.array([[0.3, eta], [eta, 0.7]], dtype=complex))
    verdict_line(f"eta={eta:.2f}    ", detect_event(frame, state, 1.0, PART))

print("\n== 4. Information loss creates an event ==")
# entangled pure state sqrt(0.3)|00> + sqrt(0.7)|11> on two qubits
psi = np.zeros(4, dtype=complex)
psi[0], psi[3] = np.sqrt(0.3), np.sqrt(0.7)
state4 = DensityState(np.outer(psi, psi.conj()))
part4 = PartitionOfUnity(("0", "1"), (np.kron(E11, I2), np.kron(E22, I2)))
eye4 = np.eye(4, dtype=complex)
first_qubit = FiniteAlgebra.from_span(
    [np.kron(B, I2) for B in (E11, E22, E12, E12.conj().T)])

full = HeisenbergFrame((1.0,), (eye4,), ((part4,),), (None,))
restricted = HeisenbergFrame((1.0,), (eye4,), ((part4,),), (first_qubit,))
verdict_line("full access   ", detect_event(full, state4, 1.0, part4))
verdict_line("first qubit   ", detect_event(restricted, state4, 1.0, part4))
print("  with every observable available the entangled state shows no event;\n"
      "  restricted to one qubit the same state is effectively incoherent\n"
      "  and the outcome is a fact")

print("\n== 5. Scanning a frame for the earliest event ==")
HAD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)
fr3 = HeisenbergFrame.build((1.0, 2.0, 3.0), PART, step_propagator=HAD)
report = earliest_event(fr3, rho)
print(f"  times that fire: "
      f"{[row[0].time for row in report.verdicts if row[0].happened]}")
print(f"  earliest event at t = {report.t_star}")
print("  (the middle time rotates the partition onto the superposition basis,\n"
      "   where the weights degenerate and detection is inadmissible)")
