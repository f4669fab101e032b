"""Build the width ladder and show how coarse it is at each scale."""

from epq import build_ladder
from epq.ladder import flush_bits, penalty_coeff

L = build_ladder()
print(f"{len(L)} tables for widths {L.nodes[0]} .. {L.nodes[-1]:.1f}")
print("   sigma     width   D          flushed bits")
for s, w in zip(L.nodes, L.widths):
    print(f"{s:8.3f}  {w:8.3f}  {penalty_coeff(s):.3e}  {flush_bits(s)}")
