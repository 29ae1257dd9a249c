"""Verify the hand-written backward passes against central differences.

Every operator's backward is compared to a finite-difference probe of its
forward, in double precision. This is the same machinery behind the
`motionfuse gradcheck` command and the acceptance suite.
"""

import time

from motionfuse.gradcheck import OP_CHECKS, run_suite

t0 = time.time()
results = run_suite(seeds=2)
elapsed = time.time() - t0

width = max(len(name) for name in OP_CHECKS)
print(f"{'operator':<{width}}  max rel err")
for name, err in sorted(results.items()):
    print(f"{name:<{width}}  {err:.3e}")
worst = max(results.values())
print(f"\nworst: {worst:.3e} (tolerance 1e-4) in {elapsed:.1f}s")
