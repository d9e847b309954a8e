"""Verify every hand-derived gradient against central finite differences.

Same harness as `poe-supcon gradcheck`: each objective is probed at five
seeded random points and the worst symmetric relative error is reported.
"""
from poe_supcon.gradcheck import FAIL_THRESHOLD, run_gradient_checks

rows = run_gradient_checks(seed=0, points=5)
width = max(len(name) for name, _, _ in rows)
print(f"{'objective':<{width}}  {'max rel err':>12}")
for name, err, passed in rows:
    print(f"{name:<{width}}  {err:>12.3e}  {'pass' if passed else 'FAIL'}")
print(f"\nfailure threshold: {FAIL_THRESHOLD:g} (target 1e-6)")
