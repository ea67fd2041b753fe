"""Power warm-up followed by Newton with matrix-free descent updates.

With the dense oracle switched on we also see the true error of every Newton
iterate next to its certified bound. The bound is never smaller.
"""
from rtcrit import OperatorSet, SourceSolver, named_scenario
from rtcrit.cli_runner import build_oracle, pipeline

grid, optics, _ = named_scenario("ref")
solver = SourceSolver(OperatorSet(grid, optics))
oracle = build_oracle(solver, seed=0)
b = oracle.budget
print(f"theory constants: beta_bar = {b.beta_bar:.1f}, gamma = {b.gamma:.3f}, "
      f"omega = {b.omega:.2e}")
print(f"sampled ||DR^-1|| near the solution: {oracle.dr_worst:.2f} (working estimate)")

final, rows, summary = pipeline(solver, 1e-10, oracle=oracle, timing=False)
power = [r for r in rows if r["phase"] == "power"]
print(f"\n{len(power)} power steps, last distance to u1 {power[-1]['oracle_error']:.2e}")
print("\nNewton  residual    eta        bound      true error")
for r in rows:
    if r["phase"] != "newton":
        continue
    eta = f"{r['eta']:.2e}" if r["eta"] is not None else "   -    "
    print(f"  {r['iter']:2d}    {r['residual_norm']:.2e}  {eta}  {r['certified_bound']:.2e}"
          f"   {r['oracle_error']:.2e}")
print(f"\nlambda = {final.lam:.14f}  (dense reference {summary['lambda_oracle']:.14f})")
print(f"C applications in total: {summary['c_applications']}")
