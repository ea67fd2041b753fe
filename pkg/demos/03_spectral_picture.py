"""What the dense oracle says about the spectrum of C.

The gap between mu1 and |mu2| drives both the power iteration and the
well-posedness of the Newton system. theta measures how well I - lambda C
can be inverted off the principal direction. For a normal operator it equals
the gap; for transport it does not.
"""
import numpy as np

from rtcrit import OperatorSet, SourceSolver, named_scenario
from rtcrit.spectral_diagnostics import (compute_theta, constant_budget, dense_eigendecompose,
                                         sandwich_check, spectral_projectors)

for name in ("const", "het", "ref"):
    grid, optics, _ = named_scenario(name)
    C = SourceSolver(OperatorSet(grid, optics)).dense_C()
    rep = dense_eigendecompose(C)
    compute_theta(rep, C)
    sw = sandwich_check(rep)
    print(f"{name:5s} mu1 {rep.mu1:.6f}  |mu2| {abs(rep.mu2):.6f}  Delta {rep.delta:.4f}  "
          f"theta {rep.theta:.4f}  dist(u1, u1*) {rep.dist:.3f}")
    print(f"      lower chain holds: {sw['lower']};  theta <= Delta_bar: "
          f"{sw['theta'] <= sw['delta_bar']};  theta <= (1-dist) Delta_bar: {sw['upper']}")

# a symmetric operator: every quantity in the chain coincides
X = np.random.default_rng(1).standard_normal((8, 8))
A = X @ X.T
rep = dense_eigendecompose(A)
compute_theta(rep, A)
sw = sandwich_check(rep)
print(f"\nsymmetric 8x8: Delta {rep.delta:.6f}  theta {sw['theta']:.6f}  rhs {sw['rhs']:.6f}")

grid, optics, _ = named_scenario("const")
C = SourceSolver(OperatorSet(grid, optics)).dense_C()
rep = dense_eigendecompose(C)
compute_theta(rep, C)
b = constant_budget(rep, C)
E1, E2 = spectral_projectors(rep, C)
Aw = C.weighted() / rep.mu1
X = E2.weighted()
print(f"\nSCEN-CONST: decay rate delta_bar = {b.delta_bar_power:.3f}, "
      f"l0 = {b.ell0_general} from the resolvent maximum, {b.ell0} from the Schatten bound")
for n in range(1, 31):
    X = Aw @ X
    if n % 5 == 0:
        print(f"  n = {n:2d}: ||(C/mu1)^n E2|| = {np.linalg.norm(X, 2):.2e}, "
              f"delta_bar^(n-l0) = {b.delta_bar_power ** (n - b.ell0_general):.2e}")
