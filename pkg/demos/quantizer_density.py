"""Uniform versus density-shaped scalar quantizers for a kappa = 1/2 source.

Prints rate and distortion for N = 1..31 levels with both node densities.
Odd level counts keep a node at zero, which is where the mass is.
"""

from epq import EpdParams, density_distortion_optimal, eval_rd, nodes_from_density, uniform_density

rho = EpdParams(0.5, 1.0)
uni = uniform_density(-10.0, 10.0)
opt = density_distortion_optimal(rho, 2.0)

print("  N   rate(uni)  mse(uni)   rate(opt)  mse(opt)")
for n in range(1, 32):
    a = eval_rd(rho, nodes_from_density(uni, n))
    b = eval_rd(rho, nodes_from_density(opt, n))
    print(f"{n:3d}  {a.rate:9.4f}  {a.distortion:9.4g}  {b.rate:9.4f}  {b.distortion:9.4g}")
