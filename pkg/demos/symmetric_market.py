"""
A two-type marriage market
==========================

Two types of men and women in equal numbers, with a surplus of 1 when
partners share a type and 0 otherwise. Heterogeneity pulls the optimal
matching away from perfect sorting toward random matching.
"""

import numpy as np

from tumatch import Margins, mutual_information, potentials_to_UV, solve_ipfp, solve_lp, welfare

margins = Margins.uniform(2)
phi = np.eye(2)

# without heterogeneity everyone marries their own type
lp = solve_lp(phi, margins)
print("sigma = 0")
print(lp.pi0)

# with heterogeneity the same-type share falls to e / (e + 1)
for sigma in (0.25, 1.0, 4.0):
    sol = solve_ipfp(phi, margins, sigma)
    share = 2 * sol.pi[0, 0]
    print(f"sigma = {sigma:<5} same-type share {share:.6f}  I = {sol.mutual_information:.6f}  "
          f"welfare = {welfare(sol):.6f}")

sol = solve_ipfp(phi, margins, 1.0)
print("closed form e/(e+1) =", np.e / (np.e + 1))

# the split of the surplus between partners; U + V = phi
U, V = potentials_to_UV(sol, (0.5, 0.5))
print("U =\n", U)
print("V =\n", V)

# mutual information is the KL divergence from random matching
print("I check:", mutual_information(sol.pi), sol.mutual_information)
