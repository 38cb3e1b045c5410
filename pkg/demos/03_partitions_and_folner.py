# coding: utf-8

# # Partitions into infinite blocks, and amenability
#
# A cover by r-balls that are all infinite can be turned into a partition
# whose blocks sit inside 3r-balls.

# In[1]:

from fractions import Fraction

from roekuiper import SpaceSpec, realize_window
from roekuiper.errors import NotCiubb
from roekuiper.partition import (ciubb_to_piubs, find_ciubb, folner_search, paradoxical_check,
                                 verify_piubs)

fib = realize_window(SpaceSpec.fibered_line(), {"n": 4, "fibers": 5})
cover = find_ciubb(fib, 1)
part = ciubb_to_piubs(cover)
print(cover.centers)
print(part.r, [len(b) for b in part.blocks], verify_piubs(part).ok)


# On exponential blocks the greedy cover fails and names a finite ball.

# In[2]:

E = SpaceSpec.exponential_blocks()
try:
    find_ciubb(realize_window(E, {"blocks": 5}), 2)
except NotCiubb as exc:
    print(exc.witness["center"], exc.witness["cardinality"])


# Folner ratios: boxes in the plane get thin boundaries, while block intervals
# in the exponential space never go below 1/4 at R = 2.

# In[3]:

lat = realize_window(SpaceSpec.integer_lattice(2), {"n": 11})
rep = folner_search(lat, 1, Fraction(1, 5))
print(rep.verdict, rep.best[0], rep.best[3])

rep = folner_search(realize_window(E, {"blocks": 8}), 2, Fraction(1, 5))
print(rep.verdict, rep.best[3], float(rep.best[3]))


# The map n -> n // 2 is two-to-one with displacement at most 2, a
# paradoxical decomposition of the exponential space.

# In[4]:

par = paradoxical_check(realize_window(E, {"blocks": 6}))
print(par.ok, par.max_displacement, set(par.fiber_sizes.values()))
