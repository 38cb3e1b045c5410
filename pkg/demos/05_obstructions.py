# coding: utf-8

# # Obstructions
#
# The corner index of a shift compressed to the nonnegative half line is a
# nonzero integer, stable across window sizes.

# In[1]:

import numpy as np

from roekuiper import SpaceSpec, SparseOperator, realize_window
from roekuiper.obstruction import (amplify, concat_loops, corner_index, deamplify, det_winding,
                                   integer_shift, phase_loop, reverse_loop, shift_from_bijection,
                                   trace_sequence)

Z = SpaceSpec.integer_line()
windows = [realize_window(Z, {"n": n}) for n in (64, 128)]
for k in (1, 2, -1):
    rep = corner_index(lambda w: shift_from_bijection(w, integer_shift(k), abs(k) + 1).V,
                       windows, lambda w: [x for x in w.labels if x >= 0])
    print(k, rep.value)


# Determinant winding of loops of invertible matrices.

# In[2]:

rng = np.random.default_rng(2)
a = phase_loop(3, 1, rng=rng)
b = [a[0] @ x for x in phase_loop(3, 2)]
print(det_winding(a).value, det_winding(reverse_loop(a)).value,
      det_winding(concat_loops(a, b)).value)


# Tracial averages along growing intervals.

# In[3]:

w = realize_window(Z, {"n": 40})
T = SparseOperator(w, np.diag([1.0 if x >= 0 else 0.0 for x in w.labels]))
seq = trace_sequence(T, [range(-h, h + 1) for h in (2, 5, 10, 20)])
print([round(v.real, 4) for v in seq.values], seq.behaviour)


# Operators on two copies of Z are 2x2 matrices of operators on Z.

# In[4]:

base = realize_window(Z, {"n": 3})
wp = realize_window(SpaceSpec.disjoint_power(Z, 2), {"base": {"n": 3}})
swap = {(i, x): (3 - i, x) for i in (1, 2) for x in base.labels}
from roekuiper.roe_operator import permutation_operator
Amp = amplify(permutation_operator(wp, swap), base)
print(Amp.as_array()[:2, 7:9])
print(np.array_equal(deamplify(Amp, wp).matrix, permutation_operator(wp, swap).matrix))
