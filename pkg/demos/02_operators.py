# coding: utf-8

# # Finite-propagation operators
#
# A `SparseOperator` is a matrix indexed by window points.  Its propagation is
# the largest distance between a row and a column carrying a nonzero entry.

# In[1]:

import numpy as np

from roekuiper import SpaceSpec, compose, realize_window, sparse_corner_decompose
from roekuiper import unitary_retraction
from roekuiper.roe_operator import random_band, shift_operator

rng = np.random.default_rng(0)
Z = SpaceSpec.integer_line()
w = realize_window(Z, {"n": 10})
S = shift_operator(w)
print(S.propagation)


# Composition checks subadditivity of propagation on every product.

# In[2]:

F = random_band(w, 2, rng)
G = random_band(w, 3, rng)
FG = compose(F, G)
print(F.propagation, G.propagation, FG.propagation)


# On a space with an r-sparse tail, an operator of propagation below r cannot
# move mass between the tail and the rest, and acts diagonally on the tail.

# In[3]:

ws = realize_window(SpaceSpec.sparse_augmented(Z, 10), {"base": {"n": 4}, "tail": 4})
tail = [x for x in ws.labels if x[0] == 1]
split = sparse_corner_decompose(random_band(ws, 4, rng), tail, 5)
print(split.F1.n, sorted(split.D)[:2])


# Invertible operators retract onto unitaries through the polar factor.  The
# inverse square root comes from a Jacobi eigensolver.

# In[4]:

T = random_band(w, 1, rng, diag_shift=3.0)
for t in (0.0, 0.5, 1.0):
    m = unitary_retraction(T, t).matrix
    print(t, np.abs(m @ m.conj().T - np.eye(w.n)).max())
