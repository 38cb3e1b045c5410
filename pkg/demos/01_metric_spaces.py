# coding: utf-8

# # Metric spaces and windows
#
# Every computation runs on a finite window of an infinite space.  A
# `SpaceSpec` names the space; `realize_window` cuts out a finite piece and
# stores exact distances as integers over a common denominator.

# In[1]:

from roekuiper import SpaceSpec, ball, boundary_set, is_r_sparse, realize_window, validate_metric

Z = SpaceSpec.integer_line()
w = realize_window(Z, {"n": 5})
print(w.labels)
print(w.d(w.index[-5], w.index[5]))


# Balls know whether they are infinite in the full space, even when the
# window only shows part of them.  On the fibered line each point has a whole
# fiber at distance 1.

# In[2]:

fib = realize_window(SpaceSpec.fibered_line(), {"n": 3, "fibers": 4})
b = ball(fib, (0, 0), 1)
print(b.infinite, len(b.labels))


# The exponential-blocks space has blocks X_k of size 2^(|k|-1).  Small balls
# there are finite, which is what makes it a counterexample later on.

# In[3]:

E = SpaceSpec.exponential_blocks()
we = realize_window(E, {"blocks": 3})
print(ball(we, 0, 1).labels, ball(we, 5, 1).labels)


# Boundaries come in three readings.  The default keeps points strictly
# closer than R to Y and at most R from its complement.

# In[4]:

wl = realize_window(Z, {"n": 20})
for mode in ("inner", "closed", "strict"):
    print(mode, boundary_set(wl, range(10), 2, mode))


# An r-sparse set is one whose points are isolated at scale r.

# In[5]:

S = SpaceSpec.sparse_augmented(Z, 10)
ws = realize_window(S, {"base": {"n": 3}, "tail": 5})
tail = [x for x in ws.labels if x[0] == 1]
print(bool(is_r_sparse(S, tail, 5, ws)), bool(is_r_sparse(S, tail, 10, ws)))


# Every built-in window passes an exhaustive triangle check.

# In[6]:

print(validate_metric(ws).ok, validate_metric(we).ok)
