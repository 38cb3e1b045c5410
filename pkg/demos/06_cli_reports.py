# coding: utf-8

# # Command line and reports
#
# Every command writes a canonical JSON report.  Here the entry point is
# called in-process; the shell equivalent is `roekuiper <args>`.

# In[1]:

import json
import os
import tempfile

from roekuiper.cli import run

d = tempfile.mkdtemp()
os.environ["REPORT_DIR"] = d
space = os.path.join(d, "fib.json")
print(run(["space", "gen", "--spec", "fibered", "--n", "3", "--fibers", "3", "--out", space]))
print(run(["classify", "piubs", "--space", space, "--r", "1"]))


# A failing property exits with code 1 and carries a witness.

# In[2]:

exp = os.path.join(d, "exp.json")
run(["space", "gen", "--spec", "expblocks", "--blocks", "4", "--out", exp])
print(run(["classify", "ciubb", "--space", exp, "--r", "2"]))
with open(os.path.join(d, "classify-ciubb.json")) as fh:
    rep = json.load(fh)
print(rep["verdict"], rep["witnesses"]["witness"]["cardinality"])


# Reports are byte-identical across runs with the same seed.

# In[3]:

run(["obstruct", "index", "--alpha", "shift+1"])
first = open(os.path.join(d, "obstruct-index.json"), "rb").read()
run(["obstruct", "index", "--alpha", "shift+1"])
print(first == open(os.path.join(d, "obstruct-index.json"), "rb").read())
print(json.loads(first)["result"]["value"])
