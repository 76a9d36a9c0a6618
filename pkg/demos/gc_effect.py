"""Show how abstract garbage collection changes the size of the state graph.

    python3 demos/gc_effect.py [program names from the corpus...]
"""

import sys
from pathlib import Path

from aam.abstract import policy_k_cfa
from aam.engine import analyze
from aam.syntax import parse_file

ROOT = Path(__file__).resolve().parent.parent
names = sys.argv[1:] or ["two-call-site-id", "church-2-run", "mult-2-2-run", "callcc-reenter-once", "omega-3"]

print(f"{'program':<22}{'k':>3}{'no gc':>10}{'gc':>10}")
for name in names:
    path = next(ROOT.glob(f"corpus/*/{name}.scm"))
    program = parse_file(path)
    for k in (0, 1):
        sizes = [len(analyze(program, policy_k_cfa(program, k), gc=gc).nodes) for gc in ("none", "free")]
        print(f"{name:<22}{k:>3}{sizes[0]:>10}{sizes[1]:>10}")
