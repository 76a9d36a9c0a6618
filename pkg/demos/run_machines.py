"""Run one program on every concrete machine and compare the outcomes.

    python3 demos/run_machines.py [corpus/pure/church-3-run.scm]
"""

import sys
from pathlib import Path

from aam.concrete import run_machine
from aam.reference import eval_reference
from aam.syntax import parse_file, unparse

ROOT = Path(__file__).resolve().parent.parent
path = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "corpus" / "pure" / "church-3-run.scm"
program = parse_file(path)
print("program:", unparse(program))

print("reference:", eval_reference(program, 10_000))
for mode in ("cek", "cesk"):
    r = run_machine(program, mode, 10_000, keep_trace=False)
    print(f"{mode:>9}: {r.result}  ({r.steps} steps)")

# With collection, the store only ever holds what the current state can reach.
plain = run_machine(program, "cesk", 10_000)
free = run_machine(program, "cesk", 10_000, gc=True)
print("largest store without gc:", max(len(s.store) for s in plain.trace))
print("largest store with gc:   ", max(len(s.store) for s in free.trace))
