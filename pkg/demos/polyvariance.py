"""Compare what flows to a variable under 0CFA and 1CFA.

The identity function is called from two sites.  A monovariant analysis
merges both arguments at its parameter; one level of call history keeps
them apart.
"""

from aam.abstract import policy_k_cfa, policy_zero_cfa
from aam.engine import analyze, flows_at
from aam.syntax import Var, nodes, parse, unparse

program = parse("((λ (id) ((λ (a) (id (λ (w) w))) (id (λ (z) z)))) (λ (x) x))")
print("program:", unparse(program))
x = next(n.label for n in nodes(program) if isinstance(n, Var) and n.name == "x")

for name, policy in (("0cfa", policy_zero_cfa(program)), ("1cfa", policy_k_cfa(program, 1))):
    graph = analyze(program, policy, gc="free")
    fact = flows_at(graph, x)
    print(f"\n{name}: {len(graph.nodes)} states, x may be {sorted(fact.values)}")
    for address, values in sorted(fact.by_context.items(), key=str):
        print(f"    at {address}: {sorted(values)}")
