"""Abstract machines and the control-flow analyses derived from them.

The pipeline runs from substitution-based reduction, through the CEK and
time-stamped CESK* machines, to a finite abstract machine whose reachable
states (optionally garbage collected) form the analysis result.
"""

from .abstract import (
    AbstractState,
    AbstractStore,
    BindAddr,
    KCFAPolicy,
    KontAddr,
    abs_step,
    alpha_state,
    leq_state,
    policy_k_cfa,
    policy_zero_cfa,
    store_join,
)
from .concrete import (
    CekState,
    CeskState,
    CounterAllocator,
    HistoryAllocator,
    inject_cek,
    inject_ceskt,
    run_machine,
    step_cek,
    step_ceskt,
    unload_cek,
    unload_ceskt,
)
from .domains import Final, Stuck, Timeout
from .engine import analyze, export_graph, flows_at, soundness_check
from .gc import collect, gc_fixpoint, gc_step, live_locs
from .reference import eval_reference
from .syntax import check_closed, free_vars, parse, parse_file, unparse

__version__ = "0.1.0"
