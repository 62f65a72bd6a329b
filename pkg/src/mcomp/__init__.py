"""Rule-based composition of two models into one, with a traceability graph
recording which rule produced which composed element and which rule calls
nested inside which."""

from mcomp.dsl import check_spec, parse_spec, print_spec
from mcomp.engine import ExecutionResult, execute
from mcomp.model import Metamodel, Model, load_metamodel, load_model, read_metamodel, read_model
from mcomp.trace import TraceModel, export_dot, trace_execution
from mcomp.weaver import check_equivalence, weave_traceability

__all__ = [
    "ExecutionResult",
    "Metamodel",
    "Model",
    "TraceModel",
    "check_equivalence",
    "check_spec",
    "execute",
    "export_dot",
    "load_metamodel",
    "load_model",
    "parse_spec",
    "print_spec",
    "read_metamodel",
    "read_model",
    "trace_execution",
    "weave_traceability",
]
