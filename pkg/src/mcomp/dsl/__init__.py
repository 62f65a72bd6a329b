"""Composition spec language: syntax tree, parser, checker and printer."""

from mcomp.dsl.ast import CompositionSpec, Rule, RuleKind
from mcomp.dsl.checker import check_spec
from mcomp.dsl.parser import parse_spec
from mcomp.dsl.printer import print_spec

__all__ = ["CompositionSpec", "Rule", "RuleKind", "check_spec", "parse_spec", "print_spec"]
