from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

from mcomp.dsl import CompositionSpec, parse_spec
from mcomp.engine import ExecutionResult, execute
from mcomp.model import Metamodel, Model, read_metamodel, read_model
from mcomp.trace import TraceModel, trace_execution

FIXTURES = Path(__file__).parent / "fixtures"
SCENARIO = FIXTURES / "scenario"
VARIANTS = FIXTURES / "variants"
DIAMOND = FIXTURES / "diamond"
GOLDEN = FIXTURES / "golden"

sys.path.insert(0, str(Path(__file__).parent))


@dataclass
class Setup:
    spec: CompositionSpec
    left: Model
    right: Model
    metamodels: dict[str, Metamodel]

    def run(self) -> ExecutionResult:
        return execute(self.spec, self.left, self.right, self.metamodels)

    def trace(self) -> tuple[ExecutionResult, TraceModel]:
        result = self.run()
        return result, trace_execution(result)


def scenario_metamodels() -> dict[str, Metamodel]:
    mms = [read_metamodel(SCENARIO / "entities.mm.json"), read_metamodel(SCENARIO / "vocabulary.mm.json")]
    return {mm.name: mm for mm in mms}


def load_setup(spec: Path, left: Path, right: Path, mm_paths: list[Path] | None = None) -> Setup:
    if mm_paths is None:
        mms = scenario_metamodels()
    else:
        mms = {mm.name: mm for mm in map(read_metamodel, mm_paths)}
    return Setup(parse_spec(spec.read_text()), read_model(left, mms), read_model(right, mms), mms)


def scenario_setup(spec: str = "compose.mcomp", right: Path | None = None) -> Setup:
    spec_path = SCENARIO / spec if (SCENARIO / spec).exists() else VARIANTS / spec
    return load_setup(spec_path, SCENARIO / "left.json", right or SCENARIO / "right.json")


def diamond_setup() -> Setup:
    return load_setup(DIAMOND / "compose.mcomp", DIAMOND / "left.json", DIAMOND / "right.json", [DIAMOND / "shelves.mm.json"])


@pytest.fixture
def scenario() -> Setup:
    return scenario_setup()


@pytest.fixture
def mms() -> dict[str, Metamodel]:
    return scenario_metamodels()
