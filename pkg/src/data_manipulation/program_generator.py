"""
Program Generator Module for the Symmetry Toolkit

This module produces seeded random IR programs for audits and synthetic
corpora: straight-line assignments, loads and stores, forward branches over
short bodies and bounded counting loops.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, List

import numpy as np

from program.ir import BINARY_OPERATORS, CodeUnit, parse

logger = logging.getLogger(__name__)

VARIABLE_POOL = ("a", "b", "c", "d")


@dataclass(frozen=True)
class GeneratorConfig:
    """
    Random program shape.

    Attributes:
        min_instructions: smallest program length
        max_instructions: largest program length
        pool_size: number of ordinary variables (drawn from a, b, c, d, ...)
        branch_probability: chance that the next block is a forward branch
        back_edge_probability: chance that the next block is a counting loop
        memory_probability: chance that a straight-line instruction is a load or store
        halt_probability: chance that the program ends with halt
        max_literal: largest integer literal
        max_body: largest straight-line body inside a branch or loop
    """

    min_instructions: int = 2
    max_instructions: int = 16
    pool_size: int = 4
    branch_probability: float = 0.2
    back_edge_probability: float = 0.05
    memory_probability: float = 0.15
    halt_probability: float = 0.05
    max_literal: int = 9
    max_body: int = 3

    def __post_init__(self):
        if not 1 <= self.min_instructions <= self.max_instructions:
            raise ValueError("need 1 <= min_instructions <= max_instructions")
        if not 1 <= self.pool_size <= 26:
            raise ValueError("pool_size must be within [1, 26]")
        for name in ("branch_probability", "back_edge_probability", "memory_probability", "halt_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")

    @property
    def variables(self) -> List[str]:
        extra = [chr(c) for c in range(ord("e"), ord("z") + 1)]
        return (list(VARIABLE_POOL) + extra)[:self.pool_size]

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})


class ProgramGenerator:
    """
    Seeded random program source.

    Every branch target is a label defined later (forward branch) or a loop
    head guarded by a decrementing counter, so every program terminates.
    """

    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        self.config = config

    def _operand(self, rng: np.random.Generator) -> str:
        if rng.random() < 0.3:
            return str(int(rng.integers(0, self.config.max_literal + 1)))
        return str(rng.choice(self.config.variables))

    def _straight(self, rng: np.random.Generator) -> str:
        variables = self.config.variables
        dest = str(rng.choice(variables))
        if rng.random() < self.config.memory_probability:
            return f"{dest} = load" if rng.random() < 0.5 else f"store {dest}"
        shape = rng.random()
        if shape < 0.25:
            return f"{dest} = {int(rng.integers(0, self.config.max_literal + 1))}"
        if shape < 0.45:
            return f"{dest} = {rng.choice(variables)}"
        op = str(rng.choice(BINARY_OPERATORS))
        return f"{dest} = {rng.choice(variables)} {op} {self._operand(rng)}"

    def _body(self, rng: np.random.Generator, room: int) -> List[str]:
        size = int(rng.integers(1, min(room, self.config.max_body) + 1))
        return [self._straight(rng) for _ in range(size)]

    def generate_lines(self, rng: np.random.Generator) -> List[str]:
        cfg = self.config
        target = int(rng.integers(cfg.min_instructions, cfg.max_instructions + 1))
        lines: List[str] = []
        blocks = 0
        while len(lines) < target:
            remaining = target - len(lines)
            draw = rng.random()
            if draw < cfg.back_edge_probability and remaining >= 6:
                # counter init, head label, body, decrement, test, back-edge
                label, counter, test = f"L{blocks}", f"k{blocks}", f"t{blocks}"
                lines.append(f"{counter} = {int(rng.integers(1, 4))}")
                lines.append(f"{label}:")
                lines.extend(self._body(rng, remaining - 5))
                lines.append(f"{counter} = {counter} - 1")
                lines.append(f"{test} = 0 < {counter}")
                lines.append(f"if {test} goto {label}")
                blocks += 1
            elif draw < cfg.back_edge_probability + cfg.branch_probability and remaining >= 3:
                label = f"L{blocks}"
                lines.append(f"if {rng.choice(cfg.variables)} goto {label}")
                lines.extend(self._body(rng, remaining - 2))
                lines.append(f"{label}:")
                blocks += 1
            elif remaining == 1 and len(lines) > 0 and rng.random() < cfg.halt_probability:
                lines.append("halt")
            else:
                lines.append(self._straight(rng))
        return lines

    def generate(self, rng: np.random.Generator) -> CodeUnit:
        return parse("\n".join(self.generate_lines(rng)))

    def generate_many(self, count: int, seed: int) -> List[CodeUnit]:
        rng = np.random.default_rng(seed)
        programs = [self.generate(rng) for _ in range(count)]
        logger.debug(f"Generated {count} programs with seed {seed}")
        return programs
