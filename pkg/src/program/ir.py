"""
Instruction Language Module for the Symmetry Toolkit

This module defines the small three-address instruction language used as
the stand-in for real code, its tokenizer/parser, a canonical renderer and
the reference interpreter used as the semantics oracle when checking that a
reordering of a code unit keeps its input-output behavior.

Grammar (one instruction per line or `;`-separated, `#` starts a comment):

    var = const        var = atom op atom      var = var
    var = load         store var               if var goto LABEL
    LABEL:             halt

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import re
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

# Location name of the single, all-aliasing memory cell
MEMORY = "@mem"

KEYWORDS = frozenset({"load", "store", "if", "goto", "halt"})
BINARY_OPERATORS = ("+", "-", "*", "<", "==")
DEFAULT_FUEL = 10_000

_INT64_MIN = -(2 ** 63)
_VARIABLE_RE = re.compile(r"[a-z][a-z0-9]*\Z")
_TOKEN_RE = re.compile(r"\s*(?:(==)|([=+\-*<:])|([A-Za-z][A-Za-z0-9]*)|([0-9]+)|(\S))")

Operand = Union[str, int]


class InstructionKind(str, Enum):
    ASSIGN_CONST = "assign-const"
    ASSIGN_BINOP = "assign-binop"
    ASSIGN_COPY = "assign-copy"
    LOAD = "load"
    STORE = "store"
    BRANCH = "branch"
    LABEL = "label"
    HALT = "halt"


class ParseError(ValueError):
    """Raised when instruction text does not follow the grammar."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        location = f"line {line}, column {column}: " if line else ""
        super().__init__(f"{location}{message}")


class DuplicateLabelError(ParseError):
    pass


class UnresolvedLabelError(ParseError):
    pass


class InterpreterError(RuntimeError):
    pass


class FuelExhaustedError(InterpreterError):
    pass


class UndefinedVariableError(InterpreterError):
    pass


def wrap_int64(value: int) -> int:
    """Wrap an unbounded integer to signed 64-bit two's complement."""
    return ((value - _INT64_MIN) % (2 ** 64)) + _INT64_MIN


def is_variable(name: str) -> bool:
    return bool(_VARIABLE_RE.match(name)) and name not in KEYWORDS


@dataclass(frozen=True)
class Instruction:
    """
    One instruction of a code unit.

    Attributes:
        index: 0-based position in source order
        kind: instruction kind
        dest: written variable (assignments and loads)
        operands: read variable names or integer literals
        op: binary operator (assign-binop only)
        target: branch target label (branch only)
        label: label name (label only)
    """

    index: int
    kind: InstructionKind
    dest: Optional[str] = None
    operands: Tuple[Operand, ...] = ()
    op: Optional[str] = None
    target: Optional[str] = None
    label: Optional[str] = None

    def tokens(self) -> Tuple[str, ...]:
        kind = self.kind
        if kind is InstructionKind.ASSIGN_CONST or kind is InstructionKind.ASSIGN_COPY:
            return (self.dest, "=", str(self.operands[0]))
        if kind is InstructionKind.ASSIGN_BINOP:
            left, right = self.operands
            return (self.dest, "=", str(left), self.op, str(right))
        if kind is InstructionKind.LOAD:
            return (self.dest, "=", "load")
        if kind is InstructionKind.STORE:
            return ("store", str(self.operands[0]))
        if kind is InstructionKind.BRANCH:
            return ("if", str(self.operands[0]), "goto", self.target)
        if kind is InstructionKind.LABEL:
            return (self.label, ":")
        return ("halt",)

    def text(self) -> str:
        if self.kind is InstructionKind.LABEL:
            return f"{self.label}:"
        return " ".join(self.tokens())

    def reads(self) -> FrozenSet[str]:
        """Locations read by this instruction (the memory cell included)."""
        names = {operand for operand in self.operands if isinstance(operand, str)}
        if self.kind is InstructionKind.LOAD:
            names.add(MEMORY)
        return frozenset(names)

    def writes(self) -> FrozenSet[str]:
        if self.kind is InstructionKind.STORE:
            return frozenset({MEMORY})
        if self.dest is not None:
            return frozenset({self.dest})
        return frozenset()

    @property
    def is_barrier(self) -> bool:
        return self.kind in (InstructionKind.LABEL, InstructionKind.BRANCH, InstructionKind.HALT)


@dataclass(frozen=True)
class CodeUnit:
    """
    A parsed code representation unit: ordered instructions plus token stream.

    Attributes:
        instructions: instructions in source order
        tokens: flattened token list
        token_owner: token index -> instruction index
        intra_pos: token index -> 1-based position within its instruction
    """

    instructions: Tuple[Instruction, ...]
    tokens: Tuple[str, ...]
    token_owner: Tuple[int, ...]
    intra_pos: Tuple[int, ...]

    @classmethod
    def from_instructions(cls, instructions: Sequence[Instruction]) -> "CodeUnit":
        """Reindex instructions in the given order and recompute the token stream."""
        ordered = tuple(replace(ins, index=i) for i, ins in enumerate(instructions))
        tokens: List[str] = []
        owner: List[int] = []
        positions: List[int] = []
        for ins in ordered:
            for pos, token in enumerate(ins.tokens(), start=1):
                tokens.append(token)
                owner.append(ins.index)
                positions.append(pos)
        return cls(ordered, tuple(tokens), tuple(owner), tuple(positions))

    @property
    def n(self) -> int:
        return len(self.instructions)

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    @property
    def block_sizes(self) -> Tuple[int, ...]:
        return tuple(len(ins.tokens()) for ins in self.instructions)

    @property
    def labels(self) -> Dict[str, int]:
        return {ins.label: ins.index for ins in self.instructions if ins.kind is InstructionKind.LABEL}

    @property
    def variables(self) -> FrozenSet[str]:
        names = set()
        for ins in self.instructions:
            names |= ins.reads() | ins.writes()
        names.discard(MEMORY)
        return frozenset(names)

    @property
    def input_variables(self) -> FrozenSet[str]:
        """Variables read anywhere in the unit; these form the interpreter input."""
        names = set()
        for ins in self.instructions:
            names |= ins.reads()
        names.discard(MEMORY)
        return frozenset(names)

    def render(self) -> str:
        return "\n".join(ins.text() for ins in self.instructions)


@dataclass(frozen=True, eq=False)
class Store:
    """Interpreter state: variable values plus the single memory cell."""

    vars: Mapping[str, int] = field(default_factory=dict)
    mem: int = 0

    def __post_init__(self):
        values = {name: wrap_int64(int(value)) for name, value in sorted(dict(self.vars).items())}
        object.__setattr__(self, "vars", MappingProxyType(values))
        object.__setattr__(self, "mem", wrap_int64(int(self.mem)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Store):
            return NotImplemented
        return self.mem == other.mem and dict(self.vars) == dict(other.vars)

    def __hash__(self) -> int:
        return hash((self.mem, tuple(self.vars.items())))

    def to_dict(self) -> Dict[str, object]:
        return {"mem": self.mem, "vars": dict(self.vars)}


def _tokenize_statement(text: str, line: int, offset: int) -> List[Tuple[str, int]]:
    tokens = []
    position = 0
    while position < len(text):
        match = _TOKEN_RE.match(text, position)
        if match is None or match.end() == position:
            break
        if match.group(5) is not None:
            column = offset + match.start(5) + 1
            raise ParseError(f"unexpected character {match.group(5)!r}", line, column)
        lexeme = next(group for group in match.groups()[:4] if group is not None)
        start = next(match.start(g) for g in range(1, 5) if match.group(g) is not None)
        tokens.append((lexeme, offset + start + 1))
        position = match.end()
    return tokens


def _split_statements(source: str) -> List[Tuple[List[Tuple[str, int]], int]]:
    statements = []
    for line_number, raw_line in enumerate(source.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        offset = 0
        for chunk in line.split(";"):
            tokens = _tokenize_statement(chunk, line_number, offset)
            if tokens:
                statements.append((tokens, line_number))
            offset += len(chunk) + 1
    return statements


def _atom(lexeme: str, line: int, column: int) -> Operand:
    if lexeme.isdigit():
        return int(lexeme)
    if is_variable(lexeme):
        return lexeme
    raise ParseError(f"expected variable or literal, got {lexeme!r}", line, column)


def _variable(lexeme: str, line: int, column: int) -> str:
    if not is_variable(lexeme):
        raise ParseError(f"expected variable name, got {lexeme!r}", line, column)
    return lexeme


def _parse_statement(tokens: List[Tuple[str, int]], line: int, index: int) -> Instruction:
    words = [lexeme for lexeme, _ in tokens]
    columns = [column for _, column in tokens]
    count = len(words)

    if count == 2 and words[1] == ":":
        if words[0] in KEYWORDS or not words[0][0].isalpha():
            raise ParseError(f"invalid label name {words[0]!r}", line, columns[0])
        return Instruction(index, InstructionKind.LABEL, label=words[0])
    if words == ["halt"]:
        return Instruction(index, InstructionKind.HALT)
    if count == 2 and words[0] == "store":
        return Instruction(index, InstructionKind.STORE, operands=(_variable(words[1], line, columns[1]),))
    if count == 4 and words[0] == "if" and words[2] == "goto":
        target = words[3]
        if target in KEYWORDS or not target[0].isalpha():
            raise ParseError(f"invalid branch target {target!r}", line, columns[3])
        return Instruction(
            index, InstructionKind.BRANCH,
            operands=(_variable(words[1], line, columns[1]),), target=target,
        )
    if count >= 3 and words[1] == "=":
        dest = _variable(words[0], line, columns[0])
        if count == 3:
            if words[2] == "load":
                return Instruction(index, InstructionKind.LOAD, dest=dest)
            value = _atom(words[2], line, columns[2])
            kind = InstructionKind.ASSIGN_CONST if isinstance(value, int) else InstructionKind.ASSIGN_COPY
            return Instruction(index, kind, dest=dest, operands=(value,))
        if count == 5:
            if words[3] not in BINARY_OPERATORS:
                raise ParseError(f"unknown operator {words[3]!r}", line, columns[3])
            left = _atom(words[2], line, columns[2])
            right = _atom(words[4], line, columns[4])
            return Instruction(index, InstructionKind.ASSIGN_BINOP, dest=dest, operands=(left, right), op=words[3])
        column = columns[5] if count > 5 else columns[-1]
        raise ParseError("malformed assignment", line, column)
    raise ParseError(f"unrecognised instruction starting with {words[0]!r}", line, columns[0])


def parse(source: str) -> CodeUnit:
    """
    Parse instruction text into a CodeUnit.

    Args:
        source: newline- or semicolon-separated instruction text

    Returns:
        CodeUnit with tokens, ownership and intra-instruction positions

    Raises:
        ParseError: on syntax errors (with line and column)
        DuplicateLabelError: when a label is defined twice
        UnresolvedLabelError: when a branch targets an unknown label
    """
    instructions = []
    where = []
    for tokens, line in _split_statements(source):
        instructions.append(_parse_statement(tokens, line, len(instructions)))
        where.append((line, tokens[0][1]))

    seen: Dict[str, int] = {}
    for ins, (line, column) in zip(instructions, where):
        if ins.kind is InstructionKind.LABEL:
            if ins.label in seen:
                raise DuplicateLabelError(f"duplicate label {ins.label!r}", line, column)
            seen[ins.label] = ins.index
    for ins, (line, column) in zip(instructions, where):
        if ins.kind is InstructionKind.BRANCH and ins.target not in seen:
            raise UnresolvedLabelError(f"branch target {ins.target!r} is not defined", line, column)

    unit = CodeUnit.from_instructions(instructions)
    logger.debug(f"Parsed {unit.n} instructions, {unit.num_tokens} tokens")
    return unit


def render(unit: CodeUnit) -> str:
    return unit.render()


def _value(operand: Operand, env: Dict[str, int], pc: int) -> int:
    if isinstance(operand, int):
        return operand
    if operand not in env:
        raise UndefinedVariableError(f"instruction {pc} reads undefined variable {operand!r}")
    return env[operand]


def _binop(op: str, left: int, right: int) -> int:
    if op == "+":
        return wrap_int64(left + right)
    if op == "-":
        return wrap_int64(left - right)
    if op == "*":
        return wrap_int64(left * right)
    if op == "<":
        return int(left < right)
    return int(left == right)


def interpret(unit: CodeUnit, store: Store, fuel: int = DEFAULT_FUEL) -> Store:
    """
    Run a code unit to completion.

    Args:
        unit: code unit to execute
        store: input variables and memory cell
        fuel: maximum number of executed instructions

    Returns:
        Final Store after `halt` or falling off the end

    Raises:
        FuelExhaustedError: when more than `fuel` steps are needed
        UndefinedVariableError: on a read of an absent variable
    """
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    env = dict(store.vars)
    mem = store.mem
    labels = unit.labels
    instructions = unit.instructions
    pc = 0
    steps = 0
    while pc < len(instructions):
        if steps >= fuel:
            raise FuelExhaustedError(f"fuel of {fuel} steps exhausted at instruction {pc}")
        steps += 1
        ins = instructions[pc]
        kind = ins.kind
        if kind is InstructionKind.HALT:
            break
        if kind is InstructionKind.ASSIGN_CONST or kind is InstructionKind.ASSIGN_COPY:
            env[ins.dest] = wrap_int64(_value(ins.operands[0], env, pc))
        elif kind is InstructionKind.ASSIGN_BINOP:
            left = _value(ins.operands[0], env, pc)
            right = _value(ins.operands[1], env, pc)
            env[ins.dest] = _binop(ins.op, left, right)
        elif kind is InstructionKind.LOAD:
            env[ins.dest] = mem
        elif kind is InstructionKind.STORE:
            mem = _value(ins.operands[0], env, pc)
        elif kind is InstructionKind.BRANCH:
            if _value(ins.operands[0], env, pc) != 0:
                pc = labels[ins.target]
                continue
        pc += 1
    return Store(env, mem)


class Verdict(str, Enum):
    EQUIVALENT = "equivalent"
    INEQUIVALENT = "inequivalent"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class EquivalenceResult:
    verdict: Verdict
    trials: int
    witness: Optional[Store] = None
    detail: str = ""

    @property
    def equivalent(self) -> bool:
        return self.verdict is Verdict.EQUIVALENT


def random_store(variables: Sequence[str], rng: np.random.Generator, low: int = -16, high: int = 16) -> Store:
    values = rng.integers(low, high + 1, size=len(variables) + 1)
    return Store({name: int(v) for name, v in zip(variables, values[1:])}, int(values[0]))


def io_equivalent(
    first: CodeUnit,
    second: CodeUnit,
    trials: int = 50,
    seed: int = 0,
    fuel: int = DEFAULT_FUEL,
) -> EquivalenceResult:
    """
    Compare two units on seeded random inputs.

    Args:
        first: reference unit
        second: candidate unit
        trials: number of random input stores
        seed: RNG seed for the input stores
        fuel: interpreter step bound per run

    Returns:
        EquivalenceResult; a mismatch carries the witness input, interpreter
        failures give an INCONCLUSIVE verdict instead of raising
    """
    variables = sorted(first.input_variables | second.input_variables)
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        store = random_store(variables, rng)
        try:
            expected = interpret(first, store, fuel)
            actual = interpret(second, store, fuel)
        except InterpreterError as e:
            return EquivalenceResult(Verdict.INCONCLUSIVE, trial + 1, store, str(e))
        if expected != actual:
            return EquivalenceResult(
                Verdict.INEQUIVALENT, trial + 1, store,
                f"final stores differ: {expected.to_dict()} vs {actual.to_dict()}",
            )
    return EquivalenceResult(Verdict.EQUIVALENT, trials)
