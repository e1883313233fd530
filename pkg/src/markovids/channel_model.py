"""State channels, Markov-IDS channels and a reproducible simulator.

A string over an alphabet of size ``q`` is a tuple of ints in ``range(q)``.
A :class:`StateChannel` maps each input symbol to a finite list of
``(output string, probability)`` pairs with bounded output length, which
covers deletions, insertions and substitutions.

Simulation uses ``numpy.random.Philox`` (counter-based) with an explicit
64-bit seed.  Draw order per transmitted symbol ``i`` is fixed: first one
uniform for the state (initial draw from ``rho`` when ``i == 0``, otherwise a
transition from the previous state), then one uniform for the symbol's
output.  A trial of length ``n`` therefore consumes exactly ``2 n`` doubles,
and a batch of trials consumes them trial after trial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

from .errors import InfeasibleParametersError, ValidationError
from .markov_core import CONSTRUCTION_TOL, MarkovChain, stationary_distribution, two_state_chain

Word = tuple[int, ...]

SYMBOLS = "0123456789abcdefghijklmnopqrstuvwxyz"


def word_to_str(w: Sequence[int]) -> str:
    return "".join(SYMBOLS[a] for a in w)


def str_to_word(s: str) -> Word:
    try:
        return tuple(SYMBOLS.index(c) for c in s)
    except ValueError:
        raise ValidationError(f"bad symbol in string {s!r}") from None


@dataclass(frozen=True)
class StateChannel:
    """Single-symbol IDS law ``W_1[sigma]``.

    ``law[x]`` is a tuple of ``(output word, probability)`` pairs with
    distinct words and positive probabilities.
    """

    input_alphabet_size: int
    output_alphabet_size: int
    law: tuple[tuple[tuple[Word, float], ...], ...]

    def __post_init__(self) -> None:
        if self.input_alphabet_size < 1 or self.output_alphabet_size < 1:
            raise ValidationError("alphabet sizes must be >= 1")
        if len(self.law) != self.input_alphabet_size:
            raise ValidationError(
                f"law has {len(self.law)} entries for an input alphabet of size {self.input_alphabet_size}"
            )
        cleaned = []
        for x, outcomes in enumerate(self.law):
            merged: dict[Word, float] = {}
            for y, pr in outcomes:
                y = tuple(int(a) for a in y)
                if any(a < 0 or a >= self.output_alphabet_size for a in y):
                    raise ValidationError(f"input {x}: output {y} leaves the output alphabet")
                pr = float(pr)
                if not 0.0 <= pr <= 1.0:
                    raise ValidationError(f"input {x}: probability {pr!r} outside [0, 1]")
                merged[y] = merged.get(y, 0.0) + pr
            total = sum(merged.values())
            if abs(total - 1.0) > CONSTRUCTION_TOL:
                raise ValidationError(f"input {x}: output probabilities sum to {total!r}")
            cleaned.append(tuple(sorted(((y, p) for y, p in merged.items() if p > 0), key=lambda t: (len(t[0]), t[0]))))
        object.__setattr__(self, "law", tuple(cleaned))

    @property
    def max_output_len(self) -> int:
        return max(len(y) for outcomes in self.law for y, _ in outcomes)

    def expected_length(self, x: int) -> float:
        return sum(len(y) * p for y, p in self.law[x])

    def prob(self, x: int, y: Word) -> float:
        for w, p in self.law[x]:
            if w == y:
                return p
        return 0.0

    @property
    def deletion_probability(self) -> float | None:
        """``d`` if this is a pure deletion channel (output is ``()`` or ``(x,)``), else ``None``."""
        if self.input_alphabet_size != self.output_alphabet_size:
            return None
        d = None
        for x, outcomes in enumerate(self.law):
            this = 0.0
            for y, p in outcomes:
                if y == ():
                    this = p
                elif y != (x,):
                    return None
            if d is None:
                d = this
            elif d != this:
                return None
        return d


def make_deletion_state(d: float, alphabet_size: int = 2) -> StateChannel:
    """Deletion channel: empty output with probability ``d``, else the input symbol."""
    if not 0.0 <= d <= 1.0:
        raise ValidationError(f"deletion probability {d!r} outside [0, 1]")
    law = tuple((((), d), ((x,), 1.0 - d)) for x in range(alphabet_size))
    return StateChannel(alphabet_size, alphabet_size, law)


def make_state_channel(
    law: Sequence[Mapping[str | Word, float]],
    output_alphabet_size: int | None = None,
) -> StateChannel:
    """Build a state channel from per-input mappings ``{output: prob}``.

    Outputs may be words or symbol strings (``"01"``).  The output alphabet
    defaults to the input alphabet.
    """
    rows = []
    for mapping in law:
        rows.append(tuple((str_to_word(y) if isinstance(y, str) else tuple(y), float(p)) for y, p in mapping.items()))
    q = len(law) if output_alphabet_size is None else output_alphabet_size
    return StateChannel(len(law), q, tuple(rows))


@dataclass(frozen=True, eq=False)
class MarkovIDSChannel:
    """FSMC with one state channel per Markov state; outputs are glued.

    ``initial`` is the distribution of the first symbol's state; ``None``
    means the stationary distribution.
    """

    chain: MarkovChain
    states: tuple[StateChannel, ...]
    initial: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) != self.chain.s:
            raise ValidationError(f"{len(self.states)} state channels for a {self.chain.s}-state chain")
        X = {st.input_alphabet_size for st in self.states}
        if len(X) != 1:
            raise ValidationError("state channels disagree on the input alphabet")
        if self.initial is not None:
            rho = np.asarray(self.initial, dtype=float)
            if rho.shape != (self.chain.s,) or np.any(rho < 0) or abs(rho.sum() - 1.0) > CONSTRUCTION_TOL:
                raise ValidationError(f"initial distribution {rho} is not on the simplex")
            rho = rho.copy()
            rho.setflags(write=False)
            object.__setattr__(self, "initial", rho)

    @property
    def s(self) -> int:
        return self.chain.s

    @property
    def input_alphabet_size(self) -> int:
        return self.states[0].input_alphabet_size

    @property
    def output_alphabet_size(self) -> int:
        return max(st.output_alphabet_size for st in self.states)

    @property
    def max_output_len(self) -> int:
        return max(st.max_output_len for st in self.states)

    @property
    def rho(self) -> np.ndarray:
        if self.initial is None:
            return stationary_distribution(self.chain)
        return np.asarray(self.initial)

    @property
    def deletion_probs(self) -> np.ndarray | None:
        ds = [st.deletion_probability for st in self.states]
        if any(d is None for d in ds):
            return None
        return np.array(ds, dtype=float)

    def with_initial(self, rho: np.ndarray | None) -> "MarkovIDSChannel":
        return MarkovIDSChannel(self.chain, self.states, rho)


@dataclass(frozen=True)
class TwoStateDeletionParams:
    """Two-state deletion model: low ``d`` in state 0, high ``D`` in state 1."""

    alpha: float
    beta: float
    d: float
    D: float

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "d", "D"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InfeasibleParametersError(f"{name}={v:g} infeasible")

    @property
    def delta(self) -> float:
        """Average deletion probability under the stationary law."""
        return (self.alpha * self.D + self.beta * self.d) / (self.alpha + self.beta)

    @property
    def ratio(self) -> float:
        return self.D / self.d if self.d > 0 else float("nan")


def resolve_two_state_params(delta: float, ratio: float, alpha: float, beta: float) -> TwoStateDeletionParams:
    """Solve ``delta = (alpha D + beta d)/(alpha + beta)`` with ``D = ratio d``."""
    if not 0.0 <= delta <= 1.0:
        raise InfeasibleParametersError(f"delta={delta:g} infeasible")
    if ratio < 1.0:
        raise InfeasibleParametersError(f"ratio={ratio:g} must be >= 1")
    for name, v in (("alpha", alpha), ("beta", beta)):
        if not 0.0 < v <= 1.0:
            raise InfeasibleParametersError(f"{name}={v:g} must lie in (0, 1]")
    d = delta * (alpha + beta) / (alpha * ratio + beta)
    D = ratio * d
    if D > 1.0:
        raise InfeasibleParametersError(f"D={D:g} infeasible")
    return TwoStateDeletionParams(alpha=alpha, beta=beta, d=d, D=D)


def two_state_deletion_channel(params: TwoStateDeletionParams, rho: np.ndarray | None = None) -> MarkovIDSChannel:
    chain = two_state_chain(params.alpha, params.beta)
    return MarkovIDSChannel(chain, (make_deletion_state(params.d), make_deletion_state(params.D)), rho)


def iid_deletion_channel(delta: float, alphabet_size: int = 2) -> MarkovIDSChannel:
    return MarkovIDSChannel(MarkovChain(np.ones((1, 1))), (make_deletion_state(delta, alphabet_size),))


# --------------------------------------------------------------------------
# simulation


def make_rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass
class _SamplerTables:
    init_cdf: np.ndarray            # (s,)
    trans_cdf: np.ndarray           # (s, s)
    out_cdf: np.ndarray             # (s, |X|, K), padded with 2.0
    out_words: list                 # out_words[sigma][x][j] -> Word
    out_len: np.ndarray             # (s, |X|, K) lengths
    out_sym: np.ndarray             # (s, |X|, K, A) padded symbols
    max_len: int


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def _tables(channel: MarkovIDSChannel) -> _SamplerTables:
    s, X = channel.s, channel.input_alphabet_size
    K = max(len(st.law[x]) for st in channel.states for x in range(X))
    A = max(channel.max_output_len, 1)
    out_cdf = np.full((s, X, K), 2.0)
    out_len = np.zeros((s, X, K), dtype=np.int64)
    out_sym = np.zeros((s, X, K, A), dtype=np.int64)
    words = []
    for si, st in enumerate(channel.states):
        wx = []
        for x in range(X):
            outcomes = st.law[x]
            probs = np.array([p for _, p in outcomes])
            out_cdf[si, x, : len(outcomes)] = _cdf(probs)
            for j, (w, _) in enumerate(outcomes):
                out_len[si, x, j] = len(w)
                out_sym[si, x, j, : len(w)] = w
            wx.append([w for w, _ in outcomes])
        words.append(wx)
    return _SamplerTables(
        init_cdf=_cdf(np.asarray(channel.rho, dtype=float)),
        trans_cdf=_cdf(channel.chain.G.copy()),
        out_cdf=out_cdf,
        out_words=words,
        out_len=out_len,
        out_sym=out_sym,
        max_len=A,
    )


def _check_inputs(channel: MarkovIDSChannel, x: np.ndarray) -> None:
    if x.size and (x.min() < 0 or x.max() >= channel.input_alphabet_size):
        bad = x[(x < 0) | (x >= channel.input_alphabet_size)][0]
        raise ValidationError(f"symbol {bad} outside the input alphabet of size {channel.input_alphabet_size}")


@dataclass(frozen=True)
class Transmission:
    glued_output: Word
    per_symbol_outputs: tuple[Word, ...]
    state_path: tuple[int, ...]


@dataclass
class SimulationBatch:
    """Vectorized result of ``T`` trials of length ``n``.

    ``outcome[t, i]`` indexes the output of symbol ``i`` in the state
    channel's law; ``out_len`` is the corresponding output length.
    """

    inputs: np.ndarray
    states: np.ndarray
    outcome: np.ndarray
    out_len: np.ndarray
    _tables: _SamplerTables = field(repr=False)

    @property
    def output_lengths(self) -> np.ndarray:
        return self.out_len.sum(axis=1)

    def glued(self, t: int) -> Word:
        tb = self._tables
        sym = tb.out_sym[self.states[t], self.inputs[t], self.outcome[t]]
        mask = np.arange(tb.max_len)[None, :] < self.out_len[t][:, None]
        return tuple(int(a) for a in sym[mask])

    def transmission(self, t: int) -> Transmission:
        tb = self._tables
        per = tuple(
            tb.out_words[s][x][j] for s, x, j in zip(self.states[t], self.inputs[t], self.outcome[t])
        )
        return Transmission(
            glued_output=tuple(a for w in per for a in w),
            per_symbol_outputs=per,
            state_path=tuple(int(s) for s in self.states[t]),
        )


def simulate(channel: MarkovIDSChannel, inputs: np.ndarray, rng: int | np.random.Generator) -> SimulationBatch:
    """Transmit each row of ``inputs`` (shape ``(T, n)``) through the channel."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.int64))
    _check_inputs(channel, x)
    T, n = x.shape
    gen = make_rng(rng)
    tb = _tables(channel)
    u = gen.random((T, 2 * n))
    states = np.empty((T, n), dtype=np.int64)
    outcome = np.empty((T, n), dtype=np.int64)
    for i in range(n):
        us = u[:, 2 * i]
        if i == 0:
            cur = np.searchsorted(tb.init_cdf, us, side="right")
        else:
            rows = tb.trans_cdf[states[:, i - 1]]
            cur = (us[:, None] >= rows).sum(axis=1)
        cur = np.minimum(cur, channel.s - 1)
        states[:, i] = cur
        cdfs = tb.out_cdf[cur, x[:, i]]
        outcome[:, i] = (u[:, 2 * i + 1][:, None] >= cdfs).sum(axis=1)
    out_len = tb.out_len[states, x, outcome]
    return SimulationBatch(inputs=x, states=states, outcome=outcome, out_len=out_len, _tables=tb)


def sample_transmission(channel: MarkovIDSChannel, x: Sequence[int], rng: int | np.random.Generator) -> Transmission:
    """One transmission of ``x``; ``rng`` is a seed or a Generator to draw from."""
    batch = simulate(channel, np.asarray([list(x)], dtype=np.int64).reshape(1, -1), rng)
    return batch.transmission(0)


def expected_output_length(channel: MarkovIDSChannel, n: int) -> float:
    """Exact ``E[len(glued output)]`` for a length-``n`` input.

    For general state channels the per-state expectation is taken under a
    uniform input symbol; for deletion-type channels it does not depend on
    the input.
    """
    per_state = np.array(
        [np.mean([st.expected_length(x) for x in range(st.input_alphabet_size)]) for st in channel.states]
    )
    dist = np.asarray(channel.rho, dtype=float)
    total = 0.0
    for _ in range(n):
        total += dist @ per_state
        dist = dist @ channel.chain.G
    return float(total)


# --------------------------------------------------------------------------
# JSON ingestion

_PROB = {"anyOf": [{"type": "number", "minimum": 0, "maximum": 1}, {"type": "string", "pattern": r"^[0-9.eE+-]+$"}]}

CHANNEL_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Markov-IDS channel",
    "type": "object",
    "additionalProperties": False,
    "required": ["states", "G"],
    "properties": {
        "input_alphabet_size": {"type": "integer", "minimum": 1, "maximum": len(SYMBOLS)},
        "output_alphabet_size": {"type": "integer", "minimum": 1, "maximum": len(SYMBOLS)},
        "states": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["outputs"],
                "properties": {
                    "outputs": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"type": "object", "additionalProperties": _PROB},
                    }
                },
            },
        },
        "G": {"type": "array", "items": {"type": "array", "items": _PROB}},
        "rho": {"anyOf": [{"const": "stationary"}, {"type": "array", "items": _PROB}]},
    },
}


def channel_from_dict(doc: Mapping[str, Any]) -> MarkovIDSChannel:
    """Parse a channel document (see ``CHANNEL_SCHEMA`` and docs/channel.schema.json)."""
    try:
        jsonschema.validate(doc, CHANNEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"channel JSON: {exc.message}") from None
    q_out = doc.get("output_alphabet_size")
    states = []
    for st in doc["states"]:
        law = [{k: float(v) for k, v in m.items()} for m in st["outputs"]]
        states.append(make_state_channel(law, q_out))
    q_in = doc.get("input_alphabet_size")
    if q_in is not None and any(st.input_alphabet_size != q_in for st in states):
        raise ValidationError("input_alphabet_size disagrees with the state laws")
    G = np.array([[float(v) for v in row] for row in doc["G"]])
    rho = doc.get("rho", "stationary")
    initial = None if rho == "stationary" else np.array([float(v) for v in rho])
    return MarkovIDSChannel(MarkovChain(G), tuple(states), initial)


def channel_to_dict(channel: MarkovIDSChannel) -> dict[str, Any]:
    return {
        "input_alphabet_size": channel.input_alphabet_size,
        "output_alphabet_size": channel.output_alphabet_size,
        "states": [
            {"outputs": [{word_to_str(y): p for y, p in outcomes} for outcomes in st.law]} for st in channel.states
        ],
        "G": channel.chain.G.tolist(),
        "rho": "stationary" if channel.initial is None else list(channel.initial),
    }


def load_channel_json(path: str | Path) -> MarkovIDSChannel:
    with open(path) as fh:
        return channel_from_dict(json.load(fh))
