"""Plain-text formats for functionals (.fn), models (.qm, .gm) and moment matrices (.mm).

All indices in files are 1-based; ``#`` starts a comment.  Complex numbers are
written as interleaved ``re im`` pairs, matrices row-major.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .bell import BellFunctional, Scenario
from .moments import MomentMatrix, moment_structure, parse_word, word_text
from .quantum import NORM_TOL, ProjectorAssembly, QuantumModel, QuantumState
from .theorems import GeneralizedModel


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0, path: str | None = None):
        self.msg, self.line, self.col, self.path = msg, line, col, path
        where = f"{path or '<input>'}:{line}:{col}"
        super().__init__(f"{where}: {msg}")


@dataclass
class Token:
    text: str
    line: int
    col: int


def _tokens(text: str) -> list[Token]:
    out = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        col = 0
        for part in body.split():
            col = body.index(part, col)
            out.append(Token(part, ln, col + 1))
            col += len(part)
    return out


def _lines(text: str) -> Iterator[tuple[int, list[Token]]]:
    by_line: dict[int, list[Token]] = {}
    for t in _tokens(text):
        by_line.setdefault(t.line, []).append(t)
    yield from sorted(by_line.items())


def _int(t: Token, lo: int | None = None, hi: int | None = None, what: str = "integer") -> int:
    try:
        v = int(t.text)
    except ValueError:
        raise ParseError(f"expected {what}, got {t.text!r}", t.line, t.col) from None
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        rng = f"{lo}..{hi}" if hi is not None else f">= {lo}"
        raise ParseError(f"{what} {v} out of range {rng}", t.line, t.col)
    return v


def _float(t: Token) -> float:
    try:
        v = float(t.text)
    except ValueError:
        raise ParseError(f"expected a number, got {t.text!r}", t.line, t.col) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite number {t.text!r}", t.line, t.col)
    return v


def _scenario_line(toks: list[Token]) -> Scenario:
    head = toks[0]
    if len(toks) < 2:
        raise ParseError("scenario line needs n, then n input counts and n output counts", head.line, head.col)
    n = _int(toks[1], 1, what="party count")
    if len(toks) != 2 + 2 * n:
        bad = toks[min(len(toks) - 1, 2 + 2 * n)]
        raise ParseError(f"scenario line needs {2 * n} counts after n={n}, got {len(toks) - 2}", bad.line, bad.col)
    ms = [_int(t, 1, what="input count") for t in toks[2 : 2 + n]]
    ds = [_int(t, 1, what="output count") for t in toks[2 + n :]]
    return Scenario(tuple(ms), tuple(ds))


def digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(v: float) -> str:
    return repr(float(v))


# --------------------------------------------------------------------------- .fn


def parse_functional(text: str, path: str | None = None) -> BellFunctional:
    try:
        lines = list(_lines(text))
        if not lines:
            raise ParseError("empty functional file", 1, 1)
        ln, toks = lines[0]
        if toks[0].text != "scenario":
            raise ParseError(f"first line must start with 'scenario', got {toks[0].text!r}", ln, toks[0].col)
        s = _scenario_line(toks)
        coeffs = np.zeros(s.shape)
        for ln, toks in lines[1:]:
            if len(toks) != 2 * s.n + 1:
                raise ParseError(f"expected {2 * s.n} indices and a coefficient, got {len(toks)} fields", ln, toks[0].col)
            a = tuple(_int(t, 1, s.outputs[i], "outcome") - 1 for i, t in enumerate(toks[: s.n]))
            x = tuple(_int(t, 1, s.inputs[i], "input") - 1 for i, t in enumerate(toks[s.n : 2 * s.n]))
            coeffs[a + x] += _float(toks[-1])
        return BellFunctional(s, coeffs)
    except ParseError as e:
        raise ParseError(e.msg, e.line, e.col, path) from None


def format_functional(f: BellFunctional, comment: str | None = None) -> str:
    s = f.scenario
    out = []
    if comment:
        out.append(f"# {comment}")
    out.append("scenario " + " ".join(str(v) for v in (s.n, *s.inputs, *s.outputs)))
    for a, x, v in f.nonzero_cells():
        out.append(" ".join(str(i + 1) for i in (*a, *x)) + f" {_fmt(v)}")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- shared block reader


def _read_complex(toks: list[Token], pos: int, count: int, what: str, after: Token) -> tuple[np.ndarray, int]:
    need = 2 * count
    chunk = toks[pos : pos + need]
    for k, t in enumerate(chunk):
        if t.text.isalpha():
            raise ParseError(f"{what}: expected {need} reals, found keyword {t.text!r} after {k}", t.line, t.col)
    if len(chunk) < need:
        last = chunk[-1] if chunk else after
        raise ParseError(f"{what}: expected {need} reals, file ends after {len(chunk)}", last.line, last.col)
    vals = np.array([_float(t) for t in chunk])
    return vals[0::2] + 1j * vals[1::2], pos + need


def _operator_sections(toks: list[Token], pos: int, keyword: str, sizes):
    """Read ``keyword i x a`` headers each followed by a matrix; returns {(i,x,a): matrix}."""
    found = {}
    while pos < len(toks):
        head = toks[pos]
        if head.text != keyword:
            raise ParseError(f"expected '{keyword}', got {head.text!r}", head.line, head.col)
        if pos + 3 >= len(toks):
            raise ParseError(f"'{keyword}' needs party, input and outcome", head.line, head.col)
        i = _int(toks[pos + 1], 1, what="party") - 1
        x = _int(toks[pos + 2], 1, what="input") - 1
        a = _int(toks[pos + 3], 1, what="outcome") - 1
        k = sizes(i, toks[pos + 1])
        mat, pos = _read_complex(toks, pos + 4, k * k, f"{keyword} {i + 1} {x + 1} {a + 1}", toks[pos + 3])
        if (i, x, a) in found:
            raise ParseError(f"duplicate {keyword} {i + 1} {x + 1} {a + 1}", head.line, head.col)
        found[(i, x, a)] = mat.reshape(k, k)
    return found


def _stack(found: dict, n: int, where: Token, keyword: str):
    s_in = [0] * n
    s_out = [0] * n
    for i, x, a in found:
        s_in[i] = max(s_in[i], x + 1)
        s_out[i] = max(s_out[i], a + 1)
    for i in range(n):
        if s_in[i] == 0:
            raise ParseError(f"no {keyword} entries for party {i + 1}", where.line, where.col)
    stacks = []
    for i in range(n):
        rows = []
        for x in range(s_in[i]):
            cols = []
            for a in range(s_out[i]):
                if (i, x, a) not in found:
                    raise ParseError(f"missing {keyword} {i + 1} {x + 1} {a + 1}", where.line, where.col)
                cols.append(found[(i, x, a)])
            rows.append(cols)
        stacks.append(np.array(rows))
    return Scenario(tuple(s_in), tuple(s_out)), tuple(stacks)


# --------------------------------------------------------------------------- .qm


def parse_quantum_model(text: str, path: str | None = None) -> QuantumModel:
    try:
        toks = _tokens(text)
        if not toks or toks[0].text != "dims":
            t = toks[0] if toks else Token("", 1, 1)
            raise ParseError("quantum model file must start with 'dims'", t.line, t.col)
        pos = 1
        dims = []
        while pos < len(toks) and toks[pos].text != "state":
            dims.append(_int(toks[pos], 1, what="local dimension"))
            pos += 1
        if not dims or pos >= len(toks):
            raise ParseError("expected 'dims d1 .. dn' followed by 'state'", toks[0].line, toks[0].col)
        state_tok = toks[pos]
        dim = int(np.prod(dims))
        psi, pos = _read_complex(toks, pos + 1, dim, "state", state_tok)
        n = len(dims)

        def size(i, t):
            if not 0 <= i < n:
                raise ParseError(f"party {i + 1} out of range 1..{n}", t.line, t.col)
            return dims[i]

        found = _operator_sections(toks, pos, "proj", size)
        s, stacks = _stack(found, n, state_tok, "proj")
        norm = np.linalg.norm(psi)
        if abs(norm - 1) > 1e-9:
            raise ParseError(f"state norm {norm:.12g} differs from 1", state_tok.line, state_tok.col)
        # amplitudes are kept verbatim when already normalized so files round-trip exactly
        state = QuantumState(dims, psi) if abs(norm - 1) <= NORM_TOL else QuantumState.normalized(dims, psi)
        return QuantumModel(state, ProjectorAssembly(s, tuple(dims), stacks))
    except ParseError as e:
        raise ParseError(e.msg, e.line, e.col, path) from None


def _complex_lines(vals: np.ndarray, per_line: int) -> list[str]:
    flat = np.asarray(vals, dtype=complex).reshape(-1)
    out = []
    for k in range(0, flat.size, per_line):
        out.append(" ".join(f"{_fmt(v.real)} {_fmt(v.imag)}" for v in flat[k : k + per_line]))
    return out


def format_quantum_model(m: QuantumModel, comment: str | None = None) -> str:
    out = [f"# {comment}"] if comment else []
    out.append("dims " + " ".join(str(d) for d in m.dims))
    out.append("state")
    out += _complex_lines(m.state.amplitudes, 4)
    s = m.scenario
    for i in range(s.n):
        for x in range(s.inputs[i]):
            for a in range(s.outputs[i]):
                out.append(f"proj {i + 1} {x + 1} {a + 1}")
                out += _complex_lines(m.assembly.get(i, x, a), m.dims[i])
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- .gm


def parse_generalized_model(text: str, path: str | None = None) -> GeneralizedModel:
    try:
        toks = _tokens(text)
        if len(toks) < 2 or toks[0].text != "dim":
            t = toks[0] if toks else Token("", 1, 1)
            raise ParseError("generalized model file must start with 'dim D'", t.line, t.col)
        dim = _int(toks[1], 1, what="dimension")
        if len(toks) < 3 or toks[2].text != "state":
            t = toks[min(2, len(toks) - 1)]
            raise ParseError("expected 'state' after 'dim D'", t.line, t.col)
        psi, pos = _read_complex(toks, 3, dim, "state", toks[2])
        found = _operator_sections(toks, pos, "op", lambda i, t: dim)
        n = max(i for i, _, _ in found) + 1 if found else 0
        if n == 0:
            raise ParseError("no 'op' sections", toks[2].line, toks[2].col)
        s, stacks = _stack(found, n, toks[2], "op")
        norm = np.linalg.norm(psi)
        if abs(norm - 1) > 1e-9:
            raise ParseError(f"state norm {norm:.12g} differs from 1", toks[2].line, toks[2].col)
        return GeneralizedModel(s, psi, stacks, None)
    except ParseError as e:
        raise ParseError(e.msg, e.line, e.col, path) from None


def format_generalized_model(m: GeneralizedModel, comment: str | None = None) -> str:
    out = [f"# {comment}"] if comment else []
    out.append(f"dim {m.dim}")
    out.append("state")
    out += _complex_lines(m.state, 4)
    s = m.scenario
    for i in range(s.n):
        for x in range(s.inputs[i]):
            for a in range(s.outputs[i]):
                out.append(f"op {i + 1} {x + 1} {a + 1}")
                out += _complex_lines(m.full(i, x, a), m.dim)
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- .mm


def format_moment_matrix(g: MomentMatrix) -> str:
    s = g.scenario
    out = ["scenario " + " ".join(str(v) for v in (s.n, *s.inputs, *s.outputs)), f"level {g.level}", f"words {g.size}"]
    out += [word_text(w) for w in g.words]
    out.append("matrix")
    out += _complex_lines(g.gamma, g.size)
    return "\n".join(out) + "\n"


def parse_moment_matrix(text: str, path: str | None = None) -> MomentMatrix:
    try:
        lines = list(_lines(text))
        if len(lines) < 3:
            raise ParseError("moment matrix file is truncated", 1, 1)
        ln, toks = lines[0]
        if toks[0].text != "scenario":
            raise ParseError("first line must start with 'scenario'", ln, toks[0].col)
        s = _scenario_line(toks)
        ln, toks = lines[1]
        if toks[0].text != "level" or len(toks) != 2:
            raise ParseError("second line must be 'level <1|2|aqc>'", ln, toks[0].col)
        level = toks[1].text
        ln, toks = lines[2]
        if toks[0].text != "words" or len(toks) != 2:
            raise ParseError("third line must be 'words N'", ln, toks[0].col)
        n = _int(toks[1], 1, what="word count")
        try:
            expected = moment_structure(s, level).words
        except ValueError as e:
            raise ParseError(str(e), lines[1][0], 1) from None
        if n != len(expected):
            raise ParseError(f"level {level} has {len(expected)} words, file declares {n}", ln, toks[1].col)
        words = []
        for k in range(n):
            if 3 + k >= len(lines):
                raise ParseError("file ends inside the word list", ln, 1)
            wl, wt = lines[3 + k]
            try:
                w = parse_word(" ".join(t.text for t in wt))
            except ValueError as e:
                raise ParseError(str(e), wl, wt[0].col) from None
            if w != expected[k]:
                raise ParseError(f"word {k + 1} is {word_text(w)}, expected {word_text(expected[k])}", wl, wt[0].col)
            words.append(w)
        rest = [t for _, ts in lines[3 + n :] for t in ts]
        if not rest or rest[0].text != "matrix":
            t = rest[0] if rest else Token("", lines[-1][0], 1)
            raise ParseError("expected 'matrix'", t.line, t.col)
        vals, pos = _read_complex(rest, 1, n * n, "matrix", rest[0])
        if pos != len(rest):
            t = rest[pos]
            raise ParseError("trailing data after matrix", t.line, t.col)
        return MomentMatrix(s, tuple(words), vals.reshape(n, n), level)
    except ParseError as e:
        raise ParseError(e.msg, e.line, e.col, path) from None


# --------------------------------------------------------------------------- dispatch


def read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read file: {e.strerror}", 0, 0, str(path)) from None


def load_functional(path) -> BellFunctional:
    return parse_functional(read_text(path), str(path))


def load_model(path):
    """``.qm`` -> QuantumModel, ``.gm`` -> GeneralizedModel (decided by the first keyword)."""
    text = read_text(path)
    first = next((t.text for t in _tokens(text)), "")
    if first == "dims":
        return parse_quantum_model(text, str(path))
    if first == "dim":
        return parse_generalized_model(text, str(path))
    raise ParseError("model file must start with 'dims' (.qm) or 'dim' (.gm)", 1, 1, str(path))


def load_moment_matrix(path) -> MomentMatrix:
    return parse_moment_matrix(read_text(path), str(path))
