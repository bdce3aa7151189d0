"""SDPA sparse (".dat-s") export and parsing.

The exported problem is always written in minimization orientation so that
external solvers consume it directly:

    min  c . x   s.t.   X = sum_i x_i F_i - F_0,   X PSD (blockwise)

Our constant parts therefore flip sign on the way out (F_0 is "moved to the
right-hand side") and maximization objectives are negated.  A leading
comment line records the original sense, the objective offset, and the
number of equality rows, which are encoded as a trailing diagonal block of
paired +/- entries (the classic workaround for a format without free
equality rows).  Files written by other tools parse fine; the comment line
is simply absent and every block is taken at face value.

Floats are printed with 17 significant digits, so export -> parse -> export
is byte-identical.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .polynomials import Sense
from .sdp import BlockSDP, SDPBlockData

_MARKER = "* subrelax"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def format_sdpa(sdp: BlockSDP) -> str:
    """Serialize a block SDP to SDPA sparse text."""
    neq = len(sdp.eq_rows)
    lines = [
        f"{_MARKER} sense={sdp.sense.value} offset={_fmt(sdp.offset)} neq={neq}"
    ]
    sizes = [(-b.size if b.diag else b.size) for b in sdp.blocks]
    if neq:
        sizes.append(-2 * neq)
    nblocks = len(sizes)
    lines.append(str(sdp.m))
    lines.append(str(nblocks))
    lines.append(" ".join(str(s) for s in sizes))
    sign = 1.0 if sdp.sense is Sense.MIN else -1.0
    lines.append(" ".join(_fmt(sign * v) for v in sdp.c))

    entries: list[tuple[int, int, int, int, float]] = []
    for bno, block in enumerate(sdp.blocks, start=1):
        for r, c, v in block.const:
            entries.append((0, bno, r + 1, c + 1, -v))
        for r, c, j, v in block.lin:
            entries.append((j + 1, bno, r + 1, c + 1, v))
    if neq:
        bno = len(sdp.blocks) + 1
        for r, (row, rhs) in enumerate(zip(sdp.eq_rows, sdp.eq_rhs)):
            p, q = 2 * r + 1, 2 * r + 2
            if rhs != 0.0:
                entries.append((0, bno, p, p, rhs))
                entries.append((0, bno, q, q, -rhs))
            for j, v in row:
                entries.append((j + 1, bno, p, p, v))
                entries.append((j + 1, bno, q, q, -v))
    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    for matno, bno, i, j, v in entries:
        lines.append(f"{matno} {bno} {i} {j} {_fmt(v)}")
    return "\n".join(lines) + "\n"


def export_sdpa(sdp: BlockSDP, path) -> None:
    """Write a block SDP to ``path`` in SDPA sparse format."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_sdpa(sdp))


def parse_sdpa_text(text: str) -> BlockSDP:
    """Inverse of :func:`format_sdpa`; also reads foreign .dat-s files."""
    sense = Sense.MIN
    offset = 0.0
    neq = 0
    lines = text.splitlines()
    k = 0
    while k < len(lines) and (
        not lines[k].strip() or lines[k].lstrip()[0] in "*\""
    ):
        stripped = lines[k].strip()
        if stripped.startswith(_MARKER):
            for tokenpair in stripped[len(_MARKER):].split():
                key, _, val = tokenpair.partition("=")
                if key == "sense":
                    sense = Sense(val)
                elif key == "offset":
                    offset = float(val)
                elif key == "neq":
                    neq = int(val)
        k += 1

    def next_line() -> str:
        nonlocal k
        while k < len(lines) and not lines[k].strip():
            k += 1
        if k >= len(lines):
            raise ParseError("unexpected end of file", k)
        k += 1
        return lines[k - 1]

    try:
        m = int(next_line().split()[0])
        nblocks = int(next_line().split()[0])
        size_tokens = next_line().replace(",", " ").replace("{", " ").replace("}", " ").split()
        sizes = [int(t) for t in size_tokens]
        if len(sizes) != nblocks:
            raise ParseError(f"expected {nblocks} block sizes, got {len(sizes)}")
        obj_tokens = next_line().replace(",", " ").split()
        if len(obj_tokens) != m:
            raise ParseError(f"expected {m} objective entries, got {len(obj_tokens)}")
        c_file = np.array([float(t) for t in obj_tokens])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed header: {exc}", k) from None

    n_psd = nblocks - (1 if neq else 0)
    blocks = [
        SDPBlockData(size=abs(s), diag=s < 0 or abs(s) == 1) for s in sizes[:n_psd]
    ]
    if neq and sizes[-1] != -2 * neq:
        raise ParseError(
            f"trailing equality block must have size {-2 * neq}, got {sizes[-1]}"
        )
    eq_coeffs: list[dict[int, float]] = [dict() for _ in range(neq)]
    eq_rhs = [0.0] * neq

    lineno = k
    for raw in lines[k:]:
        lineno += 1
        stripped = raw.strip()
        if not stripped or stripped[0] in "*\"":
            continue
        parts = stripped.split()
        if len(parts) != 5:
            raise ParseError(f"entry needs 5 fields, got {len(parts)}", lineno)
        try:
            matno, bno, i, j = (int(p) for p in parts[:4])
            val = float(parts[4])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not 0 <= matno <= m:
            raise ParseError(f"matrix number {matno} out of range", lineno)
        if not 1 <= bno <= nblocks:
            raise ParseError(f"block number {bno} out of range", lineno)
        if bno <= n_psd:
            block = blocks[bno - 1]
            if not (1 <= i <= block.size and 1 <= j <= block.size):
                raise ParseError(f"entry ({i},{j}) outside block {bno}", lineno)
            if i > j:
                i, j = j, i
            if matno == 0:
                block.const.append((i - 1, j - 1, -val))
            else:
                block.lin.append((i - 1, j - 1, matno - 1, val))
        else:
            if i != j:
                raise ParseError("equality block entries must be diagonal", lineno)
            row = (i - 1) // 2
            if (i - 1) % 2 == 1:
                continue  # the paired negative entry repeats the first
            if matno == 0:
                eq_rhs[row] = val
            else:
                eq_coeffs[row][matno - 1] = val

    eq_rows = [sorted(d.items()) for d in eq_coeffs]
    sign = 1.0 if sense is Sense.MIN else -1.0
    return BlockSDP(
        m=m,
        blocks=blocks,
        c=sign * c_file,
        offset=offset,
        sense=sense,
        eq_rows=eq_rows,
        eq_rhs=eq_rhs,
        var_index=None,
    )


def parse_sdpa(path) -> BlockSDP:
    with open(path, "r", encoding="ascii") as fh:
        return parse_sdpa_text(fh.read())
