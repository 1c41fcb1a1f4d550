"""Binary LDPC codes: alist I/O, PEG construction, systematic encoding, BP decoding."""

from __future__ import annotations

from collections import deque
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .errors import EncodingSetupError, FormatError, InvalidParameterError

LLR_CLIP = 1e6


class LdpcCode:
    """Parity-check structure of a binary code.

    Parameters
    ----------
    n : int
        Codeword length.
    checks : sequence of sequences of int
        Zero-based variable indices of each parity check.
    """

    def __init__(self, n: int, checks):
        rows = [sorted(int(v) for v in row) for row in checks]
        if n < 1 or not rows:
            raise InvalidParameterError("a code needs n >= 1 and at least one check")
        for c, row in enumerate(rows):
            if not row:
                raise InvalidParameterError(f"check {c} has no variables")
            if len(set(row)) != len(row) or row[0] < 0 or row[-1] >= n:
                raise InvalidParameterError(f"check {c} has repeated or out-of-range variables")
        self.n = int(n)
        self.m = len(rows)
        self.checks = rows
        deg = np.array([len(r) for r in rows])
        self.chk_ptr = np.concatenate(([0], np.cumsum(deg))).astype(np.int64)
        self.edge_var = np.array([v for r in rows for v in r], dtype=np.int64)
        self.var_degree = np.bincount(self.edge_var, minlength=self.n)
        if np.any(self.var_degree == 0):
            bad = int(np.flatnonzero(self.var_degree == 0)[0])
            raise InvalidParameterError(f"variable {bad} takes part in no check")
        self._table = None

    @property
    def check_degree(self) -> np.ndarray:
        return np.diff(self.chk_ptr)

    def var_checks(self) -> list[list[int]]:
        cols = [[] for _ in range(self.n)]
        for c, row in enumerate(self.checks):
            for v in row:
                cols[v].append(c)
        return cols

    def dense(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        H[np.repeat(np.arange(self.m), self.check_degree), self.edge_var] = 1
        return H

    def syndrome(self, bits) -> np.ndarray:
        """Parity of each check for a word of shape (n,) or (B, n)."""
        b = np.asarray(bits, dtype=np.int64)
        sums = np.add.reduceat(b[..., self.edge_var], self.chk_ptr[:-1], axis=-1)
        return (sums & 1).astype(np.uint8)

    # -- systematic encoder ------------------------------------------------

    @cached_property
    def _encoder(self):
        pivots, R = gf2_rref_from_right(self.dense())
        rank = len(pivots)
        is_pivot = np.zeros(self.n, dtype=bool)
        is_pivot[pivots] = True
        info = np.flatnonzero(~is_pivot)
        A = R[:rank][:, info].astype(np.int64)
        return rank, np.asarray(pivots, dtype=np.int64), info, A

    @property
    def rank(self) -> int:
        return self._encoder[0]

    @property
    def k(self) -> int:
        return self.n - self.rank

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def info_positions(self) -> np.ndarray:
        return self._encoder[2]

    def encode(self, bits) -> np.ndarray:
        return encode(bits, self)

    def decode(self, llrs, max_iters: int = 50):
        return decode(llrs, self, max_iters)


def gf2_rref_from_right(H) -> tuple[list[int], np.ndarray]:
    """Reduced row echelon form over GF(2), choosing pivots from the last column.

    Returns the pivot column of each leading row and the reduced matrix.
    Pivoting from the right makes a trailing identity block (``H = [P^T | I]``)
    the parity part, so information bits keep the leading positions.
    """
    H = np.asarray(H, dtype=np.uint8) & 1
    m, n = H.shape
    R = H.copy()
    pivots = []
    row = 0
    for col in range(n - 1, -1, -1):
        if row == m:
            break
        cand = np.flatnonzero(R[row:, col]) + row
        if cand.size == 0:
            continue
        p = cand[0]
        if p != row:
            R[[row, p]] = R[[p, row]]
        hit = np.flatnonzero(R[:, col])
        hit = hit[hit != row]
        if hit.size:
            R[hit] ^= R[row]
        pivots.append(col)
        row += 1
    return pivots, R


def encode(bits, code: LdpcCode) -> np.ndarray:
    """Systematic codeword(s) for information bits of shape (k,) or (B, k).

    Redundant checks are allowed; a code whose checks leave no information
    bits raises :class:`EncodingSetupError`.
    """
    rank, pivots, info, A = code._encoder
    if info.size == 0:
        raise EncodingSetupError("parity-check matrix has full column rank, so k = 0")
    u = np.asarray(bits, dtype=np.int64)
    if u.shape[-1] != info.size:
        raise InvalidParameterError(f"expected {info.size} information bits, got {u.shape[-1]}")
    if np.any((u != 0) & (u != 1)):
        raise InvalidParameterError("information bits must be 0 or 1")
    out = np.zeros(u.shape[:-1] + (code.n,), dtype=np.uint8)
    out[..., info] = u
    out[..., pivots] = (u @ A.T) & 1
    return out


def decode(llrs, code: LdpcCode, max_iters: int = 50):
    """Sum-product decoding with a flooding schedule.

    Returns ``(info_bits, converged, iterations)``. ``converged`` is True only
    when the hard decision satisfies every check.
    """
    llr = np.clip(np.asarray(llrs, dtype=np.float64), -LLR_CLIP, LLR_CLIP)
    if llr.shape != (code.n,):
        raise InvalidParameterError(f"expected {code.n} LLRs, got shape {llr.shape}")
    if code._table is None and kernels.BACKEND == "numpy":
        code._table = kernels._PaddedChecks(code.chk_ptr, code.edge_var, code.n)
    post, iters, ok = kernels.bp_decode(llr, code.chk_ptr, code.edge_var, max_iters, code._table)
    hard = (post < 0).astype(np.uint8)
    return hard[code.info_positions], bool(ok), int(iters)


# --------------------------------------------------------------------------
# alist


def _ints(line, lineno):
    try:
        return [int(t) for t in line.split()]
    except ValueError:
        raise FormatError(f"line {lineno}: expected integers", location=lineno) from None


def parse_alist(text: str) -> LdpcCode:
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines):
            raise FormatError(f"unexpected end of file reading {what}", location=len(text.splitlines()) + 1)
        lineno, ln = lines[pos]
        pos += 1
        return lineno, _ints(ln, lineno)

    ln, head = take("header")
    if len(head) != 2 or min(head) < 1:
        raise FormatError(f"line {ln}: header must be 'n m'", location=ln)
    n, m = head
    ln, mx = take("maximum degrees")
    if len(mx) != 2:
        raise FormatError(f"line {ln}: expected two maximum degrees", location=ln)
    ln_cd, col_deg = take("column degrees")
    if len(col_deg) != n:
        raise FormatError(f"line {ln_cd}: expected {n} column degrees, got {len(col_deg)}", location=ln_cd)
    ln_rd, row_deg = take("row degrees")
    if len(row_deg) != m:
        raise FormatError(f"line {ln_rd}: expected {m} row degrees, got {len(row_deg)}", location=ln_rd)
    if max(col_deg) != mx[0] or max(row_deg) != mx[1]:
        raise FormatError(f"line {ln}: maximum degrees do not match the degree lists", location=ln)
    if sum(col_deg) != sum(row_deg):
        raise FormatError(f"line {ln_rd}: column and row degree totals differ", location=ln_rd)

    def entries(count, deg, limit, what):
        out = []
        for j in range(count):
            lineno, vals = take(f"{what} {j + 1}")
            nz = [v for v in vals if v != 0]
            if len(nz) != deg[j] or len(vals) > max(deg[j], max(deg)):
                raise FormatError(
                    f"line {lineno}: {what} {j + 1} lists {len(nz)} entries, degree says {deg[j]}",
                    location=lineno,
                )
            if any(v < 1 or v > limit for v in nz) or len(set(nz)) != len(nz):
                raise FormatError(f"line {lineno}: index out of range or repeated", location=lineno)
            out.append((lineno, [v - 1 for v in nz]))
        return out

    cols = entries(n, col_deg, m, "column")
    rows = entries(m, row_deg, n, "row")
    from_cols = {(c, v) for v, (_, cs) in enumerate(cols) for c in cs}
    for c, (lineno, vs) in enumerate(rows):
        for v in vs:
            if (c, v) not in from_cols:
                raise FormatError(
                    f"line {lineno}: row {c + 1} lists column {v + 1} but that column omits it",
                    location=lineno,
                )
    return LdpcCode(n, [vs for _, vs in rows])


def load_code(path, fmt: str = "alist") -> LdpcCode:
    if fmt != "alist":
        raise InvalidParameterError(f"unsupported code format {fmt!r}")
    return parse_alist(Path(path).read_text())


def format_alist(code: LdpcCode) -> str:
    cols = code.var_checks()
    cd = [len(c) for c in cols]
    rd = [len(r) for r in code.checks]
    out = [f"{code.n} {code.m}", f"{max(cd)} {max(rd)}", " ".join(map(str, cd)), " ".join(map(str, rd))]
    for c in cols:
        out.append(" ".join(str(x + 1) for x in c + [-1] * (max(cd) - len(c))))
    for r in code.checks:
        out.append(" ".join(str(x + 1) for x in r + [-1] * (max(rd) - len(r))))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# progressive edge growth


def peg_regular(n: int, dv: int = 3, dc: int = 6, seed: int = 0) -> LdpcCode:
    """Regular (dv, dc) code built by progressive edge growth.

    Each new edge of a variable goes to a check that is as far as possible
    from it in the current graph (unreachable first), among checks that still
    have spare degree; ties go to the lowest current degree and then to a
    seeded random pick. Deterministic for a given ``(n, dv, dc, seed)``.
    """
    if n * dv % dc:
        raise InvalidParameterError("n*dv must be divisible by dc")
    m = n * dv // dc
    if dv > m:
        raise InvalidParameterError("variable degree exceeds the number of checks")
    rng = np.random.default_rng(seed)
    var_adj = [[] for _ in range(n)]
    chk_adj = [[] for _ in range(m)]
    cdeg = np.zeros(m, dtype=np.int64)

    for v in range(n):
        for e in range(dv):
            if e == 0:
                dist = np.full(m, np.iinfo(np.int64).max)
            else:
                dist = _check_distances(v, var_adj, chk_adj, m)
            open_ = cdeg < dc
            open_[var_adj[v]] = False
            if not open_.any():
                raise EncodingSetupError("PEG ran out of checks with spare degree")
            far = dist[open_].max()
            cand = np.flatnonzero(open_ & (dist == far))
            cand = cand[cdeg[cand] == cdeg[cand].min()]
            c = int(cand[rng.integers(cand.size)]) if cand.size > 1 else int(cand[0])
            var_adj[v].append(c)
            chk_adj[c].append(v)
            cdeg[c] += 1
    return LdpcCode(n, chk_adj)


def _check_distances(v, var_adj, chk_adj, m):
    """BFS distance (in check hops) from variable ``v`` to every check."""
    INF = np.iinfo(np.int64).max
    dist = np.full(m, INF)
    seen_v = {v}
    frontier = deque()
    for c in var_adj[v]:
        dist[c] = 0
        frontier.append(c)
    while frontier:
        c = frontier.popleft()
        d = dist[c] + 1
        for u in chk_adj[c]:
            if u in seen_v:
                continue
            seen_v.add(u)
            for c2 in var_adj[u]:
                if dist[c2] == INF:
                    dist[c2] = d
                    frontier.append(c2)
    return dist


def hamming74() -> LdpcCode:
    """(7,4) Hamming code with parity-check matrix ``[P^T | I3]``."""
    return LdpcCode(7, [[0, 1, 3, 4], [0, 2, 3, 5], [1, 2, 3, 6]])
