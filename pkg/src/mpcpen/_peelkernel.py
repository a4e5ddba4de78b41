"""Log-domain interpreter for compiled pedigree-peeling programs.

A peeling program is a flat sequence of integer-coded instructions acting on
two workspaces: V holds per-individual genotype tables (log scale, length 3)
and P holds parent-pair tables (3x3). Programs are compiled once per family
(see ``mendelian.compile_peeling``) and re-executed with fresh member
log-likelihood tables on every likelihood evaluation, which keeps the MCMC
hot loop free of any graph traversal.

The kernel is JIT-compiled with numba when available and falls back to the
same pure-Python code otherwise.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(func):
            return func

        return deco


NEG_INF = float("-inf")

# Instruction opcodes. Operand slots (a, b, c, d) are indexes into the V/P
# workspaces, member rows, or unused depending on the opcode.
V_LOAD = 0      # V[a] = pen3[pen_off + b]
V_ACC = 1       # V[a] += V[b]
V_PRIOR = 2     # V[a] += logprior3
P_ZERO = 3      # P[a] = 0
P_CHILD = 4     # P[a][gf,gm] += lse_gc( logT[gf,gm,gc] + V[b][gc] )
V_FROM_P_F = 5  # V[a][gf] = lse_gm( V[c][gm] + P[b][gf,gm] )
V_FROM_P_M = 6  # V[a][gm] = lse_gf( V[c][gf] + P[b][gf,gm] )
V_FROM_PAIR = 7  # V[a][gc] = lse_{gf,gm}( V[c][gf] + V[d][gm] + P[b][gf,gm] + logT[gf,gm,gc] )
ROOT = 8        # result += lse_g( V[a][g] )


@njit(cache=True)
def _lse3(a: float, b: float, c: float) -> float:
    m = a
    if b > m:
        m = b
    if c > m:
        m = c
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(math.exp(a - m) + math.exp(b - m) + math.exp(c - m))


@njit(cache=True)
def run_program(instrs, i0, i1, pen_off, pen3, logT, logprior3, V, P):
    """Execute instructions [i0, i1) and return the log likelihood."""
    acc = 0.0
    for t in range(i0, i1):
        op = instrs[t, 0]
        a = instrs[t, 1]
        b = instrs[t, 2]
        c = instrs[t, 3]
        d = instrs[t, 4]
        if op == V_LOAD:
            for g in range(3):
                V[a, g] = pen3[pen_off + b, g]
        elif op == V_ACC:
            for g in range(3):
                V[a, g] += V[b, g]
        elif op == V_PRIOR:
            for g in range(3):
                V[a, g] += logprior3[g]
        elif op == P_ZERO:
            for gf in range(3):
                for gm in range(3):
                    P[a, gf, gm] = 0.0
        elif op == P_CHILD:
            for gf in range(3):
                for gm in range(3):
                    P[a, gf, gm] += _lse3(
                        logT[gf, gm, 0] + V[b, 0],
                        logT[gf, gm, 1] + V[b, 1],
                        logT[gf, gm, 2] + V[b, 2],
                    )
        elif op == V_FROM_P_F:
            for gf in range(3):
                V[a, gf] = _lse3(
                    V[c, 0] + P[b, gf, 0],
                    V[c, 1] + P[b, gf, 1],
                    V[c, 2] + P[b, gf, 2],
                )
        elif op == V_FROM_P_M:
            for gm in range(3):
                V[a, gm] = _lse3(
                    V[c, 0] + P[b, 0, gm],
                    V[c, 1] + P[b, 1, gm],
                    V[c, 2] + P[b, 2, gm],
                )
        elif op == V_FROM_PAIR:
            for gc in range(3):
                m = NEG_INF
                for gf in range(3):
                    for gm in range(3):
                        t2 = V[c, gf] + V[d, gm] + P[b, gf, gm] + logT[gf, gm, gc]
                        if t2 > m:
                            m = t2
                if m == NEG_INF:
                    V[a, gc] = NEG_INF
                else:
                    s = 0.0
                    for gf in range(3):
                        for gm in range(3):
                            s += math.exp(
                                V[c, gf] + V[d, gm] + P[b, gf, gm] + logT[gf, gm, gc] - m
                            )
                    V[a, gc] = m + math.log(s)
        elif op == ROOT:
            acc += _lse3(V[a, 0], V[a, 1], V[a, 2])
    return acc


@njit(cache=True)
def run_batch(instrs, offsets, pen_offsets, pen3, logT, logprior3, V, P, out):
    """Execute every family's program against the stacked pen3 matrix."""
    for i in range(offsets.shape[0] - 1):
        out[i] = run_program(
            instrs, offsets[i], offsets[i + 1], pen_offsets[i], pen3, logT, logprior3, V, P
        )


def workspaces(n_v: int, n_p: int) -> tuple[np.ndarray, np.ndarray]:
    """Allocate V/P workspaces large enough for a program (or batch of them)."""
    return (
        np.zeros((max(n_v, 1), 3), dtype=np.float64),
        np.zeros((max(n_p, 1), 3, 3), dtype=np.float64),
    )
