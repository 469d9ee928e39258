"""Compiled sampling kernels.

Random numbers come from a counter-based generator: a replicate's stream
state is ``[k0, k1, counter]`` with keys derived from ``(seed,
replicate_index)``, and each draw hashes the counter with the
SplitMix64 finalizer. Streams of different replicates never interact, so
results do not depend on how replicates are scheduled.

Parameter vector layout (``float64``), built by ``simulate._pack``:

====  =========================================
idx   meaning
====  =========================================
0     gamma (offspring tail exponent)
1     c (constant offspring slowly varying value)
2     mu (branching rate)
3     alpha (immigration tail exponent)
4     l_c (constant immigration slowly varying value, at most 1)
5     theta (intensity exponent)
6     c_R (intensity scale)
7     beta_R (intensity log power, 0 for constant)
8     tau0 (intensity offset)
9     t_end
10    log of the offspring tail constant ``c gamma / Gamma(1 - gamma)``
11    log A(0) of the Kanter function
====  =========================================
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

U64 = np.uint64
CAP = np.int64(2**62)
_CAP_F = 4.611686018427388e18
_GOLD = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_S30 = U64(30)
_S27 = U64(27)
_S31 = U64(31)
_S11 = U64(11)
_ONE = U64(1)
_TWO_M53 = 1.0 / 9007199254740992.0
_LOG_2PI = math.log(2.0 * math.pi)

TABLE_SIZE = 1 << 16
# reduced-tree work bound per line before switching to direct draws
TREE_LIMIT = 16.0

_jit = njit(cache=True, error_model="numpy")


# ------------------------------------------------------------------ RNG
@_jit
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@_jit
def seed_state(seed, rep, state):
    """Initialize ``state`` for replicate ``rep`` of ``seed`` (both uint64)."""
    k0 = _mix(seed + _GOLD)
    state[0] = k0
    state[1] = _mix(k0 ^ _mix(rep * _GOLD + _M1))
    state[2] = U64(0)


@_jit
def next_u64(state):
    c = state[2]
    state[2] = c + _ONE
    return _mix(_mix(c ^ state[0]) + state[1])


@_jit
def uniform(state):
    """Uniform on (0, 1), never 0 or 1."""
    return (float(next_u64(state) >> _S11) + 0.5) * _TWO_M53


@_jit
def exponential(state):
    return -math.log(uniform(state))


@_jit
def normal(state):
    u1 = uniform(state)
    u2 = uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


# ------------------------------------------------------ continuous laws
@_jit
def _expm1_minus_x(h):
    """``expm1(h) - h`` without cancellation."""
    if abs(h) < 1e-3:
        return h * h * (0.5 + h * (1.0 / 6.0 + h * (1.0 / 24.0 + h / 120.0)))
    return math.expm1(h) - h


@_jit
def log_gamma_rv(shape, state):
    """Log of a Gamma(shape, 1) variate (Marsaglia-Tsang)."""
    boost = 0.0
    if shape < 1.0:
        boost = math.log(uniform(state)) / shape
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = normal(state)
        e = c * x
        if e <= -1.0:
            continue
        h = 3.0 * math.log1p(e)
        u = uniform(state)
        # accept iff log u < x^2/2 + d (1 - v + log v), v = e^h
        if math.log(u) < 0.5 * x * x - d * _expm1_minus_x(h):
            return math.log(d) + h + boost


@_jit
def beta_rv(a, b, state):
    la = log_gamma_rv(a, state)
    lb = log_gamma_rv(b, state)
    return 1.0 / (1.0 + math.exp(lb - la))


# ------------------------------------------------------- discrete laws
@_jit
def binomial(n, p, state):
    """Binomial(n, p) for ``n`` up to ``2**62`` by order-statistic splitting."""
    x = np.int64(0)
    if p <= 0.0 or n <= 0:
        return x
    if p >= 1.0:
        return n
    while n > 64:
        i = n // 2 + 1
        b = beta_rv(float(i), float(n + 1 - i), state)
        if b >= p:
            n = i - 1
            p = p / b
        else:
            x += i
            n = n - i
            p = (p - b) / (1.0 - b)
        if p <= 0.0:
            return x
        if p >= 1.0:
            return x + n
    for _ in range(n):
        if uniform(state) < p:
            x += 1
    return x


@_jit
def _one_plus_x_log1p_minus_x(x):
    """``(1 + x) log1p(x) - x``."""
    if abs(x) < 1e-2:
        s = 0.0
        xn = x * x
        for n in range(2, 10):
            s += xn / (n * (n - 1)) * (1.0 if n % 2 == 0 else -1.0)
            xn *= x
        return s
    return (1.0 + x) * math.log1p(x) - x


@_jit
def poisson_log_pmf(k, lam):
    """``log P(Poisson(lam) = k)`` accurate for huge ``k`` and ``lam``."""
    if k < 10.0:
        return -lam + k * math.log(lam) - math.lgamma(k + 1.0)
    x = (k - lam) / lam
    corr = 1.0 / (12.0 * k) - 1.0 / (360.0 * k**3) + 1.0 / (1260.0 * k**5)
    return -lam * _one_plus_x_log1p_minus_x(x) - 0.5 * (_LOG_2PI + math.log(k)) - corr


@_jit
def poisson(lam, state):
    """Poisson(lam); values beyond ``2**62`` are clamped."""
    if lam <= 0.0:
        return np.int64(0)
    if lam > 2.0 * _CAP_F:
        return CAP
    if lam < 10.0:
        limit = math.exp(-lam)
        k = np.int64(0)
        prod = uniform(state)
        while prod > limit:
            k += 1
            prod *= uniform(state)
        return k
    # transformed rejection with squeeze (Hoermann 1993)
    slam = math.sqrt(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = uniform(state) - 0.5
        v = uniform(state)
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            break
        if k < 0.0 or (us < 0.013 and v > us):
            continue
        if math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b) <= poisson_log_pmf(k, lam):
            break
    if k >= _CAP_F:
        return CAP
    return np.int64(k)


@_jit
def sibuya_float(alpha, state):
    """Sibuya(alpha) variate as a float (no clamping)."""
    if alpha >= 1.0:
        return 1.0
    # N | P ~ Geometric(P) on {1, 2, ...} with P ~ Beta(alpha, 1 - alpha)
    d = log_gamma_rv(alpha, state) - log_gamma_rv(1.0 - alpha, state)
    if d > 0.0:
        rate = d + math.log1p(math.exp(-d))
    else:
        rate = math.log1p(math.exp(d))
    return 1.0 + math.floor(exponential(state) / rate)


@_jit
def sibuya(alpha, state):
    v = sibuya_float(alpha, state)
    if v >= _CAP_F:
        return CAP
    return np.int64(v)


@_jit
def immigrant_batch(alpha, l_c, state):
    """Batch size with p.g.f. ``1 - l_c (1 - s)^alpha``."""
    if l_c < 1.0 and uniform(state) >= l_c:
        return np.int64(0)
    return sibuya(alpha, state)


@_jit
def _log_tail(k, gamma, log_const):
    """``log P(xi > k)`` from the closed form, for large ``k``."""
    if k < 1e7:
        return log_const + math.lgamma(k - gamma) - math.lgamma(k + 1.0)
    return log_const - (1.0 + gamma) * math.log(k) + gamma * (1.0 + gamma) / (2.0 * k)


@_jit
def _invert_tail(S, v, lo, gamma, log_const):
    """Smallest ``k >= lo`` with ``S(k) < v`` given ``S(lo) >= v``."""
    last = S.shape[0] - 1
    if S[last] >= v:
        lv = math.log(v)
        if _log_tail(_CAP_F, gamma, log_const) >= lv:
            return CAP
        a = float(last)
        b = _CAP_F
        while b - a > 1.0:
            mid = math.floor(0.5 * (a + b))
            if _log_tail(mid, gamma, log_const) >= lv:
                a = mid
            else:
                b = mid
        return np.int64(b)
    a = lo
    b = last
    while b - a > 1:
        mid = (a + b) // 2
        if S[mid] >= v:
            a = mid
        else:
            b = mid
    return np.int64(b)


@_jit
def offspring(S, gamma, log_const, state):
    """Offspring count by inversion of the survival table ``S``."""
    v = uniform(state)
    if S[0] < v:
        return np.int64(0)
    return _invert_tail(S, v, 0, gamma, log_const)


@_jit
def offspring_ge2(S, gamma, log_const, state):
    """Offspring count conditioned on being at least 2."""
    v = uniform(state) * S[1]
    return _invert_tail(S, v, 1, gamma, log_const)


# ------------------------------------------------- conditional survivor
@_jit
def _log_kanter(u, gamma):
    return (
        gamma * math.log(math.sin(gamma * math.pi * u))
        + (1.0 - gamma) * math.log(math.sin((1.0 - gamma) * math.pi * u))
        - math.log(math.sin(math.pi * u))
    ) / (1.0 - gamma)


@_jit
def survivor_size(a, gamma, log_a0, state):
    """Size at lag ``a = c gamma mu tau`` of a line started by one particle, given it survives.

    Mixed Poisson representation: the size is Poisson(Lambda) conditioned
    to be positive, with ``Lambda = (a E)^(1/gamma) (A(U)/G)^((1-gamma)/gamma)``,
    ``E`` exponential, ``G`` Gamma(1/gamma) and ``U`` drawn with density
    proportional to ``A(u)^(-(1-gamma)/gamma)``.
    """
    log_a = math.log(a)
    if gamma >= 1.0:
        while True:
            k = poisson(a * exponential(state), state)
            if k > 0:
                return k
    r = (1.0 - gamma) / gamma
    while True:
        while True:
            la = _log_kanter(uniform(state), gamma)
            if math.log(uniform(state)) <= -r * (la - log_a0):
                break
        lg = log_gamma_rv(1.0 / gamma, state)
        log_lam = (log_a + math.log(exponential(state))) / gamma + r * (la - lg)
        if log_lam > 44.0:
            return CAP
        k = poisson(math.exp(log_lam), state)
        if k > 0:
            return k


# ------------------------------------------------------------ intensity
@_jit
def intensity(t, p):
    r = p[6] * (t + p[8]) ** (-p[5])
    if p[7] != 0.0:
        r *= math.log(math.e + t) ** p[7]
    return r


@_jit
def nhpp_next(t_now, horizon, p, state):
    """Next arrival after ``t_now`` by thinning with a re-anchored envelope; -1 past ``horizon``."""
    t = t_now
    while True:
        lam = intensity(t, p)
        t += exponential(state) / lam
        if t > horizon:
            return -1.0
        if uniform(state) * lam <= intensity(t, p):
            return t


# -------------------------------------------------------------- engines
@_jit
def run_z(p, S, n0, t_end, cap, max_events, state, out):
    """Gillespie run of the branching process from ``n0`` particles.

    ``out`` receives population, immigration events, branch events,
    saturated flag and truncated flag.
    """
    n = np.int64(n0)
    t = 0.0
    nb = np.int64(0)
    sat = 0
    trunc = 0
    rate = p[2]
    while n > 0:
        t += exponential(state) / (n * rate)
        if t > t_end:
            break
        n += offspring(S, p[0], p[10], state) - 1
        nb += 1
        if n >= cap:
            n = cap
            sat = 1
            break
        if nb >= max_events:
            trunc = 1
            break
    out[0] = n
    out[1] = 0
    out[2] = nb
    out[3] = sat
    out[4] = trunc


@_jit
def run_y_gillespie(p, S, t_end, cap, max_events, state, out):
    """Gillespie run with immigration, merging the arrival and branch clocks."""
    n = np.int64(0)
    t = 0.0
    ni = np.int64(0)
    nb = np.int64(0)
    sat = 0
    trunc = 0
    ta = nhpp_next(0.0, t_end, p, state)
    while True:
        if n > 0:
            tb = t + exponential(state) / (n * p[2])
        else:
            tb = math.inf
        if ta >= 0.0 and ta < tb:
            t = ta
            ni += 1
            n += immigrant_batch(p[3], p[4], state)
            ta = nhpp_next(t, t_end, p, state)
        elif tb <= t_end:
            t = tb
            nb += 1
            n += offspring(S, p[0], p[10], state) - 1
        else:
            break
        if n >= cap:
            n = cap
            sat = 1
            break
        if ni + nb >= max_events:
            trunc = 1
            break
    out[0] = n
    out[1] = ni
    out[2] = nb
    out[3] = sat
    out[4] = trunc


@_jit
def run_y_batch(p, S, t_end, cap, max_events, state, out):
    """Exact run with immigration that samples each batch's descendants at ``t_end`` directly.

    Each arrival at time ``s`` contributes the lines of its batch that
    survive the lag ``t_end - s`` (their count is drawn directly), whose
    total size is drawn either from the reduced tree of surviving lines or
    as a sum of survivor sizes.
    Reaching ``cap`` stops the run: the population is then certified to be
    at least ``cap``.
    """
    gamma, c, mu = p[0], p[1], p[2]
    total = np.int64(0)
    ni = np.int64(0)
    steps = np.int64(0)
    sat = 0
    trunc = 0
    t = 0.0
    while True:
        t = nhpp_next(t, t_end, p, state)
        if t < 0.0:
            break
        ni += 1
        a = c * gamma * mu * (t_end - t)
        lg1a = math.log1p(a)
        # survivors of a batch with p.g.f. 1 - l_c (1-s)^alpha, each kept with
        # probability psi: none w.p. 1 - l_c psi^alpha, otherwise Sibuya(alpha)
        if uniform(state) >= p[4] * math.exp(-p[3] * lg1a / gamma):
            continue
        m = sibuya(p[3], state)
        if m >= cap - total:
            total = cap
            sat = 1
            break
        if math.expm1(lg1a / gamma) * gamma < TREE_LIMIT:
            # reduced tree: lines split at unit rate over v-time log(1 + a)
            n = m
            v = 0.0
            while True:
                v += exponential(state) / n
                if v > lg1a:
                    break
                n += offspring_ge2(S, gamma, p[10], state) - 1
                steps += 1
                if n >= cap - total:
                    break
                if steps >= max_events:
                    trunc = 1
                    break
            if n >= cap - total:
                total = cap
                sat = 1
                break
            total += n
        else:
            for _ in range(m):
                x = survivor_size(a, gamma, p[11], state)
                steps += 1
                if x >= cap - total:
                    total = cap
                    sat = 1
                    break
                total += x
                if steps >= max_events:
                    trunc = 1
                    break
            if sat == 1:
                break
        if trunc == 1:
            break
    out[0] = total
    out[1] = ni
    out[2] = steps
    out[3] = sat
    out[4] = trunc


@_jit
def run_many(p, S, seed, start, count, engine, n0, cap, max_events, out):
    """Run replicates ``start .. start + count - 1``; engine 0 = Z, 1 = Y Gillespie, 2 = Y batch."""
    state = np.zeros(3, dtype=np.uint64)
    row = np.zeros(5, dtype=np.int64)
    t_end = p[9]
    for i in range(count):
        seed_state(seed, U64(start + i), state)
        if engine == 0:
            run_z(p, S, n0, t_end, cap, max_events, state, row)
        elif engine == 1:
            run_y_gillespie(p, S, t_end, cap, max_events, state, row)
        else:
            run_y_batch(p, S, t_end, cap, max_events, state, row)
        for j in range(5):
            out[i, j] = row[j]


@_jit
def cond_log_pgf_many(p, seed, start, count, w_grid, out):
    """``log E[s^Y(t_end) | arrival history]`` per replicate at ``s = 1 - w``.

    Given the arrival times and batch sizes the p.g.f. factorizes into
    ``prod_k F(t_end - S_k; s)^{N_k}``; only the history is simulated.
    """
    state = np.zeros(3, dtype=np.uint64)
    gamma, c, mu, t_end = p[0], p[1], p[2], p[9]
    nw = w_grid.shape[0]
    lw = np.empty(nw)
    for j in range(nw):
        lw[j] = math.log(w_grid[j])
    for i in range(count):
        seed_state(seed, U64(start + i), state)
        for j in range(nw):
            out[i, j] = 0.0
        t = 0.0
        while True:
            t = nhpp_next(t, t_end, p, state)
            if t < 0.0:
                break
            if p[4] < 1.0 and uniform(state) >= p[4]:
                continue
            nb = sibuya_float(p[3], state)
            a = c * gamma * mu * (t_end - t)
            for j in range(nw):
                x = math.exp(lw[j] - math.log1p(a * math.exp(gamma * lw[j])) / gamma)
                out[i, j] += nb * math.log1p(-x)


# ----------------------------------------------------------- utilities
@_jit
def draw_many(kind, p, S, seed, rep, n, extra, out):
    """Fill ``out`` with ``n`` draws of a sampler from one stream (testing aid).

    kind: 0 offspring, 1 Sibuya, 2 Poisson(extra), 3 survivor size at lag
    parameter ``extra``, 4 binomial(n=2**40, extra), 5 uniform bits as float,
    6 offspring conditioned on >= 2.
    """
    state = np.zeros(3, dtype=np.uint64)
    seed_state(seed, rep, state)
    for i in range(n):
        if kind == 0:
            out[i] = float(offspring(S, p[0], p[10], state))
        elif kind == 1:
            out[i] = float(sibuya(p[3], state))
        elif kind == 2:
            out[i] = float(poisson(extra, state))
        elif kind == 3:
            out[i] = float(survivor_size(extra, p[0], p[11], state))
        elif kind == 4:
            out[i] = float(binomial(np.int64(1 << 40), extra, state))
        elif kind == 5:
            out[i] = uniform(state)
        else:
            out[i] = float(offspring_ge2(S, p[0], p[10], state))
