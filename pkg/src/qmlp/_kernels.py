"""Compiled statevector kernels.

A circuit reaches these kernels as flat arrays: `codes[k]` (gates.KIND_CODE),
`ctrl[k]` (-1 for single-qubit gates), `tgt[k]` and `angles[k, 0:3]`.
Qubit q is bit q of the basis index.

Noise decisions are drawn from a counter-based hash of
(seed, trajectory, gate index, qubit, channel), so every trajectory is
reproducible on its own and the result does not depend on scheduling.
"""
import math
import os

import numba
import numpy as np
from numba import njit, prange

# Prefer OpenMP over TBB unless the user chose: an outdated TBB only produces
# a warning on every import before numba falls back anyway.
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

# must match gates.KINDS order
X, Z, H, RX, RY, RZ, ROT, CNOT, CRX, CRY, CROT = range(11)
_N_PARAMS = np.array([0, 0, 0, 1, 1, 1, 3, 0, 1, 1, 3], dtype=np.int64)

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


# ---------------------------------------------------------------- matrices

@njit(cache=True)
def _base(code):
    if code == CNOT:
        return X
    if code == CRX:
        return RX
    if code == CRY:
        return RY
    if code == CROT:
        return ROT
    return code


@njit(cache=True)
def _mat_rz(a):
    return (complex(math.cos(a / 2), -math.sin(a / 2)), 0j, 0j,
            complex(math.cos(a / 2), math.sin(a / 2)))


@njit(cache=True)
def _mat_ry(a):
    c, s = math.cos(a / 2), math.sin(a / 2)
    return (complex(c, 0.0), complex(-s, 0.0), complex(s, 0.0), complex(c, 0.0))


@njit(cache=True)
def _mat_rx(a):
    c, s = math.cos(a / 2), math.sin(a / 2)
    return (complex(c, 0.0), complex(0.0, -s), complex(0.0, -s), complex(c, 0.0))


@njit(cache=True)
def _mul(a, b):
    return (a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3])


@njit(cache=True)
def mat2(code, a0, a1, a2):
    """2x2 matrix (row-major tuple) of the gate, or of the target block for controlled gates."""
    b = _base(code)
    if b == X:
        return (0j, 1 + 0j, 1 + 0j, 0j)
    if b == Z:
        return (1 + 0j, 0j, 0j, -1 + 0j)
    if b == H:
        h = complex(_INV_SQRT2, 0.0)
        return (h, h, h, -h)
    if b == RX:
        return _mat_rx(a0)
    if b == RY:
        return _mat_ry(a0)
    if b == RZ:
        return _mat_rz(a0)
    # ROT(phi, theta, omega) = RZ(omega) RY(theta) RZ(phi)
    return _mul(_mat_rz(a2), _mul(_mat_ry(a1), _mat_rz(a0)))


@njit(cache=True)
def _scale(m, s):
    return (m[0] * s, m[1] * s, m[2] * s, m[3] * s)


@njit(cache=True)
def dmat2(code, a0, a1, a2, j):
    """Derivative of mat2 with respect to angle j."""
    b = _base(code)
    # d/da exp(-i a P / 2) = -i/2 P exp(-i a P / 2)
    if b == RX:
        return _scale(_mul((0j, 1 + 0j, 1 + 0j, 0j), _mat_rx(a0)), -0.5j)
    if b == RY:
        return _scale(_mul((0j, -1j, 1j, 0j), _mat_ry(a0)), -0.5j)
    if b == RZ:
        return _scale(_mul((1 + 0j, 0j, 0j, -1 + 0j), _mat_rz(a0)), -0.5j)
    zp, yt, zo = _mat_rz(a0), _mat_ry(a1), _mat_rz(a2)
    if j == 0:
        zp = _scale(_mul((1 + 0j, 0j, 0j, -1 + 0j), zp), -0.5j)
    elif j == 1:
        yt = _scale(_mul((0j, -1j, 1j, 0j), yt), -0.5j)
    else:
        zo = _scale(_mul((1 + 0j, 0j, 0j, -1 + 0j), zo), -0.5j)
    return _mul(zo, _mul(yt, zp))


# ---------------------------------------------------------------- application

_FAST = dict(cache=True, fastmath=True, error_model="numpy")


@njit(**_FAST)
def apply_1q(state, t, m):
    # real arithmetic on the interleaved (re, im) view vectorizes; complex ops do not
    s = state.view(np.float64)
    ar, ai, br, bi = m[0].real, m[0].imag, m[1].real, m[1].imag
    cr, ci, dr, di = m[2].real, m[2].imag, m[3].real, m[3].imag
    stride = 1 << t
    for base in range(0, state.size, 2 * stride):
        for i in range(base, base + stride):
            j = 2 * i
            l = 2 * (i + stride)
            xr = s[j]
            xi = s[j + 1]
            yr = s[l]
            yi = s[l + 1]
            s[j] = ar * xr - ai * xi + br * yr - bi * yi
            s[j + 1] = ar * xi + ai * xr + br * yi + bi * yr
            s[l] = cr * xr - ci * xi + dr * yr - di * yi
            s[l + 1] = cr * xi + ci * xr + dr * yi + di * yr


@njit(cache=True)
def _pair_index(k, c, t):
    lo = min(c, t)
    hi = max(c, t)
    i = ((k >> lo) << (lo + 1)) | (k & ((1 << lo) - 1))
    i = ((i >> hi) << (hi + 1)) | (i & ((1 << hi) - 1))
    i0 = i | (1 << c)
    return i0, i0 | (1 << t)


@njit(**_FAST)
def apply_c1q(state, c, t, m):
    """2x2 `m` on the target wherever the control bit is set."""
    s = state.view(np.float64)
    ar, ai, br, bi = m[0].real, m[0].imag, m[1].real, m[1].imag
    cr, ci, dr, di = m[2].real, m[2].imag, m[3].real, m[3].imag
    lo = min(c, t)
    hs = 1 << max(c, t)
    ls = 1 << lo
    cb = 1 << c
    tb = 1 << t
    for outer in range(0, state.size, 2 * hs):
        for mid in range(outer, outer + hs, 2 * ls):
            start = mid | cb
            for i in range(start, start + ls):
                j = 2 * i
                l = 2 * (i | tb)
                xr = s[j]
                xi = s[j + 1]
                yr = s[l]
                yi = s[l + 1]
                s[j] = ar * xr - ai * xi + br * yr - bi * yi
                s[j + 1] = ar * xi + ai * xr + br * yi + bi * yr
                s[l] = cr * xr - ci * xi + dr * yr - di * yi
                s[l + 1] = cr * xi + ci * xr + dr * yi + di * yr


@njit(cache=True)
def apply_cnot(state, c, t):
    for k in range(state.size >> 2):
        i0, i1 = _pair_index(k, c, t)
        a = state[i0]
        state[i0] = state[i1]
        state[i1] = a


@njit(cache=True)
def apply_x(state, t):
    stride = 1 << t
    low = stride - 1
    for k in range(state.size >> 1):
        i0 = ((k >> t) << (t + 1)) | (k & low)
        a = state[i0]
        state[i0] = state[i0 | stride]
        state[i0 | stride] = a


@njit(cache=True)
def apply_z(state, t):
    stride = 1 << t
    low = stride - 1
    for k in range(state.size >> 1):
        i1 = ((k >> t) << (t + 1)) | (k & low) | stride
        state[i1] = -state[i1]


@njit(cache=True)
def apply_op(state, code, c, t, a0, a1, a2):
    if code == CNOT:
        apply_cnot(state, c, t)
    elif c >= 0:
        apply_c1q(state, c, t, mat2(code, a0, a1, a2))
    elif code == X:
        apply_x(state, t)
    elif code == Z:
        apply_z(state, t)
    else:
        apply_1q(state, t, mat2(code, a0, a1, a2))


@njit(cache=True)
def run_ops(state, codes, ctrl, tgt, angles):
    """Apply every op in order, one pass per gate (reference path, no fusion)."""
    for k in range(codes.size):
        apply_op(state, codes[k], ctrl[k], tgt[k], angles[k, 0], angles[k, 1], angles[k, 2])


# ---------------------------------------------------------------- measurement

@njit(**_FAST)
def expect_z_all(state, n, out):
    """<Z_q> for every qubit by repeatedly folding the top qubit out of |amp|^2."""
    s = state.view(np.float64)
    p = np.empty(state.size, dtype=np.float64)
    for i in range(state.size):
        p[i] = s[2 * i] * s[2 * i] + s[2 * i + 1] * s[2 * i + 1]
    for q in range(n - 1, -1, -1):
        half = 1 << q
        s0 = 0.0
        s1 = 0.0
        for i in range(half):
            a = p[i]
            b = p[i + half]
            s0 += a
            s1 += b
            p[i] = a + b
        out[q] = s0 - s1


@njit(cache=True)
def expect_z(state, q):
    stride = 1 << q
    s = 0.0
    for i in range(state.size):
        a = state[i]
        pr = a.real * a.real + a.imag * a.imag
        if i & stride:
            s -= pr
        else:
            s += pr
    return s


@njit(cache=True)
def _z_diagonal(n, weights):
    """Diagonal of sum_q w_q Z_q."""
    d = np.zeros(1 << n, dtype=np.float64)
    size = 1
    for q in range(n):
        w = weights[q]
        for i in range(size):
            d[i + size] = d[i] - w
            d[i] = d[i] + w
        size <<= 1
    return d


# ---------------------------------------------------------------- noise stream

@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def noise_uniform(seed, traj, gate, qubit, channel):
    """Uniform [0, 1) draw for one noise decision point; channel 0 = bit flip, 1 = phase flip."""
    h = _mix(seed + np.uint64(0x9E3779B97F4A7C15))
    h = _mix(h ^ np.uint64(traj))
    h = _mix(h ^ np.uint64(gate))
    h = _mix(h ^ np.uint64(2 * qubit + channel))
    return float(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _flips(seed, traj, k, q, pbit, pphase):
    fx = pbit > 0.0 and noise_uniform(seed, traj, k, q, 0) < pbit
    fz = pphase > 0.0 and noise_uniform(seed, traj, k, q, 1) < pphase
    return fx, fz


# ---------------------------------------------------------------- fused simulation
#
# A run carries (state, pending, dirty, started). pending[q] is a 2x2 not yet
# applied to qubit q. Until the first two-qubit gate the register is a
# product state and `state` is untouched ("not started").

@njit(cache=True)
def _reset_pending(pending, dirty, q):
    pending[q, 0] = 1.0
    pending[q, 1] = 0.0
    pending[q, 2] = 0.0
    pending[q, 3] = 1.0
    dirty[q] = False


@njit(cache=True)
def _get(pending, q):
    return (pending[q, 0], pending[q, 1], pending[q, 2], pending[q, 3])


@njit(cache=True)
def _flush(state, pending, dirty, q):
    if dirty[q]:
        apply_1q(state, q, _get(pending, q))
        _reset_pending(pending, dirty, q)


@njit(cache=True)
def _push(pending, dirty, q, m):
    r = _mul(m, _get(pending, q))
    pending[q, 0] = r[0]
    pending[q, 1] = r[1]
    pending[q, 2] = r[2]
    pending[q, 3] = r[3]
    dirty[q] = True


@njit(cache=True)
def _product_state(state, pending, dirty, n):
    # column 0 of each pending matrix, tensored with qubit 0 as the lowest bit
    state[:] = 0.0
    state[0] = 1.0
    size = 1
    for q in range(n):
        v0 = pending[q, 0]
        v1 = pending[q, 2]
        for i in range(size):
            a = state[i]
            state[i] = a * v0
            state[i + size] = a * v1
        size <<= 1
        _reset_pending(pending, dirty, q)


@njit(cache=True)
def _is_diagonal(m):
    return m[1] == 0 and m[2] == 0


@njit(cache=True)
def _is_antidiagonal(m):
    return m[0] == 0 and m[3] == 0


@njit(cache=True)
def _commutes(a, b):
    ab = _mul(a, b)
    ba = _mul(b, a)
    tol = 1e-15
    return (abs(ab[0] - ba[0]) <= tol and abs(ab[1] - ba[1]) <= tol
            and abs(ab[2] - ba[2]) <= tol and abs(ab[3] - ba[3]) <= tol)


@njit(cache=True)
def _two_qubit(state, pending, dirty, code, c, t, a0, a1, a2):
    m = mat2(code, a0, a1, a2)
    # a diagonal pending gate on the control, or one commuting with M on the
    # target, passes through the controlled gate and stays deferred
    if dirty[c] and not _is_diagonal(_get(pending, c)):
        _flush(state, pending, dirty, c)
    if dirty[t] and not _commutes(_get(pending, t), m):
        _flush(state, pending, dirty, t)
    if code == CNOT:
        apply_cnot(state, c, t)
    else:
        apply_c1q(state, c, t, m)


_PX = (0j, 1 + 0j, 1 + 0j, 0j)
_PZ = (1 + 0j, 0j, 0j, -1 + 0j)


@njit(cache=True)
def _run(state, pending, dirty, started, n, codes, ctrl, tgt, angles, k0, k1,
         pbit, pphase, seed, traj):
    """Ops k0..k1-1 with sampled Pauli errors after each gate; returns `started`."""
    noisy = pbit > 0.0 or pphase > 0.0
    for k in range(k0, k1):
        code = codes[k]
        c = ctrl[k]
        t = tgt[k]
        if c < 0:
            _push(pending, dirty, t, mat2(code, angles[k, 0], angles[k, 1], angles[k, 2]))
        else:
            if not started:
                _product_state(state, pending, dirty, n)
                started = True
            _two_qubit(state, pending, dirty, code, c, t, angles[k, 0], angles[k, 1],
                       angles[k, 2])
        if noisy:
            if c >= 0:
                fx, fz = _flips(seed, traj, k, c, pbit, pphase)
                if fx:
                    _push(pending, dirty, c, _PX)
                if fz:
                    _push(pending, dirty, c, _PZ)
            fx, fz = _flips(seed, traj, k, t, pbit, pphase)
            if fx:
                _push(pending, dirty, t, _PX)
            if fz:
                _push(pending, dirty, t, _PZ)
    return started


@njit(cache=True)
def _finalize(state, pending, dirty, started, n):
    if not started:
        _product_state(state, pending, dirty, n)
    else:
        for q in range(n):
            _flush(state, pending, dirty, q)


@njit(cache=True)
def _measure(state, pending, dirty, started, n, z):
    """<Z_q> of the run without materializing Z-invisible pending gates."""
    if not started:
        for q in range(n):
            v0 = pending[q, 0]
            v1 = pending[q, 2]
            z[q] = (v0.real * v0.real + v0.imag * v0.imag) - (v1.real * v1.real + v1.imag * v1.imag)
        return
    negate = np.zeros(n, dtype=np.bool_)
    for q in range(n):
        if dirty[q]:
            m = _get(pending, q)
            if _is_diagonal(m):
                continue
            if _is_antidiagonal(m):
                negate[q] = True
                continue
            _flush(state, pending, dirty, q)
    expect_z_all(state, n, z)
    for q in range(n):
        if negate[q]:
            z[q] = -z[q]


@njit(cache=True)
def _new_run(n):
    pending = np.zeros((n, 4), dtype=np.complex128)
    pending[:, 0] = 1.0
    pending[:, 3] = 1.0
    dirty = np.zeros(n, dtype=np.bool_)
    return pending, dirty


@njit(cache=True)
def simulate(state, n, codes, ctrl, tgt, angles, pbit, pphase, seed, traj):
    """Final state of one trajectory from |0...0>, written into `state`."""
    pending, dirty = _new_run(n)
    started = _run(state, pending, dirty, False, n, codes, ctrl, tgt, angles, 0, codes.size,
                   pbit, pphase, seed, traj)
    _finalize(state, pending, dirty, started, n)


@njit(cache=True)
def expectations(state, n, codes, ctrl, tgt, angles, pbit, pphase, seed, traj, z):
    """<Z_q> of one trajectory; `state` is scratch."""
    pending, dirty = _new_run(n)
    started = _run(state, pending, dirty, False, n, codes, ctrl, tgt, angles, 0, codes.size,
                   pbit, pphase, seed, traj)
    _measure(state, pending, dirty, started, n, z)


@njit(cache=True)
def first_error(n_ops, ctrl, tgt, pbit, pphase, seed, traj):
    """Index of the first gate followed by any sampled flip, or n_ops if none."""
    for k in range(n_ops):
        if ctrl[k] >= 0:
            fx, fz = _flips(seed, traj, k, ctrl[k], pbit, pphase)
            if fx or fz:
                return k
        fx, fz = _flips(seed, traj, k, tgt[k], pbit, pphase)
        if fx or fz:
            return k
    return n_ops


@njit(cache=True)
def _noisy_mean_one(n, codes, ctrl, tgt, angles, pbit, pphase, seed, trajs, checkpoints,
                    out_traj, out_mean, want_each):
    """Trajectory mean for one sample, resuming each trajectory from the noiseless
    run at the last checkpoint before its first error. Bit-identical to running
    every trajectory from scratch."""
    dim = 1 << n
    n_ck = checkpoints.size
    snaps = np.empty((n_ck, dim), dtype=np.complex128)
    snap_pending = np.empty((n_ck, n, 4), dtype=np.complex128)
    snap_dirty = np.empty((n_ck, n), dtype=np.bool_)
    snap_started = np.zeros(n_ck, dtype=np.bool_)
    state = np.empty(dim, dtype=np.complex128)
    pending, dirty = _new_run(n)
    started = False
    k = 0
    for i in range(n_ck):
        started = _run(state, pending, dirty, started, n, codes, ctrl, tgt, angles, k,
                       checkpoints[i], 0.0, 0.0, seed, 0)
        k = checkpoints[i]
        if started:
            snaps[i, :] = state
        snap_pending[i] = pending
        snap_dirty[i] = dirty
        snap_started[i] = started
    started = _run(state, pending, dirty, started, n, codes, ctrl, tgt, angles, k, codes.size,
                   0.0, 0.0, seed, 0)
    ideal = np.empty(n, dtype=np.float64)
    _measure(state, pending, dirty, started, n, ideal)

    z = np.empty(n, dtype=np.float64)
    acc = np.zeros(n, dtype=np.float64)
    for r in range(trajs.size):
        traj = trajs[r]
        k_err = first_error(codes.size, ctrl, tgt, pbit, pphase, seed, traj)
        if k_err == codes.size:
            for q in range(n):
                z[q] = ideal[q]
        else:
            # last checkpoint at or before the first noisy gate
            i = -1
            for j in range(n_ck):
                if checkpoints[j] <= k_err:
                    i = j
            if i < 0:
                pending, dirty = _new_run(n)
                started = _run(state, pending, dirty, False, n, codes, ctrl, tgt, angles, 0,
                               codes.size, pbit, pphase, seed, traj)
            else:
                if snap_started[i]:
                    state[:] = snaps[i]
                pending[:, :] = snap_pending[i]
                dirty[:] = snap_dirty[i]
                started = _run(state, pending, dirty, snap_started[i], n, codes, ctrl, tgt,
                               angles, checkpoints[i], codes.size, pbit, pphase, seed, traj)
            _measure(state, pending, dirty, started, n, z)
        for q in range(n):
            acc[q] += z[q]
            if want_each:
                out_traj[r, q] = z[q]
    for q in range(n):
        out_mean[q] = acc[q] / trajs.size


@njit(cache=True)
def _dagger(m):
    return (m[0].conjugate(), m[2].conjugate(), m[1].conjugate(), m[3].conjugate())


@njit(**_FAST)
def _unapply_run(s, u, start, stop, off, d, c):
    """_unapply_pair body over pairs (i, i + off) for i in [start, stop)."""
    d0, d1, d2, d3, d4, d5, d6, d7 = d
    c0 = c1 = c2 = c3 = c4 = c5 = c6 = c7 = 0.0
    for i in range(start, stop):
        j = 2 * i
        l = 2 * (i + off)
        pr0 = s[j]
        pi0 = s[j + 1]
        pr1 = s[l]
        pi1 = s[l + 1]
        qr0 = d0 * pr0 - d1 * pi0 + d2 * pr1 - d3 * pi1
        qi0 = d0 * pi0 + d1 * pr0 + d2 * pi1 + d3 * pr1
        qr1 = d4 * pr0 - d5 * pi0 + d6 * pr1 - d7 * pi1
        qi1 = d4 * pi0 + d5 * pr0 + d6 * pi1 + d7 * pr1
        s[j] = qr0
        s[j + 1] = qi0
        s[l] = qr1
        s[l + 1] = qi1
        lr0 = u[j]
        li0 = u[j + 1]
        lr1 = u[l]
        li1 = u[l + 1]
        c0 += lr0 * qr0 + li0 * qi0
        c1 += lr0 * qi0 - li0 * qr0
        c2 += lr0 * qr1 + li0 * qi1
        c3 += lr0 * qi1 - li0 * qr1
        c4 += lr1 * qr0 + li1 * qi0
        c5 += lr1 * qi0 - li1 * qr0
        c6 += lr1 * qr1 + li1 * qi1
        c7 += lr1 * qi1 - li1 * qr1
        u[j] = d0 * lr0 - d1 * li0 + d2 * lr1 - d3 * li1
        u[j + 1] = d0 * li0 + d1 * lr0 + d2 * li1 + d3 * lr1
        u[l] = d4 * lr0 - d5 * li0 + d6 * lr1 - d7 * li1
        u[l + 1] = d4 * li0 + d5 * lr0 + d6 * li1 + d7 * lr1
    return c0, c1, c2, c3, c4, c5, c6, c7


@njit(cache=True)
def _unapply_pair(psi, lam, c, t, m):
    """psi <- M^dag psi and lam <- M^dag lam on the target (control=1 subspace if c >= 0).

    Returns C_ab = sum conj(lam_a) psi_b, formed from the already-unapplied psi
    and the not-yet-unapplied lam.
    """
    s = psi.view(np.float64)
    u = lam.view(np.float64)
    dg = _dagger(m)
    d = (dg[0].real, dg[0].imag, dg[1].real, dg[1].imag,
         dg[2].real, dg[2].imag, dg[3].real, dg[3].imag)
    acc = np.zeros(8)
    tb = 1 << t
    if c < 0:
        for base in range(0, psi.size, 2 * tb):
            r = _unapply_run(s, u, base, base + tb, tb, d, c)
            for k in range(8):
                acc[k] += r[k]
    else:
        hs = 1 << max(c, t)
        ls = 1 << min(c, t)
        cb = 1 << c
        for outer in range(0, psi.size, 2 * hs):
            for mid in range(outer, outer + hs, 2 * ls):
                start = mid | cb
                r = _unapply_run(s, u, start, start + ls, tb, d, c)
                for k in range(8):
                    acc[k] += r[k]
    return (complex(acc[0], acc[1]), complex(acc[2], acc[3]),
            complex(acc[4], acc[5]), complex(acc[6], acc[7]))


@njit(cache=True)
def _unapply_pauli(state, q, fx, fz):
    if fz:
        apply_z(state, q)
    if fx:
        apply_x(state, q)


@njit(cache=True)
def adjoint(psi, lam_weights, n, codes, ctrl, tgt, angles, pbit, pphase, seed, traj,
            first_op, need, grad):
    """Reverse pass for E = <psi| sum_q w_q Z_q |psi>; fills grad[k, j] = dE/dangles[k, j]
    for ops with need[k] set.

    `psi` must hold the final state of the same (noisy) trajectory and is consumed.
    Ops before `first_op` are not visited.
    """
    d = _z_diagonal(n, lam_weights)
    lam = np.empty_like(psi)
    for i in range(psi.size):
        lam[i] = psi[i] * d[i]
    noisy = pbit > 0.0 or pphase > 0.0
    for k in range(codes.size - 1, first_op - 1, -1):
        code = codes[k]
        c = ctrl[k]
        t = tgt[k]
        if noisy:
            fx, fz = _flips(seed, traj, k, t, pbit, pphase)
            _unapply_pauli(psi, t, fx, fz)
            _unapply_pauli(lam, t, fx, fz)
            if c >= 0:
                fx, fz = _flips(seed, traj, k, c, pbit, pphase)
                _unapply_pauli(psi, c, fx, fz)
                _unapply_pauli(lam, c, fx, fz)
        a0 = angles[k, 0]
        a1 = angles[k, 1]
        a2 = angles[k, 2]
        npar = _N_PARAMS[code]
        if npar > 0 and not need[k]:
            m = _dagger(mat2(code, a0, a1, a2))
            if c >= 0:
                apply_c1q(psi, c, t, m)
                apply_c1q(lam, c, t, m)
            else:
                apply_1q(psi, t, m)
                apply_1q(lam, t, m)
            continue
        if npar == 0:
            if code == CNOT:
                apply_cnot(psi, c, t)
                apply_cnot(lam, c, t)
            elif code == X:
                apply_x(psi, t)
                apply_x(lam, t)
            elif code == Z:
                apply_z(psi, t)
                apply_z(lam, t)
            else:
                m = mat2(code, a0, a1, a2)
                apply_1q(psi, t, m)
                apply_1q(lam, t, m)
            continue
        cm = _unapply_pair(psi, lam, c, t, mat2(code, a0, a1, a2))
        for j in range(npar):
            dm = dmat2(code, a0, a1, a2, j)
            g = dm[0] * cm[0] + dm[1] * cm[1] + dm[2] * cm[2] + dm[3] * cm[3]
            grad[k, j] = 2.0 * g.real


# ---------------------------------------------------------------- batch drivers

@njit(cache=True, parallel=True)
def forward_batch(n, codes, ctrl, tgt, angles, out):
    """Noiseless <Z> for every sample."""
    for b in prange(angles.shape[0]):
        state = np.empty(1 << n, dtype=np.complex128)
        expectations(state, n, codes, ctrl, tgt, angles[b], 0.0, 0.0, np.uint64(0), 0, out[b])


@njit(cache=True, parallel=True)
def noisy_batch(n, codes, ctrl, tgt, angles, pbit, pphase, seed, trajs, checkpoints,
                out_mean, out_traj, want_each):
    """Per-sample trajectory means (and optionally every trajectory's <Z>).

    Trajectories of one sample are accumulated in the order given inside one thread.
    """
    for b in prange(angles.shape[0]):
        _noisy_mean_one(n, codes, ctrl, tgt, angles[b], pbit, pphase, seed, trajs,
                        checkpoints, out_traj[b], out_mean[b], want_each)


@njit(cache=True, parallel=True)
def vjp_batch(n, codes, ctrl, tgt, angles, weights, pbit, pphase, seed, trajs,
              first_op, need, z_out, grad_out):
    """Per-sample <Z> (trajectory mean) and d(sum_q w[b,q] <Z_q>)/d angles."""
    nops = codes.size
    for b in prange(angles.shape[0]):
        state = np.empty(1 << n, dtype=np.complex128)
        z = np.empty(n, dtype=np.float64)
        g = np.zeros((nops, 3), dtype=np.float64)
        zacc = np.zeros(n, dtype=np.float64)
        gacc = np.zeros((nops, 3), dtype=np.float64)
        for r in range(trajs.size):
            simulate(state, n, codes, ctrl, tgt, angles[b], pbit, pphase, seed, trajs[r])
            expect_z_all(state, n, z)
            for q in range(n):
                zacc[q] += z[q]
            g[:, :] = 0.0
            adjoint(state, weights[b], n, codes, ctrl, tgt, angles[b], pbit, pphase, seed,
                    trajs[r], first_op, need, g)
            for k in range(nops):
                for j in range(3):
                    gacc[k, j] += g[k, j]
        for q in range(n):
            z_out[b, q] = zacc[q] / trajs.size
        for k in range(nops):
            for j in range(3):
                grad_out[b, k, j] = gacc[k, j] / trajs.size


@njit(cache=True, parallel=True)
def head_vjp_batch(n, codes, ctrl, tgt, angles, fc_w, fc_b, labels, scale, first_op, need,
                   z_out, dz_out, grad_out):
    """Noiseless forward, linear-softmax cross-entropy head and reverse pass in one sweep.

    For sample b: z = <Z>, logits = fc_w.T z + fc_b, loss_b = -log softmax[label];
    dz_out[b] = scale * d loss_b / dz and grad_out[b] = scale * d loss_b / d angles.
    """
    nops = codes.size
    n_cls = fc_b.size
    for b in prange(angles.shape[0]):
        state = np.empty(1 << n, dtype=np.complex128)
        z = np.empty(n, dtype=np.float64)
        simulate(state, n, codes, ctrl, tgt, angles[b], 0.0, 0.0, np.uint64(0), 0)
        expect_z_all(state, n, z)
        logits = fc_b.copy()
        for q in range(n):
            for c in range(n_cls):
                logits[c] += fc_w[q, c] * z[q]
        mx = logits.max()
        p = np.exp(logits - mx)
        p /= p.sum()
        p[labels[b]] -= 1.0
        w = np.zeros(n, dtype=np.float64)
        for q in range(n):
            acc = 0.0
            for c in range(n_cls):
                acc += fc_w[q, c] * p[c]
            w[q] = scale * acc
        g = np.zeros((nops, 3), dtype=np.float64)
        adjoint(state, w, n, codes, ctrl, tgt, angles[b], 0.0, 0.0, np.uint64(0), 0,
                first_op, need, g)
        for q in range(n):
            z_out[b, q] = z[q]
            dz_out[b, q] = w[q]
        for k in range(nops):
            for j in range(3):
                grad_out[b, k, j] = g[k, j]
