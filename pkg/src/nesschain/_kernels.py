"""Compiled inner loops for the chain integrators.

Array layout: ``q``, ``p`` are ``(B, n, d)``, ``s`` is ``(B, 2, d)`` with B
independent trajectories.  Noise is ``(B, n_steps, 2*d)`` standard normals,
left-bath components first.
"""

import math

import numpy as np
from numba import njit

EULER_MARUYAMA = 0
SPLITTING = 1


@njit(cache=True, inline="always")
def _ipow(x, m):
    out = 1.0
    for _ in range(m):
        out *= x
    return out


@njit(cache=True)
def _radial_scale(r2, exps, coefs):
    # U(x) = sum a |x|^e  =>  grad U = (sum a e |x|^(e-2)) x
    out = 0.0
    for k in range(exps.shape[0]):
        e = exps[k]
        out += coefs[k] * e * _ipow(r2, e // 2 - 1)
    return out


@njit(cache=True)
def _radial_value(r2, exps, coefs):
    out = 0.0
    for k in range(exps.shape[0]):
        out += coefs[k] * _ipow(r2, exps[k] // 2)
    return out


@njit(cache=True)
def force(q, s, on_e, on_c, in_e, in_c, lams, gams, f):
    """f <- -grad V_eff(q) + bath coupling; single trajectory, ``q`` is (n, d)."""
    n, d = q.shape
    for j in range(n):
        r2 = 0.0
        for a in range(d):
            r2 += q[j, a] * q[j, a]
        c = _radial_scale(r2, on_e, on_c)
        for a in range(d):
            f[j, a] = -c * q[j, a]
    for i in range(n - 1):
        r2 = 0.0
        for a in range(d):
            x = q[i, a] - q[i + 1, a]
            r2 += x * x
        c = _radial_scale(r2, in_e, in_c)
        for a in range(d):
            g = c * (q[i, a] - q[i + 1, a])
            f[i, a] -= g
            f[i + 1, a] += g
    for a in range(d):
        f[0, a] += lams[0] * lams[0] * q[0, a] + lams[0] * math.sqrt(gams[0]) * s[0, a]
        f[n - 1, a] += lams[1] * lams[1] * q[n - 1, a] + lams[1] * math.sqrt(gams[1]) * s[1, a]


@njit(cache=True)
def effective_potential(q, on_e, on_c, in_e, in_c, lams):
    n, d = q.shape
    v = 0.0
    for j in range(n):
        r2 = 0.0
        for a in range(d):
            r2 += q[j, a] * q[j, a]
        v += _radial_value(r2, on_e, on_c)
    for i in range(n - 1):
        r2 = 0.0
        for a in range(d):
            x = q[i, a] - q[i + 1, a]
            r2 += x * x
        v += _radial_value(r2, in_e, in_c)
    b0 = 0.0
    b1 = 0.0
    for a in range(d):
        b0 += q[0, a] * q[0, a]
        b1 += q[n - 1, a] * q[n - 1, a]
    return v - 0.5 * (lams[0] * lams[0] * b0 + lams[1] * lams[1] * b1)


@njit(cache=True)
def h_eff(q, p, on_e, on_c, in_e, in_c, lams):
    kin = 0.0
    n, d = p.shape
    for j in range(n):
        for a in range(d):
            kin += p[j, a] * p[j, a]
    return 0.5 * kin + effective_potential(q, on_e, on_c, in_e, in_c, lams)


@njit(cache=True)
def energy_g(q, p, s, on_e, on_c, in_e, in_c, lams, gams):
    d = s.shape[1]
    bath = 0.0
    for a in range(d):
        bath += gams[0] * s[0, a] * s[0, a] + gams[1] * s[1, a] * s[1, a]
    return h_eff(q, p, on_e, on_c, in_e, in_c, lams) + 0.5 * bath


@njit(cache=True)
def advance(
    q, p, s, xi, scheme, dt, on_e, on_c, in_e, in_c, lams, gams, temps,
    threshold, check_every, rec_phi, rec_kin, rec_heff, record_kin, record_heff,
):
    """Advance every trajectory by ``xi.shape[1]`` steps in place.

    Per-step records are taken at the pre-step state (left-endpoint rule):
    ``rec_phi[b, k, 0/1]`` the left/right fluxes, ``rec_kin[b, k, j]`` the
    squared momentum of site j, ``rec_heff[b, k]`` the effective Hamiltonian.
    Returns per-trajectory status: -1 if fine, else the local step index at
    which G exceeded ``threshold`` or went non-finite.
    """
    B, n, d = q.shape
    n_steps = xi.shape[1]
    status = np.full(B, -1, dtype=np.int64)
    nb = n - 1
    cL = lams[0] * math.sqrt(gams[0])
    cR = lams[1] * math.sqrt(gams[1])
    aL = lams[0] / math.sqrt(gams[0])
    aR = lams[1] / math.sqrt(gams[1])
    h = dt
    # exact OU coefficients for the s sub-step with p frozen
    eL = math.exp(-gams[0] * h)
    eR = math.exp(-gams[1] * h)
    mL = aL * (1.0 - eL) / gams[0]
    mR = aR * (1.0 - eR) / gams[1]
    if scheme == SPLITTING:
        sdL = math.sqrt(temps[0] * (1.0 - eL * eL) / gams[0])
        sdR = math.sqrt(temps[1] * (1.0 - eR * eR) / gams[1])
    else:
        sdL = math.sqrt(2.0 * temps[0] * h)
        sdR = math.sqrt(2.0 * temps[1] * h)
    f = np.empty((n, d))
    for b in range(B):
        qb = q[b]
        pb = p[b]
        sb = s[b]
        force(qb, sb, on_e, on_c, in_e, in_c, lams, gams, f)
        for k in range(n_steps):
            phL = 0.0
            phR = 0.0
            for a in range(d):
                phL += pb[0, a] * sb[0, a]
                phR += pb[nb, a] * sb[1, a]
            rec_phi[b, k, 0] = cL * phL
            rec_phi[b, k, 1] = cR * phR
            if record_kin:
                for j in range(n):
                    acc = 0.0
                    for a in range(d):
                        acc += pb[j, a] * pb[j, a]
                    rec_kin[b, k, j] = acc
            if record_heff:
                rec_heff[b, k] = h_eff(qb, pb, on_e, on_c, in_e, in_c, lams)

            if scheme == EULER_MARUYAMA:
                for a in range(d):
                    p0 = pb[0, a]
                    pn = pb[nb, a]
                    sb[0, a] = sb[0, a] - h * (gams[0] * sb[0, a] + aL * p0) - sdL * xi[b, k, a]
                    sb[1, a] = sb[1, a] - h * (gams[1] * sb[1, a] + aR * pn) - sdR * xi[b, k, d + a]
                for j in range(n):
                    for a in range(d):
                        qb[j, a] += h * pb[j, a]
                        pb[j, a] += h * f[j, a]
                force(qb, sb, on_e, on_c, in_e, in_c, lams, gams, f)
            else:
                for j in range(n):
                    for a in range(d):
                        pb[j, a] += 0.5 * h * f[j, a]
                        qb[j, a] += 0.5 * h * pb[j, a]
                for a in range(d):
                    sb[0, a] = eL * sb[0, a] - mL * pb[0, a] - sdL * xi[b, k, a]
                    sb[1, a] = eR * sb[1, a] - mR * pb[nb, a] - sdR * xi[b, k, d + a]
                for j in range(n):
                    for a in range(d):
                        qb[j, a] += 0.5 * h * pb[j, a]
                force(qb, sb, on_e, on_c, in_e, in_c, lams, gams, f)
                for j in range(n):
                    for a in range(d):
                        pb[j, a] += 0.5 * h * f[j, a]

            if (k + 1) % check_every == 0 or k == n_steps - 1:
                g = energy_g(qb, pb, sb, on_e, on_c, in_e, in_c, lams, gams)
                if not (g <= threshold):
                    status[b] = k
                    break
    return status


@njit(cache=True)
def advance_pair_distance(
    qa, pa, sa, qb, pb, sb, xi, scheme, dt, on_e, on_c, in_e, in_c, lams, gams, temps,
    threshold, record_every, out,
):
    """Drive two single trajectories with the same noise; record their distance.

    ``out[m]`` is the Euclidean (q, p, s) distance after ``(m+1)*record_every``
    steps.  Returns -1 or the step where either trajectory blew up.
    """
    n, d = qa.shape
    n_steps = xi.shape[0]
    Q = np.empty((2, n, d))
    P = np.empty((2, n, d))
    S = np.empty((2, 2, d))
    Q[0] = qa
    Q[1] = qb
    P[0] = pa
    P[1] = pb
    S[0] = sa
    S[1] = sb
    dummy_phi = np.empty((2, record_every, 2))
    dummy_kin = np.empty((1, 1, 1))
    dummy_h = np.empty((1, 1))
    X = np.empty((2, record_every, 2 * d))
    m = 0
    for start in range(0, n_steps - record_every + 1, record_every):
        for k in range(record_every):
            for c in range(2 * d):
                X[0, k, c] = xi[start + k, c]
                X[1, k, c] = xi[start + k, c]
        st = advance(Q, P, S, X, scheme, dt, on_e, on_c, in_e, in_c, lams, gams, temps,
                     threshold, record_every, dummy_phi, dummy_kin, dummy_h, False, False)
        if st[0] >= 0:
            return start + st[0]
        if st[1] >= 0:
            return start + st[1]
        acc = 0.0
        for j in range(n):
            for a in range(d):
                acc += (Q[0, j, a] - Q[1, j, a]) ** 2 + (P[0, j, a] - P[1, j, a]) ** 2
        for i in range(2):
            for a in range(d):
                acc += (S[0, i, a] - S[1, i, a]) ** 2
        out[m] = math.sqrt(acc)
        m += 1
    qa[:] = Q[0]
    qb[:] = Q[1]
    pa[:] = P[0]
    pb[:] = P[1]
    sa[:] = S[0]
    sb[:] = S[1]
    return -1
