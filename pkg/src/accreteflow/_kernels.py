"""Hot numeric kernels, each with a numba ``@njit`` flavour and a pure-numpy twin.

The dispatch at the bottom selects the njit flavour unless numba is missing or
``ACCRETEFLOW_DISABLE_NUMBA`` is set (see `_accel`).  Twins implement the same
arithmetic so results agree to roundoff; `tests/test_kernels.py` pins that and
``benchmarks/kernel_bench.py`` times both.

Stacked-array conventions for the flow RHS kernel:

* ``ctr``: shape (NFIELD, nx, ny, nz), cell-center fields indexed by F_*.
* ``nb``: shape (NFIELD, 6, nx, ny, nz), per-axis neighbor values with wall
  ghost rules already applied (built once in numpy by the solver); direction
  index D_* is (x-, x+, y-, y+, z-, z+).
* ``src``: shape (6, nx, ny, nz): mass rate, momentum rate (3), volume rate,
  heat rate.
* ``grav``: shape (3, nx, ny, nz) gravitational acceleration.
* output: shape (8, nx, ny, nz): d_rho, d_mx, d_my, d_mz, d_J, d_w,
  viscous dissipation xi, adiabatic power gam_J*div(v).
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit, prange

# field indices into ctr / nb stacks
F_RHO, F_MX, F_MY, F_MZ, F_J, F_W, F_TH, F_P, F_CS, F_KAP, F_MU, F_LAM, F_DIV = range(13)
NFIELD = 13
# direction indices
D_XM, D_XP, D_YM, D_YP, D_ZM, D_ZP = range(6)

# src indices
S_RMASS, S_MX, S_MY, S_MZ, S_VOL, S_HEAT = range(6)


# ---------------------------------------------------------------------------
# temperature inversion: w = (c0*theta + c1*(beta-1)*theta**beta) / J
# ---------------------------------------------------------------------------

@njit(cache=True)
def _invert_theta_njit(w, J, c0, c1, beta, rtol, max_iter):
    n = w.size
    out = np.empty(n, dtype=np.float64)
    ok = True
    cb = c1 * (beta - 1.0)
    for i in range(n):
        wt = w[i]
        Ji = J[i]
        if wt <= 0.0:
            out[i] = 0.0
            continue
        # theta <= w*J/c0 always, so this is a bracket upper end
        th = wt * Ji / c0
        converged = False
        for _ in range(max_iter):
            f = (c0 * th + cb * th**beta) / Ji - wt
            if abs(f) <= rtol * (1.0 + wt):
                converged = True
                break
            df = (c0 + cb * beta * th ** (beta - 1.0)) / Ji
            th_new = th - f / df
            if th_new < 0.0:
                th_new = 0.5 * th
            th = th_new
        out[i] = th
        if not converged:
            ok = False
    return out, ok


def _invert_theta_numpy(w, J, c0, c1, beta, rtol, max_iter):
    w = np.asarray(w, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    cb = c1 * (beta - 1.0)
    pos = w > 0.0
    th = np.where(pos, w * J / c0, 0.0)
    ok = True
    active = pos.copy()
    for _ in range(max_iter):
        if not np.any(active):
            break
        tha = th[active]
        f = (c0 * tha + cb * tha**beta) / J[active] - w[active]
        done = np.abs(f) <= rtol * (1.0 + w[active])
        df = (c0 + cb * beta * tha ** (beta - 1.0)) / J[active]
        th_new = tha - f / df
        th_new = np.where(th_new < 0.0, 0.5 * tha, th_new)
        tha = np.where(done, tha, th_new)
        th[active] = tha
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    if np.any(active):
        tha = th[active]
        f = (c0 * tha + cb * tha**beta) / J[active] - w[active]
        if np.any(np.abs(f) > rtol * (1.0 + w[active])):
            ok = False
    return th, ok


# ---------------------------------------------------------------------------
# direct O(N^2) gravity: potential and acceleration in one sweep
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _direct_solve_njit(rho, mask, h, G, self_term):
    nx, ny, nz = rho.shape
    V = np.zeros((nx, ny, nz), dtype=np.float64)
    gx = np.zeros((nx, ny, nz), dtype=np.float64)
    gy = np.zeros((nx, ny, nz), dtype=np.float64)
    gz = np.zeros((nx, ny, nz), dtype=np.float64)
    ntot = nx * ny * nz
    for t in prange(ntot):
        it = t // (ny * nz)
        jt = (t // nz) % ny
        kt = t % nz
        if mask[it, jt, kt] == 0:
            continue
        accV = rho[it, jt, kt] * self_term
        accx = 0.0
        accy = 0.0
        accz = 0.0
        for i in range(nx):
            dx = float(i - it)
            for j in range(ny):
                dy = float(j - jt)
                for k in range(nz):
                    if i == it and j == jt and k == kt:
                        continue
                    if mask[i, j, k] == 0:
                        continue
                    dz = float(k - kt)
                    r2 = dx * dx + dy * dy + dz * dz
                    r = np.sqrt(r2)
                    q = rho[i, j, k]
                    accV += q / r
                    qr3 = q / (r2 * r)
                    accx += qr3 * dx
                    accy += qr3 * dy
                    accz += qr3 * dz
        V[it, jt, kt] = -G * h * h * accV
        gx[it, jt, kt] = G * h * accx
        gy[it, jt, kt] = G * h * accy
        gz[it, jt, kt] = G * h * accz
    return V, gx, gy, gz


def _direct_solve_numpy(rho, mask, h, G, self_term):
    nx, ny, nz = rho.shape
    ii, jj, kk = np.meshgrid(
        np.arange(nx, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nz, dtype=np.float64),
        indexing="ij",
    )
    rho_m = np.where(mask != 0, rho, 0.0)
    V = np.zeros_like(rho)
    gx = np.zeros_like(rho)
    gy = np.zeros_like(rho)
    gz = np.zeros_like(rho)
    for it in range(nx):
        for jt in range(ny):
            for kt in range(nz):
                if mask[it, jt, kt] == 0:
                    continue
                dx = ii - it
                dy = jj - jt
                dz = kk - kt
                r2 = dx * dx + dy * dy + dz * dz
                r2[it, jt, kt] = 1.0
                r = np.sqrt(r2)
                inv_r = rho_m / r
                inv_r[it, jt, kt] = rho_m[it, jt, kt] * self_term
                V[it, jt, kt] = -G * h * h * inv_r.sum()
                qr3 = rho_m / (r2 * r)
                qr3[it, jt, kt] = 0.0
                gx[it, jt, kt] = G * h * (qr3 * dx).sum()
                gy[it, jt, kt] = G * h * (qr3 * dy).sum()
                gz[it, jt, kt] = G * h * (qr3 * dz).sum()
    return V, gx, gy, gz


# ---------------------------------------------------------------------------
# single-material RHS core (also used per component in the two-material model;
# coupling terms arrive through `src` and the pressure field)
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _rhs_core_njit(ctr, nb, gam, src, grav, mask, h, omega, rho_floor):
    nx, ny, nz = mask.shape
    out = np.zeros((8, nx, ny, nz), dtype=np.float64)
    inv_h = 1.0 / h
    inv_2h = 0.5 / h
    for ii in prange(nx):
        for jj in range(ny):
            for kk in range(nz):
                if mask[ii, jj, kk] == 0:
                    continue
                rho_c = ctr[F_RHO, ii, jj, kk]
                rc = rho_c if rho_c > rho_floor else rho_floor
                vx_c = ctr[F_MX, ii, jj, kk] / rc
                vy_c = ctr[F_MY, ii, jj, kk] / rc
                vz_c = ctr[F_MZ, ii, jj, kk] / rc
                cs_c = ctr[F_CS, ii, jj, kk]
                J_c = ctr[F_J, ii, jj, kk]
                w_c = ctr[F_W, ii, jj, kk]
                th_c = ctr[F_TH, ii, jj, kk]
                kap_c = ctr[F_KAP, ii, jj, kk]
                mu_c = ctr[F_MU, ii, jj, kk]
                lam_c = ctr[F_LAM, ii, jj, kk]
                div_c = ctr[F_DIV, ii, jj, kk]

                conv0 = 0.0
                conv1 = 0.0
                conv2 = 0.0
                conv3 = 0.0
                conv4 = 0.0
                cond = 0.0
                visc0 = 0.0
                visc1 = 0.0
                visc2 = 0.0
                gradp0 = 0.0
                gradp1 = 0.0
                gradp2 = 0.0
                gdiv0 = 0.0
                gdiv1 = 0.0
                gdiv2 = 0.0
                upJ = 0.0
                # central velocity gradients dv[i][a]
                dv00 = 0.0
                dv01 = 0.0
                dv02 = 0.0
                dv10 = 0.0
                dv11 = 0.0
                dv12 = 0.0
                dv20 = 0.0
                dv21 = 0.0
                dv22 = 0.0

                for a in range(3):
                    dm = 2 * a
                    dp = dm + 1
                    rho_m = nb[F_RHO, dm, ii, jj, kk]
                    rho_p = nb[F_RHO, dp, ii, jj, kk]
                    rm = rho_m if rho_m > rho_floor else rho_floor
                    rp = rho_p if rho_p > rho_floor else rho_floor
                    if a == 0:
                        un_c = vx_c
                    elif a == 1:
                        un_c = vy_c
                    else:
                        un_c = vz_c
                    un_m = nb[F_MX + a, dm, ii, jj, kk] / rm
                    un_p = nb[F_MX + a, dp, ii, jj, kk] / rp
                    cs_m = nb[F_CS, dm, ii, jj, kk]
                    cs_p = nb[F_CS, dp, ii, jj, kk]
                    sp_c = abs(un_c) + cs_c
                    ap = max(sp_c, abs(un_p) + cs_p)
                    am = max(abs(un_m) + cs_m, sp_c)

                    # convective Rusanov fluxes: rho, mom, w
                    for qi in range(5):
                        if qi == 0:
                            f_idx = F_RHO
                            q_c = rho_c
                        elif qi == 4:
                            f_idx = F_W
                            q_c = w_c
                        else:
                            f_idx = F_MX + (qi - 1)
                            q_c = ctr[f_idx, ii, jj, kk]
                        q_m = nb[f_idx, dm, ii, jj, kk]
                        q_p = nb[f_idx, dp, ii, jj, kk]
                        Fp = 0.5 * (q_c * un_c + q_p * un_p) - 0.5 * ap * (q_p - q_c)
                        Fm = 0.5 * (q_m * un_m + q_c * un_c) - 0.5 * am * (q_c - q_m)
                        d = (Fp - Fm) * inv_h
                        if qi == 0:
                            conv0 += d
                        elif qi == 1:
                            conv1 += d
                        elif qi == 2:
                            conv2 += d
                        elif qi == 3:
                            conv3 += d
                        else:
                            conv4 += d

                    # heat conduction div(kappa grad theta)
                    th_m = nb[F_TH, dm, ii, jj, kk]
                    th_p = nb[F_TH, dp, ii, jj, kk]
                    kap_m = nb[F_KAP, dm, ii, jj, kk]
                    kap_p = nb[F_KAP, dp, ii, jj, kk]
                    cond += (0.5 * (kap_c + kap_p) * (th_p - th_c)
                             - 0.5 * (kap_c + kap_m) * (th_c - th_m)) * inv_h * inv_h

                    # viscous mu-Laplacian part and velocity gradients
                    mu_m = nb[F_MU, dm, ii, jj, kk]
                    mu_p = nb[F_MU, dp, ii, jj, kk]
                    for i in range(3):
                        vi_m = nb[F_MX + i, dm, ii, jj, kk] / rm
                        vi_p = nb[F_MX + i, dp, ii, jj, kk] / rp
                        if i == 0:
                            vi_c = vx_c
                        elif i == 1:
                            vi_c = vy_c
                        else:
                            vi_c = vz_c
                        lap = (0.5 * (mu_c + mu_p) * (vi_p - vi_c)
                               - 0.5 * (mu_c + mu_m) * (vi_c - vi_m)) * inv_h * inv_h
                        grad_ia = (vi_p - vi_m) * inv_2h
                        if i == 0:
                            visc0 += lap
                        elif i == 1:
                            visc1 += lap
                        else:
                            visc2 += lap
                        if i == 0 and a == 0:
                            dv00 = grad_ia
                        elif i == 0 and a == 1:
                            dv01 = grad_ia
                        elif i == 0 and a == 2:
                            dv02 = grad_ia
                        elif i == 1 and a == 0:
                            dv10 = grad_ia
                        elif i == 1 and a == 1:
                            dv11 = grad_ia
                        elif i == 1 and a == 2:
                            dv12 = grad_ia
                        elif i == 2 and a == 0:
                            dv20 = grad_ia
                        elif i == 2 and a == 1:
                            dv21 = grad_ia
                        else:
                            dv22 = grad_ia

                    gp = (nb[F_P, dp, ii, jj, kk] - nb[F_P, dm, ii, jj, kk]) * inv_2h
                    gd = (nb[F_DIV, dp, ii, jj, kk] - nb[F_DIV, dm, ii, jj, kk]) * inv_2h
                    if a == 0:
                        gradp0 = gp
                        gdiv0 = gd
                    elif a == 1:
                        gradp1 = gp
                        gdiv1 = gd
                    else:
                        gradp2 = gp
                        gdiv2 = gd

                    # upwinded v . grad J
                    J_m = nb[F_J, dm, ii, jj, kk]
                    J_p = nb[F_J, dp, ii, jj, kk]
                    if un_c > 0.0:
                        upJ += un_c * (J_c - J_m) * inv_h
                    else:
                        upJ += un_c * (J_p - J_c) * inv_h

                tr = dv00 + dv11 + dv22
                e01 = 0.5 * (dv01 + dv10)
                e02 = 0.5 * (dv02 + dv20)
                e12 = 0.5 * (dv12 + dv21)
                ee = (dv00 * dv00 + dv11 * dv11 + dv22 * dv22
                      + 2.0 * (e01 * e01 + e02 * e02 + e12 * e12))
                xi = 2.0 * mu_c * ee + lam_c * tr * tr

                gam_c = gam[ii, jj, kk]
                vext = src[S_VOL, ii, jj, kk]
                adiab = gam_c * div_c

                out[0, ii, jj, kk] = -conv0 + src[S_RMASS, ii, jj, kk]
                out[1, ii, jj, kk] = (-conv1 - gradp0 + visc0 + (mu_c + lam_c) * gdiv0
                                      + src[S_MX, ii, jj, kk]
                                      + rho_c * grav[0, ii, jj, kk]
                                      + 2.0 * rho_c * omega * vy_c)
                out[2, ii, jj, kk] = (-conv2 - gradp1 + visc1 + (mu_c + lam_c) * gdiv1
                                      + src[S_MY, ii, jj, kk]
                                      + rho_c * grav[1, ii, jj, kk]
                                      - 2.0 * rho_c * omega * vx_c)
                out[3, ii, jj, kk] = (-conv3 - gradp2 + visc2 + (mu_c + lam_c) * gdiv2
                                      + src[S_MZ, ii, jj, kk]
                                      + rho_c * grav[2, ii, jj, kk])
                out[4, ii, jj, kk] = (div_c - vext) * J_c - upJ
                out[5, ii, jj, kk] = (-conv4 + cond + xi + gam_c * (div_c - vext)
                                      + w_c * vext + src[S_HEAT, ii, jj, kk])
                out[6, ii, jj, kk] = xi
                out[7, ii, jj, kk] = adiab
    return out


def _rhs_core_numpy(ctr, nb, gam, src, grav, mask, h, omega, rho_floor):
    shape = mask.shape
    out = np.zeros((8,) + shape, dtype=np.float64)
    inv_h = 1.0 / h
    inv_2h = 0.5 / h

    rho_c = ctr[F_RHO]
    rc = np.maximum(rho_c, rho_floor)
    v_c = np.empty((3,) + shape)
    for i in range(3):
        v_c[i] = ctr[F_MX + i] / rc
    cs_c = ctr[F_CS]
    J_c = ctr[F_J]
    w_c = ctr[F_W]
    th_c = ctr[F_TH]
    kap_c = ctr[F_KAP]
    mu_c = ctr[F_MU]
    lam_c = ctr[F_LAM]
    div_c = ctr[F_DIV]

    conv = np.zeros((5,) + shape)
    cond = np.zeros(shape)
    visc = np.zeros((3,) + shape)
    gradp = np.zeros((3,) + shape)
    gdiv = np.zeros((3,) + shape)
    upJ = np.zeros(shape)
    dv = np.zeros((3, 3) + shape)

    for a in range(3):
        dm, dp = 2 * a, 2 * a + 1
        rm = np.maximum(nb[F_RHO, dm], rho_floor)
        rp = np.maximum(nb[F_RHO, dp], rho_floor)
        un_c = v_c[a]
        un_m = nb[F_MX + a, dm] / rm
        un_p = nb[F_MX + a, dp] / rp
        sp_c = np.abs(un_c) + cs_c
        ap = np.maximum(sp_c, np.abs(un_p) + nb[F_CS, dp])
        am = np.maximum(np.abs(un_m) + nb[F_CS, dm], sp_c)

        for qi, f_idx in enumerate((F_RHO, F_MX, F_MY, F_MZ, F_W)):
            q_c = ctr[f_idx]
            q_m = nb[f_idx, dm]
            q_p = nb[f_idx, dp]
            Fp = 0.5 * (q_c * un_c + q_p * un_p) - 0.5 * ap * (q_p - q_c)
            Fm = 0.5 * (q_m * un_m + q_c * un_c) - 0.5 * am * (q_c - q_m)
            conv[qi] += (Fp - Fm) * inv_h

        cond += (0.5 * (kap_c + nb[F_KAP, dp]) * (nb[F_TH, dp] - th_c)
                 - 0.5 * (kap_c + nb[F_KAP, dm]) * (th_c - nb[F_TH, dm])) * inv_h * inv_h

        mu_m = nb[F_MU, dm]
        mu_p = nb[F_MU, dp]
        for i in range(3):
            vi_m = nb[F_MX + i, dm] / rm
            vi_p = nb[F_MX + i, dp] / rp
            visc[i] += (0.5 * (mu_c + mu_p) * (vi_p - v_c[i])
                        - 0.5 * (mu_c + mu_m) * (v_c[i] - vi_m)) * inv_h * inv_h
            dv[i, a] = (vi_p - vi_m) * inv_2h

        gradp[a] = (nb[F_P, dp] - nb[F_P, dm]) * inv_2h
        gdiv[a] = (nb[F_DIV, dp] - nb[F_DIV, dm]) * inv_2h

        upJ += np.where(un_c > 0.0,
                        un_c * (J_c - nb[F_J, dm]) * inv_h,
                        un_c * (nb[F_J, dp] - J_c) * inv_h)

    tr = dv[0, 0] + dv[1, 1] + dv[2, 2]
    e01 = 0.5 * (dv[0, 1] + dv[1, 0])
    e02 = 0.5 * (dv[0, 2] + dv[2, 0])
    e12 = 0.5 * (dv[1, 2] + dv[2, 1])
    ee = (dv[0, 0] ** 2 + dv[1, 1] ** 2 + dv[2, 2] ** 2
          + 2.0 * (e01**2 + e02**2 + e12**2))
    xi = 2.0 * mu_c * ee + lam_c * tr * tr

    vext = src[S_VOL]
    out[0] = -conv[0] + src[S_RMASS]
    out[1] = (-conv[1] - gradp[0] + visc[0] + (mu_c + lam_c) * gdiv[0]
              + src[S_MX] + rho_c * grav[0] + 2.0 * rho_c * omega * v_c[1])
    out[2] = (-conv[2] - gradp[1] + visc[1] + (mu_c + lam_c) * gdiv[1]
              + src[S_MY] + rho_c * grav[1] - 2.0 * rho_c * omega * v_c[0])
    out[3] = (-conv[3] - gradp[2] + visc[2] + (mu_c + lam_c) * gdiv[2]
              + src[S_MZ] + rho_c * grav[2])
    out[4] = (div_c - vext) * J_c - upJ
    out[5] = (-conv[4] + cond + xi + gam * (div_c - vext)
              + w_c * vext + src[S_HEAT])
    out[6] = xi
    out[7] = gam * div_c

    inside = mask != 0
    out *= inside
    return out


# ---------------------------------------------------------------------------
# quadrature helper: average of |u|**-s over the unit cube (self-cell values)
# ---------------------------------------------------------------------------

_cube_avg_cache = {}


def cube_average_inverse_power(s: float) -> float:
    """Mean of |u|**-s over [-1/2, 1/2]^3, by Richardson-extrapolated midpoint.

    Finite for s < 3.  Used to regularize the singular self-cell entry of the
    discrete Green-function tables (s=1 gives ~2.38).
    """
    key = round(float(s), 12)
    if key in _cube_avg_cache:
        return _cube_avg_cache[key]
    if s >= 3.0:
        raise ValueError("cube average of |u|**-s diverges for s >= 3")

    def midpoint(n):
        u = (np.arange(n) + 0.5) / n - 0.5
        ux, uy, uz = np.meshgrid(u, u, u, indexing="ij")
        r = np.sqrt(ux**2 + uy**2 + uz**2)
        return float(np.mean(r**-s))

    i1 = midpoint(80)
    i2 = midpoint(160)
    val = i2 + (i2 - i1) / 3.0
    _cube_avg_cache[key] = val
    return val


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    invert_theta = _invert_theta_njit
    direct_solve = _direct_solve_njit
    rhs_core = _rhs_core_njit
else:
    invert_theta = _invert_theta_numpy
    direct_solve = _direct_solve_numpy
    rhs_core = _rhs_core_numpy
