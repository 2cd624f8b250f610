"""JIT-compiled inner loops: residual/Jacobian assembly, block-ILU(0), BiCGStab.

The Jacobian is stored block-CSR with 2x2 cell blocks flattened to 4 doubles
(row-major: wp, wS, gp, gS). Pressure columns are scaled by P_SCALE so both
unknowns are O(1) for the linear solver.
"""

import numpy as np
from numba import njit

P_SCALE = 1.0e6


@njit(cache=True, inline="always")
def _pow(x, e):
    ei = int(e)
    if e == ei and 0 <= ei <= 12:
        r = 1.0
        for _ in range(ei):
            r *= x
        return r
    return x**e


@njit(cache=True)
def cell_masses(p, S, p_init, phi0, sr, pv,
                rho_w0, c_w, rho_g0, c_g, p_ref, mw, mg):
    for c in range(p.size):
        phi = phi0[c] + sr[c] * (p[c] - p_init[c])
        rw = rho_w0 * (1.0 + c_w * (p[c] - p_ref))
        rg = rho_g0 * (1.0 + c_g * (p[c] - p_ref))
        mw[c] = pv[c] * phi * rw * (1.0 - S[c])
        mg[c] = pv[c] * phi * rg * S[c]


@njit(cache=True)
def assemble(p, S, mw_old, mg_old, dt,
             face_L, face_R, face_T, face_gdz,
             blk_LL, blk_LR, blk_RL, blk_RR, diag_pos,
             pv, phi0, sr, p_init, pe_cap, q_w, q_g,
             mu_w, mu_g, rho_w0, rho_g0, c_w, c_g, p_ref,
             swi, sgr, nw, ng, krg0, krw0, lam_pc, se_floor,
             R, vals, lam_w, dlam_w, lam_g, dlam_g, pc, dpc, rw_c, rg_c):
    """Fill residual R (2*nc) and Jacobian blocks; return (sum|Rw|, sum|Rg|)."""
    nc = p.size
    for i in range(vals.shape[0]):
        vals[i, 0] = 0.0
        vals[i, 1] = 0.0
        vals[i, 2] = 0.0
        vals[i, 3] = 0.0

    D = 1.0 - swi - sgr
    inv_d = 1.0 / D
    # cell pass: properties, accumulation, sources
    for c in range(nc):
        pc_ = p[c]
        Sg = S[c]
        se = (1.0 - Sg - swi) * inv_d
        if se < 0.0:
            se_c = 0.0
            krw = 0.0
            dkrw = 0.0
            krg = krg0
            dkrg = 0.0
        elif se > 1.0:
            se_c = 1.0
            krw = krw0
            dkrw = 0.0
            krg = 0.0
            dkrg = 0.0
        else:
            se_c = se
            a = _pow(se_c, nw - 1.0)
            krw = krw0 * a * se_c
            dkrw = -krw0 * nw * a * inv_d
            b = _pow(1.0 - se_c, ng - 1.0)
            krg = krg0 * b * (1.0 - se_c)
            dkrg = krg0 * ng * b * inv_d
        lam_w[c] = krw / mu_w
        dlam_w[c] = dkrw / mu_w
        lam_g[c] = krg / mu_g
        dlam_g[c] = dkrg / mu_g

        pe = pe_cap[c]
        if pe > 0.0:
            if se_c > se_floor:
                t = se_c ** (-lam_pc - 1.0)
                pc[c] = pe * t * se_c
                dpc[c] = pe * lam_pc * t * inv_d if se <= 1.0 else 0.0
            else:
                pc[c] = pe * se_floor ** (-lam_pc)
                dpc[c] = 0.0
        else:
            pc[c] = 0.0
            dpc[c] = 0.0

        rw = rho_w0 * (1.0 + c_w * (pc_ - p_ref))
        rg = rho_g0 * (1.0 + c_g * (pc_ - p_ref))
        rw_c[c] = rw
        rg_c[c] = rg

        phi = phi0[c] + sr[c] * (pc_ - p_init[c])
        vpv = pv[c]
        mw = vpv * phi * rw * (1.0 - Sg)
        mg = vpv * phi * rg * Sg
        R[2 * c] = (mw - mw_old[c]) / dt - q_w[c]
        R[2 * c + 1] = (mg - mg_old[c]) / dt - q_g[c]

        dmw_dp = vpv * (sr[c] * rw + phi * rho_w0 * c_w) * (1.0 - Sg)
        dmw_dS = -vpv * phi * rw
        dmg_dp = vpv * (sr[c] * rg + phi * rho_g0 * c_g) * Sg
        dmg_dS = vpv * phi * rg
        dp_ = diag_pos[c]
        vals[dp_, 0] += dmw_dp / dt * P_SCALE
        vals[dp_, 1] += dmw_dS / dt
        vals[dp_, 2] += dmg_dp / dt * P_SCALE
        vals[dp_, 3] += dmg_dS / dt

    drwf = 0.5 * rho_w0 * c_w
    drgf = 0.5 * rho_g0 * c_g
    for f in range(face_L.size):
        T = face_T[f]
        if T == 0.0:
            continue
        L = face_L[f]
        Rc = face_R[f]
        gdz = face_gdz[f]
        rwf = 0.5 * (rw_c[L] + rw_c[Rc])
        rgf = 0.5 * (rg_c[L] + rg_c[Rc])
        dphw = p[L] - p[Rc] - rwf * gdz
        dphg = (p[L] + pc[L]) - (p[Rc] + pc[Rc]) - rgf * gdz

        if dphw >= 0.0:
            upw = L
        else:
            upw = Rc
        lw = lam_w[upw]
        Fw = T * lw * rwf * dphw
        dFw_dpL = T * lw * (drwf * dphw + rwf * (1.0 - drwf * gdz))
        dFw_dpR = T * lw * (drwf * dphw + rwf * (-1.0 - drwf * gdz))
        dFw_dSu = T * rwf * dphw * dlam_w[upw]

        if dphg >= 0.0:
            upg = L
        else:
            upg = Rc
        lg = lam_g[upg]
        Fg = T * lg * rgf * dphg
        dFg_dpL = T * lg * (drgf * dphg + rgf * (1.0 - drgf * gdz))
        dFg_dpR = T * lg * (drgf * dphg + rgf * (-1.0 - drgf * gdz))
        dFg_dSL = T * rgf * lg * dpc[L]
        dFg_dSR = -T * rgf * lg * dpc[Rc]
        if upg == L:
            dFg_dSL += T * rgf * dphg * dlam_g[L]
        else:
            dFg_dSR += T * rgf * dphg * dlam_g[Rc]

        R[2 * L] += Fw
        R[2 * Rc] -= Fw
        R[2 * L + 1] += Fg
        R[2 * Rc + 1] -= Fg

        iLL = blk_LL[f]
        iLR = blk_LR[f]
        iRL = blk_RL[f]
        iRR = blk_RR[f]
        sp = P_SCALE
        vals[iLL, 0] += dFw_dpL * sp
        vals[iLR, 0] += dFw_dpR * sp
        vals[iRL, 0] -= dFw_dpL * sp
        vals[iRR, 0] -= dFw_dpR * sp
        if upw == L:
            vals[iLL, 1] += dFw_dSu
            vals[iRL, 1] -= dFw_dSu
        else:
            vals[iLR, 1] += dFw_dSu
            vals[iRR, 1] -= dFw_dSu

        vals[iLL, 2] += dFg_dpL * sp
        vals[iLR, 2] += dFg_dpR * sp
        vals[iRL, 2] -= dFg_dpL * sp
        vals[iRR, 2] -= dFg_dpR * sp
        vals[iLL, 3] += dFg_dSL
        vals[iLR, 3] += dFg_dSR
        vals[iRL, 3] -= dFg_dSL
        vals[iRR, 3] -= dFg_dSR

    sw = 0.0
    sg = 0.0
    for c in range(nc):
        sw += abs(R[2 * c])
        sg += abs(R[2 * c + 1])
    return sw, sg


@njit(cache=True)
def residual_only(p, S, mw_old, mg_old, dt,
                  face_L, face_R, face_T, face_gdz,
                  pv, phi0, sr, p_init, pe_cap, q_w, q_g,
                  mu_w, mu_g, rho_w0, rho_g0, c_w, c_g, p_ref,
                  swi, sgr, nw, ng, krg0, krw0, lam_pc, se_floor,
                  R, lam_w, lam_g, pc, rw_c, rg_c):
    """Residual without Jacobian; same discretization as assemble()."""
    nc = p.size
    D = 1.0 - swi - sgr
    inv_d = 1.0 / D
    for c in range(nc):
        Sg = S[c]
        se = (1.0 - Sg - swi) * inv_d
        if se < 0.0:
            se_c = 0.0
            krw = 0.0
            krg = krg0
        elif se > 1.0:
            se_c = 1.0
            krw = krw0
            krg = 0.0
        else:
            se_c = se
            krw = krw0 * _pow(se_c, nw)
            krg = krg0 * _pow(1.0 - se_c, ng)
        lam_w[c] = krw / mu_w
        lam_g[c] = krg / mu_g
        pe = pe_cap[c]
        if pe > 0.0:
            sef = se_c if se_c > se_floor else se_floor
            pc[c] = pe * sef ** (-lam_pc)
        else:
            pc[c] = 0.0
        rw = rho_w0 * (1.0 + c_w * (p[c] - p_ref))
        rg = rho_g0 * (1.0 + c_g * (p[c] - p_ref))
        rw_c[c] = rw
        rg_c[c] = rg
        phi = phi0[c] + sr[c] * (p[c] - p_init[c])
        mw = pv[c] * phi * rw * (1.0 - Sg)
        mg = pv[c] * phi * rg * Sg
        R[2 * c] = (mw - mw_old[c]) / dt - q_w[c]
        R[2 * c + 1] = (mg - mg_old[c]) / dt - q_g[c]

    for f in range(face_L.size):
        T = face_T[f]
        if T == 0.0:
            continue
        L = face_L[f]
        Rc = face_R[f]
        gdz = face_gdz[f]
        rwf = 0.5 * (rw_c[L] + rw_c[Rc])
        rgf = 0.5 * (rg_c[L] + rg_c[Rc])
        dphw = p[L] - p[Rc] - rwf * gdz
        dphg = (p[L] + pc[L]) - (p[Rc] + pc[Rc]) - rgf * gdz
        lw = lam_w[L] if dphw >= 0.0 else lam_w[Rc]
        lg = lam_g[L] if dphg >= 0.0 else lam_g[Rc]
        Fw = T * lw * rwf * dphw
        Fg = T * lg * rgf * dphg
        R[2 * L] += Fw
        R[2 * Rc] -= Fw
        R[2 * L + 1] += Fg
        R[2 * Rc + 1] -= Fg

    sw = 0.0
    sg = 0.0
    for c in range(nc):
        sw += abs(R[2 * c])
        sg += abs(R[2 * c + 1])
    return sw, sg


@njit(cache=True)
def bsr_matvec(indptr, indices, vals, x, out):
    nc = indptr.size - 1
    for i in range(nc):
        s0 = 0.0
        s1 = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            x0 = x[2 * j]
            x1 = x[2 * j + 1]
            s0 += vals[jj, 0] * x0 + vals[jj, 1] * x1
            s1 += vals[jj, 2] * x0 + vals[jj, 3] * x1
        out[2 * i] = s0
        out[2 * i + 1] = s1


@njit(cache=True)
def bilu0_factor(indptr, indices, diag_pos, vals, luvals, inv_diag, colmap):
    """Block ILU(0): factor into luvals (copy of vals), invert pivots.

    Returns 0 on success, -1 on a (near-)singular pivot.
    """
    nc = indptr.size - 1
    nnz = indices.size
    for i in range(nnz):
        luvals[i, 0] = vals[i, 0]
        luvals[i, 1] = vals[i, 1]
        luvals[i, 2] = vals[i, 2]
        luvals[i, 3] = vals[i, 3]
    status = 0
    for i in range(nc):
        for jj in range(indptr[i], indptr[i + 1]):
            colmap[indices[jj]] = jj
        for kk in range(indptr[i], diag_pos[i]):
            k = indices[kk]
            a0 = luvals[kk, 0]
            a1 = luvals[kk, 1]
            a2 = luvals[kk, 2]
            a3 = luvals[kk, 3]
            i0 = inv_diag[k, 0]
            i1 = inv_diag[k, 1]
            i2 = inv_diag[k, 2]
            i3 = inv_diag[k, 3]
            l0 = a0 * i0 + a1 * i2
            l1 = a0 * i1 + a1 * i3
            l2 = a2 * i0 + a3 * i2
            l3 = a2 * i1 + a3 * i3
            luvals[kk, 0] = l0
            luvals[kk, 1] = l1
            luvals[kk, 2] = l2
            luvals[kk, 3] = l3
            for jj in range(diag_pos[k] + 1, indptr[k + 1]):
                pos = colmap[indices[jj]]
                if pos >= 0:
                    u0 = luvals[jj, 0]
                    u1 = luvals[jj, 1]
                    u2 = luvals[jj, 2]
                    u3 = luvals[jj, 3]
                    luvals[pos, 0] -= l0 * u0 + l1 * u2
                    luvals[pos, 1] -= l0 * u1 + l1 * u3
                    luvals[pos, 2] -= l2 * u0 + l3 * u2
                    luvals[pos, 3] -= l2 * u1 + l3 * u3
        dp_ = diag_pos[i]
        d0 = luvals[dp_, 0]
        d1 = luvals[dp_, 1]
        d2 = luvals[dp_, 2]
        d3 = luvals[dp_, 3]
        det = d0 * d3 - d1 * d2
        if abs(det) < 1e-300:
            status = -1
            det = 1e-300 if det >= 0 else -1e-300
        inv_diag[i, 0] = d3 / det
        inv_diag[i, 1] = -d1 / det
        inv_diag[i, 2] = -d2 / det
        inv_diag[i, 3] = d0 / det
        for jj in range(indptr[i], indptr[i + 1]):
            colmap[indices[jj]] = -1
    return status


@njit(cache=True)
def bilu0_solve(indptr, indices, diag_pos, luvals, inv_diag, b, x):
    nc = indptr.size - 1
    for i in range(nc):
        y0 = b[2 * i]
        y1 = b[2 * i + 1]
        for jj in range(indptr[i], diag_pos[i]):
            k = indices[jj]
            xk0 = x[2 * k]
            xk1 = x[2 * k + 1]
            y0 -= luvals[jj, 0] * xk0 + luvals[jj, 1] * xk1
            y1 -= luvals[jj, 2] * xk0 + luvals[jj, 3] * xk1
        x[2 * i] = y0
        x[2 * i + 1] = y1
    for i in range(nc - 1, -1, -1):
        y0 = x[2 * i]
        y1 = x[2 * i + 1]
        for jj in range(diag_pos[i] + 1, indptr[i + 1]):
            j = indices[jj]
            xj0 = x[2 * j]
            xj1 = x[2 * j + 1]
            y0 -= luvals[jj, 0] * xj0 + luvals[jj, 1] * xj1
            y1 -= luvals[jj, 2] * xj0 + luvals[jj, 3] * xj1
        x[2 * i] = inv_diag[i, 0] * y0 + inv_diag[i, 1] * y1
        x[2 * i + 1] = inv_diag[i, 2] * y0 + inv_diag[i, 3] * y1


@njit(cache=True)
def bicgstab(indptr, indices, diag_pos, vals, luvals, inv_diag,
             b, x, rtol, maxiter, work):
    """Right-preconditioned BiCGStab; returns iterations used or -1."""
    n = b.size
    r = work[0]
    rhat = work[1]
    pvec = work[2]
    phat = work[3]
    v = work[4]
    s = work[5]
    shat = work[6]
    t = work[7]

    bnorm = 0.0
    for i in range(n):
        x[i] = 0.0
        r[i] = b[i]
        rhat[i] = b[i]
        bnorm += b[i] * b[i]
    bnorm = np.sqrt(bnorm)
    if bnorm == 0.0:
        return 0
    tol = rtol * bnorm

    rho = 1.0
    alpha = 1.0
    omega = 1.0
    for i in range(n):
        pvec[i] = 0.0
        v[i] = 0.0

    for it in range(1, maxiter + 1):
        rho_new = 0.0
        for i in range(n):
            rho_new += rhat[i] * r[i]
        if abs(rho_new) < 1e-300:
            return -1
        if it == 1:
            for i in range(n):
                pvec[i] = r[i]
        else:
            beta = (rho_new / rho) * (alpha / omega)
            for i in range(n):
                pvec[i] = r[i] + beta * (pvec[i] - omega * v[i])
        bilu0_solve(indptr, indices, diag_pos, luvals, inv_diag, pvec, phat)
        bsr_matvec(indptr, indices, vals, phat, v)
        den = 0.0
        for i in range(n):
            den += rhat[i] * v[i]
        if abs(den) < 1e-300:
            return -1
        alpha = rho_new / den
        snorm = 0.0
        for i in range(n):
            s[i] = r[i] - alpha * v[i]
            snorm += s[i] * s[i]
        for i in range(n):
            x[i] += alpha * phat[i]
        if np.sqrt(snorm) <= tol:
            return it
        bilu0_solve(indptr, indices, diag_pos, luvals, inv_diag, s, shat)
        bsr_matvec(indptr, indices, vals, shat, t)
        tt = 0.0
        ts = 0.0
        for i in range(n):
            tt += t[i] * t[i]
            ts += t[i] * s[i]
        if tt < 1e-300:
            return -1
        omega = ts / tt
        rnorm = 0.0
        for i in range(n):
            x[i] += omega * shat[i]
            r[i] = s[i] - omega * t[i]
            rnorm += r[i] * r[i]
        if np.sqrt(rnorm) <= tol:
            return it
        if abs(omega) < 1e-300:
            return -1
        rho = rho_new
    return -1
