"""Compiled depth-first branch-and-bound kernel behind optimizer.solve.

The search logic lives here as numba-jitted functions over flat int64/float64
arrays: per-step candidate generation mirroring the legality rules, plant
arithmetic mirroring plant.step, and an admissible cost-to-go bound. Stage
costs accumulate in exactly the same operation order as optimizer.stage_cost,
so objectives agree bit for bit with the pure-Python enumeration oracle.

Color codes match LightColor: 0 green, 1 yellow, 2 amber, 3 red.
"""

from __future__ import annotations

import time

import numpy as np
from numba import njit, objmode

_IMP_CAP = 256


@njit(cache=True)
def _step(n, combo, q, tg, ty, ta, tng, tw, arr_k, fm,
          q2, tg2, ty2, ta2, tng2, tw2,
          wq, wtw, ws, wf, wng):
    """One plant step on int64 rows; returns the stage cost as float64 using
    the exact expression of optimizer.stage_cost."""
    sq = 0
    stw = 0
    ss = 0
    sf = 0
    sng = 0
    for i in range(n):
        c = combo[i]
        ca = arr_k[i]
        if c == 0:
            fi = fm[i]
            avail = ca + q[i]
            if avail < fi:
                fi = avail
            qi = q[i] + ca - fi
            sf += fi
            tg2[i] = tg[i] + 1
            ty2[i] = 0
            ta2[i] = 0
            tng2[i] = 0
            tw2[i] = 0
        else:
            qi = q[i] + ca
            sng += 1
            ss += ca
            tg2[i] = 0
            ty2[i] = ty[i] + 1 if c == 1 else 0
            ta2[i] = ta[i] + 1 if c == 2 else 0
            tng2[i] = tng[i] + 1
            twi = tw[i] + 1 if qi >= 1 else 0
            tw2[i] = twi
            stw += twi
        q2[i] = qi
        sq += qi
    return wq * sq + wtw * stw + ws * ss - wf * sf + wng * sng


@njit(cache=True)
def _interval_ok(n, j, tng, tji, slack):
    """May signal j show green, given every conflicting signal's not-green
    timer (optionally advanced by `slack` future not-green steps)?"""
    for ip in range(n):
        need = tji[ip, j]
        if need > 0 and need > tng[ip] + slack:
            return False
    return True


@njit(cache=True)
def _policy(n, colors, ty, ta, tng, py, pa, tji, out):
    """Forced continuation action; returns False if it would be illegal
    (a green hold or amber completion blocked by a green interval)."""
    for i in range(n):
        c = colors[i]
        if c == 1:
            out[i] = 1 if ty[i] < py[i] else 3
        elif c == 2:
            if ta[i] < pa[i]:
                out[i] = 2
            else:
                if not _interval_ok(n, i, tng, tji, 0):
                    return False
                out[i] = 0
        else:
            if c == 0 and not _interval_ok(n, i, tng, tji, 0):
                return False
            out[i] = c
    return True


@njit(cache=True)
def _candidates(n, k, P, colors, tg, ty, ta, tng, py, pa, mg, tji, cand, cnt):
    """Per-signal legal next colors in tie-break rank order. Amber entries with
    no legal in-window completion are pruned (interval arithmetic is exact, so
    this is a lookahead, not a heuristic)."""
    for i in range(n):
        c = colors[i]
        m = 0
        if c == 1:
            if ty[i] < py[i]:
                cand[i, 0] = 1
            else:
                cand[i, 0] = 3
            m = 1
        elif c == 2:
            if ta[i] < pa[i]:
                cand[i, 0] = 2
                m = 1
            elif _interval_ok(n, i, tng, tji, 0):
                cand[i, 0] = 0
                m = 1
        elif c == 0:
            ok = _interval_ok(n, i, tng, tji, 0)
            if tg[i] >= mg[i]:
                if ok:
                    cand[i, 0] = 0
                    cand[i, 1] = 1
                    m = 2
                else:
                    cand[i, 0] = 1
                    m = 1
            elif ok:
                cand[i, 0] = 0
                m = 1
        else:
            if pa[i] == 0:
                if _interval_ok(n, i, tng, tji, 0):
                    cand[i, 0] = 0
                    cand[i, 1] = 3
                    m = 2
                else:
                    cand[i, 0] = 3
                    m = 1
            else:
                ok = k + pa[i] >= P or _interval_ok(n, i, tng, tji, pa[i])
                if ok:
                    cand[i, 0] = 2
                    cand[i, 1] = 3
                    m = 2
                else:
                    cand[i, 0] = 3
                    m = 1
        cnt[i] = m


@njit(cache=True)
def _forced_dark(n, i, colors, tg, ty, ta, tng, py, pa, mg, conf, tji):
    """Minimum number of future steps signal i must remain non-green in every
    legal completion: own timed path, plus forced blocking and green-interval
    delays from each conflicting signal's forced trajectory."""
    c = colors[i]
    if c == 0:
        d = 0
    elif c == 1:
        d = (py[i] - ty[i]) + 1 + pa[i]
    elif c == 2:
        d = pa[i] - ta[i]
    else:
        d = pa[i]
    for j in range(n):
        if j == i or conf[i, j] == 0:
            continue
        T = tji[j, i]
        cj = colors[j]
        if cj == 0:
            r = mg[j] - tg[j]
            if r < 0:
                r = 0
            t = py[j] if py[j] > T else T
            t += r
        elif cj == 1:
            a = py[j] - ty[j]
            b = T - tng[j]
            t = a if a > b else b
        elif cj == 2:
            g = mg[j] if mg[j] > 1 else 1
            t = py[j] if py[j] > T else T
            t += (pa[j] - ta[j]) + g
        else:
            t = T - tng[j]
        if t > d:
            d = t
    return d


@njit(cache=True)
def _serve_tables(P, a, fmx, qcap, wq, RQ, RC):
    """Pooled service evolution for one group-pair side: RQ[t0, q0, d] is the
    pooled queue after d consecutive serving steps starting at step t0 from
    queue q0, draining at the pooled saturation rate against the known
    arrival stream; RC accumulates the w_q stage charges along the way."""
    for t0 in range(P + 1):
        for q0 in range(qcap + 1):
            RQ[t0, q0, 0] = q0
            RC[t0, q0, 0] = 0.0
            qq = q0
            acc = 0.0
            for d in range(1, P - t0 + 1):
                qq = qq + a[t0 + d - 1] - fmx
                if qq < 0:
                    qq = 0
                acc += wq * qq
                RQ[t0, q0, d] = qq
                RC[t0, q0, d] = acc


@njit(cache=True)
def _dark_wq(u, v, qb, cum, SS):
    """Sum of the pooled queue of a non-serving side over steps [u, v), with
    queue qb entering step u: arrivals accumulate and nothing drains."""
    m = v - u
    return m * (qb - cum[u]) + (SS[v + 1] - SS[u + 1])


@njit(cache=True)
def _floor_dark(u, v, qpos, a0, FA):
    """Admissible wait-time floor for a non-serving side over steps [u, v).

    A queued vehicle on a dark side never drains, so one member's waiting
    timer escalates step by step. With a member known waiting (qpos, timer
    a0 entering step u) the charges are a0+1 .. a0+(v-u); otherwise counting
    starts at the first forecast arrival at or after u."""
    if v <= u:
        return 0.0
    if qpos != 0:
        m = v - u
        return m * a0 + 0.5 * m * (m + 1.0)
    tf = FA[u]
    if tf >= v:
        return 0.0
    m = v - tf
    return 0.5 * m * (m + 1.0)


@njit(cache=True)
def _chain_dp(VS, pp, P, slimit, mgs, gaps, ns, qcap,
              CUM, SS, FA, RQ, RC, MARG, wq, wtw, ws, wf, wng):
    """Serve-chain relaxation table for one group pair. An event (t, x) means
    side x shows its first green of a fresh serving run at step t; the run
    must last at least the side's minimum green, the next run's first green
    must leave at least gap fully dark steps after this run's last green,
    and between runs both sides accrue dark costs (pooled queue, stops,
    not-green, and the escalating wait floor). VS[pp, t, x, qy, b] is the
    minimal relaxed cost of steps t..P-1 with the serving side entering at
    pooled queue zero (the caller adds the MARG correction for the true
    queue), dark-side queue qy, and b flagging that the dark side has had a
    waiting member throughout its clearance window, so its wait timer enters
    t at no less than its own gap. Flow is settled by conservation:
    no per-step reward, a w_f * q_final terminal, and the caller subtracts
    w_f * (queues + future arrivals)."""
    D = qcap + 1
    for t in range(P - 1, -1, -1):
        for x in range(2):
            y = 1 - x
            cumx = CUM[pp, x]
            cumy = CUM[pp, y]
            ssx = SS[pp, x]
            ssy = SS[pp, y]
            fax = FA[pp, x]
            fay = FA[pp, y]
            rqx = RQ[pp, x]
            rcx = RC[pp, x]
            margy = MARG[pp, y]
            gout = gaps[x]
            gin = gaps[y]
            ny = ns[y]
            nx = ns[x]
            mgx = mgs[x] if mgs[x] > 1 else 1
            smin = t + mgx + gout
            Lend = P - t
            arry_end = cumy[P] - cumy[t]
            for qy in range(D):
                base_end = (rcx[t, 0, Lend]
                            + wq * _dark_wq(t, P, qy, cumy, ssy)
                            + ws * arry_end + wng * ny * Lend
                            + wf * (rqx[t, 0, Lend] + qy + arry_end))
                for b in range(2):
                    best = base_end + wtw * _floor_dark(t, P, b, gin, fay)
                    for s in range(smin, slimit + 1):
                        L = s - gout - t
                        res = rqx[t, 0, L]
                        e = t + L
                        qx_s = res + cumx[s] - cumx[e]
                        if qx_s > qcap:
                            qx_s = qcap
                        qy_s = qy + cumy[s] - cumy[t]
                        if qy_s > qcap:
                            qy_s = qcap
                        bx = 1 if res >= 1 else 0
                        c = (rcx[t, 0, L]
                             + wq * _dark_wq(t, s, qy, cumy, ssy)
                             + wtw * _floor_dark(t, s, b, gin, fay)
                             + ws * (cumy[s] - cumy[t]) + wng * ny * (s - t)
                             + wq * _dark_wq(e, s, res, cumx, ssx)
                             + wtw * _floor_dark(e, s, bx, 0, fax)
                             + ws * (cumx[s] - cumx[e]) + wng * nx * (s - e)
                             + VS[pp, s, y, qx_s, bx] + margy[s, qy_s])
                        if c < best:
                            best = c
                    VS[pp, t, x, qy, b] = best


@njit(cache=True)
def _bound(n, k, C, P, colors, q, tg, ty, ta, tng, tw, arr, sufa,
           py, pa, mg, fm, conf, tji,
           gpa, gpb, gapab, gapba, slim, nsa, nsb,
           CUM, SS, FA, RQ, RC, MARG, VS, qcap, matched,
           dbuf, bbuf, wq, wtw, ws, wf, wng):
    """Admissible cost-to-go. Per signal, the forced non-green phase accrues
    its exact cost, after which the signal is assumed green unconditionally;
    signals matched into a group pair additionally take the serve-chain
    relaxation when it is tighter, seeded with the node's exact pooled
    queues, earliest-start distances, and waiting ages."""
    R = P - k
    if R <= 0:
        return 0.0
    for i in range(n):
        d = _forced_dark(n, i, colors, tg, ty, ta, tng, py, pa, mg, conf, tji)
        dbuf[i] = d
        qi = q[i]
        twi = tw[i]
        fmi = fm[i]
        acc = 0.0
        for m in range(R):
            ca = arr[k + m, i]
            if m < d:
                qi += ca
                if qi >= 1:
                    twi += 1
                else:
                    twi = 0
                acc += wq * qi + wtw * twi + ws * ca + wng
            else:
                avail = qi + ca
                fi = fmi if fmi < avail else avail
                qi = avail - fi
                acc += wq * qi - wf * fi
        bbuf[i] = acc
    total = 0.0
    for i in range(n):
        if matched[i] == 0:
            total += bbuf[i]
    for pp in range(gpa.shape[0]):
        bb = 0.0
        qa = 0
        qb = 0
        sa = 0
        sb = 0
        da = P
        db = P
        aga = 0
        agb = 0
        agreen = False
        bgreen = False
        rga = 0
        rgb = 0
        for i in range(n):
            if gpa[pp, i] == 1:
                bb += bbuf[i]
                qa += q[i]
                sa += sufa[k, i]
                if dbuf[i] < da:
                    da = dbuf[i]
                if colors[i] == 0:
                    agreen = True
                    r = mg[i] - tg[i]
                    if r > rga:
                        rga = r
                elif q[i] >= 1 and tw[i] > aga:
                    aga = tw[i]
            elif gpb[pp, i] == 1:
                bb += bbuf[i]
                qb += q[i]
                sb += sufa[k, i]
                if dbuf[i] < db:
                    db = dbuf[i]
                if colors[i] == 0:
                    bgreen = True
                    r = mg[i] - tg[i]
                    if r > rgb:
                        rgb = r
                elif q[i] >= 1 and tw[i] > agb:
                    agb = tw[i]
        if k > C:
            total += bb
            continue
        slimit = slim[pp]
        if agreen or bgreen:
            # One side is serving: either hold it to the end of the horizon,
            # or pick the dark side's first green step s, serving as long as
            # the clearance gap allows before going dark.
            if agreen:
                xx = 0
                cqx = qa if qa <= qcap else qcap
                qyv = qb
                a0y = agb
                dy = db
                rg = rga
                gout = gapab[pp]
                ny = nsb[pp]
                nx = nsa[pp]
            else:
                xx = 1
                cqx = qb if qb <= qcap else qcap
                qyv = qa
                a0y = aga
                dy = da
                rg = rgb
                gout = gapba[pp]
                ny = nsa[pp]
                nx = nsb[pp]
            cumx = CUM[pp, xx]
            cumy = CUM[pp, 1 - xx]
            ssx = SS[pp, xx]
            ssy = SS[pp, 1 - xx]
            fax = FA[pp, xx]
            fay = FA[pp, 1 - xx]
            rqx = RQ[pp, xx]
            rcx = RC[pp, xx]
            margy = MARG[pp, 1 - xx]
            qposy = 1 if qyv >= 1 else 0
            Lend = P - k
            arry = cumy[P] - cumy[k]
            pv = (rcx[k, cqx, Lend]
                  + wq * _dark_wq(k, P, qyv, cumy, ssy)
                  + wtw * _floor_dark(k, P, qposy, a0y, fay)
                  + ws * arry + wng * ny * Lend
                  + wf * (rqx[k, cqx, Lend] + qyv + arry))
            smin = k + dy
            for s in range(smin, slimit + 1):
                L = s - gout - k
                if L < rg or L < 0:
                    continue
                if L > P - k:
                    L = P - k
                res = rqx[k, cqx, L]
                e = k + L
                bx = 1 if res >= 1 else 0
                qx_s = res + cumx[s] - cumx[e]
                if qx_s > qcap:
                    qx_s = qcap
                qy_s = qyv + cumy[s] - cumy[k]
                if qy_s > qcap:
                    qy_s = qcap
                c = (rcx[k, cqx, L]
                     + wq * _dark_wq(k, s, qyv, cumy, ssy)
                     + wtw * _floor_dark(k, s, qposy, a0y, fay)
                     + ws * (cumy[s] - cumy[k]) + wng * ny * (s - k)
                     + wq * _dark_wq(e, s, res, cumx, ssx)
                     + wtw * _floor_dark(e, s, bx, 0, fax)
                     + ws * (cumx[s] - cumx[e]) + wng * nx * (s - e)
                     + VS[pp, s, 1 - xx, qx_s, bx] + margy[s, qy_s])
                if c < pv:
                    pv = c
        else:
            # Both sides dark: stay dark to the horizon, or pick which side
            # starts a fresh run and when.
            cumA = CUM[pp, 0]
            cumB = CUM[pp, 1]
            ssA = SS[pp, 0]
            ssB = SS[pp, 1]
            faA = FA[pp, 0]
            faB = FA[pp, 1]
            qposa = 1 if qa >= 1 else 0
            qposb = 1 if qb >= 1 else 0
            arrA = cumA[P] - cumA[k]
            arrB = cumB[P] - cumB[k]
            nall = nsa[pp] + nsb[pp]
            pv = (wq * (_dark_wq(k, P, qa, cumA, ssA)
                        + _dark_wq(k, P, qb, cumB, ssB))
                  + wtw * (_floor_dark(k, P, qposa, aga, faA)
                           + _floor_dark(k, P, qposb, agb, faB))
                  + ws * (arrA + arrB) + wng * nall * (P - k)
                  + wf * (qa + arrA + qb + arrB))
            for xx in range(2):
                smin = k + (da if xx == 0 else db)
                for s in range(smin, slimit + 1):
                    dcost = (wq * (_dark_wq(k, s, qa, cumA, ssA)
                                   + _dark_wq(k, s, qb, cumB, ssB))
                             + wtw * (_floor_dark(k, s, qposa, aga, faA)
                                      + _floor_dark(k, s, qposb, agb, faB))
                             + ws * ((cumA[s] - cumA[k]) + (cumB[s] - cumB[k]))
                             + wng * nall * (s - k))
                    if xx == 0:
                        qo = qb
                        qposo = qposb
                        ago = agb
                        fao = faB
                        cumo = cumB
                        go = gapba[pp]
                        qx_s = qa + cumA[s] - cumA[k]
                    else:
                        qo = qa
                        qposo = qposa
                        ago = aga
                        fao = faA
                        cumo = cumA
                        go = gapab[pp]
                        qx_s = qb + cumB[s] - cumB[k]
                    if qx_s > qcap:
                        qx_s = qcap
                    if qposo != 0:
                        age = ago + (s - k)
                    elif fao[k] < s:
                        age = s - fao[k]
                    else:
                        age = 0
                    bo = 1 if age >= go else 0
                    qo_s = qo + cumo[s] - cumo[k]
                    if qo_s > qcap:
                        qo_s = qcap
                    c = dcost + VS[pp, s, xx, qo_s, bo] + MARG[pp, xx][s, qx_s]
                    if c < pv:
                        pv = c
        pv += -wf * (qa + sa) - wf * (qb + sb)
        total += pv if pv > bb else bb
    return total


@njit(cache=True)
def _offer(n, P, act, obj, found, best_obj, best_act,
           nodes, n_imp, imp_nodes, imp_objs, imp_times):
    """Incumbent update with the lexicographic tie-break: smaller objective
    wins; on exact ties the signal-major, then step-major color sequence with
    the lower rank (Green < Yellow < Amber < Red) wins."""
    take = False
    if found == 0 or obj < best_obj:
        take = True
    elif obj == best_obj:
        for i in range(n):
            done = False
            for kk in range(P):
                dlt = act[kk, i] - best_act[kk, i]
                if dlt < 0:
                    take = True
                    done = True
                    break
                if dlt > 0:
                    done = True
                    break
            if done:
                break
    if take:
        for kk in range(P):
            for i in range(n):
                best_act[kk, i] = act[kk, i]
        if n_imp < imp_nodes.shape[0]:
            with objmode(tnow="float64"):
                tnow = time.perf_counter()
            imp_nodes[n_imp] = nodes
            imp_objs[n_imp] = obj
            imp_times[n_imp] = tnow
            n_imp += 1
        return 1, obj, n_imp
    return found, best_obj, n_imp


@njit(cache=True)
def _replay(n, P, C, warm, warm_len,
            conf, tji, py, pa, mg, fm, arr,
            wq, wtw, ws, wf, wng,
            colors0, q0, tg0, ty0, ta0, tng0, tw0,
            act, cand, cnt, combo,
            colors, q, tg, ty, ta, tng, tw,
            colors2, q2, tg2, ty2, ta2, tng2, tw2):
    """Validate a warm-start schedule (or, with warm_len=0, the pure
    continuation policy) from the root and return (ok, objective). Fills act
    with the replayed actions. Scratch rows are caller-provided."""
    for i in range(n):
        colors[i] = colors0[i]
        q[i] = q0[i]
        tg[i] = tg0[i]
        ty[i] = ty0[i]
        ta[i] = ta0[i]
        tng[i] = tng0[i]
        tw[i] = tw0[i]
    cost = 0.0
    for k in range(P):
        if k < warm_len:
            for i in range(n):
                combo[i] = warm[k, i]
            if k < C:
                _candidates(n, k, P, colors, tg, ty, ta, tng, py, pa, mg, tji, cand, cnt)
                for i in range(n):
                    hit = False
                    for t in range(cnt[i]):
                        if cand[i, t] == combo[i]:
                            hit = True
                            break
                    if not hit:
                        return False, 0.0
                for i in range(n):
                    for j in range(i + 1, n):
                        if conf[i, j] == 1 and combo[i] < 3 and combo[j] < 3:
                            return False, 0.0
            else:
                if not _policy(n, colors, ty, ta, tng, py, pa, tji, colors2):
                    return False, 0.0
                for i in range(n):
                    if colors2[i] != combo[i]:
                        return False, 0.0
        else:
            if not _policy(n, colors, ty, ta, tng, py, pa, tji, combo):
                return False, 0.0
            if k < C:
                # Policy actions are ordinary candidates before C; re-check.
                _candidates(n, k, P, colors, tg, ty, ta, tng, py, pa, mg, tji, cand, cnt)
                for i in range(n):
                    hit = False
                    for t in range(cnt[i]):
                        if cand[i, t] == combo[i]:
                            hit = True
                            break
                    if not hit:
                        return False, 0.0
        stage = _step(n, combo, q, tg, ty, ta, tng, tw, arr[k], fm,
                      q2, tg2, ty2, ta2, tng2, tw2,
                      wq, wtw, ws, wf, wng)
        cost = cost + stage
        for i in range(n):
            act[k, i] = combo[i]
            colors[i] = combo[i]
            q[i] = q2[i]
            tg[i] = tg2[i]
            ty[i] = ty2[i]
            ta[i] = ta2[i]
            tng[i] = tng2[i]
            tw[i] = tw2[i]
    return True, cost


@njit(cache=True)
def search(n, P, C, conf, tji, py, pa, mg, fm, arr,
           gpa, gpb, gapab, gapba, qcap,
           wq, wtw, ws, wf, wng,
           colors0, q0, tg0, ty0, ta0, tng0, tw0,
           warm, warm_len,
           node_limit, time_limit, t_start,
           best_act, imp_nodes, imp_objs, imp_times):
    """Full branch-and-bound run. Returns (found, best_obj, nodes, limit_hit,
    n_imp). best_act holds the winning P x n color matrix when found."""
    maxch = 1
    for _ in range(n):
        maxch *= 2

    npairs = gpa.shape[0]
    D = qcap + 1
    matched = np.zeros(n, np.int64)
    slim = np.zeros(npairs, np.int64)
    nsa = np.zeros(npairs, np.int64)
    nsb = np.zeros(npairs, np.int64)
    fms = np.zeros((npairs, 2), np.int64)
    mgs = np.zeros((npairs, 2), np.int64)
    gaps = np.zeros((npairs, 2), np.int64)
    CUM = np.zeros((npairs, 2, P + 1), np.int64)
    SS = np.zeros((npairs, 2, P + 2), np.int64)
    FA = np.zeros((npairs, 2, P + 1), np.int64)
    RQ = np.zeros((npairs, 2, P + 1, D, P + 1), np.int64)
    RC = np.zeros((npairs, 2, P + 1, D, P + 1), np.float64)
    MARG = np.zeros((npairs, 2, P + 1, D), np.float64)
    VS = np.zeros((npairs, P + 1, 2, D, 2), np.float64)
    for pp in range(npairs):
        frozen = 1
        mgs[pp, 0] = P
        mgs[pp, 1] = P
        gaps[pp, 0] = gapab[pp]
        gaps[pp, 1] = gapba[pp]
        for i in range(n):
            side = -1
            if gpa[pp, i] == 1:
                side = 0
            elif gpb[pp, i] == 1:
                side = 1
            if side < 0:
                continue
            matched[i] = 1
            if side == 0:
                nsa[pp] += 1
            else:
                nsb[pp] += 1
            fms[pp, side] += fm[i]
            if mg[i] < mgs[pp, side]:
                mgs[pp, side] = mg[i]
            if pa[i] != 0:
                frozen = 0
            for m in range(P):
                CUM[pp, side, m + 1] += arr[m, i]
        slim[pp] = C - 1 if frozen == 1 else P - 1
        for side in range(2):
            for m in range(P):
                CUM[pp, side, m + 1] += CUM[pp, side, m]
            for m in range(P + 1):
                SS[pp, side, m + 1] = SS[pp, side, m] + CUM[pp, side, m]
            FA[pp, side, P] = P
            for m in range(P - 1, -1, -1):
                if CUM[pp, side, m + 1] - CUM[pp, side, m] > 0:
                    FA[pp, side, m] = m
                else:
                    FA[pp, side, m] = FA[pp, side, m + 1]
            a_side = CUM[pp, side, 1:] - CUM[pp, side, :-1]
            _serve_tables(P, a_side, fms[pp, side], qcap, wq,
                          RQ[pp, side], RC[pp, side])
            mgx = mgs[pp, side] if mgs[pp, side] > 1 else 1
            for s in range(P + 1):
                Lz = mgx if mgx < P - s else P - s
                for qv in range(D):
                    MARG[pp, side, s, qv] = (RC[pp, side, s, qv, Lz]
                                             - RC[pp, side, s, 0, Lz])
        ns2 = np.empty(2, np.int64)
        ns2[0] = nsa[pp]
        ns2[1] = nsb[pp]
        _chain_dp(VS, pp, P, slim[pp], mgs[pp], gaps[pp], ns2, qcap,
                  CUM, SS, FA, RQ, RC, MARG, wq, wtw, ws, wf, wng)
    sufa = np.zeros((P + 1, n), np.int64)
    for m in range(P - 1, -1, -1):
        for i in range(n):
            sufa[m, i] = sufa[m + 1, i] + arr[m, i]
    dbuf = np.empty(n, np.int64)
    bbuf = np.empty(n, np.float64)

    # Path state along the current DFS branch (index = steps taken).
    colors = np.empty((P + 1, n), np.int64)
    q = np.empty((P + 1, n), np.int64)
    tg = np.empty((P + 1, n), np.int64)
    ty = np.empty((P + 1, n), np.int64)
    ta = np.empty((P + 1, n), np.int64)
    tng = np.empty((P + 1, n), np.int64)
    tw = np.empty((P + 1, n), np.int64)
    cost = np.zeros(P + 1, np.float64)
    act = np.empty((P, n), np.int64)

    # Children per free depth.
    ch_combo = np.empty((C, maxch, n), np.int64)
    ch_q = np.empty((C, maxch, n), np.int64)
    ch_tg = np.empty((C, maxch, n), np.int64)
    ch_ty = np.empty((C, maxch, n), np.int64)
    ch_ta = np.empty((C, maxch, n), np.int64)
    ch_tng = np.empty((C, maxch, n), np.int64)
    ch_tw = np.empty((C, maxch, n), np.int64)
    ch_cost = np.empty((C, maxch), np.float64)
    ch_pcost = np.empty((C, maxch), np.float64)
    order = np.empty((C, maxch), np.int64)
    cnt_ch = np.zeros(C, np.int64)
    ptr = np.zeros(C, np.int64)

    cand = np.empty((n, 2), np.int64)
    cnt = np.empty(n, np.int64)
    combo = np.empty(n, np.int64)
    idx = np.empty(n, np.int64)
    srow = np.empty(n, np.int64)  # scratch

    found = 0
    best_obj = 0.0
    nodes = 0
    limit_hit = 0
    n_imp = 0

    # Root incumbent: warm start if given, else the bare continuation policy.
    ok, obj = _replay(n, P, C, warm, warm_len,
                      conf, tji, py, pa, mg, fm, arr,
                      wq, wtw, ws, wf, wng,
                      colors0, q0, tg0, ty0, ta0, tng0, tw0,
                      act, cand, cnt, combo,
                      colors[P], q[P], tg[P], ty[P], ta[P], tng[P], tw[P],
                      srow, ch_q[0, maxch - 1], ch_tg[0, maxch - 1],
                      ch_ty[0, maxch - 1], ch_ta[0, maxch - 1],
                      ch_tng[0, maxch - 1], ch_tw[0, maxch - 1])
    if not ok and warm_len > 0:
        ok, obj = _replay(n, P, C, warm, 0,
                          conf, tji, py, pa, mg, fm, arr,
                          wq, wtw, ws, wf, wng,
                          colors0, q0, tg0, ty0, ta0, tng0, tw0,
                          act, cand, cnt, combo,
                          colors[P], q[P], tg[P], ty[P], ta[P], tng[P], tw[P],
                          srow, ch_q[0, maxch - 1], ch_tg[0, maxch - 1],
                          ch_ty[0, maxch - 1], ch_ta[0, maxch - 1],
                          ch_tng[0, maxch - 1], ch_tw[0, maxch - 1])
    if ok:
        found, best_obj, n_imp = _offer(
            n, P, act, obj, found, best_obj, best_act,
            nodes, n_imp, imp_nodes, imp_objs, imp_times)

    # Seed depth 0.
    for i in range(n):
        colors[0, i] = colors0[i]
        q[0, i] = q0[i]
        tg[0, i] = tg0[i]
        ty[0, i] = ty0[i]
        ta[0, i] = ta0[i]
        tng[0, i] = tng0[i]
        tw[0, i] = tw0[i]
    cost[0] = 0.0

    d = 0
    expand_needed = True
    while d >= 0:
        if limit_hit == 1:
            break
        if expand_needed:
            # Generate, bound, filter, and order the children of depth d.
            expand_needed = False
            ptr[d] = 0
            m = 0
            _candidates(n, d, P, colors[d], tg[d], ty[d], ta[d], tng[d],
                        py, pa, mg, tji, cand, cnt)
            empty = False
            for i in range(n):
                if cnt[i] == 0:
                    empty = True
                idx[i] = 0
            if not empty:
                while True:
                    clash = False
                    for i in range(n):
                        combo[i] = cand[i, idx[i]]
                    for i in range(n):
                        if combo[i] < 3:
                            for j in range(i + 1, n):
                                if conf[i, j] == 1 and combo[j] < 3:
                                    clash = True
                                    break
                            if clash:
                                break
                    if not clash:
                        nodes += 1
                        if node_limit > 0 and nodes >= node_limit:
                            limit_hit = 1
                        if time_limit > 0.0 and (nodes & 1023) == 0:
                            with objmode(tnow="float64"):
                                tnow = time.perf_counter()
                            if tnow - t_start > time_limit:
                                limit_hit = 1
                        stage = _step(n, combo, q[d], tg[d], ty[d], ta[d],
                                      tng[d], tw[d], arr[d], fm,
                                      ch_q[d, m], ch_tg[d, m], ch_ty[d, m],
                                      ch_ta[d, m], ch_tng[d, m], ch_tw[d, m],
                                      wq, wtw, ws, wf, wng)
                        c2 = cost[d] + stage
                        for i in range(n):
                            ch_combo[d, m, i] = combo[i]
                        bnd = _bound(n, d + 1, C, P, ch_combo[d, m], ch_q[d, m],
                                     ch_tg[d, m], ch_ty[d, m], ch_ta[d, m],
                                     ch_tng[d, m], ch_tw[d, m], arr, sufa,
                                     py, pa, mg, fm, conf, tji,
                                     gpa, gpb, gapab, gapba, slim, nsa, nsb,
                                     CUM, SS, FA, RQ, RC, MARG, VS, qcap,
                                     matched, dbuf, bbuf,
                                     wq, wtw, ws, wf, wng)
                        pc = c2 + bnd
                        if found == 0 or pc <= best_obj:
                            ch_cost[d, m] = c2
                            ch_pcost[d, m] = pc
                            # Insertion sort by bound; generation order breaks
                            # ties, which is the lexicographic rank order.
                            pos = m
                            while pos > 0 and ch_pcost[d, order[d, pos - 1]] > pc:
                                order[d, pos] = order[d, pos - 1]
                                pos -= 1
                            order[d, pos] = m
                            m += 1
                        if limit_hit == 1:
                            break
                    # Odometer advance.
                    adv = n - 1
                    while adv >= 0:
                        idx[adv] += 1
                        if idx[adv] < cnt[adv]:
                            break
                        idx[adv] = 0
                        adv -= 1
                    if adv < 0:
                        break
            cnt_ch[d] = m
            if limit_hit == 1:
                break

        if ptr[d] >= cnt_ch[d]:
            d -= 1
            continue
        ci = order[d, ptr[d]]
        ptr[d] += 1
        if found == 1:
            pc = ch_pcost[d, ci]
            if pc > best_obj:
                continue
            if pc == best_obj:
                # Every completion costs >= pc == best_obj, so the child can
                # only tie. Signal-major key: if the fixed prefix of signal 0's
                # trajectory already exceeds the incumbent's at its first
                # difference, every completion loses the tie-break too.
                dec = 0
                for j in range(d):
                    dlt = act[j, 0] - best_act[j, 0]
                    if dlt != 0:
                        dec = 1 if dlt > 0 else -1
                        break
                if dec == 0:
                    dlt = ch_combo[d, ci, 0] - best_act[d, 0]
                    if dlt != 0:
                        dec = 1 if dlt > 0 else -1
                if dec == 1:
                    continue
        # Descend into child ci.
        for i in range(n):
            colors[d + 1, i] = ch_combo[d, ci, i]
            q[d + 1, i] = ch_q[d, ci, i]
            tg[d + 1, i] = ch_tg[d, ci, i]
            ty[d + 1, i] = ch_ty[d, ci, i]
            ta[d + 1, i] = ch_ta[d, ci, i]
            tng[d + 1, i] = ch_tng[d, ci, i]
            tw[d + 1, i] = ch_tw[d, ci, i]
            act[d, i] = ch_combo[d, ci, i]
        cost[d + 1] = ch_cost[d, ci]

        if d + 1 == C:
            # Forced continuation to the horizon.
            kk = C
            legal = True
            while kk < P:
                if not _policy(n, colors[kk], ty[kk], ta[kk], tng[kk],
                               py, pa, tji, combo):
                    legal = False
                    break
                stage = _step(n, combo, q[kk], tg[kk], ty[kk], ta[kk],
                              tng[kk], tw[kk], arr[kk], fm,
                              q[kk + 1], tg[kk + 1], ty[kk + 1], ta[kk + 1],
                              tng[kk + 1], tw[kk + 1],
                              wq, wtw, ws, wf, wng)
                for i in range(n):
                    colors[kk + 1, i] = combo[i]
                    act[kk, i] = combo[i]
                cost[kk + 1] = cost[kk] + stage
                kk += 1
            if legal:
                found, best_obj, n_imp = _offer(
                    n, P, act, cost[P], found, best_obj, best_act,
                    nodes, n_imp, imp_nodes, imp_objs, imp_times)
            continue

        d += 1
        expand_needed = True

    return found, best_obj, nodes, limit_hit, n_imp
