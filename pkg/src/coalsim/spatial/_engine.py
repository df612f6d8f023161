"""Event-driven kernel for the spatial Lambda-coalescent.

One occupied site = one slot. Slot ``s`` holds the site key, the block labels living there
(``members[s][:cnt[s]]``) and its total rate ``lambda_b 1{b>=2} + b rho`` in a sum tree, so
the next event site is drawn in O(log #slots). Labels are the initial particle indices; a
merged block keeps the smallest label of its parts.

In ``instant`` mode (coalescing random walks) the per-site rate is ``b rho`` and a block that
jumps onto an occupied site merges with it on arrival.
"""

import numpy as np
from numba import njit, types
from numba.typed import Dict, List

from coalsim import _kernels as K

BD_NONE = 0
BD_KILL = 1
BD_FREEZE = 2

EV_MERGE = 0
EV_MOVE = 1
EV_KILL = 2
EV_FREEZE = 3

ST_ALIVE = 0
ST_MERGED = 1
ST_KILLED = 2
ST_FROZEN = 3


@njit(cache=True, nogil=True)
def _grow_log(log_t, log_i, n):
    if n < len(log_t):
        return log_t, log_i
    new_t = np.empty(2 * len(log_t))
    new_i = np.empty((2 * len(log_t), 4), dtype=np.int64)
    new_t[:n] = log_t[:n]
    new_i[:n] = log_i[:n]
    return new_t, new_i


@njit(cache=True, nogil=True)
def _site_rate(lam, b, rho, instant):
    if instant:
        return b * rho
    r = b * rho
    if b >= 2:
        r += lam[b]
    return r


@njit(cache=True, nogil=True)
def run_engine(gk, gd, gL, indptr, indices, dist_arr, mech, rho, instant, init_keys, t_end,
               sample_times, boundary, R, want_log, want_snap, stage_t, stage_R, rng):
    n0 = len(init_keys)
    size = 1
    while size < max(n0, 1):
        size *= 2
    tree = np.zeros(2 * size)
    slot_key = np.full(max(n0, 1), -1, dtype=np.int64)
    cnt = np.zeros(max(n0, 1), dtype=np.int64)
    members = List()
    index = Dict.empty(key_type=types.int64, value_type=types.int64)
    free = np.empty(max(n0, 1), dtype=np.int64)
    nfree = 0
    status = np.zeros(n0, dtype=np.int8)
    label_site = init_keys.copy()
    frozen = Dict.empty(key_type=types.int64, value_type=types.int64)
    pairs_only = mech[1] == K.MK_NONE
    lam = mech[4]

    # --- initial placement ------------------------------------------------
    order = np.argsort(init_keys, kind="mergesort")
    nslots = 0
    i = 0
    while i < n0:
        j = i
        key = init_keys[order[i]]
        while j < n0 and init_keys[order[j]] == key:
            j += 1
        b = j - i
        arr = np.empty(max(b, 4), dtype=np.int64)
        for q in range(b):
            arr[q] = order[i + q]
        if instant and b > 1:
            # coalescing walks cannot share a site: collapse at time 0 onto the smallest label
            for q in range(1, b):
                status[arr[q]] = ST_MERGED
            b = 1
        members.append(arr)
        slot_key[nslots] = key
        cnt[nslots] = b
        index[key] = nslots
        K.tree_set(tree, size, nslots, _site_rate(lam, b, rho, instant))
        nslots += 1
        i = j
    for s in range(n0 - 1, nslots - 1, -1):
        members.append(np.empty(4, dtype=np.int64))
        free[nfree] = s
        nfree += 1

    live = 0
    for s in range(nslots):
        live += cnt[s]
    nfrozen = 0
    merges = 0
    events = 0

    # --- outputs ------------------------------------------------------------
    ns = len(sample_times)
    out_live = np.zeros(ns, dtype=np.int64)
    out_frozen = np.zeros(ns, dtype=np.int64)
    out_occ = np.zeros(ns, dtype=np.int64)
    out_merges = np.zeros(ns, dtype=np.int64)
    snap_keys = List()
    snap_cnts = List()
    snap_fkeys = List()
    snap_fcnts = List()
    log_t = np.empty(1024 if want_log else 1)
    log_i = np.empty((len(log_t), 4), dtype=np.int64)
    nlog = 0

    nst = len(stage_t)
    st_X = np.zeros(nst, dtype=np.int64)
    st_Y = np.zeros(nst, dtype=np.int64)
    st_S = np.zeros(nst, dtype=np.int64)
    st_Z = np.zeros(nst, dtype=np.int64)
    stay = np.zeros(n0, dtype=np.uint8)
    track = np.zeros(n0, dtype=np.uint8)
    stay_R = -1.0
    track_R = -1.0
    track_stage = -1
    tracking = nst > 0
    need_dist = boundary != BD_NONE or tracking

    t = 0.0
    si = 0
    ki = 0
    while True:
        total = tree[1]
        if total > 0.0:
            tn = t + rng.exponential(1.0) / total
        else:
            tn = np.inf

        # checkpoints strictly before the next event read the current state
        while True:
            ts = sample_times[si] if si < ns else np.inf
            tk = stage_t[ki] if ki < nst else np.inf
            if min(ts, tk) >= tn or min(ts, tk) > t_end:
                break
            if tk <= ts:
                # stage k: record X_k, Y_k, S_k; close Z_{k-1}; arm flags for the next interval
                rk = stage_R[ki]
                xin = 0
                yout = 0
                sk = 0
                for s in range(n0):
                    if cnt[s] == 0:
                        continue
                    dd = K.graph_dist(gk, gd, gL, dist_arr, slot_key[s])
                    if dd <= rk:
                        xin += cnt[s]
                    else:
                        yout += cnt[s]
                    arr = members[s]
                    for q in range(cnt[s]):
                        sk += stay[arr[q]]
                st_X[ki] = xin
                st_Y[ki] = yout
                st_S[ki] = sk if ki > 0 else 0
                if ki + 1 < nst:
                    stay_R = stage_R[ki + 1]
                    track_R = stage_R[ki + 1]
                    track_stage = ki
                    for s in range(n0):
                        if cnt[s] == 0:
                            continue
                        dd = K.graph_dist(gk, gd, gL, dist_arr, slot_key[s])
                        arr = members[s]
                        for q in range(cnt[s]):
                            stay[arr[q]] = 1 if dd <= stay_R else 0
                            track[arr[q]] = 1 if dd <= rk else 0
                else:
                    track_stage = -1
                    for q in range(n0):
                        track[q] = 0
                ki += 1
            else:
                out_live[si] = live
                out_frozen[si] = nfrozen
                occ = 0
                for s in range(n0):
                    if cnt[s] > 0:
                        occ += 1
                out_occ[si] = occ
                out_merges[si] = merges
                if want_snap:
                    ka = np.empty(occ, dtype=np.int64)
                    ca = np.empty(occ, dtype=np.int64)
                    q = 0
                    for s in range(n0):
                        if cnt[s] > 0:
                            ka[q] = slot_key[s]
                            ca[q] = cnt[s]
                            q += 1
                    snap_keys.append(ka)
                    snap_cnts.append(ca)
                    fk = np.empty(len(frozen), dtype=np.int64)
                    fc = np.empty(len(frozen), dtype=np.int64)
                    q = 0
                    for key in frozen:
                        fk[q] = key
                        fc[q] = frozen[key]
                        q += 1
                    snap_fkeys.append(fk)
                    snap_fcnts.append(fc)
                si += 1

        if tn > t_end:
            break
        t = tn
        events += 1
        s = K.tree_sample(tree, size, rng)
        b = cnt[s]
        arr = members[s]
        key = slot_key[s]
        u = rng.random() * tree[s + size]

        if (not instant) and b >= 2 and u < lam[b]:
            # --- merger of k uniformly chosen blocks -----------------------
            if pairs_only:
                k = 2
            else:
                k = K.sample_k(mech, b, rng)
            for q in range(k):
                j = q + rng.integers(0, b - q)
                tmp = arr[q]
                arr[q] = arr[j]
                arr[j] = tmp
            best = 0
            for q in range(1, k):
                if arr[q] < arr[best]:
                    best = q
            tmp = arr[0]
            arr[0] = arr[best]
            arr[best] = tmp
            surv = arr[0]
            for q in range(1, k):
                lab = arr[q]
                status[lab] = ST_MERGED
                if tracking:
                    if stay[lab] > stay[surv]:
                        stay[surv] = stay[lab]
                    if track[lab] > track[surv]:
                        track[surv] = track[lab]
                if want_log:
                    log_t, log_i = _grow_log(log_t, log_i, nlog)
                    log_t[nlog] = t
                    log_i[nlog, 0] = EV_MERGE
                    log_i[nlog, 1] = surv
                    log_i[nlog, 2] = lab
                    log_i[nlog, 3] = key
                    nlog += 1
            new_len = b - k + 1
            hole = 1
            src = max(k, new_len)
            while src < b:
                arr[hole] = arr[src]
                hole += 1
                src += 1
            cnt[s] = new_len
            live -= k - 1
            merges += 1
            K.tree_set(tree, size, s, _site_rate(lam, new_len, rho, instant))
            continue

        # --- migration of one uniformly chosen block ------------------------
        j = rng.integers(0, b)
        lab = arr[j]
        arr[j] = arr[b - 1]
        cnt[s] = b - 1
        if b == 1:
            index.pop(key)
            slot_key[s] = -1
            free[nfree] = s
            nfree += 1
            K.tree_set(tree, size, s, 0.0)
        else:
            K.tree_set(tree, size, s, _site_rate(lam, b - 1, rho, instant))
        target = K.graph_random_neighbor(gk, gd, gL, indptr, indices, key, rng)
        dd = 0
        if need_dist:
            dd = K.graph_dist(gk, gd, gL, dist_arr, target)
        if tracking:
            if stay[lab] == 1 and dd > stay_R:
                stay[lab] = 0
            if track[lab] == 1 and dd > track_R:
                st_Z[track_stage] += 1
                track[lab] = 0

        if boundary != BD_NONE and dd > R:
            live -= 1
            label_site[lab] = target
            if boundary == BD_KILL:
                status[lab] = ST_KILLED
                ev = EV_KILL
            else:
                status[lab] = ST_FROZEN
                if target in frozen:
                    frozen[target] += 1
                else:
                    frozen[target] = 1
                nfrozen += 1
                ev = EV_FREEZE
            if want_log:
                log_t, log_i = _grow_log(log_t, log_i, nlog)
                log_t[nlog] = t
                log_i[nlog, 0] = ev
                log_i[nlog, 1] = lab
                log_i[nlog, 2] = key
                log_i[nlog, 3] = target
                nlog += 1
            continue

        if want_log:
            log_t, log_i = _grow_log(log_t, log_i, nlog)
            log_t[nlog] = t
            log_i[nlog, 0] = EV_MOVE
            log_i[nlog, 1] = lab
            log_i[nlog, 2] = key
            log_i[nlog, 3] = target
            nlog += 1

        if target not in index:
            nfree -= 1
            s2 = free[nfree]
            index[target] = s2
            slot_key[s2] = target
            members[s2][0] = lab
            cnt[s2] = 1
            K.tree_set(tree, size, s2, _site_rate(lam, 1, rho, instant))
            continue
        s2 = index[target]
        b2 = cnt[s2]
        arr2 = members[s2]
        if instant:
            # coalesce on arrival, keeping the smaller label
            other = arr2[0]
            surv = min(lab, other)
            gone = max(lab, other)
            arr2[0] = surv
            status[gone] = ST_MERGED
            live -= 1
            merges += 1
            if tracking:
                if stay[gone] > stay[surv]:
                    stay[surv] = stay[gone]
                if track[gone] > track[surv]:
                    track[surv] = track[gone]
            if want_log:
                log_t, log_i = _grow_log(log_t, log_i, nlog)
                log_t[nlog] = t
                log_i[nlog, 0] = EV_MERGE
                log_i[nlog, 1] = surv
                log_i[nlog, 2] = gone
                log_i[nlog, 3] = target
                nlog += 1
            continue
        if b2 == len(arr2):
            bigger = np.empty(2 * len(arr2), dtype=np.int64)
            bigger[:b2] = arr2[:b2]
            members[s2] = bigger
            arr2 = bigger
        arr2[b2] = lab
        cnt[s2] = b2 + 1
        K.tree_set(tree, size, s2, _site_rate(lam, b2 + 1, rho, instant))

    # --- final state ----------------------------------------------------------
    occ = 0
    for s in range(n0):
        if cnt[s] > 0:
            occ += 1
    fin_keys = np.empty(occ, dtype=np.int64)
    fin_cnts = np.empty(occ, dtype=np.int64)
    q = 0
    for s in range(n0):
        if cnt[s] > 0:
            fin_keys[q] = slot_key[s]
            fin_cnts[q] = cnt[s]
            arr = members[s]
            for r in range(cnt[s]):
                label_site[arr[r]] = slot_key[s]
            q += 1
    fz_keys = np.empty(len(frozen), dtype=np.int64)
    fz_cnts = np.empty(len(frozen), dtype=np.int64)
    q = 0
    for key in frozen:
        fz_keys[q] = key
        fz_cnts[q] = frozen[key]
        q += 1
    return (fin_keys, fin_cnts, fz_keys, fz_cnts, status, label_site,
            out_live, out_frozen, out_occ, out_merges,
            snap_keys, snap_cnts, snap_fkeys, snap_fcnts,
            log_t[:nlog].copy(), log_i[:nlog].copy(),
            st_X, st_Y, st_S, st_Z, events, t)
