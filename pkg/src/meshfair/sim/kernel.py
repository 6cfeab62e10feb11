"""Compiled event loop of the slot simulator.

All state lives in arrays owned by the caller so the loop can stop when its
buffer of uniforms runs low and resume after a refill without changing the
random stream.
"""
import math

import numpy as np
from numba import njit

NEED_RANDOM = 1
FINISHED = 0

# indices into the float state vector
F_POS = 0


@njit(cache=True)
def aimd_update(cw, p_idle, target, alpha, beta, floor, ceil, literal):
    """One AIMD step of the contention window, rounded and clamped."""
    if literal:
        grow = p_idle > target
    else:
        grow = p_idle < target
    if grow:
        v = cw + alpha
    else:
        v = cw * (1.0 - beta)
    v = math.floor(v + 0.5)
    if v < floor:
        v = floor
    if v > ceil:
        v = ceil
    return v


@njit(cache=True)
def tau_of(cw):
    return min(1.0, 2.0 / (cw - 1.0))


@njit(cache=True)
def admits(occupancy, capacity):
    return occupancy < capacity


@njit(cache=True)
def _add_time(arr, col, t0, t1, warmup, window, duration):
    """Spread the interval ``[t0, t1)`` over the measurement windows."""
    a = max(t0, warmup)
    b = min(t1, duration)
    n_win = arr.shape[0]
    if b <= a or n_win == 0:
        return
    k = int((a - warmup) // window)
    if k < 0:
        k = 0
    while a < b and k < n_win:
        edge = warmup + (k + 1) * window
        e = min(b, edge)
        if e > a:
            arr[k, col] += e - a
            a = e
        k += 1


@njit(cache=True)
def _window(t, warmup, window, duration, n_win):
    if t < warmup or t >= duration or n_win == 0:
        return -1
    k = int((t - warmup) // window)
    return k if k < n_win else -1


@njit(cache=True, nogil=True)
def run_kernel(
    # static topology
    ch_sigma, ch_tc, ch_port_start, ch_port_end, port_start, port_end,
    ent_flow, ent_next, ent_source, ent_bits,
    # parameters: [capacity, duration, warmup, window, max_slots, period, alpha, beta, floor, ceil]
    params, aimd_on, literal, target,
    # dynamic state
    clock, pend, pend_port, done, q, r, sent, cw, next_aimd,
    per_idle, per_slots, n_trace, counters, injected, delivered,
    # outputs
    win_slots, win_idle, win_time, win_bits, win_air,
    tot_slots, tot_time, tot_bits, tot_air,
    tr_time, tr_pidle, tr_cw,
    # randomness
    u, fstate,
):
    capacity = params[0]
    duration = params[1]
    warmup = params[2]
    window = params[3]
    max_slots = params[4]
    period = params[5]
    alpha = params[6]
    beta = params[7]
    floor = params[8]
    ceil = params[9]
    n_ch = clock.shape[0]
    n_win = win_slots.shape[0]
    n_trace_cap = tr_time.shape[0]
    nu = u.shape[0]
    pos = int(fstate[F_POS])
    # queue checks are inlined: helpers taking arrays pay reference counting on every call
    active = np.zeros(port_start.shape[0], dtype=np.bool_)

    while True:
        c = -1
        for d in range(n_ch):
            if done[d] and pend[d] == 0:
                continue
            if c < 0 or clock[d] < clock[c] or (clock[d] == clock[c] and pend[d] > 0 and pend[c] == 0):
                c = d
        if c < 0:
            fstate[F_POS] = pos
            return FINISHED
        t = clock[c]

        if pend[c] > 0:
            # completion of a successful burst: hand frames to next hops or sinks
            p = pend_port[c]
            for e in range(port_start[p], port_end[p]):
                if sent[e] == 0:
                    continue
                sent[e] = 0
                nx = ent_next[e]
                if nx >= 0:
                    r[nx] -= 1
                    q[nx] += 1
                else:
                    f = ent_flow[e]
                    delivered[f] += 1
                    if t >= warmup and t <= duration:
                        tot_bits[f] += ent_bits[e]
                        k = _window(t, warmup, window, duration, n_win)
                        if k < 0 and t == duration and n_win > 0:
                            k = n_win - 1
                        if k >= 0:
                            win_bits[k, f] += ent_bits[e]
            pend[c] = 0
            continue

        if done[c]:
            continue
        if t >= duration or counters[c] >= max_slots:
            done[c] = 1
            continue

        if aimd_on and t >= next_aimd[c]:
            k = n_trace[c]
            pid = per_idle[c] / per_slots[c] if per_slots[c] > 0 else np.nan
            if per_slots[c] > 0:
                for p in range(ch_port_start[c], ch_port_end[c]):
                    cw[p] = aimd_update(cw[p], pid, target[c], alpha, beta, floor, ceil, literal)
            if k < n_trace_cap:
                tr_time[k, c] = next_aimd[c]
                tr_pidle[k, c] = pid
                for p in range(ch_port_start[c], ch_port_end[c]):
                    tr_cw[k, p] = cw[p]
                n_trace[c] = k + 1
            per_idle[c] = 0.0
            per_slots[c] = 0.0
            while next_aimd[c] <= t:
                next_aimd[c] += period

        if pos + 2 > nu:
            fstate[F_POS] = pos
            return NEED_RANDOM

        # contenders and the idle probability of the next slot
        p_idle = 1.0
        for p in range(ch_port_start[c], ch_port_end[c]):
            ok = False
            for e in range(port_start[p], port_end[p]):
                if q[e] > 0:
                    nx = ent_next[e]
                    if nx < 0 or admits(q[nx] + r[nx], capacity):
                        ok = True
                        break
            active[p] = ok
            if ok:
                p_idle *= 1.0 - tau_of(cw[p])

        # idle slots can be drawn in one go up to the next external event
        sigma = ch_sigma[c]
        horizon = duration
        if aimd_on and next_aimd[c] < horizon:
            horizon = next_aimd[c]
        if n_win > 0:
            if t < warmup:
                edge = warmup
            else:
                edge = warmup + (math.floor((t - warmup) / window) + 1) * window
                if edge <= t:
                    edge += window
            if edge < horizon:
                horizon = edge
        elif warmup > t and warmup < horizon:
            horizon = warmup
        for d in range(n_ch):
            if d != c and not (done[d] and pend[d] == 0) and clock[d] < horizon:
                horizon = clock[d]
        if math.isinf(horizon):
            span = 1 << 40
        else:
            span = int(math.ceil((horizon - t) / sigma))
            if span < 1:
                span = 1
        room = max_slots - counters[c]
        if room < span:
            span = int(room)

        if p_idle >= 1.0:
            k_idle = span
        elif p_idle <= 0.0:
            k_idle = 0
            pos += 1
        else:
            v = 1.0 - u[pos]
            pos += 1
            g = math.log(v) / math.log(p_idle)
            k_idle = span if g >= span else int(g)

        if k_idle > 0:
            n_idle = min(k_idle, span)
            t_end = t + n_idle * sigma
            counters[c] += n_idle
            per_idle[c] += n_idle
            per_slots[c] += n_idle
            if t >= warmup:
                tot_slots[c, 0] += n_idle
                tot_slots[c, 1] += n_idle
                kw = _window(t, warmup, window, duration, n_win)
                if kw >= 0:
                    win_slots[kw, c] += n_idle
                    win_idle[kw, c] += n_idle
            if n_win > 0:
                _add_time(win_time, 3 * c, t, t_end, warmup, window, duration)
            if t_end > warmup:
                tot_time[c, 0] += min(t_end, duration) - max(t, warmup)
            clock[c] = t_end
            if k_idle >= span:
                continue
            t = t_end

        # a busy slot starts at t: pick which station(s) transmitted
        target_mass = u[pos] * (1.0 - p_idle)
        pos += 1
        winner = -1
        acc = 0.0
        for p in range(ch_port_start[c], ch_port_end[c]):
            if not active[p]:
                continue
            tp = tau_of(cw[p])
            # success probability of p: tau_p * prod_{j != p} (1 - tau_j)
            if tp >= 1.0:
                others = 1.0
                for p2 in range(ch_port_start[c], ch_port_end[c]):
                    if p2 != p and active[p2]:
                        others *= 1.0 - tau_of(cw[p2])
                ps = others
            else:
                ps = tp * p_idle / (1.0 - tp)
            acc += ps
            if target_mass < acc:
                winner = p
                break

        counters[c] += 1
        per_slots[c] += 1
        kw = _window(t, warmup, window, duration, n_win)
        if t >= warmup:
            tot_slots[c, 0] += 1
            if kw >= 0:
                win_slots[kw, c] += 1
        tc = ch_tc[c]
        if winner < 0:
            t_end = t + tc
            if n_win > 0:
                _add_time(win_time, 3 * c + 2, t, t_end, warmup, window, duration)
            if t_end > warmup:
                tot_time[c, 2] += max(0.0, min(t_end, duration) - max(t, warmup))
            clock[c] = t_end
            continue

        # one frame from every sendable queue of the winner
        n_flow = tot_bits.shape[0]
        t0 = t
        for e in range(port_start[winner], port_end[winner]):
            if q[e] <= 0:
                continue
            nx = ent_next[e]
            if nx >= 0 and not admits(q[nx] + r[nx], capacity):
                continue
            q[e] -= 1
            sent[e] = 1
            if nx >= 0:
                r[nx] += 1
            f = ent_flow[e]
            if ent_source[e]:
                q[e] += 1
                injected[f] += 1
            t1 = t0 + tc
            if n_win > 0:
                _add_time(win_time, 3 * c + 1, t0, t1, warmup, window, duration)
                _add_time(win_air, f * n_ch + c, t0, t1, warmup, window, duration)
            if t1 > warmup:
                dt = max(0.0, min(t1, duration) - max(t0, warmup))
                tot_time[c, 1] += dt
                tot_air[f, c] += dt
            t0 = t1
        clock[c] = t0
        pend[c] = 1
        pend_port[c] = winner
