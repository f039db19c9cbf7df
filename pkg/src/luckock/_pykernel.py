"""Pure-Python simulation kernel.

Mirrors the compiled kernel in ``_kernel.pyx`` operation for operation so
that both produce identical statistics for identical input streams.  It is
used when the extension is not built or when ``LUCKOCK_PURE_PYTHON=1``.
"""

from __future__ import annotations

import heapq
from bisect import bisect_left, bisect_right

import numpy as np


class ChainState:
    """Resumable state of one simulated chain plus its collectors.

    Arrivals are fed in chunks through :meth:`advance`; each arrival carries
    its price, side, waiting time and the values of ``K`` weight functions
    at its price (buy weights for buys, sell weights for sells).  Resting
    orders keep their weight values so that removing them updates the
    tracked linear functionals without re-evaluating any weight function.
    """

    def __init__(self, lo, hi, n_weights, f_grid, burn, batch_len, n_batches,
                 regions, sample_every, cap, check_invariants=False):
        self.lo = float(lo)
        self.hi = float(hi)
        self.K = int(n_weights)
        self.f_grid = [float(g) for g in np.asarray(f_grid, dtype=float)]
        self.burn = int(burn)
        self.batch_len = max(int(batch_len), 1)
        self.n_batches = max(int(n_batches), 1)
        self.regions = [(float(a), float(b)) for a, b in np.asarray(regions, dtype=float).reshape(-1, 2)]
        self.sample_every = int(sample_every)
        self.cap = int(cap)
        self.check = bool(check_invariants)

        self.buys = []  # heap of [-price, w_1..w_K]
        self.sells = []  # heap of [price, w_1..w_K]
        self.F = [0.0] * self.K
        self.step = 0
        self.time = 0.0
        self.last_empty = 0
        self.return_times = []
        self.capped = 0
        m = len(self.f_grid) + 1
        self.hist_minus = np.zeros((self.n_batches, m), dtype=np.int64)
        self.hist_plus = np.zeros((self.n_batches, m), dtype=np.int64)
        self.batch_min_bid = np.full(self.n_batches, np.inf)
        self.batch_max_ask = np.full(self.n_batches, -np.inf)
        R = len(self.regions)
        self.counters = np.zeros((R, 4), dtype=np.int64)  # sell adds, sell removes, buy adds, buy removes
        self.samples = []  # rows: step, n_buys, n_sells, F_1..F_K
        self.max_size = 0

    # book access -----------------------------------------------------------
    def insert(self, price, is_buy, weights=()):
        w = [float(v) for v in weights] + [0.0] * (self.K - len(weights))
        if is_buy:
            heapq.heappush(self.buys, [-float(price)] + w)
        else:
            heapq.heappush(self.sells, [float(price)] + w)
        for k in range(self.K):
            self.F[k] += w[k]

    def book(self):
        return sorted(-e[0] for e in self.buys), sorted(e[0] for e in self.sells)

    def clear(self):
        self.buys = []
        self.sells = []
        self.F = [0.0] * self.K

    @property
    def size(self):
        return len(self.buys) + len(self.sells)

    def functionals(self):
        return list(self.F)

    # main loop -------------------------------------------------------------
    def advance(self, prices, is_buy, dts, weights, max_episodes=0):
        """Apply arrivals in order; returns how many were consumed.

        With ``max_episodes > 0`` the loop stops as soon as that many
        excursions (returns to the empty book plus capped ones) are recorded.
        """
        lo, hi, K = self.lo, self.hi, self.K
        grid = self.f_grid
        regions = self.regions
        counters = self.counters
        n = len(prices)
        wrows = weights.tolist() if K else None
        plist = prices.tolist()
        blist = is_buy.tolist()
        dlist = dts.tolist()
        for i in range(n):
            u = plist[i]
            buy = blist[i]
            self.time += dlist[i]
            self.step += 1
            step = self.step
            if buy:
                if self.sells and u >= self.sells[0][0]:
                    e = heapq.heappop(self.sells)
                    for k in range(K):
                        self.F[k] -= e[1 + k]
                    p = e[0]
                    for r in range(len(regions)):
                        if regions[r][0] <= p <= regions[r][1] and step > self.burn:
                            counters[r, 1] += 1
                elif lo < u < hi:
                    w = wrows[i] if K else []
                    heapq.heappush(self.buys, [-u] + list(w))
                    for k in range(K):
                        self.F[k] += w[k]
                    for r in range(len(regions)):
                        if regions[r][0] <= u <= regions[r][1] and step > self.burn:
                            counters[r, 2] += 1
            else:
                if self.buys and u <= -self.buys[0][0]:
                    e = heapq.heappop(self.buys)
                    for k in range(K):
                        self.F[k] -= e[1 + k]
                    p = -e[0]
                    for r in range(len(regions)):
                        if regions[r][0] <= p <= regions[r][1] and step > self.burn:
                            counters[r, 3] += 1
                elif lo < u < hi:
                    w = wrows[i] if K else []
                    heapq.heappush(self.sells, [u] + list(w))
                    for k in range(K):
                        self.F[k] += w[k]
                    for r in range(len(regions)):
                        if regions[r][0] <= u <= regions[r][1] and step > self.burn:
                            counters[r, 0] += 1

            bid = -self.buys[0][0] if self.buys else lo
            ask = self.sells[0][0] if self.sells else hi
            size = len(self.buys) + len(self.sells)
            if size > self.max_size:
                self.max_size = size
            if self.check and bid >= ask and self.buys and self.sells:
                raise AssertionError(f"crossed book at step {step}: bid {bid} >= ask {ask}")

            if step > self.burn:
                b = (step - self.burn - 1) // self.batch_len
                if b >= self.n_batches:
                    b = self.n_batches - 1
                self.hist_minus[b, bisect_left(grid, bid)] += 1
                self.hist_plus[b, bisect_right(grid, ask)] += 1
                if bid < self.batch_min_bid[b]:
                    self.batch_min_bid[b] = bid
                if ask > self.batch_max_ask[b]:
                    self.batch_max_ask[b] = ask

            if self.sample_every > 0 and step % self.sample_every == 0:
                self.samples.append([float(step), float(len(self.buys)), float(len(self.sells))] + list(self.F))

            if size == 0:
                self.return_times.append(step - self.last_empty)
                self.last_empty = step
            elif self.cap > 0 and step - self.last_empty >= self.cap:
                self.capped += 1
                self.clear()
                self.last_empty = step
            if max_episodes > 0 and len(self.return_times) + self.capped >= max_episodes:
                return i + 1
        return n

    # collector export ------------------------------------------------------
    def sample_array(self):
        if not self.samples:
            return np.zeros((0, 3 + self.K))
        return np.asarray(self.samples, dtype=float)

    def return_time_array(self):
        return np.asarray(self.return_times, dtype=np.int64)
