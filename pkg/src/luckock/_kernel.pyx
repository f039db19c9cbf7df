# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernel.

Same interface and semantics as ``_pykernel.ChainState``; the two are
checked against each other in the test suite.  Each heap entry is a
contiguous block ``[key, w_1, ..., w_K]`` where ``key`` is the price for
sells and minus the price for buys, so both sides use one min-heap routine.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memcpy

cnp.import_array()


cdef struct Heap:
    double *data
    Py_ssize_t count
    Py_ssize_t capacity
    Py_ssize_t stride


cdef int heap_init(Heap *h, Py_ssize_t stride) except -1:
    h.stride = stride
    h.count = 0
    h.capacity = 64
    h.data = <double *> malloc(h.capacity * stride * sizeof(double))
    if h.data == NULL:
        raise MemoryError()
    return 0


cdef int heap_reserve(Heap *h) except -1:
    cdef double *p
    if h.count < h.capacity:
        return 0
    p = <double *> realloc(h.data, 2 * h.capacity * h.stride * sizeof(double))
    if p == NULL:
        raise MemoryError()
    h.data = p
    h.capacity *= 2
    return 0


cdef inline void swap_block(double *a, double *b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t j
    cdef double t
    for j in range(n):
        t = a[j]
        a[j] = b[j]
        b[j] = t


cdef int heap_push(Heap *h, double key, double *w) except -1:
    cdef Py_ssize_t s = h.stride
    cdef Py_ssize_t i, parent
    heap_reserve(h)
    i = h.count
    h.data[i * s] = key
    if s > 1:
        memcpy(&h.data[i * s + 1], w, (s - 1) * sizeof(double))
    h.count += 1
    while i > 0:
        parent = (i - 1) >> 1
        if h.data[parent * s] <= h.data[i * s]:
            break
        swap_block(&h.data[parent * s], &h.data[i * s], s)
        i = parent
    return 0


cdef void heap_pop(Heap *h, double *out) noexcept nogil:
    """Remove the minimum; copies its block into ``out``."""
    cdef Py_ssize_t s = h.stride
    cdef Py_ssize_t i = 0, l, r, m
    memcpy(out, h.data, s * sizeof(double))
    h.count -= 1
    if h.count == 0:
        return
    memcpy(h.data, &h.data[h.count * s], s * sizeof(double))
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < h.count and h.data[l * s] < h.data[m * s]:
            m = l
        if r < h.count and h.data[r * s] < h.data[m * s]:
            m = r
        if m == i:
            break
        swap_block(&h.data[m * s], &h.data[i * s], s)
        i = m


cdef inline Py_ssize_t bisect_left(double[::1] a, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t bisect_right(double[::1] a, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if x < a[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef class ChainState:
    cdef Heap buys
    cdef Heap sells
    cdef double *scratch
    cdef public double lo, hi, time
    cdef public Py_ssize_t K, burn, batch_len, n_batches, sample_every, cap
    cdef public long long step, last_empty, capped, max_size
    cdef public bint check
    cdef double[::1] f_grid
    cdef double[:, ::1] regions
    cdef double[::1] F
    cdef public object hist_minus, hist_plus, batch_min_bid, batch_max_ask, counters
    cdef list samples
    cdef list return_times

    def __cinit__(self, *args, **kwargs):
        self.buys.data = NULL
        self.sells.data = NULL
        self.scratch = NULL

    def __init__(self, lo, hi, n_weights, f_grid, burn, batch_len, n_batches,
                 regions, sample_every, cap, check_invariants=False):
        self.lo = float(lo)
        self.hi = float(hi)
        self.K = int(n_weights)
        self.f_grid = np.ascontiguousarray(f_grid, dtype=np.float64)
        self.burn = int(burn)
        self.batch_len = max(int(batch_len), 1)
        self.n_batches = max(int(n_batches), 1)
        self.regions = np.ascontiguousarray(np.asarray(regions, dtype=np.float64).reshape(-1, 2))
        self.sample_every = int(sample_every)
        self.cap = int(cap)
        self.check = bool(check_invariants)
        heap_init(&self.buys, 1 + self.K)
        heap_init(&self.sells, 1 + self.K)
        self.scratch = <double *> malloc((1 + self.K) * sizeof(double))
        if self.scratch == NULL:
            raise MemoryError()
        self.F = np.zeros(self.K, dtype=np.float64)
        self.step = 0
        self.time = 0.0
        self.last_empty = 0
        self.capped = 0
        self.max_size = 0
        self.return_times = []
        self.samples = []
        m = self.f_grid.shape[0] + 1
        self.hist_minus = np.zeros((self.n_batches, m), dtype=np.int64)
        self.hist_plus = np.zeros((self.n_batches, m), dtype=np.int64)
        self.batch_min_bid = np.full(self.n_batches, np.inf)
        self.batch_max_ask = np.full(self.n_batches, -np.inf)
        self.counters = np.zeros((self.regions.shape[0], 4), dtype=np.int64)

    def __dealloc__(self):
        free(self.buys.data)
        free(self.sells.data)
        free(self.scratch)

    # book access -----------------------------------------------------------
    def insert(self, price, is_buy, weights=()):
        cdef double[::1] w = np.zeros(max(self.K, 1), dtype=np.float64)
        cdef Py_ssize_t k
        for k in range(min(len(weights), self.K)):
            w[k] = float(weights[k])
        if is_buy:
            heap_push(&self.buys, -float(price), &w[0])
        else:
            heap_push(&self.sells, float(price), &w[0])
        for k in range(self.K):
            self.F[k] += w[k]

    def book(self):
        s = self.buys.stride
        buys = sorted(-self.buys.data[i * s] for i in range(self.buys.count))
        sells = sorted(self.sells.data[i * s] for i in range(self.sells.count))
        return buys, sells

    def clear(self):
        cdef Py_ssize_t k
        self.buys.count = 0
        self.sells.count = 0
        for k in range(self.K):
            self.F[k] = 0.0

    @property
    def size(self):
        return self.buys.count + self.sells.count

    def functionals(self):
        return [self.F[k] for k in range(self.K)]

    # main loop -------------------------------------------------------------
    def advance(self, double[::1] prices, cnp.uint8_t[::1] is_buy, double[::1] dts,
                double[:, ::1] weights, long long max_episodes=0):
        cdef Py_ssize_t n = prices.shape[0]
        cdef Py_ssize_t i, k, r, b, R = self.regions.shape[0], K = self.K
        cdef Py_ssize_t s = 1 + K
        cdef double u, p, bid, ask
        cdef long long step, size
        cdef cnp.int64_t[:, ::1] hm = self.hist_minus
        cdef cnp.int64_t[:, ::1] hp = self.hist_plus
        cdef double[::1] bmin = self.batch_min_bid
        cdef double[::1] bmax = self.batch_max_ask
        cdef cnp.int64_t[:, ::1] cnt = self.counters
        cdef double *out = self.scratch
        cdef double lo = self.lo, hi = self.hi
        cdef double[::1] zero = np.zeros(max(K, 1), dtype=np.float64)
        cdef double *wptr
        for i in range(n):
            u = prices[i]
            self.time += dts[i]
            self.step += 1
            step = self.step
            if K:
                wptr = &weights[i, 0]
            else:
                wptr = &zero[0]
            if is_buy[i]:
                if self.sells.count > 0 and u >= self.sells.data[0]:
                    heap_pop(&self.sells, out)
                    for k in range(K):
                        self.F[k] -= out[1 + k]
                    p = out[0]
                    if step > self.burn:
                        for r in range(R):
                            if self.regions[r, 0] <= p <= self.regions[r, 1]:
                                cnt[r, 1] += 1
                elif lo < u < hi:
                    heap_push(&self.buys, -u, wptr)
                    for k in range(K):
                        self.F[k] += wptr[k]
                    if step > self.burn:
                        for r in range(R):
                            if self.regions[r, 0] <= u <= self.regions[r, 1]:
                                cnt[r, 2] += 1
            else:
                if self.buys.count > 0 and u <= -self.buys.data[0]:
                    heap_pop(&self.buys, out)
                    for k in range(K):
                        self.F[k] -= out[1 + k]
                    p = -out[0]
                    if step > self.burn:
                        for r in range(R):
                            if self.regions[r, 0] <= p <= self.regions[r, 1]:
                                cnt[r, 3] += 1
                elif lo < u < hi:
                    heap_push(&self.sells, u, wptr)
                    for k in range(K):
                        self.F[k] += wptr[k]
                    if step > self.burn:
                        for r in range(R):
                            if self.regions[r, 0] <= u <= self.regions[r, 1]:
                                cnt[r, 0] += 1

            bid = -self.buys.data[0] if self.buys.count > 0 else lo
            ask = self.sells.data[0] if self.sells.count > 0 else hi
            size = self.buys.count + self.sells.count
            if size > self.max_size:
                self.max_size = size
            if self.check and self.buys.count > 0 and self.sells.count > 0 and bid >= ask:
                raise AssertionError(f"crossed book at step {step}: bid {bid} >= ask {ask}")

            if step > self.burn:
                b = (step - self.burn - 1) // self.batch_len
                if b >= self.n_batches:
                    b = self.n_batches - 1
                hm[b, bisect_left(self.f_grid, bid)] += 1
                hp[b, bisect_right(self.f_grid, ask)] += 1
                if bid < bmin[b]:
                    bmin[b] = bid
                if ask > bmax[b]:
                    bmax[b] = ask

            if self.sample_every > 0 and step % self.sample_every == 0:
                self.samples.append([float(step), float(self.buys.count), float(self.sells.count)]
                                    + [self.F[k] for k in range(K)])

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
    @property
    def return_times_list(self):
        return self.return_times

    def sample_array(self):
        if not self.samples:
            return np.zeros((0, 3 + self.K))
        return np.asarray(self.samples, dtype=float)

    def return_time_array(self):
        return np.asarray(self.return_times, dtype=np.int64)
