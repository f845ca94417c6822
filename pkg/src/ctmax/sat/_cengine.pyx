# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled incremental CDCL engine; same interface as the pure-Python one.

Clauses live in one flat arena. Each clause has a three-int header
(size, flags, lbd) followed by its literal codes (2v for v, 2v+1 for -v).
"""
import random
import time

from libcpp.vector cimport vector
from libc.math cimport fabs

from .common import Propagation, SolveOutcome, Status, luby

cdef int RESTART_BASE = 64
cdef double VAR_DECAY = 0.95
cdef int HDR = 3
cdef int F_LEARNT = 1
cdef int F_DELETED = 2

# search outcomes
cdef int R_RESTART = 0
cdef int R_SAT = 1
cdef int R_UNSAT = 2
cdef int R_UNKNOWN = 3

ctypedef struct Watch:
    int cref
    int blocker


cdef inline int to_code(long lit):
    return <int>(2 * lit) if lit > 0 else <int>(-2 * lit + 1)


cdef inline long to_lit(int code):
    return (code >> 1) if not (code & 1) else -(code >> 1)


cdef class Engine:
    """Incremental SAT solver with assumptions, cores and retractable clauses."""

    cdef vector[int] arena
    cdef vector[signed char] val
    cdef vector[int] level
    cdef vector[int] reason
    cdef vector[double] act
    cdef vector[char] phase
    cdef vector[char] seen
    cdef vector[vector[Watch]] watches
    cdef vector[vector[Watch]] bins
    cdef vector[int] trail
    cdef vector[int] trail_lim
    cdef vector[int] heap
    cdef vector[int] heap_idx
    cdef vector[int] learnts
    cdef vector[int] acodes
    cdef int qhead
    cdef double var_inc
    cdef bint ok
    cdef double max_learnts
    cdef long wasted
    cdef int restarts
    cdef public int n_vars
    cdef public long conflicts
    cdef public long decisions
    cdef public long propagations
    cdef public object model
    cdef public object core
    cdef public object seed
    cdef object rng
    cdef dict retractable

    backend = "cython"

    def __cinit__(self, seed=0):
        self.seed = seed
        self.rng = random.Random(seed)
        self.n_vars = 0
        self.val.resize(2, 0)
        self.level.push_back(0)
        self.reason.push_back(-1)
        self.act.push_back(0.0)
        self.phase.push_back(0)
        self.seen.push_back(0)
        self.watches.resize(2)
        self.bins.resize(2)
        self.heap_idx.push_back(-1)
        self.qhead = 0
        self.var_inc = 1.0
        self.ok = True
        self.max_learnts = 2000.0
        self.wasted = 0
        self.restarts = 0
        self.conflicts = 0
        self.decisions = 0
        self.propagations = 0
        self.model = None
        self.core = ()
        self.retractable = {}

    # ------------------------------------------------------------------
    # heap keyed by activity

    cdef inline bint heap_lt(self, int a, int b):
        return self.act[a] > self.act[b]

    cdef void heap_up(self, int i):
        cdef int v = self.heap[i]
        cdef int parent
        while i > 0:
            parent = (i - 1) >> 1
            if not self.heap_lt(v, self.heap[parent]):
                break
            self.heap[i] = self.heap[parent]
            self.heap_idx[self.heap[i]] = i
            i = parent
        self.heap[i] = v
        self.heap_idx[v] = i

    cdef void heap_down(self, int i):
        cdef int v = self.heap[i]
        cdef int n = self.heap.size()
        cdef int child
        while 2 * i + 1 < n:
            child = 2 * i + 1
            if child + 1 < n and self.heap_lt(self.heap[child + 1], self.heap[child]):
                child += 1
            if not self.heap_lt(self.heap[child], v):
                break
            self.heap[i] = self.heap[child]
            self.heap_idx[self.heap[i]] = i
            i = child
        self.heap[i] = v
        self.heap_idx[v] = i

    cdef void heap_insert(self, int v):
        if self.heap_idx[v] >= 0:
            return
        self.heap.push_back(v)
        self.heap_idx[v] = self.heap.size() - 1
        self.heap_up(self.heap.size() - 1)

    cdef int heap_pop(self):
        cdef int top = self.heap[0]
        cdef int last = self.heap.back()
        self.heap.pop_back()
        self.heap_idx[top] = -1
        if self.heap.size() > 0:
            self.heap[0] = last
            self.heap_idx[last] = 0
            self.heap_down(0)
        return top

    # ------------------------------------------------------------------
    # variables and clauses

    def new_var(self):
        self.grow(self.n_vars + 1)
        return self.n_vars

    cdef void grow(self, long n):
        cdef int v
        while self.n_vars < n:
            self.n_vars += 1
            v = self.n_vars
            self.val.push_back(0)
            self.val.push_back(0)
            self.level.push_back(0)
            self.reason.push_back(-1)
            self.act.push_back(self.rng.random() * 1e-5)
            self.phase.push_back(0)
            self.seen.push_back(0)
            self.watches.resize(2 * v + 2)
            self.bins.resize(2 * v + 2)
            self.heap_idx.push_back(-1)
            self.heap_insert(v)

    def add_clause(self, clause):
        """Add a permanent clause. Returns False once the database is UNSAT."""
        if not self.ok:
            return False
        if self.trail_lim.size():
            self.cancel_until(0)
        cdef long m = 0
        cdef long lit
        lits = list(clause)
        for lit in lits:
            if lit == 0:
                raise ValueError("literal 0 is not allowed")
            if abs(lit) > m:
                m = abs(lit)
        if m > self.n_vars:
            self.grow(m)
        cdef vector[int] codes
        cdef int c, k
        cdef bint dup
        for lit in lits:
            c = to_code(lit)
            if self.val[c] == 1:
                return True
            if self.val[c] == -1:
                continue
            dup = False
            for k in range(codes.size()):
                if codes[k] == (c ^ 1):
                    return True  # tautology
                if codes[k] == c:
                    dup = True
                    break
            if not dup:
                codes.push_back(c)
        if codes.size() == 0:
            self.ok = False
            return False
        if codes.size() == 1:
            self.enqueue(codes[0], -1)
            if self.propagate() >= 0:
                self.ok = False
            return self.ok
        self.attach(self.store(codes, 0, 0))
        return True

    def add_clauses(self, clauses):
        for c in clauses:
            self.add_clause(c)
        return self.ok

    cdef int store(self, vector[int]& codes, int flags, int lbd):
        cdef int cref = self.arena.size()
        self.arena.push_back(codes.size())
        self.arena.push_back(flags)
        self.arena.push_back(lbd)
        for k in range(codes.size()):
            self.arena.push_back(codes[k])
        return cref

    cdef void attach(self, int cref):
        cdef int size = self.arena[cref]
        cdef int a = self.arena[cref + HDR]
        cdef int b = self.arena[cref + HDR + 1]
        cdef Watch w
        w.cref = cref
        if size == 2:
            w.blocker = b
            self.bins[a].push_back(w)
            w.blocker = a
            self.bins[b].push_back(w)
        else:
            w.blocker = b
            self.watches[a].push_back(w)
            w.blocker = a
            self.watches[b].push_back(w)

    def add_retractable(self, clause):
        """Add ``clause`` guarded by a fresh activation variable; returns the handle."""
        a = self.new_var()
        lits = list(clause)
        self.add_clause(lits + [-a])
        self.retractable[a] = tuple(lits)
        return a

    def retract_clause(self, handle):
        """Permanently disable a retractable clause, given its handle or its literals."""
        if not isinstance(handle, int):
            key = tuple(handle)
            matches = [a for a, c in self.retractable.items() if c == key]
            if not matches:
                matches = [a for a, c in self.retractable.items() if sorted(c) == sorted(key)]
            if not matches:
                raise KeyError(f"clause {list(handle)} was never added as retractable")
            handle = matches[0]
        if handle not in self.retractable:
            raise KeyError(f"no active retractable clause with handle {handle}")
        del self.retractable[handle]
        self.add_clause([-handle])

    @property
    def active_retractables(self):
        return dict(self.retractable)

    # ------------------------------------------------------------------
    # trail

    cdef inline void enqueue(self, int code, int cref):
        cdef int v = code >> 1
        self.val[code] = 1
        self.val[code ^ 1] = -1
        self.level[v] = self.trail_lim.size()
        self.reason[v] = cref
        self.trail.push_back(code)

    cdef void cancel_until(self, int lvl):
        if <int>self.trail_lim.size() <= lvl:
            return
        cdef int lim = self.trail_lim[lvl]
        cdef int i, code, v
        for i in range(<int>self.trail.size() - 1, lim - 1, -1):
            code = self.trail[i]
            v = code >> 1
            self.val[code] = 0
            self.val[code ^ 1] = 0
            self.reason[v] = -1
            self.phase[v] = 0 if (code & 1) else 1
            self.heap_insert(v)
        self.trail.resize(lim)
        self.trail_lim.resize(lvl)
        self.qhead = lim

    cdef int propagate(self):
        """Unit propagation to fixpoint; returns a conflicting clause ref or -1."""
        cdef int confl = -1
        cdef int p, fl, other, cref, first, size, k, lk, tmp
        cdef size_t i, j, n, b
        cdef vector[Watch]* ws
        cdef vector[Watch]* bs
        cdef Watch w
        cdef int* lits
        cdef int start = self.qhead
        while self.qhead < <int>self.trail.size():
            p = self.trail[self.qhead]
            self.qhead += 1
            fl = p ^ 1
            bs = &self.bins[fl]
            for b in range(bs.size()):
                other = bs[0][b].blocker
                if self.val[other] == 1:
                    continue
                if self.val[other] == -1:
                    confl = bs[0][b].cref
                    break
                self.enqueue(other, bs[0][b].cref)
            if confl >= 0:
                break
            ws = &self.watches[fl]
            n = ws.size()
            i = 0
            j = 0
            while i < n:
                w = ws[0][i]
                if self.val[w.blocker] == 1:
                    ws[0][j] = w
                    i += 1
                    j += 1
                    continue
                cref = w.cref
                if self.arena[cref + 1] & F_DELETED:
                    i += 1
                    continue
                lits = &self.arena[cref + HDR]
                size = self.arena[cref]
                if lits[0] == fl:
                    lits[0] = lits[1]
                    lits[1] = fl
                i += 1
                first = lits[0]
                if first != w.blocker and self.val[first] == 1:
                    w.blocker = first
                    ws[0][j] = w
                    j += 1
                    continue
                w.blocker = first
                for k in range(2, size):
                    lk = lits[k]
                    if self.val[lk] != -1:
                        lits[1] = lk
                        lits[k] = fl
                        self.watches[lk].push_back(w)
                        break
                else:
                    ws[0][j] = w
                    j += 1
                    if self.val[first] == -1:
                        confl = cref
                        while i < n:
                            ws[0][j] = ws[0][i]
                            i += 1
                            j += 1
                        break
                    self.enqueue(first, cref)
            ws.resize(j)
            if confl >= 0:
                break
        self.propagations += self.qhead - start
        if confl >= 0:
            self.qhead = self.trail.size()
        return confl

    # ------------------------------------------------------------------
    # conflict analysis

    cdef void bump(self, int v):
        cdef int i
        self.act[v] += self.var_inc
        if self.act[v] > 1e100:
            for i in range(1, self.n_vars + 1):
                self.act[i] *= 1e-100
            self.var_inc *= 1e-100
        if self.heap_idx[v] >= 0:
            self.heap_up(self.heap_idx[v])

    cdef int analyze(self, int confl, vector[int]& out):
        """First-UIP learning into ``out``; returns the backjump level."""
        cdef int cur = self.trail_lim.size()
        cdef vector[int] learnt
        cdef int path = 0
        cdef int pvar = -1
        cdef int idx = <int>self.trail.size() - 1
        cdef int c = confl
        cdef int p = 0
        cdef int k, q, v, size, x, xv, r, mi
        cdef bint keep
        learnt.push_back(0)
        while True:
            size = self.arena[c]
            for k in range(size):
                q = self.arena[c + HDR + k]
                v = q >> 1
                if v == pvar or self.seen[v] or self.level[v] == 0:
                    continue
                self.seen[v] = 1
                self.bump(v)
                if self.level[v] >= cur:
                    path += 1
                else:
                    learnt.push_back(q)
            while not self.seen[self.trail[idx] >> 1]:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            pvar = p >> 1
            c = self.reason[pvar]
            self.seen[pvar] = 0
            path -= 1
            if path == 0:
                break
        learnt[0] = p ^ 1
        out.clear()
        out.push_back(learnt[0])
        for k in range(1, learnt.size()):
            q = learnt[k]
            r = self.reason[q >> 1]
            if r < 0:
                out.push_back(q)
                continue
            keep = False
            for x in range(self.arena[r]):
                xv = self.arena[r + HDR + x] >> 1
                if xv != (q >> 1) and not self.seen[xv] and self.level[xv] > 0:
                    keep = True
                    break
            if keep:
                out.push_back(q)
        for k in range(1, learnt.size()):
            self.seen[learnt[k] >> 1] = 0
        if out.size() == 1:
            return 0
        mi = 1
        for k in range(2, out.size()):
            if self.level[out[k] >> 1] > self.level[out[mi] >> 1]:
                mi = k
        tmp = out[1]
        out[1] = out[mi]
        out[mi] = tmp
        return self.level[out[1] >> 1]

    cdef tuple analyze_final(self, int failed):
        core = [failed]
        if self.trail_lim.size() == 0:
            return tuple(to_lit(c) for c in core)
        cdef int i, code, v, r, x
        self.seen[failed >> 1] = 1
        for i in range(<int>self.trail.size() - 1, self.trail_lim[0] - 1, -1):
            code = self.trail[i]
            v = code >> 1
            if not self.seen[v]:
                continue
            r = self.reason[v]
            if r < 0:
                core.append(code)
            else:
                for x in range(self.arena[r]):
                    if self.level[self.arena[r + HDR + x] >> 1] > 0:
                        self.seen[self.arena[r + HDR + x] >> 1] = 1
            self.seen[v] = 0
        self.seen[failed >> 1] = 0
        return tuple(dict.fromkeys(to_lit(c) for c in core))

    cdef int lbd_of(self, vector[int]& c):
        levels = set()
        for k in range(c.size()):
            levels.add(self.level[c[k] >> 1])
        return len(levels)

    cdef void reduce_db(self):
        """Delete the worse half of long learnt clauses; runs at level 0."""
        order = sorted((self.arena[self.learnts[k] + 2], k) for k in range(self.learnts.size()))
        cdef int keep = self.learnts.size() // 2
        cdef vector[int] kept
        cdef int i = 0, cref
        for _, k in order:
            cref = self.learnts[k]
            if i < keep or self.arena[cref + 2] <= 2:
                kept.push_back(cref)
            else:
                self.arena[cref + 1] |= F_DELETED
                self.wasted += self.arena[cref] + HDR
            i += 1
        self.learnts = kept
        if self.wasted * 2 > <long>self.arena.size():
            self.compact()

    cdef void compact(self):
        """Rebuild the arena without deleted clauses and re-attach every watch."""
        cdef vector[int] fresh
        cdef vector[int] kept_learnts
        cdef int pos = 0, size, flags, k, newref
        cdef int n = self.arena.size()
        cdef int v
        for v in range(2 * self.n_vars + 2):
            self.watches[v].clear()
            self.bins[v].clear()
        while pos < n:
            size = self.arena[pos]
            flags = self.arena[pos + 1]
            if not (flags & F_DELETED):
                newref = fresh.size()
                for k in range(size + HDR):
                    fresh.push_back(self.arena[pos + k])
                if flags & F_LEARNT and size > 2:
                    kept_learnts.push_back(newref)
            pos += size + HDR
        self.arena.swap(fresh)
        self.learnts.swap(kept_learnts)
        self.wasted = 0
        # level-0 reasons are never inspected again
        for v in range(1, self.n_vars + 1):
            self.reason[v] = -1
        pos = 0
        n = self.arena.size()
        while pos < n:
            self.attach(pos)
            pos += self.arena[pos] + HDR

    # ------------------------------------------------------------------
    # search

    cdef int pick_branch(self):
        cdef int v
        while self.heap.size() > 0:
            v = self.heap_pop()
            if self.val[2 * v] == 0:
                return v
        return 0

    def solve(self, assumptions=(), conflict_limit=None, time_limit=None):
        self.model = None
        self.core = ()
        assumptions = list(self.retractable) + list(assumptions)
        if assumptions:
            self.grow(max(abs(a) for a in assumptions))
        if not self.ok:
            return SolveOutcome(Status.UNSAT, None, ())
        self.cancel_until(0)
        if self.propagate() >= 0:
            self.ok = False
            return SolveOutcome(Status.UNSAT, None, ())
        self.acodes.clear()
        for a in assumptions:
            self.acodes.push_back(to_code(a))
        deadline = None if time_limit is None else time.monotonic() + time_limit
        cdef long climit = -1 if conflict_limit is None else self.conflicts + conflict_limit
        cdef int r = R_RESTART
        while r == R_RESTART:
            budget = int(luby(2, self.restarts) * RESTART_BASE)
            self.restarts += 1
            r = self.search(budget, climit, deadline)
            if r == R_RESTART:
                self.cancel_until(0)
                if <double>self.learnts.size() - <double>self.trail.size() >= self.max_learnts:
                    self.reduce_db()
                    self.max_learnts *= 1.1
        if r == R_SAT:
            self.model = (False,) + tuple(self.val[2 * v] == 1 for v in range(1, self.n_vars + 1))
            status = Status.SAT
        elif r == R_UNSAT:
            status = Status.UNSAT
        else:
            status = Status.UNKNOWN
        self.cancel_until(0)
        return SolveOutcome(status, self.model, self.core)

    cdef int search(self, long nof_conflicts, long climit, object deadline):
        cdef long conflicts_here = 0
        cdef int confl, bt, nxt, a, v, cref
        cdef signed char va
        cdef vector[int] learnt
        while True:
            confl = self.propagate()
            if confl >= 0:
                self.conflicts += 1
                conflicts_here += 1
                if self.trail_lim.size() == 0:
                    self.ok = False
                    self.core = ()
                    return R_UNSAT
                bt = self.analyze(confl, learnt)
                self.cancel_until(bt)
                if learnt.size() == 1:
                    self.enqueue(learnt[0], -1)
                else:
                    cref = self.store(learnt, F_LEARNT, 0)
                    self.attach(cref)
                    if learnt.size() > 2:
                        self.arena[cref + 2] = self.lbd_of(learnt)
                        self.learnts.push_back(cref)
                    self.enqueue(learnt[0], cref)
                self.var_inc /= VAR_DECAY
                if climit >= 0 and self.conflicts >= climit:
                    return R_UNKNOWN
                if deadline is not None and (self.conflicts & 63) == 0 and time.monotonic() > deadline:
                    return R_UNKNOWN
                continue
            if conflicts_here >= nof_conflicts:
                return R_RESTART
            nxt = -1
            while self.trail_lim.size() < self.acodes.size():
                a = self.acodes[self.trail_lim.size()]
                va = self.val[a]
                if va == 1:
                    self.trail_lim.push_back(self.trail.size())
                elif va == -1:
                    self.core = self.analyze_final(a)
                    return R_UNSAT
                else:
                    nxt = a
                    break
            if nxt < 0:
                v = self.pick_branch()
                if v == 0:
                    return R_SAT
                self.decisions += 1
                nxt = 2 * v + (0 if self.phase[v] else 1)
            self.trail_lim.push_back(self.trail.size())
            self.enqueue(nxt, -1)

    # ------------------------------------------------------------------

    def propagate_only(self, assumptions=()):
        """Unit propagation from the assumptions with no decisions."""
        if assumptions:
            self.grow(max(abs(a) for a in assumptions))
        self.cancel_until(0)
        if not self.ok or self.propagate() >= 0:
            self.ok = False
            return Propagation(True)
        conflict = False
        cdef int c
        for a in list(self.retractable) + list(assumptions):
            c = to_code(a)
            if self.val[c] == -1:
                conflict = True
                break
            if self.val[c] == 0:
                self.trail_lim.push_back(self.trail.size())
                self.enqueue(c, -1)
                if self.propagate() >= 0:
                    conflict = True
                    break
        true_lits = frozenset(to_lit(self.trail[k]) for k in range(self.trail.size()))
        self.cancel_until(0)
        return Propagation(conflict, true_lits)
