"""Pure-Python incremental CDCL engine (fallback backend).

Internal literal codes: ``2*v`` for ``v`` and ``2*v + 1`` for ``-v``.
Values are stored per code: 1 true, -1 false, 0 unassigned.
"""
from __future__ import annotations

import heapq
import random
import time

from .common import Propagation, SolveOutcome, Status, luby

_RESTART_BASE = 64
_VAR_DECAY = 0.95


def _code(lit: int) -> int:
    return 2 * lit if lit > 0 else -2 * lit + 1


def _lit(code: int) -> int:
    return code >> 1 if not code & 1 else -(code >> 1)


class Engine:
    """Incremental SAT solver with assumptions, cores and retractable clauses."""

    backend = "python"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = random.Random(seed)
        self.n_vars = 0
        self._val = [0, 0]
        self._level = [0]
        self._reason = [None]
        self._act = [0.0]
        self._phase = [False]
        self._seen = bytearray(1)
        self._watches = [[], []]
        self._bins = [[], []]
        self._trail: list[int] = []
        self._trail_lim: list[int] = []
        self._qhead = 0
        self._heap: list[tuple[float, int]] = []
        self._var_inc = 1.0
        self._ok = True
        self._learnts: list[list[int]] = []
        self._lbd: dict[int, int] = {}
        self._max_learnts = 2000.0
        self._retractable: dict[int, tuple[int, ...]] = {}
        self.model: tuple[bool, ...] | None = None
        self.core: tuple[int, ...] = ()
        self.conflicts = 0
        self.decisions = 0
        self.propagations = 0
        self._restarts = 0

    # ------------------------------------------------------------------
    # variables and clauses

    def new_var(self) -> int:
        self._grow(self.n_vars + 1)
        return self.n_vars

    def _grow(self, n: int):
        while self.n_vars < n:
            self.n_vars += 1
            v = self.n_vars
            self._val += [0, 0]
            self._level.append(0)
            self._reason.append(None)
            self._act.append(self._rng.random() * 1e-5)
            self._phase.append(False)
            self._seen.append(0)
            self._watches += [[], []]
            self._bins += [[], []]
            heapq.heappush(self._heap, (-self._act[v], v))

    def add_clause(self, clause) -> bool:
        """Add a permanent clause. Returns False once the database is UNSAT."""
        if not self._ok:
            return False
        if self._trail_lim:
            self._cancel_until(0)
        m = 0
        for lit in clause:
            if lit == 0:
                raise ValueError("literal 0 is not allowed")
            a = abs(lit)
            if a > m:
                m = a
        if m > self.n_vars:
            self._grow(m)
        val = self._val
        codes = []
        seen_codes = set()
        for lit in clause:
            c = _code(lit)
            if val[c] == 1 or (c ^ 1) in seen_codes:
                return True  # satisfied at level 0 or tautology
            if val[c] == -1 or c in seen_codes:
                continue
            seen_codes.add(c)
            codes.append(c)
        if not codes:
            self._ok = False
            return False
        if len(codes) == 1:
            self._enqueue(codes[0], None)
            if self._propagate() is not None:
                self._ok = False
            return self._ok
        self._attach(codes)
        return True

    def add_clauses(self, clauses) -> bool:
        for c in clauses:
            self.add_clause(c)
        return self._ok

    def _attach(self, c: list[int]):
        if len(c) == 2:
            self._bins[c[0]].append((c[1], c))
            self._bins[c[1]].append((c[0], c))
        else:
            self._watches[c[0]].append(c)
            self._watches[c[1]].append(c)

    def add_retractable(self, clause) -> int:
        """Add ``clause`` guarded by a fresh activation variable; returns the handle."""
        a = self.new_var()
        self.add_clause(list(clause) + [-a])
        self._retractable[a] = tuple(clause)
        return a

    def retract_clause(self, handle) -> None:
        """Permanently disable a retractable clause, given its handle or its literals."""
        if not isinstance(handle, int):
            key = tuple(handle)
            matches = [a for a, c in self._retractable.items() if c == key]
            if not matches:
                matches = [a for a, c in self._retractable.items() if sorted(c) == sorted(key)]
            if not matches:
                raise KeyError(f"clause {list(handle)} was never added as retractable")
            handle = matches[0]
        if handle not in self._retractable:
            raise KeyError(f"no active retractable clause with handle {handle}")
        del self._retractable[handle]
        self.add_clause([-handle])

    @property
    def active_retractables(self) -> dict[int, tuple[int, ...]]:
        return dict(self._retractable)

    # ------------------------------------------------------------------
    # trail

    def _enqueue(self, code: int, reason):
        self._val[code] = 1
        self._val[code ^ 1] = -1
        v = code >> 1
        self._level[v] = len(self._trail_lim)
        self._reason[v] = reason
        self._trail.append(code)

    def _cancel_until(self, level: int):
        if len(self._trail_lim) <= level:
            return
        lim = self._trail_lim[level]
        trail, val, phase, reason, act = self._trail, self._val, self._phase, self._reason, self._act
        heap = self._heap
        push = heapq.heappush
        for i in range(len(trail) - 1, lim - 1, -1):
            code = trail[i]
            v = code >> 1
            val[code] = 0
            val[code ^ 1] = 0
            reason[v] = None
            phase[v] = not (code & 1)
            push(heap, (-act[v], v))
        del trail[lim:]
        del self._trail_lim[level:]
        self._qhead = lim

    def _propagate(self):
        """Unit propagation to fixpoint. Returns a conflicting clause or None."""
        trail, val, watches, bins = self._trail, self._val, self._watches, self._bins
        level, reason = self._level, self._reason
        qhead = self._qhead
        lvl = len(self._trail_lim)
        confl = None
        while qhead < len(trail):
            p = trail[qhead]
            qhead += 1
            fl = p ^ 1
            # binary clauses
            for other, c in bins[fl]:
                vo = val[other]
                if vo == 1:
                    continue
                if vo == -1:
                    confl = c
                    break
                val[other] = 1
                val[other ^ 1] = -1
                v = other >> 1
                level[v] = lvl
                reason[v] = c
                trail.append(other)
            if confl is not None:
                break
            ws = watches[fl]
            if not ws:
                continue
            new_ws = []
            watches[fl] = new_ws
            n = len(ws)
            i = 0
            while i < n:
                c = ws[i]
                i += 1
                if not c:
                    continue  # deleted learnt
                if c[0] == fl:
                    c[0] = c[1]
                    c[1] = fl
                first = c[0]
                vf = val[first]
                if vf == 1:
                    new_ws.append(c)
                    continue
                for k in range(2, len(c)):
                    lk = c[k]
                    if val[lk] != -1:
                        c[1] = lk
                        c[k] = fl
                        watches[lk].append(c)
                        break
                else:
                    new_ws.append(c)
                    if vf == -1:
                        confl = c
                        new_ws.extend(ws[i:])
                        break
                    val[first] = 1
                    val[first ^ 1] = -1
                    v = first >> 1
                    level[v] = lvl
                    reason[v] = c
                    trail.append(first)
            if confl is not None:
                break
        self.propagations += qhead - self._qhead
        self._qhead = qhead if confl is None else len(trail)
        return confl

    # ------------------------------------------------------------------
    # conflict analysis

    def _bump(self, v: int):
        act = self._act
        act[v] += self._var_inc
        if act[v] > 1e100:
            for i in range(1, self.n_vars + 1):
                act[i] *= 1e-100
            self._var_inc *= 1e-100
            self._rebuild_heap()
        else:
            heapq.heappush(self._heap, (-act[v], v))

    def _rebuild_heap(self):
        val, act = self._val, self._act
        self._heap = [(-act[v], v) for v in range(1, self.n_vars + 1) if val[2 * v] == 0]
        heapq.heapify(self._heap)

    def _analyze(self, confl):
        seen, level, reason, trail = self._seen, self._level, self._reason, self._trail
        cur = len(self._trail_lim)
        learnt = [0]
        path = 0
        pvar = -1
        idx = len(trail) - 1
        c = confl
        while True:
            for q in c:
                v = q >> 1
                if v == pvar or seen[v] or level[v] == 0:
                    continue
                seen[v] = 1
                self._bump(v)
                if level[v] >= cur:
                    path += 1
                else:
                    learnt.append(q)
            while not seen[trail[idx] >> 1]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            pvar = p >> 1
            c = reason[pvar]
            seen[pvar] = 0
            path -= 1
            if path == 0:
                break
        learnt[0] = p ^ 1
        # local minimisation: drop literals implied by other learnt literals
        out = [learnt[0]]
        for q in learnt[1:]:
            r = reason[q >> 1]
            if r is None:
                out.append(q)
                continue
            for x in r:
                xv = x >> 1
                if xv != q >> 1 and not seen[xv] and level[xv] > 0:
                    out.append(q)
                    break
        for q in learnt[1:]:
            seen[q >> 1] = 0
        if len(out) == 1:
            bt = 0
        else:
            mi = 1
            for k in range(2, len(out)):
                if level[out[k] >> 1] > level[out[mi] >> 1]:
                    mi = k
            out[1], out[mi] = out[mi], out[1]
            bt = level[out[1] >> 1]
        return out, bt

    def _analyze_final(self, failed: int) -> tuple[int, ...]:
        """Assumptions responsible for ``failed`` (an assumption code found false)."""
        core = [failed]
        if not self._trail_lim:
            return tuple(_lit(c) for c in core)
        seen, level, reason, trail = self._seen, self._level, self._reason, self._trail
        seen[failed >> 1] = 1
        for i in range(len(trail) - 1, self._trail_lim[0] - 1, -1):
            code = trail[i]
            v = code >> 1
            if not seen[v]:
                continue
            r = reason[v]
            if r is None:
                core.append(code)
            else:
                for x in r:
                    if level[x >> 1] > 0:
                        seen[x >> 1] = 1
            seen[v] = 0
        seen[failed >> 1] = 0
        return tuple(dict.fromkeys(_lit(c) for c in core))

    def _lbd_of(self, c) -> int:
        level = self._level
        return len({level[x >> 1] for x in c})

    def _reduce_db(self):
        """Delete the worse half of long learnt clauses; must run at level 0."""
        lbd = self._lbd
        learnts = sorted(self._learnts, key=lambda c: lbd[id(c)])
        keep = len(learnts) // 2
        kept = []
        for i, c in enumerate(learnts):
            if i < keep or lbd[id(c)] <= 2:
                kept.append(c)
            else:
                del lbd[id(c)]
                c.clear()
        self._learnts = kept

    # ------------------------------------------------------------------
    # search

    def _pick_branch(self) -> int:
        heap, val, act = self._heap, self._val, self._act
        pop = heapq.heappop
        while heap:
            neg, v = pop(heap)
            if val[2 * v] == 0 and -neg == act[v]:
                return v
        # stale entries only: fall back to a scan
        for v in range(1, self.n_vars + 1):
            if val[2 * v] == 0:
                return v
        return 0

    def solve(self, assumptions=(), conflict_limit: int | None = None,
              time_limit: float | None = None) -> SolveOutcome:
        self.model = None
        self.core = ()
        assumptions = list(self._retractable) + list(assumptions)
        if assumptions:
            self._grow(max(abs(a) for a in assumptions))
        if not self._ok:
            return SolveOutcome(Status.UNSAT, None, ())
        self._cancel_until(0)
        if self._propagate() is not None:
            self._ok = False
            return SolveOutcome(Status.UNSAT, None, ())
        acodes = [_code(a) for a in assumptions]
        deadline = None if time_limit is None else time.monotonic() + time_limit
        start_conflicts = self.conflicts
        status = None
        while status is None:
            budget = luby(2, self._restarts) * _RESTART_BASE
            self._restarts += 1
            status = self._search(int(budget), acodes, start_conflicts, conflict_limit, deadline)
            if status is None:
                self._cancel_until(0)
                if len(self._learnts) - len(self._trail) >= self._max_learnts:
                    self._reduce_db()
                    self._max_learnts *= 1.1
        if status is Status.SAT:
            val = self._val
            self.model = (False,) + tuple(val[2 * v] == 1 for v in range(1, self.n_vars + 1))
        self._cancel_until(0)
        return SolveOutcome(status, self.model, self.core)

    def _search(self, nof_conflicts, acodes, start_conflicts, conflict_limit, deadline):
        val = self._val
        trail_lim = self._trail_lim
        conflicts_here = 0
        while True:
            confl = self._propagate()
            if confl is not None:
                self.conflicts += 1
                conflicts_here += 1
                if not trail_lim:
                    self._ok = False
                    self.core = ()
                    return Status.UNSAT
                learnt, bt = self._analyze(confl)
                self._cancel_until(bt)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    self._attach(learnt)
                    if len(learnt) > 2:
                        self._learnts.append(learnt)
                        self._lbd[id(learnt)] = self._lbd_of(learnt)
                    self._enqueue(learnt[0], learnt)
                self._var_inc /= _VAR_DECAY
                if conflict_limit is not None and self.conflicts - start_conflicts >= conflict_limit:
                    return Status.UNKNOWN
                if deadline is not None and (self.conflicts & 63) == 0 and time.monotonic() > deadline:
                    return Status.UNKNOWN
                continue
            if conflicts_here >= nof_conflicts:
                return None
            nxt = 0
            while len(trail_lim) < len(acodes):
                a = acodes[len(trail_lim)]
                va = val[a]
                if va == 1:
                    trail_lim.append(len(self._trail))
                elif va == -1:
                    self.core = self._analyze_final(a)
                    return Status.UNSAT
                else:
                    nxt = a
                    break
            if not nxt:
                v = self._pick_branch()
                if v == 0:
                    return Status.SAT
                self.decisions += 1
                nxt = 2 * v + (0 if self._phase[v] else 1)
            trail_lim.append(len(self._trail))
            self._enqueue(nxt, None)

    # ------------------------------------------------------------------

    def propagate_only(self, assumptions=()) -> Propagation:
        """Unit propagation from the assumptions with no decisions."""
        if assumptions:
            self._grow(max(abs(a) for a in assumptions))
        self._cancel_until(0)
        if not self._ok or self._propagate() is not None:
            self._ok = False
            return Propagation(True)
        conflict = False
        for a in list(self._retractable) + list(assumptions):
            c = _code(a)
            if self._val[c] == -1:
                conflict = True
                break
            if self._val[c] == 0:
                self._trail_lim.append(len(self._trail))
                self._enqueue(c, None)
                if self._propagate() is not None:
                    conflict = True
                    break
        true_lits = frozenset(_lit(c) for c in self._trail)
        self._cancel_until(0)
        return Propagation(conflict, true_lits)
