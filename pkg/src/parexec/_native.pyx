# distutils: language = c++
# cython: language_level=3
"""Thin binding over the native engine core.

The heavy lifting lives in engine_core.hpp; this module only marshals block
arrays in, releases the GIL for the whole run, and marshals the snapshot out.
"""

from libc.stdint cimport int32_t, int64_t
from libcpp cimport bool as cbool
from libcpp.vector cimport vector


cdef extern from "engine_core.hpp" namespace "pe" nogil:
    cdef cppclass RunResult:
        vector[int64_t] locs
        vector[int64_t] values
        int64_t aborts

    RunResult run_parallel_p2p(const int32_t* senders, const int32_t* receivers,
                               const int64_t* amounts, int64_t block_size,
                               int32_t num_accounts, int aux_reads,
                               cbool write_marker, int64_t initial_balance,
                               int64_t spin_ns, int num_threads) except +

    RunResult run_sequential_p2p(const int32_t* senders, const int32_t* receivers,
                                 const int64_t* amounts, int64_t block_size,
                                 int32_t num_accounts, int aux_reads,
                                 cbool write_marker, int64_t initial_balance,
                                 int64_t spin_ns) except +


def p2p_parallel(const int[::1] senders, const int[::1] receivers,
                 const long long[::1] amounts, int num_accounts, int aux_reads,
                 bint write_marker, long long initial_balance, long long spin_ns,
                 int num_threads):
    """Run a p2p block on the native engine; returns (locs, values, aborts)."""
    cdef int64_t n = senders.shape[0]
    if receivers.shape[0] != n or amounts.shape[0] != n:
        raise ValueError("senders/receivers/amounts length mismatch")
    cdef const int32_t* s = <const int32_t*> &senders[0] if n else NULL
    cdef const int32_t* r = <const int32_t*> &receivers[0] if n else NULL
    cdef const int64_t* a = <const int64_t*> &amounts[0] if n else NULL
    cdef RunResult res
    with nogil:
        res = run_parallel_p2p(s, r, a, n, num_accounts, aux_reads,
                               write_marker, initial_balance, spin_ns,
                               num_threads)
    return list(res.locs), list(res.values), res.aborts


def p2p_sequential(const int[::1] senders, const int[::1] receivers,
                   const long long[::1] amounts, int num_accounts, int aux_reads,
                   bint write_marker, long long initial_balance,
                   long long spin_ns):
    """Sequential baseline with the identical compiled transaction logic."""
    cdef int64_t n = senders.shape[0]
    if receivers.shape[0] != n or amounts.shape[0] != n:
        raise ValueError("senders/receivers/amounts length mismatch")
    cdef const int32_t* s = <const int32_t*> &senders[0] if n else NULL
    cdef const int32_t* r = <const int32_t*> &receivers[0] if n else NULL
    cdef const int64_t* a = <const int64_t*> &amounts[0] if n else NULL
    cdef RunResult res
    with nogil:
        res = run_sequential_p2p(s, r, a, n, num_accounts, aux_reads,
                                 write_marker, initial_balance, spin_ns)
    return list(res.locs), list(res.values), res.aborts
