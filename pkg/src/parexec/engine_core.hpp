// Native core for the speculative block executor.
//
// Mirrors the pure-Python engine operation for operation (same scheduler
// counter discipline, same multi-version memory contract, same transfer
// logic) but runs the whole hot path without the GIL so worker threads scale
// on real cores. Only the built-in p2p transfer workload is compiled here;
// arbitrary Python transaction logic stays on the pure engine.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pe {

using std::int32_t;
using std::int64_t;
using std::uint64_t;

constexpr int32_t kNoTxn = -1;
constexpr int32_t kAuxPool = 32;

// ---------------------------------------------------------------------------
// Location universe for the p2p workload: three account cells per account
// (balance, sequence number, marker) followed by the shared read-only pool.
// ---------------------------------------------------------------------------

inline int32_t balance_loc(int32_t account) { return 3 * account; }
inline int32_t seqnum_loc(int32_t account) { return 3 * account + 1; }
inline int32_t marker_loc(int32_t account) { return 3 * account + 2; }
inline int32_t aux_loc(int32_t num_accounts, int32_t slot) {
  return 3 * num_accounts + slot;
}

// Matches the Python-side mixing; 32 divides 2^64, so uint64 wraparound
// preserves the residue.
inline int32_t aux_slot(uint64_t sender, uint64_t receiver, uint64_t i) {
  return static_cast<int32_t>(
      (sender * 1103515245ULL + receiver * 12345ULL + i * 2654435761ULL) %
      kAuxPool);
}

struct EngineError : std::runtime_error {
  explicit EngineError(const std::string& what) : std::runtime_error(what) {}
};

inline void spin_for(int64_t ns) {
  if (ns <= 0) return;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::nanoseconds(ns);
  while (std::chrono::steady_clock::now() < deadline) {
  }
}

// ---------------------------------------------------------------------------
// Multi-version memory
// ---------------------------------------------------------------------------

struct Entry {
  int32_t incarnation;
  bool estimate;
  int64_t value;
};

struct alignas(64) LocationHistory {
  // Never-written locations (the whole shared read-only pool) answer reads
  // without touching the mutex: a racy zero linearizes the read before the
  // concurrent first write.
  std::atomic<uint32_t> count{0};
  std::mutex mu;
  std::map<int32_t, Entry> cells;  // writer txn index -> entry
};

struct ReadDesc {
  int32_t loc;
  int32_t txn;  // kNoTxn when resolved from storage
  int32_t inc;
};

struct ReadResult {
  int status;  // 0 = ok, 1 = not found, 2 = read error
  int32_t txn;
  int32_t inc;
  int64_t value;
};

class MVMemory {
 public:
  MVMemory(int64_t block_size, int32_t num_locations)
      : block_size_(block_size),
        hist_(num_locations),
        touched_(num_locations),
        records_(block_size ? block_size : 1) {}

  ReadResult read(int32_t loc, int64_t reader_idx) {
    LocationHistory& h = hist_[loc];
    if (h.count.load(std::memory_order_acquire) == 0)
      return ReadResult{1, 0, 0, 0};
    std::lock_guard<std::mutex> g(h.mu);
    auto it = h.cells.lower_bound(static_cast<int32_t>(
        std::min<int64_t>(reader_idx, INT32_MAX)));
    if (it == h.cells.begin()) return ReadResult{1, 0, 0, 0};
    --it;
    if (it->second.estimate) return ReadResult{2, it->first, 0, 0};
    return ReadResult{0, it->first, it->second.incarnation, it->second.value};
  }

  // apply_write_set + rcu_update_written_locations + read-set store, in that
  // order; returns whether a location was written that the previous finished
  // execution of this transaction did not write.
  bool record(int32_t txn, int32_t inc, const std::vector<ReadDesc>& reads,
              const int32_t* wlocs, const int64_t* wvals, int nwrites) {
    for (int i = 0; i < nwrites; ++i) {
      LocationHistory& h = hist_[wlocs[i]];
      std::lock_guard<std::mutex> g(h.mu);
      h.cells[txn] = Entry{inc, false, wvals[i]};
      h.count.store(static_cast<uint32_t>(h.cells.size()),
                    std::memory_order_release);
      touched_[wlocs[i]].store(true, std::memory_order_relaxed);
    }
    std::vector<int32_t> new_locs(wlocs, wlocs + nwrites);
    std::sort(new_locs.begin(), new_locs.end());
    TxnRecord& rec = records_[txn];
    bool wrote_new = false;
    {
      std::lock_guard<std::mutex> g(rec.mu);
      for (int32_t loc : rec.written) {
        if (!std::binary_search(new_locs.begin(), new_locs.end(), loc)) {
          LocationHistory& h = hist_[loc];
          std::lock_guard<std::mutex> hg(h.mu);
          h.cells.erase(txn);  // not overwritten this time
          h.count.store(static_cast<uint32_t>(h.cells.size()),
                        std::memory_order_release);
        }
      }
      for (int32_t loc : new_locs) {
        if (!std::binary_search(rec.written.begin(), rec.written.end(), loc)) {
          wrote_new = true;
          break;
        }
      }
      rec.written = std::move(new_locs);
      rec.reads = reads;
    }
    return wrote_new;
  }

  void convert_writes_to_estimates(int32_t txn) {
    std::vector<int32_t> locs;
    {
      std::lock_guard<std::mutex> g(records_[txn].mu);
      locs = records_[txn].written;
    }
    for (int32_t loc : locs) {
      LocationHistory& h = hist_[loc];
      std::lock_guard<std::mutex> g(h.mu);
      auto it = h.cells.find(txn);
      if (it == h.cells.end()) throw EngineError("estimate target cell missing");
      it->second.estimate = true;
    }
  }

  bool validate_read_set(int32_t txn, std::vector<ReadDesc>& scratch) {
    {
      std::lock_guard<std::mutex> g(records_[txn].mu);
      scratch = records_[txn].reads;
    }
    for (const ReadDesc& d : scratch) {
      ReadResult cur = read(d.loc, txn);
      if (cur.status == 2) return false;
      if (cur.status == 1) {
        if (d.txn != kNoTxn) return false;
      } else if (cur.txn != d.txn || cur.inc != d.inc) {
        return false;
      }
    }
    return true;
  }

  // Prior-read-set dependency probe: blocking index, or kNoTxn.
  int32_t prior_read_blocker(int32_t txn, std::vector<ReadDesc>& scratch) {
    {
      std::lock_guard<std::mutex> g(records_[txn].mu);
      scratch = records_[txn].reads;
    }
    for (const ReadDesc& d : scratch) {
      ReadResult cur = read(d.loc, txn);
      if (cur.status == 2) return cur.txn;
    }
    return kNoTxn;
  }

  void snapshot(std::vector<int64_t>& locs, std::vector<int64_t>& values) {
    for (int32_t loc = 0; loc < static_cast<int32_t>(hist_.size()); ++loc) {
      if (!touched_[loc].load(std::memory_order_relaxed)) continue;
      ReadResult cur = read(loc, block_size_);
      if (cur.status == 0) {
        locs.push_back(loc);
        values.push_back(cur.value);
      }
    }
  }

 private:
  struct alignas(64) TxnRecord {
    std::mutex mu;
    std::vector<int32_t> written;  // sorted
    std::vector<ReadDesc> reads;
  };

  int64_t block_size_;
  std::vector<LocationHistory> hist_;
  std::vector<std::atomic<bool>> touched_;
  std::vector<TxnRecord> records_;
};

// ---------------------------------------------------------------------------
// Scheduler
// ---------------------------------------------------------------------------

enum Status : uint8_t { kReady = 0, kExecuting = 1, kExecuted = 2, kAborting = 3 };

struct MaybeVersion {
  bool ok;
  int32_t txn;
  int32_t inc;
};

struct MaybeTask {
  int kind;  // -1 = none, 0 = execution, 1 = validation
  int32_t txn;
  int32_t inc;
};

inline void atomic_min(std::atomic<int64_t>& a, int64_t target) {
  int64_t cur = a.load();
  while (target < cur && !a.compare_exchange_weak(cur, target)) {
  }
}

class Scheduler {
 public:
  explicit Scheduler(int64_t block_size)
      : n_(block_size),
        status_(block_size ? block_size : 1),
        deps_(block_size ? block_size : 1) {}

  bool done() { return done_marker_.load(); }

  void decrease_execution_idx(int64_t target) {
    atomic_min(execution_idx_, target);
    decrease_cnt_.fetch_add(1);
  }

  void decrease_validation_idx(int64_t target) {
    atomic_min(validation_idx_, target);
    decrease_cnt_.fetch_add(1);
  }

  void check_done() {
    int64_t observed = decrease_cnt_.load();
    int64_t e = execution_idx_.load();
    int64_t v = validation_idx_.load();
    int64_t active = num_active_tasks_.load();
    if (std::min(e, v) >= n_ && active == 0 && decrease_cnt_.load() == observed)
      done_marker_.store(true);
  }

  MaybeVersion try_incarnate(int64_t txn_idx) {
    if (txn_idx < n_) {
      StatusEntry& st = status_[txn_idx];
      std::lock_guard<std::mutex> g(st.mu);
      if (st.state == kReady) {
        st.state = kExecuting;
        return MaybeVersion{true, static_cast<int32_t>(txn_idx), st.incarnation};
      }
    }
    num_active_tasks_.fetch_sub(1);
    return MaybeVersion{false, 0, 0};
  }

  MaybeVersion next_version_to_execute() {
    if (execution_idx_.load() >= n_) {
      check_done();
      return MaybeVersion{false, 0, 0};
    }
    num_active_tasks_.fetch_add(1);
    int64_t idx = execution_idx_.fetch_add(1);
    return try_incarnate(idx);
  }

  MaybeVersion next_version_to_validate() {
    if (validation_idx_.load() >= n_) {
      check_done();
      return MaybeVersion{false, 0, 0};
    }
    num_active_tasks_.fetch_add(1);
    int64_t idx = validation_idx_.fetch_add(1);
    if (idx < n_) {
      StatusEntry& st = status_[idx];
      int32_t inc;
      uint8_t state;
      {
        std::lock_guard<std::mutex> g(st.mu);
        inc = st.incarnation;
        state = st.state;
      }
      if (state == kExecuted)
        return MaybeVersion{true, static_cast<int32_t>(idx), inc};
    }
    num_active_tasks_.fetch_sub(1);
    return MaybeVersion{false, 0, 0};
  }

  MaybeTask next_task() {
    if (validation_idx_.load() < execution_idx_.load()) {
      MaybeVersion v = next_version_to_validate();
      if (v.ok) return MaybeTask{1, v.txn, v.inc};
    } else {
      MaybeVersion v = next_version_to_execute();
      if (v.ok) return MaybeTask{0, v.txn, v.inc};
    }
    return MaybeTask{-1, 0, 0};
  }

  bool add_dependency(int32_t txn_idx, int32_t blocking_txn_idx) {
    DepsEntry& dep = deps_[blocking_txn_idx];
    {
      std::lock_guard<std::mutex> dg(dep.mu);
      {
        StatusEntry& st = status_[blocking_txn_idx];
        std::lock_guard<std::mutex> g(st.mu);
        if (st.state == kExecuted) return false;  // resolved before locking
      }
      {
        StatusEntry& st = status_[txn_idx];
        std::lock_guard<std::mutex> g(st.mu);
        if (st.state != kExecuting) throw EngineError("add_dependency: not EXECUTING");
        st.state = kAborting;
      }
      dep.indices.push_back(txn_idx);
    }
    num_active_tasks_.fetch_sub(1);
    return true;
  }

  void set_ready_status(int32_t txn_idx) {
    StatusEntry& st = status_[txn_idx];
    std::lock_guard<std::mutex> g(st.mu);
    if (st.state != kAborting) throw EngineError("set_ready_status: not ABORTING");
    st.incarnation += 1;
    st.state = kReady;
  }

  void resume_dependencies(const std::vector<int32_t>& dependents) {
    for (int32_t idx : dependents) set_ready_status(idx);
    if (!dependents.empty()) {
      int32_t min_idx = *std::min_element(dependents.begin(), dependents.end());
      decrease_execution_idx(min_idx);
    }
  }

  MaybeTask finish_execution(int32_t txn_idx, int32_t incarnation,
                             bool wrote_new_location) {
    {
      StatusEntry& st = status_[txn_idx];
      std::lock_guard<std::mutex> g(st.mu);
      if (st.state != kExecuting || st.incarnation != incarnation)
        throw EngineError("finish_execution: not EXECUTING at this incarnation");
      st.state = kExecuted;
    }
    std::vector<int32_t> dependents;
    {
      DepsEntry& dep = deps_[txn_idx];
      std::lock_guard<std::mutex> g(dep.mu);
      dependents.swap(dep.indices);
    }
    resume_dependencies(dependents);
    if (validation_idx_.load() > txn_idx) {
      if (wrote_new_location) {
        decrease_validation_idx(txn_idx);
      } else {
        return MaybeTask{1, txn_idx, incarnation};
      }
    }
    num_active_tasks_.fetch_sub(1);
    return MaybeTask{-1, 0, 0};
  }

  bool try_validation_abort(int32_t txn_idx, int32_t incarnation) {
    StatusEntry& st = status_[txn_idx];
    std::lock_guard<std::mutex> g(st.mu);
    if (st.incarnation == incarnation && st.state == kExecuted) {
      st.state = kAborting;
      return true;
    }
    return false;
  }

  MaybeTask finish_validation(int32_t txn_idx, bool aborted) {
    if (aborted) {
      set_ready_status(txn_idx);
      decrease_validation_idx(static_cast<int64_t>(txn_idx) + 1);
      if (execution_idx_.load() > txn_idx) {
        MaybeVersion v = try_incarnate(txn_idx);
        if (v.ok) return MaybeTask{0, v.txn, v.inc};
        return MaybeTask{-1, 0, 0};  // try_incarnate already gave up the count
      }
    }
    num_active_tasks_.fetch_sub(1);
    return MaybeTask{-1, 0, 0};
  }

  int64_t num_active() { return num_active_tasks_.load(); }

  void post_join_check(int64_t* incarnation_sum) {
    if (!done_marker_.load()) throw EngineError("joined without done marker");
    if (num_active_tasks_.load() != 0) throw EngineError("active tasks after join");
    int64_t total = 0;
    for (int64_t j = 0; j < n_; ++j) {
      StatusEntry& st = status_[j];
      std::lock_guard<std::mutex> g(st.mu);
      if (st.state != kExecuted) throw EngineError("txn not EXECUTED after join");
      total += st.incarnation;
    }
    *incarnation_sum = total;
  }

 private:
  struct alignas(64) StatusEntry {
    std::mutex mu;
    int32_t incarnation = 0;
    uint8_t state = kReady;
  };
  struct alignas(64) DepsEntry {
    std::mutex mu;
    std::vector<int32_t> indices;
  };

  int64_t n_;
  alignas(64) std::atomic<int64_t> execution_idx_{0};
  alignas(64) std::atomic<int64_t> validation_idx_{0};
  alignas(64) std::atomic<int64_t> decrease_cnt_{0};
  alignas(64) std::atomic<int64_t> num_active_tasks_{0};
  alignas(64) std::atomic<bool> done_marker_{false};
  std::vector<StatusEntry> status_;
  std::vector<DepsEntry> deps_;
};

// ---------------------------------------------------------------------------
// p2p transaction logic (compiled twin of the Python workload)
// ---------------------------------------------------------------------------

struct P2PParams {
  int32_t num_accounts;
  int aux_reads;
  bool write_marker;
  int64_t initial_balance;
  int64_t spin_ns;
};

// Pre-block storage: balances and the shared pool exist, nothing else does.
inline bool storage_lookup(const P2PParams& p, int32_t loc, int64_t* value) {
  if (loc < 3 * p.num_accounts) {
    if (loc % 3 == 0) {
      *value = p.initial_balance;
      return true;
    }
    return false;
  }
  *value = static_cast<int64_t>(loc - 3 * p.num_accounts) * 7919 + 1;
  return true;
}

struct WriteBuf {
  static constexpr int kMax = 5;
  int32_t loc[kMax];
  int64_t val[kMax];
  int n = 0;

  void clear() { n = 0; }
  void put(int32_t l, int64_t v) {
    for (int i = 0; i < n; ++i) {
      if (loc[i] == l) {
        val[i] = v;  // last write per location wins
        return;
      }
    }
    loc[n] = l;
    val[n] = v;
    ++n;
  }
  bool get(int32_t l, int64_t* out) const {
    for (int i = 0; i < n; ++i) {
      if (loc[i] == l) {
        *out = val[i];
        return true;
      }
    }
    return false;
  }
};

struct RunContext {
  const int32_t* senders;
  const int32_t* receivers;
  const int64_t* amounts;
  int64_t n;
  P2PParams params;
  MVMemory* mv;
  Scheduler* sched;
  std::atomic<bool> failed{false};
  std::mutex fail_mu;
  std::string fail_msg;

  void fail(const std::string& msg) {
    std::lock_guard<std::mutex> g(fail_mu);
    if (!failed.load()) {
      fail_msg = msg;
      failed.store(true);
    }
  }
};

struct WorkerScratch {
  std::vector<ReadDesc> reads;
  std::vector<ReadDesc> validate;
  WriteBuf writes;
};

// Per-transaction compute is sliced across the reads (one slice each, the
// remainder at the end), so an attempt that dies at an ESTIMATE read burned
// only the corresponding fraction of the budget.
inline int64_t compute_slice(const P2PParams& p) {
  return p.spin_ns / (p.aux_reads + 4 + 1);
}

// Returns 0 on success (reads/writes filled) or 2 on read error (*blocking set).
inline int vm_execute_p2p(RunContext& ctx, int32_t txn_idx, WorkerScratch& s,
                          int32_t* blocking) {
  s.reads.clear();
  s.writes.clear();
  bool hit_error = false;
  const int64_t slice = compute_slice(ctx.params);
  int64_t spent = 0;
  auto read_loc = [&](int32_t loc) -> int64_t {
    spin_for(slice);
    spent += slice;
    int64_t v;
    if (s.writes.get(loc, &v)) return v;  // own pending write; not recorded
    ReadResult r = ctx.mv->read(loc, txn_idx);
    if (r.status == 0) {
      s.reads.push_back(ReadDesc{loc, r.txn, r.inc});
      return r.value;
    }
    if (r.status == 1) {
      s.reads.push_back(ReadDesc{loc, kNoTxn, 0});
      int64_t sv;
      return storage_lookup(ctx.params, loc, &sv) ? sv : 0;
    }
    *blocking = r.txn;
    hit_error = true;
    return 0;
  };

  uint64_t sender = static_cast<uint64_t>(ctx.senders[txn_idx]);
  uint64_t receiver = static_cast<uint64_t>(ctx.receivers[txn_idx]);
  for (int i = 0; i < ctx.params.aux_reads; ++i) {
    read_loc(aux_loc(ctx.params.num_accounts, aux_slot(sender, receiver, i)));
    if (hit_error) return 2;
  }
  int64_t sender_bal = read_loc(balance_loc(ctx.senders[txn_idx]));
  if (hit_error) return 2;
  int64_t sender_seq = read_loc(seqnum_loc(ctx.senders[txn_idx]));
  if (hit_error) return 2;
  int64_t receiver_bal = read_loc(balance_loc(ctx.receivers[txn_idx]));
  if (hit_error) return 2;
  int64_t receiver_seq = read_loc(seqnum_loc(ctx.receivers[txn_idx]));
  if (hit_error) return 2;
  spin_for(ctx.params.spin_ns - spent);  // remainder of the compute budget

  int64_t amount = std::min(ctx.amounts[txn_idx], sender_bal);
  s.writes.put(balance_loc(ctx.senders[txn_idx]), sender_bal - amount);
  s.writes.put(seqnum_loc(ctx.senders[txn_idx]), sender_seq + 1);
  s.writes.put(balance_loc(ctx.receivers[txn_idx]), receiver_bal + amount);
  s.writes.put(seqnum_loc(ctx.receivers[txn_idx]), receiver_seq);
  if (ctx.params.write_marker)
    s.writes.put(marker_loc(ctx.senders[txn_idx]), sender_seq + 1);
  return 0;
}

inline MaybeTask try_execute(RunContext& ctx, WorkerScratch& s, MaybeTask task) {
  int32_t txn_idx = task.txn;
  int32_t incarnation = task.inc;
  while (true) {
    int32_t blocker = ctx.mv->prior_read_blocker(txn_idx, s.validate);
    if (blocker != kNoTxn) {
      if (ctx.sched->add_dependency(txn_idx, blocker)) return MaybeTask{-1, 0, 0};
      continue;  // resolved in the meantime; re-check
    }
    int32_t blocking = kNoTxn;
    int status = vm_execute_p2p(ctx, txn_idx, s, &blocking);
    if (status == 2) {
      if (ctx.sched->add_dependency(txn_idx, blocking)) return MaybeTask{-1, 0, 0};
      continue;  // resolved in the meantime; re-execute
    }
    bool wrote_new = ctx.mv->record(txn_idx, incarnation, s.reads,
                                    s.writes.loc, s.writes.val, s.writes.n);
    return ctx.sched->finish_execution(txn_idx, incarnation, wrote_new);
  }
}

inline MaybeTask needs_reexecution(RunContext& ctx, WorkerScratch& s, MaybeTask task) {
  bool valid = ctx.mv->validate_read_set(task.txn, s.validate);
  bool aborted = !valid && ctx.sched->try_validation_abort(task.txn, task.inc);
  if (aborted) ctx.mv->convert_writes_to_estimates(task.txn);
  return ctx.sched->finish_validation(task.txn, aborted);
}

inline void worker_loop(RunContext& ctx) {
  WorkerScratch scratch;
  int idle_streak = 0;
  try {
    MaybeTask task{-1, 0, 0};
    while (!ctx.sched->done()) {
      if (ctx.failed.load()) return;
      if (task.kind == 0) task = try_execute(ctx, scratch, task);
      if (task.kind == 1) task = needs_reexecution(ctx, scratch, task);
      if (task.kind == -1) {
        task = ctx.sched->next_task();
        if (task.kind == -1) {
          // Exponential idle backoff: keeps starved threads off the shared
          // counters and status locks without stalling pickup of new work.
          ++idle_streak;
          if (idle_streak > 16) {
            std::this_thread::sleep_for(std::chrono::microseconds(50));
          } else if (idle_streak > 4) {
            std::this_thread::yield();
          }
        } else {
          idle_streak = 0;
        }
      }
    }
  } catch (const std::exception& e) {
    ctx.fail(e.what());
  } catch (...) {
    ctx.fail("unknown native worker failure");
  }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

struct RunResult {
  std::vector<int64_t> locs;
  std::vector<int64_t> values;
  int64_t aborts;
};

inline RunResult run_parallel_p2p(const int32_t* senders, const int32_t* receivers,
                                  const int64_t* amounts, int64_t block_size,
                                  int32_t num_accounts, int aux_reads,
                                  bool write_marker, int64_t initial_balance,
                                  int64_t spin_ns, int num_threads) {
  MVMemory mv(block_size, 3 * num_accounts + kAuxPool);
  Scheduler sched(block_size);
  RunContext ctx;
  ctx.senders = senders;
  ctx.receivers = receivers;
  ctx.amounts = amounts;
  ctx.n = block_size;
  ctx.params = P2PParams{num_accounts, aux_reads, write_marker, initial_balance,
                         spin_ns};
  ctx.mv = &mv;
  ctx.sched = &sched;

  std::vector<std::thread> threads;
  threads.reserve(num_threads);
  for (int t = 0; t < num_threads; ++t)
    threads.emplace_back([&ctx] { worker_loop(ctx); });
  for (auto& t : threads) t.join();

  if (ctx.failed.load()) throw EngineError(ctx.fail_msg);

  RunResult out;
  sched.post_join_check(&out.aborts);
  mv.snapshot(out.locs, out.values);
  return out;
}

inline RunResult run_sequential_p2p(const int32_t* senders, const int32_t* receivers,
                                    const int64_t* amounts, int64_t block_size,
                                    int32_t num_accounts, int aux_reads,
                                    bool write_marker, int64_t initial_balance,
                                    int64_t spin_ns) {
  P2PParams params{num_accounts, aux_reads, write_marker, initial_balance, spin_ns};
  int32_t num_locations = 3 * num_accounts + kAuxPool;
  std::vector<int64_t> overlay(num_locations, 0);
  std::vector<bool> present(num_locations, false);

  const int64_t slice = compute_slice(params);
  for (int64_t j = 0; j < block_size; ++j) {
    int64_t spent = 0;
    WriteBuf writes;
    auto read_loc = [&](int32_t loc) -> int64_t {
      spin_for(slice);
      spent += slice;
      int64_t v;
      if (writes.get(loc, &v)) return v;
      if (present[loc]) return overlay[loc];
      return storage_lookup(params, loc, &v) ? v : 0;
    };
    uint64_t sender = static_cast<uint64_t>(senders[j]);
    uint64_t receiver = static_cast<uint64_t>(receivers[j]);
    for (int i = 0; i < aux_reads; ++i)
      read_loc(aux_loc(num_accounts, aux_slot(sender, receiver, i)));
    int64_t sender_bal = read_loc(balance_loc(senders[j]));
    int64_t sender_seq = read_loc(seqnum_loc(senders[j]));
    int64_t receiver_bal = read_loc(balance_loc(receivers[j]));
    int64_t receiver_seq = read_loc(seqnum_loc(receivers[j]));
    spin_for(spin_ns - spent);  // remainder of the compute budget
    int64_t amount = std::min(amounts[j], sender_bal);
    writes.put(balance_loc(senders[j]), sender_bal - amount);
    writes.put(seqnum_loc(senders[j]), sender_seq + 1);
    writes.put(balance_loc(receivers[j]), receiver_bal + amount);
    writes.put(seqnum_loc(receivers[j]), receiver_seq);
    if (write_marker) writes.put(marker_loc(senders[j]), sender_seq + 1);
    for (int i = 0; i < writes.n; ++i) {
      overlay[writes.loc[i]] = writes.val[i];
      present[writes.loc[i]] = true;
    }
  }

  RunResult out;
  out.aborts = 0;
  for (int32_t loc = 0; loc < num_locations; ++loc) {
    if (present[loc]) {
      out.locs.push_back(loc);
      out.values.push_back(overlay[loc]);
    }
  }
  return out;
}

}  // namespace pe
