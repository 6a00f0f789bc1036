#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

namespace fjc::runtime {

class TaskPool;

/// Join counter for one group of detached tasks. A task publishes its writes
/// before decrementing; `TaskPool::sync` acquires them.
class SyncRegion {
 public:
  SyncRegion() = default;
  SyncRegion(const SyncRegion&) = delete;
  SyncRegion& operator=(const SyncRegion&) = delete;

  std::int64_t pending() const { return pending_.load(std::memory_order_acquire); }

 private:
  friend class TaskPool;
  void fail(std::exception_ptr e);

  std::atomic<std::int64_t> pending_{0};
  std::atomic<bool> sleeping_{false};
  std::atomic<bool> failed_{false};
  std::mutex error_mu_;
  std::exception_ptr error_;
};

/// A unit of work. `fn(ctx, a, b)` runs once; `region` is decremented after.
struct Task {
  void (*fn)(void* ctx, std::int64_t a, std::int64_t b) = nullptr;
  void* ctx = nullptr;
  std::int64_t a = 0;
  std::int64_t b = 0;
  SyncRegion* region = nullptr;
};

struct WorkerCounters {
  std::int64_t spawns = 0;
  std::int64_t steals = 0;
  std::int64_t roots = 0;
  std::vector<std::int64_t> tasks_executed;  // per worker

  std::int64_t total_executed() const;
};

/// Distinct (package, core) pairs in /proc/cpuinfo; falls back to the
/// hardware thread count, and never returns less than 1.
int physical_core_count();

struct PoolOptions {
  bool pin = false;  // best-effort affinity, worker w -> core w mod cores
};

/// Work-stealing pool of P workers. The thread calling `run` acts as worker 0
/// for the duration of the call; workers 1..P-1 are owned threads that sleep
/// when there is nothing to steal.
class TaskPool {
 public:
  /// Throws ResourceExhausted if threads cannot be created or P < 1.
  TaskPool(int workers, std::uint64_t seed, PoolOptions options = {});
  ~TaskPool();
  TaskPool(const TaskPool&) = delete;
  TaskPool& operator=(const TaskPool&) = delete;

  int workers() const { return static_cast<int>(workers_.size()); }
  std::uint64_t seed() const { return seed_; }
  bool pinned() const { return pinned_; }

  /// Executes `root` as worker 0 and returns once it completes. The root must
  /// sync every region it spawns into. Not reentrant.
  void run(const std::function<void()>& root);

  /// Enqueues a task on the calling worker's deque.
  void spawn(SyncRegion& region, Task task);
  /// Convenience wrapper boxing an arbitrary callable.
  template <class F>
  void spawn(SyncRegion& region, F&& fn);
  /// Blocks until every task spawned into `region` has finished, executing
  /// other tasks meanwhile. Rethrows the first exception a task raised.
  void sync(SyncRegion& region);

  /// Calls `body(lo', hi')` on disjoint subranges covering [lo, hi), each at
  /// most `grain` long, splitting by recursive halving. Outside `run` the call
  /// is wrapped in a root task.
  void parallel_for(std::int64_t lo, std::int64_t hi, std::int64_t grain,
                    const std::function<void(std::int64_t, std::int64_t)>& body);

  WorkerCounters counters() const;
  void reset_counters();

  /// First `n` victims worker `w` would pick with a fresh generator.
  std::vector<int> victim_sequence(int w, std::size_t n) const;

  /// Index of the calling worker, or -1 outside the pool.
  int current_worker() const;

 private:
  struct alignas(64) Worker {
    std::mutex mu;
    std::deque<Task> tasks;
    std::uint64_t rng = 0;
    std::int64_t executed = 0;
    std::int64_t spawns = 0;
    std::int64_t steals = 0;
  };

  void worker_loop(int w);
  bool pop_local(int w, Task& out);
  bool steal(int w, Task& out);
  bool find_work(int w, Task& out);
  void execute(int w, const Task& t);
  void notify_work();
  int self() const;

  std::vector<std::unique_ptr<Worker>> workers_;
  std::vector<std::thread> threads_;
  std::uint64_t seed_;
  bool pinned_ = false;
  std::int64_t roots_ = 0;

  std::atomic<std::int64_t> queued_{0};
  std::atomic<int> sleepers_{0};
  std::atomic<bool> shutdown_{false};
  std::mutex sleep_mu_;
  std::condition_variable sleep_cv_;
};

template <class F>
void TaskPool::spawn(SyncRegion& region, F&& fn) {
  using Fn = std::decay_t<F>;
  auto* boxed = new Fn(std::forward<F>(fn));
  Task t;
  t.fn = [](void* ctx, std::int64_t, std::int64_t) {
    std::unique_ptr<Fn> owned(static_cast<Fn*>(ctx));
    (*owned)();
  };
  t.ctx = boxed;
  spawn(region, t);
}

/// Worker count from FJC_WORKERS, else the hardware concurrency.
int default_workers();
/// Number of online processors.
int hardware_cores();

}  // namespace fjc::runtime
