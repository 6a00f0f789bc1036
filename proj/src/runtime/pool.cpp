#include "fjc/runtime/pool.hpp"

#include <pthread.h>
#include <sched.h>
#include <unistd.h>

#include <cstdlib>
#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <system_error>

#include "fjc/error.hpp"
#include "fjc/splitmix.hpp"

namespace fjc::runtime {

namespace {

thread_local const TaskPool* tl_pool = nullptr;
thread_local int tl_worker = -1;

constexpr int kSpinRounds = 8;

std::uint64_t worker_seed(std::uint64_t seed, int w) {
  std::uint64_t s = seed ^ (0xA0761D6478BD642Full * static_cast<std::uint64_t>(w + 1));
  return splitmix64(s);
}

int next_victim(std::uint64_t& rng, int self, int workers) {
  const int v = static_cast<int>(splitmix64(rng) % static_cast<std::uint64_t>(workers - 1));
  return v >= self ? v + 1 : v;
}

bool pin_to_core(pthread_t thread, int w) {
  const int cores = hardware_cores();
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(w % cores, &set);
  return pthread_setaffinity_np(thread, sizeof(set), &set) == 0;
}

}  // namespace

int physical_core_count() {
  std::ifstream in("/proc/cpuinfo");
  std::set<std::pair<std::string, std::string>> cores;
  std::string line, package = "0";
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, line.find_last_not_of(" \t", colon - 1) + 1);
    const std::string value = colon + 2 <= line.size() ? line.substr(colon + 2) : "";
    if (key == "physical id") package = value;
    if (key == "core id") cores.emplace(package, value);
  }
  if (!cores.empty()) return static_cast<int>(cores.size());
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

void SyncRegion::fail(std::exception_ptr e) {
  std::lock_guard lock(error_mu_);
  if (!error_) error_ = std::move(e);
  failed_.store(true, std::memory_order_release);
}

std::int64_t WorkerCounters::total_executed() const {
  std::int64_t n = 0;
  for (auto v : tasks_executed) n += v;
  return n;
}

int hardware_cores() {
  const long n = sysconf(_SC_NPROCESSORS_ONLN);
  return n > 0 ? static_cast<int>(n) : 1;
}

int default_workers() {
  if (const char* env = std::getenv("FJC_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return hardware_cores();
}

TaskPool::TaskPool(int workers, std::uint64_t seed, PoolOptions options) : seed_(seed) {
  if (workers < 1) throw Error(ErrorKind::ResourceExhausted, "pool needs at least one worker");
  for (int w = 0; w < workers; ++w) {
    auto worker = std::make_unique<Worker>();
    worker->rng = worker_seed(seed, w);
    workers_.push_back(std::move(worker));
  }
  pinned_ = options.pin;
  try {
    for (int w = 1; w < workers; ++w) {
      threads_.emplace_back([this, w] { worker_loop(w); });
      if (options.pin) pinned_ = pin_to_core(threads_.back().native_handle(), w) && pinned_;
    }
  } catch (const std::system_error& e) {
    shutdown_.store(true);
    {
      std::lock_guard lock(sleep_mu_);
      sleep_cv_.notify_all();
    }
    for (auto& t : threads_) t.join();
    throw Error(ErrorKind::ResourceExhausted, std::string("cannot start worker thread: ") + e.what());
  }
}

TaskPool::~TaskPool() {
  shutdown_.store(true);
  {
    std::lock_guard lock(sleep_mu_);
    sleep_cv_.notify_all();
  }
  for (auto& t : threads_) t.join();
}

int TaskPool::self() const { return tl_pool == this ? tl_worker : -1; }
int TaskPool::current_worker() const { return self(); }

void TaskPool::run(const std::function<void()>& root) {
  const TaskPool* saved_pool = tl_pool;
  const int saved_worker = tl_worker;
  tl_pool = this;
  tl_worker = 0;
  ++roots_;
  ++workers_[0]->executed;
  try {
    root();
  } catch (...) {
    tl_pool = saved_pool;
    tl_worker = saved_worker;
    throw;
  }
  tl_pool = saved_pool;
  tl_worker = saved_worker;
}

void TaskPool::spawn(SyncRegion& region, Task task) {
  const int w = self();
  if (w < 0) throw std::logic_error("spawn outside TaskPool::run");
  task.region = &region;
  region.pending_.fetch_add(1);
  Worker& me = *workers_[static_cast<std::size_t>(w)];
  {
    std::lock_guard lock(me.mu);
    me.tasks.push_back(task);
  }
  ++me.spawns;
  queued_.fetch_add(1);
  notify_work();
}

void TaskPool::notify_work() {
  if (sleepers_.load() > 0) {
    std::lock_guard lock(sleep_mu_);
    sleep_cv_.notify_one();
  }
}

bool TaskPool::pop_local(int w, Task& out) {
  Worker& me = *workers_[static_cast<std::size_t>(w)];
  std::lock_guard lock(me.mu);
  if (me.tasks.empty()) return false;
  out = me.tasks.back();
  me.tasks.pop_back();
  queued_.fetch_sub(1);
  return true;
}

bool TaskPool::steal(int w, Task& out) {
  const int n = workers();
  if (n < 2) return false;
  Worker& me = *workers_[static_cast<std::size_t>(w)];
  for (int attempt = 0; attempt < n - 1; ++attempt) {
    if (queued_.load(std::memory_order_relaxed) <= 0) return false;
    Worker& victim = *workers_[static_cast<std::size_t>(next_victim(me.rng, w, n))];
    std::unique_lock lock(victim.mu, std::try_to_lock);
    if (!lock.owns_lock() || victim.tasks.empty()) continue;
    out = victim.tasks.front();
    victim.tasks.pop_front();
    queued_.fetch_sub(1);
    ++me.steals;
    return true;
  }
  return false;
}

bool TaskPool::find_work(int w, Task& out) { return pop_local(w, out) || steal(w, out); }

void TaskPool::execute(int w, const Task& t) {
  SyncRegion* region = t.region;
  try {
    t.fn(t.ctx, t.a, t.b);
  } catch (...) {
    region->fail(std::current_exception());
  }
  ++workers_[static_cast<std::size_t>(w)]->executed;
  if (region->pending_.fetch_sub(1) == 1 && region->sleeping_.load()) {
    std::lock_guard lock(sleep_mu_);
    sleep_cv_.notify_all();
  }
}

void TaskPool::sync(SyncRegion& region) {
  const int w = self();
  int spins = 0;
  while (region.pending_.load() > 0) {
    if (w >= 0) {
      Task t;
      if (find_work(w, t)) {
        execute(w, t);
        spins = 0;
        continue;
      }
    }
    if (++spins < kSpinRounds) {
      std::this_thread::yield();
      continue;
    }
    std::unique_lock lock(sleep_mu_);
    region.sleeping_.store(true);
    sleepers_.fetch_add(1);
    if (region.pending_.load() > 0 && queued_.load() <= 0) sleep_cv_.wait(lock);
    sleepers_.fetch_sub(1);
    region.sleeping_.store(false);
    spins = 0;
  }
  if (region.failed_.load(std::memory_order_acquire)) {
    std::exception_ptr e;
    {
      std::lock_guard lock(region.error_mu_);
      e = region.error_;
      region.error_ = nullptr;
    }
    region.failed_.store(false);
    if (e) std::rethrow_exception(e);
  }
}

void TaskPool::worker_loop(int w) {
  tl_pool = this;
  tl_worker = w;
  int spins = 0;
  while (!shutdown_.load()) {
    Task t;
    if (find_work(w, t)) {
      execute(w, t);
      spins = 0;
      continue;
    }
    if (++spins < kSpinRounds) {
      std::this_thread::yield();
      continue;
    }
    std::unique_lock lock(sleep_mu_);
    sleepers_.fetch_add(1);
    if (!shutdown_.load() && queued_.load() <= 0) sleep_cv_.wait(lock);
    sleepers_.fetch_sub(1);
    spins = 0;
  }
}

namespace {

struct ForLoop {
  TaskPool* pool;
  const std::function<void(std::int64_t, std::int64_t)>* body;
  std::int64_t grain;
};

void for_range(ForLoop& loop, std::int64_t lo, std::int64_t hi);

void for_task(void* ctx, std::int64_t lo, std::int64_t hi) { for_range(*static_cast<ForLoop*>(ctx), lo, hi); }

void for_range(ForLoop& loop, std::int64_t lo, std::int64_t hi) {
  SyncRegion region;
  try {
    while (hi - lo > loop.grain) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      Task t;
      t.fn = for_task;
      t.ctx = &loop;
      t.a = mid;
      t.b = hi;
      loop.pool->spawn(region, t);
      hi = mid;
    }
    (*loop.body)(lo, hi);
  } catch (...) {
    try {
      loop.pool->sync(region);
    } catch (...) {
    }
    throw;
  }
  loop.pool->sync(region);
}

}  // namespace

void TaskPool::parallel_for(std::int64_t lo, std::int64_t hi, std::int64_t grain,
                            const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (hi <= lo) return;
  ForLoop loop{this, &body, grain < 1 ? 1 : grain};
  if (self() < 0) {
    run([&] { for_range(loop, lo, hi); });
  } else {
    for_range(loop, lo, hi);
  }
}

WorkerCounters TaskPool::counters() const {
  WorkerCounters c;
  c.roots = roots_;
  for (const auto& w : workers_) {
    c.spawns += w->spawns;
    c.steals += w->steals;
    c.tasks_executed.push_back(w->executed);
  }
  return c;
}

void TaskPool::reset_counters() {
  roots_ = 0;
  for (auto& w : workers_) {
    w->spawns = 0;
    w->steals = 0;
    w->executed = 0;
  }
}

std::vector<int> TaskPool::victim_sequence(int w, std::size_t n) const {
  std::vector<int> out;
  if (workers() < 2) return out;
  std::uint64_t rng = worker_seed(seed_, w);
  for (std::size_t i = 0; i < n; ++i) out.push_back(next_victim(rng, w, workers()));
  return out;
}

}  // namespace fjc::runtime
