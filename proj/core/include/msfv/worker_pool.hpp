#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace msfv {

/// Fixed-size pool running independent index-addressed tasks. The calling
/// thread takes part in the work, so a pool of size 1 spawns no threads.
/// Tasks must write to disjoint outputs.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers = 1);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return threads_.size() + 1; }

  /// Runs task(i) for i in [0, n) and blocks until all have finished. If any
  /// task throws, the exception from the lowest index is rethrown.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task);

  /// Shared single-worker pool.
  static WorkerPool& serial();

 private:
  void worker_loop();
  void drain();

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t count_ = 0;
  std::size_t next_ = 0;
  std::size_t finished_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
  std::size_t error_index_ = 0;
  std::exception_ptr error_;
};

}  // namespace msfv
