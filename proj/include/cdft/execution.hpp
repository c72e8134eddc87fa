#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace cdft {

/// Selects between the OpenMP kernel and its serial reference. Both produce
/// identical results; the serial path is what the tests compare against.
enum class Execution { serial, parallel };

/// Number of OpenMP threads available (1 when built without OpenMP).
int hardware_threads();

/// Collects the first exception thrown inside a parallel region so it can be
/// rethrown on the calling thread.
class ExceptionSlot {
 public:
  template <typename Fn>
  void run(Fn&& fn) noexcept {
    try {
      fn();
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr error_;
};

}  // namespace cdft
