#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

namespace ous {

// Error taxonomy shared by all modules. The CLI maps kinds to exit codes.
enum class ErrorKind {
  Shape,     // operand shapes incompatible
  Domain,    // value outside its documented range
  Contract,  // API precondition violated
  Format,      // malformed file content
  Io,          // filesystem failure
  Numeric,     // non-finite value or numeric guard tripped
  Config,      // bad configuration document
  Checkpoint   // checkpoint archive malformed or shape census mismatch
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void check(bool ok, ErrorKind kind, const std::string& msg) {
  if (!ok) fail(kind, msg);
}

// Worker cap for parallel sections (ablation cells, eval batches).
// OUS_THREADS overrides; defaults to the machine's hardware parallelism.
inline unsigned worker_threads() {
  if (const char* env = std::getenv("OUS_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

}  // namespace ous
