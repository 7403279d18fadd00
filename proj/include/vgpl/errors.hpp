#ifndef VGPL_ERRORS_HPP
#define VGPL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vgpl {

// Bad arguments or violated invariants. Maps to exit code 1 in the CLI.
struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// File and parse failures. Maps to exit code 2 in the CLI.
struct io_error : std::runtime_error {
  enum class Kind {
    open_failed,
    write_failed,
    bad_magic,
    bad_version,
    truncated,
    non_finite,
    malformed,
  };

  io_error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace vgpl

#endif
