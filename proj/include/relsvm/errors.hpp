#pragma once

#include <stdexcept>
#include <string>

namespace relsvm {

/// Error categories. The numeric values are the CLI exit codes and the
/// C API status codes, so they must not be renumbered.
enum class Errc : int {
  ok = 0,
  config = 1,
  cyclic_query = 2,
  data = 3,
  output_cap_exceeded = 4,
  verification_failed = 5,
  partial_sum_blowup = 6,
  internal = 7,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Errc::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Errc::data, what) {}
};

/// The join has no rows, so averages over the design matrix are undefined.
class EmptyInstance : public DataError {
 public:
  EmptyInstance() : DataError("empty instance: the join has no rows") {}
};

class CyclicQuery : public Error {
 public:
  explicit CyclicQuery(const std::string& what) : Error(Errc::cyclic_query, what) {}
};

/// The join output is larger than the materialization cap. This marks an
/// instance as infeasible for the oracle path, not as a failure of the
/// relational algorithms.
class OutputCapExceeded : public Error {
 public:
  OutputCapExceeded(const std::string& rows, unsigned long long cap)
      : Error(Errc::output_cap_exceeded,
              "join output of " + rows + " rows exceeds the materialization cap of " +
                  std::to_string(cap)),
        rows_(rows),
        cap_(cap) {}
  const std::string& rows() const noexcept { return rows_; }
  unsigned long long cap() const noexcept { return cap_; }

 private:
  std::string rows_;
  unsigned long long cap_;
};

/// Exact counting kept more distinct partial sums than allowed; retry in
/// sketch mode.
class PartialSumBlowup : public Error {
 public:
  PartialSumBlowup(std::size_t size, std::size_t cap)
      : Error(Errc::partial_sum_blowup,
              "exact counting produced " + std::to_string(size) +
                  " distinct partial sums (cap " + std::to_string(cap) +
                  "); use sketch mode"),
        size_(size),
        cap_(cap) {}
  std::size_t size() const noexcept { return size_; }
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t size_;
  std::size_t cap_;
};

}  // namespace relsvm
