#pragma once

#include <stdexcept>
#include <string>

namespace aoiseg {

// Every failure surfaced by the library carries one of these codes so callers
// can branch on the variant without parsing message text.
enum class Errc {
  dimension_mismatch,
  invalid_statistics,
  degenerate_key,
  degenerate_query,
  empty_bank,
  insufficient_entries,
  not_indexed,
  invalid_temperature,
  empty_neighborhood,
  undefined_metric,
  undefined_statistics,
  insufficient_data,
  invalid_spec,
  shift_out_of_range,
  format_error,
  checksum_mismatch,
  truncated_file,
  non_finite_value,
  inconsistent_dimension,
  io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

}  // namespace aoiseg
