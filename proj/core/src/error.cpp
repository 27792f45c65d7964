#include "aoiseg/error.hpp"

namespace aoiseg {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::dimension_mismatch:
      return "dimension_mismatch";
    case Errc::invalid_statistics:
      return "invalid_statistics";
    case Errc::degenerate_key:
      return "degenerate_key";
    case Errc::degenerate_query:
      return "degenerate_query";
    case Errc::empty_bank:
      return "empty_bank";
    case Errc::insufficient_entries:
      return "insufficient_entries";
    case Errc::not_indexed:
      return "not_indexed";
    case Errc::invalid_temperature:
      return "invalid_temperature";
    case Errc::empty_neighborhood:
      return "empty_neighborhood";
    case Errc::undefined_metric:
      return "undefined_metric";
    case Errc::undefined_statistics:
      return "undefined_statistics";
    case Errc::insufficient_data:
      return "insufficient_data";
    case Errc::invalid_spec:
      return "invalid_spec";
    case Errc::shift_out_of_range:
      return "shift_out_of_range";
    case Errc::format_error:
      return "format_error";
    case Errc::checksum_mismatch:
      return "checksum_mismatch";
    case Errc::truncated_file:
      return "truncated_file";
    case Errc::non_finite_value:
      return "non_finite_value";
    case Errc::inconsistent_dimension:
      return "inconsistent_dimension";
    case Errc::io_error:
      return "io_error";
  }
  return "unknown";
}

void fail(Errc code, const std::string& what) {
  throw Error(code, std::string(errc_name(code)) + ": " + what);
}

}  // namespace aoiseg
