#pragma once

#include <stdexcept>
#include <string>

namespace gsurf {

// Loaders never crash on bad bytes: every failure surfaces as an IoError
// carrying a category and the offending path.
enum class IoErrorKind {
  missing_file,
  malformed_json,
  missing_field,
  dimension_mismatch,
  bad_image,
  bad_ply,
  bad_magic,
  version_mismatch,
  checksum_mismatch,
  truncated,
  empty_result,
  write_failure,
};

class IoError : public std::runtime_error {
 public:
  IoError(IoErrorKind kind, std::string path, const std::string& detail)
      : std::runtime_error(detail + " [" + path + "]"),
        kind_(kind),
        path_(std::move(path)) {}

  IoErrorKind kind() const { return kind_; }
  const std::string& path() const { return path_; }

 private:
  IoErrorKind kind_;
  std::string path_;
};

}  // namespace gsurf
