#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

namespace rqa {

// Error categories; the CLI maps them onto exit codes
// (0 success, 1 usage, 2 data, 3 protocol/config).
enum class ErrorKind { usage = 1, data = 2, config = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Malformed input file (bad syntax, wrong field type, ...).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::data, what) {}
};

// Structurally valid input that violates an invariant (duplicate id, ...).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::data, what) {}
};

// Input too degenerate for the requested computation (zero vector, empty part).
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what)
      : Error(ErrorKind::data, what) {}
};

// Metric undefined on the given data (e.g. AUC without both classes).
class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what) : Error(ErrorKind::data, what) {}
};

// Evaluation protocol cannot proceed (too few labeled samples, ...).
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what)
      : Error(ErrorKind::config, what) {}
};

// Bad configuration (unknown loss name, no training data for the loss, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::config, what) {}
};

// Writes `contents` to `path` via a temp file in the same directory followed
// by a rename, so readers never observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorKind::data, "cannot open for writing: " + tmp.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorKind::data, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::data, "rename failed for: " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::data, "cannot open: " + path.string());
  }
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  return contents;
}

}  // namespace rqa
