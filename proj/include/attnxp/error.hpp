#pragma once

#include <stdexcept>
#include <string>

namespace attnxp {

enum class ErrorKind {
    Usage,
    Io,
    Parse,
    Schema,
    EmptyLog,
    Split,
    Spec,
    Length,
    Index,
    Dimension,
    Degenerate,
    TrainingData,
    Divergence,
    Normalization,
};

// Single exception type for the library; the kind selects the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

// 0 success, 2 usage, 3 I/O, 4 parse/schema, 5 numerical, 1 anything else.
int exit_code(ErrorKind kind) noexcept;

}  // namespace attnxp
