#include "attnxp/error.hpp"

namespace attnxp {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Io: return "io";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Schema: return "schema";
        case ErrorKind::EmptyLog: return "empty-log";
        case ErrorKind::Split: return "split";
        case ErrorKind::Spec: return "spec";
        case ErrorKind::Length: return "length";
        case ErrorKind::Index: return "index";
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Degenerate: return "degenerate-input";
        case ErrorKind::TrainingData: return "training-data";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::Normalization: return "normalization";
    }
    return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Usage: return 2;
        case ErrorKind::Io: return 3;
        case ErrorKind::Parse:
        case ErrorKind::Schema:
        case ErrorKind::EmptyLog:
        case ErrorKind::Spec: return 4;
        case ErrorKind::Divergence:
        case ErrorKind::Normalization:
        case ErrorKind::Degenerate: return 5;
        default: return 1;
    }
}

}  // namespace attnxp
