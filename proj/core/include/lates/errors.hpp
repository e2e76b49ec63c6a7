#pragma once

#include <stdexcept>
#include <string>

namespace lates {

/// Invalid inputs, violated invariants, malformed files.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (open, write, rename).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Optimization or numeric routine cannot proceed (divergence, undefined statistic).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dump/bundle parsing failure with a machine-checkable reason.
class FormatError : public ValidationError {
public:
    enum class Reason { BadMagic, BadVersion, Truncated, ChecksumMismatch };

    FormatError(Reason r, const std::string& msg) : ValidationError(msg), reason_(r) {}
    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

} // namespace lates
