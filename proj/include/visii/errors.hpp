// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace visii {

enum class ErrorCode {
    invalid_argument,
    dimension_mismatch,
    shape_mismatch,
    out_of_range,
    overflow,
    degenerate,
    numerical,
    backend,
    captioner_unavailable,
    io,
    format,
    version,
    checksum,
    truncated,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; the code says what went wrong,
/// the message says where.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << std::forward<Args>(args));
    return os.str();
}

}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(ErrorCode code, Args&&... args) {
    throw Error(code, detail::concat(std::forward<Args>(args)...));
}

}  // namespace visii

#define VISII_CHECK(cond, code, ...)                                          \
    do {                                                                      \
        if (!(cond)) {                                                        \
            ::visii::fail(code, __VA_ARGS__);                                 \
        }                                                                     \
    } while (0)
