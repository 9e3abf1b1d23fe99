// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace pimjitq {

// Raised for every contract violation in the library (bad dims, out-of-range
// addresses, malformed files, unknown names).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pimjitq
